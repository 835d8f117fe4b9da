import json
import os

import pytest

from tsvnet import cli
from tsvnet.core import build_layout


@pytest.fixture
def layout_file(tmp_path):
    lay = build_layout(3, 3, signal_cells=(0, 2), ground_cells=(4,))
    path = tmp_path / "layout.json"
    path.write_text(json.dumps(lay.to_dict()))
    return str(path)


def run(argv):
    return cli.main(argv)


def test_schema_printout(capsys):
    assert run(["--print-config-schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert schema["title"].startswith("tsvnet")


def test_no_command_shows_help(capsys):
    assert run([]) == cli.EXIT_VALIDATION


class TestSweep:
    def test_end_to_end(self, layout_file, tmp_path):
        out = str(tmp_path / "out")
        code = run([
            "sweep", "--layout", layout_file, "--out", out,
            "--f-start", "1e9", "--f-stop", "50e9", "--f-points", "8",
        ])
        assert code == 0
        assert os.path.exists(os.path.join(out, "sweep.s4p"))
        assert os.path.exists(os.path.join(out, "sweep.png"))
        assert os.path.exists(os.path.join(out, "resolved_config.json"))
        metrics = json.load(open(os.path.join(out, "metrics.json")))
        assert metrics["invariants"]["max_passivity_margin"] <= 1e-9
        assert metrics["invariants"]["max_reciprocity_rfe"] <= 1e-10
        assert "crosstalk" in metrics

    def test_geometry_override_recorded(self, layout_file, tmp_path):
        out = str(tmp_path / "out")
        code = run([
            "sweep", "--layout", layout_file, "--out", out,
            "--f-points", "2", "--r-cond", "4.0", "--no-figures",
        ])
        assert code == 0
        cfg = json.load(open(os.path.join(out, "resolved_config.json")))
        assert cfg["geometry"]["r_cond"] == 4.0

    def test_missing_layout_file(self, tmp_path):
        code = run([
            "sweep", "--layout", str(tmp_path / "nope.json"),
            "--out", str(tmp_path / "o"),
        ])
        assert code == cli.EXIT_VALIDATION

    def test_malformed_layout(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = run(["sweep", "--layout", str(bad), "--out", str(tmp_path / "o")])
        assert code == cli.EXIT_VALIDATION

    def test_unsolvable_layout(self, tmp_path):
        lay = build_layout(2, 2, signal_cells=(0,), ground_cells=())
        path = tmp_path / "lay.json"
        path.write_text(json.dumps(lay.to_dict()))
        code = run(["sweep", "--layout", str(path), "--out", str(tmp_path / "o")])
        assert code == cli.EXIT_VALIDATION

    def test_invalid_geometry(self, layout_file, tmp_path):
        code = run([
            "sweep", "--layout", layout_file, "--out", str(tmp_path / "o"),
            "--r-cond", "40.0",
        ])
        assert code == cli.EXIT_VALIDATION

    def test_rlcg_debug_dump(self, layout_file, tmp_path):
        out = str(tmp_path / "out")
        code = run([
            "sweep", "--layout", layout_file, "--out", out,
            "--f-points", "2", "--debug-rlcg", "--no-figures",
        ])
        assert code == 0
        dump = json.load(open(os.path.join(out, "rlcg_debug.json")))
        assert "L_eff_H_per_m" in dump


class TestThermal:
    def test_end_to_end(self, layout_file, tmp_path):
        out = str(tmp_path / "out")
        code = run([
            "thermal", "--layout", layout_file, "--out", out,
            "--scenario", "forced-top", "--no-figures",
        ])
        assert code == 0
        summary = json.load(open(os.path.join(out, "summary.json")))
        assert summary["iterations"] <= 20
        assert summary["max_temperature_k"] > 300.0
        csv_path = os.path.join(out, "temperature.csv")
        header = open(csv_path).readline().strip()
        assert header == "x_m,y_m,z_m,t_k"

    def test_unknown_scenario_rejected(self, layout_file, tmp_path):
        parser = cli.build_parser()
        with pytest.raises(SystemExit):
            parser.parse_args([
                "thermal", "--layout", layout_file,
                "--out", str(tmp_path / "o"), "--scenario", "cryostat",
            ])


class TestOptimize:
    def test_layout_mode(self, tmp_path):
        out = str(tmp_path / "out")
        code = run([
            "optimize", "--out", out, "--rows", "2", "--cols", "2",
            "--s-min", "1", "--s-max", "2", "--no-symmetry", "--no-figures",
        ])
        assert code == 0
        csv = open(os.path.join(out, "results.csv")).read().strip().split("\n")
        assert len(csv) == 1 + 10  # header + C(4,1) + C(4,2)
        front = json.load(open(os.path.join(out, "front.json")))
        assert front
        assert os.path.exists(os.path.join(out, "checkpoint.json"))

    def test_geometry_mode(self, layout_file, tmp_path):
        out = str(tmp_path / "out")
        code = run([
            "optimize", "--mode", "geometry", "--layout", layout_file,
            "--out", out, "--samples", "6", "--no-figures",
        ])
        assert code == 0
        assert os.path.exists(os.path.join(out, "results.csv"))

    def test_geometry_mode_needs_layout(self, tmp_path):
        code = run([
            "optimize", "--mode", "geometry", "--out", str(tmp_path / "o"),
            "--samples", "4",
        ])
        assert code == cli.EXIT_VALIDATION


class TestDataset:
    def test_generation_and_split(self, tmp_path):
        out = str(tmp_path / "out")
        code = run([
            "dataset", "--out", out, "--count", "5", "--seed", "7",
            "--size-min", "3", "--size-max", "3", "--split", "0.8",
        ])
        assert code == 0
        manifest = json.load(open(os.path.join(out, "dataset_manifest.json")))
        assert sum(manifest.values()) == 5
        train = [p for p in manifest if p.endswith(".train")][0]
        rec = json.loads(open(train).readline())
        assert {"layout", "geometry", "frequency_hz", "labels"} <= set(rec)

    def test_determinism(self, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        for out in (a, b):
            assert run([
                "dataset", "--out", out, "--count", "3", "--seed", "11",
                "--size-min", "3", "--size-max", "3",
            ]) == 0
        fa = open(os.path.join(a, "dataset.jsonl")).read()
        fb = open(os.path.join(b, "dataset.jsonl")).read()
        assert fa == fb

    def test_invalid_count(self, tmp_path):
        assert run([
            "dataset", "--out", str(tmp_path / "o"), "--count", "0",
        ]) == cli.EXIT_VALIDATION
