import itertools
import json
import math

import numpy as np
import pytest

from tsvnet import optimizer
from tsvnet.core import GeometryMaterials, apply_d4, build_layout, canonical_form, D4
from tsvnet.optimizer import (
    CheckpointCorrupt,
    ObjectiveVector,
    ParetoRecord,
    SearchConfig,
    SearchError,
    burnside_orbit_count,
    combinatorial_search,
    count_layouts,
    dominates,
    enumerate_layouts,
    geometric_sweep,
    pareto_front,
    records_to_csv,
    reduced_count,
    symmetry_reduce,
)


class TestEnumeration:
    def test_count_matches_binomial(self):
        assert count_layouts(3, 3, 2) == math.comb(9, 2) == 36
        assert count_layouts(2, 3, 1) == 6

    def test_enumerated_layouts_are_unique_and_lexicographic(self):
        layouts = list(enumerate_layouts(3, 3, 2))
        assert len(layouts) == 36
        assert len({l.roles for l in layouts}) == 36
        signal_sets = [l.signal_cells for l in layouts]
        assert signal_sets == sorted(signal_sets)

    def test_all_non_signal_cells_are_ground(self):
        for lay in enumerate_layouts(2, 2, 1):
            assert lay.n_tsv == 4
            assert len(lay.ground_cells) == 3

    def test_degenerate_counts_rejected(self):
        with pytest.raises(SearchError):
            count_layouts(2, 2, 4)
        with pytest.raises(SearchError):
            count_layouts(2, 2, 0)


class TestSymmetry:
    @pytest.mark.parametrize("k,expected", [(1, 3), (2, 8), (3, 16), (4, 23)])
    def test_burnside_3x3(self, k, expected):
        assert burnside_orbit_count(3, k) == expected

    def test_burnside_total_covers_enumeration(self):
        # summing orbit sizes over representatives recovers C(9, k)
        for k in range(1, 5):
            reps = list(symmetry_reduce(enumerate_layouts(3, 3, k)))
            assert len(reps) == burnside_orbit_count(3, k)
            assert sum(optimizer.orbit_size(l) for l in reps) == math.comb(9, k)

    def test_reduced_count_matches_burnside(self):
        for n, k in ((3, 2), (3, 4), (4, 3), (4, 5)):
            assert reduced_count(n, n, k) == burnside_orbit_count(n, k)

    def test_representatives_are_canonical(self):
        for lay in symmetry_reduce(enumerate_layouts(3, 3, 2)):
            assert lay.roles == canonical_form(lay).roles

    def test_orbit_completeness(self):
        # every layout is reachable from exactly one representative
        reps = list(symmetry_reduce(enumerate_layouts(3, 3, 2)))
        covered = set()
        for rep in reps:
            for t in D4:
                covered.add(apply_d4(rep, t).roles)
        assert covered == {l.roles for l in enumerate_layouts(3, 3, 2)}

    def test_symmetry_requires_square_grid(self):
        cfg = SearchConfig(rows=2, cols=3, s_min=1, s_max=1, symmetry=True)
        with pytest.raises(SearchError):
            list(optimizer._layout_stream(cfg))


def vec(refl, ins, xt, kz):
    return ObjectiveVector(
        max_reflection_db=refl, mean_insertion_db=ins,
        worst_crosstalk_db=xt, k_z=kz,
    )


class TestPareto:
    def test_dominates_strict(self):
        a = vec(-20.0, -1.0, -30.0, 160.0)
        b = vec(-10.0, -2.0, -25.0, 150.0)
        assert dominates(a, b)
        assert not dominates(b, a)
        assert not dominates(a, a)

    def test_kz_is_maximized(self):
        a = vec(-10.0, -1.0, -30.0, 170.0)
        b = vec(-10.0, -1.0, -30.0, 150.0)
        assert dominates(a, b)

    def test_front_matches_quadratic_oracle(self):
        rng = np.random.default_rng(0)
        lay = build_layout(2, 2, signal_cells=(0,), ground_cells=(1,))
        recs = []
        for _ in range(60):
            o = vec(
                float(-rng.uniform(5, 30)), float(-rng.uniform(0.1, 3)),
                float(-rng.uniform(10, 60)), float(rng.uniform(150, 170)),
            )
            recs.append(ParetoRecord(layout=lay, geometry={}, objectives=o))
        front = pareto_front(recs)
        oracle = [
            r for r in recs
            if not any(dominates(s.objectives, r.objectives) for s in recs)
        ]
        assert {id(r.objectives) for r in front} == {
            id(r.objectives) for r in oracle
        }

    def test_front_is_order_invariant(self):
        rng = np.random.default_rng(1)
        lay = build_layout(2, 2, signal_cells=(0,), ground_cells=(1,))
        recs = [
            ParetoRecord(layout=lay, geometry={}, objectives=vec(
                float(-rng.uniform(5, 30)), float(-rng.uniform(0.1, 3)),
                float(-rng.uniform(10, 60)), float(rng.uniform(150, 170)),
            ))
            for _ in range(40)
        ]
        keys_fwd = {r.objectives.minimization_key() for r in pareto_front(recs)}
        keys_rev = {
            r.objectives.minimization_key() for r in pareto_front(recs[::-1])
        }
        assert keys_fwd == keys_rev

    def test_empty_front_rejected(self):
        with pytest.raises(SearchError):
            pareto_front([])


class TestEvaluation:
    def test_single_signal_gets_sentinel(self):
        lay = build_layout(2, 2, signal_cells=(0,), ground_cells=(3,))
        cfg = SearchConfig(rows=2, cols=2, s_min=1, s_max=1, symmetry=False)
        obj = optimizer.evaluate_design(lay, GeometryMaterials(), cfg)
        assert obj.worst_crosstalk_db == -300.0
        assert obj.max_reflection_db < 0.0

    def test_deterministic(self):
        lay = build_layout(2, 2, signal_cells=(0, 1), ground_cells=(2,))
        cfg = SearchConfig(rows=2, cols=2, s_min=2, s_max=2, symmetry=False)
        g = GeometryMaterials()
        a = optimizer.evaluate_design(lay, g, cfg)
        b = optimizer.evaluate_design(lay, g, cfg)
        assert a.minimization_key() == b.minimization_key()


class TestCombinatorialSearch:
    def test_small_exhaustive_run(self, tmp_path):
        cfg = SearchConfig(rows=2, cols=2, s_min=1, s_max=2, symmetry=False)
        res = combinatorial_search(cfg, GeometryMaterials())
        assert res.evaluated == math.comb(4, 1) + math.comb(4, 2)
        assert res.errors == []
        assert res.front
        for r in res.front:
            assert not any(
                dominates(o.objectives, r.objectives) for o in res.records
            )

    def test_symmetry_reduces_work(self):
        cfg_full = SearchConfig(rows=2, cols=2, s_min=2, s_max=2, symmetry=False)
        cfg_sym = SearchConfig(rows=2, cols=2, s_min=2, s_max=2, symmetry=True)
        g = GeometryMaterials()
        full = combinatorial_search(cfg_full, g)
        sym = combinatorial_search(cfg_sym, g)
        assert sym.evaluated == burnside_orbit_count(2, 2) == 2
        assert full.evaluated == 6
        # the reduced front objectives appear in the full run too
        full_keys = {r.objectives.minimization_key() for r in full.records}
        for r in sym.records:
            assert r.objectives.minimization_key() in full_keys

    def test_checkpoint_resume_bit_identical(self, tmp_path):
        path = str(tmp_path / "chk.json")
        cfg = SearchConfig(rows=2, cols=2, s_min=1, s_max=2, symmetry=False,
                           checkpoint_path=path, checkpoint_interval=3)
        g = GeometryMaterials()
        straight = combinatorial_search(cfg, g)
        # simulate an interrupted run: rewind the checkpoint to an early state
        state = optimizer._read_checkpoint(path)
        partial_results = {
            k: v for k, v in state["results"].items() if int(k) < 3
        }
        optimizer._write_checkpoint(path, {
            "next_index": 3,
            "results": partial_results,
            "errors": [],
            "config": state["config"],
        })
        resumed = combinatorial_search(cfg, g, resume=True)
        assert len(resumed.records) == len(straight.records)
        for a, b in zip(resumed.records, straight.records):
            assert a.layout == b.layout
            assert a.objectives.minimization_key() == b.objectives.minimization_key()

    def test_corrupt_checkpoint_rejected(self, tmp_path):
        path = str(tmp_path / "chk.json")
        optimizer._write_checkpoint(path, {"next_index": 1, "results": {},
                                           "errors": [], "config": {}})
        payload = json.loads(open(path).read())
        payload["state"]["next_index"] = 99
        with open(path, "w") as fh:
            json.dump(payload, fh)
        cfg = SearchConfig(rows=2, cols=2, s_min=1, s_max=1, symmetry=False,
                           checkpoint_path=path)
        with pytest.raises(CheckpointCorrupt):
            combinatorial_search(cfg, GeometryMaterials(), resume=True)


class TestGeometricSweep:
    def test_lhs_deterministic_under_seed(self):
        cfg = SearchConfig(samples=8, seed=42)
        a = optimizer._sample_geometries(cfg, GeometryMaterials())
        b = optimizer._sample_geometries(cfg, GeometryMaterials())
        assert a == b

    def test_samples_respect_ranges(self):
        cfg = SearchConfig(samples=64, seed=1)
        for geo in optimizer._sample_geometries(cfg, GeometryMaterials()):
            for k, (lo, hi) in optimizer.SWEEP_RANGES.items():
                assert lo <= geo[k] <= hi

    def test_sweep_skips_infeasible_and_returns_front(self):
        lay = build_layout(2, 2, signal_cells=(0, 1), ground_cells=(2,))
        cfg = SearchConfig(rows=2, cols=2, samples=16, seed=3)
        res = geometric_sweep(lay, cfg)
        assert res.evaluated + len(res.errors) == 16
        assert res.front

    def test_csv_format(self):
        lay = build_layout(2, 2, signal_cells=(0, 1), ground_cells=(2,))
        rec = ParetoRecord(
            layout=lay,
            geometry={"r_cond": 5.0, "p_int": 60.0, "h_int": 100.0, "t_ins": 0.5},
            objectives=vec(-20.0, -0.5, -30.0, 160.0),
        )
        text = records_to_csv([rec])
        lines = text.strip().split("\n")
        assert lines[0] == optimizer.CSV_HEADER
        assert lines[1].endswith("SSGE")
        assert lines[1].startswith("5,60,100,0.5,")
