import shutil
import subprocess

import pytest

from tsvgnn.train import load_dataset


def generate_dataset(out_dir, count, seed, size_min, size_max, split=None):
    """Produce a dataset through the tsvnet command-line interface."""
    exe = shutil.which("tsvnet")
    if exe is None:
        pytest.skip("tsvnet CLI not available")
    argv = [
        exe, "dataset", "--out", str(out_dir), "--count", str(count),
        "--seed", str(seed), "--size-min", str(size_min),
        "--size-max", str(size_max),
    ]
    if split is not None:
        argv += ["--split", str(split)]
    subprocess.run(argv, check=True, capture_output=True)
    return out_dir


@pytest.fixture(scope="session")
def small_split(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    generate_dataset(out, count=12, seed=3, size_min=3, size_max=4, split=0.75)
    return {
        "train": load_dataset(out / "dataset.jsonl.train"),
        "val": load_dataset(out / "dataset.jsonl.val"),
        "train_path": str(out / "dataset.jsonl.train"),
        "val_path": str(out / "dataset.jsonl.val"),
    }


@pytest.fixture(scope="session")
def overfit_records(tmp_path_factory):
    out = tmp_path_factory.mktemp("overfit")
    generate_dataset(out, count=100, seed=5, size_min=3, size_max=4)
    return load_dataset(out / "dataset.jsonl")


@pytest.fixture(scope="session")
def seven_records(tmp_path_factory):
    out = tmp_path_factory.mktemp("seven")
    generate_dataset(out, count=4, seed=9, size_min=7, size_max=7)
    return load_dataset(out / "dataset.jsonl")


@pytest.fixture(scope="session")
def nine_record(tmp_path_factory):
    out = tmp_path_factory.mktemp("nine")
    generate_dataset(out, count=1, seed=11, size_min=9, size_max=9)
    return load_dataset(out / "dataset.jsonl")[0]
