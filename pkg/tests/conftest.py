import os
from pathlib import Path

import pytest


def data_root() -> Path:
    env = os.environ.get("LEDF_DATA")
    if env:
        return Path(env)
    return Path(__file__).resolve().parent.parent / "data"


def require_dataset(name: str) -> Path:
    """Path to a real dataset directory, or skip the test if absent.

    Benchmark datasets are not bundled; point LEDF_DATA at a directory of
    dataset folders (or create ./data) to enable these tests.
    """
    path = data_root() / name
    if not (path / "meta.json").is_file():
        pytest.skip(f"dataset {name!r} not found under {data_root()} "
                    f"(set LEDF_DATA or create ./data)")
    return path
