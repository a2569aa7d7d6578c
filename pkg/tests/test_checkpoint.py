"""Checkpoint container: byte-exact round trips and strict failure on
corrupted files."""

import struct

import numpy as np
import pytest

from pathforge.checkpoint import (
    MAGIC,
    CheckpointError,
    load_arrays,
    save_arrays,
)


def test_round_trip(tmp_path):
    arrays = {
        "w": np.random.default_rng(0).standard_normal((3, 4)),
        "b": np.arange(5, dtype=np.float64),
        "scalar": np.array(3.25),
        "layer.nested/name": np.ones((2, 2, 2)),
    }
    path = tmp_path / "model.bin"
    save_arrays(path, arrays)
    loaded = load_arrays(path)
    assert set(loaded) == set(arrays)
    for name in arrays:
        np.testing.assert_array_equal(loaded[name], arrays[name])
        assert loaded[name].shape == arrays[name].shape
        assert loaded[name].dtype == np.float64


def test_empty_container(tmp_path):
    path = tmp_path / "empty.bin"
    save_arrays(path, {})
    assert load_arrays(path) == {}


def test_float32_input_upcast(tmp_path):
    path = tmp_path / "m.bin"
    save_arrays(path, {"x": np.ones(3, dtype=np.float32)})
    assert load_arrays(path)["x"].dtype == np.float64


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="not a checkpoint"):
        load_arrays(path)


def test_bad_version(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(MAGIC + struct.pack("<II", 99, 0))
    with pytest.raises(CheckpointError, match="version"):
        load_arrays(path)


def test_truncated(tmp_path):
    path = tmp_path / "model.bin"
    save_arrays(path, {"w": np.ones((4, 4))})
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 10])
    with pytest.raises(CheckpointError, match="truncated"):
        load_arrays(path)


def test_trailing_garbage(tmp_path):
    path = tmp_path / "model.bin"
    save_arrays(path, {"w": np.ones(2)})
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(CheckpointError, match="trailing"):
        load_arrays(path)


def test_overwrite_is_atomic_rename(tmp_path):
    path = tmp_path / "model.bin"
    save_arrays(path, {"w": np.ones(2)})
    save_arrays(path, {"w": np.zeros(2)})
    np.testing.assert_array_equal(load_arrays(path)["w"], np.zeros(2))
    assert not path.with_suffix(".bin.tmp").exists()
