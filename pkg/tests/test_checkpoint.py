import struct

import numpy as np
import pytest

from mperceiver.checkpoint import CheckpointError, load_checkpoint, save_checkpoint


def test_roundtrip_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "vae.enc.weight": rng.standard_normal((4, 3, 3, 3)).astype(np.float32),
        "scalar": np.float32(2.5).reshape(()),
        "bias": rng.standard_normal(7).astype(np.float32),
    }
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, tensors)
    loaded = load_checkpoint(path)
    assert set(loaded) == set(tensors)
    for name, arr in tensors.items():
        assert loaded[name].shape == np.asarray(arr).shape
        assert loaded[name].tobytes() == np.ascontiguousarray(arr, dtype="<f4").tobytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_unknown_version_rejected(tmp_path):
    path = tmp_path / "v9.ckpt"
    path.write_bytes(b"MPTC" + struct.pack("<II", 9, 0))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, {"w": np.ones(8, dtype=np.float32)})
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "g.ckpt"
    save_checkpoint(path, {"w": np.ones(2, dtype=np.float32)})
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(path)


def test_payload_is_little_endian_float32(tmp_path):
    path = tmp_path / "le.ckpt"
    save_checkpoint(path, {"x": np.array([1.0], dtype=np.float32)})
    blob = path.read_bytes()
    assert blob[:4] == b"MPTC"
    # ... magic, version+count, name_len(2) + "x"(1) + rank(1) + extent(4)
    assert blob[-4:] == struct.pack("<f", 1.0)
