"""Tensor interchange format and checkpoint container."""

import io
import struct

import numpy as np
import pytest

from cips.tensorio import (
    CKPT_MAGIC, TENSOR_MAGIC, TensorFormatError, load_checkpoint, load_tensor,
    read_tensor, save_checkpoint, save_tensor, write_tensor,
)


def test_roundtrip_dtypes_and_shapes(tmp_path):
    cases = [
        np.random.default_rng(0).normal(size=(5, 7)),
        np.random.default_rng(1).normal(size=(3,)).astype(np.float32),
        np.asarray(3.25),
        np.arange(6, dtype=np.int64).reshape(2, 3),
        np.zeros((0, 4)),
    ]
    for i, arr in enumerate(cases):
        path = tmp_path / f"t{i}.ctnsr"
        save_tensor(path, arr)
        back = load_tensor(path)
        assert back.dtype == arr.dtype
        assert back.shape == arr.shape
        assert back.tobytes() == arr.tobytes()


def test_payload_alignment(tmp_path):
    path = tmp_path / "t.ctnsr"
    save_tensor(path, np.ones((3, 3)))
    raw = path.read_bytes()
    assert raw[:8] == TENSOR_MAGIC
    (hlen,) = struct.unpack("<I", raw[8:12])
    payload_off = 12 + hlen
    assert payload_off % 64 == 0
    assert np.frombuffer(raw[payload_off:], dtype="<f8").reshape(3, 3).sum() == 9.0


def test_multiple_records_stream():
    buf = io.BytesIO()
    a = np.random.default_rng(2).normal(size=(4, 4))
    b = np.arange(5, dtype=np.float32)
    write_tensor(buf, a)
    write_tensor(buf, b)
    buf.seek(0)
    assert read_tensor(buf).tobytes() == a.tobytes()
    assert read_tensor(buf).tobytes() == b.tobytes()


def test_bad_magic_rejected():
    buf = io.BytesIO(b"NOTMAGIC" + b"\x00" * 64)
    with pytest.raises(TensorFormatError):
        read_tensor(buf)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.ctnsr"
    save_tensor(path, np.ones(10))
    raw = path.read_bytes()[:-8]
    with pytest.raises(TensorFormatError):
        read_tensor(io.BytesIO(raw))


def test_checkpoint_roundtrip(tmp_path):
    path = tmp_path / "m.ckpt"
    cfg = {"arch": "skips", "width": 32, "resolution": [16, 16]}
    tensors = {
        "w0": np.random.default_rng(3).normal(size=(8, 8)),
        "b0": np.zeros(8),
        "emb": np.random.default_rng(4).normal(size=(16, 4)).astype(np.float32),
    }
    save_checkpoint(path, cfg, tensors)
    raw = path.read_bytes()
    assert raw[:8] == CKPT_MAGIC
    (version,) = struct.unpack("<I", raw[8:12])
    assert version == 1
    cfg2, tensors2 = load_checkpoint(path)
    assert cfg2["arch"] == "skips"
    assert cfg2["tensor_names"] == ["w0", "b0", "emb"]
    assert set(tensors2) == set(tensors)
    for k in tensors:
        assert tensors2[k].tobytes() == tensors[k].tobytes()
        assert tensors2[k].dtype == tensors[k].dtype


def test_checkpoint_save_is_byte_deterministic(tmp_path):
    cfg = {"arch": "skips", "width": 32}
    tensors = {"w": np.ones((3, 3)), "b": np.zeros(3)}
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, cfg, tensors)
    save_checkpoint(p2, cfg, tensors)
    assert p1.read_bytes() == p2.read_bytes()
