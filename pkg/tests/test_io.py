import json
import struct

import numpy as np
import pytest

from muster import io
from muster.errors import ConfigError, ShapeError, TensorFileError
from muster.rng import Rng


def _write_raw(path, magic=io.MAGIC, version=1, dtype=0, reserved=0, ndim=None,
               dims=(3,), payload=None):
    if ndim is None:
        ndim = len(dims)
    blob = struct.pack("<4sBBHI", magic, version, dtype, reserved, ndim)
    blob += struct.pack(f"<{len(dims)}Q", *dims)
    if payload is None:
        n = 1
        for d in dims:
            n *= d
        payload = b"\x00" * (4 * n)
    path.write_bytes(blob + payload)


# ---------------------------------------------------------------------------
# tensor files


@pytest.mark.parametrize("rank", [1, 2, 3, 4, 5])
def test_roundtrip_bit_identical(tmp_path, rank):
    shape = tuple(range(2, 2 + rank))
    arr = Rng(rank).normal(shape, dtype=np.float32)
    p = tmp_path / "t.mtsr"
    io.write_tensor(p, arr)
    back = io.read_tensor(p)
    assert back.shape == arr.shape
    assert back.dtype == np.float32
    assert back.tobytes() == arr.tobytes()


def test_write_casts_to_float32(tmp_path):
    p = tmp_path / "t.mtsr"
    io.write_tensor(p, np.array([1.5, 2.5], dtype=np.float64))
    assert io.read_tensor(p).dtype == np.float32


def test_file_layout_is_documented_header(tmp_path):
    p = tmp_path / "t.mtsr"
    io.write_tensor(p, np.arange(6, dtype=np.float32).reshape(2, 3))
    blob = p.read_bytes()
    assert blob[:4] == b"MTSR"
    assert blob[4] == 1 and blob[5] == 0
    assert struct.unpack_from("<H", blob, 6)[0] == 0
    assert struct.unpack_from("<I", blob, 8)[0] == 2
    assert struct.unpack_from("<2Q", blob, 12) == (2, 3)
    assert len(blob) == 12 + 16 + 24


def test_write_rejects_bad_ranks(tmp_path):
    p = tmp_path / "t.mtsr"
    with pytest.raises(ShapeError):
        io.write_tensor(p, np.float32(3.0))  # rank 0
    with pytest.raises(ShapeError):
        io.write_tensor(p, np.zeros((1,) * 6, dtype=np.float32))
    with pytest.raises(ShapeError):
        io.write_tensor(p, np.zeros((0, 3), dtype=np.float32))


def _code_of(path):
    with pytest.raises(TensorFileError) as ei:
        io.read_tensor(path)
    return ei.value.code


def test_read_error_codes(tmp_path):
    p = tmp_path / "bad.mtsr"

    p.write_bytes(b"MT")
    assert _code_of(p) == "bad_header"

    _write_raw(p, magic=b"XXXX")
    assert _code_of(p) == "bad_magic"

    _write_raw(p, version=2)
    assert _code_of(p) == "bad_version"

    _write_raw(p, dtype=1)
    assert _code_of(p) == "bad_dtype"

    _write_raw(p, reserved=7)
    assert _code_of(p) == "bad_header"

    _write_raw(p, ndim=0, dims=())
    assert _code_of(p) == "bad_rank"

    _write_raw(p, ndim=6, dims=(1,) * 6)
    assert _code_of(p) == "bad_rank"

    # header promises 2 dims but the file ends after the first
    blob = struct.pack("<4sBBHI", io.MAGIC, 1, 0, 0, 2) + struct.pack("<Q", 3)
    p.write_bytes(blob)
    assert _code_of(p) == "bad_header"

    _write_raw(p, dims=(0, 3), payload=b"")
    assert _code_of(p) == "bad_dims"

    _write_raw(p, dims=(1 << 30, 1 << 30), payload=b"")
    assert _code_of(p) == "bad_dims"

    _write_raw(p, dims=(4,), payload=b"\x00" * 15)
    assert _code_of(p) == "truncated"

    _write_raw(p, dims=(4,), payload=b"\x00" * 17)
    assert _code_of(p) == "trailing"


def test_read_missing_file_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        io.read_tensor(tmp_path / "nope.mtsr")


def test_tensor_error_exposes_code_and_message():
    err = TensorFileError("bad_magic", "oops")
    assert err.code == "bad_magic"
    assert "oops" in str(err)


# ---------------------------------------------------------------------------
# run configuration


def _base_doc(**kw):
    doc = {"image": {"h": 96, "w": 96}, "base_channels": 16}
    doc.update(kw)
    return doc


def test_config_defaults():
    cfg, h, w = io.parse_run_config(_base_doc())
    assert (h, w) == (96, 96)
    assert cfg.base_channels == 16
    assert cfg.window == 12
    assert cfg.variant == "muster"
    assert cfg.upsampler == "fuse"
    assert cfg.num_classes == 150
    assert cfg.seed == 0
    assert cfg.heads == (32, 16, 8, 4)
    assert cfg.stage_channels is None


def test_config_full_document():
    doc = _base_doc(
        window_size=4,
        variant="light",
        upsampler="bilinear",
        num_classes=7,
        seed=3,
        stages=[{"channels": 32, "heads": 2}, {"channels": 16, "heads": 2}],
    )
    cfg, _, _ = io.parse_run_config(doc)
    assert cfg.window == 4
    assert cfg.variant == "light"
    assert cfg.upsampler == "bilinear"
    assert cfg.num_classes == 7
    assert cfg.seed == 3
    assert cfg.pyramid_channels == (32, 16)
    assert cfg.heads == (2, 2)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config keys"):
        io.parse_run_config(_base_doc(windows=4))
    with pytest.raises(ConfigError, match="unknown image keys"):
        io.parse_run_config({"image": {"h": 96, "w": 96, "d": 1}, "base_channels": 16})


def test_config_rejects_missing_required():
    with pytest.raises(ConfigError):
        io.parse_run_config({"base_channels": 16})
    with pytest.raises(ConfigError):
        io.parse_run_config({"image": {"h": 96, "w": 96}})
    with pytest.raises(ConfigError):
        io.parse_run_config([1, 2])


def test_config_rejects_wrong_types():
    with pytest.raises(ConfigError):
        io.parse_run_config(_base_doc(base_channels="16"))
    with pytest.raises(ConfigError):
        io.parse_run_config(_base_doc(base_channels=True))  # bool is not an int here
    with pytest.raises(ConfigError):
        io.parse_run_config({"image": {"h": 96.0, "w": 96}, "base_channels": 16})
    with pytest.raises(ConfigError):
        io.parse_run_config(_base_doc(seed=-1))
    with pytest.raises(ConfigError):
        io.parse_run_config(_base_doc(variant="huge"))
    with pytest.raises(ConfigError):
        io.parse_run_config(_base_doc(upsampler="nearest"))
    with pytest.raises(ConfigError):
        io.parse_run_config(_base_doc(window_size=1))


def test_config_rejects_bad_stage_entries():
    with pytest.raises(ConfigError):
        io.parse_run_config(_base_doc(stages=[]))
    with pytest.raises(ConfigError):
        io.parse_run_config(_base_doc(stages=[{"channels": 32}]))
    with pytest.raises(ConfigError):
        io.parse_run_config(_base_doc(stages=[{"channels": 32, "heads": 2, "extra": 1}]))
    with pytest.raises(ConfigError):
        io.parse_run_config(_base_doc(stages=[{"channels": 32, "heads": 0}]))
    with pytest.raises(ConfigError):
        # heads must divide channels; surfaced by DecoderConfig validation
        io.parse_run_config(_base_doc(stages=[{"channels": 30, "heads": 4}]))


def test_load_run_config_file(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(_base_doc()))
    cfg, h, w = io.load_run_config(p)
    assert cfg.base_channels == 16 and (h, w) == (96, 96)


def test_load_run_config_bad_json(tmp_path):
    p = tmp_path / "run.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        io.load_run_config(p)
