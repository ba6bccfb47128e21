"""Binary tensor files and the JSON run-configuration schema.

Tensor file layout (all little-endian):

    offset 0   magic     4 bytes  "MTSR"
    offset 4   version   u8       1
    offset 5   dtype     u8       0 = IEEE-754 binary32
    offset 6   reserved  u16      0
    offset 8   ndim      u32      1..5
    offset 12  dims      ndim x u64
    then       payload   4 * product(dims) bytes, row-major float32

Reads validate every field and fail with a TensorFileError carrying a
stable ``code`` slug (bad_magic, bad_version, ...) so callers can report
machine-readable causes. Write then read returns a bit-identical array.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .decoder import DecoderConfig, UPSAMPLERS, VARIANTS
from .errors import ConfigError, ShapeError, TensorFileError

MAGIC = b"MTSR"
VERSION = 1
DTYPE_F32 = 0
_HEADER = struct.Struct("<4sBBHI")
MAX_NDIM = 5
_MAX_ELEMS = 1 << 40  # refuse absurd dims before allocating


def write_tensor(path, arr) -> None:
    """Serialize one array as float32. Rank must be 1..5, extents positive."""
    arr = np.asarray(arr)
    if arr.ndim < 1 or arr.ndim > MAX_NDIM:
        raise ShapeError(f"tensor files hold rank 1..{MAX_NDIM}, got rank {arr.ndim}")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if any(d < 1 for d in arr.shape):
        raise ShapeError(f"tensor files need positive extents, got {arr.shape}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, DTYPE_F32, 0, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        f.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    """Parse one tensor file back into a float32 array, validating strictly."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _HEADER.size:
        raise TensorFileError("bad_header", f"file is {len(blob)} bytes, header needs 12")
    magic, version, dtype, reserved, ndim = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise TensorFileError("bad_magic", f"magic {magic!r} != {MAGIC!r}")
    if version != VERSION:
        raise TensorFileError("bad_version", f"version {version} unsupported (want {VERSION})")
    if dtype != DTYPE_F32:
        raise TensorFileError("bad_dtype", f"dtype code {dtype} unsupported (want 0 = f32)")
    if reserved != 0:
        raise TensorFileError("bad_header", f"reserved field must be 0, got {reserved}")
    if ndim < 1 or ndim > MAX_NDIM:
        raise TensorFileError("bad_rank", f"ndim {ndim} outside 1..{MAX_NDIM}")
    dims_end = _HEADER.size + 8 * ndim
    if len(blob) < dims_end:
        raise TensorFileError("bad_header", "file ends inside the dims block")
    dims = struct.unpack_from(f"<{ndim}Q", blob, _HEADER.size)
    if any(d == 0 for d in dims):
        raise TensorFileError("bad_dims", f"zero extent in dims {dims}")
    count = 1
    for d in dims:
        count *= d
        if count > _MAX_ELEMS:
            raise TensorFileError("bad_dims", f"dims {dims} exceed element budget")
    need = dims_end + 4 * count
    if len(blob) < need:
        raise TensorFileError(
            "truncated", f"payload needs {need - dims_end} bytes, file has {len(blob) - dims_end}"
        )
    if len(blob) > need:
        raise TensorFileError("trailing", f"{len(blob) - need} unexpected bytes after payload")
    data = np.frombuffer(blob, dtype="<f4", offset=dims_end, count=count)
    return data.reshape(dims).copy()


# ---------------------------------------------------------------------------
# run configuration (JSON)

_TOP_KEYS = {
    "image",
    "base_channels",
    "window_size",
    "variant",
    "upsampler",
    "num_classes",
    "seed",
    "stages",
}


def _require_pos_int(obj, key, where):
    v = obj.get(key)
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ConfigError(f"{where}.{key} must be a positive integer, got {v!r}")
    return v


def parse_run_config(doc: dict):
    """Validate a config document; returns (DecoderConfig, h_img, w_img)."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "image" not in doc or not isinstance(doc["image"], dict):
        raise ConfigError("config needs an 'image' object with h and w")
    extra = set(doc["image"]) - {"h", "w"}
    if extra:
        raise ConfigError(f"unknown image keys: {sorted(extra)}")
    h_img = _require_pos_int(doc["image"], "h", "image")
    w_img = _require_pos_int(doc["image"], "w", "image")
    base_channels = _require_pos_int(doc, "base_channels", "config")

    window = doc.get("window_size", 12)
    if not isinstance(window, int) or isinstance(window, bool) or window < 2:
        raise ConfigError(f"window_size must be an integer >= 2, got {window!r}")
    variant = doc.get("variant", "muster")
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {list(VARIANTS)}, got {variant!r}")
    upsampler = doc.get("upsampler", "fuse")
    if upsampler not in UPSAMPLERS:
        raise ConfigError(f"upsampler must be one of {list(UPSAMPLERS)}, got {upsampler!r}")
    num_classes = doc.get("num_classes", 150)
    if not isinstance(num_classes, int) or isinstance(num_classes, bool) or num_classes < 1:
        raise ConfigError(f"num_classes must be a positive integer, got {num_classes!r}")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

    stage_channels = None
    heads = (32, 16, 8, 4)
    if "stages" in doc:
        stages = doc["stages"]
        if not isinstance(stages, list) or not stages:
            raise ConfigError("stages must be a non-empty list")
        chans, hds = [], []
        for idx, st in enumerate(stages):
            if not isinstance(st, dict) or set(st) != {"channels", "heads"}:
                raise ConfigError(
                    f"stages[{idx}] must be an object with exactly 'channels' and 'heads'"
                )
            chans.append(_require_pos_int(st, "channels", f"stages[{idx}]"))
            hds.append(_require_pos_int(st, "heads", f"stages[{idx}]"))
        stage_channels = tuple(chans)
        heads = tuple(hds)

    cfg = DecoderConfig(
        base_channels=base_channels,
        window=window,
        heads=heads,
        variant=variant,
        upsampler=upsampler,
        num_classes=num_classes,
        seed=seed,
        stage_channels=stage_channels,
    )
    return cfg, h_img, w_img


def load_run_config(path):
    """Read and validate a JSON config file."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
    return parse_run_config(doc)
