"""Versioned binary checkpoints.

Layout: 8-byte magic, little-endian uint32 format version, uint32 header
length, UTF-8 JSON header, then every parameter tensor as little-endian
float64 in header order.
"""

import json
import struct
from collections import OrderedDict

import numpy as np

from .autodiff import ParamSet
from .config import ModelConfig
from .gridmap import RegionBounds
from .locations import LocationTable
from .model import PASR

MAGIC = b"PASRCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _plain(v):
    return v.item() if hasattr(v, "item") else v


def save(path, model):
    t = model.table
    header = {
        "config": model.cfg.model_fields(),
        "bounds": list(model.bounds.as_tuple()),
        "vocab": {"locations": t.n_locations, "geo_tokens": 32 ** model.cfg.ngram,
                  "grid": model.cfg.grid_intervals},
        "locations": {"raw_ids": [_plain(x) for x in t.raw_ids.tolist()],
                      "lat": t.lat[1:].tolist(), "lon": t.lon[1:].tolist(),
                      "counts": t.counts[1:].tolist()},
        "tensors": [[name, list(p.shape)] for name, p in model.params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for p in model.params.values():
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load(path, expected=None):
    """Rebuild a :class:`PASR` model; refuse if ``expected`` config differs."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint")
        version, size = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        header = json.loads(fh.read(size).decode("utf-8"))
        cfg = ModelConfig(**header["config"])
        if expected is not None:
            want = expected.model_fields() if hasattr(expected, "model_fields") else dict(expected)
            diff = {k: (cfg.model_fields()[k], v) for k, v in want.items() if cfg.model_fields().get(k) != v}
            if diff:
                raise CheckpointError(f"config mismatch (checkpoint, expected): {diff}")
        state = OrderedDict()
        for name, shape in header["tensors"]:
            n = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise CheckpointError(f"{path}: truncated at tensor {name}")
            state[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes")
    loc = header["locations"]
    table = LocationTable.from_arrays(np.array(loc["raw_ids"]), loc["lat"], loc["lon"], loc["counts"])
    params = ParamSet()
    for name, arr in state.items():
        params.add(name, arr)
    return PASR(cfg, table, RegionBounds(*header["bounds"]), params=params)
