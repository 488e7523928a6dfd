"""Named parameter tensors: shapes, initialization, and weight-file IO.

Two file formats share a schema: a binary format (8-byte little-endian header
length, JSON header mapping name -> shape/dtype plus metadata, then contiguous
little-endian float32 payloads in header order) and a pure-JSON variant for
tiny models, selected by the .json suffix.
"""

from __future__ import annotations

import json
import struct
from typing import Iterable

import numpy as np

from .config import Config

FORMAT_VERSION = 1

GATES = ("z", "r", "n")

# tensors updated in training stage 1; stage 2 unfreezes everything
STAGE1_PREFIXES = (
    "embed.", "gru_p.", "gru_r.", "vf.", "spat.", "pgn_e.", "pgn_p.", "head_p.",
)


def _mlp_shapes(prefix: str, dims: Iterable[int]) -> dict[str, tuple]:
    dims = list(dims)
    out = {}
    for i, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
        out[f"{prefix}.l{i}.W"] = (din, dout)
        out[f"{prefix}.l{i}.b"] = (dout,)
    return out


def _gru_shapes(prefix: str, in_dim: int, hidden: int) -> dict[str, tuple]:
    out = {}
    for direction in ("fwd", "bwd"):
        for gate in GATES:
            out[f"{prefix}.{direction}.W{gate}"] = (in_dim, hidden)
            out[f"{prefix}.{direction}.U{gate}"] = (hidden, hidden)
            out[f"{prefix}.{direction}.b{gate}"] = (hidden,)
    return out


def parameter_shapes(cfg: Config, vocab_size: int) -> dict[str, tuple]:
    """Single source of truth for every learnable tensor."""
    d = cfg.feat_dim
    h = cfg.hidden_dim
    ds = cfg.spatial_dim
    da = cfg.appearance_dim
    joint = 4 * d  # match-head input [a; b; a*b; |a-b|]
    shapes: dict[str, tuple] = {"embed.word": (vocab_size, cfg.word_dim)}
    shapes.update(_gru_shapes("gru_p", cfg.word_dim, h))
    shapes.update(_gru_shapes("gru_r", cfg.word_dim, h))
    shapes.update(_mlp_shapes("vf", [da + ds, d, d]))
    shapes.update(_mlp_shapes("spat", [2 * cfg.roi_resolution ** 2, ds, ds]))
    shapes.update(_mlp_shapes("umask", [2 * cfg.mask_size ** 2, ds, ds]))
    shapes.update(_mlp_shapes("uf", [da + ds, d, d]))
    shapes.update(_mlp_shapes("pgn_e", [3 * d, d, d]))
    shapes.update(_mlp_shapes("pgn_p", [2 * d, d, d]))
    shapes.update(_mlp_shapes("vogn_e", [3 * d, d, d]))
    shapes.update(_mlp_shapes("vogn_o", [2 * d, d, d]))
    shapes.update(_mlp_shapes("head_p.cls", [joint, d, 1]))
    shapes.update(_mlp_shapes("head_p.reg", [joint, d, 4]))
    shapes.update(_mlp_shapes("head_g.cls", [joint, d, 1]))
    shapes.update(_mlp_shapes("head_g.reg", [joint, d, 4]))
    shapes.update(_mlp_shapes("head_r.cls", [joint, d, 1]))
    return shapes


class ParameterStore:
    """Flat name -> float64 ndarray mapping with shape bookkeeping."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.tensors = tensors

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def get(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def set(self, name: str, value: np.ndarray) -> None:
        if name not in self.tensors:
            raise KeyError(name)
        if value.shape != self.tensors[name].shape:
            raise ValueError(f"shape mismatch for {name}: "
                             f"{value.shape} != {self.tensors[name].shape}")
        self.tensors[name] = np.asarray(value, dtype=np.float64)

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "ParameterStore":
        return ParameterStore({k: v.copy() for k, v in self.tensors.items()})

    def zero_prefix(self, prefix: str) -> None:
        for name in self.tensors:
            if name.startswith(prefix):
                self.tensors[name] = np.zeros_like(self.tensors[name])

    def validate_finite(self) -> None:
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise ValueError(f"non-finite values in parameter {name}")


def init_parameter_store(cfg: Config, vocab_size: int,
                         seed: int | None = None) -> ParameterStore:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed if seed is None else seed, 0x1A17]))
    tensors = {}
    for name, shape in parameter_shapes(cfg, vocab_size).items():
        if name.endswith(".b") or name.rsplit(".", 1)[-1].startswith("b"):
            tensors[name] = np.zeros(shape, dtype=np.float64)
        else:
            fan_in = shape[0] if name != "embed.word" else shape[1]
            bound = 1.0 / np.sqrt(fan_in)
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return ParameterStore(tensors)


def is_bias(name: str) -> bool:
    leaf = name.rsplit(".", 1)[-1]
    return leaf == "b" or (leaf.startswith("b") and len(leaf) == 2)


def stage1_names(store: ParameterStore) -> list[str]:
    return [n for n in store.names() if n.startswith(STAGE1_PREFIXES)]


def save_weights(store: ParameterStore, path: str, meta: dict | None = None) -> None:
    header = {
        "version": FORMAT_VERSION,
        "meta": meta or {},
        "tensors": {name: {"shape": list(t.shape), "dtype": "float32"}
                    for name, t in store.tensors.items()},
    }
    if path.endswith(".json"):
        doc = dict(header)
        doc["tensors"] = {name: {"shape": list(t.shape), "data": t.ravel().tolist()}
                          for name, t in store.tensors.items()}
        with open(path, "w") as fh:
            json.dump(doc, fh)
        return
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for t in store.tensors.values():
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_weights(path: str,
                 expected_shapes: dict[str, tuple] | None = None
                 ) -> tuple[ParameterStore, dict]:
    if path.endswith(".json"):
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported weight file version {doc.get('version')}")
        tensors = {name: np.asarray(entry["data"], dtype=np.float64)
                   .reshape(entry["shape"])
                   for name, entry in doc["tensors"].items()}
        meta = doc.get("meta", {})
    else:
        with open(path, "rb") as fh:
            (hlen,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hlen).decode("utf-8"))
            if header.get("version") != FORMAT_VERSION:
                raise ValueError(f"unsupported weight file version {header.get('version')}")
            tensors = {}
            for name, entry in header["tensors"].items():
                shape = tuple(entry["shape"])
                count = int(np.prod(shape)) if shape else 1
                raw = fh.read(4 * count)
                if len(raw) != 4 * count:
                    raise ValueError(f"truncated payload for tensor {name}")
                tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64) \
                    .reshape(shape)
            meta = header.get("meta", {})
    if expected_shapes is not None:
        missing = set(expected_shapes) - set(tensors)
        extra = set(tensors) - set(expected_shapes)
        if missing or extra:
            raise ValueError(f"tensor set mismatch: missing={sorted(missing)} "
                             f"extra={sorted(extra)}")
        for name, shape in expected_shapes.items():
            if tuple(tensors[name].shape) != tuple(shape):
                raise ValueError(f"shape mismatch for {name}: file has "
                                 f"{tensors[name].shape}, config wants {shape}")
    return ParameterStore(tensors), meta
