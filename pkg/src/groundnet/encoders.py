"""Feature extraction: word embeddings, bidirectional recurrent phrase encoding,
coordinate-map spatial features, union-mask geometric features, and fusion.

All forward functions record onto an autodiff Tape; boxes and raster inputs
are treated as constants (gradients flow through parameters and features, not
through box coordinates).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tape, Var, accumulate_grad as _accum
from .config import Config
from .params import GATES, ParameterStore

UNK_TOKEN = "<unk>"


class Vocab:
    """Token -> index mapping; index 0 is reserved for out-of-vocabulary."""

    def __init__(self, tokens: list[str]):
        self.tokens = [UNK_TOKEN] + [t for t in tokens if t != UNK_TOKEN]
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, tokens: list[str]) -> np.ndarray:
        return np.array([self.index.get(t, 0) for t in tokens], dtype=np.int64)


def make_coordinate_map(size: int) -> np.ndarray:
    """(2,H,W) grid of cell coordinates normalized by the map center.

    Channel 0 holds x, channel 1 holds y; corner cells sit at -1/+1 and the
    map center at 0.
    """
    half = (size - 1) / 2.0
    axis = (np.arange(size, dtype=np.float64) - half) / half
    cmap = np.empty((2, size, size), dtype=np.float64)
    cmap[0] = axis[None, :]
    cmap[1] = axis[:, None]
    return cmap


def mlp_forward(tape: Tape, store: ParameterStore, prefix: str, x: Var) -> Var:
    """Affine layers with rectifier activations; the final layer stays affine."""
    layer = 0
    while f"{prefix}.l{layer}.W" in store:
        w = tape.param(f"{prefix}.l{layer}.W", store.get(f"{prefix}.l{layer}.W"))
        b = tape.param(f"{prefix}.l{layer}.b", store.get(f"{prefix}.l{layer}.b"))
        if x.value.shape[-1] != w.value.shape[0]:
            raise ValueError(f"{prefix} layer {layer}: input width "
                             f"{x.value.shape[-1]} != {w.value.shape[0]}")
        x = ad.add(ad.matmul(x, w), b)
        layer += 1
        if f"{prefix}.l{layer}.W" in store:
            x = ad.relu(x)
    if layer == 0:
        raise KeyError(f"no layers stored under {prefix!r}")
    return x


def _accum_row(var: Var, row: int, g: np.ndarray) -> None:
    if var.grad is None:
        var.grad = np.zeros_like(var.value)
    var.grad[row] += g[0]


def _gru_step(tape: Tape, proj_z: Var, proj_r: Var, proj_n: Var, t: int,
              h: Var, uz: Var, ur: Var, un: Var) -> Var:
    """One fused recurrent cell step with a hand-written backward.

    Gates: z = sigmoid(xz + h Uz), r = sigmoid(xr + h Ur),
    candidate n = tanh(xn + (r*h) Un), state h' = (1-z)*h + z*n.
    The input projections (with biases folded in) come precomputed for the
    whole sequence; the step reads row t.
    """
    hv = h.value
    zv = 1.0 / (1.0 + np.exp(-(proj_z.value[t:t + 1] + hv @ uz.value)))
    rv = 1.0 / (1.0 + np.exp(-(proj_r.value[t:t + 1] + hv @ ur.value)))
    rh = rv * hv
    nv = np.tanh(proj_n.value[t:t + 1] + rh @ un.value)
    out = tape.node((1.0 - zv) * hv + zv * nv)

    def vjp(g):
        dn = g * zv
        dh = g * (1.0 - zv)
        dan = dn * (1.0 - nv * nv)
        _accum_row(proj_n, t, dan)
        _accum(un, rh.T @ dan)
        drh = dan @ un.value.T
        dh = dh + drh * rv
        dar = (drh * hv) * rv * (1.0 - rv)
        _accum_row(proj_r, t, dar)
        _accum(ur, hv.T @ dar)
        dh = dh + dar @ ur.value.T
        daz = (g * (nv - hv)) * zv * (1.0 - zv)
        _accum_row(proj_z, t, daz)
        _accum(uz, hv.T @ daz)
        dh = dh + daz @ uz.value.T
        _accum(h, dh)

    out.vjp = vjp if tape.record else None
    return out


def _gru_direction(tape: Tape, store: ParameterStore, prefix: str,
                   embedded: Var, order: list[int]) -> list[Var]:
    """One GRU direction over the embedded sequence, visiting rows in `order`.

    Returns the hidden state per sequence position (not per visit order),
    starting from a zero state.
    """
    proj = {}
    for gate in GATES:
        w = tape.param(f"{prefix}.W{gate}", store.get(f"{prefix}.W{gate}"))
        b = tape.param(f"{prefix}.b{gate}", store.get(f"{prefix}.b{gate}"))
        proj[gate] = ad.add(ad.matmul(embedded, w), b)  # (T,H), biases folded
    u = {g: tape.param(f"{prefix}.U{g}", store.get(f"{prefix}.U{g}")) for g in GATES}

    hidden = store.get(f"{prefix}.Uz").shape[0]
    h = tape.leaf(np.zeros((1, hidden)))
    states: dict[int, Var] = {}
    for t in order:
        h = _gru_step(tape, proj["z"], proj["r"], proj["n"], t, h,
                      u["z"], u["r"], u["n"])
        states[t] = h
    return [states[t] for t in range(len(order))]


def encode_sequence(tape: Tape, store: ParameterStore, encoder: str,
                    token_ids: np.ndarray) -> Var:
    """Bidirectional recurrent encoding; row t is [forward_t; backward_t]."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("cannot encode an empty token sequence")
    table = tape.param("embed.word", store.get("embed.word"))
    embedded = ad.take_rows(table, ids)
    t = ids.size
    fwd = _gru_direction(tape, store, f"{encoder}.fwd", embedded, list(range(t)))
    bwd = _gru_direction(tape, store, f"{encoder}.bwd", embedded,
                         list(range(t - 1, -1, -1)))
    if t == 1:
        return ad.concat([fwd[0], bwd[0]], axis=1)
    return ad.concat([ad.concat(fwd, axis=0), ad.concat(bwd, axis=0)], axis=1)


def phrase_pool(states: Var, span: tuple[int, int]) -> Var:
    """Average of the word states across a [start, end) span; (1,D)."""
    start, end = span
    if end <= start:
        raise ValueError(f"empty span {span}")
    return ad.mean_rows(ad.take_rows(states, list(range(start, end))))


def object_spatial_features(tape: Tape, store: ParameterStore, cfg: Config,
                            coord_map: np.ndarray, boxes: np.ndarray) -> Var:
    """RoI-sample the coordinate map inside each box and embed to d_s."""
    cell = cfg.canvas_size / cfg.coord_map_size
    samples = kernels.roi_grid_samples(np.ascontiguousarray(coord_map),
                                       np.ascontiguousarray(boxes, dtype=np.float64),
                                       cell, cfg.roi_resolution)
    return mlp_forward(tape, store, "spat", tape.leaf(samples))


def union_mask_features(tape: Tape, store: ParameterStore, cfg: Config,
                        boxes_i: np.ndarray, boxes_j: np.ndarray) -> Var:
    """Two-channel pair masks resized to mask_size, embedded to d_s."""
    masks = kernels.rasterize_pair_masks(
        np.ascontiguousarray(boxes_i, dtype=np.float64),
        np.ascontiguousarray(boxes_j, dtype=np.float64),
        cfg.canvas_size, cfg.canvas_size, cfg.mask_raster_size, cfg.mask_size)
    return mlp_forward(tape, store, "umask", tape.leaf(masks))


def fuse_object_features(tape: Tape, store: ParameterStore,
                         appearance: Var, spatial: Var) -> Var:
    """Object representation from [appearance; spatial] through the fusion net."""
    return mlp_forward(tape, store, "vf", ad.concat([appearance, spatial], axis=1))


def fuse_union_features(tape: Tape, store: ParameterStore,
                        appearance: Var, spatial: Var) -> Var:
    """Visual relation feature from [pair appearance; pair geometry]."""
    return mlp_forward(tape, store, "uf", ad.concat([appearance, spatial], axis=1))


def relation_phrase_feature(tape: Tape, store: ParameterStore, vocab: Vocab,
                            sentence_states: Var | None, relation) -> Var:
    """Encode one relation edge's text.

    A [start, end) span pools the relation-encoder states of the sentence; a
    synthetic relation word (e.g. recalled "wear"/"have") is encoded standalone
    with the same recurrent cell and pooled over its tokens.
    """
    if isinstance(relation, str):
        words = relation.split()
        if not words:
            raise ValueError("empty relation text")
        states = encode_sequence(tape, store, "gru_r", vocab.encode(words))
        return phrase_pool(states, (0, len(words)))
    start, end = relation
    if sentence_states is None:
        raise ValueError("span relation needs the relation-encoded sentence")
    return phrase_pool(sentence_states, (start, end))
