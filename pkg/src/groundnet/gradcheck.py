"""Central finite-difference verification of every parameterized operation.

Each registered check builds a small instance of one op (or a whole stage
loss), scalarizes its outputs with fixed random weights, and compares the
tape gradients against central differences at several random parameter
points. Large tensors are checked on a seeded subset of coordinates to keep
the run fast; small tensors are checked exhaustively.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .config import Config
from .encoders import Vocab, encode_sequence, mlp_forward
from .graphnets import propagate
from .params import ParameterStore, init_parameter_store, parameter_shapes
from .pipeline import GroundingModel
from .synthworld import build_vocabulary, generate_scene, render_sample
from .trainer import stage1_loss, stage2_loss
from .visual_graph import match_head

FD_STEP = 1e-5
REL_FLOOR = 1e-8

LossFn = Callable[[ParameterStore, bool], tuple[float, dict | None]]


def _subset_store(cfg: Config, vocab_size: int, seed: int,
                  prefixes: tuple[str, ...]) -> ParameterStore:
    full = init_parameter_store(cfg, vocab_size, seed=seed)
    keep = {name: t for name, t in full.tensors.items()
            if name.startswith(prefixes)}
    return ParameterStore(keep)


def _weights_like(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=shape)


def _tiny_config(**overrides) -> Config:
    base = dict(
        feat_dim=6, word_dim=5, spatial_dim=4, appearance_dim=4,
        roi_resolution=2, coord_map_size=5, mask_size=4, mask_raster_size=4,
        num_proposals=6, top_k=2, min_objects=3, max_objects=4,
        min_phrases=2, max_phrases=3, ambiguity_rate=1.0, multi_object_rate=0.0,
        parse_edge_drop=0.0, parse_node_drop=0.0, parse_span_jitter=0.0,
    )
    base.update(overrides)
    return Config(**base)


# ---------------------------------------------------------------------------
# case builders: seed -> (store, loss_fn)

def _case_mlp(seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    store = ParameterStore({
        "mlp.l0.W": _weights_like(rng, (5, 4)),
        "mlp.l0.b": _weights_like(rng, (4,)),
        "mlp.l1.W": _weights_like(rng, (4, 3)),
        "mlp.l1.b": _weights_like(rng, (3,)),
    })
    x = _weights_like(rng, (2, 5))
    w = _weights_like(rng, (2, 3))

    def loss_fn(store: ParameterStore, need_grads: bool):
        tape = Tape(record=need_grads)
        out = mlp_forward(tape, store, "mlp", tape.leaf(x))
        loss = ad.sum_all(ad.mul(out, w))
        if not need_grads:
            return float(loss.value), None
        tape.backward(loss)
        return float(loss.value), tape.param_grads()

    return store, loss_fn


def _case_gru(seed: int, length: int):
    cfg = _tiny_config()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2, length]))
    store = _subset_store(cfg, 9, seed, ("embed.", "gru_p."))
    ids = rng.integers(0, 9, size=length)
    w = _weights_like(rng, (length, cfg.feat_dim))

    def loss_fn(store: ParameterStore, need_grads: bool):
        tape = Tape(record=need_grads)
        states = encode_sequence(tape, store, "gru_p", ids)
        loss = ad.sum_all(ad.mul(states, w))
        if not need_grads:
            return float(loss.value), None
        tape.backward(loss)
        return float(loss.value), tape.param_grads()

    return store, loss_fn


def _case_match_head(seed: int):
    cfg = _tiny_config()
    d = cfg.feat_dim
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    store = _subset_store(cfg, 9, seed, ("head_p.",))
    a = _weights_like(rng, (1, d))
    b = _weights_like(rng, (4, d))
    wl = _weights_like(rng, (4, 1))
    wo = _weights_like(rng, (4, 4))

    def loss_fn(store: ParameterStore, need_grads: bool):
        tape = Tape(record=need_grads)
        logits, offsets = match_head(tape, store, "head_p.cls", "head_p.reg",
                                     tape.leaf(a), tape.leaf(b))
        loss = ad.add(ad.sum_all(ad.mul(logits, wl)),
                      ad.sum_all(ad.mul(offsets, wo)))
        if not need_grads:
            return float(loss.value), None
        tape.backward(loss)
        return float(loss.value), tape.param_grads()

    return store, loss_fn


def _case_propagate(seed: int, edge_prefix: str, node_prefix: str,
                    num_nodes: int, edges: list[tuple[int, int]]):
    cfg = _tiny_config()
    d = cfg.feat_dim
    rng = np.random.default_rng(np.random.SeedSequence([seed, 4, num_nodes]))
    store = _subset_store(cfg, 9, seed, (edge_prefix, node_prefix))
    nodes = [_weights_like(rng, (1, d)) for _ in range(num_nodes)]
    feats = [_weights_like(rng, (1, d)) for _ in edges]
    w_nodes = [_weights_like(rng, (1, d)) for _ in range(num_nodes)]
    w_edges = [_weights_like(rng, (1, d)) for _ in edges]

    def loss_fn(store: ParameterStore, need_grads: bool):
        tape = Tape(record=need_grads)
        node_vars = [tape.leaf(v) for v in nodes]
        edge_vars = [tape.leaf(v) for v in feats]
        new_nodes, new_edges, _ = propagate(tape, store, edge_prefix.rstrip("."),
                                            node_prefix.rstrip("."), node_vars,
                                            edges, edge_vars)
        loss = None
        for var, w in zip(new_nodes + new_edges, w_nodes + w_edges):
            term = ad.sum_all(ad.mul(var, w))
            loss = term if loss is None else ad.add(loss, term)
        if not need_grads:
            return float(loss.value), None
        tape.backward(loss)
        return float(loss.value), tape.param_grads()

    return store, loss_fn


def _case_soft_ce(seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 5]))
    store = ParameterStore({"lin.l0.W": _weights_like(rng, (3, 5)),
                            "lin.l0.b": _weights_like(rng, (5,))})
    x = _weights_like(rng, (1, 3))
    target = rng.uniform(0.05, 1.0, size=5)
    target /= target.sum()

    def loss_fn(store: ParameterStore, need_grads: bool):
        tape = Tape(record=need_grads)
        logits = mlp_forward(tape, store, "lin", tape.leaf(x))
        loss = ad.soft_cross_entropy(logits, target)
        if not need_grads:
            return float(loss.value), None
        tape.backward(loss)
        return float(loss.value), tape.param_grads()

    return store, loss_fn


def _case_smooth_l1(seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 6]))
    store = ParameterStore({"lin.l0.W": _weights_like(rng, (3, 4)),
                            "lin.l0.b": _weights_like(rng, (4,))})
    x = _weights_like(rng, (3, 3))
    target = rng.uniform(-2.0, 2.0, size=(3, 4))

    def loss_fn(store: ParameterStore, need_grads: bool):
        tape = Tape(record=need_grads)
        pred = mlp_forward(tape, store, "lin", tape.leaf(x))
        loss = ad.sum_all(ad.smooth_l1_rows(pred, target))
        if not need_grads:
            return float(loss.value), None
        tape.backward(loss)
        return float(loss.value), tape.param_grads()

    return store, loss_fn


def _case_stage(seed: int, stage: int):
    cfg = _tiny_config(data_seed=seed + 17, seed=seed)
    if stage == 1:
        cfg = replace(cfg, use_pp=False, use_vogn=False, use_sp=False)
    vocab = Vocab(build_vocabulary())
    sample = render_sample(generate_scene(0, cfg), cfg)
    store = init_parameter_store(cfg, len(vocab), seed=seed)
    loss_of = stage1_loss if stage == 1 else stage2_loss

    def loss_fn(store: ParameterStore, need_grads: bool):
        tape = Tape(record=need_grads)
        model = GroundingModel(store, cfg, vocab)
        state = model.forward(sample, tape)
        loss = loss_of(tape, state, cfg)
        if not need_grads:
            return float(loss.value), None
        tape.backward(loss)
        return float(loss.value), tape.param_grads()

    return store, loss_fn


REGISTRY: dict[str, Callable[[int], tuple[ParameterStore, LossFn]]] = {
    "mlp": _case_mlp,
    "gru_cell": lambda seed: _case_gru(seed, 1),
    "bigru": lambda seed: _case_gru(seed, 4),
    "match_head": _case_match_head,
    "pgn": lambda seed: _case_propagate(seed, "pgn_e.", "pgn_p.", 3,
                                        [(0, 1), (2, 1)]),
    "vogn": lambda seed: _case_propagate(seed, "vogn_e.", "vogn_o.", 4,
                                         [(0, 2), (0, 3), (1, 2), (1, 3)]),
    "soft_ce": _case_soft_ce,
    "smooth_l1": _case_smooth_l1,
    "stage1_loss": lambda seed: _case_stage(seed, 1),
    "stage2_loss": lambda seed: _case_stage(seed, 2),
}

# whole-pipeline checks subsample coordinates harder to bound the runtime
_COORD_BUDGET = {"stage1_loss": 40, "stage2_loss": 40}


def check_op(name: str, seed: int = 0, points: int = 5,
             step: float = FD_STEP) -> dict[str, float]:
    """Max relative error per tensor across random parameter points."""
    if name not in REGISTRY:
        raise KeyError(f"unknown gradcheck op {name!r}; "
                       f"known: {sorted(REGISTRY)}")
    budget = _COORD_BUDGET.get(name, 200)
    worst: dict[str, float] = {}
    for point in range(points):
        store, loss_fn = REGISTRY[name](seed * 1000 + point)
        _, grads = loss_fn(store, True)
        coord_rng = np.random.default_rng(
            np.random.SeedSequence([seed, point, 0xC0]))
        for tname in store.names():
            flat = store.tensors[tname].ravel()
            n = flat.size
            if n <= budget:
                coords = np.arange(n)
            else:
                coords = coord_rng.choice(n, size=budget, replace=False)
            grad = grads.get(tname)
            analytic_flat = grad.ravel() if grad is not None \
                else np.zeros_like(flat)   # tensor untouched by this loss
            for c in coords:
                orig = flat[c]
                flat[c] = orig + step
                f_plus, _ = loss_fn(store, False)
                flat[c] = orig - step
                f_minus, _ = loss_fn(store, False)
                flat[c] = orig
                numeric = (f_plus - f_minus) / (2.0 * step)
                analytic = analytic_flat[c]
                rel = abs(analytic - numeric) / max(abs(analytic),
                                                    abs(numeric), REL_FLOOR)
                if rel > worst.get(tname, 0.0):
                    worst[tname] = rel
    return worst


def check_all(seed: int = 0, points: int = 5) -> dict[str, dict[str, float]]:
    return {name: check_op(name, seed, points) for name in REGISTRY}
