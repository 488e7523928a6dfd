"""Losses, SGD with milestone decay, and the two-stage training schedule.

Stage 1 trains the encoders, phrase graph network and pruning heads with the
phrase matching/regression loss over all proposals. Stage 2 unfreezes the
whole model and adds the graph-matching node/edge losses on the pruned sets.
Top-k selection is treated as non-differentiable: gradients flow through the
selected candidates' features and scores only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var
from .config import Config
from .data import GroundingSample
from .encoders import Vocab
from .geometry import Box, edge_soft_labels, encode_offsets, node_soft_labels
from .params import ParameterStore, init_parameter_store, is_bias, stage1_names
from .pipeline import ForwardState, GroundingModel


def soft_ce_loss(logits: np.ndarray, target: np.ndarray) -> float:
    """Cross entropy of a soft target against softmax(logits)."""
    logits = np.asarray(logits, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if logits.shape != target.shape:
        raise ValueError(f"length mismatch: {logits.shape} vs {target.shape}")
    shifted = logits - logits.max()
    logp = shifted - np.log(np.exp(shifted).sum())
    return float(-(target * logp).sum())


def smooth_l1(delta: np.ndarray, target: np.ndarray) -> float:
    """Summed per-coordinate smooth-L1 between two offset vectors."""
    e = np.asarray(delta, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    ae = np.abs(e)
    return float(np.where(ae < 1.0, 0.5 * e * e, ae - 0.5).sum())


def _phrase_matching_terms(tape: Tape, state: ForwardState, cfg: Config) -> Var:
    """L^p_mat + lambda1 * L^p_reg over all proposals, summed over phrases."""
    sample = state.sample
    boxes = sample.proposal_boxes
    m = boxes.shape[0]
    total: Var | None = None
    for i, pf in enumerate(state.phrases):
        gt = Box.from_array(sample.phrases[i].gt_box)
        labels = node_soft_labels(boxes, gt, cfg.iou_label_threshold).weights
        term = ad.soft_cross_entropy(ad.reshape(pf.logits, (1, m)), labels)
        positives = np.nonzero(labels > 0)[0]
        if cfg.lambda_p_reg > 0 and positives.size:
            targets = encode_offsets(boxes[positives],
                                     np.tile(sample.phrases[i].gt_box,
                                             (positives.size, 1)))
            pred = ad.take_rows(pf.offsets, positives)
            reg = ad.sum_all(ad.smooth_l1_rows(pred, targets))
            term = ad.add(term, ad.scale(reg, cfg.lambda_p_reg / positives.size))
        total = term if total is None else ad.add(total, term)
    assert total is not None
    return total


def stage1_loss(tape: Tape, state: ForwardState, cfg: Config) -> Var:
    return _phrase_matching_terms(tape, state, cfg)


def stage2_loss(tape: Tape, state: ForwardState, cfg: Config) -> Var:
    """Joint loss: stage-1 terms plus node/edge matching and second regression."""
    total = _phrase_matching_terms(tape, state, cfg)
    sample = state.sample
    if state.node_sims is not None:
        k = state.k
        for i, sim in enumerate(state.node_sims):
            refined = state.phrases[i].pruned.boxes
            gt = Box.from_array(sample.phrases[i].gt_box)
            labels = node_soft_labels(refined, gt, cfg.iou_label_threshold).weights
            if cfg.lambda_g_mat > 0:
                ce = ad.soft_cross_entropy(ad.reshape(sim.logits, (1, k)), labels)
                total = ad.add(total, ad.scale(ce, cfg.lambda_g_mat))
            positives = np.nonzero(labels > 0)[0]
            if cfg.lambda_g_reg > 0 and positives.size:
                targets = encode_offsets(refined[positives],
                                         np.tile(sample.phrases[i].gt_box,
                                                 (positives.size, 1)))
                pred = ad.take_rows(sim.offsets, positives)
                reg = ad.sum_all(ad.smooth_l1_rows(pred, targets))
                total = ad.add(total,
                               ad.scale(reg, cfg.lambda_g_reg / positives.size))
    if state.edge_sims and cfg.lambda_r_mat > 0:
        k = state.k
        k_idx = np.repeat(np.arange(k), k)
        l_idx = np.tile(np.arange(k), k)
        for e, (i, j) in enumerate(state.edge_pairs):
            first = state.phrases[i].pruned.boxes[k_idx]
            second = state.phrases[j].pruned.boxes[l_idx]
            gt_i = Box.from_array(sample.phrases[i].gt_box)
            gt_j = Box.from_array(sample.phrases[j].gt_box)
            labels = edge_soft_labels((first, second), (gt_i, gt_j),
                                      cfg.iou_label_threshold).weights
            ce = ad.soft_cross_entropy(
                ad.reshape(state.edge_sims[e].logits, (1, k * k)), labels)
            total = ad.add(total, ad.scale(ce, cfg.lambda_r_mat))
    return total


class SGDOptimizer:
    """SGD with momentum, weight decay (biases exempt), and milestone decay.

    v <- mu*v - lr*(g + wd*theta); theta <- theta + v. The learning rate is
    multiplied by the decay factor at each milestone iteration.
    """

    def __init__(self, store: ParameterStore, names: list[str], cfg: Config,
                 total_iters: int, milestones: tuple[int, ...] | None = None):
        self.store = store
        self.names = list(names)
        self.cfg = cfg
        if milestones is None:
            milestones = cfg.milestones or (total_iters // 3, 2 * total_iters // 3)
        self.milestones = tuple(sorted(m for m in milestones if m > 0))
        self.velocity = {n: np.zeros_like(store.get(n)) for n in self.names}

    def learning_rate(self, iteration: int) -> float:
        passed = sum(1 for m in self.milestones if iteration >= m)
        return self.cfg.learning_rate * (self.cfg.decay_factor ** passed)

    def step(self, grads: dict[str, np.ndarray], iteration: int) -> None:
        lr = self.learning_rate(iteration)
        mu = self.cfg.momentum
        wd = self.cfg.weight_decay
        for name in self.names:
            theta = self.store.get(name)
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(theta)
            if wd > 0 and not is_bias(name):
                g = g + wd * theta
            v = mu * self.velocity[name] - lr * g
            self.velocity[name] = v
            self.store.tensors[name] = theta + v


def _run_stage(model: GroundingModel, samples: list[GroundingSample],
               names: list[str], loss_fn, iters: int, cfg: Config,
               rng: np.random.Generator, callback=None, stage: int = 1) -> None:
    if iters <= 0 or not samples:
        return
    optimizer = SGDOptimizer(model.store, names, cfg, iters)
    batch = max(1, cfg.batch_size)
    for it in range(iters):
        idx = rng.integers(0, len(samples), size=batch)
        grads: dict[str, np.ndarray] = {}
        loss_total = 0.0
        for s in idx:
            tape = Tape()
            state = model.forward(samples[s], tape)
            loss = loss_fn(tape, state, cfg)
            value = float(loss.value)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"training diverged: non-finite loss at stage {stage} "
                    f"iteration {it}")
            loss_total += value
            tape.backward(loss)
            for name, g in tape.param_grads().items():
                if name in grads:
                    grads[name] += g
                else:
                    grads[name] = g.copy()
        inv = 1.0 / batch
        for name in grads:
            grads[name] *= inv
        optimizer.step(grads, it)
        if callback is not None:
            callback(stage, it, loss_total / batch)


def train_two_stage(samples: list[GroundingSample], cfg: Config, vocab: Vocab,
                    store: ParameterStore | None = None, callback=None,
                    ) -> ParameterStore:
    """Two-stage schedule; stage-2 components train only when pruning is on."""
    if not samples:
        raise ValueError("training set is empty")
    if store is None:
        store = init_parameter_store(cfg, len(vocab))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5EED]))

    stage1_cfg = replace(cfg, use_pp=False, use_vogn=False, use_sp=False)
    stage1_model = GroundingModel(store, stage1_cfg, vocab)
    _run_stage(stage1_model, samples, stage1_names(store), stage1_loss,
               cfg.stage1_iters, cfg, rng, callback, stage=1)

    if cfg.use_pp:
        stage2_model = GroundingModel(store, cfg, vocab)
        _run_stage(stage2_model, samples, store.names(), stage2_loss,
                   cfg.stage2_iters, cfg, rng, callback, stage=2)
    else:
        # no second-stage heads without pruning: same loss, same budget
        _run_stage(stage1_model, samples, stage1_names(store), stage1_loss,
                   cfg.stage2_iters, cfg, rng, callback, stage=2)
    store.validate_finite()
    return store
