"""Cross-graph similarity scoring and structured assignment solving.

Node similarity fuses the pruning probability with a second match-head score
(both in probability space, product); edge similarity scores each language
relation against its K*K candidate pairs. The assignment maximizing node plus
beta-weighted edge scores is found by exhaustive enumeration for small phrase
counts and falls back to per-phrase argmax otherwise. solve_assignment and
brute_force_oracle are separate implementations of the same objective and
must agree exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tape, Var
from .params import ParameterStore
from .visual_graph import match_head

# phrase counts below this bound are solved exhaustively
DEFAULT_ENUM_THRESHOLD = 6

ORACLE_MAX_BITS = 24.0


class EnumerationCounter:
    """Counts exhaustive-search invocations; the N >= threshold path must
    leave it untouched."""

    def __init__(self):
        self.count = 0

    def increment(self):
        self.count += 1

    def reset(self):
        self.count = 0


ENUMERATIONS = EnumerationCounter()


@dataclass
class MatchInstance:
    node_scores: np.ndarray                 # (N,K) non-negative
    edge_index: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))
    edge_scores: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0)))
    beta: float = 0.0

    def __post_init__(self):
        self.node_scores = np.asarray(self.node_scores, dtype=np.float64)
        self.edge_index = np.asarray(self.edge_index, dtype=np.int64).reshape(-1, 2)
        n, k = self.node_scores.shape
        self.edge_scores = np.asarray(self.edge_scores, dtype=np.float64) \
            .reshape(-1, k, k)
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if not np.all(np.isfinite(self.node_scores)) or np.any(self.node_scores < 0):
            raise ValueError("node scores must be finite and non-negative")
        if self.edge_index.shape[0] != self.edge_scores.shape[0]:
            raise ValueError("edge_index and edge_scores disagree on edge count")
        if self.edge_index.size and (self.edge_index.min() < 0
                                     or self.edge_index.max() >= n):
            raise ValueError("edge endpoints out of range")

    @property
    def num_phrases(self) -> int:
        return self.node_scores.shape[0]

    @property
    def num_candidates(self) -> int:
        return self.node_scores.shape[1]


def node_similarity(tape: Tape, store: ParameterStore, phrase_feat: Var,
                    object_feats: Var, phi_p: Var) -> tuple[Var, Var, Var, Var]:
    """Second-stage node scores for one phrase.

    Returns (fused (1,K), phi_g (1,K), logits (K,1), offsets (K,4)); fused is
    the product of the pruning probability and the softmaxed match-head
    probability, so both stages must rank a candidate highly.
    """
    k = object_feats.value.shape[0]
    logits, offsets = match_head(tape, store, "head_g.cls", "head_g.reg",
                                 phrase_feat, object_feats)
    phi_g = ad.softmax_rows(ad.reshape(logits, (1, k)))
    return ad.mul(phi_p, phi_g), phi_g, logits, offsets


def edge_similarity(tape: Tape, store: ParameterStore, relation_feat: Var,
                    union_feats: Var) -> tuple[Var, Var]:
    """Scores of one relation against its K*K candidate pairs.

    Returns (probs (1,K*K) softmax-normalized, logits (K*K,1)).
    """
    n = union_feats.value.shape[0]
    logits, _ = match_head(tape, store, "head_r.cls", None,
                           relation_feat, union_feats)
    return ad.softmax_rows(ad.reshape(logits, (1, n))), logits


def assignment_objective(inst: MatchInstance, assignment: np.ndarray) -> float:
    """Node-plus-edge objective with the canonical accumulation order."""
    obj = 0.0
    for i in range(inst.num_phrases):
        obj += inst.node_scores[i, assignment[i]]
    for e in range(inst.edge_index.shape[0]):
        a, b = inst.edge_index[e]
        obj += inst.beta * inst.edge_scores[e, assignment[a], assignment[b]]
    return obj


def solve_assignment(inst: MatchInstance,
                     enum_threshold: int = DEFAULT_ENUM_THRESHOLD) -> np.ndarray:
    """MAP assignment under the one-proposal-per-phrase constraint.

    Exhaustive K^N search (lexicographically-smallest tie-break) when the
    phrase count is below the threshold; per-phrase argmax over node scores
    otherwise, without touching the enumeration path.
    """
    if inst.num_phrases < enum_threshold:
        ENUMERATIONS.increment()
        return kernels.enumerate_assignments(inst.node_scores, inst.edge_index,
                                             inst.edge_scores, inst.beta)
    return np.argmax(inst.node_scores, axis=1).astype(np.int64)


def brute_force_oracle(inst: MatchInstance) -> np.ndarray:
    """Independent full enumeration of the same objective, any N within the
    size guard; agrees with solve_assignment exactly on enumerable instances."""
    n, k = inst.node_scores.shape
    if n * np.log2(max(k, 2)) > ORACLE_MAX_BITS:
        raise ValueError(f"instance too large to enumerate: N={n}, K={k}")
    best = None
    best_obj = -float("inf")
    for assignment in itertools.product(range(k), repeat=n):
        obj = 0.0
        for i in range(n):
            obj += float(inst.node_scores[i, assignment[i]])
        for e in range(inst.edge_index.shape[0]):
            a, b = inst.edge_index[e]
            obj += inst.beta * float(inst.edge_scores[e, assignment[a], assignment[b]])
        if obj > best_obj:
            best_obj = obj
            best = assignment
    return np.array(best, dtype=np.int64)


@dataclass
class ScoredSample:
    """Solver-ready scores for one sample, reusable across beta values."""

    instance: MatchInstance
    candidate_boxes: np.ndarray   # (N,K,4) final per-candidate output boxes
    gt_boxes: np.ndarray          # (N,4)
    categories: list[str]


def recall_at_1(samples: list[ScoredSample], beta: float,
                use_sp: bool = True, iou_threshold: float = 0.5,
                enum_threshold: int = DEFAULT_ENUM_THRESHOLD) -> float:
    """Fraction of phrases whose selected box reaches the IoU threshold."""
    hits = 0
    total = 0
    for sample in samples:
        inst = sample.instance
        if use_sp:
            inst = MatchInstance(inst.node_scores, inst.edge_index,
                                 inst.edge_scores, beta)
            choice = solve_assignment(inst, enum_threshold)
        else:
            choice = np.argmax(inst.node_scores, axis=1)
        for i in range(inst.num_phrases):
            box = sample.candidate_boxes[i, choice[i]][None, :]
            gt = sample.gt_boxes[i][None, :]
            hits += bool(kernels.iou_matrix(box, gt)[0, 0] >= iou_threshold)
            total += 1
    return hits / total if total else 0.0


def calibrate_beta(samples: list[ScoredSample], grid_step: float = 0.05,
                   enum_threshold: int = DEFAULT_ENUM_THRESHOLD
                   ) -> tuple[float, list[tuple[float, float]]]:
    """Grid-search beta in [0,1] maximizing Recall@1; ties pick the smaller.

    Returns (beta*, [(beta, recall)] for the whole grid).
    """
    if not samples:
        raise ValueError("validation set is empty")
    if not 0.0 < grid_step <= 1.0:
        raise ValueError("grid step must lie in (0, 1]")
    grid = []
    steps = int(round(1.0 / grid_step))
    best_beta, best_recall = 0.0, -1.0
    for s in range(steps + 1):
        beta = min(s * grid_step, 1.0)
        recall = recall_at_1(samples, beta, enum_threshold=enum_threshold)
        grid.append((beta, recall))
        if recall > best_recall:
            best_beta, best_recall = beta, recall
    return best_beta, grid
