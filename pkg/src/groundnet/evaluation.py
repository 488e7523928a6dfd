"""Recall@1 evaluation and per-category accuracy reports."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config import CATEGORIES, Config
from .data import GroundingSample
from .matcher import MatchInstance, ScoredSample
from .pipeline import GroundingModel

IOU_CORRECT = 0.5


@dataclass
class EvalReport:
    name: str
    recall_at_1: float                   # percent
    hits: int
    phrase_count: int
    per_category: dict[str, float]       # percent, only categories present
    category_counts: dict[str, int]
    beta: float = 0.0
    top_k: int = 0
    toggles: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {
            "config": self.name,
            "pgn": int(self.toggles.get("pgn", True)),
            "pp": int(self.toggles.get("pp", True)),
            "vogn": int(self.toggles.get("vogn", True)),
            "sp": int(self.toggles.get("sp", True)),
            "K": self.top_k,
            "beta": self.beta,
            "recall_at_1": round(self.recall_at_1, 2),
        }
        for cat in CATEGORIES:
            out[cat] = round(self.per_category.get(cat, float("nan")), 2)
        return out


def score_samples(model: GroundingModel, samples: list[GroundingSample],
                  ) -> list[ScoredSample]:
    """Forward every sample once; the scores are reusable across beta values."""
    out = []
    for sample in samples:
        state = model.forward(sample)
        inst, cand = model.instance_of(state)
        out.append(ScoredSample(inst, cand, sample.gt_array(),
                                [p.category for p in sample.phrases]))
    return out


def evaluate_scored(scored: list[ScoredSample], cfg: Config, name: str,
                    beta: float | None = None, use_sp: bool | None = None,
                    ) -> EvalReport:
    from .matcher import solve_assignment

    use_sp = cfg.use_sp if use_sp is None else use_sp
    beta = cfg.beta if beta is None else beta
    hits = 0
    total = 0
    cat_hits: dict[str, int] = {}
    cat_total: dict[str, int] = {}
    for sample in scored:
        inst = sample.instance
        if use_sp and inst.edge_index.size:
            inst = MatchInstance(inst.node_scores, inst.edge_index,
                                 inst.edge_scores, beta)
            choice = solve_assignment(inst, cfg.sp_max_phrases)
        else:
            choice = np.argmax(inst.node_scores, axis=1)
        for i, category in enumerate(sample.categories):
            box = sample.candidate_boxes[i, choice[i]][None, :]
            gt = sample.gt_boxes[i][None, :]
            ok = bool(kernels.iou_matrix(box, gt)[0, 0] >= IOU_CORRECT)
            hits += ok
            total += 1
            cat_hits[category] = cat_hits.get(category, 0) + ok
            cat_total[category] = cat_total.get(category, 0) + 1
    per_category = {cat: 100.0 * cat_hits.get(cat, 0) / n
                    for cat, n in cat_total.items()}
    return EvalReport(
        name=name,
        recall_at_1=100.0 * hits / total if total else 0.0,
        hits=hits,
        phrase_count=total,
        per_category=per_category,
        category_counts=cat_total,
        beta=beta if use_sp else 0.0,
        top_k=cfg.top_k,
        toggles={"pgn": cfg.use_pgn, "pp": cfg.use_pp,
                 "vogn": cfg.use_vogn, "sp": use_sp},
    )


def evaluate_model(model: GroundingModel, samples: list[GroundingSample],
                   name: str = "model", beta: float | None = None) -> EvalReport:
    scored = score_samples(model, samples)
    return evaluate_scored(scored, model.cfg, name, beta)
