"""Ablation runner: one trained and evaluated row per component configuration.

All rows share the generated splits and the parameter init seed. Structured
prediction is inference-only, so the SP row reuses the weights of the row
trained with the same components; its beta is grid-searched on the validation
set first.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

from .config import CATEGORIES, Config
from .data import GroundingSample
from .encoders import Vocab
from .evaluation import EvalReport, evaluate_scored, score_samples
from .matcher import calibrate_beta
from .params import ParameterStore
from .pipeline import GroundingModel
from .synthworld import build_vocabulary
from .trainer import train_two_stage


@dataclass(frozen=True)
class AblationRowSpec:
    name: str
    pgn: bool = True
    pp: bool = True
    vogn: bool = True
    sp: bool = True
    phrase_rel: bool = True
    visual_rel: bool = True
    top_k: int | None = None


MAIN_ROWS = (
    AblationRowSpec("baseline", pgn=False, pp=False, vogn=False, sp=False),
    AblationRowSpec("+pgn", pgn=True, pp=False, vogn=False, sp=False),
    AblationRowSpec("+pgn+pp", pgn=True, pp=True, vogn=False, sp=False),
    AblationRowSpec("+pgn+pp+vogn", pgn=True, pp=True, vogn=True, sp=False),
    AblationRowSpec("full", pgn=True, pp=True, vogn=True, sp=True),
)

RELATION_ROWS = (
    AblationRowSpec("full w/o phrase relation feature", phrase_rel=False),
    AblationRowSpec("full w/o visual relation feature", visual_rel=False),
)


def k_sweep_rows(k_values=(2, 5, 10)) -> tuple[AblationRowSpec, ...]:
    return tuple(AblationRowSpec(f"full K={k}", top_k=k) for k in k_values)


def _row_config(cfg: Config, row: AblationRowSpec) -> Config:
    return replace(
        cfg,
        use_pgn=row.pgn,
        use_pp=row.pp,
        use_vogn=row.vogn,
        use_sp=row.sp,
        use_phrase_relation_feature=row.phrase_rel,
        use_visual_relation_feature=row.visual_rel,
        top_k=row.top_k if row.top_k is not None else cfg.top_k,
    )


def _train_key(row: AblationRowSpec, cfg: Config) -> tuple:
    # SP changes inference only; everything else changes the trained model
    return (row.pgn, row.pp, row.vogn, row.phrase_rel, row.visual_rel,
            row.top_k if row.top_k is not None else cfg.top_k)


def run_ablation(datasets: dict[str, list[GroundingSample]], cfg: Config,
                 rows=MAIN_ROWS, log=None) -> list[EvalReport]:
    """Train and evaluate every row on the validation split."""
    vocab = Vocab(build_vocabulary())
    trained: dict[tuple, ParameterStore] = {}
    reports: list[EvalReport] = []
    for row in rows:
        row_cfg = _row_config(cfg, row)
        key = _train_key(row, cfg)
        if key not in trained:
            if log:
                log(f"training {row.name} ...")
            trained[key] = train_two_stage(datasets["train"], row_cfg, vocab)
        model = GroundingModel(trained[key], row_cfg, vocab)
        scored = score_samples(model, datasets["val"])
        if row.sp:
            beta_star, _grid = calibrate_beta(scored, cfg.beta_grid_step,
                                              cfg.sp_max_phrases)
            report = evaluate_scored(scored, row_cfg, row.name, beta=beta_star,
                                     use_sp=True)
        else:
            report = evaluate_scored(scored, row_cfg, row.name, use_sp=False)
        if log:
            log(f"{row.name}: recall@1 = {report.recall_at_1:.2f} "
                f"(beta={report.beta:g}, K={report.top_k})")
        reports.append(report)
    return reports


def write_report_csv(reports: list[EvalReport], path: str) -> None:
    columns = ["config", "pgn", "pp", "vogn", "sp", "K", "beta",
               "recall_at_1", *CATEGORIES]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for report in reports:
            writer.writerow(report.row())
