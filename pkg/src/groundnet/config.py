"""Run configuration: model dims, generator knobs, optimizer schedule, ablation toggles.

Loadable from a TOML file of flat key=value pairs (sections allowed, keys are
merged flat), so every dimension, loss weight, optimizer field, data path and
toggle can be pinned outside the code.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CATEGORIES = (
    "people",
    "clothing",
    "bodyparts",
    "animal",
    "vehicles",
    "instruments",
    "scene",
    "other",
)


@dataclass
class Config:
    # model widths (desk-scale defaults; paper-scale values are reachable here)
    feat_dim: int = 32            # D, shared phrase/object width; must be even
    word_dim: int = 32            # word embedding width
    spatial_dim: int = 16         # d_s
    appearance_dim: int = 16      # d_a
    roi_resolution: int = 4       # R_s, RoI sample grid per axis
    coord_map_size: int = 16      # coordinate map H=W
    mask_size: int = 64           # union-mask output resolution (S x S per channel)
    mask_raster_size: int = 64    # rasterization grid before nearest resize to mask_size
    canvas_size: float = 64.0

    # proposal pruning / matching
    num_proposals: int = 20       # M
    top_k: int = 5                # K
    iou_label_threshold: float = 0.5   # tau for soft labels
    sp_max_phrases: int = 6       # exhaustive search only when N < this
    beta: float = 0.3
    beta_grid_step: float = 0.05

    # loss weights
    lambda_p_reg: float = 0.1     # lambda1
    lambda_g_mat: float = 1.0     # lambda2
    lambda_r_mat: float = 1.0     # lambda3
    lambda_g_reg: float = 0.1     # lambda4

    # optimizer / schedule
    learning_rate: float = 5e-2
    momentum: float = 0.9
    weight_decay: float = 1e-4
    decay_factor: float = 0.1
    batch_size: int = 8
    stage1_iters: int = 2000
    stage2_iters: int = 4000
    milestones: tuple[int, ...] = ()   # empty = thirds of the stage totals
    seed: int = 0

    # synthetic world
    train_scenes: int = 2000
    val_scenes: int = 500
    test_scenes: int = 500
    min_objects: int = 3
    max_objects: int = 6
    min_phrases: int = 2
    max_phrases: int = 5
    ambiguity_rate: float = 0.7
    multi_object_rate: float = 0.1
    relation_mention_rate: float = 0.75
    appearance_noise: float = 0.25
    parse_edge_drop: float = 0.1
    parse_node_drop: float = 0.05
    parse_span_jitter: float = 0.05
    jitter_iou_low: float = 0.5
    jitter_iou_high: float = 0.95
    data_seed: int = 20240101
    train_dir: str = "data"

    # ablation toggles
    use_pgn: bool = True
    use_pp: bool = True
    use_vogn: bool = True
    use_sp: bool = True
    use_phrase_relation_feature: bool = True   # x^c_r in PGN messages
    use_visual_relation_feature: bool = True   # x^c_u in VOGN messages

    def __post_init__(self):
        if self.feat_dim % 2:
            raise ValueError("feat_dim must be even (split across GRU directions)")
        if not 0.0 < self.iou_label_threshold < 1.0:
            raise ValueError("iou_label_threshold must lie in (0, 1)")
        if self.top_k > self.num_proposals:
            raise ValueError("top_k cannot exceed num_proposals")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must lie in (0, 1)")
        for name in ("lambda_p_reg", "lambda_g_mat", "lambda_r_mat", "lambda_g_reg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def hidden_dim(self) -> int:
        return self.feat_dim // 2

    def with_toggles(self, *, pgn: bool | None = None, pp: bool | None = None,
                     vogn: bool | None = None, sp: bool | None = None) -> "Config":
        kw = {}
        if pgn is not None:
            kw["use_pgn"] = pgn
        if pp is not None:
            kw["use_pp"] = pp
        if vogn is not None:
            kw["use_vogn"] = vogn
        if sp is not None:
            kw["use_sp"] = sp
        return replace(self, **kw)


def _flatten(tree: dict, out: dict) -> dict:
    for key, value in tree.items():
        if isinstance(value, dict):
            _flatten(value, out)
        else:
            out[key] = value
    return out


def load_config(path: str | None = None, overrides: dict | None = None) -> Config:
    """Build a Config from an optional TOML file plus explicit overrides."""
    raw: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            _flatten(tomllib.load(fh), raw)
    if overrides:
        raw.update(overrides)
    known = {f.name for f in fields(Config)}
    unknown = set(raw) - known
    if unknown:
        raise KeyError(f"unknown config keys: {sorted(unknown)}")
    if "milestones" in raw:
        raw["milestones"] = tuple(raw["milestones"])
    return Config(**raw)
