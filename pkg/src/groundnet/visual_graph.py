"""Language-guided proposal pruning, visual scene-graph construction, and the
visual object graph network.

Pruning scores every phrase/proposal pair with a joint match head, keeps the
top K by logit, applies the predicted offsets, and recomputes geometry-derived
features for the refined boxes (appearance stays with the source proposal).
Visual edges mirror language edges: each relation (i,j) induces K*K edges
between the pruned sets, carrying fused union-mask features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import graphnets
from .autodiff import Tape, Var
from .config import Config
from .encoders import (fuse_object_features, fuse_union_features, mlp_forward,
                       object_spatial_features, union_mask_features)
from .geometry import clip_boxes_to_canvas, decode_offsets
from .params import ParameterStore

EDGE_NET = "vogn_e"
NODE_NET = "vogn_o"


def match_head(tape: Tape, store: ParameterStore, cls_prefix: str,
               reg_prefix: str | None, a: Var, b: Var) -> tuple[Var, Var | None]:
    """Joint scoring of feature pairs via [a; b; a*b; |a-b|].

    `a` may be a single row matched against every row of `b`. Returns a
    (n,1) logit column and, when reg_prefix is given, (n,4) offsets.
    """
    n = b.value.shape[0]
    if a.value.shape[0] == 1 and n > 1:
        a = ad.tile_rows(a, n)
    if a.value.shape != b.value.shape:
        raise ValueError(f"match head operands disagree: {a.value.shape} vs {b.value.shape}")
    joint = ad.concat([a, b, ad.mul(a, b), ad.absolute(ad.sub(a, b))], axis=1)
    logits = mlp_forward(tape, store, cls_prefix, joint)
    offsets = mlp_forward(tape, store, reg_prefix, joint) if reg_prefix else None
    return logits, offsets


@dataclass
class PrunedProposals:
    """Per-phrase pruning outcome (boxes are detached constants)."""

    indices: np.ndarray       # (K,) source proposal indices, score-descending
    boxes: np.ndarray         # (K,4) refined, clipped to the canvas
    all_logits: Var           # (M,1) pruning logits over every proposal
    all_offsets: Var          # (M,4) offsets over every proposal
    phi_p: Var                # (1,K) softmax of the kept logits
    features: Var             # (K,D) fused features of the refined boxes
    appearance: np.ndarray    # (K,d_a) appearance rows carried from the source


def prune_proposals(tape: Tape, store: ParameterStore, cfg: Config,
                    coord_map: np.ndarray, phrase_feat: Var,
                    proposal_boxes: np.ndarray, proposal_feats: Var,
                    proposal_appearance: np.ndarray, k: int) -> PrunedProposals:
    """Keep the top-k proposals for one phrase and refine their geometry."""
    m = proposal_boxes.shape[0]
    if k > m:
        raise ValueError(f"cannot keep {k} of {m} proposals")
    logits, offsets = match_head(tape, store, "head_p.cls", "head_p.reg",
                                 phrase_feat, proposal_feats)
    order = np.argsort(-logits.value[:, 0], kind="stable")
    idx = order[:k]

    kept = ad.take_rows(logits, idx)
    phi_p = ad.softmax_rows(ad.reshape(kept, (1, k)))

    refined = decode_offsets(offsets.value[idx], proposal_boxes[idx], clamp=True)
    refined = clip_boxes_to_canvas(refined, cfg.canvas_size, cfg.canvas_size)
    spatial = object_spatial_features(tape, store, cfg, coord_map, refined)
    appearance = proposal_appearance[idx]
    features = fuse_object_features(tape, store, tape.leaf(appearance), spatial)
    return PrunedProposals(idx, refined, logits, offsets, phi_p, features, appearance)


@dataclass
class VisualGraph:
    """Pruned per-phrase nodes plus relation-induced edges."""

    pruned: list[PrunedProposals]
    lang_edges: list[tuple[int, int]]
    edge_blocks: list[Var]        # per language edge, (K*K, D), row = k*K + l
    k: int

    @property
    def num_phrases(self) -> int:
        return len(self.pruned)


def build_visual_graph(tape: Tape, store: ParameterStore, cfg: Config,
                       pruned: list[PrunedProposals],
                       lang_edges: list[tuple[int, int]], k: int) -> VisualGraph:
    """Induce K*K visual edges per language edge and compute their features.

    The pair appearance surrogate is the mean of the endpoint appearance
    vectors; geometry comes from the two-channel union mask.
    """
    k_idx = np.repeat(np.arange(k), k)
    l_idx = np.tile(np.arange(k), k)
    blocks: list[Var] = []
    for (i, j) in lang_edges:
        boxes_i = pruned[i].boxes[k_idx]
        boxes_j = pruned[j].boxes[l_idx]
        pair_appearance = 0.5 * (pruned[i].appearance[k_idx]
                                 + pruned[j].appearance[l_idx])
        spatial = union_mask_features(tape, store, cfg, boxes_i, boxes_j)
        blocks.append(fuse_union_features(tape, store,
                                          tape.leaf(pair_appearance), spatial))
    return VisualGraph(pruned, list(lang_edges), blocks, k)


def vogn_edge_update(tape: Tape, store: ParameterStore,
                     x_oik: Var, x_ojl: Var, x_u: Var) -> Var:
    """Residual refinement of one (or a batch of) visual relation features."""
    return graphnets.edge_update(tape, store, EDGE_NET, x_oik, x_ojl, x_u)


@dataclass
class VOGNResult:
    node_rows: list[Var]          # flat (1,D) rows, index = phrase*K + slot
    edge_blocks: list[Var]        # refined (K*K, D) per language edge
    attention: dict[int, np.ndarray]

    def node_block(self, phrase: int, k: int) -> Var:
        rows = self.node_rows[phrase * k:(phrase + 1) * k]
        return ad.concat(rows, axis=0) if len(rows) > 1 else rows[0]


def vogn_propagate(tape: Tape, store: ParameterStore, graph: VisualGraph,
                   use_relation_feature: bool = True) -> VOGNResult:
    """One message-passing round over the visual graph.

    Nodes with no incident edges pass through unchanged; attention normalizes
    over each node's full incident set across all of its language relations.
    """
    k = graph.k
    node_rows: list[Var] = []
    for block in (p.features for p in graph.pruned):
        for slot in range(k):
            node_rows.append(ad.take_rows(block, [slot]))

    flat_edges: list[tuple[int, int]] = []
    flat_feats: list[Var] = []
    for e, (i, j) in enumerate(graph.lang_edges):
        block = graph.edge_blocks[e]
        for kk in range(k):
            for ll in range(k):
                flat_edges.append((i * k + kk, j * k + ll))
                flat_feats.append(ad.take_rows(block, [kk * k + ll]))

    new_rows, refined, attention = graphnets.propagate(
        tape, store, EDGE_NET, NODE_NET, node_rows, flat_edges, flat_feats,
        use_relation_feature)

    edge_blocks: list[Var] = []
    for e in range(len(graph.lang_edges)):
        rows = refined[e * k * k:(e + 1) * k * k]
        edge_blocks.append(ad.concat(rows, axis=0) if len(rows) > 1 else rows[0])
    return VOGNResult(new_rows, edge_blocks, attention)
