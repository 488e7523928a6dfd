"""Phrase graph network: one round of message passing over the language graph.

Edges absorb subject/object phrase features (residual), then each phrase
aggregates attention-weighted messages from its neighborhood; isolated
phrases keep their input feature.
"""

from __future__ import annotations

import numpy as np

from . import graphnets
from .autodiff import Tape, Var
from .params import ParameterStore

EDGE_NET = "pgn_e"
NODE_NET = "pgn_p"


def pgn_edge_update(tape: Tape, store: ParameterStore,
                    x_pi: Var, x_pj: Var, x_rij: Var) -> Var:
    """Context-aware relation feature for a single subject -> object edge."""
    return graphnets.edge_update(tape, store, EDGE_NET, x_pi, x_pj, x_rij)


def pgn_node_update(tape: Tape, store: ParameterStore, center: Var,
                    neighbor_rows: Var, edge_rows: Var) -> tuple[Var, np.ndarray]:
    """Attention aggregation for one phrase; returns (updated, weights)."""
    return graphnets.attention_node_update(tape, store, NODE_NET, center,
                                           neighbor_rows, edge_rows)


def pgn_propagate(tape: Tape, store: ParameterStore, node_feats: list[Var],
                  edges: list[tuple[int, int]], edge_feats: list[Var],
                  use_relation_feature: bool = True,
                  ) -> tuple[list[Var], list[Var], dict[int, np.ndarray]]:
    """One refinement pass; returns (phrase feats, relation feats, attention)."""
    return graphnets.propagate(tape, store, EDGE_NET, NODE_NET, node_feats,
                               edges, edge_feats, use_relation_feature)
