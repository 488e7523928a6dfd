"""Shared message-passing machinery for the phrase and visual graph networks.

Both nets follow the same residual pattern: edges absorb their endpoint
features through a small network, then each node aggregates attention-weighted
messages from its incident edges. The same network instance produces both the
attention keys and the aggregated messages.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var
from .encoders import mlp_forward
from .params import ParameterStore


def edge_update(tape: Tape, store: ParameterStore, prefix: str,
                src_rows: Var, dst_rows: Var, edge_rows: Var) -> Var:
    """Residual edge refinement: e' = e + F([src; dst; e]), row-aligned."""
    joint = ad.concat([src_rows, dst_rows, edge_rows], axis=1)
    return ad.add(edge_rows, mlp_forward(tape, store, prefix, joint))


def attention_node_update(tape: Tape, store: ParameterStore, prefix: str,
                          center: Var, neighbor_rows: Var,
                          edge_rows: Var) -> tuple[Var, np.ndarray]:
    """Residual attention aggregation over one node's incident edges.

    Messages are F([neighbor; edge]); attention logits are the inner products
    of F([center; edge]) with the messages, softmax-normalized over the
    incident set. Returns the updated node and the attention weights.
    """
    m = neighbor_rows.value.shape[0]
    center_keys = mlp_forward(tape, store, prefix,
                              ad.concat([ad.tile_rows(center, m), edge_rows], axis=1))
    messages = mlp_forward(tape, store, prefix,
                           ad.concat([neighbor_rows, edge_rows], axis=1))
    logits = ad.reshape(ad.sum_axis(ad.mul(center_keys, messages), axis=1), (1, m))
    weights = ad.softmax_rows(logits)
    updated = ad.add(center, ad.matmul(weights, messages))
    return updated, weights.value[0].copy()


def propagate(tape: Tape, store: ParameterStore, edge_prefix: str,
              node_prefix: str, node_feats: list[Var],
              edges: list[tuple[int, int]], edge_feats: list[Var],
              use_relation_feature: bool = True,
              ) -> tuple[list[Var], list[Var], dict[int, np.ndarray]]:
    """One propagation round on an explicit small graph.

    node_feats and edge_feats are (1,D) rows. Neighborhoods are symmetrized:
    a node sees every incident edge regardless of direction, each with the
    edge's own feature. With use_relation_feature off, edge refinement is
    skipped and a zero block stands in for the edge feature inside messages.
    Isolated nodes pass through unchanged.
    """
    dim = node_feats[0].value.shape[1] if node_feats else 0
    if use_relation_feature and edges:
        src = ad.concat([node_feats[i] for i, _ in edges], axis=0)
        dst = ad.concat([node_feats[j] for _, j in edges], axis=0)
        block = ad.concat(edge_feats, axis=0) if len(edge_feats) > 1 else edge_feats[0]
        refined_block = edge_update(tape, store, edge_prefix, src, dst, block)
        refined = [ad.take_rows(refined_block, [e]) for e in range(len(edges))]
    else:
        refined = list(edge_feats)

    incident: dict[int, list[tuple[int, int]]] = {}
    for e, (i, j) in enumerate(edges):
        incident.setdefault(i, []).append((e, j))
        if j != i:
            incident.setdefault(j, []).append((e, i))

    new_nodes: list[Var] = []
    attention: dict[int, np.ndarray] = {}
    for i, feat in enumerate(node_feats):
        edges_in = incident.get(i, [])
        if not edges_in:
            new_nodes.append(feat)
            continue
        neighbor_rows = ad.concat([node_feats[j] for _, j in edges_in], axis=0)
        if use_relation_feature:
            rel_rows = ad.concat([refined[e] for e, _ in edges_in], axis=0)
        else:
            rel_rows = tape.leaf(np.zeros((len(edges_in), dim)))
        updated, weights = attention_node_update(tape, store, node_prefix,
                                                 feat, neighbor_rows, rel_rows)
        new_nodes.append(updated)
        attention[i] = weights
    return new_nodes, refined, attention
