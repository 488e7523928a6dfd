"""End-to-end forward pass: encoders, graph nets, pruning, similarities.

GroundingModel.forward produces a ForwardState holding every intermediate the
losses and the solver need. Toggles select the ablation variant: without
proposal pruning the model reduces to direct phrase/proposal matching over
all M proposals (the baseline), which also disables the visual graph and
structured prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Var
from .config import Config
from .data import GroundingSample
from .encoders import (Vocab, encode_sequence, fuse_object_features,
                       make_coordinate_map, object_spatial_features,
                       phrase_pool, relation_phrase_feature)
from .geometry import clip_boxes_to_canvas, decode_offsets
from .matcher import MatchInstance, node_similarity, edge_similarity, \
    solve_assignment, assignment_objective
from .params import ParameterStore
from .phrase_graph import pgn_propagate
from .visual_graph import (PrunedProposals, VisualGraph, VOGNResult,
                           build_visual_graph, match_head, prune_proposals,
                           vogn_propagate)


@dataclass
class PhraseForward:
    logits: Var                      # (M,1) pruning logits over all proposals
    offsets: Var                     # (M,4) pruning offsets
    pruned: PrunedProposals | None   # None when pruning is off


@dataclass
class NodeSim:
    fused: Var       # (1,K) phi_p * phi_g
    phi_g: Var       # (1,K)
    logits: Var      # (K,1) raw head outputs, for the matching loss
    offsets: Var     # (K,4)
    final_boxes: np.ndarray   # (K,4) offsets applied to the refined boxes


@dataclass
class EdgeSim:
    probs: Var       # (1,K*K)
    logits: Var      # (K*K,1)


@dataclass
class ForwardState:
    sample: GroundingSample
    edge_pairs: list[tuple[int, int]]       # language edges as node indices
    relations: list                          # relation payloads (span or word)
    phrase_feats: list[Var]                  # context-aware phrase rows
    relation_feats: list[Var]                # context-aware relation rows
    pgn_attention: dict[int, np.ndarray]
    phrases: list[PhraseForward]
    visual: VisualGraph | None
    vogn: VOGNResult | None
    node_sims: list[NodeSim] | None
    edge_sims: list[EdgeSim] | None
    k: int


@dataclass
class GroundingOutput:
    boxes: np.ndarray        # (N,4) chosen box per phrase
    choice: np.ndarray       # (N,)
    scores: np.ndarray       # (N,) node score of the chosen candidate
    objective: float
    instance: MatchInstance
    candidate_boxes: np.ndarray   # (N,K,4)


class GroundingModel:
    def __init__(self, store: ParameterStore, cfg: Config, vocab: Vocab):
        self.store = store
        self.cfg = cfg
        self.vocab = vocab
        self.coord_map = make_coordinate_map(cfg.coord_map_size)

    # ------------------------------------------------------------------
    def forward(self, sample: GroundingSample, tape: Tape | None = None,
                ) -> ForwardState:
        cfg = self.cfg
        store = self.store
        if tape is None:
            tape = Tape(record=False)

        graph = sample.graph()
        index_of = {node.id: i for i, node in enumerate(graph.nodes)}
        edge_pairs = [(index_of[e.subject], index_of[e.object]) for e in graph.edges]
        relations = [e.relation for e in graph.edges]

        token_ids = self.vocab.encode(sample.tokens)
        states_p = encode_sequence(tape, store, "gru_p", token_ids)
        phrase_feats = [phrase_pool(states_p, p.span) for p in sample.phrases]

        relation_feats: list[Var] = []
        if relations:
            needs_sentence = any(not isinstance(r, str) for r in relations)
            states_r = encode_sequence(tape, store, "gru_r", token_ids) \
                if needs_sentence else None
            relation_feats = [
                relation_phrase_feature(tape, store, self.vocab, states_r, rel)
                for rel in relations]

        pgn_attention: dict[int, np.ndarray] = {}
        if cfg.use_pgn:
            phrase_feats, relation_feats, pgn_attention = pgn_propagate(
                tape, store, phrase_feats, edge_pairs, relation_feats,
                cfg.use_phrase_relation_feature)

        boxes = sample.proposal_boxes
        spatial = object_spatial_features(tape, store, cfg, self.coord_map, boxes)
        appearance = sample.proposal_appearance
        proposal_feats = fuse_object_features(tape, store,
                                              tape.leaf(appearance), spatial)

        phrases: list[PhraseForward] = []
        if cfg.use_pp:
            for feat in phrase_feats:
                pruned = prune_proposals(tape, store, cfg, self.coord_map, feat,
                                         boxes, proposal_feats, appearance,
                                         cfg.top_k)
                phrases.append(PhraseForward(pruned.all_logits,
                                             pruned.all_offsets, pruned))
        else:
            for feat in phrase_feats:
                logits, offsets = match_head(tape, store, "head_p.cls",
                                             "head_p.reg", feat, proposal_feats)
                phrases.append(PhraseForward(logits, offsets, None))
            return ForwardState(sample, edge_pairs, relations, phrase_feats,
                                relation_feats, pgn_attention, phrases, None,
                                None, None, None, boxes.shape[0])

        visual = None
        vogn = None
        edge_sims: list[EdgeSim] | None = None
        k = cfg.top_k
        need_edges = bool(edge_pairs) and (cfg.use_vogn or cfg.use_sp)
        if need_edges:
            visual = build_visual_graph(tape, store, cfg,
                                        [p.pruned for p in phrases],
                                        edge_pairs, k)
        if cfg.use_vogn and visual is not None:
            vogn = vogn_propagate(tape, store, visual,
                                  cfg.use_visual_relation_feature)

        node_sims: list[NodeSim] = []
        for i, feat in enumerate(phrase_feats):
            pruned = phrases[i].pruned
            if vogn is not None:
                context = vogn.node_block(i, k)
            else:
                context = pruned.features
            fused, phi_g, logits, offsets = node_similarity(tape, store, feat,
                                                            context, pruned.phi_p)
            final = decode_offsets(offsets.value, pruned.boxes, clamp=True)
            final = clip_boxes_to_canvas(final, cfg.canvas_size, cfg.canvas_size)
            node_sims.append(NodeSim(fused, phi_g, logits, offsets, final))

        if visual is not None:
            edge_sims = []
            for e in range(len(edge_pairs)):
                if vogn is not None and cfg.use_visual_relation_feature:
                    union_feats = vogn.edge_blocks[e]
                else:
                    union_feats = visual.edge_blocks[e]
                probs, logits = edge_similarity(tape, store, relation_feats[e],
                                                union_feats)
                edge_sims.append(EdgeSim(probs, logits))

        return ForwardState(sample, edge_pairs, relations, phrase_feats,
                            relation_feats, pgn_attention, phrases, visual,
                            vogn, node_sims, edge_sims, k)

    # ------------------------------------------------------------------
    def instance_of(self, state: ForwardState) -> tuple[MatchInstance, np.ndarray]:
        """Solver-ready scores plus per-candidate output boxes (N,K,4)."""
        cfg = self.cfg
        if state.node_sims is None:
            node = np.stack([
                _softmax(p.logits.value[:, 0]) for p in state.phrases])
            cand = np.stack([
                _final_boxes(p.offsets.value, state.sample.proposal_boxes, cfg)
                for p in state.phrases])
            return MatchInstance(node), cand
        node = np.stack([sim.fused.value[0] for sim in state.node_sims])
        cand = np.stack([sim.final_boxes for sim in state.node_sims])
        if cfg.use_sp and state.edge_sims:
            k = state.k
            edge_index = np.asarray(state.edge_pairs, dtype=np.int64)
            edge_scores = np.stack([
                sim.probs.value[0].reshape(k, k) for sim in state.edge_sims])
            return MatchInstance(node, edge_index, edge_scores, cfg.beta), cand
        return MatchInstance(node), cand

    def ground(self, sample: GroundingSample, beta: float | None = None,
               ) -> GroundingOutput:
        """Inference: forward, solve, and read out one box per phrase."""
        state = self.forward(sample, Tape(record=False))
        inst, cand = self.instance_of(state)
        if beta is not None and inst.edge_index.size:
            inst = MatchInstance(inst.node_scores, inst.edge_index,
                                 inst.edge_scores, beta)
        if self.cfg.use_sp and inst.edge_index.size:
            choice = solve_assignment(inst, self.cfg.sp_max_phrases)
        else:
            choice = np.argmax(inst.node_scores, axis=1)
        n = inst.num_phrases
        boxes = np.stack([cand[i, choice[i]] for i in range(n)])
        scores = np.array([inst.node_scores[i, choice[i]] for i in range(n)])
        return GroundingOutput(boxes, choice, scores,
                               assignment_objective(inst, choice), inst, cand)


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def _final_boxes(offsets: np.ndarray, proposals: np.ndarray, cfg: Config,
                 ) -> np.ndarray:
    decoded = decode_offsets(offsets, proposals, clamp=True)
    return clip_boxes_to_canvas(decoded, cfg.canvas_size, cfg.canvas_size)
