"""Grounding sample data model and JSONL serialization.

One sample is a scene description: sentence tokens, the given phrases with
merged ground-truth boxes, a (noisy) raw parse, and the proposal set with
synthetic appearance features. Dataset files hold one JSON object per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .langgraph import (GivenPhrase, LanguageSceneGraph, ParseEdge, ParseNode,
                        RawParse, build_scene_graph)


@dataclass
class PhraseSpec:
    id: int
    span: tuple[int, int]
    category: str
    gt_box: np.ndarray            # (4,) merged union for multi-object phrases
    object_ids: list[int] = field(default_factory=list)

    def as_given(self) -> GivenPhrase:
        return GivenPhrase(self.id, self.span, self.category)


@dataclass
class GroundingSample:
    scene_id: int
    split: str
    tokens: list[str]
    phrases: list[PhraseSpec]
    parse: RawParse
    proposal_boxes: np.ndarray        # (M,4)
    proposal_appearance: np.ndarray   # (M,d_a)
    scene: dict = field(default_factory=dict)
    _graph: LanguageSceneGraph | None = None

    @property
    def num_phrases(self) -> int:
        return len(self.phrases)

    def graph(self) -> LanguageSceneGraph:
        if self._graph is None:
            self._graph = build_scene_graph(
                self.tokens, self.parse, [p.as_given() for p in self.phrases])
        return self._graph

    def gt_array(self) -> np.ndarray:
        return np.stack([p.gt_box for p in self.phrases])


def _relation_json(rel):
    return rel if isinstance(rel, str) else [int(rel[0]), int(rel[1])]


def _relation_load(rel):
    return rel if isinstance(rel, str) else (int(rel[0]), int(rel[1]))


def sample_to_json(sample: GroundingSample) -> dict:
    return {
        "scene_id": sample.scene_id,
        "split": sample.split,
        "tokens": sample.tokens,
        "phrases": [{
            "id": p.id,
            "span": list(p.span),
            "category": p.category,
            "box": [float(v) for v in p.gt_box],
            "objects": list(p.object_ids),
        } for p in sample.phrases],
        "parse": {
            "nodes": [{"span": list(n.span), "text": n.text} for n in sample.parse.nodes],
            "edges": [{"subject": e.subject, "object": e.object,
                       "relation": _relation_json(e.relation)}
                      for e in sample.parse.edges],
        },
        "proposals": {
            "boxes": sample.proposal_boxes.tolist(),
            "appearance": sample.proposal_appearance.tolist(),
        },
        "scene": sample.scene,
    }


def sample_from_json(doc: dict) -> GroundingSample:
    parse = RawParse(
        nodes=[ParseNode(tuple(n["span"]), n.get("text", ""))
               for n in doc["parse"]["nodes"]],
        edges=[ParseEdge(int(e["subject"]), int(e["object"]),
                         _relation_load(e["relation"]))
               for e in doc["parse"]["edges"]],
    )
    phrases = [PhraseSpec(p["id"], tuple(p["span"]), p["category"],
                          np.asarray(p["box"], dtype=np.float64),
                          list(p.get("objects", [])))
               for p in doc["phrases"]]
    return GroundingSample(
        scene_id=int(doc["scene_id"]),
        split=doc.get("split", ""),
        tokens=list(doc["tokens"]),
        phrases=phrases,
        parse=parse,
        proposal_boxes=np.asarray(doc["proposals"]["boxes"], dtype=np.float64),
        proposal_appearance=np.asarray(doc["proposals"]["appearance"], dtype=np.float64),
        scene=doc.get("scene", {}),
    )


def write_dataset(samples: list[GroundingSample], path: str) -> None:
    with open(path, "w") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_json(sample), sort_keys=True))
            fh.write("\n")


def read_dataset(path: str) -> list[GroundingSample]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(sample_from_json(json.loads(line)))
    return out
