"""Language scene graph construction from a raw parse plus the given phrases.

The raw parse is noisy: its noun-phrase nodes may not line up with the given
phrases and relations can be missing. Graph building aligns parse nodes to
phrases by token overlap, transfers parse relations onto the aligned phrases,
then recalls missing wear/have relations for isolated clothing and bodyparts
phrases using the coarse categories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import CATEGORIES

# a relation is either a [start, end) token span of the sentence or a word
Relation = "tuple[int, int] | str"

RECALL_RELATIONS = {"clothing": "wear", "bodyparts": "have"}


@dataclass(frozen=True)
class GivenPhrase:
    id: int | str
    span: tuple[int, int]
    category: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown phrase category {self.category!r}")
        object.__setattr__(self, "span", (int(self.span[0]), int(self.span[1])))


@dataclass(frozen=True)
class ParseNode:
    span: tuple[int, int]
    text: str


@dataclass(frozen=True)
class ParseEdge:
    subject: int      # index into RawParse.nodes
    object: int
    relation: tuple[int, int] | str


@dataclass
class RawParse:
    nodes: list[ParseNode] = field(default_factory=list)
    edges: list[ParseEdge] = field(default_factory=list)


@dataclass(frozen=True)
class RelationEdge:
    subject: int | str   # phrase ids, directed subject -> object
    object: int | str
    relation: tuple[int, int] | str


@dataclass
class LanguageSceneGraph:
    nodes: list[GivenPhrase]
    edges: list[RelationEdge]

    def index_of(self, phrase_id) -> int:
        for i, node in enumerate(self.nodes):
            if node.id == phrase_id:
                return i
        raise KeyError(phrase_id)

    def neighbors(self, phrase_id) -> set:
        out = set()
        for e in self.edges:
            if e.subject == phrase_id:
                out.add(e.object)
            elif e.object == phrase_id:
                out.add(e.subject)
        return out

    def isolated_ids(self) -> list:
        touched = set()
        for e in self.edges:
            touched.add(e.subject)
            touched.add(e.object)
        return [n.id for n in self.nodes if n.id not in touched]


def _span_overlap(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(0, min(a[1], b[1]) - max(a[0], b[0]))


def align_phrases(parse: RawParse, phrases: list[GivenPhrase]) -> dict:
    """Map each parse node index to the phrase id with maximum token overlap.

    Zero overlap leaves the node unmapped (value None). Ties resolve to the
    phrase starting earlier in the sentence.
    """
    ordered = sorted(phrases, key=lambda p: p.span[0])
    alignment: dict[int, object] = {}
    for idx, node in enumerate(parse.nodes):
        best_id = None
        best_overlap = 0
        for phrase in ordered:
            overlap = _span_overlap(node.span, phrase.span)
            if overlap > best_overlap:
                best_overlap = overlap
                best_id = phrase.id
        alignment[idx] = best_id
    return alignment


def transfer_relations(parse: RawParse, alignment: dict) -> list[RelationEdge]:
    """Project parse edges onto phrase ids; both endpoints must be mapped.

    Self-loops are dropped and duplicate ordered pairs collapse to the first
    occurrence.
    """
    edges: list[RelationEdge] = []
    seen: set[tuple] = set()
    for pe in parse.edges:
        src = alignment.get(pe.subject)
        dst = alignment.get(pe.object)
        if src is None or dst is None or src == dst:
            continue
        if (src, dst) in seen:
            continue
        seen.add((src, dst))
        edges.append(RelationEdge(src, dst, pe.relation))
    return edges


def recall_missing_relations(graph: LanguageSceneGraph) -> LanguageSceneGraph:
    """Attach isolated clothing/bodyparts phrases to the nearest people phrase.

    Distance is |span start - span start|; ties pick the earlier phrase. The
    recalled edge is directed people -> item with a synthetic relation word
    ("wear" for clothing, "have" for bodyparts). Without a people phrase the
    node stays isolated.
    """
    people = [n for n in graph.nodes if n.category == "people"]
    if not people:
        return LanguageSceneGraph(list(graph.nodes), list(graph.edges))
    edges = list(graph.edges)
    seen = {(e.subject, e.object) for e in edges}
    for item_id in graph.isolated_ids():
        item = graph.nodes[graph.index_of(item_id)]
        word = RECALL_RELATIONS.get(item.category)
        if word is None:
            continue
        subject = min(people, key=lambda p: (abs(p.span[0] - item.span[0]), p.span[0]))
        if (subject.id, item_id) in seen:
            continue
        seen.add((subject.id, item_id))
        edges.append(RelationEdge(subject.id, item_id, word))
    return LanguageSceneGraph(list(graph.nodes), edges)


def _validate(tokens: list[str], parse: RawParse, phrases: list[GivenPhrase]) -> None:
    if not tokens or any(t == "" for t in tokens):
        raise ValueError("token sequence must be non-empty with no empty tokens")
    t = len(tokens)
    spans = []
    for p in phrases:
        s, e = p.span
        if not (0 <= s < e <= t):
            raise ValueError(f"phrase {p.id!r} span {p.span} out of range for {t} tokens")
        spans.append((s, e, p.id))
    spans.sort()
    for (s1, e1, a), (s2, _e2, b) in zip(spans, spans[1:]):
        if s2 < e1:
            raise ValueError(f"phrase spans of {a!r} and {b!r} overlap")
    for node in parse.nodes:
        s, e = node.span
        if not (0 <= s < e <= t):
            raise ValueError(f"parse node span {node.span} out of range")
    for pe in parse.edges:
        if not (0 <= pe.subject < len(parse.nodes) and 0 <= pe.object < len(parse.nodes)):
            raise ValueError("parse edge references a missing node")


def build_scene_graph(tokens: list[str], parse: RawParse,
                      phrases: list[GivenPhrase]) -> LanguageSceneGraph:
    """Full pipeline: align, transfer, recall. Nodes are exactly the phrases."""
    _validate(tokens, parse, phrases)
    alignment = align_phrases(parse, phrases)
    edges = transfer_relations(parse, alignment)
    graph = LanguageSceneGraph(list(phrases), edges)
    return recall_missing_relations(graph)


# ---------------------------------------------------------------------------
# JSON wire format


def _relation_to_json(rel):
    if isinstance(rel, str):
        return rel
    return [int(rel[0]), int(rel[1])]


def _relation_from_json(rel):
    if isinstance(rel, str):
        return rel
    return (int(rel[0]), int(rel[1]))


def parse_input_from_json(doc: dict) -> tuple[list[str], RawParse, list[GivenPhrase]]:
    tokens = list(doc["tokens"])
    phrases = [GivenPhrase(p["id"], tuple(p["span"]), p["category"])
               for p in doc["phrases"]]
    parse = RawParse(
        nodes=[ParseNode(tuple(n["span"]), n.get("text", "")) for n in doc["parse"]["nodes"]],
        edges=[ParseEdge(int(e["subject"]), int(e["object"]),
                         _relation_from_json(e["relation"]))
               for e in doc["parse"]["edges"]],
    )
    return tokens, parse, phrases


def graph_to_json(graph: LanguageSceneGraph) -> dict:
    return {
        "nodes": [{"id": n.id, "span": list(n.span), "category": n.category}
                  for n in graph.nodes],
        "edges": [{"subject": e.subject, "object": e.object,
                   "relation": _relation_to_json(e.relation)}
                  for e in graph.edges],
    }
