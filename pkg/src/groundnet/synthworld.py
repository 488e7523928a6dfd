"""Synthetic scene and description generator.

Scenes hold categorized objects with attributes and boxes; descriptions are
template sentences over the mentioned objects with geometrically true
relations. A controlled fraction of scenes is ambiguous: two objects share
noun and attribute and the mentioned one is identified only by a relation to
an anchor, which is what makes the relation-aware components measurable.
Proposal sets contain one jittered copy of each phrase's ground-truth box,
jittered copies of unmentioned objects (including the ambiguous twin), and
random distractors; appearance features are coverage-weighted object
embeddings plus noise.
"""

from __future__ import annotations

import numpy as np

from .config import CATEGORIES, Config
from .data import GroundingSample, PhraseSpec
from .geometry import Box, iou, union_box
from .langgraph import ParseEdge, ParseNode, RawParse

NOUNS = {
    "people": ("man", "woman", "child", "player"),
    "clothing": ("shirt", "hat", "jacket", "dress"),
    "bodyparts": ("hand", "head", "arm", "leg"),
    "animal": ("dog", "cat", "horse", "bird"),
    "vehicles": ("car", "bus", "bike", "truck"),
    "instruments": ("guitar", "drum", "piano", "violin"),
    "scene": ("street", "field", "beach", "room"),
    "other": ("ball", "box", "sign", "cup"),
}
ATTRIBUTES = ("red", "blue", "green", "yellow", "black", "white", "small", "large")
RELATION_WORDS = {
    "above": ("above",),
    "below": ("below",),
    "left_of": ("left", "of"),
    "right_of": ("right", "of"),
    "wearing": ("wearing",),
    "holding": ("holding",),
}
SPATIAL_MARGIN_FRACTION = 0.125   # of the canvas side
_APPEARANCE_SEED = 0xA11CE


def build_vocabulary() -> list[str]:
    """Deterministic token inventory of the synthetic language."""
    tokens = {"the", "and", "two", "wear", "have"}
    for nouns in NOUNS.values():
        tokens.update(nouns)
    tokens.update(ATTRIBUTES)
    for words in RELATION_WORDS.values():
        tokens.update(words)
    return sorted(tokens)


class SceneObject:
    __slots__ = ("id", "category", "noun", "attribute", "box")

    def __init__(self, oid, category, noun, attribute, box: Box):
        self.id = oid
        self.category = category
        self.noun = noun
        self.attribute = attribute
        self.box = box


class SyntheticScene:
    def __init__(self, scene_id: int, canvas: Box, objects: list[SceneObject],
                 relations: list[tuple[int, int, str]], ambiguous_pair=None,
                 multi_pair=None):
        self.scene_id = scene_id
        self.canvas = canvas
        self.objects = objects
        self.relations = relations          # every geometrically true relation
        self.ambiguous_pair = ambiguous_pair  # (mentioned twin id, distractor id)
        self.multi_pair = multi_pair          # ids of a two-object phrase
        ids = {o.id for o in objects}
        for s, o, _ in relations:
            if s not in ids or o not in ids:
                raise ValueError("relation endpoint missing from scene")

    def object(self, oid) -> SceneObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)


def _relation_holds(kind: str, subj: SceneObject, obj: SceneObject,
                    margin: float) -> bool:
    scx, scy = subj.box.center
    ocx, ocy = obj.box.center
    if kind == "above":
        return scy <= ocy - margin
    if kind == "below":
        return scy >= ocy + margin
    if kind == "left_of":
        return scx <= ocx - margin
    if kind == "right_of":
        return scx >= ocx + margin
    if kind == "wearing":
        return (subj.category == "people" and obj.category == "clothing"
                and subj.box.x1 <= ocx <= subj.box.x2
                and subj.box.y1 <= ocy <= subj.box.y2)
    if kind == "holding":
        if subj.category != "people" or obj.category not in ("instruments", "other"):
            return False
        return np.hypot(scx - ocx, scy - ocy) <= 0.3 * (subj.box.width
                                                        + subj.box.height)
    raise KeyError(kind)


def _true_relations(objects: list[SceneObject], margin: float,
                    ) -> list[tuple[int, int, str]]:
    out = []
    for s in objects:
        for o in objects:
            if s.id == o.id:
                continue
            for kind in RELATION_WORDS:
                if _relation_holds(kind, s, o, margin):
                    out.append((s.id, o.id, kind))
    return out


def _size_range(category: str) -> tuple[float, float]:
    if category == "scene":
        return (0.45, 0.75)
    if category == "people":
        return (0.25, 0.45)
    if category in ("clothing", "bodyparts"):
        return (0.08, 0.2)
    return (0.12, 0.3)


def _place_box(rng: np.random.Generator, category: str, canvas: float,
               inside: Box | None = None) -> Box:
    lo, hi = _size_range(category)
    w = rng.uniform(lo, hi) * canvas
    h = rng.uniform(lo, hi) * canvas
    if inside is not None:
        cx = rng.uniform(inside.x1, inside.x2)
        cy = rng.uniform(inside.y1, inside.y2)
    else:
        cx = rng.uniform(w / 2, canvas - w / 2)
        cy = rng.uniform(h / 2, canvas - h / 2)
    x1 = min(max(cx - w / 2, 0.0), canvas - 1.0)
    y1 = min(max(cy - h / 2, 0.0), canvas - 1.0)
    x2 = max(min(cx + w / 2, canvas), x1 + 1.0)
    y2 = max(min(cy + h / 2, canvas), y1 + 1.0)
    return Box(x1, y1, x2, y2)


def _distinguishing_relations(scene: SyntheticScene) -> list[tuple[int, int, str]]:
    """Relations that hold for the mentioned twin but not for its distractor."""
    if scene.ambiguous_pair is None:
        return []
    twin_id, other_id = scene.ambiguous_pair
    banned = {twin_id, other_id} | (set(scene.multi_pair) if scene.multi_pair else set())
    margin = SPATIAL_MARGIN_FRACTION * scene.canvas.width
    other = scene.object(other_id)
    out = []
    for (s, o, kind) in scene.relations:
        if s != twin_id or o in banned:
            continue
        if not _relation_holds(kind, other, scene.object(o), margin):
            out.append((s, o, kind))
    return out


def generate_scene(scene_id: int, cfg: Config) -> SyntheticScene:
    """Seeded scene; ambiguous scenes are regenerated until a distinguishing
    relation exists for the mentioned twin."""
    canvas = Box(0.0, 0.0, cfg.canvas_size, cfg.canvas_size)
    margin = SPATIAL_MARGIN_FRACTION * cfg.canvas_size
    rng = np.random.default_rng(np.random.SeedSequence([cfg.data_seed, scene_id, 0]))
    ambiguous = rng.random() < cfg.ambiguity_rate
    multi = rng.random() < cfg.multi_object_rate

    for _attempt in range(200):
        n = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
        n = max(n, 3 + (2 if ambiguous else 0))
        objects: list[SceneObject] = []

        def add_object(category, noun=None, attribute=None, inside=None):
            oid = len(objects)
            noun = noun or NOUNS[category][rng.integers(len(NOUNS[category]))]
            attribute = attribute or ATTRIBUTES[rng.integers(len(ATTRIBUTES))]
            objects.append(SceneObject(oid, category, noun, attribute,
                                       _place_box(rng, category, cfg.canvas_size,
                                                  inside)))
            return objects[-1]

        person = add_object("people")
        ambiguous_pair = None
        if ambiguous:
            cat = [c for c in CATEGORIES if c != "scene"][
                rng.integers(len(CATEGORIES) - 1)]
            noun = NOUNS[cat][rng.integers(len(NOUNS[cat]))]
            attr = ATTRIBUTES[rng.integers(len(ATTRIBUTES))]
            twin_a = add_object(cat, noun, attr)
            twin_b = add_object(cat, noun, attr)
            ambiguous_pair = (twin_a.id, twin_b.id)
        multi_pair = None
        if multi:
            cat = [c for c in CATEGORIES if c != "scene"][
                rng.integers(len(CATEGORIES) - 1)]
            noun = NOUNS[cat][rng.integers(len(NOUNS[cat]))]
            attr = ATTRIBUTES[rng.integers(len(ATTRIBUTES))]
            m1 = add_object(cat, noun, attr)
            m2 = add_object(cat, noun, attr)
            multi_pair = (m1.id, m2.id)
        while len(objects) < n:
            cat = CATEGORIES[rng.integers(len(CATEGORIES))]
            inside = person.box if cat in ("clothing", "bodyparts") else None
            add_object(cat, inside=inside)

        scene = SyntheticScene(scene_id, canvas, objects,
                               _true_relations(objects, margin),
                               ambiguous_pair, multi_pair)
        if ambiguous and not _distinguishing_relations(scene):
            continue
        return scene
    raise RuntimeError(f"could not realize scene {scene_id} under the config")


def _jitter_box(box: Box, rng: np.random.Generator, cfg: Config) -> Box:
    for _ in range(50):
        dx = rng.uniform(-0.25, 0.25) * box.width
        dy = rng.uniform(-0.25, 0.25) * box.height
        sw = np.exp(rng.uniform(-0.25, 0.25))
        sh = np.exp(rng.uniform(-0.25, 0.25))
        cx, cy = box.center
        w, h = box.width * sw, box.height * sh
        cand = Box(cx + dx - w / 2, cy + dy - h / 2, cx + dx + w / 2, cy + dy + h / 2)
        if cfg.jitter_iou_low <= iou(cand, box) <= cfg.jitter_iou_high:
            return cand
    return box


_appearance_cache: dict[int, tuple] = {}


def appearance_tables(d_a: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Global (nouns, attributes, background) embedding tables, seed-fixed so
    every split shares one feature space."""
    if d_a not in _appearance_cache:
        rng = np.random.default_rng(np.random.SeedSequence([_APPEARANCE_SEED, d_a]))
        all_nouns = [n for nouns in NOUNS.values() for n in nouns]
        noun_table = rng.uniform(-1.0, 1.0, size=(len(all_nouns), d_a))
        attr_table = rng.uniform(-1.0, 1.0, size=(len(ATTRIBUTES), d_a))
        background = rng.uniform(-1.0, 1.0, size=d_a)
        index = {n: i for i, n in enumerate(all_nouns)}
        _appearance_cache[d_a] = (noun_table, attr_table, background, index)
    noun_table, attr_table, background, _ = _appearance_cache[d_a]
    return noun_table, attr_table, background


def _object_vector(obj: SceneObject, d_a: int) -> np.ndarray:
    noun_table, attr_table, _bg = appearance_tables(d_a)
    _, _, _, index = _appearance_cache[d_a]
    return noun_table[index[obj.noun]] + 0.5 * attr_table[ATTRIBUTES.index(obj.attribute)]


def _proposal_appearance(boxes: np.ndarray, scene: SyntheticScene, cfg: Config,
                         rng: np.random.Generator) -> np.ndarray:
    """Coverage-weighted mix of overlapped object embeddings plus background
    and gaussian noise."""
    d_a = cfg.appearance_dim
    _, _, background = appearance_tables(d_a)
    out = np.zeros((boxes.shape[0], d_a))
    for m, row in enumerate(boxes):
        area = (row[2] - row[0]) * (row[3] - row[1])
        covered = 0.0
        vec = np.zeros(d_a)
        for obj in scene.objects:
            iw = min(row[2], obj.box.x2) - max(row[0], obj.box.x1)
            ih = min(row[3], obj.box.y2) - max(row[1], obj.box.y1)
            if iw > 0 and ih > 0:
                w = (iw * ih) / area
                vec += w * _object_vector(obj, d_a)
                covered += w
        vec += max(0.0, 1.0 - covered) * background
        out[m] = vec + cfg.appearance_noise * rng.standard_normal(d_a)
    return out


def generate_proposals(scene: SyntheticScene, covered_boxes: list[Box],
                       cfg: Config, rng: np.random.Generator,
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Proposal boxes and appearance features for one sample.

    covered_boxes get one jittered copy each (every phrase ground truth and
    every unmentioned object, so ambiguous distractors stay in play); random
    boxes fill up to num_proposals, then everything is shuffled.
    """
    m = cfg.num_proposals
    if m < len(covered_boxes):
        raise ValueError(f"num_proposals={m} below the {len(covered_boxes)} "
                         "boxes the sample must cover")
    boxes = [_jitter_box(b, rng, cfg).as_array() for b in covered_boxes]
    while len(boxes) < m:
        w = rng.uniform(0.08, 0.5) * cfg.canvas_size
        h = rng.uniform(0.08, 0.5) * cfg.canvas_size
        x1 = rng.uniform(0.0, cfg.canvas_size - w)
        y1 = rng.uniform(0.0, cfg.canvas_size - h)
        boxes.append(np.array([x1, y1, x1 + w, y1 + h]))
    arr = np.stack(boxes)[rng.permutation(m)]
    return arr, _proposal_appearance(arr, scene, cfg, rng)


def _phrase_tokens(obj: SceneObject, plural: bool) -> list[str]:
    return ["two" if plural else "the", obj.attribute, obj.noun]


def _scene_to_json(scene: SyntheticScene) -> dict:
    return {
        "canvas": [scene.canvas.x1, scene.canvas.y1, scene.canvas.x2, scene.canvas.y2],
        "objects": [{"id": o.id, "category": o.category, "noun": o.noun,
                     "attribute": o.attribute,
                     "box": [o.box.x1, o.box.y1, o.box.x2, o.box.y2]}
                    for o in scene.objects],
        "relations": [[s, o, kind] for (s, o, kind) in scene.relations],
        "ambiguous_pair": list(scene.ambiguous_pair) if scene.ambiguous_pair else None,
        "multi_pair": list(scene.multi_pair) if scene.multi_pair else None,
    }


def render_sample(scene: SyntheticScene, cfg: Config, split: str = "",
                  ) -> GroundingSample:
    """Sentence, phrases, noisy parse, and proposals for one scene.

    In ambiguous scenes exactly one twin is mentioned, and its clause carries
    a relation that is false for the distractor. Each mentioned object appears
    in exactly one clause; clauses are "subject relation object" or a bare
    phrase, joined by "and".
    """
    rng = np.random.default_rng(
        np.random.SeedSequence([cfg.data_seed, scene.scene_id, 1]))
    margin = SPATIAL_MARGIN_FRACTION * cfg.canvas_size

    # --- choose mentions -------------------------------------------------
    mandatory: list[int] = []
    twin_clause = None               # clauses are (subject_id, kind, object_id)
    if scene.ambiguous_pair is not None:
        options = _distinguishing_relations(scene)
        s, o, kind = options[rng.integers(len(options))]
        twin_clause = (s, kind, o)
        mandatory = [s, o]
    excluded = {scene.ambiguous_pair[1]} if scene.ambiguous_pair else set()
    excluded |= set(scene.multi_pair) if scene.multi_pair else set()

    n_target = int(rng.integers(cfg.min_phrases, cfg.max_phrases + 1))
    pool = [o.id for o in scene.objects
            if o.id not in excluded and o.id not in mandatory]
    mentions = list(mandatory)
    extra = [int(i) for i in rng.permutation(len(pool))]
    budget = n_target - len(mentions) - (1 if scene.multi_pair else 0)
    for slot in extra[:max(0, budget)]:
        mentions.append(pool[slot])

    # --- pair mentions into clauses --------------------------------------
    relation_lookup: dict[tuple[int, int], list[str]] = {}
    for (s, o, kind) in scene.relations:
        relation_lookup.setdefault((s, o), []).append(kind)
    clauses: list[tuple] = []
    consumed: set[int] = set()
    if twin_clause is not None:
        clauses.append(twin_clause)
        consumed.update((twin_clause[0], twin_clause[2]))
    order = [mentions[i] for i in rng.permutation(len(mentions))]
    for oid in order:
        if oid in consumed:
            continue
        candidates: list[tuple[int, str, int]] = []
        if rng.random() < cfg.relation_mention_rate:
            for other in order:
                if other == oid or other in consumed:
                    continue
                for kind in relation_lookup.get((oid, other), []):
                    candidates.append((oid, kind, other))
                for kind in relation_lookup.get((other, oid), []):
                    candidates.append((other, kind, oid))
        if candidates:
            pick = candidates[rng.integers(len(candidates))]
            clauses.append(pick)
            consumed.update((pick[0], pick[2]))
        else:
            clauses.append((oid, None, None))
            consumed.add(oid)
    if scene.multi_pair is not None:
        clauses.append((scene.multi_pair[0], "PAIR", scene.multi_pair[1]))
    clauses = [clauses[i] for i in rng.permutation(len(clauses))]

    # --- emit tokens and spans --------------------------------------------
    tokens: list[str] = []
    phrases: list[PhraseSpec] = []
    clause_edges: list[tuple[int, int, tuple[int, int]]] = []  # phrase idx pairs + span

    def emit_phrase(obj: SceneObject, gt: Box, object_ids: list[int],
                    plural: bool) -> int:
        start = len(tokens)
        tokens.extend(_phrase_tokens(obj, plural))
        idx = len(phrases)
        phrases.append(PhraseSpec(idx, (start, len(tokens)), obj.category,
                                  gt.as_array(), object_ids))
        return idx

    first = True
    for clause in clauses:
        if not first:
            tokens.append("and")
        first = False
        subj, kind, obj = clause
        if kind == "PAIR":
            a, b = scene.object(subj), scene.object(obj)
            emit_phrase(a, union_box(a.box, b.box), [a.id, b.id], plural=True)
        elif kind is None:
            o = scene.object(subj)
            emit_phrase(o, o.box, [o.id], plural=False)
        else:
            s_obj, o_obj = scene.object(subj), scene.object(obj)
            i_idx = emit_phrase(s_obj, s_obj.box, [s_obj.id], plural=False)
            rel_start = len(tokens)
            tokens.extend(RELATION_WORDS[kind])
            rel_span = (rel_start, len(tokens))
            j_idx = emit_phrase(o_obj, o_obj.box, [o_obj.id], plural=False)
            clause_edges.append((i_idx, j_idx, rel_span))

    # --- noisy parse -------------------------------------------------------
    node_index: dict[int, int] = {}
    parse_nodes: list[ParseNode] = []
    for p in phrases:
        if rng.random() < cfg.parse_node_drop:
            continue
        span = p.span
        if rng.random() < cfg.parse_span_jitter and span[1] - span[0] > 1:
            span = (span[0] + 1, span[1])
        node_index[p.id] = len(parse_nodes)
        parse_nodes.append(ParseNode(span, " ".join(tokens[span[0]:span[1]])))
    parse_edges: list[ParseEdge] = []
    for (i_idx, j_idx, rel_span) in clause_edges:
        if rng.random() < cfg.parse_edge_drop:
            continue
        if i_idx in node_index and j_idx in node_index:
            parse_edges.append(ParseEdge(node_index[i_idx], node_index[j_idx],
                                         rel_span))

    # --- proposals ---------------------------------------------------------
    prop_rng = np.random.default_rng(
        np.random.SeedSequence([cfg.data_seed, scene.scene_id, 2]))
    mentioned_objects = {oid for p in phrases for oid in p.object_ids}
    covered = [Box.from_array(p.gt_box) for p in phrases]
    covered += [o.box for o in scene.objects if o.id not in mentioned_objects]
    boxes, appearance = generate_proposals(scene, covered, cfg, prop_rng)

    return GroundingSample(
        scene_id=scene.scene_id,
        split=split,
        tokens=tokens,
        phrases=phrases,
        parse=RawParse(parse_nodes, parse_edges),
        proposal_boxes=boxes,
        proposal_appearance=appearance,
        scene=_scene_to_json(scene),
    )


def generate_dataset(cfg: Config) -> dict[str, list[GroundingSample]]:
    """Train/val/test splits over disjoint scene-id ranges."""
    splits = {
        "train": range(0, cfg.train_scenes),
        "val": range(cfg.train_scenes, cfg.train_scenes + cfg.val_scenes),
        "test": range(cfg.train_scenes + cfg.val_scenes,
                      cfg.train_scenes + cfg.val_scenes + cfg.test_scenes),
    }
    out: dict[str, list[GroundingSample]] = {}
    for split, ids in splits.items():
        out[split] = [render_sample(generate_scene(i, cfg), cfg, split)
                      for i in ids]
    return out
