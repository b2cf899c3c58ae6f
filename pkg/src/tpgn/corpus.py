"""Synthetic visual scenes with gold captions and proposition tuples.

A scene is 1-3 colored shapes on a unit canvas plus spatial relations
that are consistent with the shape positions.  Captions instantiate a
determiner / adjective? / noun / verb? / preposition template per
relation clause; every caption parses back to exactly the scene's
tuple set, which is what both evaluation and challenge grading compare
against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractViolation

__all__ = [
    "GrammarSpec",
    "default_grammar",
    "SceneObject",
    "Relation",
    "Scene",
    "SceneGraph",
    "sample_scene",
    "validate_scene",
    "scene_tuples",
    "gold_captions",
    "scene_features",
    "feature_size",
    "render_svg",
    "CorpusSplit",
    "build_split",
    "DEFAULT_SPLITS",
]

NOUNS = ("circle", "square", "triangle", "star", "diamond", "hexagon",
         "pentagon", "ring", "cross", "arrow", "heart", "crescent",
         "oval", "wedge", "bolt")
ATTRIBUTES = ("red", "blue", "green", "yellow", "purple", "orange")
PREPOSITIONS = ("above", "below", "beside", "near", "atop")
VERBS = ("sitting", "standing", "floating")
DETERMINERS = ("a", "the")
CONJUNCTION = "and"
START, END, UNK = "<s>", "</s>", "<unk>"

# slot schema per clause: DET ADJ? NOUN VERB? (PREP DET ADJ? NOUN)?
CLAUSE_TEMPLATE = (("DET", False), ("ADJ", True), ("NOUN", False),
                   ("VERB", True), ("PREP", True), ("DET", True),
                   ("ADJ", True), ("NOUN", True))

DEFAULT_SPLITS = {"train": (0, 2000), "val": (2000, 2200),
                  "test": (2200, 2400)}


@dataclass(frozen=True)
class GrammarSpec:
    nouns: tuple[str, ...] = NOUNS
    attributes: tuple[str, ...] = ATTRIBUTES
    prepositions: tuple[str, ...] = PREPOSITIONS
    verbs: tuple[str, ...] = VERBS
    determiners: tuple[str, ...] = DETERMINERS
    conjunction: str = CONJUNCTION

    @property
    def vocab(self) -> tuple[str, ...]:
        return ((START, END, UNK) + self.determiners + self.attributes +
                self.nouns + self.verbs + self.prepositions +
                (self.conjunction,))

    @property
    def word_to_id(self) -> dict[str, int]:
        return {w: i for i, w in enumerate(self.vocab)}

    @property
    def start_id(self) -> int:
        return 0

    @property
    def end_id(self) -> int:
        return 1

    @property
    def unk_id(self) -> int:
        return 2

    def pos_of(self, word: str) -> str:
        if word in self.determiners:
            return "DET"
        if word in self.attributes:
            return "ADJ"
        if word in self.nouns:
            return "NOUN"
        if word in self.verbs:
            return "VERB"
        if word in self.prepositions:
            return "PREP"
        if word == self.conjunction:
            return "CONJ"
        if word in (START, END, UNK):
            return "SPECIAL"
        return "UNKNOWN"

    @property
    def pos_tags(self) -> tuple[str, ...]:
        return ("DET", "ADJ", "NOUN", "VERB", "PREP", "CONJ")

    def encode(self, tokens) -> list[int]:
        w2i = self.word_to_id
        unk = self.unk_id
        return [w2i.get(t, unk) for t in tokens]

    def decode(self, ids) -> list[str]:
        vocab = self.vocab
        return [vocab[i] for i in ids]


def default_grammar() -> GrammarSpec:
    return GrammarSpec()


@dataclass(frozen=True)
class SceneObject:
    noun: str
    attribute: str | None
    x: float
    y: float


@dataclass(frozen=True)
class Relation:
    subject: int
    prep: str
    object: int


@dataclass
class Scene:
    objects: list[SceneObject]
    relations: list[Relation]
    seed: int

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "objects": [{"noun": o.noun, "attribute": o.attribute,
                         "x": o.x, "y": o.y} for o in self.objects],
            "relations": [[r.subject, r.prep, r.object]
                          for r in self.relations],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scene":
        return cls(
            objects=[SceneObject(o["noun"], o["attribute"], o["x"], o["y"])
                     for o in doc["objects"]],
            relations=[Relation(int(s), p, int(o))
                       for s, p, o in doc["relations"]],
            seed=int(doc["seed"]))


@dataclass
class SceneGraph:
    """Proposition set: (noun), (noun, attribute), (subj, prep, obj)."""

    tuples: frozenset


# relation geometry: margins used by the validator (the sampler constructs
# positions strictly inside these bounds)
_GAP = 0.12
_ALIGN = 0.10
_NEAR = 0.32


def _relation_holds(prep: str, s: SceneObject, o: SceneObject) -> bool:
    dx, dy = s.x - o.x, s.y - o.y
    dist = float(np.hypot(dx, dy))
    if prep == "above":
        return dy <= -_GAP
    if prep == "below":
        return dy >= _GAP
    if prep == "atop":
        return dy <= -_GAP and abs(dx) <= _ALIGN
    if prep == "beside":
        return abs(dy) <= _ALIGN and abs(dx) >= _GAP
    if prep == "near":
        return 0.0 < dist <= _NEAR
    return False


def _place_subject(rng, prep: str, ox: float, oy: float) -> tuple[float, float]:
    """Subject coordinates satisfying ``prep`` relative to (ox, oy)."""
    if prep == "above":
        return (_clamp(ox + rng.uniform(-0.18, 0.18)),
                oy - rng.uniform(0.16, 0.34))
    if prep == "below":
        return (_clamp(ox + rng.uniform(-0.18, 0.18)),
                oy + rng.uniform(0.16, 0.34))
    if prep == "atop":
        return (_clamp(ox + rng.uniform(-0.07, 0.07), ox - 0.09, ox + 0.09),
                oy - rng.uniform(0.16, 0.3))
    if prep == "beside":
        side = 1.0 if rng.random() < 0.5 else -1.0
        return (ox + side * rng.uniform(0.14, 0.3),
                _clamp(oy + rng.uniform(-0.07, 0.07), oy - 0.09, oy + 0.09))
    # near
    ang = rng.uniform(0, 2 * np.pi)
    rad = rng.uniform(0.08, 0.28)
    return ox + rad * np.cos(ang), oy + rad * np.sin(ang)


def _clamp(v: float, lo: float = 0.05, hi: float = 0.95) -> float:
    return float(min(max(v, lo), hi))


def _feasible_preps(ox: float, oy: float) -> list[str]:
    out = []
    if oy - 0.16 >= 0.05:
        out.extend(["above", "atop"])
    if oy + 0.16 <= 0.95:
        out.append("below")
    if ox - 0.14 >= 0.05 or ox + 0.14 <= 0.95:
        out.append("beside")
    out.append("near")
    return sorted(out)


def _place_checked(rng, prep, anchor) -> tuple[float, float]:
    for _ in range(64):
        x, y = _place_subject(rng, prep, anchor.x, anchor.y)
        cand = SceneObject("_", None, _clamp(x), _clamp(y))
        if _relation_holds(prep, cand, anchor):
            return cand.x, cand.y
    raise AssertionError(f"could not place subject for {prep}")


def sample_scene(seed: int, grammar: GrammarSpec | None = None) -> Scene:
    """Deterministic scene draw: 1-3 distinct-noun objects, 0-2 relations
    consistent with the sampled positions."""
    g = grammar or default_grammar()
    rng = np.random.default_rng(seed)
    n = int(rng.choice([1, 2, 3], p=[0.35, 0.5, 0.15]))
    noun_idx = rng.choice(len(g.nouns), size=n, replace=False)
    attrs = [g.attributes[int(rng.integers(len(g.attributes)))]
             if rng.random() < 0.75 else None for _ in range(n)]

    objects: list[SceneObject] = []
    relations: list[Relation] = []
    if n == 1:
        objects.append(SceneObject(g.nouns[int(noun_idx[0])], attrs[0],
                                   round(rng.uniform(0.15, 0.85), 4),
                                   round(rng.uniform(0.15, 0.85), 4)))
    else:
        # anchor object (index 1) first, then subject (index 0) against it
        ox = rng.uniform(0.2, 0.8)
        oy = rng.uniform(0.3, 0.7)
        anchor = SceneObject(g.nouns[int(noun_idx[1])], attrs[1],
                             round(ox, 4), round(oy, 4))
        prep = str(rng.choice(sorted(_feasible_preps(anchor.x, anchor.y))))
        sx, sy = _place_checked(rng, prep, anchor)
        subject = SceneObject(g.nouns[int(noun_idx[0])], attrs[0],
                              round(sx, 4), round(sy, 4))
        objects.extend([subject, anchor])
        relations.append(Relation(0, prep, 1))
        if n == 3:
            target = int(rng.integers(2))
            prep2 = str(rng.choice(_feasible_preps(objects[target].x,
                                                   objects[target].y)))
            tx, ty = _place_checked(rng, prep2, objects[target])
            third = SceneObject(g.nouns[int(noun_idx[2])], attrs[2],
                                round(tx, 4), round(ty, 4))
            objects.append(third)
            relations.append(Relation(2, prep2, target))
    scene = Scene(objects=objects, relations=relations, seed=seed)
    validate_scene(scene, g)
    return scene


def validate_scene(scene: Scene, grammar: GrammarSpec | None = None) -> None:
    """Raise ContractViolation unless all scene invariants hold."""
    g = grammar or default_grammar()
    if not 1 <= len(scene.objects) <= 3:
        raise ContractViolation("scene must have 1-3 objects")
    nouns = [o.noun for o in scene.objects]
    if len(set(nouns)) != len(nouns):
        raise ContractViolation("object nouns must be distinct")
    for o in scene.objects:
        if o.noun not in g.nouns:
            raise ContractViolation(f"unknown noun {o.noun!r}")
        if o.attribute is not None and o.attribute not in g.attributes:
            raise ContractViolation(f"unknown attribute {o.attribute!r}")
        if not (0.0 <= o.x <= 1.0 and 0.0 <= o.y <= 1.0):
            raise ContractViolation("object outside unit canvas")
    for r in scene.relations:
        if r.prep not in g.prepositions:
            raise ContractViolation(f"unknown preposition {r.prep!r}")
        if not (0 <= r.subject < len(scene.objects)
                and 0 <= r.object < len(scene.objects)):
            raise ContractViolation("relation index out of range")
        if r.subject == r.object:
            raise ContractViolation("relation must join distinct objects")
        if not _relation_holds(r.prep, scene.objects[r.subject],
                               scene.objects[r.object]):
            raise ContractViolation(
                f"{r.prep} inconsistent with positions in scene {scene.seed}")


def scene_tuples(scene: Scene) -> SceneGraph:
    """Every object, attribute and relation as a proposition tuple."""
    out = set()
    for o in scene.objects:
        out.add((o.noun,))
        if o.attribute is not None:
            out.add((o.noun, o.attribute))
    for r in scene.relations:
        out.add((scene.objects[r.subject].noun, r.prep,
                 scene.objects[r.object].noun))
    return SceneGraph(tuples=frozenset(out))


def _np_phrase(obj: SceneObject, det: str, with_attr: bool = True) -> list:
    words = [det]
    if with_attr and obj.attribute is not None:
        words.append(obj.attribute)
    words.append(obj.noun)
    return words


def gold_captions(scene: Scene, grammar: GrammarSpec | None = None
                  ) -> list[str]:
    """At least two references per scene; all parse to the scene's tuples.

    The first caption is the canonical form (indefinite determiners, no
    posture verb) used as the training target; the second swaps in definite
    determiners and a posture verb, neither of which carries tuple content.
    """
    g = grammar or default_grammar()
    verb = g.verbs[scene.seed % len(g.verbs)]

    def build(det: str, verb_word: str | None) -> str:
        words: list[str] = []
        if not scene.relations:
            words += _np_phrase(scene.objects[0], det)
            if verb_word:
                words.append(verb_word)
        else:
            for i, r in enumerate(scene.relations):
                if i > 0:
                    words.append(g.conjunction)
                subj = scene.objects[r.subject]
                obj = scene.objects[r.object]
                first_mention = i == 0
                words += _np_phrase(subj, det)
                if verb_word:
                    words.append(verb_word)
                words.append(r.prep)
                if first_mention:
                    words += _np_phrase(obj, det)
                else:
                    # repeated mention: definite, attribute already stated
                    words += ["the", obj.noun]
        return " ".join(words)

    return [build("a", None), build("the", verb)]


# ---------------------------------------------------------------------------
# feature encoding

_MAX_OBJECTS = 3
_MAX_RELATIONS = 2


def feature_size(grammar: GrammarSpec | None = None) -> int:
    g = grammar or default_grammar()
    per_obj = 1 + len(g.nouns) + len(g.attributes) + 2
    per_rel = 1 + _MAX_OBJECTS + len(g.prepositions) + _MAX_OBJECTS
    return _MAX_OBJECTS * per_obj + _MAX_RELATIONS * per_rel


def scene_features(scene: Scene, d_v: int | None = None,
                   grammar: GrammarSpec | None = None) -> np.ndarray:
    """Deterministic, injective scene encoding.

    Layout per object slot: [present, noun one-hot, attribute one-hot, x, y];
    per relation slot: [present, subject one-hot, prep one-hot, object
    one-hot]; zero-padded to d_v.
    """
    g = grammar or default_grammar()
    base = feature_size(g)
    if d_v is None:
        d_v = base
    if d_v < base:
        raise ContractViolation(
            f"d_v={d_v} too small: feature layout needs {base}")
    out = np.zeros(d_v)
    per_obj = 1 + len(g.nouns) + len(g.attributes) + 2
    for i, o in enumerate(scene.objects):
        off = i * per_obj
        out[off] = 1.0
        out[off + 1 + g.nouns.index(o.noun)] = 1.0
        if o.attribute is not None:
            out[off + 1 + len(g.nouns) + g.attributes.index(o.attribute)] = 1.0
        out[off + per_obj - 2] = o.x
        out[off + per_obj - 1] = o.y
    rel_base = _MAX_OBJECTS * per_obj
    per_rel = 1 + _MAX_OBJECTS + len(g.prepositions) + _MAX_OBJECTS
    for j, r in enumerate(scene.relations):
        off = rel_base + j * per_rel
        out[off] = 1.0
        out[off + 1 + r.subject] = 1.0
        out[off + 1 + _MAX_OBJECTS + g.prepositions.index(r.prep)] = 1.0
        out[off + 1 + _MAX_OBJECTS + len(g.prepositions) + r.object] = 1.0
    return out


# ---------------------------------------------------------------------------
# SVG rendering

_CANVAS = 320
_SIZE = 34.0

_COLORS = {
    "red": "#e53935", "blue": "#1e88e5", "green": "#43a047",
    "yellow": "#fdd835", "purple": "#8e24aa", "orange": "#fb8c00",
    None: "#9e9e9e",
}


def _poly(cx, cy, pts) -> str:
    return " ".join(f"{cx + px:.2f},{cy + py:.2f}" for px, py in pts)


def _regular(n: int, r: float, phase: float = -np.pi / 2):
    return [(r * np.cos(phase + 2 * np.pi * k / n),
             r * np.sin(phase + 2 * np.pi * k / n)) for k in range(n)]


def _star(r: float):
    pts = []
    for k in range(10):
        rad = r if k % 2 == 0 else 0.45 * r
        ang = -np.pi / 2 + np.pi * k / 5
        pts.append((rad * np.cos(ang), rad * np.sin(ang)))
    return pts


def _shape_element(noun: str, cx: float, cy: float, fill: str) -> str:
    s = _SIZE
    common = f'fill="{fill}" data-cx="{cx:.2f}" data-cy="{cy:.2f}"'
    if noun == "circle":
        return f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{s / 2:.2f}" {common}/>'
    if noun == "ring":
        return (f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{s / 2:.2f}" '
                f'fill="none" stroke="{fill}" stroke-width="7" '
                f'data-cx="{cx:.2f}" data-cy="{cy:.2f}"/>')
    if noun == "square":
        return (f'<rect x="{cx - s / 2:.2f}" y="{cy - s / 2:.2f}" '
                f'width="{s:.2f}" height="{s:.2f}" {common}/>')
    if noun == "oval":
        return (f'<ellipse cx="{cx:.2f}" cy="{cy:.2f}" rx="{s / 2:.2f}" '
                f'ry="{s / 3.2:.2f}" {common}/>')
    if noun == "heart":
        h = s / 2
        d = (f"M {cx:.2f} {cy + h:.2f} C {cx - 1.6 * h:.2f} {cy - 0.3 * h:.2f} "
             f"{cx - 0.6 * h:.2f} {cy - 1.2 * h:.2f} {cx:.2f} {cy - 0.3 * h:.2f} "
             f"C {cx + 0.6 * h:.2f} {cy - 1.2 * h:.2f} "
             f"{cx + 1.6 * h:.2f} {cy - 0.3 * h:.2f} {cx:.2f} {cy + h:.2f} Z")
        return f'<path d="{d}" {common}/>'
    if noun == "crescent":
        h = s / 2
        d = (f"M {cx + 0.4 * h:.2f} {cy - h:.2f} A {h:.2f} {h:.2f} 0 1 0 "
             f"{cx + 0.4 * h:.2f} {cy + h:.2f} A {0.72 * h:.2f} {h:.2f} 0 1 1 "
             f"{cx + 0.4 * h:.2f} {cy - h:.2f} Z")
        return f'<path d="{d}" {common}/>'
    r = s / 2
    if noun == "triangle":
        pts = _regular(3, r)
    elif noun == "diamond":
        pts = [(0, -r), (0.7 * r, 0), (0, r), (-0.7 * r, 0)]
    elif noun == "hexagon":
        pts = _regular(6, r)
    elif noun == "pentagon":
        pts = _regular(5, r)
    elif noun == "star":
        pts = _star(r)
    elif noun == "cross":
        a = 0.34 * r
        pts = [(-a, -r), (a, -r), (a, -a), (r, -a), (r, a), (a, a), (a, r),
               (-a, r), (-a, a), (-r, a), (-r, -a), (-a, -a)]
    elif noun == "arrow":
        pts = [(0, -r), (r, 0.1 * r), (0.4 * r, 0.1 * r), (0.4 * r, r),
               (-0.4 * r, r), (-0.4 * r, 0.1 * r), (-r, 0.1 * r)]
    elif noun == "wedge":
        pts = [(-r, r), (r, r), (r, -r)]
    elif noun == "bolt":
        pts = [(0.1 * r, -r), (-0.6 * r, 0.15 * r), (-0.05 * r, 0.15 * r),
               (-0.1 * r, r), (0.6 * r, -0.15 * r), (0.05 * r, -0.15 * r)]
    else:
        raise ContractViolation(f"no renderer for noun {noun!r}")
    return f'<polygon points="{_poly(cx, cy, pts)}" {common}/>'


def render_svg(scene: Scene) -> str:
    """One shape element per object; byte-identical across runs."""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_CANVAS}" '
        f'height="{_CANVAS}" viewBox="0 0 {_CANVAS} {_CANVAS}">',
        f'<rect x="0" y="0" width="{_CANVAS}" height="{_CANVAS}" '
        f'fill="#fafafa"/>',
    ]
    for o in scene.objects:
        cx, cy = o.x * _CANVAS, o.y * _CANVAS
        parts.append(_shape_element(o.noun, cx, cy, _COLORS[o.attribute]))
    parts.append("</svg>")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# corpus files


@dataclass
class CorpusSplit:
    name: str
    seed_range: tuple[int, int]
    d_v: int
    scenes: list[Scene] = field(default_factory=list)
    captions: list[list[str]] = field(default_factory=list)
    tuples: list[frozenset] = field(default_factory=list)
    features: list[np.ndarray] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "split": self.name,
            "seed_range": list(self.seed_range),
            "d_v": self.d_v,
            "scenes": [
                {**scene.to_dict(),
                 "captions": caps,
                 "tuples": sorted(list(t) for t in tup),
                 "features": [float(x) for x in feat]}
                for scene, caps, tup, feat in zip(
                    self.scenes, self.captions, self.tuples, self.features)
            ],
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CorpusSplit":
        doc = json.loads(text)
        split = cls(name=doc["split"], seed_range=tuple(doc["seed_range"]),
                    d_v=int(doc["d_v"]))
        for s in doc["scenes"]:
            split.scenes.append(Scene.from_dict(s))
            split.captions.append(list(s["captions"]))
            split.tuples.append(frozenset(tuple(t) for t in s["tuples"]))
            split.features.append(np.asarray(s["features"], dtype=float))
        return split


def build_split(name: str, seed_lo: int, seed_hi: int,
                d_v: int | None = None,
                grammar: GrammarSpec | None = None) -> CorpusSplit:
    g = grammar or default_grammar()
    if d_v is None:
        d_v = feature_size(g)
    split = CorpusSplit(name=name, seed_range=(seed_lo, seed_hi), d_v=d_v)
    for seed in range(seed_lo, seed_hi):
        scene = sample_scene(seed, g)
        split.scenes.append(scene)
        split.captions.append(gold_captions(scene, g))
        split.tuples.append(scene_tuples(scene).tuples)
        split.features.append(scene_features(scene, d_v, g))
    return split
