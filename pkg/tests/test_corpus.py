import xml.etree.ElementTree as ET

import numpy as np
import pytest

from tpgn.corpus import (CorpusSplit, Relation, Scene, SceneObject,
                         build_split, default_grammar, feature_size,
                         gold_captions, render_svg, sample_scene,
                         scene_features, scene_tuples, validate_scene)
from tpgn.metrics import parse_caption_tuples
from tpgn.tensor import ContractViolation

G = default_grammar()

_SHAPE_TAGS = {"circle", "rect", "ellipse", "polygon", "path"}


class TestGrammar:
    def test_vocab_order_and_specials(self):
        assert G.vocab[G.start_id] == "<s>"
        assert G.vocab[G.end_id] == "</s>"
        assert G.vocab[G.unk_id] == "<unk>"
        assert len(set(G.vocab)) == len(G.vocab)

    def test_pos_tags(self):
        assert G.pos_of("a") == "DET"
        assert G.pos_of("red") == "ADJ"
        assert G.pos_of("circle") == "NOUN"
        assert G.pos_of("sitting") == "VERB"
        assert G.pos_of("above") == "PREP"
        assert G.pos_of("and") == "CONJ"
        assert G.pos_of("xyzzy") == "UNKNOWN"
        assert len(G.pos_tags) == 6

    def test_encode_decode(self):
        ids = G.encode(["a", "red", "circle", "zzz"])
        assert ids[-1] == G.unk_id
        assert G.decode(ids[:3]) == ["a", "red", "circle"]


class TestSampleScene:
    def test_deterministic(self):
        assert sample_scene(123) == sample_scene(123)

    def test_validator_sweep_10k(self):
        for seed in range(10_000):
            sample_scene(seed)  # validates internally

    def test_diversity(self):
        triples = set()
        for seed in range(1000):
            sc = sample_scene(seed)
            for r in sc.relations:
                triples.add((sc.objects[r.subject].noun, r.prep,
                             sc.objects[r.object].noun))
        assert len(triples) >= 100

    def test_relation_consistency_violation_detected(self):
        bad = Scene(
            objects=[SceneObject("circle", None, 0.5, 0.8),
                     SceneObject("square", None, 0.5, 0.2)],
            relations=[Relation(0, "above", 1)], seed=-1)
        with pytest.raises(ContractViolation):
            validate_scene(bad)


class TestSceneTuples:
    def test_single_plain_object(self):
        sc = Scene(objects=[SceneObject("circle", None, 0.5, 0.5)],
                   relations=[], seed=-1)
        assert scene_tuples(sc).tuples == frozenset({("circle",)})

    def test_documented_example(self):
        sc = Scene(
            objects=[SceneObject("circle", "red", 0.5, 0.2),
                     SceneObject("square", "blue", 0.5, 0.7)],
            relations=[Relation(0, "above", 1)], seed=-1)
        assert scene_tuples(sc).tuples == frozenset({
            ("circle",), ("circle", "red"), ("square",), ("square", "blue"),
            ("circle", "above", "square")})

    def test_counting_identity(self):
        for seed in range(300):
            sc = sample_scene(seed)
            n_attr = sum(1 for o in sc.objects if o.attribute is not None)
            expect = len(sc.objects) + n_attr + len(sc.relations)
            assert len(scene_tuples(sc).tuples) == expect


class TestGoldCaptions:
    def test_red_circle_above_blue_square(self):
        sc = Scene(
            objects=[SceneObject("circle", "red", 0.5, 0.2),
                     SceneObject("square", "blue", 0.5, 0.7)],
            relations=[Relation(0, "above", 1)], seed=0)
        caps = gold_captions(sc)
        assert "a red circle above a blue square" in caps

    def test_at_least_two(self):
        for seed in range(100):
            assert len(gold_captions(sample_scene(seed))) >= 2

    def test_roundtrip_1000_scenes(self):
        for seed in range(1000):
            sc = sample_scene(seed)
            tup = scene_tuples(sc).tuples
            for cap in gold_captions(sc):
                assert parse_caption_tuples(cap, G).tuples == tup, (seed, cap)


class TestSceneFeatures:
    def test_noun_changes_features(self):
        sc = sample_scene(4)
        other = Scene(
            objects=[SceneObject("star" if sc.objects[0].noun != "star"
                                 else "cross", sc.objects[0].attribute,
                                 sc.objects[0].x, sc.objects[0].y)]
            + sc.objects[1:],
            relations=sc.relations, seed=sc.seed)
        assert not np.array_equal(scene_features(sc), scene_features(other))

    def test_no_relation_zero_block(self):
        sc = Scene(objects=[SceneObject("circle", None, 0.3, 0.3)],
                   relations=[], seed=-1)
        per_obj = 1 + len(G.nouns) + len(G.attributes) + 2
        feats = scene_features(sc)
        assert np.array_equal(feats[3 * per_obj:], np.zeros(24))

    def test_layout_hand_check_single_object(self):
        sc = Scene(objects=[SceneObject("square", "blue", 0.25, 0.75)],
                   relations=[], seed=-1)
        f = scene_features(sc)
        # slot 0: [present, 15 nouns, 6 attributes, x, y]
        assert f[0] == 1.0
        assert f[1 + G.nouns.index("square")] == 1.0
        assert f[1 + len(G.nouns) + G.attributes.index("blue")] == 1.0
        assert f[1 + len(G.nouns) + len(G.attributes)] == 0.25
        assert f[1 + len(G.nouns) + len(G.attributes) + 1] == 0.75
        assert f.sum() == pytest.approx(4.0)  # 1 + 1 + 1 + 0.25 + 0.75

    def test_too_small_d_v_rejected(self):
        with pytest.raises(ContractViolation):
            scene_features(sample_scene(0), d_v=32)

    def test_padding(self):
        f = scene_features(sample_scene(0), d_v=feature_size() + 10)
        assert f.shape == (feature_size() + 10,)
        assert np.array_equal(f[feature_size():], np.zeros(10))


class TestRenderSvg:
    def test_byte_identical(self):
        sc = sample_scene(42)
        assert render_svg(sc) == render_svg(sc)

    def test_one_shape_element_per_object(self):
        for seed in range(80):
            sc = sample_scene(seed)
            root = ET.fromstring(render_svg(sc))
            shapes = [el for el in root
                      if el.tag.split("}")[-1] in _SHAPE_TAGS
                      and el.get("data-cx") is not None]
            assert len(shapes) == len(sc.objects)

    def test_every_noun_renders(self):
        for noun in G.nouns:
            sc = Scene(objects=[SceneObject(noun, "red", 0.5, 0.5)],
                       relations=[], seed=-1)
            ET.fromstring(render_svg(sc))

    def test_relation_geometry_self_parse(self):
        # parse our own output: above must mean smaller pixel y
        for seed in range(200):
            sc = sample_scene(seed)
            if not sc.relations:
                continue
            root = ET.fromstring(render_svg(sc))
            centers = [(float(el.get("data-cx")), float(el.get("data-cy")))
                       for el in root if el.get("data-cx") is not None]
            for r in sc.relations:
                (sx, sy), (ox, oy) = centers[r.subject], centers[r.object]
                if r.prep in ("above", "atop"):
                    assert sy < oy
                elif r.prep == "below":
                    assert sy > oy
                elif r.prep == "beside":
                    assert abs(sx - ox) > abs(sy - oy)


class TestCorpusSplit:
    def test_build_and_json_roundtrip(self):
        split = build_split("mini", 0, 25)
        text = split.to_json()
        again = CorpusSplit.from_json(text)
        assert again.to_json() == text
        assert len(again.scenes) == 25
        assert again.tuples == split.tuples
        for a, b in zip(again.features, split.features):
            assert np.array_equal(a, b)

    def test_split_ranges_disjoint(self):
        a = build_split("a", 0, 50)
        b = build_split("b", 50, 100)
        seeds_a = {s.seed for s in a.scenes}
        seeds_b = {s.seed for s in b.scenes}
        assert not (seeds_a & seeds_b)
