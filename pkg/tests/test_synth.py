import json

import numpy as np
import pytest

from jvgn import scene_graph as sgm
from jvgn.expr_parser import default_grammar, parse_expression
from jvgn.synth import (RELATION_MARGINS, GenerationError, SynthSpec, generate_synthetic_dataset, load_dataset,
                        save_dataset)
from jvgn.training import DET, iou

SMALL = dict(num_train=20, num_val=5, num_test=10)


@pytest.fixture(scope="module")
def data():
    return generate_synthetic_dataset(SynthSpec(**SMALL), seed=4)


def dump(ds):
    return json.dumps({k: [e.to_dict() for e in v] for k, v in ds.items()}, sort_keys=True)


def test_tiny_inventory_expressions():
    spec = SynthSpec(num_train=10, num_val=0, num_test=0, regions=4, nouns=["ball"], attributes=["red", "blue"],
                     relations=[["left", "of"]], min_nodes=2, max_nodes=2, min_distractors=1, max_distractors=1)
    exprs = {e.expression for e in generate_synthetic_dataset(spec, 0)["train"]}
    assert exprs <= {"the red ball left of the blue ball", "the blue ball left of the red ball"}


def test_deterministic_bytes():
    a = generate_synthetic_dataset(SynthSpec(**SMALL), seed=11)
    b = generate_synthetic_dataset(SynthSpec(**SMALL), seed=11)
    assert dump(a) == dump(b)
    assert dump(a) != dump(generate_synthetic_dataset(SynthSpec(**SMALL), seed=12))


def test_single_region_rejected():
    with pytest.raises(ValueError):
        generate_synthetic_dataset(SynthSpec(regions=1), 0)


@pytest.mark.parametrize("bad", [dict(nouns=["zebra"]), dict(relations=[["wearing"]]), dict(nouns=[]),
                                 dict(regions=4), dict(setting="x")])
def test_incoherent_specs(bad):
    with pytest.raises(ValueError):
        SynthSpec(**bad).validate(default_grammar())


def test_unsatisfiable_placement():
    spec = SynthSpec(num_train=1, num_val=0, num_test=0, min_box=0.6, max_box=0.7, max_pair_iou=0.0, max_retries=5)
    with pytest.raises(GenerationError):
        generate_synthetic_dataset(spec, 0)


def test_examples_round_trip_through_parser(data):
    g = default_grammar()
    for ex in data["train"] + data["test"]:
        assert parse_expression(ex.expression, g) == ex.graph


def test_unique_and_disambiguating(data):
    for ex in data["train"]:
        sol = ex.context_regions
        assert sol[0] == ex.referent_region and len(set(sol)) == len(sol)
        boxes = ex.scene.boxes()
        # the expression holds for the stored grounding
        for e in ex.graph.edges:
            assert RELATION_MARGINS[e.relation](boxes[sol[e.subject]], boxes[sol[e.object]]) > 0
        # at least two regions share the referent's noun: the referent and a look-alike
        app = ex.scene.appearance()
        dists = np.linalg.norm(app - app[ex.referent_region], axis=1)
        assert np.sum(dists < np.median(dists)) >= 2


def test_det_variant_has_jittered_candidates():
    ds = generate_synthetic_dataset(SynthSpec(**SMALL, setting=DET), seed=2)
    for ex in ds["train"]:
        assert ex.setting == DET and ex.scene.num_regions > 8
        ious = [iou(r.box, ex.gt_box) for r in ex.scene.regions]
        assert max(ious) == 1.0
        assert any(0 < v < 1 for v in ious)


def test_save_load(tmp_path, data):
    spec = SynthSpec(**SMALL)
    root = save_dataset(tmp_path / "d", data, spec, seed=4)
    back, manifest = load_dataset(root)
    assert manifest["seed"] == 4 and SynthSpec.from_dict(manifest["spec"]) == spec
    assert dump(back) == dump(data)
    assert len(list((root / "train").glob("*.json"))) == SMALL["num_train"]
    one = json.loads((root / "train" / "train-000000.json").read_text())
    assert sgm.from_dict(one["scene_graph"]) == data["train"][0].graph


def test_load_rejects_foreign_dir(tmp_path):
    (tmp_path / "manifest.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_dataset(tmp_path)
