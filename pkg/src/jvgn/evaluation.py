"""Referent and supporting-object accuracy."""
from __future__ import annotations

from collections import defaultdict
from typing import Sequence

from .model import predict
from .training import GT, iou

DET_IOU = 0.5


def _correct(example, node: int, region: int) -> bool:
    gt_region = example.context_regions[node]
    if example.setting == GT:
        return region == gt_region
    return iou(example.scene.regions[region].box, example.scene.regions[gt_region].box) > DET_IOU


def score_groundings(examples: Sequence, groundings: Sequence[Sequence[int]]) -> dict:
    """Accuracy of precomputed per-node groundings (one list per example)."""
    tallies = defaultdict(lambda: [0, 0, 0, 0])  # ref ok, ref n, support ok, support n
    for ex, picks in zip(examples, groundings):
        for key in ("all", ex.setting):
            t = tallies[key]
            ref = ex.graph.referent
            t[0] += _correct(ex, ref, picks[ref])
            t[1] += 1
            for node in range(ex.graph.num_nodes):
                if node != ref:
                    t[2] += _correct(ex, node, picks[node])
                    t[3] += 1

    def summary(t):
        return {
            "referent_acc": t[0] / t[1] if t[1] else float("nan"),
            "supporting_acc": t[2] / t[3] if t[3] else float("nan"),
            "examples": t[1],
            "supporting_nodes": t[3],
        }

    out = summary(tallies.pop("all", [0, 0, 0, 0]))
    out["per_setting"] = {k: summary(v) for k, v in sorted(tallies.items())}
    return out


def evaluate(examples: Sequence, params, marginalize: bool = True) -> dict:
    """Ground every example and score it.

    With ``marginalize`` off, nodes are grounded by the argmax of their unary
    row. Context ground truth is read only here, never during training.
    """
    picks = [predict(params, ex.scene, ex.graph, marginalize).groundings for ex in examples]
    return score_groundings(examples, picks)
