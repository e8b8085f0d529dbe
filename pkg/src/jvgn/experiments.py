"""Synthetic experiments shared by the acceptance tests and scripts/."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .encoder import Vocabulary
from .evaluation import evaluate
from .expr_parser import default_grammar
from .params import ModelDims, ModelParams
from .synth import SynthSpec, generate_synthetic_dataset
from .training import FitResult, TrainConfig, fit

# the referent always shares noun and attribute with two look-alikes, so a
# unary-only model is capped at about 1/3 referent accuracy
DISTRACTOR_HEAVY = SynthSpec(num_train=2000, num_val=0, num_test=500, regions=8, min_nodes=2, max_nodes=3,
                             min_distractors=2, max_distractors=2, same_attribute_prob=1.0)
# half the look-alikes differ in attribute and appearance noise is large
MIXED = SynthSpec(num_train=2000, num_val=0, num_test=500, regions=8, min_nodes=2, max_nodes=3,
                  min_distractors=2, max_distractors=2, same_attribute_prob=0.5, noise=2.5)


@dataclass
class Ablation:
    """Referent/supporting accuracy for every (train, infer) marginalization pair."""
    full: FitResult
    baseline: FitResult
    full_seconds: float
    baseline_seconds: float
    grid: dict = field(default_factory=dict)  # (train_marg, infer_marg) -> evaluate() dict

    def summary(self) -> dict:
        rows = []
        for (tr, inf), m in sorted(self.grid.items()):
            rows.append({"train_marginalization": tr, "infer_marginalization": inf,
                         "referent_acc": m["referent_acc"], "supporting_acc": m["supporting_acc"]})
        return {"rows": rows, "full_seconds": self.full_seconds, "baseline_seconds": self.baseline_seconds,
                "full_history": [h.referent_acc for h in self.full.history]}


def run_ablation(spec: SynthSpec, seed: int = 0, config: TrainConfig | None = None,
                 dims: ModelDims = ModelDims(), data=None) -> Ablation:
    """Train with and without marginalization, then evaluate both ways."""
    data = data if data is not None else generate_synthetic_dataset(spec, seed)
    config = config or TrainConfig(seed=seed)
    init = ModelParams.init(Vocabulary(default_grammar().lexicon()), dims, seed=seed)
    runs = {}
    for marg in (True, False):
        cfg = TrainConfig(**(config.to_dict() | {"marginalize": marg}))
        t0 = time.perf_counter()
        res = fit(data["train"], cfg, init)
        runs[marg] = (res, time.perf_counter() - t0)
    grid = {(tr, inf): evaluate(data["test"], runs[tr][0].params, inf)
            for tr in (True, False) for inf in (True, False)}
    return Ablation(runs[True][0], runs[False][0], runs[True][1], runs[False][1], grid)
