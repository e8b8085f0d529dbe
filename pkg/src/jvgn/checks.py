"""Randomized self-checks: BP against enumeration, gradients against finite differences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import Vocabulary
from .inference import BinaryFactor, FactorGraph, propagate, run_belief_propagation, sweep
from .oracle import brute_force_marginals, joint_table
from .params import ModelDims, ModelParams
from .potentials import Region, Scene
from .scene_graph import SceneGraph, SgEdge, SgNode
from .synth import Example
from .training import DET, GT, example_loss, finite_difference_gradient, gradients, relative_error


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def random_tree_edges(rng: np.random.Generator, m: int) -> list[tuple[int, int]]:
    """Random labelled tree on ``m`` nodes with random edge orientation."""
    order = rng.permutation(m)
    edges = []
    for pos in range(1, m):
        a, b = int(order[pos]), int(order[rng.integers(pos)])
        edges.append((a, b) if rng.random() < 0.5 else (b, a))
    return edges


def random_factor_graph(rng: np.random.Generator, m: int, n: int, scale: float = 2.0) -> FactorGraph:
    """Tree factor graph with softmax-normalized random potentials."""
    unary = [np.log(_softmax(scale * rng.normal(size=n))) for _ in range(m)]
    binary = [BinaryFactor(s, o, np.log(_softmax(scale * rng.normal(size=n * n))).reshape(n, n))
              for s, o in random_tree_edges(rng, m)]
    return FactorGraph(n, unary, binary, root=int(rng.integers(m)))


@dataclass
class OracleReport:
    trials: int
    max_marginal_error: float
    max_sweep_change: float
    max_row_sum_error: float
    max_log_partition_error: float


def oracle_check(trials: int = 1000, max_nodes: int = 5, max_regions: int = 6, seed: int = 0) -> OracleReport:
    rng = np.random.default_rng(seed)
    worst = np.zeros(4)
    for _ in range(trials):
        fg = random_factor_graph(rng, int(rng.integers(1, max_nodes + 1)), int(rng.integers(2, max_regions + 1)))
        out = propagate(fg)
        bp = run_belief_propagation(fg).marginals
        exact = brute_force_marginals(fg)
        _, change = sweep(fg, out.messages)
        log_z = float(np.log(joint_table(fg).partition))
        worst = np.maximum(worst, [
            np.max(np.abs(bp - exact)),
            change,
            np.max(np.abs(bp.sum(axis=1) - 1.0)),
            abs(float(out.log_partition.value) - log_z) / max(1.0, abs(log_z)),
        ])
    return OracleReport(trials, *map(float, worst))


SMALL_DIMS = ModelDims(d_emb=4, d_w=5, d_app=3, d_sp=2)
SMALL_VOCAB = ["red", "blue", "ball", "cube", "left", "of", "on", "spare"]


def random_example(rng: np.random.Generator, setting: str = GT, dims: ModelDims = SMALL_DIMS) -> Example:
    """A small random scene and scene graph (1..3 nodes, 2..4 regions)."""
    m = int(rng.integers(1, 4))
    n = int(rng.integers(2, 5))
    regions = []
    for _ in range(n):
        x1, y1 = rng.uniform(0, 60, size=2)
        w, h = rng.uniform(10, 40, size=2)
        regions.append(Region((x1, y1, x1 + w, y1 + h), rng.normal(size=dims.d_app)))
    scene = Scene(100.0, 100.0, tuple(regions))
    nouns, attrs = ["ball", "cube"], ["red", "blue"]
    nodes = tuple(SgNode(i, (nouns[rng.integers(2)],),
                         tuple((attrs[rng.integers(2)],) for _ in range(int(rng.integers(0, 2)))))
                  for i in range(m))
    rels = [("left", "of"), ("on",)]
    edges = tuple(SgEdge(p, rels[rng.integers(2)], c)
                  for c, p in ((c, int(rng.integers(c))) for c in range(1, m)))
    graph = SceneGraph(nodes, edges, 0)
    ctx = [int(rng.integers(n)) for _ in range(m)]
    ref = ctx[0]
    gt_box = None
    if setting == DET:
        x1, y1, x2, y2 = regions[ref].box
        gt_box = (x1 + 2.0, y1 + 1.0, x2 + 3.0, y2 - 1.0)
    return Example("random", scene, "", graph, ref, ctx, setting, gt_box)


def random_params(rng: np.random.Generator, dims: ModelDims = SMALL_DIMS, scale: float = 0.5) -> ModelParams:
    p = ModelParams.init(Vocabulary(SMALL_VOCAB), dims, seed=int(rng.integers(2**31)))
    return p.with_flat(scale * rng.normal(size=p.num_parameters))


@dataclass
class GradReport:
    instances: int
    parameters_checked: int
    max_relative_error: float
    worst: str


def grad_check(instances: int = 20, seed: int = 0, h: float = 1e-5) -> GradReport:
    rng = np.random.default_rng(seed)
    worst, where, checked = 0.0, "", 0
    for t in range(instances):
        setting = GT if t % 2 == 0 else DET
        ex = random_example(rng, setting)
        params = random_params(rng)
        analytic = gradients(ex, params)
        numeric = finite_difference_gradient(lambda p: example_loss(ex, p), params, h)
        err = relative_error(analytic, numeric)
        checked += err.size
        i = int(np.argmax(err))
        if err[i] > worst:
            worst, where = float(err[i]), f"instance {t}: {params.flat_names()[i]}"
    return GradReport(instances, checked, worst, where)
