"""Forward pass of the joint grounding model for one (scene, scene graph) pair."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .encoder import encode_phrases
from .inference import BinaryFactor, FactorGraph, GroundingResult, propagate
from .potentials import Scene, binary_log_potentials, region_features, unary_log_potentials
from .scene_graph import SceneGraph


@dataclass
class Forward:
    factor_graph: FactorGraph | None
    log_unary: list
    log_marginals: list  # one (N,) log-probability row per node
    referent: int

    @property
    def referent_log_marginal(self) -> ad.Tensor:
        return self.log_marginals[self.referent]

    def result(self) -> GroundingResult:
        marg = np.exp(np.stack([ad.value_of(m) for m in self.log_marginals]))
        return GroundingResult(marg, self.referent)


def _node_log_unary(weights, feats, graph: SceneGraph) -> ad.Tensor:
    enc = encode_phrases([n.tokens() for n in graph.nodes], weights)
    return unary_log_potentials(feats, enc, weights)


def build_model_factor_graph(weights, scene: Scene, graph: SceneGraph, appearance=None) -> FactorGraph:
    """Encode every node and edge and evaluate their potential tables."""
    feats = region_features(scene, weights, appearance)
    unary = _node_log_unary(weights, feats, graph)
    log_unary = [ad.getitem(unary, i) for i in range(graph.num_nodes)]
    binary = []
    if graph.edges:
        enc = encode_phrases([e.relation for e in graph.edges], weights)
        tables = binary_log_potentials(feats, enc, weights)
        binary = [BinaryFactor(e.subject, e.object, ad.getitem(tables, k))
                  for k, e in enumerate(graph.edges)]
    return FactorGraph(scene.num_regions, log_unary, binary, root=graph.referent)


def forward(weights, scene: Scene, graph: SceneGraph, marginalize: bool = True,
            appearance=None) -> Forward:
    """Per-node log-marginals.

    With ``marginalize`` off, each node is scored by its unary row alone and
    the binary networks are not evaluated.
    """
    if not marginalize:
        feats = region_features(scene, weights, appearance)
        unary = _node_log_unary(weights, feats, graph)
        log_unary = [ad.getitem(unary, i) for i in range(graph.num_nodes)]
        return Forward(None, log_unary, log_unary, graph.referent)
    fg = build_model_factor_graph(weights, scene, graph, appearance)
    out = propagate(fg)
    return Forward(fg, fg.log_unary, out.log_marginals, graph.referent)


def predict(params, scene: Scene, graph: SceneGraph, marginalize: bool = True) -> GroundingResult:
    return forward(params, scene, graph, marginalize).result()
