"""Factor graphs over scene-graph nodes and exact sum-product belief propagation.

Messages live in the log domain. The schedule is one pass from the leaves to
the root (the referent) and one pass back, which is exact on a tree. All
updates are built from :mod:`jvgn.autodiff` operations, so the same code
serves plain inference and gradient computation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .scene_graph import SceneGraph


class NonFiniteMessageError(FloatingPointError):
    pass


@dataclass(frozen=True)
class BinaryFactor:
    subject: int
    object: int
    log_table: object  # (N, N) ndarray or Tensor, rows = subject state


@dataclass
class FactorGraph:
    num_states: int
    log_unary: list  # M entries of shape (N,)
    binary: list[BinaryFactor]
    root: int = 0

    @property
    def num_variables(self) -> int:
        return len(self.log_unary)

    @property
    def num_factors(self) -> int:
        return len(self.log_unary) + len(self.binary)

    def unary_table(self) -> np.ndarray:
        return np.exp(np.stack([ad.value_of(u) for u in self.log_unary]))

    def binary_tables(self) -> list[np.ndarray]:
        return [np.exp(ad.value_of(f.log_table)) for f in self.binary]

    def neighbors(self) -> list[list[tuple[int, int]]]:
        """Per variable, the (binary factor index, other variable) pairs."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.num_variables)]
        for k, f in enumerate(self.binary):
            adj[f.subject].append((k, f.object))
            adj[f.object].append((k, f.subject))
        return adj


def build_factor_graph(g: SceneGraph, unary, binary: Sequence) -> FactorGraph:
    """One variable and unary factor per node, one binary factor per edge.

    ``unary`` is the (M, N) table and ``binary`` one (N, N) table per edge, in
    edge order, oriented (subject state, object state). Potentials must be
    strictly positive.
    """
    unary = np.asarray(unary, dtype=np.float64)
    m = g.num_nodes
    if unary.ndim != 2 or unary.shape[0] != m:
        raise ValueError(f"unary table shape {unary.shape} does not match {m} nodes")
    n = unary.shape[1]
    if len(binary) != len(g.edges):
        raise ValueError(f"{len(binary)} binary tables for {len(g.edges)} edges")
    tables = [np.asarray(t, dtype=np.float64) for t in binary]
    for k, t in enumerate(tables):
        if t.shape != (n, n):
            raise ValueError(f"binary table {k} has shape {t.shape}, expected {(n, n)}")
    if np.any(unary <= 0) or any(np.any(t <= 0) for t in tables):
        raise ValueError("potentials must be strictly positive")
    with np.errstate(divide="raise"):
        return FactorGraph(
            num_states=n,
            log_unary=list(np.log(unary)),
            binary=[BinaryFactor(e.subject, e.object, np.log(t)) for e, t in zip(g.edges, tables)],
            root=g.referent,
        )


VAR, UNARY, BINARY = "v", "u", "b"


@dataclass
class MessageStore:
    """Log-domain messages keyed by ((kind, index), (kind, index))."""
    messages: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.messages[key]

    def __setitem__(self, key, value):
        self.messages[key] = value

    def __iter__(self):
        return iter(self.messages)

    def values(self) -> dict:
        return {k: ad.value_of(v) for k, v in self.messages.items()}


def init_messages(fg: FactorGraph) -> MessageStore:
    zeros = np.zeros(fg.num_states)
    store = MessageStore()
    for i in range(fg.num_variables):
        store[(VAR, i), (UNARY, i)] = zeros
        store[(UNARY, i), (VAR, i)] = zeros
    for k, f in enumerate(fg.binary):
        for v in (f.subject, f.object):
            store[(VAR, v), (BINARY, k)] = zeros
            store[(BINARY, k), (VAR, v)] = zeros
    return store


def _check(msg, key):
    # -inf entries are zero mass (e.g. a clamped one-hot unary); NaN, +inf or
    # an all -inf message mean the potentials are corrupt
    v = ad.value_of(msg)
    if np.any(np.isnan(v)) or np.any(v == np.inf) or np.all(v == -np.inf):
        raise NonFiniteMessageError(f"non-finite message {key[0]} -> {key[1]}")
    return msg


def _factor_to_var(f: BinaryFactor, target: int, incoming):
    """log sum_{other state} psi(., .) * exp(incoming message from the other variable)."""
    if target == f.object:
        return ad.logsumexp(ad.add(f.log_table, ad.reshape(incoming, (-1, 1))), axis=0)
    return ad.logsumexp(ad.add(f.log_table, ad.reshape(incoming, (1, -1))), axis=1)


def _tree_order(fg: FactorGraph, root: int):
    adj = fg.neighbors()
    parent_factor = {root: None}
    order = [root]
    for v in order:
        for k, w in adj[v]:
            if k == parent_factor[v]:
                continue
            if w in parent_factor:
                raise ValueError("factor graph contains a cycle")
            parent_factor[w] = k
            order.append(w)
    if len(order) != fg.num_variables:
        raise ValueError("factor graph is disconnected")
    return adj, parent_factor, order


@dataclass
class BPOutput:
    messages: MessageStore
    log_beliefs: list
    log_marginals: list
    log_partition: object


def propagate(fg: FactorGraph, root: int | None = None) -> BPOutput:
    """Leaves-to-root then root-to-leaves message passing.

    ``root`` defaults to the graph's root (the referent). Returned values are
    Tensors when any potential is a Tensor that requires grad.
    """
    root = fg.root if root is None else root
    adj, parent_factor, order = _tree_order(fg, root)
    store = init_messages(fg)

    def var_to_factor(v: int, exclude: int | None):
        terms = [fg.log_unary[v]]
        terms += [store[(BINARY, k), (VAR, v)] for k, _ in adj[v] if k != exclude]
        return ad.add_n(terms) if len(terms) > 1 else ad.as_tensor(terms[0])

    def send(v: int, k: int, w: int):
        key = ((VAR, v), (BINARY, k))
        store[key] = _check(var_to_factor(v, k), key)
        key = ((BINARY, k), (VAR, w))
        store[key] = _check(_factor_to_var(fg.binary[k], w, store[(VAR, v), (BINARY, k)]), key)

    for i in range(fg.num_variables):
        store[(UNARY, i), (VAR, i)] = fg.log_unary[i]
    for v in reversed(order[1:]):
        k = parent_factor[v]
        f = fg.binary[k]
        send(v, k, f.subject if f.object == v else f.object)
    for v in order:
        for k, w in adj[v]:
            if k != parent_factor[v]:
                send(v, k, w)

    log_beliefs, log_marginals = [], []
    for i in range(fg.num_variables):
        incoming = [store[(BINARY, k), (VAR, i)] for k, _ in adj[i]]
        store[(VAR, i), (UNARY, i)] = ad.add_n(incoming) if incoming else np.zeros(fg.num_states)
        belief = ad.add_n([fg.log_unary[i]] + incoming) if incoming else ad.as_tensor(fg.log_unary[i])
        log_beliefs.append(_check(belief, ((VAR, i), ("belief", i))))
        log_marginals.append(ad.log_softmax(belief))
    return BPOutput(store, log_beliefs, log_marginals, ad.logsumexp(log_beliefs[root]))


def sweep(fg: FactorGraph, store: MessageStore) -> tuple[MessageStore, float]:
    """One synchronous update of every message from the current store.

    Returns the new store and the largest absolute change of any entry.
    """
    old = store.values()
    adj = fg.neighbors()
    log_unary = [ad.value_of(u) for u in fg.log_unary]
    new = MessageStore()
    for i in range(fg.num_variables):
        into = {k: old[(BINARY, k), (VAR, i)] for k, _ in adj[i]}
        new[(UNARY, i), (VAR, i)] = log_unary[i]
        new[(VAR, i), (UNARY, i)] = sum(into.values(), np.zeros(fg.num_states))
        for k in into:
            others = [m for kk, m in into.items() if kk != k]
            new[(VAR, i), (BINARY, k)] = log_unary[i] + sum(others, np.zeros(fg.num_states))
    for k, f in enumerate(fg.binary):
        table = ad.value_of(f.log_table)
        bf = BinaryFactor(f.subject, f.object, table)
        new[(BINARY, k), (VAR, f.object)] = _factor_to_var(bf, f.object, old[(VAR, f.subject), (BINARY, k)]).value
        new[(BINARY, k), (VAR, f.subject)] = _factor_to_var(bf, f.subject, old[(VAR, f.object), (BINARY, k)]).value
    # equal entries (including matching -inf) count as no change
    change = max(float(np.max(np.where(new[key] == old[key], 0.0, np.abs(new[key] - old[key]))))
                 for key in old)
    return new, change


@dataclass
class GroundingResult:
    marginals: np.ndarray  # (M, N)
    referent: int
    log_partition: float = float("nan")

    @property
    def groundings(self) -> list[int]:
        return ground(self)

    @property
    def referent_marginal(self) -> np.ndarray:
        return self.marginals[self.referent]

    @property
    def referent_grounding(self) -> int:
        return self.groundings[self.referent]

    def to_dict(self) -> dict:
        return {"marginals": self.marginals.tolist(), "groundings": self.groundings,
                "referent": self.referent}

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "GroundingResult":
        return cls(np.array(doc["marginals"], dtype=np.float64), int(doc["referent"]))


def run_belief_propagation(fg: FactorGraph, root: int | None = None) -> GroundingResult:
    out = propagate(fg, root)
    marg = np.exp(np.stack([ad.value_of(m) for m in out.log_marginals]))
    return GroundingResult(marg, fg.root, float(ad.value_of(out.log_partition)))


def ground(result: GroundingResult) -> list[int]:
    """Per-node argmax; ties go to the lowest region index."""
    return [int(i) for i in np.argmax(result.marginals, axis=1)]
