"""Brute-force enumeration of the joint grounding distribution.

Used as ground truth for belief propagation on small instances; it shares no
code with the message-passing path beyond reading the factor tables.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .inference import FactorGraph

DEFAULT_CAP = 10_000_000


class EnumerationCapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class JointTable:
    scores: np.ndarray  # shape (N,) * M, unnormalized
    partition: float

    @property
    def probabilities(self) -> np.ndarray:
        return self.scores / self.partition


def joint_probability(fg: FactorGraph, assignment: Sequence[int]) -> float:
    """Unnormalized product of every unary and binary potential at ``assignment``."""
    if len(assignment) != fg.num_variables:
        raise ValueError(f"assignment has {len(assignment)} entries, expected {fg.num_variables}")
    n = fg.num_states
    for a in assignment:
        if not 0 <= a < n:
            raise IndexError(f"region index {a} out of range 0..{n - 1}")
    unary = fg.unary_table()
    score = 1.0
    for i, a in enumerate(assignment):
        score *= unary[i, a]
    for f, table in zip(fg.binary, fg.binary_tables()):
        score *= table[assignment[f.subject], assignment[f.object]]
    return float(score)


def joint_table(fg: FactorGraph, cap: int = DEFAULT_CAP) -> JointTable:
    m, n = fg.num_variables, fg.num_states
    if n ** m > cap:
        raise EnumerationCapExceeded(f"{n}^{m} assignments exceed the cap of {cap}")
    unary = fg.unary_table()
    tables = fg.binary_tables()
    # one broadcast axis per variable: scores[a_0, ..., a_{M-1}] for every assignment
    scores = np.ones((n,) * m)
    for i in range(m):
        shape = [1] * m
        shape[i] = n
        scores = scores * unary[i].reshape(shape)
    for f, t in zip(fg.binary, tables):
        shape = [1] * m
        shape[f.subject] = n
        shape[f.object] = n
        oriented = t if f.subject < f.object else t.T
        scores = scores * oriented.reshape(shape)
    return JointTable(scores, math.fsum(scores.ravel()))


def joint_table_loop(fg: FactorGraph, cap: int = DEFAULT_CAP) -> JointTable:
    """Same as :func:`joint_table`, one assignment at a time (slow reference)."""
    m, n = fg.num_variables, fg.num_states
    if n ** m > cap:
        raise EnumerationCapExceeded(f"{n}^{m} assignments exceed the cap of {cap}")
    scores = np.empty((n,) * m)
    for assignment in itertools.product(range(n), repeat=m):
        scores[assignment] = joint_probability(fg, assignment)
    return JointTable(scores, math.fsum(scores.ravel()))


def brute_force_marginals(fg: FactorGraph, cap: int = DEFAULT_CAP) -> np.ndarray:
    """(M, N) marginals by summing the enumerated joint with compensated sums."""
    jt = joint_table(fg, cap)
    m, n = fg.num_variables, fg.num_states
    out = np.empty((m, n))
    for i in range(m):
        moved = np.moveaxis(jt.scores, i, 0).reshape(n, -1)
        for k in range(n):
            out[i, k] = math.fsum(moved[k]) / jt.partition
    return out


def brute_force_conditional(fg: FactorGraph, target: int, clamp: dict[int, int],
                            cap: int = DEFAULT_CAP) -> np.ndarray:
    """Marginal of ``target`` given that the variables in ``clamp`` take fixed states."""
    jt = joint_table(fg, cap)
    idx = [slice(None)] * fg.num_variables
    for v, s in clamp.items():
        idx[v] = slice(s, s + 1)
    sub = jt.scores[tuple(idx)]
    moved = np.moveaxis(sub, target, 0).reshape(sub.shape[target], -1)
    row = np.array([math.fsum(r) for r in moved])
    return row / math.fsum(row)
