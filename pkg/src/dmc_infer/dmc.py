"""Duplication-mutation-complementarity growth model.

Forward simulation, the exact one-step transition probability, and the
deterministic backward operator on ``(graph, forest)`` pairs. All
probabilities are natural logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, ValidationError
from .netcore import (
    DuplicationForest,
    PpiGraph,
    contract_cherry,
    contract_duplicate,
    expand_leaf,
    validate_pair,
)

__all__ = [
    "DmcParams",
    "GrowthStep",
    "GrowthHistory",
    "forward_step",
    "transition_log_prob",
    "backward_step",
    "simulate",
    "seed_log_prob",
    "seed_pair",
]


@dataclass(frozen=True)
class DmcParams:
    """Mutation retention ``p`` and homodimerization ``p_c``.

    Values on the closed unit interval are accepted so the simulator can
    explore boundaries; inference entry points call :meth:`require_interior`.
    """

    p: float
    p_c: float

    def __post_init__(self):
        for name in ("p", "p_c"):
            x = getattr(self, name)
            if not (0.0 <= x <= 1.0) or math.isnan(x):
                raise ValueError(f"{name}={x!r} outside [0, 1]")

    @property
    def is_interior(self) -> bool:
        return 0.0 < self.p < 1.0 and 0.0 < self.p_c < 1.0

    def require_interior(self) -> "DmcParams":
        if not self.is_interior:
            raise ValueError(f"inference needs 0 < p, p_c < 1, got {self}")
        return self


@dataclass(frozen=True)
class GrowthStep:
    anchor: str
    duplicate: str
    graph_after: PpiGraph
    forest_after: DuplicationForest


@dataclass(frozen=True)
class GrowthHistory:
    seed_graph: PpiGraph
    seed_forest: DuplicationForest
    steps: tuple = field(default_factory=tuple)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def state(self, t: int) -> tuple[PpiGraph, DuplicationForest]:
        """``(G_t, Gamma_t)``; ``t = 0`` is the seed."""
        if t == 0:
            return self.seed_graph, self.seed_forest
        s = self.steps[t - 1]
        return s.graph_after, s.forest_after

    @property
    def graph(self) -> PpiGraph:
        return self.state(self.n_steps)[0]

    @property
    def forest(self) -> DuplicationForest:
        return self.state(self.n_steps)[1]


def seed_pair(a: str = "s1", b: str = "s2") -> tuple[PpiGraph, DuplicationForest]:
    return PpiGraph.from_edges([a, b], [(a, b)]), DuplicationForest.singletons([a, b])


def forward_step(g, f, m: DmcParams, rng, new_id: str | None = None) -> GrowthStep:
    """Apply one duplication, mutation and homodimerization step.

    ``rng`` needs ``integers(n)`` and ``random()``. Draw order: anchor
    index over sorted vertices; then for each neighbour of the anchor in
    sorted order one keep/delete draw and, on delete, one which-edge draw;
    finally the homodimer draw.
    """
    validate_pair(g, f)
    verts = sorted(g.vertices)
    if new_id is None:
        new_id = f"x{len(verts) + 1}"
    u = verts[int(rng.integers(len(verts)))]
    adj = {x: set(ws) for x, ws in g.adjacency().items()}
    adj[new_id] = set()
    for w in sorted(g.neighbors(u)):
        if rng.random() < m.p:
            keep_u = keep_v = True
        elif rng.random() < 0.5:
            keep_u, keep_v = False, True
        else:
            keep_u, keep_v = True, False
        if not keep_u:
            adj[u].discard(w)
            adj[w].discard(u)
        if keep_v:
            adj[new_id].add(w)
            adj[w].add(new_id)
    if rng.random() < m.p_c:
        adj[u].add(new_id)
        adj[new_id].add(u)
    return GrowthStep(u, new_id, PpiGraph(adj), expand_leaf(f, u, new_id))


def _kernel_counts(g_prev: PpiGraph, g_next: PpiGraph, u: str, v: str):
    nu, nv = g_next.neighbors(u), g_next.neighbors(v)
    k_both = k_one = k_none = 0
    for w in g_prev.neighbors(u):
        a, b = w in nu, w in nv
        if a and b:
            k_both += 1
        elif a or b:
            k_one += 1
        else:
            k_none += 1
    return k_both, k_one, k_none, v in nu


def transition_log_prob(g_prev: PpiGraph, g_next: PpiGraph, u: str, v: str, m: DmcParams) -> float:
    """Log-probability that one forward step from ``g_prev`` with anchor
    ``u`` and duplicate ``v`` yields ``g_next``.

    The anchor pick contributes ``1/|V(g_prev)|``; each neighbour of ``u``
    contributes ``p`` if it keeps both edges and ``(1-p)/2`` if it keeps one;
    the homodimer edge contributes ``p_c`` or ``1-p_c``.
    """
    if u not in g_next or v not in g_next:
        raise PreconditionError("anchor and duplicate must be vertices of g_next")
    if contract_duplicate(g_next, u, v) != g_prev:
        raise PreconditionError("g_prev is not the contraction of g_next at (u, v)")
    k_both, k_one, k_none, homo = _kernel_counts(g_prev, g_next, u, v)
    if k_none:
        return -math.inf
    logp = -math.log(len(g_prev))
    logp += _xlogy(k_both, m.p) + _xlogy(k_one, (1.0 - m.p) / 2.0)
    logp += _xlogy(1, m.p_c if homo else 1.0 - m.p_c)
    return logp


def _xlogy(k, x):
    if k == 0:
        return 0.0
    return k * math.log(x) if x > 0 else -math.inf


def backward_step(g: PpiGraph, f: DuplicationForest, v: str):
    """Undo the step that created ``v``; returns ``(g_prev, f_prev, anchor)``."""
    validate_pair(g, f)
    f_prev, u = contract_cherry(f, v)
    return contract_duplicate(g, u, v), f_prev, u


def simulate(m: DmcParams, n_steps: int, rng=None) -> GrowthHistory:
    """Grow ``n_steps`` duplications from the seed ``s1 - s2``.

    ``rng`` is a seed or a :class:`numpy.random.Generator`.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    rng = np.random.default_rng(rng)
    g, f = seed_pair()
    g0, f0 = g, f
    steps = []
    for _ in range(n_steps):
        step = forward_step(g, f, m, rng)
        steps.append(step)
        g, f = step.graph_after, step.forest_after
    return GrowthHistory(g0, f0, tuple(steps))


def seed_log_prob(g: PpiGraph) -> float:
    """0 for a connected two-node seed, ``-inf`` for a disconnected one."""
    if len(g) != 2:
        raise ValidationError(f"seed graph must have 2 vertices, got {len(g)}")
    a, b = sorted(g.vertices)
    return 0.0 if g.has_edge(a, b) else -math.inf
