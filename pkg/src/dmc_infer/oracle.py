"""Exact likelihoods and grid posteriors for small observations.

Two independent enumerators are provided. :func:`exact_log_likelihood`
walks backward over every ordered choice of cherry leaf.
:func:`forward_log_likelihood` walks forward from the seed over every
order of duplication events and every mutation outcome, keeping the
histories that land on the observed graph. Both count each cherry twice
(once per leaf playing the duplicate), matching the SMC estimator.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .dmc import DmcParams, seed_log_prob, transition_log_prob
from .errors import SizeGuardError
from .netcore import (
    DuplicationForest,
    PpiGraph,
    cherries,
    contract_cherry,
    contract_duplicate,
    validate_pair,
)

__all__ = [
    "MAX_EXACT_STEPS",
    "GridPosterior",
    "exact_log_likelihood",
    "forward_log_likelihood",
    "history_monomials",
    "evaluate_monomials",
    "grid_posterior",
]

MAX_EXACT_STEPS = 12


def _guard(g, f):
    validate_pair(g, f)
    n = len(g) - 2
    if n > MAX_EXACT_STEPS:
        raise SizeGuardError(
            f"exact enumeration limited to {MAX_EXACT_STEPS} duplication steps, input has {n}; "
            "use the SMC estimator (smc_run / 'infer') instead"
        )
    return n


def _logsumexp(values):
    values = [x for x in values if x != -math.inf]
    if not values:
        return -math.inf
    top = max(values)
    return top + math.log(math.fsum(math.exp(x - top) for x in values))


def _state_key(g, f):
    return g, f


def exact_log_likelihood(g: PpiGraph, f: DuplicationForest, m: DmcParams, memoize: bool = False) -> float:
    """Log of the likelihood summed over all ordered duplicate sequences."""
    _guard(g, f)
    memo = {} if memoize else None

    def rec(g, f):
        if len(g) == 2:
            return seed_log_prob(g)
        if memo is not None:
            key = _state_key(g, f)
            if key in memo:
                return memo[key]
        terms = []
        for c in cherries(f):
            for v in (c.left, c.right):
                f_prev, u = contract_cherry(f, v)
                g_prev = contract_duplicate(g, u, v)
                step = transition_log_prob(g_prev, g, u, v, m)
                if step != -math.inf:
                    terms.append(step + rec(g_prev, f_prev))
        out = _logsumexp(terms)
        if memo is not None:
            memo[key] = out
        return out

    return rec(g, f)


def history_monomials(g: PpiGraph, f: DuplicationForest) -> dict:
    """Likelihood as a polynomial in ``(p, p_c)``.

    Returns ``{(k_both, k_one, n_homo, n_hetero): coefficient}`` such that
    the likelihood equals the sum of
    ``coef * p**k_both * ((1-p)/2)**k_one * p_c**n_homo * (1-p_c)**n_hetero``.
    The coefficient collects the anchor-choice factors.
    """
    _guard(g, f)
    out: dict = defaultdict(float)

    def rec(g, f, counts, coef):
        if len(g) == 2:
            if seed_log_prob(g) == 0.0:
                out[counts] += coef
            return
        for c in cherries(f):
            for v in (c.left, c.right):
                f_prev, u = contract_cherry(f, v)
                g_prev = contract_duplicate(g, u, v)
                nu, nv = g.neighbors(u), g.neighbors(v)
                kb = ko = 0
                for w in g_prev.neighbors(u):
                    if w in nu and w in nv:
                        kb += 1
                    else:
                        ko += 1
                homo = v in nu
                new = (counts[0] + kb, counts[1] + ko, counts[2] + homo, counts[3] + (not homo))
                rec(g_prev, f_prev, new, coef / len(g_prev))

    rec(g, f, (0, 0, 0, 0), 1.0)
    return dict(out)


def evaluate_monomials(monomials: dict, p, p_c):
    """Evaluate :func:`history_monomials` output; broadcasts over arrays."""
    p = np.asarray(p, dtype=float)
    p_c = np.asarray(p_c, dtype=float)
    total = np.zeros(np.broadcast(p, p_c).shape)
    for (kb, ko, nh, nx), coef in monomials.items():
        total = total + coef * p**kb * ((1 - p) / 2) ** ko * p_c**nh * (1 - p_c) ** nx
    return total


def forward_log_likelihood(g: PpiGraph, f: DuplicationForest, m: DmcParams) -> float:
    """Forward enumeration over event orders and mutation outcomes.

    Graph vertices are identified with forest nodes: a duplication at
    internal node ``P`` replaces vertex ``P`` by its two children. The
    result is multiplied by ``2**n`` to use the ordered convention.
    """
    n = _guard(g, f)
    r0, r1 = f.roots
    target = frozenset(frozenset(e) for e in g.edges())
    log_both, log_one = _safe_log(m.p), _safe_log((1 - m.p) / 2)
    log_h1, log_h0 = _safe_log(m.p_c), _safe_log(1 - m.p_c)
    results = []

    def rec(current, edges, logp):
        expandable = [x for x in current if f.children(x)]
        if not expandable:
            if edges == target:
                results.append(logp)
            return
        anchor_term = -math.log(len(current))
        for node in expandable:
            a, b = f.children(node)
            nbrs = sorted(w for e in edges if node in e for w in e if w != node)
            base = {e for e in edges if node not in e}
            rest = current - {node}
            for outcome in itertools.product((0, 1, 2), repeat=len(nbrs)):
                new = set(base)
                lp = logp + anchor_term
                for w, o in zip(nbrs, outcome):
                    if o == 0:
                        new.add(frozenset((a, w)))
                        new.add(frozenset((b, w)))
                        lp += log_both
                    else:
                        new.add(frozenset((a if o == 1 else b, w)))
                        lp += log_one
                for homo in (True, False):
                    e2 = set(new)
                    if homo:
                        e2.add(frozenset((a, b)))
                    lpp = lp + (log_h1 if homo else log_h0)
                    if lpp != -math.inf:
                        rec(rest | {a, b}, frozenset(e2), lpp)

    rec(frozenset((r0, r1)), frozenset([frozenset((r0, r1))]), 0.0)
    return _logsumexp(results) + n * math.log(2.0)


def _safe_log(x):
    return math.log(x) if x > 0 else -math.inf


@dataclass(frozen=True)
class GridPosterior:
    """Posterior mass on a ``grid_size x grid_size`` lattice of cell midpoints.

    ``p_values[i]`` and ``pc_values[j]`` index ``log_posterior[i, j]``.
    """

    p_values: np.ndarray
    pc_values: np.ndarray
    log_posterior: np.ndarray
    marginal_means: tuple
    cell_area: float

    @property
    def mass(self) -> np.ndarray:
        return np.exp(self.log_posterior)

    @property
    def grid(self) -> list:
        return [(float(a), float(b)) for a in self.p_values for b in self.pc_values]

    def density(self) -> np.ndarray:
        return self.mass / self.cell_area


def grid_posterior(g: PpiGraph, f: DuplicationForest, prior, grid_size: int) -> GridPosterior:
    """Exact posterior over ``(p, p_c)`` evaluated at lattice cell midpoints."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    _guard(g, f)
    width = (prior.high - prior.low) / grid_size
    mids = prior.low + width * (np.arange(grid_size) + 0.5)
    P, PC = np.meshgrid(mids, mids, indexing="ij")
    if len(g) == 2:
        log_lik = np.full(P.shape, seed_log_prob(g))
    else:
        with np.errstate(divide="ignore"):
            log_lik = np.log(evaluate_monomials(history_monomials(g, f), P, PC))
    # uniform prior: constant on the lattice
    top = log_lik.max()
    if top == -np.inf:
        raise ValueError("likelihood is zero everywhere on the grid")
    log_post = log_lik - (top + np.log(np.exp(log_lik - top).sum()))
    mass = np.exp(log_post)
    means = (float((mass * P).sum()), float((mass * PC).sum()))
    return GridPosterior(mids, mids.copy(), log_post, means, width * width)
