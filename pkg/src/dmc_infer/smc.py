"""Backward sequential Monte Carlo over duplicate-node sequences.

Each particle starts from the observed ``(G, Gamma)`` and undoes one
duplication per step: it picks a cherry of its forest uniformly, picks one
of the two leaves as the duplicate, and merges it into its sibling. The
incremental weight is the forward transition probability divided by the
proposal probability ``1 / (2C)``. The product over steps of the mean
weights is an unbiased estimate of the likelihood summed over *ordered*
duplicate sequences, i.e. ``2**n`` times the sum over unordered cherry
sequences. That factor does not depend on ``(p, p_c)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _rng
from ._accel import resolve_backend
from ._kernels import PROPAGATE
from .dmc import DmcParams
from .errors import AllZeroWeightsError, NoCherryError, PreconditionError
from .netcore import DuplicationForest, PpiGraph, cherries, validate_pair

__all__ = [
    "Particle",
    "SmcResult",
    "EncodedPair",
    "encode_pair",
    "propose_duplicate",
    "multinomial_resample",
    "systematic_resample",
    "log_mean_exp",
    "effective_sample_size",
    "relative_variance",
    "smc_run",
]

TARGET_CONVENTION = "ordered-duplicate-sequences"


@dataclass(frozen=True)
class Particle:
    graph: PpiGraph
    forest: DuplicationForest
    trace: tuple  # (duplicate, anchor) pairs, most recent merge first
    log_weight: float


def propose_duplicate(f: DuplicationForest, rng) -> tuple[str, float]:
    """Uniform ordered choice of (cherry, leaf); returns ``(v, log q)``."""
    cs = cherries(f)
    if not cs:
        raise NoCherryError("forest has no cherry to contract")
    k = int(rng.integers(2 * len(cs)))
    c = cs[k // 2]
    return (c.left if k % 2 == 0 else c.right), -math.log(2 * len(cs))


def log_mean_exp(values) -> float:
    """``log(mean(exp(values)))`` with a max shift."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("log_mean_exp of an empty sequence")
    top = x.max()
    if top == -np.inf:
        return -math.inf
    return float(top + np.log(np.mean(np.exp(x - top))))


def effective_sample_size(log_weights) -> float:
    x = np.asarray(log_weights, dtype=float)
    top = x.max()
    if top == -np.inf:
        return 0.0
    w = np.exp(x - top)
    return float(w.sum() ** 2 / np.dot(w, w))


def relative_variance(log_estimates) -> float:
    """Sample variance over squared mean of ``exp(log_estimates)``.

    Scale invariant, so it is computed after shifting by the maximum.
    """
    x = np.asarray(log_estimates, dtype=float)
    if x.size < 2:
        raise ValueError("relative variance needs at least two estimates")
    top = x.max()
    if top == -np.inf:
        return math.nan
    y = np.exp(x - top)
    return float(y.var(ddof=1) / y.mean() ** 2)


def _normalised_cdf(weights):
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-d sequence")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    cdf = np.cumsum(w)
    if cdf[-1] <= 0:
        raise AllZeroWeightsError("all resampling weights are zero")
    return cdf / cdf[-1]


def _resample_from_uniforms(cdf, u):
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


def multinomial_resample(weights, rng) -> np.ndarray:
    """``N`` iid draws of 0-based indices with probabilities ``w / sum(w)``."""
    cdf = _normalised_cdf(weights)
    return _resample_from_uniforms(cdf, rng.random(cdf.size))


def systematic_resample(weights, rng) -> np.ndarray:
    cdf = _normalised_cdf(weights)
    n = cdf.size
    return _resample_from_uniforms(cdf, (np.arange(n) + rng.random()) / n)


def _weights_from_logs(logw):
    top = logw.max()
    if top == -np.inf:
        raise AllZeroWeightsError("all particle weights are zero")
    return np.exp(logw - top)


@dataclass(frozen=True)
class EncodedPair:
    """Array form of a validated ``(G, Gamma)`` pair for the kernels."""

    vertex_ids: tuple
    node_ids: tuple
    adj: np.ndarray       # (1, V, V) uint8
    occ: np.ndarray       # (1, V + I) int64
    children: np.ndarray  # (I, 2) int64
    roots: np.ndarray     # (2,) int64

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_ids)

    @property
    def n_steps(self) -> int:
        return self.children.shape[0]

    def decode(self, adj, occ):
        """Rebuild the labelled pair held by one particle's arrays."""
        alive = sorted(int(s) for s in occ if s >= 0)
        vid = self.vertex_ids
        graph = PpiGraph({vid[s]: [vid[w] for w in np.flatnonzero(adj[s])] for s in alive})
        where = {int(node): int(slot) for node, slot in enumerate(occ) if slot >= 0}
        label = {node: vid[slot] for node, slot in where.items()}
        n_leaf = self.n_vertices
        # nodes above an occupied node are kept with their original ids
        parent_idx = {}
        for k, (c0, c1) in enumerate(self.children):
            parent_idx[int(c0)] = n_leaf + k
            parent_idx[int(c1)] = n_leaf + k
        keep = set()
        for node in where:
            cur = parent_idx.get(node)
            while cur is not None and cur not in keep:
                keep.add(cur)
                cur = parent_idx.get(cur)
        for node in keep:
            label[node] = self.node_ids[node]
        parent = {}
        for node, name in label.items():
            p = parent_idx.get(node)
            parent[name] = None if p is None else label[p]
        return graph, DuplicationForest(parent)


@lru_cache(maxsize=64)
def encode_pair(g: PpiGraph, f: DuplicationForest) -> EncodedPair:
    validate_pair(g, f)
    vids = tuple(sorted(g.vertices))
    internal = sorted(f.internal_nodes)
    node_ids = vids + tuple(internal)
    index = {n: k for k, n in enumerate(node_ids)}
    n_v = len(vids)
    adj = np.zeros((1, n_v, n_v), dtype=np.uint8)
    for a, b in g.edges():
        adj[0, index[a], index[b]] = adj[0, index[b], index[a]] = 1
    occ = np.full((1, len(node_ids)), -1, dtype=np.int64)
    occ[0, :n_v] = np.arange(n_v)
    children = np.array([[index[c] for c in f.children(n)] for n in internal], dtype=np.int64).reshape(-1, 2)
    roots = np.array([index[r] for r in f.roots], dtype=np.int64)
    for arr in (adj, occ, children, roots):
        arr.setflags(write=False)
    return EncodedPair(vids, node_ids, adj, occ, children, roots)


@dataclass
class SmcResult:
    """Output of :func:`smc_run`.

    ``ancestry[s]`` holds the 0-based parent indices drawn before step
    ``s + 1``; ``step_log_means`` run from ``t = n-1`` down to 0.
    """

    log_estimate: float
    step_log_means: list
    ancestry: list
    ess_per_step: list
    final_log_weights: np.ndarray
    n_particles: int
    metadata: dict = field(default_factory=dict)
    _encoded: EncodedPair | None = field(default=None, repr=False)
    _dups: np.ndarray | None = field(default=None, repr=False)
    _anchors: np.ndarray | None = field(default=None, repr=False)
    _final_adj: np.ndarray | None = field(default=None, repr=False)
    _final_occ: np.ndarray | None = field(default=None, repr=False)

    def lineage(self, i: int) -> np.ndarray:
        """Particle index at every step for the lineage ending at final particle ``i``."""
        n = len(self.step_log_means)
        idx = np.empty(n, dtype=np.int64)
        cur = int(i)
        for s in range(n - 1, -1, -1):
            idx[s] = cur
            if s > 0:
                cur = int(self.ancestry[s - 1][cur])
        return idx

    def trace(self, i: int) -> tuple:
        """``(duplicate, anchor)`` ids of final particle ``i``, latest merge first."""
        if self._dups is None:
            return ()
        vid = self._encoded.vertex_ids
        lin = self.lineage(i)
        return tuple((vid[self._dups[s, lin[s]]], vid[self._anchors[s, lin[s]]]) for s in range(len(lin)))

    def particle(self, i: int) -> Particle:
        g, f = self._encoded.decode(self._final_adj[i], self._final_occ[i])
        return Particle(g, f, self.trace(i), float(self.final_log_weights[i]))

    @property
    def final_particles(self) -> list:
        return [self.particle(i) for i in range(self.n_particles)]

    def select_particle(self, seed) -> int:
        """Index drawn with probability proportional to the final weights."""
        w = _weights_from_logs(np.asarray(self.final_log_weights))
        u = _rng.uniforms(seed, _rng.STREAM_SELECT, 0, [0])
        return int(_resample_from_uniforms(_normalised_cdf(w), u)[0])


def _seed_from(rng):
    if rng is None:
        return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(rng.integers(0, 2**63))


def smc_run(g: PpiGraph, f: DuplicationForest, m: DmcParams, n_particles: int, rng=None, *,
            resampling: str = "multinomial", threads: int = 1, backend: str | None = None) -> SmcResult:
    """Estimate the likelihood of ``(g, f)`` under ``m`` with ``n_particles``.

    Parameters
    ----------
    rng : int, numpy Generator or None
        An int is used directly as the master seed; a Generator supplies
        one. Uniform ``k`` of particle ``i`` at step ``t`` is a hash of
        ``(seed, t, i)``, so output does not depend on ``threads``.
    resampling : {"multinomial", "systematic"}
        Scheme applied between every pair of steps.
    threads : int
        Worker threads for the per-particle kernel.
    backend : {"numba", "numpy"} or None
        Kernel implementation; defaults per ``DMC_INFER_NO_NUMBA``.

    Returns
    -------
    SmcResult
        ``log_estimate == sum(step_log_means)``; ``-inf`` when every final
        particle reaches a disconnected seed.
    """
    m.require_interior()
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    if resampling not in ("multinomial", "systematic"):
        raise ValueError(f"unknown resampling scheme {resampling!r}")
    enc = encode_pair(g, f)
    n = enc.n_steps
    if n == 0:
        raise PreconditionError("input is a seed graph; nothing to reconstruct")
    propagate = PROPAGATE[resolve_backend(backend)]
    seed = _rng.as_seed(_seed_from(rng))
    N = int(n_particles)
    V = enc.n_vertices

    bufs = [
        (np.empty((N, V, V), dtype=np.uint8), np.empty((N, enc.occ.shape[1]), dtype=np.int64))
        for _ in range(2)
    ]
    src_adj, src_occ = enc.adj, enc.occ
    anc = np.zeros(N, dtype=np.int64)
    dups = np.empty((n, N), dtype=np.int64)
    anchors = np.empty((n, N), dtype=np.int64)
    logw = np.empty(N)
    lp, lh = math.log(m.p), math.log((1.0 - m.p) / 2.0)
    lpc, l1mpc = math.log(m.p_c), math.log(1.0 - m.p_c)
    chunks = _chunks(N, threads)
    pool = ThreadPoolExecutor(len(chunks)) if len(chunks) > 1 else None

    step_means, ancestry, ess = [], [], []
    try:
        for s in range(n):
            t = n - s
            coef = np.array([lp, lh, lpc, l1mpc, math.log(V - s - 1)])
            dst_adj, dst_occ = bufs[s % 2]
            args = (src_adj, src_occ, anc, dst_adj, dst_occ, enc.children, seed, t, coef)
            tail = (dups[s], anchors[s], logw)
            if pool is None:
                propagate(*args, 0, N, *tail)
            else:
                list(pool.map(lambda c: propagate(*args, c[0], c[1], *tail), chunks))
            if s == n - 1:
                rows = np.arange(N)
                linked = dst_adj[rows, dst_occ[:, enc.roots[0]], dst_occ[:, enc.roots[1]]] != 0
                logw = np.where(linked, logw, -np.inf)
            step_means.append(log_mean_exp(logw))
            ess.append(effective_sample_size(logw))
            src_adj, src_occ = dst_adj, dst_occ
            if s < n - 1:
                if step_means[-1] == -math.inf:
                    raise AllZeroWeightsError(f"all weights zero at t={t - 1}")
                cdf = _normalised_cdf(_weights_from_logs(logw))
                if resampling == "multinomial":
                    u = _rng.uniforms(seed, _rng.STREAM_RESAMPLE, t - 1, np.arange(N))
                else:
                    u = (np.arange(N) + _rng.uniforms(seed, _rng.STREAM_RESAMPLE, t - 1, [0])[0]) / N
                anc = _resample_from_uniforms(cdf, u)
                ancestry.append(anc)
                logw = np.empty(N)
    except AllZeroWeightsError:
        step_means.append(-math.inf)
    finally:
        if pool is not None:
            pool.shutdown()

    total = math.fsum(step_means) if all(np.isfinite(step_means)) else -math.inf
    meta = {"target": TARGET_CONVENTION, "log_ordering_factor": n * math.log(2.0),
            "resampling": resampling, "seed": int(seed), "rng": _rng.GENERATOR_NAME}
    return SmcResult(total, step_means, ancestry, ess, logw, N, meta,
                     enc, dups, anchors, src_adj, src_occ)


def _chunks(n, threads):
    threads = max(1, min(int(threads), n))
    edges = np.linspace(0, n, threads + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
