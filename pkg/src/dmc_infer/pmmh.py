"""Particle marginal Metropolis-Hastings over ``(p, p_c)``.

The chain targets the exact posterior because each state carries an
unbiased SMC likelihood estimate that is reused, never refreshed, while
the state is retained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .dmc import DmcParams
from .errors import AllZeroWeightsError, PreconditionError
from .netcore import validate_pair
from .smc import smc_run

__all__ = [
    "UniformPrior",
    "PmmhConfig",
    "PmmhSample",
    "ChainSummary",
    "prior_log_density",
    "reflect",
    "rw_propose",
    "accept_log_ratio",
    "pmmh_run",
    "acf",
    "summarize",
]


@dataclass(frozen=True)
class UniformPrior:
    """Independent uniform prior on ``[low, high]`` for both parameters."""

    low: float = 0.1
    high: float = 0.9

    def __post_init__(self):
        if not (0.0 < self.low < self.high < 1.0):
            raise ValueError(f"prior bounds need 0 < low < high < 1, got [{self.low}, {self.high}]")

    def contains(self, m: DmcParams) -> bool:
        return self.low <= m.p <= self.high and self.low <= m.p_c <= self.high

    def sample(self, rng) -> DmcParams:
        p, pc = rng.uniform(self.low, self.high, size=2)
        return DmcParams(float(p), float(pc))


@dataclass(frozen=True)
class PmmhConfig:
    n_particles: int = 2000
    n_iters: int = 10_000
    rw_sigma: float = 0.05
    record_histories: bool = False
    master_seed: int = 0
    threads: int = 1
    max_prior_redraws: int = 100
    backend: str | None = None

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.n_iters < 0:
            raise ValueError("n_iters must be >= 0")
        if not self.rw_sigma > 0:
            raise ValueError("rw_sigma must be > 0")


@dataclass(frozen=True)
class PmmhSample:
    iter: int
    p: float
    p_c: float
    log_lik_estimate: float
    accepted: bool
    history: tuple | None = None


def prior_log_density(prior: UniformPrior, m: DmcParams) -> float:
    if prior.contains(m):
        return -2.0 * math.log(prior.high - prior.low)
    return -math.inf


def reflect(x: float, low: float, high: float) -> float:
    """Fold ``x`` back into ``[low, high]`` by repeated mirror reflection."""
    width = high - low
    y = math.fmod(x - low, 2.0 * width)
    if y < 0:
        y += 2.0 * width
    if y > width:
        y = 2.0 * width - y
    return low + y


def rw_propose(m: DmcParams, sigma: float, prior: UniformPrior, rng) -> DmcParams:
    """Reflected Gaussian random walk; symmetric, so ``q`` cancels."""
    step = rng.normal(0.0, sigma, size=2)
    return DmcParams(reflect(m.p + step[0], prior.low, prior.high),
                     reflect(m.p_c + step[1], prior.low, prior.high))


def accept_log_ratio(log_lik_star: float, log_lik_curr: float, prior_star: float, prior_curr: float) -> float:
    if prior_star == -math.inf or log_lik_star == -math.inf:
        return -math.inf
    return min(0.0, (log_lik_star + prior_star) - (log_lik_curr + prior_curr))


def _smc_likelihood(g, f, cfg):
    def estimate(m, seed):
        res = smc_run(g, f, m, cfg.n_particles, seed, threads=cfg.threads, backend=cfg.backend)
        history = None
        if cfg.record_histories and res.log_estimate > -math.inf:
            history = res.trace(res.select_particle(seed))
        return res.log_estimate, history

    return estimate


def pmmh_run(g, f, prior: UniformPrior, cfg: PmmhConfig, likelihood=None, progress=None) -> list:
    """Run the chain; returns ``cfg.n_iters + 1`` samples.

    Parameters
    ----------
    likelihood : callable, optional
        ``likelihood(m, seed) -> (log_lik, history)``. Defaults to
        :func:`smc_run` with ``cfg.n_particles`` particles. Tests substitute
        stubs here.
    progress : callable, optional
        Called with the iteration index after each iteration.
    """
    validate_pair(g, f)
    if len(g) == 2:
        raise PreconditionError("input is a seed graph; nothing to infer")
    if likelihood is None:
        likelihood = _smc_likelihood(g, f, cfg)
    rng = np.random.default_rng([cfg.master_seed & 0xFFFFFFFFFFFFFFFF, _rng.STREAM_PMMH_SMC])

    def run_at(m, r):
        return likelihood(m, _rng.derive_seed(cfg.master_seed, _rng.STREAM_PMMH_SMC, r))

    for attempt in range(cfg.max_prior_redraws):
        m = prior.sample(rng)
        log_lik, history = run_at(m, 0)
        if log_lik > -math.inf:
            break
    else:
        raise AllZeroWeightsError(
            f"likelihood estimate was zero for {cfg.max_prior_redraws} initial prior draws"
        )
    log_prior = prior_log_density(prior, m)
    chain = [PmmhSample(0, m.p, m.p_c, log_lik, True, history)]
    for r in range(1, cfg.n_iters + 1):
        m_star = rw_propose(m, cfg.rw_sigma, prior, rng)
        prior_star = prior_log_density(prior, m_star)
        u = rng.random()
        accepted = False
        if prior_star > -math.inf:
            ll_star, hist_star = run_at(m_star, r)
            if math.log(u) < accept_log_ratio(ll_star, log_lik, prior_star, log_prior):
                m, log_lik, log_prior, history = m_star, ll_star, prior_star, hist_star
                accepted = True
        chain.append(PmmhSample(r, m.p, m.p_c, log_lik, accepted, history))
        if progress is not None:
            progress(r)
    return chain


def acf(chain_values, max_lag: int) -> np.ndarray:
    """Autocorrelation at lags ``0..max_lag`` normalised by ``n * var``."""
    x = np.asarray(chain_values, dtype=float)
    n = x.size
    if n <= max_lag:
        raise ValueError(f"chain length {n} must exceed max_lag {max_lag}")
    d = x - x.mean()
    denom = np.dot(d, d)
    if denom == 0:
        raise ValueError("acf undefined for a constant chain")
    return np.array([np.dot(d[: n - k], d[k:]) / denom for k in range(max_lag + 1)])


@dataclass
class ChainSummary:
    n_samples: int
    burn_in: int
    mean: dict
    sd: dict
    acceptance_rate: float
    acf: dict = field(default_factory=dict)

    def rows(self):
        """``(statistic, p, pc)`` rows for CSV output."""
        out = [("mean", self.mean["p"], self.mean["pc"]),
               ("sd", self.sd["p"], self.sd["pc"]),
               ("acceptance_rate", self.acceptance_rate, self.acceptance_rate)]
        lags = len(self.acf.get("p", ()))
        for k in range(lags):
            out.append((f"acf_{k}", self.acf["p"][k], self.acf["pc"][k]))
        return out


def summarize(chain, burn_in: int | None = None, max_lag: int = 50) -> ChainSummary:
    """Post burn-in moments, acceptance rate and autocorrelations.

    ``burn_in`` defaults to 10% of the chain. ACFs are omitted for a
    constant coordinate or a chain no longer than ``max_lag``.
    """
    if not chain:
        raise ValueError("empty chain")
    if burn_in is None:
        burn_in = len(chain) // 10
    if not 0 <= burn_in < len(chain):
        raise ValueError("burn_in must be in [0, len(chain))")
    kept = chain[burn_in:]
    cols = {"p": np.array([s.p for s in kept]), "pc": np.array([s.p_c for s in kept])}
    acc = float(np.mean([s.accepted for s in kept]))
    acfs = {}
    lag = min(max_lag, len(kept) - 1)
    if lag >= 0 and all(np.ptp(c) > 0 for c in cols.values()) and len(kept) > lag:
        acfs = {k: acf(c, lag) for k, c in cols.items()}
    return ChainSummary(
        n_samples=len(kept),
        burn_in=burn_in,
        mean={k: float(c.mean()) for k, c in cols.items()},
        sd={k: float(c.std()) if np.ptp(c) > 0 else 0.0 for k, c in cols.items()},
        acceptance_rate=acc,
        acf=acfs,
    )
