import math

import numpy as np
import pytest
from scipy import stats

from dmc_infer.dmc import DmcParams
from dmc_infer.errors import AllZeroWeightsError, PreconditionError
from dmc_infer.netcore import DuplicationForest
from dmc_infer.pmmh import (
    PmmhConfig,
    PmmhSample,
    UniformPrior,
    accept_log_ratio,
    acf,
    pmmh_run,
    prior_log_density,
    reflect,
    rw_propose,
    summarize,
)

from conftest import graph


def test_prior_density():
    prior = UniformPrior(0.1, 0.9)
    assert prior_log_density(prior, DmcParams(0.5, 0.5)) == pytest.approx(-2 * math.log(0.8))
    assert prior_log_density(prior, DmcParams(0.5, 0.5)) == pytest.approx(0.44629, abs=1e-5)
    assert prior_log_density(prior, DmcParams(0.95, 0.5)) == -math.inf
    with pytest.raises(ValueError):
        UniformPrior(0.0, 1.0)
    with pytest.raises(ValueError):
        UniformPrior(0.6, 0.4)


@pytest.mark.parametrize("raw, expected", [(0.95, 0.85), (0.05, 0.15), (0.5, 0.5), (1.75, 0.15), (-0.75, 0.85)])
def test_reflect(raw, expected):
    assert reflect(raw, 0.1, 0.9) == pytest.approx(expected, abs=1e-12)


def test_rw_propose_tiny_sigma(rng):
    m = DmcParams(0.4, 0.6)
    out = rw_propose(m, 1e-12, UniformPrior(), rng)
    assert out.p == pytest.approx(0.4, abs=1e-9) and out.p_c == pytest.approx(0.6, abs=1e-9)


def test_rw_propose_stays_in_support(rng):
    prior = UniformPrior(0.2, 0.3)
    m = DmcParams(0.25, 0.25)
    for _ in range(500):
        m = rw_propose(m, 0.5, prior, rng)
        assert prior.contains(m)


def test_reflected_walk_is_symmetric():
    # q(a -> b) = q(b -> a): compare binned transition counts both ways
    rng = np.random.default_rng(3)
    a, b = 0.15, 0.3
    sigma, width, n = 0.2, 0.02, 200_000
    ab = np.array([reflect(a + s, 0.1, 0.9) for s in rng.normal(0, sigma, n)])
    ba = np.array([reflect(b + s, 0.1, 0.9) for s in rng.normal(0, sigma, n)])
    p_ab = np.mean(np.abs(ab - b) < width / 2)
    p_ba = np.mean(np.abs(ba - a) < width / 2)
    assert p_ab == pytest.approx(p_ba, rel=0.1)


def test_accept_log_ratio():
    assert accept_log_ratio(-3.0, -3.0, 0.4, 0.4) == 0.0
    assert accept_log_ratio(-3.0, -3.0, -math.inf, 0.4) == -math.inf
    assert accept_log_ratio(-3.0 + math.log(2), -3.0, 0.4, 0.4) == 0.0
    assert accept_log_ratio(-3.0 - math.log(2), -3.0, 0.4, 0.4) == pytest.approx(-math.log(2))


def test_run_zero_iterations(triangle):
    chain = pmmh_run(*triangle, UniformPrior(), PmmhConfig(n_particles=10, n_iters=0, master_seed=1))
    assert len(chain) == 1
    s = chain[0]
    assert UniformPrior().contains(DmcParams(s.p, s.p_c))
    assert s.log_lik_estimate == pytest.approx(math.log(2 * 0.5 * s.p * s.p_c), abs=1e-12)


def test_seed_graph_rejected():
    with pytest.raises(PreconditionError):
        pmmh_run(graph("AB", ["AB"]), DuplicationForest.singletons("AB"), UniformPrior(), PmmhConfig(n_iters=1))


def test_config_validation():
    for bad in (dict(n_particles=0), dict(n_iters=-1), dict(rw_sigma=0.0)):
        with pytest.raises(ValueError):
            PmmhConfig(**bad)


def test_unlucky_start(triangle):
    def dead(m, seed):
        return -math.inf, None

    with pytest.raises(AllZeroWeightsError):
        pmmh_run(*triangle, UniformPrior(), PmmhConfig(n_iters=3, max_prior_redraws=5), likelihood=dead)


def test_rejections_reuse_stored_estimate(triangle):
    calls = []

    def noisy(m, seed):
        calls.append((m, seed))
        return float(np.random.default_rng(seed).normal()), None

    chain = pmmh_run(*triangle, UniformPrior(), PmmhConfig(n_iters=400, rw_sigma=0.1, master_seed=5),
                     likelihood=noisy)
    assert len(calls) == 401  # one estimate per proposal, none for the retained state
    for prev, cur in zip(chain, chain[1:]):
        if not cur.accepted:
            assert (cur.p, cur.p_c, cur.log_lik_estimate) == (prev.p, prev.p_c, prev.log_lik_estimate)
    assert 0 < np.mean([s.accepted for s in chain[1:]]) < 1


def test_chain_stays_in_support(triangle):
    prior = UniformPrior(0.3, 0.5)
    chain = pmmh_run(*triangle, prior, PmmhConfig(n_particles=5, n_iters=300, rw_sigma=0.3, master_seed=2))
    assert all(prior.contains(DmcParams(s.p, s.p_c)) for s in chain)
    assert all(math.isfinite(s.log_lik_estimate) for s in chain)


def test_deterministic_given_seed(triangle):
    cfg = PmmhConfig(n_particles=20, n_iters=50, master_seed=11)
    assert pmmh_run(*triangle, UniformPrior(), cfg) == pmmh_run(*triangle, UniformPrior(), cfg)


def test_flat_likelihood_samples_the_prior(triangle):
    def flat(m, seed):
        return 0.0, None

    chain = pmmh_run(*triangle, UniformPrior(), PmmhConfig(n_iters=100_000, rw_sigma=0.5, master_seed=8),
                     likelihood=flat)
    for values in (np.array([s.p for s in chain]), np.array([s.p_c for s in chain])):
        assert stats.kstest(values, stats.uniform(0.1, 0.8).cdf).statistic < 0.02


def test_histories_recorded():
    from dmc_infer.dmc import simulate

    h = simulate(DmcParams(0.7, 0.7), 4, 1)
    cfg = PmmhConfig(n_particles=30, n_iters=5, record_histories=True, master_seed=3)
    chain = pmmh_run(h.graph, h.forest, UniformPrior(), cfg)
    for s in chain:
        assert len(s.history) == 4
        assert {d for d, _ in s.history} <= h.graph.vertices


# -- diagnostics -------------------------------------------------------------


def test_acf_lag0_and_alternating():
    x = np.random.default_rng(0).normal(size=50)
    assert acf(x, 3)[0] == pytest.approx(1.0)
    alt = np.array([1.0, -1.0] * 500)
    assert acf(alt, 1)[1] == pytest.approx(-1.0, abs=1 / alt.size + 1e-12)


def test_acf_iid():
    x = np.random.default_rng(1).uniform(size=100_000)
    assert np.all(np.abs(acf(x, 50)[1:]) < 0.02)


def test_acf_errors():
    with pytest.raises(ValueError):
        acf(np.ones(10), 2)
    with pytest.raises(ValueError):
        acf(np.arange(3.0), 5)


def _samples(values, accepted=True):
    return [PmmhSample(k, v, v, -1.0, accepted) for k, v in enumerate(values)]


def test_summarize_constant_chain():
    s = summarize(_samples([0.4] * 20, accepted=False), burn_in=0)
    assert s.sd["p"] == 0.0 and s.acceptance_rate == 0.0 and s.acf == {}


def test_summarize_mean():
    s = summarize(_samples([0.2, 0.4] * 10), burn_in=0, max_lag=5)
    assert s.mean["p"] == pytest.approx(0.3)
    assert len(s.acf["p"]) == 6
    assert s.rows()[0] == ("mean", pytest.approx(0.3), pytest.approx(0.3))


def test_summarize_errors():
    with pytest.raises(ValueError):
        summarize([])
    with pytest.raises(ValueError):
        summarize(_samples([0.1, 0.2]), burn_in=2)


def test_triangle_chain_mean(triangle):
    cfg = PmmhConfig(n_particles=10, n_iters=20_000, rw_sigma=0.15, master_seed=4)
    s = summarize(pmmh_run(*triangle, UniformPrior(), cfg), burn_in=1000)
    assert s.mean["p"] == pytest.approx(0.60667, abs=0.01)
