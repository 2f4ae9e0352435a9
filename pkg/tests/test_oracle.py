import math

import numpy as np
import pytest

from dmc_infer.dmc import DmcParams, simulate
from dmc_infer.errors import SizeGuardError, ValidationError
from dmc_infer.netcore import DuplicationForest
from dmc_infer.oracle import (
    evaluate_monomials,
    exact_log_likelihood,
    forward_log_likelihood,
    grid_posterior,
    history_monomials,
)
from dmc_infer.pmmh import UniformPrior

from conftest import graph

# Value for simulate(seed=42, 2 steps) at m=(0.7, 0.7), agreed on by the
# backward enumerator and the forward enumerator before being frozen.
FOUR_NODE_SEED42 = -2.679462744250298


def test_triangle_exact(triangle, m77):
    assert exact_log_likelihood(*triangle, m77) == pytest.approx(math.log(0.49), abs=1e-14)


def test_seed_observation():
    g, f = graph("AB", ["AB"]), DuplicationForest.singletons("AB")
    assert exact_log_likelihood(g, f, DmcParams(0.3, 0.3)) == 0.0


def test_four_node_regression(m77):
    h = simulate(m77, 2, 42)
    backward = exact_log_likelihood(h.graph, h.forest, m77)
    forward = forward_log_likelihood(h.graph, h.forest, m77)
    assert backward == pytest.approx(forward, abs=1e-12)
    assert backward == pytest.approx(FOUR_NODE_SEED42, abs=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_backward_matches_forward_enumeration(seed):
    rng = np.random.default_rng(seed)
    m = DmcParams(float(rng.uniform(0.1, 0.9)), float(rng.uniform(0.1, 0.9)))
    h = simulate(m, int(rng.integers(1, 5)), seed)
    assert exact_log_likelihood(h.graph, h.forest, m) == pytest.approx(
        forward_log_likelihood(h.graph, h.forest, m), abs=1e-11)


@pytest.mark.parametrize("seed", range(6))
def test_memoisation_changes_nothing(seed):
    m = DmcParams(0.4, 0.65)
    h = simulate(m, 6, seed)
    plain = exact_log_likelihood(h.graph, h.forest, m)
    memo = exact_log_likelihood(h.graph, h.forest, m, memoize=True)
    assert plain == pytest.approx(memo, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_polynomial_cross_evaluation(seed):
    h = simulate(DmcParams(0.7, 0.7), 5, seed)
    mono = history_monomials(h.graph, h.forest)
    for p, pc in [(0.2, 0.3), (0.7, 0.7), (0.85, 0.15)]:
        exact = math.exp(exact_log_likelihood(h.graph, h.forest, DmcParams(p, pc)))
        assert float(evaluate_monomials(mono, p, pc)) == pytest.approx(exact, rel=1e-12)


def test_relabelling_invariance(m77):
    h = simulate(m77, 5, 9)
    perm = {n: f"z{k}" for k, n in enumerate(sorted(h.forest.nodes, reverse=True))}
    a = exact_log_likelihood(h.graph, h.forest, m77)
    b = exact_log_likelihood(h.graph.relabel(perm), h.forest.relabel(perm), m77)
    assert a == pytest.approx(b, abs=1e-13)


def test_size_guard():
    h = simulate(DmcParams(0.7, 0.7), 18, 0)
    with pytest.raises(SizeGuardError, match="SMC"):
        exact_log_likelihood(h.graph, h.forest, DmcParams(0.7, 0.7))


def test_invalid_pair(m77):
    with pytest.raises(ValidationError):
        exact_log_likelihood(graph("AB", ["AB"]), DuplicationForest.singletons("AZ"), m77)


def test_grid_uniform_for_seed():
    g, f = graph("AB", ["AB"]), DuplicationForest.singletons("AB")
    post = grid_posterior(g, f, UniformPrior(0.1, 0.9), 10)
    assert np.allclose(post.mass, 0.01)
    assert post.marginal_means == pytest.approx((0.5, 0.5))


@pytest.mark.parametrize("size", [64, 100])
def test_grid_triangle_closed_form(triangle, size):
    post = grid_posterior(*triangle, UniformPrior(0.1, 0.9), size)
    assert post.mass.sum() == pytest.approx(1.0, abs=1e-10)
    half = post.cell_area ** 0.5 / 2
    # 0.7 may sit on a cell edge; every cell touching it must qualify
    cells = np.flatnonzero(np.abs(post.p_values - 0.7) <= half + 1e-12)
    assert cells.size >= 1
    for a in cells:
        for b in cells:
            assert post.mass[a, b] == pytest.approx(3.0625 * post.cell_area, rel=0.02)
    assert post.marginal_means[0] == pytest.approx(0.728 / 1.2, abs=1e-3)
    assert post.marginal_means[1] == pytest.approx(0.728 / 1.2, abs=1e-3)
    assert len(post.grid) == size * size


def test_grid_size_validation(triangle):
    with pytest.raises(ValueError):
        grid_posterior(*triangle, UniformPrior(), 1)
