import math

import numpy as np
import pytest

from dmc_infer.dmc import (
    DmcParams,
    backward_step,
    forward_step,
    seed_log_prob,
    seed_pair,
    simulate,
    transition_log_prob,
)
from dmc_infer.errors import NotACherryLeafError, PreconditionError, ValidationError
from dmc_infer.netcore import DuplicationForest, contract_duplicate

from conftest import ScriptedRng, forward_outcomes, graph, random_graph


def test_params_range():
    DmcParams(0.0, 1.0)
    with pytest.raises(ValueError):
        DmcParams(1.2, 0.5)
    with pytest.raises(ValueError):
        DmcParams(0.0, 0.5).require_interior()


def test_forward_step_forced(m77):
    g, f = graph("AB", ["AB"]), DuplicationForest.singletons("AB")
    rng = ScriptedRng(integers=[0], randoms=[0.1, 0.1])  # anchor A, keep both, homodimer
    step = forward_step(g, f, m77, rng, new_id="C")
    assert (step.anchor, step.duplicate) == ("A", "C")
    assert step.graph_after == graph("ABC", ["AB", "CB", "AC"])
    assert step.forest_after.leaves == {"A", "B", "C"}
    assert step.forest_after.sibling("C") == "A"
    assert step.forest_after.parent("B") is None


def test_forward_step_delete_branch(m77):
    g, f = graph("AB", ["AB"]), DuplicationForest.singletons("AB")
    # delete, remove anchor's edge (<0.5), no homodimer
    step = forward_step(g, f, m77, ScriptedRng([0], [0.9, 0.2, 0.95]), new_id="C")
    assert step.graph_after == graph("ABC", ["CB"])
    step = forward_step(g, f, m77, ScriptedRng([0], [0.9, 0.7, 0.95]), new_id="C")
    assert step.graph_after == graph("ABC", ["AB"])


def test_forward_step_invalid_pair(m77, rng):
    with pytest.raises(ValidationError):
        forward_step(graph("AB", ["AB"]), DuplicationForest.singletons("AZ"), m77, rng)


def test_forward_step_keeps_every_neighbour(rng):
    m = DmcParams(0.2, 0.5)
    hist = simulate(m, 25, rng)
    for t, step in enumerate(hist.steps, start=1):
        g_prev, _ = hist.state(t - 1)
        for w in g_prev.neighbors(step.anchor):
            assert step.graph_after.has_edge(w, step.anchor) or step.graph_after.has_edge(w, step.duplicate)


def test_boundary_parameters_copy_closed_neighbourhood(rng):
    hist = simulate(DmcParams(1.0, 1.0), 12, rng)
    for step in hist.steps:
        g = step.graph_after
        u, v = step.anchor, step.duplicate
        assert g.neighbors(u) | {u} == g.neighbors(v) | {v}


def test_transition_examples(m77):
    seed = graph("AB", ["AB"])
    assert transition_log_prob(seed, graph("ABC", ["AB", "CB", "AC"]), "A", "C", m77) == pytest.approx(
        math.log(0.245), abs=1e-14)
    assert transition_log_prob(seed, graph("ABC", ["AB", "AC"]), "A", "C", m77) == pytest.approx(
        math.log(0.0525), abs=1e-14)
    g_prev = graph("123", ["12", "13", "23"])
    g_next = graph("1234", ["12", "42", "13", "23"])
    assert transition_log_prob(g_prev, g_next, "1", "4", m77) == pytest.approx(math.log(0.0105), abs=1e-14)


def test_transition_precondition(m77):
    with pytest.raises(PreconditionError):
        transition_log_prob(graph("AB", []), graph("ABC", ["AB", "AC"]), "A", "C", m77)


def _normalisation_case(rng, m):
    n = int(rng.integers(2, 7))
    g = random_graph(rng, n, density=float(rng.uniform(0.2, 0.9)))
    u = sorted(g.vertices)[int(rng.integers(n))]
    total = 0.0
    for g_next, prob in forward_outcomes(g, u, "new", m):
        lp = transition_log_prob(g, g_next, u, "new", m)
        assert lp == pytest.approx(math.log(prob), rel=1e-12)
        total += math.exp(lp)
    return g, total


def test_kernel_normalisation_per_anchor():
    rng = np.random.default_rng(7)
    for _ in range(40):
        m = DmcParams(float(rng.uniform(0.05, 0.95)), float(rng.uniform(0.05, 0.95)))
        g, total = _normalisation_case(rng, m)
        assert total == pytest.approx(1.0 / len(g), abs=1e-12)


def test_kernel_normalisation_over_anchors(m77):
    g = graph("ABCDE", ["AB", "BC", "CD", "DE", "EA", "AC"])
    total = sum(
        math.exp(transition_log_prob(g, g_next, u, "new", m77))
        for u in sorted(g.vertices)
        for g_next, _ in forward_outcomes(g, u, "new", m77)
    )
    assert total == pytest.approx(1.0, abs=1e-12)


def test_backward_step_examples():
    f = DuplicationForest({"A": "i1", "C": "i1", "i1": None, "B": None})
    g, f2, u = backward_step(graph("ABC", ["AB", "BC", "AC"]), f, "C")
    assert (g, f2, u) == (graph("AB", ["AB"]), DuplicationForest.singletons("AB"), "A")
    g, f2, u = backward_step(graph("ABC", ["AB"]), f, "C")
    assert (g, f2, u) == (graph("AB", ["AB"]), DuplicationForest.singletons("AB"), "A")
    with pytest.raises(NotACherryLeafError):
        backward_step(graph("ABC", ["AB"]), f, "B")


@pytest.mark.parametrize("seed", range(5))
def test_backward_inverts_every_simulated_step(seed):
    hist = simulate(DmcParams(0.6, 0.4), 15, seed)
    for t in range(hist.n_steps, 0, -1):
        g, f = hist.state(t)
        step = hist.steps[t - 1]
        assert backward_step(g, f, step.duplicate) == (*hist.state(t - 1), step.anchor)


def test_role_symmetry_and_relabelling(rng):
    m = DmcParams(0.35, 0.8)
    hist = simulate(m, 10, rng)
    for step in hist.steps:
        g = step.graph_after
        u, v = step.anchor, step.duplicate
        a = transition_log_prob(contract_duplicate(g, u, v), g, u, v, m)
        b = transition_log_prob(contract_duplicate(g, v, u), g, v, u, m)
        assert a == b
        perm = {x: f"r{k}" for k, x in enumerate(reversed(sorted(g.vertices)))}
        gp = contract_duplicate(g, u, v).relabel(perm)
        assert transition_log_prob(gp, g.relabel(perm), perm[u], perm[v], m) == a


def test_simulate_sizes():
    m = DmcParams(0.7, 0.7)
    h0 = simulate(m, 0, 1)
    assert len(h0.graph) == 2 and h0.n_steps == 0
    h = simulate(m, 13, 1)
    assert len(h.graph) == 15
    assert len(h.forest.internal_nodes) == 13
    assert h.graph.vertices == {"s1", "s2"} | {f"x{k}" for k in range(3, 16)}


def test_simulate_deterministic():
    m = DmcParams(0.7, 0.7)
    assert simulate(m, 20, 99) == simulate(m, 20, 99)


def test_simulate_keep_both_frequency():
    # oracle: keep-both probability is p for the single seed neighbour
    m = DmcParams(0.7, 0.7)
    rng = np.random.default_rng(2024)
    g, f = seed_pair()
    both = 0
    trials = 10_000
    for _ in range(trials):
        step = forward_step(g, f, m, rng)
        w = ({"s1", "s2"} - {step.anchor}).pop()
        both += step.graph_after.has_edge(step.anchor, w) and step.graph_after.has_edge(step.duplicate, w)
    assert abs(both / trials - 0.7) < 0.015


def test_seed_log_prob():
    assert seed_log_prob(graph("AB", ["AB"])) == 0.0
    assert seed_log_prob(graph("AB")) == -math.inf
    with pytest.raises(ValidationError):
        seed_log_prob(graph("ABC", ["AB", "BC", "AC"]))
