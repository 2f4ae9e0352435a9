import numpy as np
import pytest

from dmc_infer.dmc import DmcParams
from dmc_infer.netcore import DuplicationForest, PpiGraph


class ScriptedRng:
    """Stand-in for a Generator that replays fixed draws."""

    def __init__(self, integers=(), randoms=()):
        self._ints = list(integers)
        self._rands = list(randoms)

    def integers(self, n):
        value = self._ints.pop(0)
        assert 0 <= value < n
        return value

    def random(self):
        return self._rands.pop(0)


def graph(vertices, edges=()):
    return PpiGraph.from_edges(list(vertices), [tuple(e) for e in edges])


@pytest.fixture
def triangle():
    g = graph("ABC", ["AB", "BC", "AC"])
    f = DuplicationForest({"A": "i1", "C": "i1", "i1": None, "B": None})
    return g, f


@pytest.fixture
def m77():
    return DmcParams(0.7, 0.7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def forward_outcomes(g_prev, u, new_id, m):
    """Every graph one step can produce from ``g_prev`` with anchor ``u``.

    Yields ``(g_next, probability)`` built straight from the kernel's three
    stages; the anchor pick is included as ``1/|V|``.
    """
    import itertools

    nbrs = sorted(g_prev.neighbors(u))
    base = [e for e in g_prev.edges() if u not in e]
    verts = sorted(g_prev.vertices) + [new_id]
    for outcome in itertools.product(range(3), repeat=len(nbrs)):
        edges = list(base)
        prob = 1.0 / len(g_prev)
        for w, o in zip(nbrs, outcome):
            if o == 0:
                edges += [(u, w), (new_id, w)]
                prob *= m.p
            elif o == 1:
                edges.append((new_id, w))
                prob *= (1 - m.p) / 2
            else:
                edges.append((u, w))
                prob *= (1 - m.p) / 2
        for homo in (True, False):
            e2 = edges + [(u, new_id)] if homo else edges
            yield PpiGraph.from_edges(verts, e2), prob * (m.p_c if homo else 1 - m.p_c)


def random_graph(rng, n_vertices, density=0.5):
    verts = [f"g{k}" for k in range(n_vertices)]
    edges = [(a, b) for i, a in enumerate(verts) for b in verts[i + 1:] if rng.random() < density]
    return PpiGraph.from_edges(verts, edges)
