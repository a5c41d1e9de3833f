"""Shared fixtures and independent test oracles."""

import numpy as np
import pytest

from peersign.graph import SignedGraph
from peersign.qubo import QuboInstance


def make_graph(triples, n=None):
    """Build a SignedGraph straight from dense (src, dst, sign) triples."""
    arr = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if n is None:
        n = int(arr[:, :2].max()) + 1 if arr.size else 1
    return SignedGraph(n, arr)


def random_graph(rng, n=20, density=0.15):
    """Random signed digraph without self-loops or duplicate pairs."""
    triples = []
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < density:
                triples.append((u, v, 1 if rng.random() < 0.7 else -1))
    if not triples:
        triples = [(0, 1 % n, 1)]
    return make_graph(triples, n=n)


def random_qubo(rng, m, paired=False, scale=16):
    """Random instance with dyadic-rational coefficients.

    Coefficients are integers over `scale` (a power of two), so objective
    sums are exact in double precision and co-optimal ties are exact ties;
    solver-vs-oracle assignment comparisons then cannot be skewed by
    floating-point summation order.
    """
    linear = rng.integers(-4 * scale, 4 * scale, size=m) / scale
    quad = np.triu(rng.integers(-2 * scale, 2 * scale, size=(m, m)), k=1) / scale
    constant = float(rng.integers(-2 * scale, 2 * scale)) / scale
    if paired and m % 2 == 0:
        labels = tuple((i // 2, 1 if i % 2 == 0 else -1) for i in range(m))
    else:
        labels = tuple((i, 1) for i in range(m))
    return QuboInstance(linear=linear.astype(float), quadratic=quad.astype(float),
                        constant=constant, labels=labels)


def enumerate_qubo(q):
    """Independent exhaustive reference solver.

    Walks every bitmask in plain Python, accumulating the objective
    term by term from the definition, and applies the documented
    tie-break (objective, set-bit count, mask value).
    """
    m = q.m
    best = None
    for mask in range(1 << m):
        bits = [(mask >> i) & 1 for i in range(m)]
        val = q.constant
        for i in range(m):
            if bits[i]:
                val += q.linear[i]
                for j in range(i + 1, m):
                    if bits[j]:
                        val += q.quadratic[i, j]
        key = (val, sum(bits), mask)
        if best is None or key < best[0]:
            best = (key, bits)
    (objective, _, _), bits = best
    return np.array(bits, dtype=np.uint8), float(objective)


def brute_common_neighbours(g, u, v):
    """O(n^2) adjacency-matrix oracle for shared undirected neighbours."""
    adj = np.zeros((g.n, g.n), dtype=bool)
    for a, b, _ in g.edge_list():
        adj[a, b] = True
        adj[b, a] = True
    return int(np.count_nonzero(adj[u] & adj[v]))


def direct_objective(rows, signs, n_scale, lam, labels, bits):
    """Definitional loss: sum_t ((1/N) * sum_selected sigma*s' - s)^2 + lambda*|w|."""
    total = 0.0
    for t in range(len(signs)):
        f = 0.0
        for i, (label, bit) in enumerate(zip(labels, bits)):
            if bit:
                f += label[1] * rows[i][t]
        total += (f / n_scale - signs[t]) ** 2
    return total + lam * int(np.sum(bits))


@pytest.fixture
def toy_graph():
    # 0 -> 1 (+), 1 -> 2 (-), 0 -> 2 (+)
    return make_graph([(0, 1, 1), (1, 2, -1), (0, 2, 1)])


@pytest.fixture
def star_graph():
    # center 0, leaves 1 and 2
    return make_graph([(0, 1, 1), (0, 2, 1)])
