"""Synthetic graphs with known hidden predictors, used as a recovery oracle.

Construction keeps the sign-generation rule exactly self-consistent: a core
of anchor nodes shares one target pool and votes a per-target consensus
sign, every node's hidden trusted set is drawn from those anchors, and each
emitted edge carries the sign of the hidden opinion sum (then optional
independent noise flips). With zero noise, recomputing the opinion sums on
the emitted graph reproduces every edge sign exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .graph import SignedGraph


@dataclass(frozen=True)
class PlantedParams:
    n: int = 200
    peers_per_node: int = 5
    anchors: int = 25
    target_fraction: float = 0.6  # share of nodes receiving edges
    out_degree: int = 40          # targets per non-anchor node
    noise: float = 0.0            # independent sign-flip probability
    positive_bias: float = 0.5    # P(+1) for consensus and influence draws
    seed: int = 0

    def __post_init__(self):
        if self.n < 3 or self.target_fraction <= 0 or self.out_degree < 1:
            raise ConfigError("degenerate planted parameters")
        if not 2 <= self.peers_per_node < self.anchors:
            raise ConfigError("need 2 <= peers_per_node < anchors")
        if self.anchors >= self.n:
            raise ConfigError("anchors must be a strict subset of nodes")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError("noise must be a probability")
        if not 0.0 < self.positive_bias < 1.0:
            raise ConfigError("positive_bias must be strictly inside (0, 1)")


@dataclass
class PlantedModel:
    params: PlantedParams
    trusted: dict[int, list[tuple[int, int]]]  # hidden per-node predictors
    consensus: np.ndarray                      # per-target anchor vote
    targets: np.ndarray                        # shared anchor target pool
    clean_signs: dict[tuple[int, int], int] = field(default_factory=dict)
    flipped: set[tuple[int, int]] = field(default_factory=set)


def generate_planted(params: PlantedParams) -> tuple[SignedGraph, PlantedModel]:
    """Sample hidden predictors and emit a graph they explain.

    Anchors (nodes 0..a-1) all link to one shared target pool and agree on
    a per-target consensus sign; anchor trusted sets are other anchors with
    +1 influence, so each anchor edge sign equals its own opinion sum.
    Every other node links to a random subset of the pool, signed by its
    hidden trusted-anchor opinion sum. Noise flips are recorded so oracle
    checks can separate model signal from injected error.
    """
    p = params
    rng = np.random.default_rng(p.seed)
    n_targets = max(1, round(p.target_fraction * p.n))
    targets = np.sort(rng.choice(p.n, size=n_targets, replace=False))
    consensus = np.where(rng.random(p.n) < p.positive_bias, 1, -1).astype(np.int64)

    trusted: dict[int, list[tuple[int, int]]] = {}
    anchor_ids = np.arange(p.anchors)
    for z in range(p.anchors):
        pool = anchor_ids[anchor_ids != z]
        picks = rng.choice(pool, size=p.peers_per_node, replace=False)
        trusted[z] = sorted((int(a), 1) for a in picks)
    for x in range(p.anchors, p.n):
        picks = rng.choice(p.anchors, size=p.peers_per_node, replace=False)
        infl = np.where(rng.random(p.peers_per_node) < p.positive_bias, 1, -1)
        trusted[x] = sorted((int(a), int(r)) for a, r in zip(picks, infl))

    in_pool = np.zeros(p.n, dtype=bool)
    in_pool[targets] = True
    triples: list[tuple[int, int, int]] = []
    clean: dict[tuple[int, int], int] = {}

    def emit(u: int, y: int, sign: int):
        clean[(u, y)] = sign
        triples.append((u, y, sign))

    # anchor edges: consensus sign; peers_per_node >= 2 guarantees the
    # anchor's own opinion sum has the same sign (at least one trusted
    # anchor differs from the target, and all of them vote the consensus)
    for z in range(p.anchors):
        for y in targets:
            if int(y) != z:
                emit(z, int(y), int(consensus[y]))
    # non-anchor edges: sign of the hidden opinion sum; a trusted anchor
    # equal to the target itself contributes nothing (no self-loop edge)
    for x in range(p.anchors, p.n):
        pool = targets[targets != x]
        k = min(p.out_degree, pool.size)
        ys = rng.choice(pool, size=k, replace=False)
        for y in ys:
            y = int(y)
            f = sum(r for z, r in trusted[x] if z != y) * int(consensus[y])
            emit(x, y, 1 if f >= 0 else -1)

    model = PlantedModel(params=p, trusted=trusted, consensus=consensus,
                         targets=targets, clean_signs=clean)
    rows = []
    for (u, y), sign in clean.items():
        if p.noise > 0 and rng.random() < p.noise:
            sign = -sign
            model.flipped.add((u, y))
        rows.append((u, y, sign))
    g = SignedGraph(p.n, np.asarray(rows, dtype=np.int64), list(range(p.n)))
    return g, model


def regenerate_signs(g: SignedGraph, model: PlantedModel) -> np.ndarray:
    """Recompute sign(hidden opinion sum) on g for every edge of g, in
    g.edge_list() order. With zero generation noise this must reproduce
    the stored signs exactly."""
    out = np.empty(g.num_edges, dtype=np.int64)
    for i, (u, v, _) in enumerate(g.edge_list()):
        f = sum(r * g.edge_sign(z, v) for z, r in model.trusted[u])
        out[i] = 1 if f >= 0 else -1
    return out
