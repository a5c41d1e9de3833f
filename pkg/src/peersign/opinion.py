"""Peer-opinion formulations: peer sets, opinion scores, gated predictions.

Three formulations are supported. The simple one sums raw peer-to-target
link signs; the standard ones additionally weight each peer's opinion by a
learned influence in {-1, +1}. Peers are either the source's undirected
neighbours, or (in the common-neighbour variant) every node sharing at
least p undirected common neighbours with the source.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ParseError
from .graph import SignedGraph


class OpinionVariant(enum.Enum):
    SIMPLE_ADJACENT = "simple-adjacent"
    STANDARD_ADJACENT = "standard-adjacent"
    STANDARD_PQ = "standard-pq"

    @property
    def uses_influence(self) -> bool:
        return self is not OpinionVariant.SIMPLE_ADJACENT

    @classmethod
    def parse(cls, token: str) -> "OpinionVariant":
        for v in cls:
            if v.value == token:
                return v
        raise ConfigError(f"unknown opinion variant {token!r}")


@dataclass(frozen=True)
class PeerPolicy:
    """Peer eligibility (p) and prediction gate (q) for one experiment."""

    variant: OpinionVariant = OpinionVariant.STANDARD_PQ
    p: int = 15
    q: int = 20

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise ConfigError("p and q must be non-negative")


@dataclass
class NodePredictor:
    """Learned trusted peers of one source node.

    `trusted` holds (peer, influence) pairs; influence +1 marks a peer whose
    link signs are taken at face value, -1 one whose signs are inverted.
    A peer appears at most once.
    """

    source: int
    trusted: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        peers = [z for z, _ in self.trusted]
        if self.source in peers:
            raise DataError("a node cannot be its own trusted peer")
        if len(set(peers)) != len(peers):
            raise DataError("trusted peer listed with both influences")
        self.trusted = sorted(self.trusted)

    @property
    def is_empty(self) -> bool:
        return not self.trusted


ABSTAIN = 0  # Prediction.value when the gate blocks the edge


@dataclass(frozen=True)
class Prediction:
    value: int  # -1, +1, or ABSTAIN
    gate_peers: int

    @property
    def abstained(self) -> bool:
        return self.value == ABSTAIN


def extended_sign(g: SignedGraph, z: int, y: int) -> int:
    """Sign of the directed edge z->y, or 0 when that edge is absent."""
    return g.edge_sign(z, y)


def peers_of(g: SignedGraph, x: int, policy: PeerPolicy) -> np.ndarray:
    """Eligible peers of x under the policy, sorted ascending, x excluded.

    Adjacent variants take the undirected neighbours of x; the
    common-neighbour variant takes every node sharing at least p undirected
    common neighbours with x (with p=0 that is every other node).
    """
    if policy.variant is not OpinionVariant.STANDARD_PQ:
        return g.neighbours(x).astype(np.int64)
    if policy.p == 0:
        out = np.arange(g.n, dtype=np.int64)
        return np.delete(out, x)
    counts = common_neighbour_counts(g, x)
    peers = np.flatnonzero(counts >= policy.p).astype(np.int64)
    return peers[peers != x]


def common_neighbour_counts(g: SignedGraph, x: int) -> np.ndarray:
    """Dense vector of |N(x) & N(z)| over all z (no self-loops, so the
    entries at x and at neighbours of x need no special-casing)."""
    a = g.undirected_matrix
    row = a[x] @ a  # 1 x n sparse
    out = np.zeros(g.n, dtype=np.int64)
    out[row.indices] = row.data
    return out


class PeerIndex:
    """Per-source peer cache; shared by training and evaluation.

    Under the common-neighbour variant each lookup costs one sparse
    row-matrix product, so results are memoized. Batch precomputation is
    chunked to bound memory on large graphs.
    """

    def __init__(self, g: SignedGraph, policy: PeerPolicy):
        self.g = g
        self.policy = policy
        self._cache: dict[int, np.ndarray] = {}

    def peers(self, x: int) -> np.ndarray:
        got = self._cache.get(x)
        if got is None:
            got = peers_of(self.g, x, self.policy)
            self._cache[x] = got
        return got

    def iter_batched(self, sources: np.ndarray, chunk: int = 256,
                     cache: bool = True):
        """Yield (source, peers) pairs, computing common-neighbour rows in
        chunked sparse products to amortize the matmul cost.

        cache=False keeps memory flat on whole-graph scans where peer sets
        are consumed once.
        """
        sources = np.asarray(sources, dtype=np.int64)
        if self.policy.variant is not OpinionVariant.STANDARD_PQ or self.policy.p == 0:
            for x in sources:
                yield int(x), self.peers(int(x))
            return
        a = self.g.undirected_matrix
        for lo in range(0, len(sources), chunk):
            batch = sources[lo:lo + chunk]
            rows = (a[batch] @ a).tocsr()
            rows.sort_indices()
            for k, x in enumerate(batch):
                x = int(x)
                got = self._cache.get(x)
                if got is None:
                    lo_i, hi_i = rows.indptr[k], rows.indptr[k + 1]
                    idx = rows.indices[lo_i:hi_i]
                    cnt = rows.data[lo_i:hi_i]
                    peers = idx[cnt >= self.policy.p].astype(np.int64)
                    got = peers[peers != x]
                    if cache:
                        self._cache[x] = got
                yield x, got


def score(g: SignedGraph, predictor: NodePredictor, y: int) -> int:
    """Summed trusted-peer opinion for the edge predictor.source -> y."""
    total = 0
    for z, influence in predictor.trusted:
        total += influence * g.edge_sign(z, y)
    return total


def gate_count(g: SignedGraph, peers: np.ndarray, y: int) -> int:
    """How many of the given peers are undirected-adjacent to y."""
    return int(np.intersect1d(peers, g.neighbours(y), assume_unique=True).size)


def predict(g: SignedGraph, predictor: NodePredictor, y: int,
            policy: PeerPolicy, peers: np.ndarray | None = None) -> Prediction:
    """Gated sign prediction for predictor.source -> y.

    Abstains when fewer than q of the source's eligible peers are connected
    to the target; otherwise predicts +1 iff the opinion score is >= 0.
    `peers` short-circuits the policy lookup when the caller already holds
    the source's peer set.
    """
    if peers is None:
        peers = peers_of(g, predictor.source, policy)
    n_connected = gate_count(g, peers, y)
    if n_connected < policy.q:
        return Prediction(value=ABSTAIN, gate_peers=n_connected)
    value = 1 if score(g, predictor, y) >= 0 else -1
    return Prediction(value=value, gate_peers=n_connected)


# -- predictor serialization -------------------------------------------------

_INFLUENCE_TOKEN = {1: "+", -1: "-"}
_INFLUENCE_VALUE = {"+": 1, "-": -1}


def save_predictors(predictors: dict[int, NodePredictor], path,
                    header: dict[str, str] | None = None) -> None:
    """One line per source: `<src> <k> <peer:infl> ...`, sources ascending.

    Header metadata (dataset hash, config echo) goes into leading `#key=value`
    comment lines.
    """
    with open(path, "w") as fh:
        for key, value in (header or {}).items():
            fh.write(f"#{key}={value}\n")
        for src in sorted(predictors):
            pred = predictors[src]
            toks = [f"{z}:{_INFLUENCE_TOKEN[r]}" for z, r in pred.trusted]
            fh.write(" ".join([str(src), str(len(toks))] + toks) + "\n")


def load_predictors(path) -> tuple[dict[int, NodePredictor], dict[str, str]]:
    """Inverse of save_predictors; returns (predictors, header metadata)."""
    predictors: dict[int, NodePredictor] = {}
    meta: dict[str, str] = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key] = value
                continue
            parts = line.split()
            try:
                src, k = int(parts[0]), int(parts[1])
            except (ValueError, IndexError) as exc:
                raise ParseError(f"bad predictor line {line!r}", line_no) from exc
            if len(parts) != 2 + k:
                raise ParseError(f"expected {k} peers, got {len(parts) - 2}", line_no)
            trusted = []
            for tok in parts[2:]:
                peer_tok, _, infl_tok = tok.partition(":")
                if infl_tok not in _INFLUENCE_VALUE:
                    raise ParseError(f"bad influence token {tok!r}", line_no)
                trusted.append((int(peer_tok), _INFLUENCE_VALUE[infl_tok]))
            predictors[src] = NodePredictor(source=src, trusted=trusted)
    return predictors, meta
