"""Signed-network snapshots: loading, adjacency indices, splits, balancing.

A snapshot is a directed graph whose edges carry a sign in {-1, +1}. Nodes
are remapped to dense ids 0..n-1 in order of first appearance; the raw-id
mapping is kept on the graph so experiment outputs stay comparable across
runs. All adjacency indices are built once at construction and the graph is
immutable afterwards, so it can be shared freely across worker processes.
"""

from __future__ import annotations

import hashlib
import io
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DataError, InternalError, ParseError

log = logging.getLogger(__name__)

EdgeTriple = tuple[int, int, int]


@dataclass(frozen=True)
class GraphStats:
    nodes: int
    edges: int
    pct_positive: float
    pct_negative: float

    def as_tsv(self) -> str:
        return (
            f"{self.nodes}\t{self.edges}"
            f"\t{self.pct_positive:.1f}%\t{self.pct_negative:.1f}%"
        )


@dataclass(frozen=True)
class DatasetSplit:
    """Partition of a graph's edge list into train / validation / test."""

    train: list[EdgeTriple]
    validation: list[EdgeTriple]
    test: list[EdgeTriple]
    seed: int


class SignedGraph:
    """Immutable directed signed graph with dense node ids.

    Keeps three mutually consistent adjacency views: out-edges, in-edges
    (both with signs, neighbour lists sorted by id) and an undirected
    neighbour index that ignores sign and direction. The undirected index
    backs every common-neighbour and connectivity query.
    """

    def __init__(self, n: int, edges: np.ndarray, raw_ids: list | None = None):
        # edges: (E, 3) int array of (src, dst, sign), already deduplicated
        if edges.ndim != 2 or (edges.size and edges.shape[1] != 3):
            raise InternalError("edge array must have shape (E, 3)")
        src = edges[:, 0].astype(np.int64)
        dst = edges[:, 1].astype(np.int64)
        sign = edges[:, 2].astype(np.int8)
        if edges.size:
            if src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= n:
                raise InternalError("edge endpoint out of range")
            if not np.isin(sign, (-1, 1)).all():
                raise InternalError("edge sign must be -1 or +1")
        self.n = int(n)
        order = np.lexsort((dst, src))
        self.src = src[order]
        self.dst = dst[order]
        self.sign = sign[order]
        self.raw_ids = list(raw_ids) if raw_ids is not None else list(range(n))
        if len(self.raw_ids) != self.n:
            raise InternalError("raw id mapping must cover every node")
        self.raw_index = {r: i for i, r in enumerate(self.raw_ids)}
        if len(self.raw_index) != self.n:
            raise InternalError("raw id mapping is not a bijection")

        m = self.num_edges
        data = self.sign.astype(np.int8)
        self._out = sp.csr_matrix((data, (self.src, self.dst)), shape=(n, n))
        self._out.sort_indices()
        self._in = sp.csr_matrix((data, (self.dst, self.src)), shape=(n, n))
        self._in.sort_indices()
        # int32 data: common-neighbour counts come from und @ und products
        und = sp.csr_matrix(
            (np.ones(2 * m, dtype=np.int32),
             (np.concatenate([self.src, self.dst]),
              np.concatenate([self.dst, self.src]))),
            shape=(n, n),
        )
        und.data[:] = 1  # collapse reciprocal duplicates
        und.sort_indices()
        self._und = und

    # -- basic views ------------------------------------------------------

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])

    def edge_list(self) -> list[EdgeTriple]:
        """Canonical (src, dst, sign) triples sorted by (src, dst)."""
        return list(zip(self.src.tolist(), self.dst.tolist(), self.sign.tolist()))

    @property
    def sign_matrix(self) -> sp.csr_matrix:
        """n x n CSR with entry (u, v) = sign of edge u->v, 0 if absent."""
        return self._out

    @property
    def undirected_matrix(self) -> sp.csr_matrix:
        """Symmetric 0/1 CSR adjacency, ignoring sign and direction."""
        return self._und

    def out_edges(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """(targets, signs) of edges leaving u, targets sorted."""
        lo, hi = self._out.indptr[u], self._out.indptr[u + 1]
        return self._out.indices[lo:hi], self._out.data[lo:hi]

    def in_edges(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self._in.indptr[v], self._in.indptr[v + 1]
        return self._in.indices[lo:hi], self._in.data[lo:hi]

    def neighbours(self, u: int) -> np.ndarray:
        """Sorted undirected neighbour ids of u (in- or out-linked)."""
        lo, hi = self._und.indptr[u], self._und.indptr[u + 1]
        return self._und.indices[lo:hi]

    def degree(self, u: int) -> int:
        return int(self._und.indptr[u + 1] - self._und.indptr[u])

    def edge_sign(self, u: int, v: int) -> int:
        """Sign of the directed edge u->v, or 0 when no such edge exists."""
        lo, hi = self._out.indptr[u], self._out.indptr[u + 1]
        idx = np.searchsorted(self._out.indices[lo:hi], v)
        if idx < hi - lo and self._out.indices[lo + idx] == v:
            return int(self._out.data[lo + idx])
        return 0

    def stats(self) -> GraphStats:
        pos = int(np.count_nonzero(self.sign > 0))
        m = self.num_edges
        return GraphStats(
            nodes=self.n,
            edges=m,
            pct_positive=100.0 * pos / m if m else 0.0,
            pct_negative=100.0 * (m - pos) / m if m else 0.0,
        )

    def content_hash(self) -> str:
        """Stable digest of node mapping + edge multiset, for artifact checks."""
        h = hashlib.sha256()
        h.update(str(self.n).encode())
        for r in self.raw_ids:
            h.update(str(r).encode())
            h.update(b"\x00")
        h.update(self.src.tobytes())
        h.update(self.dst.tobytes())
        h.update(self.sign.tobytes())
        return h.hexdigest()[:16]


# -- construction ----------------------------------------------------------


def _dedupe_last_wins(rows: list[tuple[int, int, int]], n: int) -> np.ndarray:
    """Collapse duplicate (src, dst) pairs keeping the last occurrence."""
    if not rows:
        return np.empty((0, 3), dtype=np.int64)
    arr = np.asarray(rows, dtype=np.int64)
    key = arr[:, 0] * n + arr[:, 1]
    # np.unique keeps the first occurrence; reverse so that "first" == last
    _, first_of_reversed = np.unique(key[::-1], return_index=True)
    keep = (len(key) - 1) - first_of_reversed
    keep.sort()
    return arr[keep]


def build_graph(rows: list[tuple]) -> SignedGraph:
    """Assemble a SignedGraph from (raw_src, raw_dst, sign) triples.

    Dense ids are assigned by order of first appearance; duplicate ordered
    pairs collapse last-wins; self-loops are dropped with a warning.
    """
    raw_ids: list = []
    index: dict = {}

    def dense(raw):
        i = index.get(raw)
        if i is None:
            i = len(raw_ids)
            index[raw] = i
            raw_ids.append(raw)
        return i

    triples = []
    loops = 0
    for s_raw, d_raw, sign in rows:
        u, v = dense(s_raw), dense(d_raw)
        if u == v:
            loops += 1
            continue
        triples.append((u, v, sign))
    if loops:
        log.warning("dropped %d self-loop(s)", loops)
    n = len(raw_ids)
    if n == 0:
        raise DataError("input contains no edges")
    edges = _dedupe_last_wins(triples, n)
    return SignedGraph(n, edges, raw_ids)


def _open_lines(source):
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        return open(source, "rb")
    if isinstance(source, io.TextIOBase):
        return source
    return source  # binary stream


_SIGN_TOKENS = {"1": 1, "+1": 1, "-1": -1}


def load_edge_list(source) -> SignedGraph:
    """Load a `<src> <dst> <sign>` edge list (whitespace- or tab-separated).

    Lines starting with `#` are skipped. Sign tokens are `1`/`+1`/`-1`.
    Duplicate ordered pairs collapse last-wins; self-loops are dropped.
    """
    rows = []
    with _open_lines(source) as fh:
        for line_no, raw in enumerate(fh, start=1):
            if isinstance(raw, bytes):
                raw = raw.decode("utf-8", errors="replace")
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 3:
                raise ParseError(f"expected `src dst sign`, got {line!r}", line_no)
            s_tok, d_tok, sign_tok = parts[0], parts[1], parts[2]
            sign = _SIGN_TOKENS.get(sign_tok)
            if sign is None:
                raise ParseError(f"bad sign token {sign_tok!r}", line_no)
            try:
                s_raw, d_raw = int(s_tok), int(d_tok)
            except ValueError as exc:
                raise ParseError(f"non-integer node id in {line!r}", line_no) from exc
            rows.append((s_raw, d_raw, sign))
    if not rows:
        raise DataError("edge list is empty")
    return build_graph(rows)


def load_ratings(source, negative_threshold: int = 3) -> SignedGraph:
    """Convert a `<user> <item> <rating> <timestamp>` ratings file to a
    bipartite signed graph.

    Ratings <= negative_threshold become -1 edges, higher ratings +1;
    edges point user -> item. Users and items occupy disjoint dense-id
    ranges: users first (in order of appearance), then items.
    """
    users: dict = {}
    items: dict = {}
    parsed = []  # (user_idx, item_idx, sign)
    with _open_lines(source) as fh:
        for line_no, raw in enumerate(fh, start=1):
            if isinstance(raw, bytes):
                raw = raw.decode("utf-8", errors="replace")
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 3:
                raise ParseError(f"expected `user item rating [ts]`, got {line!r}", line_no)
            try:
                u_raw, i_raw, rating = parts[0], parts[1], int(parts[2])
            except ValueError as exc:
                raise ParseError(f"non-integer rating in {line!r}", line_no) from exc
            if not 1 <= rating <= 5:
                raise ParseError(f"rating {rating} outside 1..5", line_no)
            if u_raw not in users:
                users[u_raw] = len(users)
            if i_raw not in items:
                items[i_raw] = len(items)
            sign = -1 if rating <= negative_threshold else 1
            parsed.append((users[u_raw], items[i_raw], sign))
    if not parsed:
        raise DataError("ratings file is empty")
    n_users = len(users)
    triples = [(u, n_users + i, s) for u, i, s in parsed]
    n = n_users + len(items)
    # user/item ranges are disjoint by construction; a collision here would
    # mean the offset arithmetic above is broken
    if any(u >= n_users or v < n_users for u, v, _ in triples):
        raise InternalError("user and item id ranges overlap")
    raw_ids = [f"u:{u}" for u in users] + [f"i:{i}" for i in items]
    edges = _dedupe_last_wins(triples, n)
    return SignedGraph(n, edges, raw_ids)


def load_wiki_elections(source) -> SignedGraph:
    """Load the adminship-election vote log format: blocks headed by a
    `U <uid> <nick>` candidate line followed by `V <res> <uid> <time> <nick>`
    vote lines. Each nonzero vote becomes a voter -> candidate edge with the
    vote's sign; neutral (0) votes are dropped.
    """
    rows = []
    candidate = None
    with _open_lines(source) as fh:
        for line_no, raw in enumerate(fh, start=1):
            if isinstance(raw, bytes):
                raw = raw.decode("utf-8", errors="replace")
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tag = line[0]
            if tag == "U":
                parts = line.split()
                if len(parts) < 2:
                    raise ParseError(f"bad candidate line {line!r}", line_no)
                candidate = int(parts[1])
            elif tag == "V":
                parts = line.split()
                if len(parts) < 3:
                    raise ParseError(f"bad vote line {line!r}", line_no)
                if candidate is None:
                    raise ParseError("vote before any candidate line", line_no)
                res, voter = int(parts[1]), int(parts[2])
                if res == 0:
                    continue
                if res not in (-1, 1):
                    raise ParseError(f"bad vote result {res}", line_no)
                rows.append((voter, candidate, res))
            # E/T/N/D lines carry election metadata we do not need
    if not rows:
        raise DataError("vote log contains no usable votes")
    return build_graph(rows)


LOADERS = {
    "edges": load_edge_list,
    "ratings": load_ratings,
    "wikielec": load_wiki_elections,
}


def load_dataset(path, fmt: str = "edges", **kwargs) -> SignedGraph:
    loader = LOADERS.get(fmt)
    if loader is None:
        raise ConfigError(f"unknown dataset format {fmt!r}")
    return loader(path, **kwargs)


# -- serialization ---------------------------------------------------------

_FORMAT_HEADER = "#peersign-graph v1"


def save_graph(g: SignedGraph, path) -> None:
    """Versioned text container: raw-id mapping followed by dense edges."""
    with open(path, "w") as fh:
        fh.write(f"{_FORMAT_HEADER}\n")
        fh.write(f"#nodes\t{g.n}\n#edges\t{g.num_edges}\n")
        for i, raw in enumerate(g.raw_ids):
            fh.write(f"N\t{i}\t{raw}\n")
        for u, v, s in zip(g.src, g.dst, g.sign):
            fh.write(f"E\t{u}\t{v}\t{int(s):+d}\n")


def load_graph(path) -> SignedGraph:
    raw_ids: list[str] = []
    triples: list[tuple[int, int, int]] = []
    n = None
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != _FORMAT_HEADER:
            raise DataError(f"not a peersign graph file (header {first!r})")
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#nodes\t"):
                n = int(line.split("\t")[1])
                continue
            if line.startswith("#"):
                continue
            parts = line.split("\t")
            if parts[0] == "N":
                if int(parts[1]) != len(raw_ids):
                    raise ParseError("node mapping out of order", line_no)
                raw_ids.append(parts[2])
            elif parts[0] == "E":
                triples.append((int(parts[1]), int(parts[2]), int(parts[3])))
            else:
                raise ParseError(f"unknown record {parts[0]!r}", line_no)
    if n is None or n != len(raw_ids):
        raise DataError("node count header disagrees with mapping")
    edges = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return SignedGraph(n, edges, raw_ids)


# -- queries ----------------------------------------------------------------


def common_neighbours(g: SignedGraph, u: int, v: int) -> int:
    """Number of shared undirected neighbours of u and v (embeddedness)."""
    return int(np.intersect1d(g.neighbours(u), g.neighbours(v),
                              assume_unique=True).size)


# -- splits and balancing ----------------------------------------------------


def split_dataset(g: SignedGraph, test_fraction: float = 0.1,
                  seed: int = 0) -> DatasetSplit:
    """Hold out floor(test_fraction * E) edges for testing, then split the
    remainder 50/50 into train and validation. Deterministic under seed."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    edges = g.edge_list()
    m = len(edges)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(m)
    n_test = int(m * test_fraction)
    rest = m - n_test
    n_train = (rest + 1) // 2
    pick = lambda idx: [edges[i] for i in idx]
    return DatasetSplit(
        train=pick(perm[n_test:n_test + n_train]),
        validation=pick(perm[n_test + n_train:]),
        test=pick(perm[:n_test]),
        seed=seed,
    )


def balance_by_sampling(edges: list[EdgeTriple], seed: int = 0) -> list[EdgeTriple]:
    """Keep every negative edge and an equal-sized uniform sample of the
    positives; output order is a seeded shuffle of the result."""
    neg = [e for e in edges if e[2] < 0]
    pos = [e for e in edges if e[2] > 0]
    if len(pos) < len(neg):
        raise DataError(
            f"cannot balance: {len(pos)} positive < {len(neg)} negative edges")
    rng = np.random.default_rng(seed)
    sampled = [pos[i] for i in rng.choice(len(pos), size=len(neg), replace=False)]
    out = neg + sampled
    rng.shuffle(out)
    return out
