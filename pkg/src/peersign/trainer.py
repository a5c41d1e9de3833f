"""Per-node training: candidate ranking, subset fitting, greedy extension.

Each source node is trained independently. Candidate peers are ranked by
their individual prediction error on the node's training edges (a peer
enters the ranking once per influence polarity), the ranking is cut into
consecutive subsets of size d, each subset is fitted by sweeping the L0
penalty over a small grid and picking the assignment with the lowest
validation error, and fitted subsets extend the accumulated trusted set
greedily for as long as the combined validation error strictly drops.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .graph import DatasetSplit, SignedGraph
from .opinion import NodePredictor, OpinionVariant, PeerIndex, PeerPolicy
from .qubo import (
    EXACT_LIMIT,
    TabuParams,
    build_qubo,
    opinion_matrix,
    solve_exact,
    solve_tabu,
)

log = logging.getLogger(__name__)

Entry = tuple[int, int, int]  # (peer, influence, error)


@dataclass(frozen=True)
class CandidateRanking:
    """Candidate (peer, influence) variables sorted by individual error,
    ties by (peer id, +1 before -1)."""

    entries: list[Entry]


@dataclass(frozen=True)
class TrainConfig:
    policy: PeerPolicy = PeerPolicy()
    d: int = 10
    lambda_min: float = 0.1
    lambda_max: float = 0.35
    lambda_step: float = 0.05
    solver: str = "exact"  # "exact" | "tabu"
    tabu: TabuParams = TabuParams()
    n_scale: float | None = None  # None: use the subproblem's variable count
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.lambda_min > self.lambda_max:
            raise ConfigError("lambda_min must not exceed lambda_max")
        if self.lambda_step <= 0:
            raise ConfigError("lambda_step must be positive")
        if self.solver not in ("exact", "tabu"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.solver == "exact" and self.d > EXACT_LIMIT:
            raise ConfigError(
                f"d == {self.d} exceeds the exact solver guard ({EXACT_LIMIT}); "
                "use the tabu solver")

    def lambda_grid(self) -> list[float]:
        grid = []
        lam = self.lambda_min
        while lam <= self.lambda_max + 1e-12:
            grid.append(round(lam, 12))
            lam += self.lambda_step
        return grid


@dataclass(frozen=True)
class FitResult:
    trusted: list[tuple[int, int]]
    validation_error: int
    chosen_lambda: float
    used_training_error: bool = False


@dataclass
class NodeTrainLog:
    node: int
    candidates: int
    slices_fitted: int
    slices_accepted: int
    final_size: int
    lambdas: list[float] = field(default_factory=list)
    final_error: int = -1
    flags: list[str] = field(default_factory=list)

    def as_tsv(self) -> str:
        lam = ",".join(f"{v:g}" for v in self.lambdas) or "-"
        flags = ",".join(self.flags) or "-"
        return (f"{self.node}\t{self.candidates}\t{self.slices_fitted}"
                f"\t{self.slices_accepted}\t{self.final_size}\t{lam}"
                f"\t{self.final_error}\t{flags}")


TRAIN_LOG_COLUMNS = ("node\tcandidates\tslices_fitted\tslices_accepted"
                     "\tfinal_size\tlambdas\tvalidation_error\tflags")


# -- candidate ranking --------------------------------------------------------


def individual_errors(g: SignedGraph, x: int, td: list[tuple[int, int]],
                      peers: np.ndarray,
                      variant: OpinionVariant = OpinionVariant.STANDARD_PQ,
                      ) -> CandidateRanking:
    """Rank candidate variables by how often each peer's (signed) opinion
    disagrees with the training edges of x.

    A target the peer is not linked to counts as an error for both
    polarities. Standard variants contribute two entries per peer, the
    simple variant only the +1 entry.
    """
    entries: list[Entry] = []
    if len(peers) and td:
        targets = np.array([y for y, _ in td], dtype=np.int64)
        signs = np.array([s for _, s in td], dtype=np.int64)
        rows = opinion_matrix(g, peers, targets)
        t = len(td)
        e_plus = t - (rows == signs[None, :]).sum(axis=1)
        e_minus = t - (rows == -signs[None, :]).sum(axis=1)
        both = variant.uses_influence
        for v, ep, em in zip(peers.tolist(), e_plus.tolist(), e_minus.tolist()):
            entries.append((v, 1, ep))
            if both:
                entries.append((v, -1, em))
    entries.sort(key=lambda e: (e[2], e[0], 0 if e[1] > 0 else 1))
    return CandidateRanking(entries=entries)


def predictor_error(g: SignedGraph, trusted: list[tuple[int, int]],
                    targets: np.ndarray, signs: np.ndarray) -> int:
    """Validation error of a trusted set: mispredicted edges under the
    ungated sign rule (score >= 0 predicts +1)."""
    if len(targets) == 0:
        return 0
    if not trusted:
        return int(np.count_nonzero(signs == -1))
    rows = opinion_matrix(g, [z for z, _ in trusted], targets)
    infl = np.array([r for _, r in trusted], dtype=np.int64)
    f = infl @ rows
    pred = np.where(f >= 0, 1, -1)
    return int(np.count_nonzero(pred != signs))


def merge_trusted(base: list[tuple[int, int]],
                  extra: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Set union; a peer ending up with both influences is dropped entirely
    (the two opinions cancel in every score, so this is score-preserving)."""
    merged = set(base) | set(extra)
    by_peer: dict[int, set[int]] = {}
    for z, r in merged:
        by_peer.setdefault(z, set()).add(r)
    return sorted((z, rs.pop()) for z, rs in by_peer.items() if len(rs) == 1)


# -- Algorithm: fit one subset -------------------------------------------------


def fit_subset(g: SignedGraph, x: int, entries: list[Entry],
               td: list[tuple[int, int]], vd: list[tuple[int, int]],
               config: TrainConfig, seed_key: tuple = ()) -> FitResult:
    """Sweep the penalty grid over one candidate subset and keep the
    solver assignment with the lowest validation error (ties prefer the
    smaller penalty, then the smaller trusted set).

    With an empty per-node validation set the sweep falls back to training
    error and the result is flagged.
    """
    if not entries:
        raise ConfigError("fit_subset needs a non-empty candidate subset")
    labels = [(v, r) for v, r, _ in entries]
    td_targets = np.array([y for y, _ in td], dtype=np.int64)
    td_signs = np.array([s for _, s in td], dtype=np.int64)
    rows = opinion_matrix(g, [v for v, _ in labels], td_targets)
    n_scale = config.n_scale if config.n_scale is not None else float(len(labels))

    use_training = not vd
    ev = td if use_training else vd
    ev_targets = np.array([y for y, _ in ev], dtype=np.int64)
    ev_signs = np.array([s for _, s in ev], dtype=np.int64)
    ev_rows = opinion_matrix(g, [v for v, _ in labels], ev_targets)
    sigma = np.array([r for _, r in labels], dtype=np.int64)

    best = None  # (error, lambda, size, trusted)
    for lam_idx, lam in enumerate(config.lambda_grid()):
        q = build_qubo(labels, rows, td_signs, lam, n_scale)
        if config.solver == "exact":
            assignment = solve_exact(q)
        else:
            seed = _derive_seed(config.seed, x, *seed_key, lam_idx)
            assignment = solve_tabu(q, replace(config.tabu, seed=seed))
        sel = np.flatnonzero(assignment.bits)
        f = sigma[sel] @ ev_rows[sel] if sel.size \
            else np.zeros(len(ev_targets), dtype=np.int64)
        pred = np.where(f >= 0, 1, -1)
        err = int(np.count_nonzero(pred != ev_signs))
        key = (err, lam, len(sel))
        if best is None or key < best[0]:
            trusted = sorted(labels[i] for i in sel)
            best = (key, trusted, lam)
    (err, _, _), trusted, lam = best
    return FitResult(trusted=trusted, validation_error=err,
                     chosen_lambda=lam, used_training_error=use_training)


def _derive_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


# -- Algorithm: greedy per-node training ----------------------------------------


def train_node(g: SignedGraph, x: int, td: list[tuple[int, int]],
               vd: list[tuple[int, int]], config: TrainConfig,
               peers: np.ndarray | None = None) -> tuple[NodePredictor, NodeTrainLog]:
    """Build the trusted-peer predictor for one source node.

    Ranks candidates, fits consecutive rank-order subsets of size d, and
    extends the accumulated trusted set while each extension strictly
    lowers the combined validation error. Nodes without training edges (or
    without candidates) get the empty predictor, which predicts +1.
    """
    logrec = NodeTrainLog(node=x, candidates=0, slices_fitted=0,
                          slices_accepted=0, final_size=0)
    if not td:
        logrec.flags.append("empty-td")
        logrec.final_error = 0
        return NodePredictor(source=x, trusted=[]), logrec
    if peers is None:
        from .opinion import peers_of
        peers = peers_of(g, x, config.policy)
    ranking = individual_errors(g, x, td, peers, config.policy.variant)
    entries = ranking.entries
    logrec.candidates = len(entries)
    if not entries:
        logrec.flags.append("no-candidates")

    use_training = not vd
    if use_training:
        logrec.flags.append("empty-vd")
    ev = td if use_training else vd
    ev_targets = np.array([y for y, _ in ev], dtype=np.int64)
    ev_signs = np.array([s for _, s in ev], dtype=np.int64)

    trusted: list[tuple[int, int]] = []
    best_err = predictor_error(g, trusted, ev_targets, ev_signs)
    for slice_idx in range(0, max(1, (len(entries) + config.d - 1) // config.d)):
        chunk = entries[slice_idx * config.d:(slice_idx + 1) * config.d]
        if not chunk:
            break
        fit = fit_subset(g, x, chunk, td, vd, config, seed_key=(slice_idx,))
        logrec.slices_fitted += 1
        candidate = merge_trusted(trusted, fit.trusted)
        err = predictor_error(g, candidate, ev_targets, ev_signs)
        if err < best_err:
            trusted = candidate
            best_err = err
            logrec.slices_accepted += 1
            logrec.lambdas.append(fit.chosen_lambda)
        else:
            break
    logrec.final_size = len(trusted)
    logrec.final_error = best_err
    return NodePredictor(source=x, trusted=trusted), logrec


# -- whole-graph driver ----------------------------------------------------------


def group_by_source(edges) -> dict[int, list[tuple[int, int]]]:
    grouped: dict[int, list[tuple[int, int]]] = {}
    for u, v, s in edges:
        grouped.setdefault(int(u), []).append((int(v), int(s)))
    return grouped


# Worker-process state, populated once per worker via the pool initializer so
# the (large, immutable) graph is shared through fork instead of pickled per task.
_WORKER: dict = {}


def _init_worker(g, config, td_by_src, vd_by_src):
    _WORKER["g"] = g
    _WORKER["config"] = config
    _WORKER["td"] = td_by_src
    _WORKER["vd"] = vd_by_src
    _WORKER["peer_index"] = PeerIndex(g, config.policy)


def _train_chunk(nodes: list[int]):
    g = _WORKER["g"]
    config = _WORKER["config"]
    idx: PeerIndex = _WORKER["peer_index"]
    out = []
    for x, peers in idx.iter_batched(np.array(nodes, dtype=np.int64)):
        pred, logrec = train_node(g, x, _WORKER["td"].get(x, []),
                                  _WORKER["vd"].get(x, []), config, peers=peers)
        out.append((pred, logrec))
    return out


def train_all(g: SignedGraph, split: DatasetSplit, config: TrainConfig,
              workers: int = 1, skip: set[int] | None = None,
              progress=None) -> tuple[dict[int, NodePredictor], list[NodeTrainLog]]:
    """Train a predictor for every node appearing as a training-edge source.

    Training is independent per source node, so it parallelizes across a
    process pool; results merge deterministically regardless of scheduling
    (solver seeds derive from (config.seed, node), never from worker
    identity). `skip` supports resumable runs.
    """
    td_by_src = group_by_source(split.train)
    vd_by_src = group_by_source(split.validation)
    sources = sorted(td_by_src)
    if skip:
        sources = [x for x in sources if x not in skip]

    predictors: dict[int, NodePredictor] = {}
    logs: list[NodeTrainLog] = []
    if workers <= 1:
        _init_worker(g, config, td_by_src, vd_by_src)
        try:
            for lo in range(0, len(sources), 512):
                for pred, logrec in _train_chunk(sources[lo:lo + 512]):
                    predictors[pred.source] = pred
                    logs.append(logrec)
                    if progress:
                        progress(pred.source)
        finally:
            _WORKER.clear()
        return predictors, logs

    chunks = [sources[lo:lo + 256] for lo in range(0, len(sources), 256)]
    with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker,
            initargs=(g, config, td_by_src, vd_by_src)) as pool:
        for batch in pool.map(_train_chunk, chunks):
            for pred, logrec in batch:
                predictors[pred.source] = pred
                logs.append(logrec)
                if progress:
                    progress(pred.source)
    logs.sort(key=lambda r: r.node)
    return predictors, logs


def default_workers() -> int:
    return os.cpu_count() or 1
