"""Binary quadratic subproblems for trusted-peer selection, plus solvers.

Each subproblem minimizes, over binary selection variables, the squared
error of the mean peer opinion against observed training signs plus an L0
penalty per selected variable. Variables are tagged (peer, influence); the
quadratic expansion keeps the coefficients exact integers before the final
1/N scaling, so the coefficient form and the definitional loss agree to
float precision.

Two solvers are provided: chunked brute-force enumeration (globally optimal,
guarded to m <= 24) and a deterministic single-flip tabu search with
best-so-far aspiration for larger instances.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import DataError, PeersignError

EXACT_LIMIT = 24  # enumeration budget guard: 2^24 assignments
_CHUNK_BITS = 18  # enumerate in chunks of 2^18 assignments


class QuboSizeError(PeersignError):
    """Instance too large for exact enumeration; use the tabu solver."""


@dataclass(frozen=True)
class QuboInstance:
    """objective(b) = constant + linear.b + sum_{i<j} quadratic[i,j] b_i b_j."""

    linear: np.ndarray          # (m,)
    quadratic: np.ndarray       # (m, m), strictly upper triangular
    constant: float
    labels: tuple[tuple[int, int], ...]  # (peer, influence) per variable

    @property
    def m(self) -> int:
        return int(self.linear.shape[0])

    def symmetric_quadratic(self) -> np.ndarray:
        return self.quadratic + self.quadratic.T


@dataclass(frozen=True)
class Assignment:
    bits: np.ndarray  # (m,) uint8
    objective: float

    def selected_labels(self, q: QuboInstance) -> list[tuple[int, int]]:
        return [q.labels[i] for i in np.flatnonzero(self.bits)]


@dataclass(frozen=True)
class TabuParams:
    """Tabu search budget. None fields derive from the instance size m:
    tenure max(7, m // 4), max_iterations 200 * m."""

    max_iterations: int | None = None
    tenure: int | None = None
    time_limit: float | None = 1.0  # seconds, None disables
    seed: int = 0

    def resolve(self, m: int) -> tuple[int, int]:
        iters = self.max_iterations if self.max_iterations is not None else 200 * m
        tenure = self.tenure if self.tenure is not None else max(7, m // 4)
        if iters < 1 or tenure < 1:
            raise DataError("tabu max_iterations and tenure must be >= 1")
        return iters, tenure


# -- construction ------------------------------------------------------------


def build_qubo(labels: list[tuple[int, int]], opinion_rows: np.ndarray,
               td_signs: np.ndarray, lam: float, n_scale: float) -> QuboInstance:
    """Expand the squared-loss-plus-penalty objective into QUBO coefficients.

    `opinion_rows[i, t]` is the extended sign from variable i's peer to the
    t-th training target; `td_signs[t]` the observed sign. With
    C[i, j] = sum_t opinion_rows[i, t] * opinion_rows[j, t] and
    L[i] = sum_t opinion_rows[i, t] * td_signs[t], the coefficients are

        linear[i]       = C[i, i] / N^2 - 2 sigma_i L[i] / N + lambda
        quadratic[i, j] = 2 sigma_i sigma_j C[i, j] / N^2   (i < j)
        constant        = number of training targets

    where sigma_i is variable i's influence tag. The diagonal of the double
    sum folds into the linear terms since b^2 = b.
    """
    if not labels:
        raise DataError("subproblem needs at least one candidate variable")
    if td_signs.size == 0:
        raise DataError("subproblem needs at least one training target")
    if lam < 0 or n_scale <= 0:
        raise DataError("lambda must be >= 0 and N > 0")
    m = len(labels)
    rows = np.asarray(opinion_rows, dtype=np.float64)
    signs = np.asarray(td_signs, dtype=np.float64)
    sigma = np.array([inf for _, inf in labels], dtype=np.float64)

    c = rows @ rows.T                     # (m, m), exact integers
    ell = rows @ signs                    # (m,)
    linear = np.diag(c) / n_scale**2 - 2.0 * sigma * ell / n_scale + lam
    quad = 2.0 * np.outer(sigma, sigma) * c / n_scale**2
    quad = np.triu(quad, k=1)
    return QuboInstance(
        linear=linear,
        quadratic=quad,
        constant=float(td_signs.size),
        labels=tuple((int(p), int(s)) for p, s in labels),
    )


def build_subproblem(g, x: int, peers, td: list[tuple[int, int]],
                     lam: float, n_scale: float | None, variant) -> QuboInstance:
    """Build the per-node QUBO for source x over candidate peer list `peers`.

    Standard variants get one +1 and one -1 influence variable per peer;
    the simple variant a single +1 variable. When n_scale is None it
    defaults to the candidate count len(peers).
    """
    from .opinion import OpinionVariant  # local import to avoid a cycle

    peers = list(int(p) for p in peers)
    if not peers:
        raise DataError("empty candidate peer set")
    if not td:
        raise DataError("empty per-node training set")
    if variant is OpinionVariant.SIMPLE_ADJACENT:
        labels = [(v, 1) for v in peers]
    else:
        labels = [(v, s) for v in peers for s in (1, -1)]
    targets = np.array([y for y, _ in td], dtype=np.int64)
    signs = np.array([s for _, s in td], dtype=np.int64)
    rows = opinion_matrix(g, [v for v, _ in labels], targets)
    if n_scale is None:
        n_scale = float(len(peers))
    return build_qubo(labels, rows, signs, lam, n_scale)


def opinion_matrix(g, peers, targets: np.ndarray) -> np.ndarray:
    """Dense (len(peers) x len(targets)) matrix of extended signs peer->target."""
    sub = g.sign_matrix[np.asarray(peers, dtype=np.int64)][:, targets]
    return sub.toarray().astype(np.int64)


# -- objective evaluation ------------------------------------------------------


def evaluate_objective(q: QuboInstance, bits) -> float:
    """Recompute the objective from scratch for the given assignment."""
    b = np.asarray(bits, dtype=np.float64).ravel()
    if b.shape[0] != q.m:
        raise DataError(f"assignment length {b.shape[0]} != m == {q.m}")
    return float(q.constant + q.linear @ b + b @ q.quadratic @ b)


def canonicalize_bits(q: QuboInstance, bits: np.ndarray) -> np.ndarray:
    """Clear any peer whose +1 and -1 variables are both set.

    The pair's opinion contributions cancel, so clearing never worsens the
    objective and strictly improves it when lambda > 0.
    """
    bits = bits.copy()
    by_peer: dict[int, dict[int, int]] = {}
    for i, (peer, infl) in enumerate(q.labels):
        by_peer.setdefault(peer, {})[infl] = i
    for slots in by_peer.values():
        i_plus, i_minus = slots.get(1), slots.get(-1)
        if i_plus is not None and i_minus is not None:
            if bits[i_plus] and bits[i_minus]:
                bits[i_plus] = 0
                bits[i_minus] = 0
    return bits


# -- exact solver --------------------------------------------------------------


def solve_exact(q: QuboInstance) -> Assignment:
    """Globally minimal assignment by chunked enumeration of all 2^m cases.

    Co-optimal ties resolve to the fewest set bits, then to the lowest
    value of the bit mask (variable i at bit position i).
    """
    m = q.m
    if m > EXACT_LIMIT:
        raise QuboSizeError(
            f"m == {m} exceeds the exact enumeration guard ({EXACT_LIMIT}); "
            "use solve_tabu")
    total = 1 << m
    chunk = min(total, 1 << _CHUNK_BITS)
    weights = (1 << np.arange(m, dtype=np.int64))
    best_obj = np.inf
    best_key = None  # (popcount, mask)
    best_bits = None
    for lo in range(0, total, chunk):
        masks = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
        bits = ((masks[:, None] >> np.arange(m)) & 1).astype(np.float64)
        objs = q.constant + bits @ q.linear + np.einsum(
            "ai,ij,aj->a", bits, q.quadratic, bits)
        i_min = int(np.argmin(objs))
        if objs[i_min] > best_obj:
            continue
        tied = np.flatnonzero(objs == objs[i_min])
        pops = bits[tied].sum(axis=1).astype(np.int64)
        order = np.lexsort((masks[tied], pops))
        cand = tied[order[0]]
        key = (int(pops[order[0]]), int(masks[cand]))
        if objs[cand] < best_obj or (objs[cand] == best_obj and key < best_key):
            best_obj = float(objs[cand])
            best_key = key
            best_bits = bits[cand].astype(np.uint8)
    bits = canonicalize_bits(q, best_bits)
    if not np.array_equal(bits, best_bits):
        best_obj = evaluate_objective(q, bits)
    return Assignment(bits=bits, objective=best_obj)


# -- tabu solver ---------------------------------------------------------------


def solve_tabu(q: QuboInstance, params: TabuParams | None = None) -> Assignment:
    """Single-bit-flip tabu search with best-so-far aspiration.

    Starts from the empty assignment, forbids re-flipping a variable for
    `tenure` iterations unless the move beats the incumbent, and restarts
    from a random assignment after prolonged stagnation. Deterministic for
    a fixed seed; the best assignment found is polished to a single-flip
    local optimum before being returned (unless the time limit hit first).
    """
    params = params or TabuParams()
    m = q.m
    if m < 1:
        raise DataError("instance has no variables")
    max_iters, tenure = params.resolve(m)
    deadline = None if params.time_limit is None else time.monotonic() + params.time_limit
    rng = np.random.default_rng(params.seed)
    qsym = q.symmetric_quadratic()

    bits = np.zeros(m, dtype=np.uint8)
    field = q.linear.copy()  # field[i] = linear[i] + sum_j qsym[i,j] b_j
    cur = q.constant
    best_bits = bits.copy()
    best_obj = cur
    tabu_until = np.zeros(m, dtype=np.int64)
    stagnation = 0
    restart_after = max(100, 20 * m)
    timed_out = False

    for it in range(1, max_iters + 1):
        if deadline is not None and (it & 63) == 0 and time.monotonic() > deadline:
            timed_out = True
            break
        if stagnation >= restart_after:
            bits = (rng.random(m) < 0.5).astype(np.uint8)
            field = q.linear + qsym @ bits
            cur = evaluate_objective(q, bits)
            tabu_until[:] = 0
            stagnation = 0
            if cur < best_obj:
                best_obj = cur
                best_bits = bits.copy()

        deltas = np.where(bits == 1, -field, field)
        allowed = (tabu_until < it) | (cur + deltas < best_obj)  # aspiration
        if not allowed.any():
            allowed[:] = True
        masked = np.where(allowed, deltas, np.inf)
        i = int(np.argmin(masked))
        step = -1.0 if bits[i] else 1.0
        cur += deltas[i]
        bits[i] ^= 1
        field += step * qsym[:, i]
        tabu_until[i] = it + tenure
        if cur < best_obj:
            best_obj = cur
            best_bits = bits.copy()
            stagnation = 0
        else:
            stagnation += 1

    best_bits = canonicalize_bits(q, best_bits)
    best_obj = evaluate_objective(q, best_bits)
    if not timed_out:
        best_bits, best_obj = _polish(q, qsym, best_bits, best_obj, deadline)
    return Assignment(bits=best_bits, objective=best_obj)


def _polish(q: QuboInstance, qsym: np.ndarray, bits: np.ndarray,
            obj: float, deadline) -> tuple[np.ndarray, float]:
    """Greedy descent until no single flip improves.

    Terminates: every flip strictly decreases the objective, so no
    assignment can repeat.
    """
    field = q.linear + qsym @ bits
    while True:
        if deadline is not None and time.monotonic() > deadline:
            break
        deltas = np.where(bits == 1, -field, field)
        i = int(np.argmin(deltas))
        if deltas[i] >= 0:
            break
        obj += deltas[i]
        step = -1.0 if bits[i] else 1.0
        bits[i] ^= 1
        field += step * qsym[:, i]
    bits = canonicalize_bits(q, bits)
    return bits, evaluate_objective(q, bits)


# -- debug dump ----------------------------------------------------------------


def dump_qubo(q: QuboInstance) -> str:
    """Text form for cross-checking against external solvers:
    `m constant`, then `i linear_i` lines, then `i j q_ij` lines."""
    out = [f"{q.m} {float(q.constant)!r}"]
    for i in range(q.m):
        out.append(f"{i} {float(q.linear[i])!r}")
    for i in range(q.m):
        for j in range(i + 1, q.m):
            if q.quadratic[i, j] != 0.0:
                out.append(f"{i} {j} {float(q.quadratic[i, j])!r}")
    return "\n".join(out) + "\n"


def parse_qubo(text: str) -> QuboInstance:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    m_str, const_str = lines[0].split()
    m = int(m_str)
    linear = np.zeros(m)
    quad = np.zeros((m, m))
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) == 2:
            linear[int(parts[0])] = float(parts[1])
        elif len(parts) == 3:
            i, j = int(parts[0]), int(parts[1])
            quad[min(i, j), max(i, j)] = float(parts[2])
        else:
            raise DataError(f"bad dump line {ln!r}")
    labels = tuple((i, 1) for i in range(m))
    return QuboInstance(linear=linear, quadratic=quad,
                        constant=float(const_str), labels=labels)
