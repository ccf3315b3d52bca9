"""Column-block gradient descent: block sampling, step operations, solve loop.

The core update for a column block ``xi`` at iterate ``x`` with residual
``f = f(x)`` and Jacobian column block ``B``:

    p_raw = B.T f                     (block gradient)
    w     = B p_raw                   (its image under the block)
    eta   = delta * ||p_raw||^2 / ||w||^2
    x[xi] -= eta * p_raw

With ``xi`` covering every column this is the full gradient descent step; for
linear residuals and delta = 1 the step length exactly minimizes ||f||^2 along
the block direction.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    EvaluationError,
    InvalidBlockError,
    InvalidConfigError,
    InvalidProblemError,
    NumericalInconsistencyError,
    UnsupportedModeError,
)
from .problems import ProblemInstance, as_block_indices

EPS_DEGENERATE = 1e-30          # squared-norm threshold below which a block step is skipped
DEGENERATE_STALL_LIMIT = 5000   # consecutive skipped steps before giving up
TIME_SAMPLE_STRIDE = 100        # iterations between wall-clock samples

METHODS = ("gd", "scbgd", "rowblock-gd")

REASON_CONVERGED = "converged"
REASON_ITERATION_CAP = "iteration-cap"
REASON_DEGENERATE_STALL = "degenerate-stall"


# ---------------------------------------------------------------------------
# Block selection and sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockSelection:
    """Strictly increasing, distinct 0-based column indices selecting a block."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.atleast_1d(np.asarray(self.indices, dtype=np.int64))
        if idx.ndim != 1 or idx.size == 0:
            raise InvalidBlockError("block must contain at least one index")
        if idx[0] < 0:
            raise InvalidBlockError(f"negative block index: {idx[0]}")
        if idx.size > 1 and np.any(idx[1:] <= idx[:-1]):
            raise InvalidBlockError("block indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)

    @property
    def q(self) -> int:
        return int(self.indices.size)


def _draw_block(rng, n, q) -> np.ndarray:
    # Uniform q-subset of range(n), ascending.  Rejection of duplicate draws
    # for small q (few expected retries while q*(q-1) <= n), partial shuffle
    # otherwise; both make every subset equally likely.
    if q == n:
        return np.arange(n, dtype=np.int64)
    if q * (q - 1) <= n:
        while True:
            idx = rng.integers(0, n, size=q)
            idx.sort()
            if q == 1 or bool(np.all(idx[1:] != idx[:-1])):
                return idx
    idx = rng.permutation(n)[:q].astype(np.int64, copy=False)
    idx.sort()
    return idx


def sample_block(rng, n, q) -> BlockSelection:
    """Draw a uniformly random block of q distinct column indices from range(n).

    Each of the comb(n, q) subsets has equal probability.  The draw is a
    deterministic function of the generator state, so seeding the generator
    fixes the whole block sequence.
    """
    n = int(n)
    q = int(q)
    if n < 1 or q < 1 or q > n:
        raise InvalidConfigError(f"block size must satisfy 1 <= q <= n, got q={q}, n={n}")
    return BlockSelection(_draw_block(rng, n, q))


class _BlockSampler:
    """Chunked uniform block sampler sharing one stream across solve paths."""

    def __init__(self, rng, n, q, chunk=TIME_SAMPLE_STRIDE):
        self._rng = rng
        self._n = n
        self._q = q
        self._chunk_size = chunk
        self._buf = np.empty((0, q), dtype=np.int64)
        self._pos = 0

    def chunk(self, count) -> np.ndarray:
        n, q, rng = self._n, self._q, self._rng
        if q == n:
            return np.tile(np.arange(n, dtype=np.int64), (count, 1))
        if q * (q - 1) <= n:
            blocks = rng.integers(0, n, size=(count, q))
            blocks.sort(axis=1)
            if q > 1:
                bad = np.nonzero((np.diff(blocks, axis=1) == 0).any(axis=1))[0]
                for i in bad:
                    blocks[i] = _draw_block(rng, n, q)
            return blocks
        blocks = np.empty((count, q), dtype=np.int64)
        for i in range(count):
            row = rng.permutation(n)[:q]
            row.sort()
            blocks[i] = row
        return blocks

    def next(self) -> np.ndarray:
        if self._pos >= self._buf.shape[0]:
            self._buf = self.chunk(self._chunk_size)
            self._pos = 0
        row = self._buf[self._pos]
        self._pos += 1
        return row


# ---------------------------------------------------------------------------
# Step operations
# ---------------------------------------------------------------------------

def compute_step_size(p_raw, w, delta) -> tuple[float, bool]:
    """Step length along the block gradient: delta * ||p_raw||^2 / ||w||^2.

    Returns ``(eta, degenerate)``; the degenerate flag is set (with eta = 0)
    when ||p_raw||^2 <= EPS_DEGENERATE.  A zero ``w`` with a non-degenerate
    ``p_raw`` is analytically impossible (p_raw lies in the row space of the
    block) and raises NumericalInconsistencyError.
    """
    p = np.asarray(p_raw, dtype=float)
    wv = np.asarray(w, dtype=float)
    pp = float(np.dot(p, p))
    if not math.isfinite(pp):
        raise EvaluationError("non-finite block gradient")
    if pp <= EPS_DEGENERATE:
        return 0.0, True
    ww = float(np.dot(wv, wv))
    if not math.isfinite(ww):
        raise EvaluationError("non-finite step normalization")
    if ww <= 0.0:
        raise NumericalInconsistencyError(
            "||w|| = 0 while ||p_raw|| > 0; block image lost the block gradient")
    return delta * pp / ww, False


@dataclass(frozen=True)
class StepOutcome:
    """One block-gradient update.

    ``p_raw`` is the block gradient in compact form (one entry per selected
    column; the full-space direction scatters it as -eta over the block),
    ``w`` its image under the Jacobian block.  For the row-block method
    ``p_raw`` is the dense n-vector gradient of the selected rows and ``w``
    lives in the selected row space.
    """

    p_raw: np.ndarray
    w: np.ndarray
    eta: float
    direction: np.ndarray
    x_next: np.ndarray
    degenerate: bool


def _block_array(block, size, what="column") -> np.ndarray:
    if isinstance(block, BlockSelection):
        idx = block.indices
        if idx[-1] >= size:
            raise InvalidBlockError(f"{what} indices out of range [0, {size}): {idx.tolist()}")
        return idx
    return np.sort(as_block_indices(block, size, what=what))


def scbgd_step(problem, x, block, delta=1.0, residual=None) -> StepOutcome:
    """One stochastic column-block gradient descent update at x.

    Only the selected coordinates move: ``x_next[block] = x[block] - eta * p_raw``.
    ``residual``, when given, must equal ``problem.residual(x)`` exactly.
    With ``block`` covering all columns this reproduces ``gd_step`` bitwise.
    """
    x = np.asarray(x, dtype=float)
    cols = _block_array(block, problem.n)
    f = problem.residual(x) if residual is None else np.asarray(residual, dtype=float)
    if not np.isfinite(f).all():
        raise EvaluationError("non-finite residual")
    B = np.asarray(problem.jacobian_columns(x, cols), dtype=float)
    p = B.T @ f
    w = B @ p
    eta, degenerate = compute_step_size(p, w, delta)
    direction = np.zeros(problem.n)
    if degenerate:
        x_next = x.copy()
    else:
        direction[cols] = -eta * p
        x_next = x + direction
    return StepOutcome(p, w, eta, direction, x_next, degenerate)


def gd_step(problem, x, delta=1.0, residual=None) -> StepOutcome:
    """Full gradient descent update: the block step with every column selected."""
    return scbgd_step(problem, x, np.arange(problem.n), delta, residual)


def rowblock_gd_step(problem, x, rows, delta=1.0, residual=None) -> StepOutcome:
    """Row-block gradient update (dense in x).

    With J the selected Jacobian rows and f_rho the matching residual rows,
    the move is -eta * J.T f_rho with eta = delta ||J.T f_rho||^2 / ||J J.T f_rho||^2.
    Selecting every row reproduces ``gd_step``.
    """
    x = np.asarray(x, dtype=float)
    ridx = _block_array(rows, problem.m, what="row")
    f = problem.residual(x) if residual is None else np.asarray(residual, dtype=float)
    if not np.isfinite(f).all():
        raise EvaluationError("non-finite residual")
    if problem.jacobian_rows is not None:
        J = np.asarray(problem.jacobian_rows(x, ridx), dtype=float)
    else:
        J = np.asarray(problem.jacobian_columns(x, np.arange(problem.n)), dtype=float)[ridx]
    fr = f[ridx]
    g = J.T @ fr
    w = J @ g
    eta, degenerate = compute_step_size(g, w, delta)
    if degenerate:
        direction = np.zeros(problem.n)
        x_next = x.copy()
    else:
        direction = -eta * g
        x_next = x + direction
    return StepOutcome(g, w, eta, direction, x_next, degenerate)


def incremental_residual_update(problem, f_old, x_new, changed_cols) -> np.ndarray:
    """Refresh a residual after a block update by recomputing only affected rows.

    Rows outside the union of the changed columns' supports are copied from
    ``f_old``; recomputed rows equal a full re-evaluation at ``x_new`` bitwise.
    Requires the problem to declare row supports and a row-restricted residual.
    """
    if problem.support_union is None or problem.residual_rows is None:
        raise UnsupportedModeError(
            f"problem {problem.name!r} declares no row supports; use full updates")
    out = np.array(f_old, dtype=float)
    cols = np.atleast_1d(np.asarray(changed_cols, dtype=np.int64))
    if cols.size == 0:
        return out
    cols = np.sort(as_block_indices(cols, problem.n))
    rows = problem.support_union(cols)
    out[rows] = problem.residual_rows(x_new, rows)
    return out


# ---------------------------------------------------------------------------
# Solve loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Solve parameters.

    ``q`` is the block size (ignored by method 'gd'), ``delta`` the step
    relaxation, strictly inside (0, 2).  ``residual_update`` selects how the
    residual vector is refreshed each iteration: 'incremental' recomputes only
    the rows supported by the updated columns, 'full' re-evaluates everything;
    None picks 'incremental' whenever the problem declares row supports.
    """

    method: str
    q: int | None = None
    delta: float = 1.0
    tol: float = 1e-6
    max_iter: int = 200000
    seed: int = 0
    residual_update: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.delta < 2.0:
            raise InvalidConfigError(f"delta must lie strictly inside (0, 2), got {self.delta}")
        if self.method != "gd":
            if self.q is None:
                raise InvalidConfigError(f"method {self.method!r} needs a block size q")
            if self.q < 1:
                raise InvalidConfigError(f"block size q must be positive, got {self.q}")
        if not self.tol > 0:
            raise InvalidConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise InvalidConfigError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.residual_update not in (None, "full", "incremental"):
            raise InvalidConfigError(
                f"residual_update must be 'full', 'incremental' or None, got {self.residual_update!r}")


@dataclass(frozen=True)
class SolveResult:
    """Trajectory summary of one solve run.

    ``residual_norms[k]`` is ||f(x_k)|| for k = 0..iterations (degenerate
    iterations repeat the previous value).  ``sample_iterations`` and
    ``sample_seconds`` record the wall clock at iteration 0, every
    TIME_SAMPLE_STRIDE iterations, and the final iterate.
    """

    iterations: int
    reason: str
    residual_norms: np.ndarray
    sample_iterations: np.ndarray
    sample_seconds: np.ndarray
    x: np.ndarray
    wall_time_s: float

    @property
    def converged(self) -> bool:
        return self.reason == REASON_CONVERGED

    @property
    def final_residual(self) -> float:
        return float(self.residual_norms[-1])


class _Recorder:
    """Residual/clock bookkeeping shared by the solve loops."""

    def __init__(self, fnorm0, t0):
        self.t0 = t0
        self.norms = [fnorm0]
        self.sample_iters = [0]
        self.sample_times = [time.perf_counter() - t0]

    def sample(self, it):
        self.sample_iters.append(it)
        self.sample_times.append(time.perf_counter() - self.t0)

    def finish(self, problem, x, iterations, reason):
        wall = time.perf_counter() - self.t0
        if self.sample_iters[-1] != iterations:
            self.sample_iters.append(iterations)
            self.sample_times.append(wall)
        return SolveResult(
            iterations=iterations,
            reason=reason,
            residual_norms=np.asarray(self.norms),
            sample_iterations=np.asarray(self.sample_iters, dtype=np.int64),
            sample_seconds=np.asarray(self.sample_times),
            x=x,
            wall_time_s=wall,
        )


def solve(problem: ProblemInstance, config: SolverConfig, x0=None) -> SolveResult:
    """Iterate the configured method until ||f(x_k)|| <= tol, the iteration
    cap, or a degenerate stall.

    Stochastic methods draw one uniform block per iteration; a degenerate
    block (vanishing block gradient) consumes the iteration without moving,
    and DEGENERATE_STALL_LIMIT consecutive such steps end the run.  The
    residual norm is recorded every iteration.  Evaluation failures carry the
    iteration index.  The run owns its generator state: identical config,
    problem and start point reproduce the trajectory exactly.
    """
    method = config.method
    n, m = problem.n, problem.m
    if method == "gd":
        q = n
    else:
        q = int(config.q)
        limit = n if method == "scbgd" else m
        if q > limit:
            raise InvalidConfigError(
                f"block size q={q} exceeds the {'column' if limit == n else 'row'} count {limit}")

    mode = config.residual_update
    if mode is None:
        mode = "incremental" if problem.supports_incremental else "full"
    elif mode == "incremental" and not problem.supports_incremental:
        mode = "full"  # documented fallback when no supports are declared

    x = np.array(problem.x0 if x0 is None else x0, dtype=float)
    if x.shape != (n,):
        raise InvalidProblemError(f"start point shape {x.shape} does not match n={n}")

    t0 = time.perf_counter()
    f = np.asarray(problem.residual(x), dtype=float)
    fnorm = float(np.linalg.norm(f))
    if not math.isfinite(fnorm):
        raise EvaluationError("non-finite residual at the start point")
    rec = _Recorder(fnorm, t0)

    if fnorm <= config.tol:
        return rec.finish(problem, x, 0, REASON_CONVERGED)

    if method == "scbgd" and mode == "incremental" and problem.solve_kernel is not None:
        return _solve_kernel_loop(problem, q, config, x, f, rec)
    return _solve_python_loop(problem, method, q, mode, config, x, f, fnorm, rec)


def _solve_python_loop(problem, method, q, mode, config, x, f, fnorm, rec):
    n, m = problem.n, problem.m
    delta, tol, max_iter = config.delta, config.tol, config.max_iter
    rng = np.random.default_rng(config.seed)
    stochastic = method != "gd"
    sampler = _BlockSampler(rng, m if method == "rowblock-gd" else n, q) if stochastic else None
    full_cols = None if stochastic else np.arange(n)
    incremental = method == "scbgd" and mode == "incremental"

    it = 0
    streak = 0
    reason = None
    while True:
        if fnorm <= tol:
            reason = REASON_CONVERGED
            break
        if it >= max_iter:
            reason = REASON_ITERATION_CAP
            break
        if streak >= DEGENERATE_STALL_LIMIT:
            reason = REASON_DEGENERATE_STALL
            break
        try:
            if method == "rowblock-gd":
                out = rowblock_gd_step(problem, x, sampler.next(), delta, residual=f)
                cols = None
            else:
                cols = sampler.next() if stochastic else full_cols
                out = scbgd_step(problem, x, cols, delta, residual=f)
            if out.degenerate:
                streak += 1
            else:
                streak = 0
                x = out.x_next
                if incremental:
                    rows = problem.support_union(cols)
                    f[rows] = problem.residual_rows(x, rows)
                else:
                    f = np.asarray(problem.residual(x), dtype=float)
                fnorm = float(np.linalg.norm(f))
                if not math.isfinite(fnorm):
                    raise EvaluationError("non-finite residual")
        except (EvaluationError, NumericalInconsistencyError) as exc:
            raise type(exc)(f"iteration {it + 1}: {exc}") from exc
        it += 1
        rec.norms.append(fnorm)
        if it % TIME_SAMPLE_STRIDE == 0:
            rec.sample(it)
    return rec.finish(problem, x, it, reason)


def _solve_kernel_loop(problem, q, config, x, f, rec):
    n = problem.n
    delta, tol, max_iter = config.delta, config.tol, config.max_iter
    tol2 = tol * tol
    rng = np.random.default_rng(config.seed)
    sampler = _BlockSampler(rng, n, q)
    kernel = problem.solve_kernel

    xpad = np.zeros(n + 2)
    xpad[1:-1] = x
    fpad = np.zeros(n + 2)
    fpad[1:-1] = f
    fview = fpad[1:-1]
    wpad = np.zeros(n + 2)
    mark = np.zeros(n + 2, dtype=np.uint8)
    p_buf = np.empty(q)
    d_buf = np.empty(q)
    chunk_norms = np.empty(TIME_SAMPLE_STRIDE)

    it = 0
    streak = 0
    reason = None
    while reason is None:
        budget = min(TIME_SAMPLE_STRIDE, max_iter - it)
        if budget <= 0:
            reason = REASON_ITERATION_CAP
            break
        blocks = sampler.chunk(budget)
        nn = float(np.dot(fview, fview))  # chunk-start refresh keeps drift out
        consumed, nn, streak, status = kernel(
            xpad, fpad, blocks, delta, tol2, EPS_DEGENERATE, nn, streak,
            DEGENERATE_STALL_LIMIT, chunk_norms, mark, wpad, p_buf, d_buf)
        rec.norms.extend(chunk_norms[:consumed].tolist())
        it += consumed
        if status == 3 or not math.isfinite(nn):
            raise EvaluationError(f"iteration {it}: non-finite values in block update")
        if status == 4:
            raise NumericalInconsistencyError(
                f"iteration {it}: ||w|| = 0 while ||p_raw|| > 0")
        if status == 1:
            reason = REASON_CONVERGED
        elif status == 2:
            reason = REASON_DEGENERATE_STALL
        elif it >= max_iter:
            reason = REASON_ITERATION_CAP
        if reason is None and it % TIME_SAMPLE_STRIDE == 0:
            rec.sample(it)
    return rec.finish(problem, xpad[1:-1].copy(), it, reason)
