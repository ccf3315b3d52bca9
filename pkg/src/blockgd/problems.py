"""Benchmark problems: tridiagonal nonlinear systems, linear instances, Jacobian checks.

All vectors are 1-d float64 arrays.  Column and row indices are 0-based
throughout the Python API; rendered tables and file formats stay 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .exceptions import (
    EvaluationError,
    InvalidBlockError,
    InvalidProblemError,
    UnknownProblemError,
)

Array = np.ndarray

DEFAULT_FD_STEP = 1e-6


def as_block_indices(indices, size, *, what="column") -> Array:
    """Validate a non-empty collection of distinct in-range indices.

    Returns an int64 array in the original order; sorting is the caller's
    business.  Raises InvalidBlockError on duplicates or out-of-range entries.
    """
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    if idx.ndim != 1 or idx.size == 0:
        raise InvalidBlockError(f"{what} block must be a non-empty 1-d index collection")
    if idx.min() < 0 or idx.max() >= size:
        raise InvalidBlockError(f"{what} indices out of range [0, {size}): {idx.tolist()}")
    if np.unique(idx).size != idx.size:
        raise InvalidBlockError(f"duplicate {what} indices: {idx.tolist()}")
    return idx


@dataclass(frozen=True)
class ProblemInstance:
    """A differentiable residual map f: R^n -> R^m with column-block Jacobian access.

    ``residual(x)`` returns f(x); ``jacobian_columns(x, cols)`` returns the
    dense (m, len(cols)) block of Jacobian columns.  Evaluators are pure
    functions of their inputs, so one instance can serve concurrent runs.

    The optional fields describe sparsity structure.  ``row_support(j)``
    lists the sorted rows where Jacobian column j can be nonzero,
    ``support_union(cols)`` is the union of supports over a block, and
    ``residual_rows(x, rows)`` evaluates just those residual rows (bitwise
    equal to the corresponding entries of ``residual(x)``).  When all three
    are present the solver can refresh residuals incrementally after a block
    update.  ``jacobian_rows(x, rows)`` supports the row-block method, and
    ``solve_kernel`` optionally points at a compiled inner loop for this
    problem family (see ``blockgd._kernels``).
    """

    name: str
    n: int
    m: int
    residual: Callable[[Array], Array]
    jacobian_columns: Callable[[Array, Array], Array]
    x0: Array
    row_support: Callable[[int], Array] | None = None
    support_union: Callable[[Array], Array] | None = None
    residual_rows: Callable[[Array, Array], Array] | None = None
    jacobian_rows: Callable[[Array, Array], Array] | None = None
    solve_kernel: Callable | None = None

    @property
    def supports_incremental(self) -> bool:
        return (self.row_support is not None
                and self.support_union is not None
                and self.residual_rows is not None)


def _check_dimension(x) -> Array:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise InvalidProblemError("tridiagonal systems need a 1-d input of dimension >= 2")
    return x


def _pad(x: Array) -> Array:
    # one zero ghost cell on each side; xpad[k+1] == x[k]
    xpad = np.zeros(x.size + 2)
    xpad[1:-1] = x
    return xpad


def _check_rows(rows, n) -> Array:
    rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
    if rows.size and (rows.min() < 0 or rows.max() >= n):
        raise InvalidBlockError(f"row indices out of range [0, {n}): {rows.tolist()}")
    return rows


# ---------------------------------------------------------------------------
# Broyden tridiagonal system: f_k = (0.5 x_k - 3) x_k + x_{k-1} + 2 x_{k+1} - 1
# with ghost values x_0 = x_{n+1} = 0 (indices 1-based in this formula).
# ---------------------------------------------------------------------------

def _broyden_rows(xpad: Array, rows: Array) -> Array:
    xr = xpad[rows + 1]
    return (0.5 * xr - 3.0) * xr + xpad[rows] + 2.0 * xpad[rows + 2] - 1.0


def broyden_residual(x) -> Array:
    """Residual of the Broyden tridiagonal system."""
    x = _check_dimension(x)
    return _broyden_rows(_pad(x), np.arange(x.size))


def broyden_residual_rows(x, rows) -> Array:
    """Selected rows of the Broyden residual (bitwise equal to the full evaluation)."""
    x = _check_dimension(x)
    return _broyden_rows(_pad(x), _check_rows(rows, x.size))


def _tridiag_columns(n, cols, upper, diag, lower) -> Array:
    # upper[c] goes to row cols[c]-1, lower[c] to row cols[c]+1 (rows outside range dropped)
    q = cols.size
    out = np.zeros((n, q))
    ccol = np.arange(q)
    has_up = cols >= 1
    out[cols[has_up] - 1, ccol[has_up]] = upper[has_up]
    out[cols, ccol] = diag
    has_dn = cols <= n - 2
    out[cols[has_dn] + 1, ccol[has_dn]] = lower[has_dn]
    return out


def _tridiag_rows_dense(n, rows, left, diag, right) -> Array:
    q = rows.size
    out = np.zeros((q, n))
    rr = np.arange(q)
    has_l = rows >= 1
    out[rr[has_l], rows[has_l] - 1] = left[has_l]
    out[rr, rows] = diag
    has_r = rows <= n - 2
    out[rr[has_r], rows[has_r] + 1] = right[has_r]
    return out


def broyden_jacobian_columns(x, cols) -> Array:
    """Dense (n, q) Jacobian column block of the Broyden system.

    Column j has at most three nonzeros: row j-1 holds 2, row j holds
    x_j - 3, row j+1 holds 1.
    """
    x = _check_dimension(x)
    cols = as_block_indices(cols, x.size)
    q = cols.size
    return _tridiag_columns(x.size, cols, np.full(q, 2.0), x[cols] - 3.0, np.full(q, 1.0))


def broyden_jacobian_rows(x, rows) -> Array:
    """Dense (q, n) Jacobian row block of the Broyden system."""
    x = _check_dimension(x)
    rows = as_block_indices(rows, x.size, what="row")
    q = rows.size
    return _tridiag_rows_dense(x.size, rows, np.full(q, 1.0), x[rows] - 3.0, np.full(q, 2.0))


# ---------------------------------------------------------------------------
# Li tridiagonal system:
#   f_1 = 4 (x_1 - x_2^2)
#   f_k = 8 x_k (x_k^2 - x_{k-1}) - 2 (1 - x_k) + 4 (x_k - x_{k+1}^2),  1 < k < n
#   f_n = 8 x_n (x_n^2 - x_{n-1}) - 2 (1 - x_n)
# Root at x = (1, ..., 1).
# ---------------------------------------------------------------------------

def _li_rows(xpad: Array, rows: Array, n: int) -> Array:
    xr = xpad[rows + 1]
    xm = xpad[rows]
    xp = xpad[rows + 2]
    out = 8.0 * xr * (xr * xr - xm) - 2.0 * (1.0 - xr) + 4.0 * (xr - xp * xp)
    first = rows == 0
    if first.any():
        out[first] = 4.0 * (xpad[1] - xpad[2] * xpad[2])
    last = rows == n - 1
    if last.any():
        xl = xpad[n]
        out[last] = 8.0 * xl * (xl * xl - xpad[n - 1]) - 2.0 * (1.0 - xl)
    return out


def li_residual(x) -> Array:
    """Residual of the Li tridiagonal system."""
    x = _check_dimension(x)
    return _li_rows(_pad(x), np.arange(x.size), x.size)


def li_residual_rows(x, rows) -> Array:
    """Selected rows of the Li residual (bitwise equal to the full evaluation)."""
    x = _check_dimension(x)
    return _li_rows(_pad(x), _check_rows(rows, x.size), x.size)


def _li_diag(x: Array, idx: Array, n: int) -> Array:
    # diagonal Jacobian entries at positions idx; shared by column/row builders
    xj = x[idx]
    xm = np.zeros(idx.size)
    inner = idx >= 1
    xm[inner] = x[idx[inner] - 1]
    vals = 24.0 * xj * xj - 8.0 * xm + 6.0
    vals[idx == 0] = 4.0
    last = idx == n - 1
    if last.any():
        vals[last] = 24.0 * xj[last] * xj[last] - 8.0 * xm[last] + 2.0
    return vals


def li_jacobian_columns(x, cols) -> Array:
    """Dense (n, q) Jacobian column block of the Li system.

    Column j: row j-1 holds -8 x_j, the diagonal holds 4 on the first row,
    24 x_j^2 - 8 x_{j-1} + 6 on interior rows and 24 x_n^2 - 8 x_{n-1} + 2 on
    the last row, and row j+1 holds -8 x_{j+1}.
    """
    x = _check_dimension(x)
    cols = as_block_indices(cols, x.size)
    n = x.size
    upper = -8.0 * x[cols]
    lower = np.zeros(cols.size)
    has_dn = cols <= n - 2
    lower[has_dn] = -8.0 * x[cols[has_dn] + 1]
    return _tridiag_columns(n, cols, upper, _li_diag(x, cols, n), lower)


def li_jacobian_rows(x, rows) -> Array:
    """Dense (q, n) Jacobian row block of the Li system."""
    x = _check_dimension(x)
    rows = as_block_indices(rows, x.size, what="row")
    n = x.size
    left = -8.0 * x[rows]
    right = np.zeros(rows.size)
    has_r = rows <= n - 2
    right[has_r] = -8.0 * x[rows[has_r] + 1]
    return _tridiag_rows_dense(n, rows, left, _li_diag(x, rows, n), right)


# ---------------------------------------------------------------------------
# Shared tridiagonal support structure
# ---------------------------------------------------------------------------

def _tridiag_support(j: int, n: int) -> Array:
    if not 0 <= j < n:
        raise InvalidBlockError(f"column index {j} out of range [0, {n})")
    return np.arange(max(j - 1, 0), min(j + 1, n - 1) + 1, dtype=np.int64)


def _tridiag_support_union(cols: Array, n: int) -> Array:
    cols = np.asarray(cols, dtype=np.int64)
    rows = np.unique(np.concatenate((cols - 1, cols, cols + 1)))
    return rows[(rows >= 0) & (rows < n)]


def broyden_problem(n: int) -> ProblemInstance:
    """Broyden tridiagonal system of dimension n; start point (-1.5, ..., -1.5)."""
    if n < 2:
        raise InvalidProblemError(f"broyden needs n >= 2, got {n}")
    x0 = np.full(n, -1.5)
    x0.flags.writeable = False
    return ProblemInstance(
        name="broyden",
        n=n,
        m=n,
        residual=broyden_residual,
        jacobian_columns=broyden_jacobian_columns,
        x0=x0,
        row_support=lambda j, _n=n: _tridiag_support(j, _n),
        support_union=lambda cols, _n=n: _tridiag_support_union(cols, _n),
        residual_rows=broyden_residual_rows,
        jacobian_rows=broyden_jacobian_rows,
        solve_kernel=_kernels.BROYDEN_KERNEL,
    )


def li_problem(n: int) -> ProblemInstance:
    """Li tridiagonal system of dimension n; start point (0.5, ..., 0.5)."""
    if n < 2:
        raise InvalidProblemError(f"li-tridiagonal needs n >= 2, got {n}")
    x0 = np.full(n, 0.5)
    x0.flags.writeable = False
    return ProblemInstance(
        name="li-tridiagonal",
        n=n,
        m=n,
        residual=li_residual,
        jacobian_columns=li_jacobian_columns,
        x0=x0,
        row_support=lambda j, _n=n: _tridiag_support(j, _n),
        support_union=lambda cols, _n=n: _tridiag_support_union(cols, _n),
        residual_rows=li_residual_rows,
        jacobian_rows=li_jacobian_rows,
        solve_kernel=_kernels.LI_KERNEL,
    )


# ---------------------------------------------------------------------------
# Linear instances: f(x) = A x - b (oracle substrate; every Taylor step exact)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearProblemSpec:
    """Dense linear residual data, f(x) = matrix @ x - rhs."""

    matrix: Array
    rhs: Array

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=float)
        b = np.asarray(self.rhs, dtype=float)
        if a.ndim != 2 or a.size == 0:
            raise InvalidProblemError("matrix must be a non-empty 2-d array")
        if b.shape != (a.shape[0],):
            raise InvalidProblemError(
                f"rhs shape {b.shape} does not match matrix with {a.shape[0]} rows")
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "rhs", b)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]


def linear_problem(matrix, rhs, name="linear", x0=None) -> ProblemInstance:
    """Wrap a dense linear system as a ProblemInstance (no sparsity declared)."""
    spec = LinearProblemSpec(np.array(matrix, dtype=float), np.array(rhs, dtype=float))
    A, b = spec.matrix, spec.rhs
    A.flags.writeable = False
    b.flags.writeable = False
    m, n = A.shape
    start = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if start.shape != (n,):
        raise InvalidProblemError(f"x0 shape {start.shape} does not match n={n}")
    start.flags.writeable = False

    def residual(x):
        return A @ np.asarray(x, dtype=float) - b

    def jacobian_columns(x, cols):
        return A[:, as_block_indices(cols, n)]

    def jacobian_rows(x, rows):
        return A[as_block_indices(rows, m, what="row"), :]

    return ProblemInstance(
        name=name,
        n=n,
        m=m,
        residual=residual,
        jacobian_columns=jacobian_columns,
        x0=start,
        jacobian_rows=jacobian_rows,
    )


def load_linear_problem(path) -> LinearProblemSpec:
    """Read a linear system from plain text.

    Format: first significant line ``m n``; then m lines of n whitespace
    separated matrix entries; then one line of m entries for the right-hand
    side.  Blank lines and ``#`` comments are skipped.
    """
    with open(path, "r", encoding="ascii") as fh:
        raw = fh.readlines()
    lines = []
    for line_no, text in enumerate(raw, 1):
        stripped = text.strip()
        if stripped and not stripped.startswith("#"):
            lines.append((line_no, stripped))
    if not lines:
        raise InvalidProblemError(f"{path}: no data lines")

    def parse_row(entry, count, kind, dtype=float):
        line_no, text = entry
        tokens = text.split()
        if len(tokens) != count:
            raise InvalidProblemError(
                f"{path}: line {line_no}: expected {count} {kind} entries, got {len(tokens)}")
        try:
            return [dtype(tok) for tok in tokens]
        except ValueError as exc:
            raise InvalidProblemError(f"{path}: line {line_no}: {exc}") from exc

    header = parse_row(lines[0], 2, "header", dtype=int)
    m, n = header
    if m < 1 or n < 1:
        raise InvalidProblemError(f"{path}: header dimensions must be positive, got {m} {n}")
    if len(lines) != 1 + m + 1:
        raise InvalidProblemError(
            f"{path}: expected {1 + m + 1} data lines (header, {m} matrix rows, rhs), "
            f"got {len(lines)}")
    rows = [parse_row(lines[1 + i], n, "matrix") for i in range(m)]
    rhs = parse_row(lines[1 + m], m, "rhs")
    return LinearProblemSpec(np.array(rows), np.array(rhs))


# ---------------------------------------------------------------------------
# Finite-difference Jacobian oracle
# ---------------------------------------------------------------------------

def finite_difference_column(problem, x, j, h=DEFAULT_FD_STEP) -> Array:
    """Central-difference approximation of Jacobian column j: (f(x+h e_j) - f(x-h e_j)) / 2h."""
    if not h > 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    j = int(j)
    if not 0 <= j < problem.n:
        raise InvalidBlockError(f"column index {j} out of range [0, {problem.n})")
    e = np.zeros(problem.n)
    e[j] = h
    f_plus = np.asarray(problem.residual(x + e), dtype=float)
    f_minus = np.asarray(problem.residual(x - e), dtype=float)
    if not (np.isfinite(f_plus).all() and np.isfinite(f_minus).all()):
        raise EvaluationError(f"non-finite residual while differencing column {j}")
    return (f_plus - f_minus) / (2.0 * h)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

_REGISTRY: dict[str, Callable[[int], ProblemInstance]] = {}


def register_problem(name: str, factory: Callable[[int], ProblemInstance]) -> None:
    """Register a problem factory under a string name (factory takes the dimension)."""
    _REGISTRY[name] = factory


def registered_problems() -> list[str]:
    return sorted(_REGISTRY)


def make_problem(name: str, n: int) -> ProblemInstance:
    """Build a registered problem of dimension n."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownProblemError(
            f"unknown problem {name!r}; registered: {registered_problems()}") from None
    return factory(n)


def default_start(name: str, n: int) -> Array:
    """Default start point of a registered problem."""
    return np.array(make_problem(name, n).x0)


register_problem("broyden", broyden_problem)
register_problem("li-tridiagonal", li_problem)
register_problem("identity", lambda n: linear_problem(np.eye(n), np.ones(n), name="identity"))
