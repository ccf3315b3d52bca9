"""Machine checks of the block-descent convergence analysis.

The rate constants are exactly computable only for linear residuals, where the
quadratic model is exact, so every region-wide check here runs on linear
instances; for the nonlinear benchmarks only the pointwise descent property is
asserted (see the descent suite).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .exceptions import (
    InvalidConfigError,
    InvalidConstantsError,
    TooManyBlocksError,
    ZeroMatrixError,
)
from .problems import (
    LinearProblemSpec,
    broyden_problem,
    finite_difference_column,
    li_problem,
    linear_problem,
)
from .solvers import _draw_block, sample_block, scbgd_step

BLOCK_ENUMERATION_LIMIT = 1_000_000
SINGULAR_VALUE_RTOL = 1e-12  # nonzero threshold relative to sigma_max


def sigma_bounds(matrix) -> tuple[float, float]:
    """Smallest nonzero and largest singular values of a matrix.

    Singular values below SINGULAR_VALUE_RTOL * sigma_max count as zero; a
    matrix with no nonzero singular values raises ZeroMatrixError.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise ValueError("sigma_bounds needs a non-empty 2-d matrix")
    if not np.isfinite(a).all():
        raise ValueError("matrix must be finite")
    s = np.linalg.svd(a, compute_uv=False)
    smax = float(s[0])
    if smax <= 0.0:
        raise ZeroMatrixError("matrix has no nonzero singular values")
    nonzero = s[s > SINGULAR_VALUE_RTOL * smax]
    return float(nonzero[-1]), smax


def enumerate_blocks(n, q):
    """All comb(n, q) ascending blocks in lexicographic order.

    Returns (count, iterator); raises TooManyBlocksError beyond the guard.
    """
    if not 1 <= q <= n:
        raise InvalidConfigError(f"block size must satisfy 1 <= q <= n, got q={q}, n={n}")
    count = math.comb(n, q)
    if count > BLOCK_ENUMERATION_LIMIT:
        raise TooManyBlocksError(
            f"comb({n}, {q}) = {count} blocks exceed the enumeration guard "
            f"{BLOCK_ENUMERATION_LIMIT}")
    return count, itertools.combinations(range(n), q)


def block_lipschitz_constants(linear, q) -> tuple[np.ndarray, float]:
    """Blockwise gradient Lipschitz constants of g(x) = 0.5 ||A x - b||^2.

    For a linear residual the block gradient varies linearly, so the constant
    of block J is exactly sigma_max(A[:, J])^2.  Returns the constants in
    lexicographic block order plus their maximum.
    """
    A = linear.matrix if isinstance(linear, LinearProblemSpec) else np.asarray(linear, float)
    count, blocks = enumerate_blocks(A.shape[1], q)
    values = np.empty(count)
    for i, block in enumerate(blocks):
        values[i] = np.linalg.svd(A[:, block], compute_uv=False)[0] ** 2
    return values, float(values.max())


@dataclass(frozen=True)
class TheoremConstants:
    """Constants feeding the convergence-rate bounds.

    ``sigma_min_lb``/``sigma_max_ub`` bracket the Jacobian's nonzero singular
    values over the region of interest, ``l_max`` bounds the blockwise
    gradient Lipschitz constants, ``tau`` counts the blocks and ``delta`` is
    the step relaxation.  ``r0`` (level-set radius), ``gamma`` (strong
    convexity modulus) and ``mu`` (gradient-dominance constant) are optional;
    bounds that need a missing one raise InvalidConstantsError.
    """

    sigma_min_lb: float
    sigma_max_ub: float
    l_max: float
    tau: int
    delta: float
    r0: float | None = None
    gamma: float | None = None
    mu: float | None = None

    def __post_init__(self):
        if not (0.0 < self.sigma_min_lb <= self.sigma_max_ub < math.inf):
            raise InvalidConstantsError(
                f"need 0 < sigma_min_lb <= sigma_max_ub < inf, got "
                f"{self.sigma_min_lb}, {self.sigma_max_ub}")
        if not self.l_max > 0.0:
            raise InvalidConstantsError(f"l_max must be positive, got {self.l_max}")
        if self.tau < 1:
            raise InvalidConstantsError(f"tau must be at least 1, got {self.tau}")
        if not 0.0 < self.delta < 2.0:
            raise InvalidConstantsError(f"delta must lie in (0, 2), got {self.delta}")
        for label in ("r0", "gamma", "mu"):
            value = getattr(self, label)
            if value is not None and not value > 0.0:
                raise InvalidConstantsError(f"{label} must be positive when given, got {value}")

    @property
    def delta_limit(self) -> float:
        """Upper end of the admissible relaxation range, min(2, 4 sigma_min^2 / l_max)."""
        return min(2.0, 4.0 * self.sigma_min_lb ** 2 / self.l_max)

    @property
    def alpha(self) -> float:
        """Per-iteration expected-decrease factor; positive iff delta < delta_limit."""
        smin2 = self.sigma_min_lb ** 2
        smax2 = self.sigma_max_ub ** 2
        return (self.delta / (self.tau * smax2)) * (2.0 - self.delta * self.l_max / (2.0 * smin2))

    def with_radius(self, r0) -> "TheoremConstants":
        return replace(self, r0=float(r0))

    @classmethod
    def for_linear(cls, matrix, q, delta, r0=None) -> "TheoremConstants":
        """Exact constants for g(x) = 0.5 ||A x - b||^2 with q-column blocks.

        gamma is sigma_min(A)^2 when A has full column rank (else None); mu is
        always sigma_min_nonzero(A)^2, the gradient-dominance constant of a
        linear least-squares objective.
        """
        A = np.asarray(matrix, dtype=float)
        smin, smax = sigma_bounds(A)
        _, l_max = block_lipschitz_constants(A, q)
        s = np.linalg.svd(A, compute_uv=False)
        full_rank = A.shape[0] >= A.shape[1] and float(s[-1]) > SINGULAR_VALUE_RTOL * smax
        return cls(
            sigma_min_lb=smin,
            sigma_max_ub=smax,
            l_max=l_max,
            tau=math.comb(A.shape[1], q),
            delta=delta,
            r0=r0,
            gamma=float(s[-1]) ** 2 if full_rank else None,
            mu=smin ** 2,
        )


def descent_direction_check(problem, x, block, delta=1.0) -> float:
    """Inner product of the block step direction with the full gradient of g.

    Returns d^T grad g(x) with grad g = J(x)^T f(x); the step construction
    makes this -eta ||p_raw||^2, strictly negative whenever the block gradient
    is nonzero, and zero at roots or on degenerate blocks.
    """
    x = np.asarray(x, dtype=float)
    out = scbgd_step(problem, x, block, delta)
    f = np.asarray(problem.residual(x), dtype=float)
    grad = np.asarray(problem.jacobian_columns(x, np.arange(problem.n)), dtype=float).T @ f
    return float(np.dot(out.direction, grad))


def expected_decrease_check(linear, x, q, delta) -> tuple[float, float]:
    """Exact one-step conditional expectation of g versus the decrease bound.

    Enumerates every q-column block, applies the block step to each with equal
    weight, and averages g at the results (compensated summation in a fixed
    order).  Returns ``(expected, bound)`` with
    bound = g(x) - alpha ||grad g(x)||^2.  Requires delta < delta_limit.
    """
    spec = linear if isinstance(linear, LinearProblemSpec) else LinearProblemSpec(*linear)
    A, b = spec.matrix, spec.rhs
    constants = TheoremConstants.for_linear(A, q, delta)
    if not delta < constants.delta_limit:
        raise InvalidConfigError(
            f"delta {delta} outside (0, {constants.delta_limit}) required by the bound")
    problem = linear_problem(A, b)
    x = np.asarray(x, dtype=float)
    f = problem.residual(x)
    g0 = 0.5 * float(np.dot(f, f))
    grad = A.T @ f
    count, blocks = enumerate_blocks(spec.n, q)
    values = []
    for block in blocks:
        out = scbgd_step(problem, x, np.asarray(block, dtype=np.int64), delta, residual=f)
        r = problem.residual(out.x_next)
        values.append(0.5 * float(np.dot(r, r)))
    expected = math.fsum(values) / count
    bound = g0 - constants.alpha * float(np.dot(grad, grad))
    return expected, bound


class RateBounds(NamedTuple):
    sublinear: float
    linear: float | None
    strong_convexity_condition: bool | None


def theorem1_bounds(constants: TheoremConstants, k: int, psi0: float) -> RateBounds:
    """Closed-form optimality-gap bounds after k iterations from the initial gap psi0.

    The sublinear bound is 2 tau smin^2 smax^2 r0^2 / (k delta (4 smin^2 -
    delta l_max)), identical to r0^2 / (k alpha); both evaluations are checked
    against each other to 1e-12 relative.  The linear-rate bound
    (1 - 2 gamma alpha)^k psi0 needs gamma; its side condition
    delta^2 l_max gamma - 4 delta gamma smin^2 + tau smax^2 smin^2 >= 0 is
    reported, not enforced.
    """
    if k < 1:
        raise InvalidConstantsError(f"k must be at least 1, got {k}")
    alpha = constants.alpha
    if alpha <= 0.0:
        raise InvalidConstantsError(
            f"alpha <= 0: delta {constants.delta} must be below {constants.delta_limit}")
    if constants.r0 is None:
        raise InvalidConstantsError("r0 (level-set radius) required for the sublinear bound")
    smin2 = constants.sigma_min_lb ** 2
    smax2 = constants.sigma_max_ub ** 2
    d = constants.delta
    sublinear = (2.0 * constants.tau * smin2 * smax2 * constants.r0 ** 2
                 / (k * d * (4.0 * smin2 - d * constants.l_max)))
    alt = constants.r0 ** 2 / (k * alpha)
    if abs(sublinear - alt) > 1e-12 * max(abs(sublinear), abs(alt)):
        raise InvalidConstantsError("inconsistent sublinear-bound evaluations")
    if constants.gamma is None:
        return RateBounds(sublinear, None, None)
    g = constants.gamma
    linear = (1.0 - 2.0 * g * alpha) ** k * psi0
    condition = d * d * constants.l_max * g - 4.0 * d * g * smin2 + constants.tau * smax2 * smin2 >= 0.0
    return RateBounds(sublinear, linear, condition)


def pl_rate_bound(constants: TheoremConstants, k: int, psi0: float) -> float:
    """Linear-rate bound (1 - 2 mu alpha)^k psi0 under gradient dominance."""
    if k < 1:
        raise InvalidConstantsError(f"k must be at least 1, got {k}")
    if constants.mu is None:
        raise InvalidConstantsError("mu (gradient-dominance constant) required")
    alpha = constants.alpha
    if alpha <= 0.0:
        raise InvalidConstantsError(
            f"alpha <= 0: delta {constants.delta} must be below {constants.delta_limit}")
    return (1.0 - 2.0 * constants.mu * alpha) ** k * psi0


# ---------------------------------------------------------------------------
# Verification suites (consumed by the CLI's `verify` subcommand and tests)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationCheck:
    """One line of a verification report."""

    name: str
    instance: str
    measured: float
    bound: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name} {self.instance} measured={self.measured:.6e} "
                f"bound={self.bound:.6e} {status}")


def _benchmark_pair(n):
    return broyden_problem(n), li_problem(n)


def run_jacobian_suite(points=100, n=30, seed=20240811) -> list[VerificationCheck]:
    """Analytic Jacobian columns versus central finite differences, plus
    declared-support coverage, at random points."""
    rng = np.random.default_rng(seed)
    checks = []
    for problem in _benchmark_pair(n):
        worst = 0.0
        support_misses = 0
        for _ in range(points):
            x = rng.uniform(-2.0, 2.0, size=n)
            cols = np.arange(n)
            block = np.asarray(problem.jacobian_columns(x, cols), dtype=float)
            for j in range(n):
                fd = finite_difference_column(problem, x, j)
                denom = max(float(np.linalg.norm(block[:, j])), 1e-30)
                worst = max(worst, float(np.linalg.norm(block[:, j] - fd)) / denom)
                nonzero = np.nonzero(block[:, j])[0]
                if not np.isin(nonzero, problem.row_support(j)).all():
                    support_misses += 1
        checks.append(VerificationCheck(
            "jacobian-fd", f"{problem.name}(n={n},points={points})", worst, 1e-5,
            worst <= 1e-5))
        checks.append(VerificationCheck(
            "jacobian-support", f"{problem.name}(n={n},points={points})",
            float(support_misses), 0.0, support_misses == 0))
    return checks


def run_descent_suite(draws=1000, n=40, q=5, seed=20240812) -> list[VerificationCheck]:
    """Strict descent of the block direction and the -eta ||p_raw||^2 identity
    over random states with nonzero block gradients."""
    rng = np.random.default_rng(seed)
    checks = []
    for problem in _benchmark_pair(n):
        worst_inner = -math.inf
        worst_identity = 0.0
        used = 0
        while used < draws:
            x = rng.uniform(-2.0, 2.0, size=n)
            block = sample_block(rng, n, q)
            out = scbgd_step(problem, x, block)
            pp = float(np.dot(out.p_raw, out.p_raw))
            if math.sqrt(pp) <= 1e-8:
                continue
            used += 1
            inner = descent_direction_check(problem, x, block)
            worst_inner = max(worst_inner, inner)
            expected = -out.eta * pp
            worst_identity = max(worst_identity, abs(inner - expected) / abs(expected))
        checks.append(VerificationCheck(
            "descent-negative", f"{problem.name}(n={n},q={q},draws={draws})",
            worst_inner, 0.0, worst_inner < 0.0))
        checks.append(VerificationCheck(
            "descent-identity", f"{problem.name}(n={n},q={q},draws={draws})",
            worst_identity, 1e-12, worst_identity <= 1e-12))
    return checks


def well_conditioned_matrix(n=8, spread=1.4, seed=20240813) -> np.ndarray:
    """Random square matrix with singular values spread over [1, spread]."""
    rng = np.random.default_rng(seed)
    u, _ = np.linalg.qr(rng.standard_normal((n, n)))
    v, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return u @ np.diag(np.linspace(1.0, spread, n)) @ v.T


def run_expectation_suite(iterates=100, n=8, q=2, seed=20240814) -> list[VerificationCheck]:
    """Exhaustively enumerated one-step expectation against the decrease bound
    on a well-conditioned linear instance."""
    rng = np.random.default_rng(seed)
    A = well_conditioned_matrix(n)
    b = rng.standard_normal(n)
    spec = LinearProblemSpec(A, b)
    checks = []
    for delta in (0.5, 1.0):
        min_margin = math.inf
        for _ in range(iterates):
            x = rng.uniform(-2.0, 2.0, size=n)
            expected, bound = expected_decrease_check(spec, x, q, delta)
            min_margin = min(min_margin, bound - expected)
        checks.append(VerificationCheck(
            "expected-decrease", f"linear(n={n},q={q},delta={delta},iterates={iterates})",
            min_margin, 0.0, min_margin >= 0.0))
    return checks


def mean_optimality_gaps(A, b, q, delta, steps, runs, base_seed) -> tuple[np.ndarray, float]:
    """Monte-Carlo mean of g(x_k) - g(x*) over seeded block-descent runs.

    Returns (gaps[0..steps], measured level-set radius max_k ||x_k - x*||).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[1]
    x_star = np.linalg.lstsq(A, b, rcond=None)[0]
    g_star = 0.5 * float(np.dot(A @ x_star - b, A @ x_star - b))
    gaps = np.zeros(steps + 1)
    radius = 0.0
    for r in range(runs):
        rng = np.random.default_rng(base_seed + r)
        x = np.zeros(n)
        f = A @ x - b
        gaps[0] += 0.5 * float(np.dot(f, f)) - g_star
        radius = max(radius, float(np.linalg.norm(x - x_star)))
        for k in range(1, steps + 1):
            cols = _draw_block(rng, n, q)
            B = A[:, cols]
            p = B.T @ f
            pp = float(np.dot(p, p))
            if pp > 1e-30:
                w = B @ p
                x[cols] -= (delta * pp / float(np.dot(w, w))) * p
                f = A @ x - b
            gaps[k] += 0.5 * float(np.dot(f, f)) - g_star
            radius = max(radius, float(np.linalg.norm(x - x_star)))
    gaps /= runs
    return gaps, radius


def run_bounds_suite(seed=20240815, runs=200, steps=500, n=8, q=2) -> list[VerificationCheck]:
    """Internal consistency of the closed-form rate bounds plus a directional
    trajectory-below-bound check on a strongly convex linear instance."""
    checks = []
    # evaluation identities on symmetric constants
    tau = 16
    symmetric = TheoremConstants(1.0, 1.0, 1.0, tau, 1.0, r0=2.0, gamma=1.0, mu=1.0)
    k = 10
    bounds_k = theorem1_bounds(symmetric, k, 1.0)
    reference = 2.0 * tau * symmetric.r0 ** 2 / (3.0 * k)
    rel = abs(bounds_k.sublinear - reference) / reference
    checks.append(VerificationCheck(
        "sublinear-closed-form", f"symmetric(tau={tau},k={k})", rel, 1e-12, rel <= 1e-12))
    halved = theorem1_bounds(symmetric, 2 * k, 1.0).sublinear
    rel = abs(halved - bounds_k.sublinear / 2.0) / halved
    checks.append(VerificationCheck(
        "sublinear-k-scaling", f"symmetric(tau={tau},k={k})", rel, 1e-12, rel <= 1e-12))
    pl = pl_rate_bound(symmetric, k, 1.0)
    rel = abs(pl - bounds_k.linear) / max(abs(pl), 1e-300)
    checks.append(VerificationCheck(
        "pl-matches-strongly-convex", f"symmetric(tau={tau},k={k})", rel, 0.0, rel == 0.0))

    # measured trajectories stay below the linear-rate bound
    rng = np.random.default_rng(seed)
    A = well_conditioned_matrix(n)
    b = rng.standard_normal(n)
    delta = 1.0
    gaps, radius = mean_optimality_gaps(A, b, q, delta, steps, runs, base_seed=seed + 1)
    constants = TheoremConstants.for_linear(A, q, delta, r0=radius)
    psi0 = float(gaps[0])
    ks = np.arange(1, steps + 1)
    factor = 1.0 - 2.0 * constants.gamma * constants.alpha
    bounds = factor ** ks * psi0
    excess = float((gaps[1:] - bounds).max())
    checks.append(VerificationCheck(
        "trajectory-below-linear-bound",
        f"linear(n={n},q={q},runs={runs},steps={steps})", excess, 0.0, excess <= 0.0))
    checks.append(VerificationCheck(
        "level-set-radius", f"linear(n={n},q={q})", radius, math.inf, True))

    # singular values of every column sub-block stay within the full spectrum
    _, smax = sigma_bounds(A)
    _, blocks = enumerate_blocks(n, q)
    worst = 0.0
    for block in blocks:
        worst = max(worst, float(np.linalg.svd(A[:, block], compute_uv=False)[0]))
    checks.append(VerificationCheck(
        "block-sigma-interlacing", f"linear(n={n},q={q})", worst, smax,
        worst <= smax * (1.0 + 1e-12)))
    return checks
