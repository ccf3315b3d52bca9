"""Compiled inner loops for the tridiagonal benchmark problems.

A chunk kernel advances a column-block solve by up to ``blocks.shape[0]``
iterations, touching only the residual rows affected by each block.  All
kernels share one contract:

    kernel(xpad, fpad, blocks, delta, tol2, eps_degen, nn, streak,
           stall_limit, norms_out, mark, wpad, p_buf, d_buf)
        -> (consumed, nn, streak, status)

``xpad`` and ``fpad`` hold the iterate and residual with one zero ghost cell
at each end and are updated in place.  ``blocks`` is a (chunk, q) int64 array
of sorted column indices, ``nn`` the current squared residual norm, ``streak``
the running count of consecutive degenerate steps.  ``norms_out`` receives the
residual norm after each consumed iteration.  ``mark``, ``wpad``, ``p_buf``
and ``d_buf`` are scratch buffers that must be zeroed on entry and are left
zeroed.  Status codes: 0 chunk exhausted, 1 converged (verified against a
full recomputation of ``nn``), 2 degenerate stall, 3 non-finite values,
4 zero step normalization with a nonzero block gradient.

The squared norm is maintained incrementally; whenever it crosses ``tol2`` it
is recomputed exactly before convergence is declared, and the driver refreshes
it from the full residual between chunks, so drift cannot accumulate.

When numba is unavailable the kernel handles are ``None`` and the solver falls
back to the pure-numpy loop.
"""

from __future__ import annotations

import math

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

BROYDEN_KERNEL = None
LI_KERNEL = None


if HAVE_NUMBA:

    @njit(cache=True)
    def _broyden_chunk(xpad, fpad, blocks, delta, tol2, eps_degen, nn, streak,
                       stall_limit, norms_out, mark, wpad, p_buf, d_buf):
        count, q = blocks.shape
        n = xpad.shape[0] - 2
        for t in range(count):
            # block gradient p = B^T f via the three-band structure
            pp = 0.0
            for c in range(q):
                j = blocks[t, c]
                pc = 2.0 * fpad[j] + (xpad[j + 1] - 3.0) * fpad[j + 1] + fpad[j + 2]
                p_buf[c] = pc
                pp += pc * pc
            if pp <= eps_degen:
                streak += 1
                norms_out[t] = math.sqrt(nn)
                if streak >= stall_limit:
                    return t + 1, nn, streak, 2
                continue
            streak = 0
            # w = B p scattered over the touched rows (pad indices j .. j+2)
            for c in range(q):
                j = blocks[t, c]
                pc = p_buf[c]
                wpad[j] += 2.0 * pc
                wpad[j + 1] += (xpad[j + 1] - 3.0) * pc
                wpad[j + 2] += pc
            ww = 0.0
            for c in range(q):
                j = blocks[t, c]
                for o in range(3):
                    idx = j + o
                    v = wpad[idx]
                    if v != 0.0:
                        wpad[idx] = 0.0
                        if 1 <= idx <= n:  # ghost rows carry no residual
                            ww += v * v
            if not math.isfinite(ww):
                norms_out[t] = math.sqrt(nn)
                return t + 1, nn, streak, 3
            if ww <= 0.0:
                norms_out[t] = math.sqrt(nn)
                return t + 1, nn, streak, 4
            eta = delta * pp / ww
            if not math.isfinite(eta):
                norms_out[t] = math.sqrt(nn)
                return t + 1, nn, streak, 3
            for c in range(q):
                j = blocks[t, c]
                xpad[j + 1] -= eta * p_buf[c]
            # refresh the touched residual rows exactly once each
            for c in range(q):
                j = blocks[t, c]
                for o in range(3):
                    idx = j + o
                    if 1 <= idx <= n and mark[idx] == 0:
                        mark[idx] = 1
                        xr = xpad[idx]
                        new = (0.5 * xr - 3.0) * xr + xpad[idx - 1] + 2.0 * xpad[idx + 1] - 1.0
                        old = fpad[idx]
                        nn += new * new - old * old
                        fpad[idx] = new
            for c in range(q):
                j = blocks[t, c]
                mark[j] = 0
                mark[j + 1] = 0
                mark[j + 2] = 0
            if nn <= tol2:
                exact = 0.0
                for i in range(1, n + 1):
                    exact += fpad[i] * fpad[i]
                nn = exact
                if nn <= tol2:
                    norms_out[t] = math.sqrt(nn)
                    return t + 1, nn, streak, 1
            norms_out[t] = math.sqrt(nn)
        return count, nn, streak, 0

    @njit(cache=True)
    def _li_chunk(xpad, fpad, blocks, delta, tol2, eps_degen, nn, streak,
                  stall_limit, norms_out, mark, wpad, p_buf, d_buf):
        count, q = blocks.shape
        n = xpad.shape[0] - 2
        for t in range(count):
            pp = 0.0
            for c in range(q):
                j = blocks[t, c]
                xj = xpad[j + 1]
                if j == 0:
                    dj = 4.0
                elif j == n - 1:
                    dj = 24.0 * xj * xj - 8.0 * xpad[j] + 2.0
                else:
                    dj = 24.0 * xj * xj - 8.0 * xpad[j] + 6.0
                pc = (-8.0 * xj) * fpad[j] + dj * fpad[j + 1] + (-8.0 * xpad[j + 2]) * fpad[j + 2]
                p_buf[c] = pc
                d_buf[c] = dj
                pp += pc * pc
            if pp <= eps_degen:
                streak += 1
                norms_out[t] = math.sqrt(nn)
                if streak >= stall_limit:
                    return t + 1, nn, streak, 2
                continue
            streak = 0
            for c in range(q):
                j = blocks[t, c]
                pc = p_buf[c]
                wpad[j] += (-8.0 * xpad[j + 1]) * pc
                wpad[j + 1] += d_buf[c] * pc
                wpad[j + 2] += (-8.0 * xpad[j + 2]) * pc
            ww = 0.0
            for c in range(q):
                j = blocks[t, c]
                for o in range(3):
                    idx = j + o
                    v = wpad[idx]
                    if v != 0.0:
                        wpad[idx] = 0.0
                        if 1 <= idx <= n:
                            ww += v * v
            if not math.isfinite(ww):
                norms_out[t] = math.sqrt(nn)
                return t + 1, nn, streak, 3
            if ww <= 0.0:
                norms_out[t] = math.sqrt(nn)
                return t + 1, nn, streak, 4
            eta = delta * pp / ww
            if not math.isfinite(eta):
                norms_out[t] = math.sqrt(nn)
                return t + 1, nn, streak, 3
            for c in range(q):
                j = blocks[t, c]
                xpad[j + 1] -= eta * p_buf[c]
            for c in range(q):
                j = blocks[t, c]
                for o in range(3):
                    idx = j + o
                    if 1 <= idx <= n and mark[idx] == 0:
                        mark[idx] = 1
                        xr = xpad[idx]
                        if idx == 1:
                            new = 4.0 * (xpad[1] - xpad[2] * xpad[2])
                        elif idx == n:
                            new = 8.0 * xr * (xr * xr - xpad[idx - 1]) - 2.0 * (1.0 - xr)
                        else:
                            xp = xpad[idx + 1]
                            new = (8.0 * xr * (xr * xr - xpad[idx - 1]) - 2.0 * (1.0 - xr)
                                   + 4.0 * (xr - xp * xp))
                        old = fpad[idx]
                        nn += new * new - old * old
                        fpad[idx] = new
            for c in range(q):
                j = blocks[t, c]
                mark[j] = 0
                mark[j + 1] = 0
                mark[j + 2] = 0
            if nn <= tol2:
                exact = 0.0
                for i in range(1, n + 1):
                    exact += fpad[i] * fpad[i]
                nn = exact
                if nn <= tol2:
                    norms_out[t] = math.sqrt(nn)
                    return t + 1, nn, streak, 1
            norms_out[t] = math.sqrt(nn)
        return count, nn, streak, 0

    BROYDEN_KERNEL = _broyden_chunk
    LI_KERNEL = _li_chunk
