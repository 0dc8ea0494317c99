"""Hessenberg reduction and Francis double-shift QR at arbitrary precision.

The QR routine works on any real number type with the usual operators
(Python floats or gmpy2 MPFR numbers) and only computes eigenvalues, so
each bulge-chasing step updates the active window alone.
"""
from __future__ import annotations

import math

import gmpy2
import numpy as np
from scipy.linalg import lapack

from . import precision as prec


class NonConvergenceError(RuntimeError):
    def __init__(self, unconverged: list[int], iterations: int):
        super().__init__(f"QR did not converge after {iterations} iterations; unconverged indices {unconverged}")
        self.unconverged = unconverged
        self.iterations = iterations


def _sign(a, b):
    return abs(a) if b >= 0 else -abs(a)


def francis_qr(H, p: int = prec.MACHINE_BITS, max_iter: int | None = None) -> list[tuple]:
    """Eigenvalues of a real upper-Hessenberg matrix as (re, im) pairs.

    Deflation when |h[i+1,i]| <= 2^-p (|h[i,i]| + |h[i+1,i+1]|), falling back to
    the matrix norm where both diagonal entries vanish. Exceptional shifts are
    applied after every 10 iterations without deflation.
    """
    n = len(H)
    if n == 0:
        return []
    zero = H[0][0] * 0
    sqrt = gmpy2.sqrt if isinstance(zero, gmpy2.mpfr) else math.sqrt
    eps = prec.eps(p) if isinstance(zero, gmpy2.mpfr) else 2.0**-p
    max_iter = 30 * n if max_iter is None else max_iter
    # 1-based copy
    a = [[zero] * (n + 1) for _ in range(n + 1)]
    for i in range(n):
        row = H[i]
        for j in range(max(i - 1, 0), n):
            a[i + 1][j + 1] = row[j]
    anorm = zero
    for i in range(1, n + 1):
        for j in range(max(i - 1, 1), n + 1):
            anorm += abs(a[i][j])
    wr = [zero] * (n + 1)
    wi = [zero] * (n + 1)
    nn, t, total = n, zero, 0
    while nn >= 1:
        its = 0
        while True:
            l = nn
            while l >= 2:
                s = abs(a[l - 1][l - 1]) + abs(a[l][l])
                if s == 0:
                    s = anorm
                if abs(a[l][l - 1]) <= eps * s:
                    a[l][l - 1] = zero
                    break
                l -= 1
            x = a[nn][nn]
            if l == nn:
                wr[nn], wi[nn] = x + t, zero
                nn -= 1
                break
            y = a[nn - 1][nn - 1]
            w = a[nn][nn - 1] * a[nn - 1][nn]
            if l == nn - 1:
                pp = 0.5 * (y - x)
                q = pp * pp + w
                z = sqrt(abs(q))
                x += t
                if q >= 0:
                    z = pp + _sign(z, pp)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = zero
                else:
                    wr[nn - 1] = wr[nn] = x + pp
                    wi[nn - 1], wi[nn] = -z, z
                nn -= 2
                break
            if total >= max_iter:
                raise NonConvergenceError(list(range(nn)), total)
            if its and its % 10 == 0:
                t += x
                for i in range(1, nn + 1):
                    a[i][i] -= x
                s = abs(a[nn][nn - 1]) + abs(a[nn - 1][nn - 2])
                x = y = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            total += 1
            m = nn - 2
            while m >= l:
                z = a[m][m]
                r = x - z
                s = y - z
                pp = (r * s - w) / a[m + 1][m] + a[m][m + 1]
                q = a[m + 1][m + 1] - z - r - s
                r = a[m + 2][m + 1]
                s = abs(pp) + abs(q) + abs(r)
                if s != 0:
                    pp, q, r = pp / s, q / s, r / s
                if m == l:
                    break
                u = abs(a[m][m - 1]) * (abs(q) + abs(r))
                v = abs(pp) * (abs(a[m - 1][m - 1]) + abs(z) + abs(a[m + 1][m + 1]))
                if u <= eps * v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i][i - 2] = zero
                if i != m + 2:
                    a[i][i - 3] = zero
            for k in range(m, nn):
                if k != m:
                    pp = a[k][k - 1]
                    q = a[k + 1][k - 1]
                    r = a[k + 2][k - 1] if k != nn - 1 else zero
                    x = abs(pp) + abs(q) + abs(r)
                    if x != 0:
                        pp, q, r = pp / x, q / x, r / x
                s = _sign(sqrt(pp * pp + q * q + r * r), pp)
                if s == 0:
                    continue
                if k == m:
                    if l != m:
                        a[k][k - 1] = -a[k][k - 1]
                else:
                    a[k][k - 1] = -s * x
                pp += s
                x, y, z = pp / s, q / s, r / s
                q, r = q / pp, r / pp
                rk, rk1 = a[k], a[k + 1]
                rk2 = a[k + 2] if k != nn - 1 else None
                for j in range(k, nn + 1):
                    pj = rk[j] + q * rk1[j]
                    if rk2 is not None:
                        pj += r * rk2[j]
                        rk2[j] -= pj * z
                    rk1[j] -= pj * y
                    rk[j] -= pj * x
                for i in range(l, min(nn, k + 3) + 1):
                    ai = a[i]
                    pi = x * ai[k] + y * ai[k + 1]
                    if k != nn - 1:
                        pi += z * ai[k + 2]
                        ai[k + 2] -= pi * r
                    ai[k + 1] -= pi * q
                    ai[k] -= pi
    return [(wr[i], wi[i]) for i in range(1, n + 1)]


def hessenberg_reduce(A):
    """Householder reduction to upper-Hessenberg form (similarity), in the arithmetic of A."""
    A = np.array(A, dtype=object if prec.is_object(np.asarray(A)) else float, copy=True)
    n = A.shape[0]
    obj = A.dtype == object
    sqrt = gmpy2.sqrt if obj else math.sqrt
    for k in range(n - 2):
        x = A[k + 1:, k].copy()
        norm_x = sqrt(np.dot(x, x))
        if norm_x == 0:
            continue
        alpha = -norm_x if x[0] >= 0 else norm_x
        v = x
        v[0] = v[0] - alpha
        vv = np.dot(v, v)
        if vv == 0:
            continue
        beta = 2 / vv
        A[k + 1:, k:] -= np.outer(v * beta, v @ A[k + 1:, k:])
        A[:, k + 1:] -= np.outer(A[:, k + 1:] @ v, v * beta)
        A[k + 2:, k] = A[k + 2:, k] * 0
    return A


def lapack_hessenberg_eigenvalues(H) -> np.ndarray:
    """Double-precision Francis QR (LAPACK dgees; balancing by permutation only)."""
    H = np.asarray(H, dtype=np.float64)
    if H.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    out = lapack.dgees(lambda wr, wi: 0, H, compute_v=0)
    wr, wi, info = out[2], out[3], out[-1]
    if info > 0:
        raise NonConvergenceError(list(range(info)), -1)
    return wr + 1j * wi


def hessenberg_eigenvalues(H, p: int = prec.MACHINE_BITS, backend: str = "auto") -> list:
    """All eigenvalues of an upper-Hessenberg H at precision p.

    p = 52 uses LAPACK unless ``backend="python"``; p > 52 runs
    :func:`francis_qr` on MPFR numbers and returns gmpy2 ``mpc`` values.
    """
    if p <= prec.MACHINE_BITS:
        if backend == "python":
            Hf = [[float(x) for x in row] for row in np.asarray(H)]
            return [complex(re, im) for re, im in francis_qr(Hf, p)]
        return list(lapack_hessenberg_eigenvalues(np.asarray(H, dtype=float)))
    with prec.working_precision(p):
        Hh = prec.to_hp(H) if not _all_mpfr(H) else np.asarray(H, dtype=object)
        return [gmpy2.mpc(re, im) for re, im in francis_qr([list(r) for r in Hh], p)]


def _all_mpfr(H) -> bool:
    arr = np.asarray(H, dtype=object)
    return arr.size > 0 and all(isinstance(x, gmpy2.mpfr) for x in arr.flat)


def dense_eigenvalues(A, p: int = prec.MACHINE_BITS) -> list:
    """Eigenvalues of a general dense matrix: Householder reduction then QR, both at precision p."""
    if p <= prec.MACHINE_BITS:
        return hessenberg_eigenvalues(hessenberg_reduce(np.asarray(A, dtype=float)), p)
    with prec.working_precision(p):
        Ah = np.asarray(A, dtype=object) if _all_mpfr(A) else prec.to_hp(A)
        return hessenberg_eigenvalues(hessenberg_reduce(Ah), p)
