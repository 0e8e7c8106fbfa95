"""Hot loops with a numba path and a vectorized numpy path.

The numba path is used when numba imports and ``KST_NO_NUMBA`` is unset or
``0``.  Both paths are always importable so tests can compare them.
"""
from __future__ import annotations

import os

import numpy as np

# the bundled TBB is too old here; skip the warning by picking another layer
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("KST_NO_NUMBA", "0").lower() in ("", "0", "false", "no")


def max_threads() -> int:
    """Worker cap from KST_THREADS, else the CPU count."""
    env = os.environ.get("KST_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


if HAVE_NUMBA:
    try:
        numba.set_num_threads(min(max_threads(), numba.config.NUMBA_NUM_THREADS))
    except ValueError:  # pragma: no cover
        pass


# ---------------------------------------------------------------------------
# CSR matvec (complex data, complex or real vector)

def csr_matvec_numpy(indptr, indices, data, x):
    rows = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    out = np.zeros(len(indptr) - 1, dtype=np.result_type(data, x))
    np.add.at(out, rows, data * x[indices])
    return out


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def csr_matvec_numba(indptr, indices, data, x):
        n = indptr.shape[0] - 1
        out = np.zeros(n, dtype=np.complex128)
        for r in prange(n):
            acc = 0j
            for p in range(indptr[r], indptr[r + 1]):
                acc += data[p] * x[indices[p]]
            out[r] = acc
        return out


def csr_matvec(indptr, indices, data, x):
    if USE_NUMBA:
        return csr_matvec_numba(indptr, indices, data.astype(np.complex128, copy=False),
                                x.astype(np.complex128, copy=False))
    return csr_matvec_numpy(indptr, indices, data, x)


# ---------------------------------------------------------------------------
# k nearest neighbours by brute force, chunked

def knn_numpy(X, k, chunk=1024):
    """Squared distances and indices of the k nearest rows (self included)."""
    n = X.shape[0]
    sq = np.einsum("ij,ij->i", X, X)
    dist = np.empty((n, k))
    idx = np.empty((n, k), dtype=np.int64)
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        d2 = sq[s:e, None] + sq[None, :] - 2.0 * (X[s:e] @ X.T)
        np.maximum(d2, 0.0, out=d2)
        d2[np.arange(e - s), np.arange(s, e)] = 0.0
        if k < n:
            part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        else:
            part = np.tile(np.arange(n), (e - s, 1))
        pd = np.take_along_axis(d2, part, axis=1)
        order = np.lexsort((part, pd), axis=1)
        idx[s:e] = np.take_along_axis(part, order, axis=1)
        dist[s:e] = np.take_along_axis(pd, order, axis=1)
    return dist, idx


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def knn_numba(X, k):
        n, d = X.shape
        dist = np.empty((n, k))
        idx = np.empty((n, k), dtype=np.int64)
        for i in prange(n):
            bd = np.full(k, np.inf)
            bi = np.full(k, n, dtype=np.int64)
            for j in range(n):
                acc = 0.0
                if j != i:
                    for c in range(d):
                        t = X[i, c] - X[j, c]
                        acc += t * t
                # bounded insertion; ties go to the lower index
                if acc < bd[k - 1] or (acc == bd[k - 1] and j < bi[k - 1]):
                    m = k - 1
                    while m > 0 and (bd[m - 1] > acc or (bd[m - 1] == acc and bi[m - 1] > j)):
                        bd[m] = bd[m - 1]
                        bi[m] = bi[m - 1]
                        m -= 1
                    bd[m] = acc
                    bi[m] = j
            dist[i] = bd
            idx[i] = bi
        return dist, idx


# above this dimension the BLAS distance expansion beats the direct loop
KNN_NUMBA_MAX_DIM = 16


def knn(X, k):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if USE_NUMBA and X.shape[1] <= KNN_NUMBA_MAX_DIM:
        return knn_numba(X, k)
    return knn_numpy(X, k)


# ---------------------------------------------------------------------------
# Lorenz 96 right-hand side and fixed-step RK4

def l96_rhs_numpy(s, F):
    return (np.roll(s, -1) - np.roll(s, 2)) * np.roll(s, 1) - s + F


def l96_run_numpy(s0, F, h, n_inner, n_out, n_skip):
    s = np.array(s0, dtype=np.float64)
    out = np.empty((n_out, s.size))
    # overflow is reported by the caller's finiteness check
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_skip):
            s = _rk4_l96_numpy(s, F, h)
        for t in range(n_out):
            out[t] = s
            for _ in range(n_inner):
                s = _rk4_l96_numpy(s, F, h)
    return out


def _rk4_l96_numpy(s, F, h):
    k1 = l96_rhs_numpy(s, F)
    k2 = l96_rhs_numpy(s + 0.5 * h * k1, F)
    k3 = l96_rhs_numpy(s + 0.5 * h * k2, F)
    k4 = l96_rhs_numpy(s + h * k3, F)
    return s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


if HAVE_NUMBA:

    @njit(cache=True)
    def _l96_rhs_nb(s, F, out):
        n = s.shape[0]
        for j in range(n):
            out[j] = (s[(j + 1) % n] - s[(j - 2) % n]) * s[(j - 1) % n] - s[j] + F

    @njit(cache=True)
    def l96_run_numba(s0, F, h, n_inner, n_out, n_skip):
        n = s0.shape[0]
        s = s0.copy()
        k1 = np.empty(n)
        k2 = np.empty(n)
        k3 = np.empty(n)
        k4 = np.empty(n)
        tmp = np.empty(n)
        out = np.empty((n_out, n))
        total = n_skip + n_out * n_inner
        t_out = 0
        for step in range(total + 1):
            if step >= n_skip and (step - n_skip) % n_inner == 0 and t_out < n_out:
                out[t_out] = s
                t_out += 1
            if step == total:
                break
            _l96_rhs_nb(s, F, k1)
            for j in range(n):
                tmp[j] = s[j] + 0.5 * h * k1[j]
            _l96_rhs_nb(tmp, F, k2)
            for j in range(n):
                tmp[j] = s[j] + 0.5 * h * k2[j]
            _l96_rhs_nb(tmp, F, k3)
            for j in range(n):
                tmp[j] = s[j] + h * k3[j]
            _l96_rhs_nb(tmp, F, k4)
            for j in range(n):
                s[j] += (h / 6.0) * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j])
        return out


def l96_run(s0, F, h, n_inner, n_out, n_skip):
    """RK4 with step h; skip n_skip steps, then record every n_inner steps."""
    s0 = np.asarray(s0, dtype=np.float64)
    if USE_NUMBA:
        return l96_run_numba(s0, float(F), float(h), int(n_inner), int(n_out), int(n_skip))
    return l96_run_numpy(s0, F, h, n_inner, n_out, n_skip)


# ---------------------------------------------------------------------------
# RK4 for tracer ensembles in a streamfunction flow
#
# flavor 0: moving vortex   zeta = S exp(k(cos(x1 - a) + cos x2))
# flavor 1: switching pair  zeta = S C [cos a g(x1) + sin a g(x1 - pi)] exp(k cos x2)
# velocity v1 = -d2 zeta, v2 = d1 zeta; a = a0 + omega t.

def vortex_velocity_numpy(flavor, a, x1, x2, kappa, C, scale):
    e2 = np.exp(kappa * np.cos(x2))
    if flavor == 0:
        z = scale * np.exp(kappa * np.cos(x1 - a)) * e2
        d1 = -kappa * np.sin(x1 - a) * z
    else:
        g0 = np.exp(kappa * np.cos(x1))
        g1 = np.exp(-kappa * np.cos(x1))
        ca, sa = np.cos(a), np.sin(a)
        z = scale * C * (ca * g0 + sa * g1) * e2
        d1 = scale * C * (-kappa * np.sin(x1)) * (ca * g0 - sa * g1) * e2
    d2 = -kappa * np.sin(x2) * z
    return -d2, d1


def tracer_rk4_numpy(flavor, x1, x2, a0, omega, h, n_steps, kappa, C, scale):
    x1 = np.array(x1, dtype=np.float64)
    x2 = np.array(x2, dtype=np.float64)
    a0 = np.broadcast_to(np.asarray(a0, dtype=np.float64), x1.shape)
    t = 0.0
    for _ in range(n_steps):
        a = a0 + omega * t
        u1, u2 = vortex_velocity_numpy(flavor, a, x1, x2, kappa, C, scale)
        a = a0 + omega * (t + 0.5 * h)
        v1, v2 = vortex_velocity_numpy(flavor, a, x1 + 0.5 * h * u1, x2 + 0.5 * h * u2, kappa, C, scale)
        w1, w2 = vortex_velocity_numpy(flavor, a, x1 + 0.5 * h * v1, x2 + 0.5 * h * v2, kappa, C, scale)
        a = a0 + omega * (t + h)
        y1, y2 = vortex_velocity_numpy(flavor, a, x1 + h * w1, x2 + h * w2, kappa, C, scale)
        x1 = x1 + (h / 6.0) * (u1 + 2 * v1 + 2 * w1 + y1)
        x2 = x2 + (h / 6.0) * (u2 + 2 * v2 + 2 * w2 + y2)
        t += h
    return np.mod(x1, 2 * np.pi), np.mod(x2, 2 * np.pi)


if HAVE_NUMBA:

    @njit(cache=True)
    def _vel_nb(flavor, a, x1, x2, kappa, C, scale):
        e2 = np.exp(kappa * np.cos(x2))
        if flavor == 0:
            z = scale * np.exp(kappa * np.cos(x1 - a)) * e2
            d1 = -kappa * np.sin(x1 - a) * z
        else:
            g0 = np.exp(kappa * np.cos(x1))
            g1 = np.exp(-kappa * np.cos(x1))
            ca = np.cos(a)
            sa = np.sin(a)
            z = scale * C * (ca * g0 + sa * g1) * e2
            d1 = scale * C * (-kappa * np.sin(x1)) * (ca * g0 - sa * g1) * e2
        d2 = -kappa * np.sin(x2) * z
        return -d2, d1

    @njit(parallel=True, cache=True)
    def tracer_rk4_numba(flavor, x1, x2, a0, omega, h, n_steps, kappa, C, scale):
        m = x1.shape[0]
        o1 = np.empty(m)
        o2 = np.empty(m)
        for p in prange(m):
            y = x1[p]
            z = x2[p]
            t = 0.0
            for _ in range(n_steps):
                a = a0[p] + omega * t
                u1, u2 = _vel_nb(flavor, a, y, z, kappa, C, scale)
                a = a0[p] + omega * (t + 0.5 * h)
                v1, v2 = _vel_nb(flavor, a, y + 0.5 * h * u1, z + 0.5 * h * u2, kappa, C, scale)
                w1, w2 = _vel_nb(flavor, a, y + 0.5 * h * v1, z + 0.5 * h * v2, kappa, C, scale)
                a = a0[p] + omega * (t + h)
                q1, q2 = _vel_nb(flavor, a, y + h * w1, z + h * w2, kappa, C, scale)
                y += (h / 6.0) * (u1 + 2 * v1 + 2 * w1 + q1)
                z += (h / 6.0) * (u2 + 2 * v2 + 2 * w2 + q2)
                t += h
            o1[p] = y % (2 * np.pi)
            o2[p] = z % (2 * np.pi)
        return o1, o2


def tracer_rk4(flavor, x1, x2, a0, omega, h, n_steps, kappa, C=1.0, scale=1.0):
    x1 = np.ascontiguousarray(x1, dtype=np.float64)
    x2 = np.ascontiguousarray(x2, dtype=np.float64)
    a0 = np.ascontiguousarray(np.broadcast_to(np.asarray(a0, dtype=np.float64), x1.shape))
    if USE_NUMBA:
        return tracer_rk4_numba(int(flavor), x1, x2, a0, float(omega), float(h), int(n_steps),
                                float(kappa), float(C), float(scale))
    return tracer_rk4_numpy(flavor, x1, x2, a0, omega, h, n_steps, kappa, C, scale)
