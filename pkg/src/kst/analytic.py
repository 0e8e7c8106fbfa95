"""Closed-form Galerkin generators for Gaussian-vortex flows on T^3.

The basis is phi_ijk(a, x) = exp(i(i a + j x1 + k x2)) with signed i, j, k.
The streamfunctions are

    moving:     zeta = S exp(kappa (cos(x1 - a) + cos x2))
    switching:  zeta = S C [cos a exp(kappa(cos x1 + cos x2))
                            + sin a exp(kappa(cos(x1 - pi) + cos x2))]

with velocity v1 = -d2 zeta, v2 = d1 zeta and S = 1/I_0(kappa)^2 by default.
Every matrix element follows from the Fourier coefficients of zeta,

    (1/2pi) int exp(-i n t + kappa cos t) dt = I_|n|(kappa),

and <phi_ijk, v.grad phi_lmn> = -(n dq - m dr) zeta_hat(i - l, dq, dr) with
dq = j - m, dr = k - n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SparseComplexMatrix, TruncationParams, MultiIndex
from .errors import InvalidInputError, RangeError

DROP_TOL = 1e-14


# ---------------------------------------------------------------------------
# modified Bessel functions of the first kind

def bessel_i0(kappa: float) -> float:
    """I_0 by its power series (fine for the kappa <= ~700 range we allow)."""
    if kappa < 0:
        raise InvalidInputError("kappa must be >= 0")
    if kappa > 700:
        raise RangeError("kappa beyond ~700 overflows double precision")
    x = 0.25 * kappa * kappa
    term, total, m = 1.0, 1.0, 0
    while True:
        m += 1
        term *= x / (m * m)
        total += term
        if term < 1e-17 * total:
            return total


def bessel_ratios(nmax: int, kappa: float) -> np.ndarray:
    """I_n(kappa)/I_0(kappa) for n = 0..nmax by Miller's backward recurrence.

    I_{n-1} = I_{n+1} + (2n/kappa) I_n is stable downward; the arbitrary
    starting scale cancels when dividing by the computed I_0.
    """
    if kappa < 0:
        raise InvalidInputError("kappa must be >= 0")
    if kappa > 700:
        raise RangeError("kappa beyond ~700 overflows double precision")
    out = np.zeros(nmax + 1)
    out[0] = 1.0
    if kappa == 0.0 or nmax == 0:
        return out
    start = nmax + 30 + int(2 * kappa) + int(math.sqrt(40 * (nmax + 1)))
    ip1, i_n = 0.0, 1e-300
    vals = np.zeros(start + 1)
    vals[start] = i_n
    for n in range(start, 0, -1):
        im1 = ip1 + (2.0 * n / kappa) * i_n
        ip1, i_n = i_n, im1
        vals[n - 1] = i_n
        if i_n > 1e250:  # rescale to stay finite
            vals[n - 1:] *= 1e-250
            ip1 *= 1e-250
            i_n *= 1e-250
    return vals[: nmax + 1] / vals[0]


def bessel_ratio(n: int, kappa: float) -> float:
    """I_|n|(kappa) / I_0(kappa)."""
    return float(bessel_ratios(abs(int(n)), kappa)[abs(int(n))])


def bessel_in(nmax: int, kappa: float) -> np.ndarray:
    """I_n(kappa) for n = 0..nmax."""
    return bessel_ratios(nmax, kappa) * bessel_i0(kappa)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VortexParams:
    omega: float = 1.0
    kappa: float = 0.5
    C: float = 1.0
    flavor: str = "moving"
    zeta_scale: float | None = None

    def __post_init__(self):
        if self.kappa <= 0:
            raise InvalidInputError("kappa must be > 0")
        if self.flavor not in ("moving", "switching"):
            raise InvalidInputError(f"unknown flavor {self.flavor!r}")
        if self.flavor == "switching" and self.C <= 0:
            raise InvalidInputError("C must be > 0 for the switching flow")

    @property
    def scale(self) -> float:
        """Prefactor S of the streamfunction."""
        if self.zeta_scale is not None:
            return float(self.zeta_scale)
        return 1.0 / bessel_i0(self.kappa) ** 2


@dataclass
class GeneratorMatrix:
    """L = W - theta diag(eta) with W the (skew-Hermitian) advection part."""

    W: SparseComplexMatrix
    theta: float
    eta_diag: np.ndarray
    provenance: str
    trunc: TruncationParams | None = None
    meta: dict = field(default_factory=dict)

    @property
    def L(self) -> SparseComplexMatrix:
        import scipy.sparse as sps

        return SparseComplexMatrix(self.W.csr - self.theta * sps.diags(self.eta_diag))

    @property
    def L_adj(self) -> SparseComplexMatrix:
        return self.L.H


def _zeta_hat(p, dq, dr, vp: VortexParams, I):
    """Fourier coefficient of zeta at (p, dq, dr); I holds I_n(kappa)."""
    dq = np.asarray(dq)
    dr = np.asarray(dr)
    base = vp.scale * I[np.abs(dq)] * I[np.abs(dr)]
    p = np.asarray(p)
    if vp.flavor == "moving":
        return np.where(p == -dq, base, 0.0).astype(complex)
    sgn = np.where(dq % 2 == 0, 1.0, -1.0)
    plus = 0.5 * vp.C * base * (1.0 - 1j * sgn)
    return np.where(p == 1, plus, np.where(p == -1, np.conj(plus), 0.0))


def _entry(row, col, vp: VortexParams):
    i, j, k = (row.i, row.j, row.k) if isinstance(row, MultiIndex) else row
    l, m, n = (col.i, col.j, col.k) if isinstance(col, MultiIndex) else col
    dq, dr = j - m, k - n
    I = bessel_in(max(abs(dq), abs(dr)), vp.kappa)
    zh = complex(_zeta_hat(i - l, dq, dr, vp, I))
    val = -(n * dq - m * dr) * zh
    if (i, j, k) == (l, m, n):
        val += 1j * vp.omega * l
    return val


def moving_vortex_entry(row, col, p: VortexParams) -> complex:
    """<phi_ijk, w phi_lmn> for the moving vortex (advection plus i omega l)."""
    if p.flavor != "moving":
        raise InvalidInputError("moving_vortex_entry needs flavor='moving'")
    return _entry(row, col, p)


def switching_vortex_entry(row, col, p: VortexParams) -> complex:
    """<phi_ijk, w phi_lmn> for the switching vortex pair."""
    if p.flavor != "switching":
        raise InvalidInputError("switching_vortex_entry needs flavor='switching'")
    return _entry(row, col, p)


def assemble_generator_analytic(p: VortexParams, t: TruncationParams, theta: float,
                                drop_tol: float = DROP_TOL) -> GeneratorMatrix:
    """Sparse W and eta on the Fourier tensor basis; L = W - theta diag(eta)."""
    if theta < 0:
        raise InvalidInputError("theta must be >= 0")
    if not t.fourier_A:
        raise InvalidInputError("analytic generators need a Fourier basis on A (fourier_A=True)")
    i, j, k = t.index_arrays()
    nq, nr = 2 * t.ell_X1, 2 * t.ell_X2
    I = bessel_in(max(nq, nr), p.kappa)
    rows, cols, vals = [], [], []
    ar = np.arange(t.ell_total)
    shifts = (0,) if p.flavor == "moving" else (1, -1)
    for dq in range(-nq, nq + 1):
        for dr in range(-nr, nr + 1):
            amp = abs(p.scale) * I[abs(dq)] * I[abs(dr)] * max(1.0, abs(p.C))
            if amp * (t.ell_X1 + t.ell_X2) * (nq + nr + 1) < drop_tol:
                continue
            m = j - dq
            n = k - dr
            ok_mn = (np.abs(m) <= t.ell_X1) & (np.abs(n) <= t.ell_X2)
            for s in shifts:
                pa = -dq if p.flavor == "moving" else s
                l = i - pa
                ok = ok_mn & (l >= -t.ell_A) & (l <= t.ell_A)
                if not ok.any():
                    continue
                zh = _zeta_hat(pa, dq, dr, p, I)
                v = -(n[ok] * dq - m[ok] * dr) * zh
                keep = np.abs(v) >= drop_tol
                if not keep.any():
                    continue
                r = ar[ok][keep]
                c = ((l[ok][keep] + t.ell_A) * t.nX1 + (m[ok][keep] + t.ell_X1)) * t.nX2 + (n[ok][keep] + t.ell_X2)
                rows.append(r)
                cols.append(c)
                vals.append(v[keep])
    rows.append(ar)
    cols.append(ar)
    vals.append(1j * p.omega * i.astype(float))
    W = SparseComplexMatrix.from_entries(t.ell_total, t.ell_total, np.concatenate(rows),
                                         np.concatenate(cols), np.concatenate(vals))
    eta = t.laplace_eigs()
    return GeneratorMatrix(W=W, theta=float(theta), eta_diag=eta, provenance="analytic", trunc=t,
                           meta={"flavor": p.flavor, "omega": p.omega, "kappa": p.kappa, "C": p.C,
                                 "zeta_scale": p.scale})
