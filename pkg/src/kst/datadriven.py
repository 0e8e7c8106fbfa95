"""Galerkin generator on {phi_i^A} x Fourier(T^2) from sampled velocity data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .analytic import GeneratorMatrix
from .core import SparseComplexMatrix, TruncationParams
from .errors import InvalidInputError
from .kernel import MarkovBasis, TripleProducts


@dataclass
class VelocityCoeffs:
    """v1[p, q + Q1, r + Q2] and v2[...] for basis index p and wavenumbers (q, r)."""

    v1: np.ndarray
    v2: np.ndarray

    @property
    def ell_v(self) -> int:
        return self.v1.shape[0]

    @property
    def Q1(self) -> int:
        return (self.v1.shape[1] - 1) // 2

    @property
    def Q2(self) -> int:
        return (self.v1.shape[2] - 1) // 2


def finite_diff_generator(basis: MarkovBasis, tau: float, ell_A: int, extrapolate: bool = False,
                          antisymmetrize: bool = False) -> np.ndarray:
    """U_il = <phi_i, g_l> with g the central difference of phi_l in time.

    Endpoints are zero unless ``extrapolate`` fills them linearly.
    """
    if tau <= 0:
        raise InvalidInputError("tau must be > 0")
    if ell_A > basis.n_eig:
        raise InvalidInputError("ell_A exceeds the number of basis functions")
    f = basis.phi[:, :ell_A]
    N = f.shape[0]
    if N < 3:
        raise InvalidInputError("need N >= 3")
    g = np.zeros_like(f)
    g[1:-1] = (f[2:] - f[:-2]) / (2.0 * tau)
    if extrapolate and N >= 4:
        g[0] = 2 * g[1] - g[2]
        g[-1] = 2 * g[-2] - g[-3]
    U = (f * basis.beta[:, None]).T @ g / N
    if antisymmetrize:
        U = 0.5 * (U - U.T)
    return U


def fd_values(f, tau: float) -> np.ndarray:
    """Central differences of sampled values with zero endpoints."""
    f = np.asarray(f, dtype=float)
    g = np.zeros_like(f)
    g[1:-1] = (f[2:] - f[:-2]) / (2.0 * tau)
    return g


def l96_fourier(snapshots, J: int) -> np.ndarray:
    """s_hat[n, q + J] = (1/(2J+1)) sum_j exp(-2 pi i q j/(2J+1)) s_j(a_n)."""
    S = np.atleast_2d(np.asarray(snapshots, dtype=float))
    if S.shape[1] != 2 * J + 1:
        raise InvalidInputError(f"state dimension {S.shape[1]} != 2J+1 = {2 * J + 1}")
    F = np.fft.fft(S, axis=1) / S.shape[1]
    q = np.arange(-J, J + 1)
    return F[:, q % S.shape[1]]


def velocity_coeffs_l96(snapshots, basis: MarkovBasis, J: int, ell_v: int) -> VelocityCoeffs:
    """Cross-sweep v1 = s_hat_0 and shear v2 = sum_{q != 0} s_hat_q e^{i q x1}."""
    if ell_v > basis.n_eig:
        raise InvalidInputError("ell_v exceeds the number of basis functions")
    sh = l96_fourier(snapshots, J)
    proj = (basis.phi[:, :ell_v] * basis.beta[:, None]).T @ sh / basis.N
    v1 = np.zeros((ell_v, 2 * J + 1, 1), dtype=complex)
    v2 = np.zeros((ell_v, 2 * J + 1, 1), dtype=complex)
    v1[:, J, 0] = proj[:, J]
    v2[:, :, 0] = proj
    v2[:, J, 0] = 0.0
    return VelocityCoeffs(v1=v1, v2=v2)


def streamfunction_fourier(zeta, n_grid: int) -> np.ndarray:
    """Fourier coefficients zeta_hat[n, q, r] (centred) of sampled streamfunctions.

    ``zeta`` is an array (N, n_grid, n_grid) of real samples on the uniform
    T^2 grid.  The result is made exactly conjugate-symmetric.
    """
    z = np.asarray(zeta, dtype=float)
    if z.shape[1:] != (n_grid, n_grid):
        raise InvalidInputError("zeta samples must be (N, n_grid, n_grid)")
    F = np.fft.fftshift(np.fft.fft2(z, axes=(1, 2)) / n_grid ** 2, axes=(1, 2))
    if n_grid % 2 == 0:
        F = F[:, 1:, 1:]
    F = 0.5 * (F + np.conj(F[:, ::-1, ::-1]))
    return F


def velocity_coeffs_streamfunction(zeta_hat, basis: MarkovBasis, ell_v: int) -> VelocityCoeffs:
    """v1 = -d2 zeta, v2 = d1 zeta, so each Fourier mode is divergence-free."""
    zh = np.asarray(zeta_hat)
    Q1 = (zh.shape[1] - 1) // 2
    Q2 = (zh.shape[2] - 1) // 2
    q = np.arange(-Q1, Q1 + 1)[:, None]
    r = np.arange(-Q2, Q2 + 1)[None, :]
    w = (basis.phi[:, :ell_v] * basis.beta[:, None]) / basis.N
    zp = np.tensordot(w, zh, axes=(0, 0))
    return VelocityCoeffs(v1=-1j * r * zp, v2=1j * q * zp)


def assemble_wx_datadriven(c: TripleProducts, v: VelocityCoeffs, t: TruncationParams) -> SparseComplexMatrix:
    """Entry (ijk, lmn) = sum_p i (m v1 + n v2)[p, j-m, k-n] c_ilp."""
    cc = c.c if isinstance(c, TripleProducts) else np.asarray(c)
    lv = v.ell_v
    if lv > cc.shape[2] or t.nA > cc.shape[0]:
        raise InvalidInputError("triple products too small for ell_A / ell_v")
    cil = cc[: t.nA, : t.nA, :lv]
    V1 = np.tensordot(cil, v.v1, axes=(2, 0))
    V2 = np.tensordot(cil, v.v2, axes=(2, 0))
    jj, kk = np.meshgrid(np.arange(-t.ell_X1, t.ell_X1 + 1), np.arange(-t.ell_X2, t.ell_X2 + 1), indexing="ij")
    jj, kk = jj.ravel(), kk.ravel()
    nx = t.nX1 * t.nX2
    ia = np.arange(t.nA)
    rows, cols, vals = [], [], []
    for dq in range(-v.Q1, v.Q1 + 1):
        for dr in range(-v.Q2, v.Q2 + 1):
            b1 = V1[:, :, dq + v.Q1, dr + v.Q2]
            b2 = V2[:, :, dq + v.Q1, dr + v.Q2]
            if not (np.any(b1) or np.any(b2)):
                continue
            m, n = jj - dq, kk - dr
            ok = (np.abs(m) <= t.ell_X1) & (np.abs(n) <= t.ell_X2)
            if not ok.any():
                continue
            rx = (jj[ok] + t.ell_X1) * t.nX2 + kk[ok] + t.ell_X2
            cx = (m[ok] + t.ell_X1) * t.nX2 + n[ok] + t.ell_X2
            val = 1j * (m[ok][None, None, :] * b1[:, :, None] + n[ok][None, None, :] * b2[:, :, None])
            r = ia[:, None, None] * nx + rx[None, None, :]
            cidx = ia[None, :, None] * nx + cx[None, None, :]
            r, cidx = np.broadcast_arrays(r, cidx)
            nzm = val != 0
            rows.append(r[nzm])
            cols.append(cidx[nzm])
            vals.append(val[nzm])
    if not rows:
        return SparseComplexMatrix(sps.csr_matrix((t.ell_total, t.ell_total), dtype=complex))
    return SparseComplexMatrix.from_entries(t.ell_total, t.ell_total, np.concatenate(rows),
                                            np.concatenate(cols), np.concatenate(vals))


def lift_driver(U, t: TruncationParams) -> sps.csr_matrix:
    """U (on A) tensored with the identity on the Fourier factor."""
    U = np.asarray(U)
    return sps.kron(sps.csr_matrix(U[: t.nA, : t.nA]), sps.identity(t.nX1 * t.nX2), format="csr")


def assemble_generator_datadriven(U, WX, eta_A, t: TruncationParams, theta: float,
                                  phi_A=None) -> GeneratorMatrix:
    """L = lift(U) + WX - theta diag(eta_A_i + j^2 + k^2).  Adjoint is L^H."""
    if theta < 0:
        raise InvalidInputError("theta must be >= 0")
    if np.asarray(U).shape[0] < t.nA:
        raise InvalidInputError("U smaller than ell_A")
    Wc = WX.csr if isinstance(WX, SparseComplexMatrix) else sps.csr_matrix(WX)
    if Wc.shape != (t.ell_total, t.ell_total):
        raise InvalidInputError("WX shape does not match the truncation")
    W = SparseComplexMatrix(lift_driver(U, t) + Wc)
    eta = t.laplace_eigs(eta_A)
    meta = {} if phi_A is None else {"phi_A": phi_A}
    return GeneratorMatrix(W=W, theta=float(theta), eta_diag=eta, provenance="datadriven", trunc=t, meta=meta)


@dataclass
class ReconstructionError:
    absolute: np.ndarray
    relative: np.ndarray


def reconstruction_error(s_hat, basis: MarkovBasis, ell_A: int) -> ReconstructionError:
    """beta-weighted RMS of s_hat minus its projection on phi_0..phi_{ell_A-1}.

    Relative errors of zero-RMS modes are NaN (not applicable).
    """
    if ell_A > basis.n_eig:
        raise InvalidInputError("ell_A exceeds the number of basis functions")
    sh = np.asarray(s_hat).reshape(basis.N, -1)
    ph = basis.phi[:, :ell_A]
    b = (ph * basis.beta[:, None]).T @ sh / basis.N
    res = sh - ph @ b
    w = basis.beta[:, None]
    delta = np.sqrt(np.sum(w * np.abs(res) ** 2, axis=0) / basis.N)
    norm = np.sqrt(np.sum(w * np.abs(sh) ** 2, axis=0) / basis.N)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(norm > 0, delta / np.where(norm > 0, norm, 1.0), np.nan)
    return ReconstructionError(absolute=delta, relative=rel)
