"""Variational eigenproblem A c = lambda B c on the rescaled H^1 basis.

With varphi_0 = phi_0 and varphi_k = phi_k / sqrt(eta_k) the matrices are

    A = D W D - theta E,   E = diag(0, 1, 1, ...),   B = diag(1, 1/eta_k)

where D = diag(1, eta_k^{-1/2}).  B is diagonal, so the problem is solved
in the standard form B^{-1} A c = lambda c.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .core import EigenPair, SparseComplexMatrix, TruncationParams
from .errors import DegenerateMetricError, InvalidInputError, SolverError, UnsupportedStateError

DENSE_MAX = 2000
DEFAULT_N_EIG = 51
RESIDUAL_TOL = 1e-8
# a tiny positive real shift keeps the LU of A - sigma B regular when the
# constant mode sits in the same block (its eigenvalue is exactly 0)
_FALLBACK_SHIFT = 1e-9


@dataclass
class GevpSystem:
    A: SparseComplexMatrix
    B: np.ndarray
    theta: float
    eta: np.ndarray
    scale: np.ndarray
    zero_index: int
    trunc: TruncationParams | None = None
    phi_A: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.B.size


def build_h1_system(W, eta=None, theta: float | None = None, phi_A=None) -> GevpSystem:
    """Rescale (W, eta) to the H^1 basis.  W may be a GeneratorMatrix."""
    trunc = None
    if hasattr(W, "eta_diag"):
        gen = W
        W, eta = gen.W, gen.eta_diag
        theta = gen.theta if theta is None else theta
        trunc = gen.trunc
        if phi_A is None:
            phi_A = gen.meta.get("phi_A")
    if eta is None or theta is None:
        raise InvalidInputError("need eta and theta")
    eta = np.asarray(eta, dtype=float)
    zeros = np.flatnonzero(eta == 0.0)
    if zeros.size != 1:
        raise DegenerateMetricError(f"expected one zero-energy index, found {zeros.size}")
    if np.any(eta < 0):
        raise InvalidInputError("negative Dirichlet energy")
    z = int(zeros[0])
    s = np.ones_like(eta)
    nz = eta > 0
    s[nz] = 1.0 / np.sqrt(eta[nz])
    Wc = W.csr if isinstance(W, SparseComplexMatrix) else sps.csr_matrix(W)
    D = sps.diags(s)
    E = np.where(nz, 1.0, 0.0)
    A = D @ Wc @ D - theta * sps.diags(E)
    B = np.where(nz, s * s, 1.0)
    return GevpSystem(A=SparseComplexMatrix(A), B=B, theta=float(theta), eta=eta, scale=s,
                      zero_index=z, trunc=trunc, phi_A=phi_A)


def unscale_w(sys: GevpSystem) -> np.ndarray:
    """Recover the original W (dense) from the rescaled system."""
    E = np.where(sys.eta > 0, 1.0, 0.0)
    A = sys.A.toarray() + sys.theta * np.diag(E)
    inv = 1.0 / sys.scale
    return inv[:, None] * A * inv[None, :]


def _components(M: sps.csr_matrix):
    pattern = (abs(M) + abs(M).T).tocsr()
    n_comp, labels = connected_components(pattern, directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(n_comp + 1))
    return [order[bounds[c]:bounds[c + 1]] for c in range(n_comp)]


def _sparse_block(C, n_eig, target, sigma):
    size = C.shape[0]
    k = min(n_eig, size - 2)
    if target == "lr":
        return spla.eigs(C, k=k, which="LR", tol=1e-12, maxiter=20 * size)
    for shift in (sigma, sigma + _FALLBACK_SHIFT):
        try:
            return spla.eigs(C.tocsc(), k=k, sigma=shift, which="LM", tol=1e-12)
        except RuntimeError as exc:  # singular factor
            last = exc
    raise SolverError(f"shift-invert failed: {last}")


def _residual(A, B, lam, c):
    Bc = B * c
    return float(np.linalg.norm(A @ c - lam * Bc) / max(np.linalg.norm(Bc), 1e-300))


def solve_gevp(sys: GevpSystem, n_eig: int = DEFAULT_N_EIG, target: str = "sm",
               sigma: float = 0.0, dense_max: int = DENSE_MAX, refine: bool = True) -> list[EigenPair]:
    """Eigenpairs of smallest modulus ("sm") or largest real part ("lr").

    The matrix is split into its decoupled blocks first.  Blocks up to
    ``dense_max`` are solved densely, larger ones by ARPACK (shift-invert
    for "sm").  With ``refine`` each eigenvalue is replaced by the Rayleigh
    quotient c^H A c / c^H B c of its vector.
    """
    if target not in ("sm", "lr"):
        raise InvalidInputError(f"unknown target {target!r}")
    n = sys.n
    if not (1 <= n_eig < n):
        raise InvalidInputError(f"n_eig must lie in [1, {n})")
    A = sys.A.csr
    C = (sps.diags(1.0 / sys.B) @ A).tocsr()
    lams, vecs = [], []
    for idx in _components(C):
        blk = C[idx][:, idx]
        if idx.size <= dense_max or idx.size <= n_eig + 2:
            w, v = sla.eig(blk.toarray())
        else:
            try:
                w, v = _sparse_block(blk, n_eig, target, sigma)
            except spla.ArpackError as exc:
                raise SolverError(f"ARPACK failed on a block of size {idx.size}: {exc}") from exc
        key = np.abs(w) if target == "sm" else -w.real
        keep = np.argsort(key, kind="stable")[:n_eig]
        for q in keep:
            full = np.zeros(n, dtype=complex)
            full[idx] = v[:, q]
            lams.append(w[q])
            vecs.append(full)
    lams = np.array(lams)
    key = np.abs(lams) if target == "sm" else -lams.real
    sel = np.argsort(key, kind="stable")[:n_eig]
    out = []
    for q in sel:
        c = vecs[q]
        lam = complex(lams[q])
        if refine:
            lam = complex(np.vdot(c, A @ c) / np.vdot(c, sys.B * c))
        out.append(EigenPair(lam=lam, coeffs=c, residual=_residual(A, sys.B, lam, c)))
    return out


def order_and_normalize(pairs, sys: GevpSystem) -> list[EigenPair]:
    """Unit L2 norm, Dirichlet energy, phase fix, then sort by energy.

    Ties are broken by |Im lambda| and then by input position.
    """
    nz = sys.eta > 0
    fixed = []
    for p in pairs:
        c = np.asarray(p.coeffs, dtype=complex)
        l2 = float(np.real(np.vdot(c, sys.B * c)))
        if not np.isfinite(l2) or l2 <= 0:
            raise InvalidInputError("zero or invalid eigenvector")
        c = c / np.sqrt(l2)
        j = int(np.argmax(np.abs(c)))
        c = c * (np.abs(c[j]) / c[j])
        E = float(np.sum(np.abs(c[nz]) ** 2))
        l2n = float(np.real(np.vdot(c, sys.B * c)))
        fixed.append(EigenPair(lam=p.lam, coeffs=c, energy=E, l2_norm=l2n, residual=p.residual))
    E = np.array([f.energy for f in fixed])
    if np.any(np.isnan(E)):
        raise InvalidInputError("NaN energy")
    order = np.lexsort((np.arange(len(fixed)), np.abs([f.omega for f in fixed]), E))
    return [fixed[i] for i in order]


def koopman_eigs(gen, n_eig: int = DEFAULT_N_EIG, target: str = "sm", **kw):
    """Convenience: build, solve, normalize and sort."""
    sys = build_h1_system(gen)
    pairs = solve_gevp(sys, n_eig=n_eig, target=target, **kw)
    return sys, order_and_normalize(pairs, sys)


def phi_coeffs(pair: EigenPair, sys: GevpSystem) -> np.ndarray:
    """Coefficients of the eigenfunction in the L2-orthonormal phi basis."""
    return sys.scale * pair.coeffs


def evaluate_pattern(coeffs, t: TruncationParams, a, nx1: int, nx2: int | None = None,
                     phi_A=None) -> np.ndarray:
    """z(a, x) = sum c_ijk phi^A_i(a) exp(i(j x1 + k x2)) on a uniform grid.

    ``coeffs`` are phi-convention coefficients (or an EigenPair together with
    a GevpSystem passed as ``(pair, sys)``).  For a Fourier A-basis ``a`` is
    the phase; for a data-driven basis it is the index of a training sample
    and ``phi_A`` holds the basis values.
    """
    if isinstance(coeffs, tuple):
        pair, sys = coeffs
        coeffs = phi_coeffs(pair, sys)
    nx2 = nx1 if nx2 is None else nx2
    if nx1 < 1 or nx2 < 1:
        raise InvalidInputError("grid sizes must be >= 1")
    c = np.asarray(coeffs, dtype=complex).reshape(t.nA, t.nX1, t.nX2)
    if t.fourier_A:
        ii = np.arange(-t.ell_A, t.ell_A + 1)
        wA = np.exp(1j * ii * float(a))
    else:
        if phi_A is None:
            raise InvalidInputError("data-driven basis needs phi_A")
        if not (isinstance(a, (int, np.integer)) and 0 <= a < phi_A.shape[0]):
            raise UnsupportedStateError("data-driven patterns are only defined at training samples")
        wA = phi_A[int(a), : t.nA]
    cx = np.tensordot(wA, c, axes=(0, 0))
    x1 = 2 * np.pi * np.arange(nx1) / nx1
    x2 = 2 * np.pi * np.arange(nx2) / nx2
    e1 = np.exp(1j * np.outer(np.arange(-t.ell_X1, t.ell_X1 + 1), x1))
    e2 = np.exp(1j * np.outer(np.arange(-t.ell_X2, t.ell_X2 + 1), x2))
    return e1.T @ cx @ e2
