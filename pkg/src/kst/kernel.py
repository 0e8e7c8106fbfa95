"""Data-driven basis on the driver space from a variable-bandwidth kernel.

Pipeline: kNN bandwidth r~ -> bandwidth scan on K~ -> density sigma and
r = sigma^(-1/m) -> bandwidth scan on K -> sparsified Markov normalization
-> symmetric eigenproblem -> phi = beta^(-1/2) psi and Dirichlet energies.

All sample averages are (1/N) sums.  The eps^(m/2) kernel prefactor is left
out because every normalized quantity is independent of it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from . import _accel
from .errors import (ConnectivityError, DegenerateBandwidthError, InvalidInputError,
                     InvalidSpectrumError, NoPlateauError, SolverError, UnreachableAnchorError)

K_NN_DENSITY = 8
DENSE_EIG_MAX = 1000
DEFAULT_OPTION = 3
_MAX_SCAN_PAIRS = 4_000_000


@dataclass
class SnapshotSet:
    data: np.ndarray
    tau: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.shape[0] < 3:
            raise InvalidInputError("need at least 3 samples")
        if not self.tau > 0:
            raise InvalidInputError("tau must be > 0")

    @property
    def N(self) -> int:
        return self.data.shape[0]


@dataclass
class BandwidthScan:
    grid: np.ndarray
    S: np.ndarray
    T: np.ndarray
    eps_star: float
    dim_est: float


@dataclass
class MarkovOperator:
    P_hat: sps.csr_matrix
    q: np.ndarray
    d: np.ndarray
    eps: float

    @property
    def d_hat(self) -> np.ndarray:
        return self.d / self.q

    @property
    def beta(self) -> np.ndarray:
        dh = self.d_hat
        return dh / dh.mean()

    def markov_matrix(self) -> sps.csr_matrix:
        """P with unit row sums, similar to P_hat."""
        x = np.sqrt(self.d_hat)
        return (sps.diags(1.0 / x) @ self.P_hat @ sps.diags(x)).tocsr()


@dataclass
class MarkovBasis:
    Lambda: np.ndarray
    phi: np.ndarray
    beta: np.ndarray
    eta: np.ndarray
    eps: float
    norm_aux: dict = field(default_factory=dict)
    option: int = DEFAULT_OPTION

    @property
    def N(self) -> int:
        return self.phi.shape[0]

    @property
    def n_eig(self) -> int:
        return self.phi.shape[1]

    def inner(self, f, g=None) -> np.ndarray:
        """beta-weighted sample inner products <phi_k, f> (or <f, g>)."""
        if g is None:
            return self.phi.T @ (self.beta[:, None] * np.asarray(f).reshape(self.N, -1)) / self.N
        return np.sum(np.conj(f) * g * self.beta) / self.N


@dataclass
class TripleProducts:
    c: np.ndarray


# ---------------------------------------------------------------------------

def knn_bandwidth(s: SnapshotSet, k_nn_density: int = K_NN_DENSITY, knn_cache=None) -> np.ndarray:
    """r~ with r~^2 the mean squared distance to neighbours 2..k (self is 1)."""
    X = s.data if isinstance(s, SnapshotSet) else np.asarray(s, dtype=float)
    N = X.shape[0]
    if not (2 <= k_nn_density <= N):
        raise InvalidInputError(f"k_nn_density must lie in [2, {N}]")
    d2, _ = knn_cache if knn_cache is not None else _accel.knn(X, k_nn_density)
    r2 = d2[:, 1:k_nn_density].mean(axis=1)
    if np.any(r2 <= 0):
        raise DegenerateBandwidthError("duplicate samples exhaust a neighbourhood")
    return np.sqrt(r2)


def _scan_pairs(X, bw, k):
    """Squared distances divided by bw_i bw_j over kNN pairs, self included."""
    d2, idx = _accel.knn(X, k)
    return d2 / (bw[:, None] * bw[idx]), d2, idx


def estimate_density(s: SnapshotSet, r_tilde, eps: float, dim: float, pairs=None):
    """sigma_A from K~ and the bandwidth r = sigma_A^(-1/dim)."""
    if eps <= 0 or dim <= 0:
        raise InvalidInputError("eps and dim must be > 0")
    X = s.data if isinstance(s, SnapshotSet) else np.asarray(s, dtype=float)
    N = X.shape[0]
    r_tilde = np.asarray(r_tilde, dtype=float)
    if pairs is None:
        sc = np.empty((N, N))
        sq = np.einsum("ij,ij->i", X, X)
        for a in range(0, N, 1024):
            b = min(N, a + 1024)
            d2 = np.maximum(sq[a:b, None] + sq[None, :] - 2 * X[a:b] @ X.T, 0.0)
            sc[a:b] = d2 / (r_tilde[a:b, None] * r_tilde[None, :])
        ksum = np.exp(-sc / eps).sum(axis=1)
    else:
        ksum = np.exp(-pairs / eps).sum(axis=1)
    log_sigma = np.log(ksum) - np.log(N) - 0.5 * dim * np.log(np.pi * eps * r_tilde ** 2)
    if not np.all(np.isfinite(log_sigma)):
        raise DegenerateBandwidthError("density estimate overflowed")
    sigma = np.exp(log_sigma)
    r = np.exp(-log_sigma / dim)
    return sigma, r


def eps_grid(p_lo: int = -40, p_hi: int = 40, per_octave: int = 4) -> np.ndarray:
    return 2.0 ** np.linspace(p_lo, p_hi, (p_hi - p_lo) * per_octave + 1)


def tune_bandwidth(s: SnapshotSet, r, grid=None, k_pairs: int | None = None, pairs=None) -> BandwidthScan:
    """Scan S(eps) = sum K / N^2 and pick eps at the maximal log-log slope."""
    X = s.data if isinstance(s, SnapshotSet) else np.asarray(s, dtype=float)
    N = X.shape[0]
    grid = eps_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size < 3:
        raise InvalidInputError("grid needs >= 3 points")
    if pairs is None:
        k = min(N, k_pairs or default_k_graph(N))
        pairs, _, _ = _scan_pairs(X, np.asarray(r, dtype=float), k)
    vals = pairs
    if vals.size > _MAX_SCAN_PAIRS:
        stride = int(np.ceil(vals.size / _MAX_SCAN_PAIRS))
        vals = vals[::stride]
        rows = vals.shape[0]
    else:
        rows = N
    flat = np.sort(vals.ravel())
    S = np.array([np.exp(-flat / e).sum() for e in grid]) / (rows * N)
    logS, loge = np.log(S), np.log(grid)
    T = np.zeros_like(S)
    T[1:-1] = (logS[2:] - logS[:-2]) / (loge[2:] - loge[:-2])
    T[0] = (logS[1] - logS[0]) / (loge[1] - loge[0])
    T[-1] = (logS[-1] - logS[-2]) / (loge[-1] - loge[-2])
    j = int(np.argmax(T))
    if not T[j] > 1e-6:
        raise NoPlateauError("kernel sum is flat over the whole bandwidth grid")
    return BandwidthScan(grid=grid, S=S, T=T, eps_star=float(grid[j]), dim_est=float(2 * T[j]))


def default_k_graph(N: int) -> int:
    return int(min(N, max(500, N // 10)))


def build_markov(s: SnapshotSet, r, eps: float, k_nn_graph: int | None = None, knn_cache=None) -> MarkovOperator:
    """Sparse symmetric P_hat = K / sqrt(d~_i d~_j) / N with d~ = q d."""
    if eps <= 0:
        raise InvalidInputError("eps must be > 0")
    X = s.data if isinstance(s, SnapshotSet) else np.asarray(s, dtype=float)
    N = X.shape[0]
    k = default_k_graph(N) if k_nn_graph is None else int(k_nn_graph)
    if not (1 <= k <= N):
        raise InvalidInputError(f"k_nn_graph must lie in [1, {N}]")
    r = np.asarray(r, dtype=float)
    d2, idx = knn_cache if knn_cache is not None else _accel.knn(X, k)
    d2, idx = d2[:, :k], idx[:, :k]
    vals = np.exp(-d2 / (eps * r[:, None] * r[idx]))
    rows = np.repeat(np.arange(N), k)
    K = sps.csr_matrix((vals.ravel(), (rows, idx.ravel())), shape=(N, N))
    K = K.maximum(K.T).tocsr()
    n_comp, _ = connected_components(K, directed=False)
    if n_comp > 1:
        raise ConnectivityError(f"kNN kernel graph has {n_comp} components")
    q = np.asarray(K.sum(axis=1)).ravel() / N
    Kq = K @ sps.diags(1.0 / q)
    d = np.asarray(Kq.sum(axis=1)).ravel() / N
    dt = q * d
    inv = 1.0 / np.sqrt(dt)
    P_hat = (sps.diags(inv) @ K @ sps.diags(inv)).tocsr() / N
    P_hat = ((P_hat + P_hat.T) * 0.5).tocsr()
    return MarkovOperator(P_hat=P_hat, q=q, d=d, eps=float(eps))


def _fix_signs(phi):
    j = np.argmax(np.abs(phi), axis=0)
    sgn = np.sign(phi[j, np.arange(phi.shape[1])])
    sgn[sgn == 0] = 1.0
    return phi * sgn


def eig_markov(op: MarkovOperator, n_eig: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Leading eigenpairs of P_hat converted to (Lambda, phi, beta)."""
    P = op.P_hat
    N = P.shape[0]
    if not (1 <= n_eig <= N):
        raise InvalidInputError(f"n_eig must lie in [1, {N}]")
    if N < DENSE_EIG_MAX or n_eig >= N - 1:
        w, v = sla.eigh(P.toarray())
        order = np.argsort(-w, kind="stable")[:n_eig]
    else:
        try:
            w, v = spla.eigsh(P, k=n_eig, which="LA", tol=0.0, maxiter=50 * N)
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"Lanczos did not converge: {len(exc.eigenvalues)} of {n_eig} pairs") from exc
        order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    beta = op.beta
    psi = v * np.sqrt(N)
    phi = _fix_signs(psi / np.sqrt(beta)[:, None])
    return w, phi, beta


def dirichlet_energies(Lambda, eps: float, option: int = DEFAULT_OPTION, dim: float = 1.0,
                       tol: float = 1e-8) -> np.ndarray:
    """eta_k from Markov eigenvalues; Weyl-law tail past the last positive one."""
    if option not in (1, 2, 3):
        raise InvalidInputError("option must be 1, 2 or 3")
    if eps <= 0:
        raise InvalidInputError("eps must be > 0")
    lam = np.asarray(Lambda, dtype=float).copy()
    if np.any(lam > 1 + tol):
        raise InvalidSpectrumError(f"Markov eigenvalue {lam.max():.3g} exceeds 1")
    lam = np.minimum(lam, 1.0)
    eta = np.empty_like(lam)
    if option == 1:
        eta = (1.0 - lam) / eps
    else:
        pos = lam > 0
        with np.errstate(divide="ignore"):
            if option == 2:
                eta[pos] = -np.log(lam[pos]) / eps
            else:
                eta[pos] = (1.0 / lam[pos] - 1.0) / eps
        if not np.all(pos):
            first_bad = int(np.argmin(pos))
            k_star = first_bad - 1
            if k_star < 1:
                raise InvalidSpectrumError("no positive nontrivial Markov eigenvalue for the Weyl tail")
            k = np.arange(lam.size)
            tail = k > k_star
            eta[tail] = eta[k_star] * (k[tail] / k_star) ** (2.0 / dim)
    if eta.size:
        eta[0] = 0.0
    return eta


def triple_products(basis: MarkovBasis, ell_A: int) -> TripleProducts:
    """c_ijk = (1/N) sum_n phi_i phi_j phi_k beta, exactly symmetric."""
    if ell_A > basis.n_eig:
        raise InvalidInputError("ell_A exceeds the number of basis functions")
    ph = basis.phi[:, :ell_A]
    wph = ph * basis.beta[:, None]
    c = np.einsum("ni,nj,nk->ijk", wph, ph, ph, optimize=True) / basis.N
    ii = np.sort(np.indices(c.shape).reshape(3, -1), axis=0)
    c = c[ii[0], ii[1], ii[2]].reshape(c.shape)
    return TripleProducts(c=c)


# ---------------------------------------------------------------------------

@dataclass
class KernelModel:
    """Everything needed to evaluate the kernel against training samples."""

    X: np.ndarray
    r_tilde: np.ndarray
    eps_tilde: float
    dim_tilde: float
    r: np.ndarray
    eps: float
    dim: float
    q: np.ndarray
    k_nn_density: int

    def markov_row(self, a) -> np.ndarray:
        """p(a, a_n) for an arbitrary state a, with its own bandwidth."""
        a = np.asarray(a, dtype=float).ravel()
        d2 = np.sum((self.X - a) ** 2, axis=1)
        nn = np.sort(d2)[: self.k_nn_density]
        rt2 = nn[1:].mean() if nn.size > 1 else nn.mean()
        if rt2 <= 0:
            raise DegenerateBandwidthError("anchor neighbourhood is degenerate")
        rt = np.sqrt(rt2)
        N = self.X.shape[0]
        ks = np.exp(-d2 / (self.eps_tilde * rt * self.r_tilde)).sum()
        if not ks > 1e-300:
            raise UnreachableAnchorError("anchor state lies outside the kernel's reach")
        log_sigma = np.log(ks) - np.log(N) - 0.5 * self.dim_tilde * np.log(np.pi * self.eps_tilde * rt2)
        ra = np.exp(-log_sigma / self.dim_tilde)
        k = np.exp(-d2 / (self.eps * ra * self.r))
        if not np.any(k > 1e-300):
            raise UnreachableAnchorError("anchor state lies outside the kernel's reach")
        da = np.mean(k / self.q)
        return k / (da * self.q)


def compute_basis(s: SnapshotSet, n_eig: int, option: int = DEFAULT_OPTION,
                  k_nn_density: int = K_NN_DENSITY, k_nn_graph: int | None = None,
                  eps: float | None = None, grid=None) -> tuple[MarkovBasis, dict]:
    """Full kernel pipeline.  Returns the basis and the two bandwidth scans."""
    X = s.data
    N = X.shape[0]
    kg = default_k_graph(N) if k_nn_graph is None else int(k_nn_graph)
    kmax = max(kg, k_nn_density)
    d2, idx = _accel.knn(X, kmax)
    r_tilde = knn_bandwidth(s, k_nn_density, knn_cache=(d2, idx))
    pairs = d2 / (r_tilde[:, None] * r_tilde[idx])
    scan0 = tune_bandwidth(s, r_tilde, grid=grid, pairs=pairs)
    _, r = estimate_density(s, r_tilde, scan0.eps_star, scan0.dim_est, pairs=pairs)
    pairs = d2 / (r[:, None] * r[idx])
    scan1 = tune_bandwidth(s, r, grid=grid, pairs=pairs)
    e = scan1.eps_star if eps is None else float(eps)
    op = build_markov(s, r, e, kg, knn_cache=(d2, idx))
    Lam, phi, beta = eig_markov(op, n_eig)
    eta = dirichlet_energies(Lam, e, option, dim=scan1.dim_est)
    model = KernelModel(X=X, r_tilde=r_tilde, eps_tilde=scan0.eps_star, dim_tilde=scan0.dim_est,
                        r=r, eps=e, dim=scan1.dim_est, q=op.q, k_nn_density=k_nn_density)
    basis = MarkovBasis(Lambda=Lam, phi=phi, beta=beta, eta=eta, eps=e, option=option,
                        norm_aux={"q": op.q, "d": op.d, "model": model})
    return basis, {"density": scan0, "kernel": scan1}
