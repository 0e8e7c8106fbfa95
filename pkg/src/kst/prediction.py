"""Forecasts of observables (Koopman) and densities (Perron-Frobenius).

Coefficient vectors live on the flattened tensor basis phi^A_i x exp(i(j x1 + k x2)).
Densities are taken with respect to the normalized product measure, so the
coefficient of the constant function is the total probability mass.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .analytic import GeneratorMatrix, bessel_ratios
from .core import MultiIndex, TruncationParams, flatten_index
from .eigs import GevpSystem, phi_coeffs
from .errors import InvalidInputError, UnreachableAnchorError
from .leja import DEFAULT_TOL, StepResult, step_sequence

LOW_CONFIDENCE = 0.1
GRAM_COND_MAX = 1e8


@dataclass
class ObservableCoeffs:
    b: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=complex)
        if not np.all(np.isfinite(self.b)):
            raise InvalidInputError("observable coefficients must be finite")


@dataclass
class DensityField:
    b: np.ndarray
    sigma: np.ndarray | None = None
    sigma1: np.ndarray | None = None
    sigma2: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def mass(self) -> complex:
        return complex(self.meta.get("mass_coeff", self.b[self.meta.get("mass_index", 0)]))


def _fourier_project(samples, t: TruncationParams) -> np.ndarray:
    """Discrete Fourier coefficients (j, k) of grid samples on T^2 (last two axes)."""
    nx1, nx2 = samples.shape[-2:]
    x1 = 2 * np.pi * np.arange(nx1) / nx1
    x2 = 2 * np.pi * np.arange(nx2) / nx2
    e1 = np.exp(-1j * np.outer(np.arange(-t.ell_X1, t.ell_X1 + 1), x1)) / nx1
    e2 = np.exp(-1j * np.outer(np.arange(-t.ell_X2, t.ell_X2 + 1), x2)) / nx2
    return np.einsum("jx,...xy,ky->...jk", e1, samples, e2)


def project_observable(f_spec, t: TruncationParams, basis=None) -> ObservableCoeffs:
    """Expansion coefficients b_k = <phi_k, f>.

    ``f_spec`` is "f1" (exp(i x1)), "f2" (exp(i x2)), a grid array (nx1, nx2)
    for a function of x alone, or (n_a, nx1, nx2) samples over the driver.
    For a Fourier driver basis the n_a samples sit on a uniform phase grid;
    for a kernel basis they are the training samples and ``basis`` is needed.
    """
    b = np.zeros(t.ell_total, dtype=complex)
    if isinstance(f_spec, str):
        if f_spec == "f1":
            b[flatten_index(MultiIndex(0, 1, 0), t)] = 1.0
        elif f_spec == "f2":
            b[flatten_index(MultiIndex(0, 0, 1), t)] = 1.0
        else:
            raise InvalidInputError(f"unknown observable {f_spec!r}")
        return ObservableCoeffs(b, label=f_spec)
    f = np.asarray(f_spec)
    if not np.all(np.isfinite(f)):
        raise InvalidInputError("observable samples must be finite")
    if f.ndim == 2:
        cx = _fourier_project(f, t)
        start = (t.ell_A if t.fourier_A else 0) * t.nX1 * t.nX2
        b[start:start + t.nX1 * t.nX2] = cx.ravel()
        return ObservableCoeffs(b)
    if f.ndim != 3:
        raise InvalidInputError("grid observables must be 2-D (x) or 3-D (a, x)")
    cx = _fourier_project(f, t)
    if t.fourier_A:
        na = f.shape[0]
        a = 2 * np.pi * np.arange(na) / na
        ea = np.exp(-1j * np.outer(np.arange(-t.ell_A, t.ell_A + 1), a)) / na
        cA = np.tensordot(ea, cx, axes=(1, 0))
    else:
        if basis is None:
            raise InvalidInputError("kernel basis needed to project over driver samples")
        if f.shape[0] != basis.N:
            raise InvalidInputError("driver samples must match the training set")
        w = basis.phi[:, : t.nA] * basis.beta[:, None] / basis.N
        cA = np.tensordot(w.T, cx, axes=(1, 0))
    return ObservableCoeffs(cA.ravel())


def _generator(L):
    return L.L if isinstance(L, GeneratorMatrix) else L


def evolve_observable(L, b, tilde_tau: float, n_steps: int, tol: float = DEFAULT_TOL) -> StepResult:
    """b_n = exp(n tilde_tau L) b by repeated Leja steps."""
    bb = b.b if isinstance(b, ObservableCoeffs) else b
    return step_sequence(_generator(L), bb, tilde_tau, n_steps, tol=tol)


def evolve_density(gen: GeneratorMatrix, b_rho, tilde_tau: float, n_steps: int,
                   tol: float = DEFAULT_TOL) -> StepResult:
    """rho_n = exp(n tilde_tau L^H) rho; ``mass`` tracks the constant coefficient."""
    bb = b_rho.b if isinstance(b_rho, DensityField) else b_rho
    mi = mass_index(gen.trunc) if gen.trunc is not None else 0
    return step_sequence(gen.L_adj, bb, tilde_tau, n_steps, tol=tol, mass_index=mi)


def evaluate_field(b, t: TruncationParams, a, x1, x2, phi_A=None) -> np.ndarray:
    """f(a, x) = sum b_ijk phi^A_i(a) exp(i(j x1 + k x2)) at scattered points x."""
    c = np.asarray(b, dtype=complex).reshape(t.nA, t.nX1, t.nX2)
    if t.fourier_A:
        wA = np.exp(1j * np.arange(-t.ell_A, t.ell_A + 1) * float(a))
    else:
        if phi_A is None:
            raise InvalidInputError("kernel basis values phi_A are required")
        wA = np.asarray(phi_A)[int(a), : t.nA]
    cx = np.tensordot(wA, c, axes=(0, 0))
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    e1 = np.exp(1j * np.multiply.outer(x1, np.arange(-t.ell_X1, t.ell_X1 + 1)))
    e2 = np.exp(1j * np.multiply.outer(x2, np.arange(-t.ell_X2, t.ell_X2 + 1)))
    return np.einsum("...j,jk,...k->...", e1, cx, e2)


@dataclass
class PositionEstimate:
    x1: np.ndarray
    x2: np.ndarray
    low_confidence: np.ndarray


def tracer_position_estimate(b1_t, b2_t, t: TruncationParams, a, x1, x2, phi_A=None) -> PositionEstimate:
    """Positions at lead time from the phases of the evolved f1, f2 fields."""
    z1 = evaluate_field(b1_t, t, a, x1, x2, phi_A)
    z2 = evaluate_field(b2_t, t, a, x1, x2, phi_A)
    two_pi = 2 * np.pi
    p1 = np.mod(np.angle(z1), two_pi)
    p2 = np.mod(np.angle(z2), two_pi)
    low = (np.abs(z1) < LOW_CONFIDENCE) | (np.abs(z2) < LOW_CONFIDENCE)
    return PositionEstimate(x1=p1, x2=p2, low_confidence=low)


def marginal_density(b_rho, t: TruncationParams, n_grid: int = 65) -> DensityField:
    """sigma on an n_grid^2 grid plus the two 1-D marginals.

    All three are densities against the normalized Haar measure, so a
    uniform distribution gives sigma = sigma1 = sigma2 = 1.  The imaginary
    residue before taking the real part is stored in ``meta``.
    """
    bb = b_rho.b if isinstance(b_rho, DensityField) else np.asarray(b_rho, dtype=complex)
    c = bb.reshape(t.nA, t.nX1, t.nX2)
    i0 = t.ell_A if t.fourier_A else 0
    c0 = c[i0]
    x = 2 * np.pi * np.arange(n_grid) / n_grid
    e1 = np.exp(1j * np.outer(x, np.arange(-t.ell_X1, t.ell_X1 + 1)))
    e2 = np.exp(1j * np.outer(x, np.arange(-t.ell_X2, t.ell_X2 + 1)))
    sig = e1 @ c0 @ e2.T
    s1 = e1 @ c0[:, t.ell_X2]
    s2 = e2 @ c0[t.ell_X1, :]
    imag = float(max(np.abs(sig.imag).max(), np.abs(s1.imag).max(), np.abs(s2.imag).max()))
    mi = mass_index(t)
    return DensityField(b=bb, sigma=sig.real, sigma1=s1.real, sigma2=s2.real,
                        meta={"imag_residue": imag, "mass_index": mi, "grid": x})


def von_mises_coeffs(kappa: float, center: float, ell: int) -> np.ndarray:
    """<e^{i n x}, e^{kappa cos(x - center)} / I_0(kappa)> for n = -ell..ell."""
    r = bessel_ratios(ell, kappa)
    n = np.arange(-ell, ell + 1)
    return r[np.abs(n)] * np.exp(-1j * n * center)


def gaussian_initial_density(kappa_tilde: float, xbar, t: TruncationParams, a_center: float = 0.0,
                             basis=None, anchor=None) -> DensityField:
    """Product of circular Gaussians rho_A(a) rho_X(x), normalized to unit mass.

    With a Fourier driver basis rho_A is the von Mises density centred at
    ``a_center``.  With a kernel basis rho_A(a_n) = p(anchor, a_n), one
    Markov-kernel row against the training samples.
    """
    if kappa_tilde <= 0:
        raise InvalidInputError("kappa_tilde must be > 0")
    x1b, x2b = map(float, xbar)
    cX = np.multiply.outer(von_mises_coeffs(kappa_tilde, x1b, t.ell_X1),
                           von_mises_coeffs(kappa_tilde, x2b, t.ell_X2))
    if t.fourier_A:
        cA = von_mises_coeffs(kappa_tilde, a_center, t.ell_A)
    else:
        if basis is None or anchor is None:
            raise InvalidInputError("kernel basis and anchor state are required")
        model = basis.norm_aux.get("model")
        if model is None:
            raise InvalidInputError("basis carries no kernel model")
        rho_a = model.markov_row(anchor)
        w = basis.beta * rho_a / basis.N
        cA = basis.phi[:, : t.nA].T @ w
        if not np.isfinite(cA).all() or cA[0] <= 1e-300:
            raise UnreachableAnchorError("anchor density has no mass on the training samples")
        # phi_0 is the constant function, so <1, rho_A> = cA_0 phi_0
        cA = cA / (cA[0] * basis.phi[0, 0])
    b = np.multiply.outer(cA, cX).ravel().astype(complex)
    return DensityField(b=b, meta={"mass_index": mass_index(t), "kappa_tilde": kappa_tilde, "xbar": (x1b, x2b)})


def mass_index(t: TruncationParams) -> int:
    """Flattened position of the constant function phi_0^A x 1."""
    i0 = t.ell_A if t.fourier_A else 0
    return i0 * t.nX1 * t.nX2 + t.ell_X1 * t.nX2 + t.ell_X2


def predict_observable_eig(pairs, sys: GevpSystem, f_coeffs, tt: float):
    """Least-squares expansion of f in the eigenfunctions, then e^{t lambda_k} weighting.

    Returns (phi-basis coefficients at time ``tt``, relative expansion residual).
    """
    pairs = list(pairs)
    Z = np.column_stack([phi_coeffs(p, sys) for p in pairs])
    f = np.asarray(f_coeffs.b if isinstance(f_coeffs, ObservableCoeffs) else f_coeffs, dtype=complex)
    G = Z.conj().T @ Z
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > GRAM_COND_MAX:
        warnings.warn(f"eigenbasis Gram matrix is ill-conditioned (cond={cond:.3g})", RuntimeWarning)
    c, *_ = np.linalg.lstsq(Z, f, rcond=None)
    fn = np.linalg.norm(f)
    res = float(np.linalg.norm(Z @ c - f) / fn) if fn > 0 else 0.0
    lam = np.array([p.lam for p in pairs])
    return Z @ (np.exp(tt * lam) * c), res


def _bin_average_matrix(n_bins: int, ell: int) -> np.ndarray:
    """Exact average of exp(i j x) over each of n_bins uniform bins."""
    w = 2 * np.pi / n_bins
    centres = (np.arange(n_bins) + 0.5) * w
    j = np.arange(-ell, ell + 1)
    return np.exp(1j * np.outer(centres, j)) * np.sinc(j * w / (2 * np.pi))[None, :]


def binned_density(b_rho, t: TruncationParams, n_bins: int = 65) -> DensityField:
    """Bin averages of sigma, sigma1, sigma2 on uniform bins (for histogram comparison)."""
    bb = b_rho.b if isinstance(b_rho, DensityField) else np.asarray(b_rho, dtype=complex)
    c0 = bb.reshape(t.nA, t.nX1, t.nX2)[t.ell_A if t.fourier_A else 0]
    e1 = _bin_average_matrix(n_bins, t.ell_X1)
    e2 = _bin_average_matrix(n_bins, t.ell_X2)
    sig = e1 @ c0 @ e2.T
    s1 = e1 @ c0[:, t.ell_X2]
    s2 = e2 @ c0[t.ell_X1, :]
    imag = float(max(np.abs(sig.imag).max(), np.abs(s1.imag).max(), np.abs(s2.imag).max()))
    return DensityField(b=bb, sigma=sig.real, sigma1=s1.real, sigma2=s2.real,
                        meta={"imag_residue": imag, "mass_index": mass_index(t), "n_bins": n_bins})
