"""Action of exp(tL) on a vector by Newton interpolation at Leja points.

The spectrum of L is enclosed in a Gershgorin box [beta_lo, alpha] x i[-gamma, gamma].
The exponential is interpolated on the longer of the two box mid-lines
(vertical for the nearly skew-Hermitian generators used here), at Leja
points of that segment.  Long times are split into s substeps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
import scipy.sparse as sps

from .core import SparseComplexMatrix
from .errors import AccuracyError, InvalidInputError

N_GRID = 10_000
D_MAX = 150
DEFAULT_TOL = 1e-7
_MAX_DOUBLINGS = 12


@dataclass(frozen=True)
class SpectralBox:
    alpha: float
    beta_lo: float
    gamma: float

    @property
    def center(self) -> float:
        return 0.5 * (self.alpha + self.beta_lo)

    @property
    def half_real(self) -> float:
        return 0.5 * (self.alpha - self.beta_lo)

    @property
    def vertical(self) -> bool:
        """Interpolate on the imaginary mid-line when it is the longer one."""
        return self.gamma >= self.half_real

    @property
    def half_length(self) -> float:
        return max(self.gamma, self.half_real)

    @property
    def diameter(self) -> float:
        return 2.0 * self.half_length


@dataclass
class LejaPlan:
    nodes: np.ndarray
    divdiff: np.ndarray
    d_max: int = D_MAX
    tol: float = DEFAULT_TOL


def _as_csr(L) -> sps.csr_matrix:
    if hasattr(L, "L") and hasattr(L, "W"):
        L = L.L
    if isinstance(L, SparseComplexMatrix):
        return L.csr
    if sps.issparse(L):
        return sps.csr_matrix(L)
    return sps.csr_matrix(np.asarray(L))


def gershgorin_box(L) -> SpectralBox:
    """Box holding the Gershgorin intervals of the Hermitian and skew parts."""
    M = _as_csr(L).astype(np.complex128)
    if M.shape[0] != M.shape[1]:
        raise InvalidInputError("gershgorin_box needs a square matrix")
    if M.shape[0] == 0:
        return SpectralBox(0.0, 0.0, 0.0)
    MH = M.conj().T.tocsr()
    S = ((M + MH) * 0.5).tocsr()
    K = ((M - MH) * 0.5).tocsr()
    c = S.diagonal().real
    absS = abs(S)
    radius = np.asarray(absS.sum(axis=1)).ravel() - np.abs(c)
    radius = np.maximum(radius, 0.0)
    alpha = float(np.max(c + radius))
    beta_lo = float(np.min(c - radius))
    gamma = float(np.max(np.asarray(abs(K).sum(axis=1)).ravel()))
    return SpectralBox(alpha, beta_lo, gamma)


@lru_cache(maxsize=8)
def _unit_leja(d: int, n_grid: int = N_GRID) -> tuple:
    """Leja sequence on [-1, 1] starting at 0, greedy over a uniform grid."""
    x = np.linspace(-1.0, 1.0, n_grid)
    xi = [0.0]
    with np.errstate(divide="ignore"):
        logp = np.log(np.abs(x))
        for _ in range(d):
            j = int(np.argmax(logp))
            xi.append(float(x[j]))
            logp = logp + np.log(np.abs(x - x[j]))
    return tuple(xi)


def leja_nodes(box: SpectralBox, d: int) -> np.ndarray:
    """d+1 Leja nodes on the box's interpolation segment."""
    if d < 0:
        raise InvalidInputError("d must be >= 0")
    xi = np.array(_unit_leja(int(d)))
    direction = 1j if box.vertical else 1.0
    return box.center + direction * box.half_length * xi


def divided_differences(nodes, rho: float = 1.0) -> np.ndarray:
    """Newton coefficients of exp(rho z) at the given nodes.

    The triangular recursion loses many digits on clustered nodes, so it runs
    in extended precision.  Repeated nodes use the confluent limit.
    """
    z = np.asarray(nodes, dtype=complex).ravel()
    d = z.size - 1
    dps = 40 + 3 * max(d, 1)
    with mpmath.workdps(dps):
        zm = [mpmath.mpc(v.real, v.imag) for v in z]
        r = mpmath.mpf(rho)
        f = [mpmath.exp(r * v) for v in zm]
        out = [f[0]]
        for j in range(1, d + 1):
            for i in range(d, j - 1, -1):
                den = zm[i] - zm[i - j]
                if den == 0:
                    # confluent nodes: the j-th derivative over j!
                    f[i] = r ** j * mpmath.exp(r * zm[i]) / mpmath.factorial(j)
                else:
                    f[i] = (f[i] - f[i - 1]) / den
            out.append(f[j])
        return np.array([complex(v) for v in out])


@lru_cache(maxsize=64)
def _unit_divdiff(rho: float, vertical: bool, d: int) -> np.ndarray:
    xi = np.array(_unit_leja(d))
    w = 1j * xi if vertical else xi.astype(complex)
    return divided_differences(w, rho)


def newton_eval(nodes, divdiff, z) -> np.ndarray:
    """Evaluate the Newton form sum_j r_j prod_{i<j}(z - zeta_i) at scalar points."""
    z = np.asarray(z, dtype=complex)
    acc = np.zeros_like(z)
    w = np.ones_like(z)
    for j, c in enumerate(divdiff):
        acc = acc + c * w
        w = w * (z - nodes[j])
    return acc


class LejaPropagator:
    """Reusable exp(h L) applier for a fixed step h.

    The matrix is centred and scaled, X = (L - c I) / R, so that the
    interpolation segment becomes the unit segment (real or imaginary).
    """

    def __init__(self, L, h: float, tol: float = DEFAULT_TOL, d_max: int = D_MAX, box=None):
        if h < 0:
            raise InvalidInputError("t must be >= 0")
        if tol <= 0:
            raise InvalidInputError("tol must be > 0")
        self.M = _as_csr(L).astype(np.complex128)
        self.h = float(h)
        self.tol = float(tol)
        self.d_max = int(d_max)
        self.box = gershgorin_box(self.M) if box is None else box
        R = self.box.half_length
        self._trivial = R == 0.0 or self.h == 0.0
        if not self._trivial:
            # on a real segment exp grows like exp(rho), so keep rho small there
            width = 50.0 if self.box.vertical else 10.0
            self.s = max(1, math.ceil(self.h * self.box.diameter / width))
            self._setup()

    def _setup(self):
        R = self.box.half_length
        self.sub_h = self.h / self.s
        self.rho = self.sub_h * R
        self._dd = _unit_divdiff(float(self.rho), self.box.vertical, self.d_max)
        self._w = (1j if self.box.vertical else 1.0) * np.array(_unit_leja(self.d_max))
        n = self.M.shape[0]
        self._X = ((self.M - self.box.center * sps.identity(n, format="csr")) / R).tocsr()
        self._shift = math.exp(self.sub_h * self.box.center)
        # substep errors add up, so each one gets a share of the budget
        self._sub_tol = self.tol / self.s
        self.degrees: list[int] = []

    def _substep(self, b):
        """One substep; returns None when the Newton series stagnates."""
        p = self._dd[0] * b
        r = b.copy()
        prev = np.inf
        for j in range(1, self.d_max + 1):
            r = self._X @ r - self._w[j - 1] * r
            term = self._dd[j] * r
            p = p + term
            tn = np.linalg.norm(term)
            pn = np.linalg.norm(p)
            if tn + prev <= self._sub_tol * pn or pn == 0.0:
                self.degrees.append(j)
                return p * self._shift
            prev = tn
        return None

    def apply(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=np.complex128)
        if self._trivial:
            return b.copy() * math.exp(self.h * self.box.center)
        for _ in range(_MAX_DOUBLINGS):
            v = b
            ok = True
            for _ in range(self.s):
                v = self._substep(v)
                if v is None:
                    ok = False
                    break
            if ok:
                return v
            self.s *= 2
            self._setup()
        raise AccuracyError(f"Leja series did not reach tol={self.tol:g} with {self.s} substeps")


def expm_action(L, b, t: float, tol: float = DEFAULT_TOL, d_max: int = D_MAX) -> np.ndarray:
    """exp(tL) b using only products with L."""
    if t < 0:
        raise InvalidInputError("t must be >= 0")
    if t == 0:
        return np.array(b, dtype=np.complex128, copy=True)
    return LejaPropagator(L, t, tol=tol, d_max=d_max).apply(b)


@dataclass
class StepResult:
    states: list
    mass: np.ndarray
    norms: np.ndarray


def step_sequence(L, b0, tilde_tau: float, n_steps: int, renormalize: bool = False,
                  tol: float = DEFAULT_TOL, mass_index: int = 0) -> StepResult:
    """b_{n+1} = exp(tilde_tau L) b_n, optionally rescaled to keep ||b_n||.

    ``mass`` tracks the coefficient at ``mass_index`` (the constant mode).
    """
    if tilde_tau <= 0:
        raise InvalidInputError("tilde_tau must be > 0")
    if n_steps < 0:
        raise InvalidInputError("n_steps must be >= 0")
    b = np.array(b0, dtype=np.complex128, copy=True)
    states = [b]
    prop = LejaPropagator(L, tilde_tau, tol=tol) if n_steps else None
    for _ in range(n_steps):
        nb = prop.apply(states[-1])
        if renormalize:
            n_new = np.linalg.norm(nb)
            if n_new > 0:
                nb = nb * (np.linalg.norm(states[-1]) / n_new)
        states.append(nb)
    mass = np.array([s[mass_index] for s in states]) if b.size else np.zeros(0)
    norms = np.array([np.linalg.norm(s) for s in states])
    return StepResult(states=states, mass=mass, norms=norms)
