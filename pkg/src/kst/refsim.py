"""Reference simulations: L96 driver, tracer ensembles and Monte Carlo densities."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .analytic import VortexParams
from .datadriven import l96_fourier
from .errors import BlowUpError, InvalidInputError
from .kernel import SnapshotSet

TWO_PI = 2.0 * np.pi
TRACER_H_MAX = 0.005
L96_SUBSTEPS = 5


def wrap(x):
    """Map angles to [0, 2 pi)."""
    y = np.mod(x, TWO_PI)
    # mod can return exactly 2 pi for tiny negative inputs
    return np.where(y >= TWO_PI, 0.0, y)


# ---------------------------------------------------------------------------
# Lorenz 96

def l96_rhs(s, F: float) -> np.ndarray:
    """u_j = (s_{j+1} - s_{j-2}) s_{j-1} - s_j + F, cyclic in j."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 1 or s.size < 4:
        raise InvalidInputError("L96 state needs dimension >= 4")
    return _accel.l96_rhs_numpy(s, F)


def integrate_l96(s0, F: float, tau: float, n_samples: int, spinup: float = 5000.0,
                  substeps: int = L96_SUBSTEPS) -> SnapshotSet:
    """Fixed-step RK4 with step tau/substeps; samples every tau after ``spinup``."""
    if tau <= 0:
        raise InvalidInputError("tau must be > 0")
    if substeps < 5:
        raise InvalidInputError("internal step must be <= tau/5")
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    s0 = np.asarray(s0, dtype=float)
    if s0.ndim != 1 or s0.size < 4:
        raise InvalidInputError("L96 state needs dimension >= 4")
    h = tau / substeps
    n_skip = int(round(spinup / h))
    out = _accel.l96_run(s0, F, h, substeps, n_samples, n_skip)
    if not np.all(np.isfinite(out)):
        raise BlowUpError("L96 state became non-finite")
    J = (s0.size - 1) // 2
    return SnapshotSet(data=out, tau=tau, meta={"F": F, "J": J, "spinup": spinup, "h": h})


def rms_mode_amplitudes(snapshots, J: int) -> np.ndarray:
    """RMS over time of |s_hat_q| for q = -J..J (index q + J)."""
    data = snapshots.data if isinstance(snapshots, SnapshotSet) else snapshots
    sh = l96_fourier(data, J)
    return np.sqrt(np.mean(np.abs(sh) ** 2, axis=0))


def dominant_wavenumber(rms, include_mean: bool = False) -> int:
    """Nonnegative wavenumber of largest RMS amplitude.

    By default the spatial mean (q = 0) is excluded, so the answer names the
    dominant travelling wave.
    """
    rms = np.asarray(rms)
    J = (rms.size - 1) // 2
    pos = rms[J:]
    if not include_mean:
        pos = pos.copy()
        pos[0] = -np.inf
    return int(np.argmax(pos))


# ---------------------------------------------------------------------------
# flows and tracers

@dataclass
class FlowSpec:
    """Evaluable velocity field on T^2 driven by a state in A.

    flavor is "moving" / "switching" (``vortex`` params), "l96" (``J``, ``F``
    and an initial driver state) or "uniform" (constant ``velocity``).
    """

    flavor: str
    vortex: VortexParams | None = None
    J: int = 0
    F: float = 0.0
    velocity: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.flavor in ("moving", "switching"):
            if self.vortex is None:
                self.vortex = VortexParams(flavor=self.flavor)
            if self.vortex.flavor != self.flavor:
                raise InvalidInputError("vortex params flavor mismatch")
        elif self.flavor == "l96":
            if self.J < 2:
                raise InvalidInputError("l96 flow needs J >= 2")
        elif self.flavor != "uniform":
            raise InvalidInputError(f"unknown flow flavor {self.flavor!r}")

    def velocity_at(self, a, x1, x2):
        """(v1, v2) at driver state a (phase, or L96 state vector)."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if self.flavor == "uniform":
            return np.full_like(x1, self.velocity[0]), np.full_like(x2, self.velocity[1])
        if self.flavor == "l96":
            sh = l96_fourier(np.asarray(a, dtype=float)[None, :], self.J)[0]
            q = np.arange(-self.J, self.J + 1)
            wave = sh.copy()
            wave[self.J] = 0.0
            v2 = np.real(np.exp(1j * np.multiply.outer(x1, q)) @ wave)
            return np.full_like(x1, sh[self.J].real), v2
        vp = self.vortex
        fl = 0 if self.flavor == "moving" else 1
        return _accel.vortex_velocity_numpy(fl, a, x1, x2, vp.kappa, vp.C, vp.scale)


@dataclass
class EnsembleState:
    positions: np.ndarray
    time: float = 0.0
    driver: np.ndarray | float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.positions.shape[0]


def _rk4_generic(flow: FlowSpec, x1, x2, a0, h, n_steps):
    """Joint RK4 of driver and tracers for the l96 and uniform flavors."""
    s = np.array(a0, dtype=float, copy=True)
    F = flow.F
    for _ in range(n_steps):
        if flow.flavor == "l96":
            k1 = _accel.l96_rhs_numpy(s, F)
            s2 = s + 0.5 * h * k1
            k2 = _accel.l96_rhs_numpy(s2, F)
            s3 = s + 0.5 * h * k2
            k3 = _accel.l96_rhs_numpy(s3, F)
            s4 = s + h * k3
            k4 = _accel.l96_rhs_numpy(s4, F)
        else:
            s2 = s3 = s4 = s
        u1, u2 = flow.velocity_at(s, x1, x2)
        v1, v2 = flow.velocity_at(s2, x1 + 0.5 * h * u1, x2 + 0.5 * h * u2)
        w1, w2 = flow.velocity_at(s3, x1 + 0.5 * h * v1, x2 + 0.5 * h * v2)
        y1, y2 = flow.velocity_at(s4, x1 + h * w1, x2 + h * w2)
        x1 = x1 + (h / 6.0) * (u1 + 2 * v1 + 2 * w1 + y1)
        x2 = x2 + (h / 6.0) * (u2 + 2 * v2 + 2 * w2 + y2)
        if flow.flavor == "l96":
            s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x1, x2, s


def integrate_tracers(flow: FlowSpec, ensemble0: EnsembleState, t_grid, h_max: float = TRACER_H_MAX,
                      wrap_output: bool = True) -> np.ndarray:
    """Positions (len(t_grid), M, 2) by fixed-step RK4 with step <= h_max.

    Each output interval is split evenly, so the step also stays below the
    output spacing.  Vortex drivers advance as a = a0 + omega t per tracer;
    the L96 driver is co-integrated on the same RK4 stages.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise InvalidInputError("t_grid must be a non-empty 1-D array")
    if np.any(np.diff(t_grid) < 0) or t_grid[0] < ensemble0.time:
        raise InvalidInputError("t_grid must be nondecreasing and start at or after the ensemble time")
    x1 = np.array(ensemble0.positions[:, 0], dtype=float)
    x2 = np.array(ensemble0.positions[:, 1], dtype=float)
    out = np.empty((t_grid.size, x1.size, 2))
    t_now = ensemble0.time
    driver = ensemble0.driver
    if flow.flavor in ("moving", "switching"):
        a0 = np.broadcast_to(np.asarray(driver, dtype=float), x1.shape)
    for n, t_next in enumerate(t_grid):
        dt = t_next - t_now
        if dt > 0:
            steps = max(1, math.ceil(dt / h_max - 1e-12))
            h = dt / steps
            if flow.flavor in ("moving", "switching"):
                vp = flow.vortex
                fl = 0 if flow.flavor == "moving" else 1
                a_start = a0 + vp.omega * (t_now - ensemble0.time)
                # the accelerated kernel wraps its output; unwrapped angles are not needed
                x1, x2 = _accel.tracer_rk4(fl, x1, x2, a_start, vp.omega, h, steps, vp.kappa, vp.C, vp.scale)
            else:
                x1, x2, driver = _rk4_generic(flow, x1, x2, driver, h, steps)
            t_now = t_next
        if wrap_output:
            x1, x2 = wrap(x1), wrap(x2)
        out[n, :, 0] = x1
        out[n, :, 1] = x2
    return out


def step_halving_defect(flow: FlowSpec, ensemble0: EnsembleState, T: float, h: float) -> float:
    """Max angular difference between runs with step h and h/2 over [0, T]."""
    p1 = integrate_tracers(flow, ensemble0, [ensemble0.time + T], h_max=h)
    p2 = integrate_tracers(flow, ensemble0, [ensemble0.time + T], h_max=h / 2)
    d = np.angle(np.exp(1j * (p1 - p2)))
    return float(np.max(np.abs(d)))


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; streams are reproducible by seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


def sample_initial_ensemble(kappa_tilde: float, xbar, M: int, seed: int, a_center: float = 0.0,
                            sample_driver: bool = True, driver_weights=None) -> EnsembleState:
    """Tracers from a product of von Mises densities in x1, x2 (and in a).

    With ``driver_weights`` (one weight per training state) the driver is
    instead drawn by index resampling, and ``driver`` holds the indices.
    """
    if M < 1:
        raise InvalidInputError("M must be >= 1")
    if kappa_tilde < 0:
        raise InvalidInputError("kappa_tilde must be >= 0")
    rng = make_rng(seed)
    x1b, x2b = map(float, xbar)
    x1 = wrap(rng.vonmises(x1b, kappa_tilde, size=M))
    x2 = wrap(rng.vonmises(x2b, kappa_tilde, size=M))
    if driver_weights is not None:
        w = np.asarray(driver_weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise InvalidInputError("driver weights must be nonnegative with positive sum")
        driver = rng.choice(w.size, size=M, p=w / w.sum())
    elif sample_driver:
        driver = wrap(rng.vonmises(a_center, kappa_tilde, size=M))
    else:
        driver = np.full(M, float(a_center))
    return EnsembleState(positions=np.column_stack([x1, x2]), time=0.0, driver=driver,
                         meta={"seed": int(seed), "kappa_tilde": kappa_tilde, "xbar": (x1b, x2b)})


@dataclass
class BinnedDensity:
    sigma: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray


def monte_carlo_density(positions, n_bins: int = 65) -> BinnedDensity:
    """Histogram densities against normalized Haar measure (mean bin value 1)."""
    if n_bins < 1:
        raise InvalidInputError("n_bins must be >= 1")
    p = positions.positions if isinstance(positions, EnsembleState) else np.asarray(positions)
    M = p.shape[0]
    i1 = np.minimum((wrap(p[:, 0]) * (n_bins / TWO_PI)).astype(np.int64), n_bins - 1)
    i2 = np.minimum((wrap(p[:, 1]) * (n_bins / TWO_PI)).astype(np.int64), n_bins - 1)
    counts = np.zeros((n_bins, n_bins))
    np.add.at(counts, (i1, i2), 1.0)
    sigma = counts * (n_bins * n_bins / M)
    s1 = np.bincount(i1, minlength=n_bins) * (n_bins / M)
    s2 = np.bincount(i2, minlength=n_bins) * (n_bins / M)
    return BinnedDensity(sigma=sigma, sigma1=s1.astype(float), sigma2=s2.astype(float))
