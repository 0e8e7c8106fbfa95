import numpy as np
import pytest
from scipy.stats import chisquare

from kst.analytic import VortexParams
from kst.errors import BlowUpError, InvalidInputError
from kst.refsim import (EnsembleState, FlowSpec, dominant_wavenumber, integrate_l96, integrate_tracers, l96_rhs,
                        monte_carlo_density, rms_mode_amplitudes, sample_initial_ensemble, step_halving_defect,
                        wrap)


def test_l96_fixed_point_and_energy_identity(rng):
    assert np.allclose(l96_rhs(np.full(41, 4.0), 4.0), 0.0)
    s = rng.standard_normal(41)
    # the quadratic term conserves energy: s . (u + s - F) telescopes to zero
    assert abs(s @ (l96_rhs(s, 4.0) + s - 4.0)) < 1e-12
    with pytest.raises(InvalidInputError):
        l96_rhs(np.ones(3), 1.0)


def test_l96_unforced_decay(rng):
    """With F = 0, |s|^2 decays exactly as exp(-2t)."""
    s0 = rng.standard_normal(9)
    snaps = integrate_l96(s0, 0.0, 0.1, 10, spinup=0.0, substeps=10)
    n2 = np.sum(snaps.data ** 2, axis=1)
    t = 0.1 * np.arange(10)  # the first sample is taken at the end of spinup
    assert np.allclose(n2, np.sum(s0 ** 2) * np.exp(-2 * t), rtol=1e-8)


def test_l96_step_halving(rng):
    s0 = 4.0 + rng.standard_normal(41)
    a = integrate_l96(s0, 4.0, 0.01, 100, spinup=0.0, substeps=5).data
    b = integrate_l96(s0, 4.0, 0.01, 100, spinup=0.0, substeps=10).data
    assert np.max(np.abs(a - b)) <= 1e-7


def test_l96_blow_up():
    with pytest.raises(BlowUpError):
        integrate_l96(np.array([1e3, -1e3, 2e3, 0.0, 5.0]), 1e3, 1.0, 50, spinup=0.0)


def test_uniform_and_zero_flow():
    e0 = EnsembleState(np.array([[0.1, 0.2], [6.0, 3.0]]))
    p = integrate_tracers(FlowSpec("uniform", velocity=(0.3, -0.7)), e0, [0.0, 1.0, 2.5])
    ref = wrap(e0.positions[None] + np.array([0.0, 1.0, 2.5])[:, None, None] * np.array([0.3, -0.7]))
    assert np.max(np.abs(np.angle(np.exp(1j * (p - ref))))) < 1e-12
    p0 = integrate_tracers(FlowSpec("uniform"), e0, [3.0])
    assert np.array_equal(p0[0], e0.positions)


@pytest.mark.parametrize("flavor", ["moving", "switching"])
def test_vortex_step_halving(flavor):
    e0 = sample_initial_ensemble(4.0, (np.pi, np.pi / 4), 200, seed=3)
    d = step_halving_defect(FlowSpec(flavor), e0, 1.0, 0.005)
    assert d <= 1e-8


def test_vortex_incompressible():
    n = 257
    g = 2 * np.pi * np.arange(n) / n
    X1, X2 = np.meshgrid(g, g, indexing="ij")
    k = np.fft.fftfreq(n, 1.0 / n)
    for flavor in ("moving", "switching"):
        v1, v2 = FlowSpec(flavor).velocity_at(0.8, X1, X2)
        div = np.fft.ifft(1j * k[:, None] * np.fft.fft(v1, axis=0), axis=0)
        div += np.fft.ifft(1j * k[None, :] * np.fft.fft(v2, axis=1), axis=1)
        assert np.max(np.abs(div)) < 1e-10 * max(1.0, np.max(np.abs(v1)))


def test_l96_flow_velocity():
    J = 3
    s = np.arange(7, dtype=float)
    f = FlowSpec("l96", J=J, F=4.0)
    x1 = np.array([0.0, 1.0])
    v1, v2 = f.velocity_at(s, x1, np.array([0.5, 2.0]))
    assert np.allclose(v1, s.mean())
    sh = np.fft.fft(s) / 7
    q = np.arange(1, 4)
    ref = 2 * np.real(np.exp(1j * np.outer(x1, q)) @ sh[q])
    assert np.allclose(v2, ref)
    e0 = EnsembleState(np.array([[1.0, 1.0]]), driver=4.0 + 0.1 * s)
    p = integrate_tracers(f, e0, [0.5])
    assert np.all(np.isfinite(p))
    with pytest.raises(InvalidInputError):
        FlowSpec("bogus")


def test_sampling_uniform_limit():
    e = sample_initial_ensemble(0.0, (1.0, 2.0), 20000, seed=11)
    counts = np.histogram(e.positions[:, 0], bins=20, range=(0, 2 * np.pi))[0]
    assert chisquare(counts).pvalue > 1e-3


def test_sampling_circular_mean_and_determinism():
    xbar = (np.pi, np.pi / 4)
    e = sample_initial_ensemble(4.0, xbar, 10000, seed=5)
    for d in range(2):
        m = np.angle(np.mean(np.exp(1j * e.positions[:, d])))
        assert abs(np.angle(np.exp(1j * (m - xbar[d])))) < 0.05
    e2 = sample_initial_ensemble(4.0, xbar, 10000, seed=5)
    assert np.array_equal(e.positions, e2.positions) and np.array_equal(e.driver, e2.driver)
    e3 = sample_initial_ensemble(4.0, xbar, 10000, seed=6)
    assert not np.array_equal(e.positions, e3.positions)
    w = sample_initial_ensemble(4.0, xbar, 50, seed=1, driver_weights=[0.0, 1.0, 0.0])
    assert np.all(w.driver == 1)


def test_monte_carlo_density():
    p = np.tile([[1.0, 2.0]], (100, 1))
    d = monte_carlo_density(p, n_bins=13)
    assert d.sigma.max() == 13 * 13 and np.count_nonzero(d.sigma) == 1
    e = sample_initial_ensemble(1.0, (1.0, 2.0), 5000, seed=2)
    d = monte_carlo_density(e, n_bins=13)
    assert d.sigma.mean() == pytest.approx(1.0)
    assert np.allclose(d.sigma.mean(axis=1), d.sigma1)
    assert np.allclose(d.sigma.mean(axis=0), d.sigma2)


def test_dominant_wavenumber():
    J = 20
    j = np.arange(2 * J + 1)
    snaps = np.array([3.0 + np.cos(2 * np.pi * 7 * j / (2 * J + 1) + ph) for ph in np.linspace(0, 6, 50)])
    rms = rms_mode_amplitudes(snaps, J)
    assert dominant_wavenumber(rms) == 7
    assert dominant_wavenumber(rms, include_mean=True) == 0
