import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from _oracles import random_dissipative
from kst.errors import InvalidInputError
from kst.leja import (LejaPropagator, SpectralBox, _unit_leja, divided_differences, expm_action,
                      gershgorin_box, leja_nodes, newton_eval, step_sequence)


def test_unit_leja_properties():
    xi = np.array(_unit_leja(30))
    assert xi[0] == 0.0
    assert abs(abs(xi[1]) - 1.0) < 1e-12
    assert len(set(np.round(xi, 12))) == xi.size
    assert np.all(np.abs(xi) <= 1.0)


def test_leja_greedy_choice():
    xi = np.array(_unit_leja(6))
    grid = np.linspace(-1, 1, 10_000)
    for j in range(1, 7):
        prod = np.prod(np.abs(grid[:, None] - xi[None, :j]), axis=1)
        assert prod.max() == pytest.approx(np.prod(np.abs(xi[j] - xi[:j])), rel=1e-12)


def test_divided_differences_polynomial_exactness():
    # Newton interpolant at d+1 nodes reproduces exp at the nodes
    box = SpectralBox(0.0, -2.0, 5.0)
    z = leja_nodes(box, 40)
    dd = divided_differences(z)
    assert np.allclose(newton_eval(z, dd, z), np.exp(z), rtol=1e-12)
    mid = box.center + 1j * np.linspace(-5, 5, 31)
    assert np.allclose(newton_eval(z, dd, mid), np.exp(mid), rtol=1e-9)


def test_confluent_divided_differences():
    dd = divided_differences(np.array([0.3, 0.3, 0.3]))
    assert dd[1] == pytest.approx(np.exp(0.3))
    assert dd[2] == pytest.approx(np.exp(0.3) / 2)


def test_gershgorin_box_contains_spectrum(rng):
    L = random_dissipative(60, rng, density=0.2)
    box = gershgorin_box(L)
    w = np.linalg.eigvals(L)
    assert np.all(w.real <= box.alpha + 1e-12)
    assert np.all(w.real >= box.beta_lo - 1e-12)
    assert np.all(np.abs(w.imag) <= box.gamma + 1e-12)


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_expm_action_matches_dense(t):
    rng = np.random.default_rng(11)
    L = random_dissipative(120, rng)
    b = rng.normal(size=120) + 1j * rng.normal(size=120)
    ref = sla.expm(t * L) @ b
    got = expm_action(L, b, t)
    assert np.linalg.norm(got - ref) <= 1e-6 * np.linalg.norm(ref)


def test_skew_dominated_vertical_segment():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(80, 80)) + 1j * rng.normal(size=(80, 80))
    L = (A - A.conj().T) * 2 - 0.01 * np.eye(80)
    P = LejaPropagator(L, 2.0)
    assert P.box.vertical
    b = rng.normal(size=80) + 0j
    ref = sla.expm(2.0 * L) @ b
    assert np.linalg.norm(P.apply(b) - ref) <= 1e-6 * np.linalg.norm(ref)


def test_trivial_cases():
    b = np.arange(4.0) + 0j
    assert np.array_equal(expm_action(np.zeros((4, 4)), b, 3.0), b)
    assert np.array_equal(expm_action(np.eye(4), b, 0.0), b)
    assert np.allclose(expm_action(-2 * np.eye(4), b, 0.5), np.exp(-1.0) * b)
    with pytest.raises(InvalidInputError):
        expm_action(np.eye(2), np.ones(2), -1.0)
    with pytest.raises(InvalidInputError):
        LejaPropagator(np.eye(2), 1.0, tol=0.0)


@given(st.integers(0, 2 ** 31 - 1), st.floats(0.05, 3.0))
def test_semigroup_property(seed, t):
    rng = np.random.default_rng(seed)
    L = random_dissipative(40, rng, density=0.2)
    b = rng.normal(size=40) + 1j * rng.normal(size=40)
    one = expm_action(L, b, t)
    two = expm_action(L, expm_action(L, b, t / 2), t / 2)
    assert np.linalg.norm(one - two) <= 1e-6 * max(np.linalg.norm(one), 1e-300)


def test_step_sequence_renormalize_and_mass(rng):
    L = random_dissipative(30, rng, density=0.2)
    b = rng.normal(size=30) + 0j
    res = step_sequence(L, b, 0.1, 5, renormalize=True)
    assert len(res.states) == 6
    assert np.allclose(res.norms, np.linalg.norm(b))
    assert res.mass[0] == b[0]
    plain = step_sequence(L, b, 0.1, 5)
    assert np.allclose(plain.states[-1], sla.expm(0.5 * L) @ b, rtol=1e-6, atol=1e-9)
    with pytest.raises(InvalidInputError):
        step_sequence(L, b, 0.0, 1)
