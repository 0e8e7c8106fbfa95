import numpy as np
import pytest
from hypothesis import given, strategies as st

from _oracles import circle_samples
from kst.errors import (ConnectivityError, DegenerateBandwidthError, InvalidInputError, InvalidSpectrumError,
                        NoPlateauError, UnreachableAnchorError)
from kst.kernel import (SnapshotSet, build_markov, dirichlet_energies, eig_markov, eps_grid, estimate_density,
                        knn_bandwidth, triple_products, tune_bandwidth)


def test_snapshot_validation():
    with pytest.raises(InvalidInputError):
        SnapshotSet(np.zeros((2, 3)), 0.1)
    with pytest.raises(InvalidInputError):
        SnapshotSet(np.zeros((5, 3)), 0.0)


def test_knn_bandwidth_uniform_line():
    X = np.arange(50.0)[:, None]
    r = knn_bandwidth(SnapshotSet(X, 1.0), 3)
    # interior points: neighbours at distance 1 and 1
    assert np.allclose(r[5:-5], 1.0)
    with pytest.raises(DegenerateBandwidthError):
        knn_bandwidth(SnapshotSet(np.zeros((10, 2)), 1.0), 3)


def test_tune_bandwidth_recovers_dimension():
    rng = np.random.default_rng(0)
    X = rng.random((1500, 2))
    s = SnapshotSet(X, 1.0)
    scan = tune_bandwidth(s, np.ones(1500), k_pairs=1500)
    assert 1.6 < scan.dim_est < 2.4
    with pytest.raises(NoPlateauError):
        tune_bandwidth(s, np.ones(1500), grid=np.array([1e30, 2e30, 4e30]), k_pairs=50)


def test_estimate_density_uniform_circle():
    a, X = circle_samples(2000, tau=2 * np.pi / 2000)
    s = SnapshotSet(X, 1.0)
    rt = knn_bandwidth(s)
    sigma, r = estimate_density(s, rt, 1e-3, 1.0)
    # uniform on a circle: the density estimate is constant
    assert np.ptp(sigma) / sigma.mean() < 1e-6
    assert np.allclose(r, sigma ** -1.0)


def test_disconnected_graph_rejected():
    X = np.concatenate([np.zeros((20, 1)) + np.arange(20)[:, None] * 1e-3, 100 + np.arange(20)[:, None] * 1e-3])
    s = SnapshotSet(X, 1.0)
    with pytest.raises(ConnectivityError):
        build_markov(s, np.ones(40), 1e-4, k_nn_graph=5)


def test_markov_operator_rows_and_symmetry(rng):
    X = rng.normal(size=(300, 3))
    s = SnapshotSet(X, 1.0)
    op = build_markov(s, np.ones(300), 2.0, k_nn_graph=60)
    assert abs(op.P_hat - op.P_hat.T).max() == 0
    P = op.markov_matrix()
    assert np.allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-12)
    Lam, phi, beta = eig_markov(op, 5)
    assert Lam[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(Lam) <= 1e-14)
    G = phi.T @ (phi * beta[:, None]) / 300
    assert np.allclose(G, np.eye(5), atol=1e-10)


@pytest.mark.parametrize("option", [1, 2, 3])
def test_dirichlet_energy_options(option):
    lam = np.array([1.0, 0.9, 0.5, 0.1])
    eta = dirichlet_energies(lam, 0.1, option)
    expect = {1: (1 - lam) / 0.1, 2: -np.log(lam) / 0.1, 3: (1 / lam - 1) / 0.1}[option]
    assert eta[0] == 0.0
    assert np.allclose(eta, expect)


def test_weyl_tail_and_bad_spectrum():
    lam = np.array([1.0, 0.8, 0.4, -0.1, 0.2])
    eta = dirichlet_energies(lam, 1.0, 3, dim=2.0)
    k_star = 2
    assert eta[3] == pytest.approx(eta[k_star] * (3 / k_star))
    assert eta[4] == pytest.approx(eta[k_star] * (4 / k_star))
    with pytest.raises(InvalidSpectrumError):
        dirichlet_energies(np.array([1.5, 0.5]), 1.0)
    with pytest.raises(InvalidInputError):
        dirichlet_energies(lam, 1.0, option=4)


def test_circle_basis_spectrum(circle_basis):
    a, basis, scans = circle_basis
    assert basis.Lambda[0] == pytest.approx(1.0, abs=1e-10)
    assert np.ptp(basis.phi[:, 0]) < 1e-8
    G = basis.phi.T @ (basis.phi * basis.beta[:, None]) / basis.N
    assert np.abs(G - np.eye(basis.n_eig)).max() < 1e-8
    eta = basis.eta
    ratio = (eta[3] + eta[4]) / (eta[1] + eta[2])
    assert 3.6 <= ratio <= 4.4
    # phi_1, phi_2 span cos a, sin a
    c = basis.inner(np.column_stack([np.cos(a), np.sin(a)]))
    assert np.sum(np.abs(c[1:3]) ** 2) / np.sum(np.abs(c) ** 2) > 0.99
    assert 0.8 < scans["kernel"].dim_est < 1.2


def test_triple_products_symmetric(circle_basis):
    _, basis, _ = circle_basis
    c = triple_products(basis, 6).c
    for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0)]:
        assert np.array_equal(c, c.transpose(perm))
    assert np.allclose(c[0], np.eye(6), atol=1e-8)
    with pytest.raises(InvalidInputError):
        triple_products(basis, 99)


def test_markov_row_out_of_sample(circle_basis):
    a, basis, _ = circle_basis
    model = basis.norm_aux["model"]
    p = model.markov_row([np.cos(0.3), np.sin(0.3)])
    assert np.all(p >= 0)
    # mass concentrates near the anchor phase
    near = np.abs(np.angle(np.exp(1j * (a - 0.3)))) < 0.3
    assert p[near].sum() > 0.9 * p.sum()
    with pytest.raises(UnreachableAnchorError):
        model.markov_row([1e5, 1e5])


@given(st.integers(-10, 10), st.integers(-10, 10), st.integers(1, 4))
def test_eps_grid_is_geometric(lo, span, per):
    hi = lo + abs(span) + 1
    g = eps_grid(lo, hi, per)
    assert g[0] == 2.0 ** lo and g[-1] == pytest.approx(2.0 ** hi)
    assert np.allclose(np.diff(np.log2(g)), 1.0 / per)
