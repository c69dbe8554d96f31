"""Laplacian spectra closed forms and the Loewner-order similarity checks.

numpy.linalg.eigvalsh serves as the independent oracle for the hand-rolled
Jacobi solver throughout.
"""

import numpy as np
import pytest

from staragcn.spectral import (
    JacobiError,
    check_sigma_approx,
    eigenvalues_sym,
    laplacian_complete,
    laplacian_from_edges,
    quadratic_form,
)
from staragcn.topology import EdgeList, build_star


def star_laplacian(n: int) -> np.ndarray:
    return laplacian_from_edges(build_star(n, 0).edge_list())


def test_laplacian_complete_entries():
    lap = laplacian_complete(3)
    assert np.array_equal(lap, [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])


def test_laplacian_complete_row_sums_and_trace():
    for n in (2, 5, 17):
        lap = laplacian_complete(n)
        assert np.allclose(lap.sum(axis=1), 0.0)
        assert np.trace(lap) == n * (n - 1)


def test_laplacian_complete_rejects_small_n():
    with pytest.raises(ValueError):
        laplacian_complete(1)


def test_laplacian_from_edges_star_degrees():
    lap = star_laplacian(4)
    assert np.array_equal(np.diag(lap), [3, 1, 1, 1])


def test_laplacian_single_edge():
    lap = laplacian_from_edges(EdgeList(2, frozenset({(0, 1)})))
    assert np.array_equal(lap, [[1, -1], [-1, 1]])


def test_laplacian_quadratic_form_oracle():
    rng = np.random.default_rng(4)
    g = EdgeList(6, frozenset({(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)}))
    lap = laplacian_from_edges(g)
    for _ in range(10):
        x = rng.standard_normal(6)
        direct = sum((x[u] - x[v]) ** 2 for u, v in g.edges)
        assert abs(quadratic_form(lap, x) - direct) < 1e-12


def test_eigenvalues_diagonal_matrix():
    out = eigenvalues_sym(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(out, [1.0, 2.0, 3.0], atol=1e-12)


def test_eigenvalues_complete_graph_closed_form():
    out = eigenvalues_sym(laplacian_complete(4))
    assert np.allclose(out, [0.0, 4.0, 4.0, 4.0], atol=1e-8)


def test_eigenvalues_star_closed_form():
    out = eigenvalues_sym(star_laplacian(5))
    assert np.allclose(out, [0.0, 1.0, 1.0, 1.0, 5.0], atol=1e-8)


def test_eigenvalues_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        eigenvalues_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_eigenvalues_nonconvergence_carries_residual():
    bad = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(JacobiError) as exc:
        eigenvalues_sym(bad, max_sweeps=0)
    assert exc.value.residual > 0.0


@pytest.mark.parametrize("n", [3, 5, 8, 13, 21, 40, 64])
def test_jacobi_matches_numpy_on_random_symmetric(n):
    rng = np.random.default_rng(n)
    a = rng.standard_normal((n, n))
    sym = (a + a.T) / 2.0
    ours = eigenvalues_sym(sym)
    oracle = np.linalg.eigvalsh(sym)
    assert np.max(np.abs(ours - oracle)) < 1e-8


def test_leaf_difference_is_unit_eigenvector():
    # For two leaves a, b of the star, delta_a - delta_b has eigenvalue 1.
    for n in (4, 9, 30):
        lap = star_laplacian(n)
        psi = np.zeros(n)
        psi[1], psi[2] = 1.0, -1.0
        assert np.max(np.abs(lap @ psi - psi)) < 1e-12


def test_sigma_approx_self_is_one():
    lap = star_laplacian(6)
    assert check_sigma_approx(lap, lap, 1.0)


def test_sigma_approx_star_of_complete():
    assert check_sigma_approx(laplacian_complete(5), star_laplacian(5), 5.0)


def test_sigma_approx_tightness_at_n_minus_half():
    # In the shared eigenbasis the leaf-difference directions give
    # sigma*1 - n, which is -1 at sigma = n - 1 (and -0.5 at n - 1/2).
    assert not check_sigma_approx(laplacian_complete(5), star_laplacian(5), 4.0)
    assert not check_sigma_approx(laplacian_complete(5), star_laplacian(5), 4.5)


def test_sigma_approx_validates():
    with pytest.raises(ValueError):
        check_sigma_approx(laplacian_complete(3), star_laplacian(4), 3.0)
    with pytest.raises(ValueError):
        check_sigma_approx(laplacian_complete(3), star_laplacian(3), 0.5)


@pytest.mark.parametrize("n", [3, 7, 16, 33, 64])
def test_spectra_and_approximation_sweep(n):
    lap_k = laplacian_complete(n)
    lap_t = star_laplacian(n)
    spec_k = eigenvalues_sym(lap_k)
    spec_t = eigenvalues_sym(lap_t)
    assert np.max(np.abs(spec_k - np.array([0.0] + [n] * (n - 1)))) < 1e-8
    assert np.max(np.abs(spec_t - np.array([0.0] + [1.0] * (n - 2) + [n]))) < 1e-8
    assert check_sigma_approx(lap_k, lap_t, float(n))
    assert not check_sigma_approx(lap_k, lap_t, n - 0.5)
    # the bound is attained: both difference matrices touch eigenvalue 0
    upper = eigenvalues_sym(n * lap_t - lap_k)
    lower = eigenvalues_sym(lap_k - lap_t / n)
    assert abs(upper[0]) < 1e-8
    assert abs(lower[0]) < 1e-8
