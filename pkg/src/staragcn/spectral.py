"""Laplacian spectra of complete graphs and stars, and Loewner-order checks.

The closed forms being verified numerically: L of the complete graph K_n has
eigenvalues {0, n x (n-1)}; L of the n-node star has {0, 1 x (n-2), n}; and
sigma = n is the tight spectral-similarity factor between the two, i.e.
L_star / n <= L_complete <= n * L_star in the positive-semidefinite order
while sigma = n - 1/2 already fails.

Eigenvalues come from a hand-rolled cyclic Jacobi sweep so the verification
stays independent of the library eigensolvers the tests compare against.
"""

from __future__ import annotations

import numpy as np

from .topology import EdgeList

__all__ = [
    "JacobiError",
    "check_sigma_approx",
    "eigenvalues_sym",
    "laplacian_complete",
    "laplacian_from_edges",
    "quadratic_form",
]

_SYM_TOL = 1e-12


class JacobiError(RuntimeError):
    """Jacobi sweep failed to reach the off-diagonal tolerance."""

    def __init__(self, residual: float, sweeps: int) -> None:
        super().__init__(
            f"jacobi did not converge: off-diagonal norm {residual:.3e} after {sweeps} sweeps"
        )
        self.residual = residual
        self.sweeps = sweeps


def laplacian_complete(n: int) -> np.ndarray:
    """Laplacian of K_n: n*I - J, i.e. n-1 on the diagonal and -1 elsewhere."""
    if n < 2:
        raise ValueError(f"laplacian_complete: n must be >= 2, got {n}")
    return n * np.eye(n) - np.ones((n, n))


def laplacian_from_edges(g: EdgeList) -> np.ndarray:
    """Unweighted graph Laplacian: degree on the diagonal, -1 per edge."""
    lap = np.zeros((g.n, g.n))
    for u, v in g.edges:
        lap[u, u] += 1.0
        lap[v, v] += 1.0
        lap[u, v] -= 1.0
        lap[v, u] -= 1.0
    return lap


def quadratic_form(lap: np.ndarray, x: np.ndarray) -> float:
    """x^T L x, the sum of squared differences across edges."""
    return float(x @ lap @ x)


def _offdiag_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt(np.sum(off * off)))


def eigenvalues_sym(m: np.ndarray, tol: float = _SYM_TOL, max_sweeps: int = 100) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending, via cyclic Jacobi.

    Sweeps rotate every upper-triangle pair per pass until the off-diagonal
    Frobenius norm drops below ``tol``. Raises JacobiError (carrying the
    residual) if ``max_sweeps`` passes are not enough, and ValueError for
    non-symmetric input.
    """
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"eigenvalues_sym: expected square matrix, got {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > _SYM_TOL:
        raise ValueError("eigenvalues_sym: matrix is not symmetric within 1e-12")
    n = a.shape[0]
    if n == 1:
        return a.diagonal().copy()
    a = a.copy()

    for sweep in range(max_sweeps):
        if _offdiag_norm(a) < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # Stable rotation angle (Golub & Van Loan).
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :] = rot_p
                a[q, :] = rot_q
                col_p = c * a[:, p] - s * a[:, q]
                col_q = s * a[:, p] + c * a[:, q]
                a[:, p] = col_p
                a[:, q] = col_q
                a[p, q] = 0.0
                a[q, p] = 0.0
    else:
        residual = _offdiag_norm(a)
        if residual >= tol:
            raise JacobiError(residual, max_sweeps)
    return np.sort(a.diagonal())


def check_sigma_approx(
    lap_g: np.ndarray, lap_h: np.ndarray, sigma: float, tol: float = 1e-8
) -> bool:
    """True iff L_h/sigma <= L_g <= sigma*L_h in the Loewner order.

    Both conditions are tested as positive semidefiniteness of the
    difference matrices, allowing eigenvalues down to -tol for float slack.
    """
    if lap_g.shape != lap_h.shape:
        raise ValueError(f"check_sigma_approx: order mismatch {lap_g.shape} vs {lap_h.shape}")
    if sigma < 1.0:
        raise ValueError(f"check_sigma_approx: sigma must be >= 1, got {sigma}")
    upper = eigenvalues_sym(sigma * lap_h - lap_g)
    if upper[0] < -tol:
        return False
    lower = eigenvalues_sym(lap_g - lap_h / sigma)
    return bool(lower[0] >= -tol)
