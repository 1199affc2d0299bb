"""Spectral estimation of the diffusion coefficient and drift.

From a low-frequency path the transition operator and the stationary Gram
matrix are estimated on a finite-dimensional space ``V_J``; the second
generalized eigenpair gives estimates of the second eigenvalue ``kappa1``
and eigenfunction ``u1`` of ``P_Delta``. Together with a projection estimate
of the invariant density these are plugged into the closed-form inversion
formulas for ``sigma2`` and ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .gridfn import Grid, GridFn, derivative, l2_distance, primitive
from .model import DEFAULT_D_LOWER, DEFAULT_D_UPPER, DiffusionParams
from .simulate import SamplePath
from .wavelets import FoldedBasis, TabulatedBasis, folded_basis

COND_LIMIT = 1e8
GAP_LIMIT = 1e-10
DENOM_THRESHOLD = 1e-3


class EstimationError(RuntimeError):
    """The data do not support a stable estimate at the requested level."""


@dataclass(frozen=True, eq=False)
class EmpiricalMatrices:
    J: int
    P_hat: np.ndarray
    G_hat: np.ndarray


@dataclass(eq=False)
class SpectralEstimate:
    """Eigen-data, density estimate and plug-in coefficient estimates."""

    kappa1_hat: float
    u1_hat: GridFn
    u1_hat_deriv: GridFn
    u1_hat_second: GridFn
    mu_hat: GridFn
    J: int
    J_bar: int
    sigma2_hat: GridFn | None = None
    b_hat: GridFn | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning of the spectral estimator.

    ``2**J`` is the nearest power of two to ``c_J * n**(1/(2s+3))`` and
    ``2**J_bar`` the nearest to ``c_J_bar * n**(1/(2s+1))``; both are bounded
    below by ``J_min``.
    """

    s: float = 2.0
    N: int = 6
    c_J: float = 0.5
    c_J_bar: float = 1.0
    J_min: int = 0
    J_max: int = 6
    A: float = 0.1
    B: float = 0.9
    d: float = DEFAULT_D_LOWER
    D: float = DEFAULT_D_UPPER

    def level(self, n: int) -> int:
        return _nearest_level(self.c_J * n ** (1.0 / (2 * self.s + 3)), self.J_min, self.J_max)

    def density_level(self, n: int) -> int:
        return _nearest_level(self.c_J_bar * n ** (1.0 / (2 * self.s + 1)), self.J_min, self.J_max)


def _nearest_level(target: float, lo: int, hi: int) -> int:
    return int(min(max(round(np.log2(max(target, 1e-300))), lo), hi))


def _basis_rows(basis: TabulatedBasis, J: int) -> int:
    if isinstance(basis, FoldedBasis):
        if J != basis.J:
            raise ValueError(f"folded basis built for level {basis.J}, not {J}")
        return basis.size
    return basis.dim(J)


def empirical_matrices(path: SamplePath, basis: TabulatedBasis, J: int) -> EmpiricalMatrices:
    """Symmetrized transition matrix and endpoint-halved Gram matrix."""
    X = path.values
    if len(X) < 2:
        raise ValueError("need at least one transition")
    n = len(X) - 1
    psi = basis.evaluate(X, _basis_rows(basis, J))
    cross = psi[:, :-1] @ psi[:, 1:].T
    P_hat = (cross + cross.T) / (2.0 * n)
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    G_hat = (psi * w) @ psi.T / n
    G_hat = 0.5 * (G_hat + G_hat.T)
    return EmpiricalMatrices(J, P_hat, G_hat)


def empirical_density(path: SamplePath, basis: TabulatedBasis, J_bar: int) -> GridFn:
    """Projection estimate ``sum_l psi(X_l)/(n+1)`` synthesized on the grid."""
    rows = _basis_rows(basis, J_bar)
    coef = basis.evaluate(path.values, rows).mean(axis=1)
    return GridFn(basis.grid, coef @ basis.table[:rows])


def spectral_estimate(em: EmpiricalMatrices) -> tuple[float, np.ndarray, dict]:
    """Second generalized eigenpair of ``P_hat v = kappa G_hat v``.

    Returns ``kappa1_hat``, the coefficient vector (``v' G_hat v = 1``) and
    diagnostics. The sign is fixed later on the synthesized function.
    """
    cond = float(np.linalg.cond(em.G_hat))
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise EstimationError(
            f"Gram matrix condition number {cond:.3e} at level {em.J}: "
            "not enough data for this level"
        )
    w, V = eigh(em.P_hat, em.G_hat)
    w, V = w[::-1], V[:, ::-1]
    gaps = (w[0] - w[1], w[1] - w[2] if len(w) > 2 else np.inf)
    if min(gaps) < GAP_LIMIT:
        raise EstimationError(f"degenerate second eigenvalue (gaps {gaps})")
    return float(w[1]), V[:, 1], {"gram_cond": cond, "eigen_gap": float(min(gaps)),
                                  "eigenvalues_top": [float(v) for v in w[:4]]}


def _restrict(values: np.ndarray, grid: Grid, A: float, B: float) -> tuple[np.ndarray, np.ndarray]:
    inside = (grid.x >= A - 1e-12) & (grid.x <= B + 1e-12)
    idx = np.flatnonzero(inside)
    out = values.copy()
    out[: idx[0]] = values[idx[0]]
    out[idx[-1] + 1:] = values[idx[-1]]
    return out, inside


def _check_denominators(se: SpectralEstimate, inside: np.ndarray) -> None:
    du = np.abs(se.u1_hat_deriv.values[inside])
    mu = se.mu_hat.values[inside]
    if du.min() < DENOM_THRESHOLD or mu.min() < DENOM_THRESHOLD:
        raise EstimationError(
            f"denominator too small on [A,B]: min|u1'|={du.min():.2e}, "
            f"min mu_hat={mu.min():.2e}"
        )


def estimate_sigma2(se: SpectralEstimate, delta: float, A: float = 0.1, B: float = 0.9,
                    d: float = DEFAULT_D_LOWER, D: float = DEFAULT_D_UPPER) -> GridFn:
    """Plug-in diffusion coefficient on ``[A, B]``, held constant outside."""
    g = se.u1_hat.grid
    inside = (g.x >= A - 1e-12) & (g.x <= B + 1e-12)
    _check_denominators(se, inside)
    num = 2.0 / delta * np.log(se.kappa1_hat) * primitive(se.u1_hat * se.mu_hat).values
    raw = num[inside] / (se.u1_hat_deriv.values[inside] * se.mu_hat.values[inside])
    lo, hi = d / 2.0, 4.0 * D**2
    vals = np.zeros(g.M)
    vals[inside] = np.clip(raw, lo, hi)
    se.diagnostics["sigma2_clamped"] = int(np.sum((raw < lo) | (raw > hi)))
    out, _ = _restrict(vals, g, A, B)
    return GridFn(g, out)


def estimate_drift(se: SpectralEstimate, delta: float, A: float = 0.1, B: float = 0.9,
                   D: float = DEFAULT_D_UPPER) -> GridFn:
    """Plug-in drift on ``[A, B]``, held constant outside."""
    g = se.u1_hat.grid
    inside = (g.x >= A - 1e-12) & (g.x <= B + 1e-12)
    _check_denominators(se, inside)
    u, du, d2u, mu = (f.values[inside] for f in
                      (se.u1_hat, se.u1_hat_deriv, se.u1_hat_second, se.mu_hat))
    integral = primitive(se.u1_hat * se.mu_hat).values[inside]
    raw = np.log(se.kappa1_hat) / delta * (u * du * mu - d2u * integral) / (du**2 * mu)
    vals = np.zeros(g.M)
    vals[inside] = np.clip(raw, -2.0 * D, 2.0 * D)
    se.diagnostics["drift_clamped"] = int(np.sum(np.abs(raw) > 2.0 * D))
    out, _ = _restrict(vals, g, A, B)
    return GridFn(g, out)


def estimate_from_eigen(kappa1: float, u1: GridFn, mu: GridFn, J: int = -1,
                        J_bar: int = -1) -> SpectralEstimate:
    """Assemble a :class:`SpectralEstimate` from eigen-data on the grid."""
    if u1.values[0] < u1.values[-1]:
        u1 = -u1
    du = derivative(u1)
    return SpectralEstimate(kappa1, u1, du, derivative(du), mu, J, J_bar)


def estimate(path: SamplePath, cfg: EstimatorConfig = EstimatorConfig(),
             grid: Grid | None = None, J: int | None = None,
             J_bar: int | None = None) -> SpectralEstimate:
    """Full pipeline: levels, matrices, eigenpair, density and plug-ins."""
    grid = grid or Grid()
    n = path.n
    J = cfg.level(n) if J is None else J
    J_bar = cfg.density_level(n) if J_bar is None else J_bar
    basis = folded_basis(cfg.N, J, grid.m)
    dbasis = folded_basis(cfg.N, J_bar, grid.m)
    em = empirical_matrices(path, basis, J)
    kappa, coef, diag = spectral_estimate(em)
    if not (0.0 < kappa < 1.0):
        raise EstimationError(f"estimated eigenvalue {kappa:.4f} outside (0, 1)")
    u1 = GridFn(grid, coef @ basis.table)
    mu_hat = empirical_density(path, dbasis, J_bar)
    se = estimate_from_eigen(kappa, u1, mu_hat, J, J_bar)
    se.diagnostics.update(diag, J=J, J_bar=J_bar, n=n)
    se.sigma2_hat = estimate_sigma2(se, path.delta, cfg.A, cfg.B, cfg.d, cfg.D)
    se.b_hat = estimate_drift(se, path.delta, cfg.A, cfg.B, cfg.D)
    return se


def separation_dn(sigma2: GridFn, b: GridFn, sigma2_0: GridFn, b_0: GridFn,
                  n: int, eps_n: float, A: float = 0.1, B: float = 0.9) -> float:
    """Weighted separation of two parameter pairs on ``[A, B]``."""
    if eps_n <= 0:
        raise ValueError("eps_n must be positive")
    return (l2_distance(sigma2, sigma2_0, A, B) / (n * eps_n**2)
            + l2_distance(b, b_0, A, B) / (n**2 * eps_n**4))


def optimal_eps(n: int, s: float = 2.0) -> float:
    """``n^{-(s+1)/(2s+3)}`` without logarithmic factors."""
    return float(n ** (-(s + 1.0) / (2.0 * s + 3.0)))


def plugin_test(estimate: SpectralEstimate, truth: DiffusionParams, L_prime: float,
                eps_n: float, n: int, A: float = 0.1, B: float = 0.9) -> bool:
    """Reject (``True``) when the separation reaches ``L_prime * eps_n``."""
    d = separation_dn(estimate.sigma2_hat, estimate.b_hat, truth.sigma2, truth.b,
                      n, eps_n, A, B)
    return bool(d >= L_prime * eps_n)
