"""Discretized generator, transition densities, Green kernel and distances.

The generator ``Lf = sigma2 f'' / 2 + b f'`` is written in divergence form
``Lf = (S f')' / mu`` with ``S = sigma2 mu / 2`` and discretized by a
three-point conservative stencil. Reflecting ghost points at both ends give
the Neumann condition. The resulting matrix is self-adjoint with respect to
the trapezoid-weighted inner product ``<f, g> = sum_i f_i g_i mu_i w_i``,
so its spectrum is real and the semigroup ``exp(Delta L)`` is computed
from a symmetric tridiagonal eigendecomposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .gridfn import Grid, GridFn, l2_distance, primitive, quadrature
from .model import DiffusionParams
from .wavelets import WaveletBasis, besov_dual_bound

CLIP_LEVEL = 1e-12
NEGATIVE_TOL = -1e-10
DEFAULT_DELTA = 0.1


class DegenerateSpectrumError(RuntimeError):
    """Raised when the second eigenvalue is not separated."""


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Tridiagonal generator matrix with cached eigendecomposition.

    Attributes
    ----------
    lower, diag, upper : ndarray
        Sub-, main and super-diagonal of ``L``.
    pi : ndarray
        Inner-product weights ``mu_i * w_i`` (trapezoid weights ``w``
        include the spacing).
    eigvals : ndarray
        Eigenvalues in decreasing order (``eigvals[0]`` is zero).
    eigvecs : ndarray
        Columns are eigenvectors, orthonormal in the ``pi`` inner product.
    """

    params: DiffusionParams
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    pi: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.params.grid

    @property
    def size(self) -> int:
        return len(self.diag)

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1)

    def apply(self, f) -> np.ndarray:
        """``L f`` for a vector (or GridFn) of grid values."""
        v = f.values if isinstance(f, GridFn) else np.asarray(f, dtype=float)
        out = self.diag * v
        out[:-1] += self.upper * v[1:]
        out[1:] += self.lower * v[:-1]
        return out

    def semigroup(self, delta: float) -> np.ndarray:
        """Matrix ``exp(Delta L)`` acting on grid values."""
        V = self.eigvecs
        return (V * np.exp(delta * self.eigvals)) @ (V.T * self.pi)


def generator_stencil(p: DiffusionParams) -> tuple[np.ndarray, ...]:
    """Diagonals ``(lower, diag, upper)`` of ``L`` and the weights ``pi``."""
    g = p.grid
    mu = p.mu.values
    flux = 0.5 * p.sigma2.values * mu
    flux_half = 0.5 * (flux[:-1] + flux[1:])
    denom = mu * g.weights * g.h
    upper = flux_half / denom[:-1]
    lower = flux_half / denom[1:]
    diag = np.zeros(g.M)
    diag[:-1] -= upper
    diag[1:] -= lower
    return lower, diag, upper, mu * g.weights


def assemble_generator(p: DiffusionParams, grid: Grid | None = None) -> GeneratorMatrix:
    """Discretize the generator of ``p`` with reflecting boundaries."""
    if grid is not None and grid != p.grid:
        raise ValueError(f"params live on m={p.grid.m}, requested m={grid.m}")
    lower, diag, upper, pi = generator_stencil(p)
    # symmetric similarity transform with sqrt(pi)
    off = np.sqrt(upper * lower)
    w, Q = eigh_tridiagonal(diag, off)
    order = np.argsort(w)[::-1]
    w, Q = w[order], Q[:, order]
    V = Q / np.sqrt(pi)[:, None]
    # constant eigenvector with positive sign
    if V[0, 0] < 0:
        V[:, 0] = -V[:, 0]
    for arr in (lower, diag, upper, pi, w, V):
        arr.setflags(write=False)
    return GeneratorMatrix(p, lower, diag, upper, pi, w, V)


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Transition densities ``p[i, j] = p(Delta, x_i, y_j)`` on the grid."""

    delta: float
    p: np.ndarray
    grid: Grid
    mu: GridFn

    @property
    def h(self) -> float:
        return self.grid.h

    def row_integrals(self) -> np.ndarray:
        return self.p @ self.grid.weights

    def density(self, x, y) -> np.ndarray:
        """Bilinear interpolation of the density at off-grid ``(x, y)``."""
        ix, tx = self.grid.locate(x)
        iy, ty = self.grid.locate(y)
        P = self.p
        return ((1 - tx) * ((1 - ty) * P[ix, iy] + ty * P[ix, iy + 1])
                + tx * ((1 - ty) * P[ix + 1, iy] + ty * P[ix + 1, iy + 1]))


def transition_kernel(L: GeneratorMatrix, delta: float) -> TransitionKernel:
    """Densities of ``exp(Delta L)`` with respect to Lebesgue measure."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not np.all(np.isfinite(L.eigvals)):
        raise np.linalg.LinAlgError("eigendecomposition produced non-finite values")
    V = L.eigvecs
    mu = L.params.mu.values
    p = (V * np.exp(delta * L.eigvals)) @ (V.T * mu)
    p.setflags(write=False)
    return TransitionKernel(delta, p, L.grid, L.params.mu)


def spectral_pair(L: GeneratorMatrix, delta: float) -> tuple[float, GridFn]:
    """Second eigenvalue of ``exp(Delta L)`` and its eigenfunction.

    The eigenfunction has unit ``L^2(mu)`` norm and satisfies
    ``u1(0) > u1(1)``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    lam = L.eigvals
    if lam[1] - lam[2] < 1e-10 or lam[0] - lam[1] < 1e-10:
        raise DegenerateSpectrumError(
            f"second eigenvalue {lam[1]} not separated (neighbours {lam[0]}, {lam[2]})"
        )
    u = L.eigvecs[:, 1].copy()
    if u[0] < u[-1]:
        u = -u
    return float(np.exp(delta * lam[1])), GridFn(L.grid, u)


# ---------------------------------------------------------------------------
# Green kernel of the generator inverse
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GreenKernel:
    """Kernel ``K(x_i, z_j)`` of the inverse ``J`` relative to ``mu0``."""

    K: np.ndarray
    H: np.ndarray
    mu0: GridFn
    params: DiffusionParams

    def apply(self, f) -> GridFn:
        """``Jf(x) = int K(x, z) f(z) mu0(z) dz``."""
        v = f.values if isinstance(f, GridFn) else np.asarray(f, dtype=float)
        g = self.mu0.grid
        return GridFn(g, self.K @ (v * self.mu0.values * g.weights))


def green_kernel(p: DiffusionParams, mu0: GridFn) -> GreenKernel:
    """Tabulate the Green kernel of ``p`` with reference density ``mu0``."""
    if np.any(mu0.values <= 0):
        raise ValueError("reference density must be positive")
    g = p.grid
    w = g.weights
    scale = np.exp(-primitive(2.0 * p.b / p.sigma2).values)
    Q = primitive(GridFn(g, scale)).values
    tail0 = quadrature(mu0) - primitive(mu0).values
    R = primitive(GridFn(g, tail0 * scale)).values
    ratio = p.mu.values / mu0.values
    H = (np.maximum(Q[:, None] - Q[None, :], 0.0) - (R[-1] - R)[None, :]) * ratio[None, :]
    Hmu0 = H @ (mu0.values * w)
    K = 2.0 * p.G * (H - ratio[None, :] * Hmu0[:, None])
    return GreenKernel(K, H, mu0, p)


def apply_J(p: DiffusionParams, mu0: GridFn, f: GridFn) -> GridFn:
    return green_kernel(p, mu0).apply(f)


def centered_generator_apply(L: GeneratorMatrix, mu0: GridFn, f) -> GridFn:
    """``(L - mu0(L)) f`` where ``mu0(L) f`` is the constant ``int Lf dmu0``."""
    Lf = L.apply(f)
    return GridFn(L.grid, Lf - np.dot(Lf, mu0.values * L.grid.weights))


def hs_distance(p: DiffusionParams, p0: DiffusionParams) -> float:
    """``L^2(mu0 x mu0)`` distance between the Green kernels of ``p`` and ``p0``."""
    if p.grid != p0.grid:
        raise ValueError("parameters live on different grids")
    mu0 = p0.mu
    diff = green_kernel(p, mu0).K - green_kernel(p0, mu0).K
    wm = mu0.values * p.grid.weights
    return float(np.sqrt(wm @ (diff**2) @ wm))


# ---------------------------------------------------------------------------
# information distances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InfoDistances:
    kl: float
    var_log: float
    kl_mu: float
    var_log_mu: float
    clipped: int


def _clip(values: np.ndarray, what: str) -> tuple[np.ndarray, int]:
    if np.any(values < NEGATIVE_TOL):
        i = np.unravel_index(np.argmin(values), values.shape)
        raise ValueError(f"{what} negative ({values[i]:.3e}) at node {i}")
    low = values < CLIP_LEVEL
    return np.where(low, CLIP_LEVEL, values), int(low.sum())


def info_distances(p0: DiffusionParams, p: DiffusionParams,
                   delta: float = DEFAULT_DELTA) -> InfoDistances:
    """Transition and stationary KL divergences and log-ratio variances.

    Both kernels integrate to one row-wise, so the divergence is evaluated
    in the termwise nonnegative form ``p0 log(p0/p) - p0 + p``.
    """
    if p.grid != p0.grid:
        raise ValueError("parameters live on different grids")
    w = p0.grid.weights
    k0 = transition_kernel(assemble_generator(p0), delta).p
    k1 = transition_kernel(assemble_generator(p), delta).p
    k0, c0 = _clip(k0, "reference transition density")
    k1, c1 = _clip(k1, "transition density")
    m0, c2 = _clip(p0.mu.values, "reference invariant density")
    m1, c3 = _clip(p.mu.values, "invariant density")
    lr = np.log(k1 / k0)
    outer = (m0 * w)[:, None] * w[None, :]
    weight = outer * k0
    kl = float(np.sum(outer * (k0 * -lr - k0 + k1)))
    mean_lr = float(np.sum(weight * lr))
    var_log = float(np.sum(weight * lr**2) - mean_lr**2)
    lr_mu = np.log(m1 / m0)
    kl_mu = float(np.sum(w * (m0 * -lr_mu - m0 + m1)))
    mean_mu = float(np.sum(w * m0 * lr_mu))
    var_mu = float(np.sum(w * m0 * lr_mu**2) - mean_mu**2)
    return InfoDistances(kl, max(var_log, 0.0), kl_mu, max(var_mu, 0.0),
                         c0 + c1 + c2 + c3)


def small_ball_rhs(p0: DiffusionParams, p: DiffusionParams, basis: WaveletBasis) -> float:
    """``|mu - mu0|_2`` plus dual Besov bounds of the ``sigma^-2`` and drift gaps."""
    inv_diff = p.sigma2.map(np.reciprocal) - p0.sigma2.map(np.reciprocal)
    return (l2_distance(p.mu, p0.mu)
            + besov_dual_bound(inv_diff, 1.0, basis)
            + besov_dual_bound(p.b - p0.b, 2.0, basis))


# ---------------------------------------------------------------------------
# Lipschitz functional calculus
# ---------------------------------------------------------------------------


def inverse_exp_lipschitz(delta: float, c1: float, c2: float) -> float:
    """Lipschitz constant of ``z -> exp(delta / z)`` on ``[-c2, -c1]``.

    With ``u = -1/z`` the derivative has modulus ``delta u^2 exp(-delta u)``,
    maximized over ``u`` in ``[1/c2, 1/c1]``.
    """
    if not (0 < c1 <= c2):
        raise ValueError("need 0 < c1 <= c2")
    lo, hi = 1.0 / c2, 1.0 / c1
    u_star = min(max(2.0 / delta, lo), hi)
    return float(delta * u_star**2 * np.exp(-delta * u_star))


def matrix_function(A: np.ndarray, func) -> np.ndarray:
    """``func(A)`` for a symmetric matrix via its eigendecomposition."""
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    return (V * func(w)) @ V.T


def hs_lipschitz_gap(N: np.ndarray, Mm: np.ndarray, delta: float) -> tuple[float, float]:
    """``(|f(N) - f(M)|_HS, |N - M|_HS)`` for ``f(z) = exp(delta / z)``."""
    f = lambda z: np.exp(delta / z)
    lhs = np.linalg.norm(matrix_function(N, f) - matrix_function(Mm, f), "fro")
    return float(lhs), float(np.linalg.norm(N - Mm, "fro"))


def random_negative_definite(dim: int, c1: float, c2: float, rng) -> np.ndarray:
    """Symmetric matrix with eigenvalues drawn uniformly from ``[-c2, -c1]``."""
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    lam = -rng.uniform(c1, c2, size=dim)
    return (Q * lam) @ Q.T
