"""Monte Carlo checks of concentration inequalities for the sampled chain.

For ``Z = sum_{j<n} (f(X_j) - E_mu f)`` the tail ``P(|Z| > r)`` is compared
with ``kappa * exp(-shape(r) / kappa)`` where

    shape(r) = min(r^2 / (n |f|^2_{L2(mu)}), r / (log(n) |f|_inf)).

The constant ``kappa`` is not available in closed form, so it is fitted: the
smallest power of two for which the empirical tail stays below the bound on
the whole threshold grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .generator import assemble_generator, spectral_pair, transition_kernel
from .gridfn import Grid, GridFn, quadrature
from .model import DiffusionParams
from .simulate import sample_chains
from .wavelets import WaveletBasis

KAPPA_GRID = tuple(2.0**k for k in range(11))
EMPIRICAL_SUP_CONSTANT = 18.0
X_GRID = (0.0, 1.0, 2.0, 4.0)


@dataclass(eq=False)
class TailTable:
    """Empirical tail frequencies against the fitted bound.

    ``kappa_fit`` is ``None`` when no ``kappa`` in the search grid works.
    The ``*_no_log`` fields use the shape without the ``log(n)`` factor.
    """

    r_grid: np.ndarray
    empirical_tail: np.ndarray
    bound_shape: np.ndarray
    kappa_fit: float | None
    bound_shape_no_log: np.ndarray
    kappa_fit_no_log: float | None
    n: int
    R: int
    sd: float
    meta: dict = field(default_factory=dict)

    def bound(self, kappa: float | None = None, log_factor: bool = True) -> np.ndarray:
        kappa = (self.kappa_fit if log_factor else self.kappa_fit_no_log) if kappa is None else kappa
        shape = self.bound_shape if log_factor else self.bound_shape_no_log
        if kappa is None:
            return np.full(len(self.r_grid), np.nan)
        return kappa * np.exp(-shape / kappa)

    def to_csv(self, path: str | Path) -> None:
        bound = self.bound()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "empirical", "bound", "shape", "shape_no_log"])
            for row in zip(self.r_grid, self.empirical_tail, bound,
                           self.bound_shape, self.bound_shape_no_log):
                w.writerow([f"{v:.10g}" for v in row])


def fit_kappa(empirical: np.ndarray, shape: np.ndarray,
              grid=KAPPA_GRID) -> float | None:
    """Smallest ``kappa`` in ``grid`` with ``empirical <= kappa exp(-shape/kappa)``."""
    for kappa in grid:
        if np.all(empirical <= kappa * np.exp(-shape / kappa)):
            return float(kappa)
    return None


def tail_shape(r: np.ndarray, n: int, l2_norm: float, sup_norm: float,
               log_factor: bool = True) -> np.ndarray:
    """``min(r^2/(n |f|^2), r/(log(n) |f|_inf))``; zero norms give infinity."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        quad = r**2 / (n * l2_norm**2) if l2_norm > 0 else np.full(r.shape, np.inf)
        scale = (np.log(n) if log_factor else 1.0) * sup_norm
        lin = r / scale if scale > 0 else np.full(r.shape, np.inf)
    return np.minimum(quad, lin)


def tail_table(Z: np.ndarray, n: int, l2_norm: float, sup_norm: float,
               r_grid: np.ndarray | None = None, points: int = 20, **meta) -> TailTable:
    """Tail frequencies of ``|Z|`` on a log grid from 0.5 to 8 standard deviations."""
    Z = np.asarray(Z, dtype=float)
    sd = float(np.std(Z))
    if r_grid is None:
        r_grid = np.geomspace(0.5, 8.0, points) * sd if sd > 0 else np.geomspace(0.5, 8.0, points)
    r_grid = np.asarray(r_grid, dtype=float)
    emp = np.array([np.mean(np.abs(Z) > r) for r in r_grid])
    shape = tail_shape(r_grid, n, l2_norm, sup_norm, True)
    shape_nl = tail_shape(r_grid, n, l2_norm, sup_norm, False)
    return TailTable(r_grid, emp, shape, fit_kappa(emp, shape), shape_nl,
                     fit_kappa(emp, shape_nl), n, len(Z), sd, dict(meta))


def _starts(mu: GridFn, start) -> dict:
    return {"x0": None} if start == "stationary" else {"x0": float(start)}


def bernstein_experiment(p: DiffusionParams, f: GridFn, n: int, R: int,
                         rng: np.random.Generator, delta: float = 0.1,
                         start="stationary") -> TailTable:
    """Tails of ``Z`` over ``R`` independent chains of ``n`` observations.

    Parameters
    ----------
    start : "stationary" or float
        Initial law: ``mu`` or a point mass.

    Notes
    -----
    ``meta`` also records ``Var(Z)/n``, the chain bound
    ``(1 + rho)/(1 - rho) Var_mu(f)`` and ``rho``.
    """
    if R < 100:
        raise ValueError("need at least 100 replicates")
    if f.grid != p.grid:
        raise ValueError("f and the parameters live on different grids")
    K = transition_kernel(assemble_generator(p), delta)
    paths = sample_chains(K, p.mu, n - 1, R, rng, **_starts(p.mu, start))
    mean = quadrature(f * p.mu)
    Z = f(paths).sum(axis=1) - n * mean
    l2 = float(np.sqrt(quadrature(f * f * p.mu)))
    var_f = max(quadrature((f - mean) * (f - mean) * p.mu), 0.0)
    rho = spectral_gap(p, delta)
    return tail_table(Z, n, l2, f.sup(), start=str(start), var_Z_over_n=float(np.var(Z) / n),
                      var_f=float(var_f), rho=rho,
                      variance_bound=float((1 + rho) / (1 - rho) * var_f))


@dataclass(frozen=True, eq=False)
class GridFn2:
    """Function on the product grid, bilinear between nodes."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.M, self.grid.M):
            raise ValueError(f"expected shape {(self.grid.M,) * 2}, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: Grid, func) -> "GridFn2":
        X, Y = np.meshgrid(grid.x, grid.x, indexing="ij")
        return cls(grid, np.broadcast_to(func(X, Y), X.shape))

    def __call__(self, x, y) -> np.ndarray:
        ix, tx = self.grid.locate(x)
        iy, ty = self.grid.locate(y)
        F = self.values
        return ((1 - tx) * ((1 - ty) * F[ix, iy] + ty * F[ix, iy + 1])
                + tx * ((1 - ty) * F[ix + 1, iy] + ty * F[ix + 1, iy + 1]))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def bivariate_mean(p: DiffusionParams, f2: GridFn2, delta: float = 0.1) -> float:
    """``E f2(X_0, X_Delta)`` under ``mu(x) p(Delta, x, y)``."""
    K = transition_kernel(assemble_generator(p), delta)
    w = p.grid.weights
    return float(np.sum((p.mu.values * w)[:, None] * K.p * w[None, :] * f2.values))


def bivariate_experiment(p: DiffusionParams, f2: GridFn2, n: int, R: int,
                         rng: np.random.Generator, delta: float = 0.1,
                         start="stationary") -> TailTable:
    """Tails of ``Z = sum_{j<n} (f2(X_j, X_{j+1}) - E f2)``."""
    if R < 100:
        raise ValueError("need at least 100 replicates")
    K = transition_kernel(assemble_generator(p), delta)
    paths = sample_chains(K, p.mu, n, R, rng, **_starts(p.mu, start))
    mean = bivariate_mean(p, f2, delta)
    Z = f2(paths[:, :-1], paths[:, 1:]).sum(axis=1) - n * mean
    w = p.grid.weights
    l2 = float(np.sqrt(np.sum((p.mu.values * w)[:, None] * K.p * w[None, :] * f2.values**2)))
    return tail_table(Z, n, l2, f2.sup(), start=str(start), mean=mean)


def spectral_gap(p: DiffusionParams, delta: float = 0.1) -> float:
    """Second eigenvalue ``rho`` of the transition operator."""
    return spectral_pair(assemble_generator(p), delta)[0]


def centered_sums(paths: np.ndarray, basis: WaveletBasis, J: int,
                  mu: GridFn) -> np.ndarray:
    """``sum_j (psi(X_j) - E_mu psi)`` per path, shape ``(R, dim V_J)``."""
    rows = basis.dim(J)
    means = basis.table[:rows] @ (mu.values * mu.grid.weights)
    R, n = paths.shape
    out = np.empty((R, rows))
    for r in range(R):
        out[r] = basis.evaluate(paths[r], rows).sum(axis=1) - n * means
    return out


def empirical_sup_experiment(p: DiffusionParams, basis: WaveletBasis, J: int, n: int,
                             R: int, rng: np.random.Generator, delta: float = 0.1,
                             start="stationary", x_grid=X_GRID) -> dict:
    """Supremum of ``|Z(f)|`` over the unit ball of ``V_J``.

    With an orthonormal basis the supremum is the Euclidean norm of the
    centered coefficient sums. ``V^2`` and ``U`` use the largest
    ``L^2(mu)`` norm and the largest sup norm over the unit ball; for each
    ``kappa`` in the search grid the exceedance frequency of
    ``18 (sqrt(V^2 (d + x)) + U (d + x))`` is compared with
    ``2 kappa exp(-x)``.
    """
    K = transition_kernel(assemble_generator(p), delta)
    paths = sample_chains(K, p.mu, n - 1, R, rng, **_starts(p.mu, start))
    S = centered_sums(paths, basis, J, p.mu)
    sup = np.linalg.norm(S, axis=1)
    rows = basis.dim(J)
    table = basis.table[:rows]
    gram_mu = (table * (p.mu.values * p.grid.weights)) @ table.T
    max_l2 = float(np.linalg.eigvalsh(gram_mu)[-1])
    max_sup = float(np.max(np.linalg.norm(table, axis=0)))
    d = rows
    log_n = np.log(n) if n > 1 else 0.0
    fits = []
    kappa_fit = None
    for kappa in KAPPA_GRID:
        V2 = kappa * n * max_l2
        U = kappa * log_n * max_sup
        thresholds = [EMPIRICAL_SUP_CONSTANT * (np.sqrt(V2 * (d + x)) + U * (d + x))
                      for x in x_grid]
        freq = [float(np.mean(sup >= t)) for t in thresholds]
        ok = all(fr <= 2 * kappa * np.exp(-x) for fr, x in zip(freq, x_grid))
        fits.append({"kappa": kappa, "thresholds": thresholds, "frequencies": freq, "ok": ok})
        if ok and kappa_fit is None:
            kappa_fit = kappa
    coef_max = np.max(np.abs(S), axis=0)
    return {
        "sup": sup, "sums": S, "dim": d, "max_l2_mu": max_l2, "max_sup": max_sup,
        "kappa_fit": kappa_fit, "fits": fits, "x_grid": list(x_grid),
        "dominance": bool(np.all(sup[:, None] >= np.abs(S) - 1e-12)),
        "max_single_coefficient": coef_max,
    }
