"""Parameter pairs of a reflected diffusion on [0, 1].

A parameter is a diffusion coefficient ``sigma2 = sigma**2`` and a drift ``b``,
both tabulated on a common grid. The invariant density is

    mu(x) = exp(int_0^x 2 b / sigma2) / (G * sigma2(x)),

with ``G`` chosen so that ``mu`` integrates to one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gridfn import GridFn, derivative, primitive, quadrature
from .wavelets import WaveletBasis, sobolev_norm

DEFAULT_D_LOWER = 0.25
DEFAULT_D_UPPER = 10.0
BOUNDARY_TOL = 1e-6


def invariant_density(sigma2: GridFn, b: GridFn) -> tuple[GridFn, float]:
    """Stationary density ``mu`` and its normalizer ``G``.

    The exponent is a trapezoid primitive and ``G`` a trapezoid integral, so
    ``quadrature(mu)`` equals one up to rounding.
    """
    if np.any(sigma2.values <= 0):
        raise ValueError("sigma2 must be positive everywhere")
    expo = primitive(2.0 * b / sigma2).values
    # shift the exponent for stability; G absorbs the factor
    shift = expo.max()
    unnorm = GridFn(sigma2.grid, np.exp(expo - shift) / sigma2.values)
    Z = quadrature(unnorm)
    mu = unnorm / Z
    G = Z * np.exp(shift)
    return mu, float(G)


def drift_from_mu(sigma2: GridFn, log_mu: GridFn) -> GridFn:
    """Drift ``((sigma2)' + sigma2 H') / 2`` with ``H`` a log-density series.

    With this drift the invariant density is ``exp(H) / int exp(H)``.
    """
    return 0.5 * (derivative(sigma2) + sigma2 * derivative(log_mu))


@dataclass(frozen=True, eq=False)
class DiffusionParams:
    """Diffusion coefficient, drift and the induced invariant density.

    Build with :meth:`from_coefficients`; the direct constructor trusts its
    inputs.
    """

    sigma2: GridFn
    b: GridFn
    mu: GridFn
    G: float
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_coefficients(cls, sigma2: GridFn, b: GridFn, **meta) -> "DiffusionParams":
        if sigma2.grid != b.grid:
            raise ValueError("sigma2 and b live on different grids")
        mu, G = invariant_density(sigma2, b)
        return cls(sigma2, b, mu, G, dict(meta))

    @classmethod
    def trivial(cls, grid) -> "DiffusionParams":
        """Reflected Brownian motion: ``sigma2 = 1``, ``b = 0``."""
        return cls.from_coefficients(grid.fn(1.0), grid.fn(0.0), name="trivial")

    @property
    def grid(self):
        return self.sigma2.grid


@dataclass(frozen=True)
class ThetaReport:
    """Membership of a parameter pair in the regularity classes."""

    in_theta: bool
    in_theta_s: bool
    sup_bounds: dict
    sobolev: dict
    boundary: dict
    d_observed: float
    D_used: float
    d_used: float

    def as_dict(self) -> dict:
        return {
            "in_theta": self.in_theta,
            "in_theta_s": self.in_theta_s,
            "sup_bounds": self.sup_bounds,
            "sobolev": self.sobolev,
            "boundary": self.boundary,
            "d_observed": self.d_observed,
            "D_used": self.D_used,
            "d_used": self.d_used,
        }


def theta_norms(p: DiffusionParams, s: float, basis: WaveletBasis) -> tuple[dict, dict, dict]:
    """Sup norms, Sobolev norms and boundary values entering the class tests."""
    sigma = p.sigma2.map(np.sqrt)
    d_sigma = derivative(sigma)
    sup = {
        "b": p.b.sup(),
        "b_prime": derivative(p.b).sup(),
        "sigma": sigma.sup(),
        "sigma_prime": d_sigma.sup(),
        "sigma_second": derivative(d_sigma).sup(),
    }
    sob = {
        "sigma_H_s": sobolev_norm(sigma, s, basis),
        "b_H_s_minus_1": sobolev_norm(p.b, s - 1.0, basis),
    }
    bnd = {
        "b0": float(p.b.values[0]),
        "b1": float(p.b.values[-1]),
        "sigma_prime0": float(d_sigma.values[0]),
        "sigma_prime1": float(d_sigma.values[-1]),
    }
    return sup, sob, bnd


def validate_theta(p: DiffusionParams, d: float = DEFAULT_D_LOWER,
                   D: float = DEFAULT_D_UPPER, s: float = 2.0,
                   basis: WaveletBasis | None = None) -> ThetaReport:
    """Check the parameter class constraints without raising.

    Parameters
    ----------
    p : DiffusionParams
    d : float
        Lower bound for ``sigma2``.
    D : float
        Upper bound for the sup norms and Sobolev norms.
    s : float
        Smoothness index of the Sobolev class.
    basis : WaveletBasis
        Basis used for the Sobolev norms.
    """
    if basis is None:
        raise ValueError("a wavelet basis is required for the Sobolev norms")
    sup, sob, bnd = theta_norms(p, s, basis)
    d_obs = float(p.sigma2.values.min())
    boundary_ok = all(abs(v) <= BOUNDARY_TOL for v in bnd.values())
    in_theta = bool(d_obs >= d and max(sup.values()) <= D and boundary_ok)
    in_theta_s = bool(in_theta and max(sob.values()) <= D)
    return ThetaReport(in_theta, in_theta_s, sup, sob, bnd, d_obs, D, d)
