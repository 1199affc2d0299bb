"""Truth models used by the experiments.

``trivial``
    Reflected Brownian motion, ``sigma2 = 1`` and ``b = 0``.
``interior``
    ``log sigma^-2`` and ``log mu`` are finite wavelet series over the
    interior index set at a single level; the coefficients saturate a
    fraction of the weighted bound ``2^{l(s+1/2)} l^2 |tau| <= bound`` (and
    ``2^{l(s+3/2)} l^2 |beta| <= bound``). The drift follows from the
    hierarchical identity and is supported in ``[A, B]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridfn import Grid
from .model import DiffusionParams, drift_from_mu
from .wavelets import WaveletBasis, build_basis, interior_index_set, series


@dataclass(frozen=True)
class TruthConfig:
    """Settings of the interior truth fixture.

    ``level=None`` selects the coarsest level of the interior index set.
    ``tau_pattern`` and ``beta_pattern`` are cycled over the shifts at that
    level and multiply the maximal admissible coefficient.
    """

    kind: str = "interior"
    s: float = 2.0
    bound: float = 600.0
    A: float = 0.1
    B: float = 0.9
    level: int | None = None
    tau_pattern: tuple[float, ...] = (0.8, -0.6)
    beta_pattern: tuple[float, ...] = (-0.7, 0.5)


def interior_truth(basis: WaveletBasis, cfg: TruthConfig = TruthConfig()) -> DiffusionParams:
    idx = interior_index_set(basis, cfg.A, cfg.B)
    level = idx.levels()[0] if cfg.level is None else cfg.level
    shifts = idx.at_level(level)
    if not shifts:
        raise ValueError(f"no interior wavelets at level {level}")
    rows = [basis.row(l, k) for l, k in shifts]
    tau_max = cfg.bound * 2.0 ** (-level * (cfg.s + 0.5)) / level**2
    beta_max = cfg.bound * 2.0 ** (-level * (cfg.s + 1.5)) / level**2
    tau = [tau_max * cfg.tau_pattern[i % len(cfg.tau_pattern)] for i in range(len(rows))]
    beta = [beta_max * cfg.beta_pattern[i % len(cfg.beta_pattern)] for i in range(len(rows))]
    log_inv_sigma2 = series(basis, rows, tau)
    log_mu = series(basis, rows, beta)
    sigma2 = log_inv_sigma2.map(lambda v: np.exp(-v))
    b = drift_from_mu(sigma2, log_mu)
    return DiffusionParams.from_coefficients(
        sigma2, b, name="interior", level=level, shifts=[k for _, k in shifts],
        tau=tau, beta=beta, bound=cfg.bound, s=cfg.s,
    )


def make_truth(cfg: TruthConfig = TruthConfig(), grid: Grid | None = None,
               basis: WaveletBasis | None = None) -> DiffusionParams:
    grid = grid or Grid()
    if cfg.kind == "trivial":
        return DiffusionParams.trivial(grid)
    if cfg.kind == "interior":
        return interior_truth(basis or build_basis(grid=grid), cfg)
    raise ValueError(f"unknown truth kind {cfg.kind!r}")
