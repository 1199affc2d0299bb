"""Random wavelet series prior, exact surrogate likelihood and Metropolis.

The prior draws normalized coefficients ``u`` and ``u_bar`` i.i.d. from a
density ``phi`` on ``[-B_tilde, B_tilde]`` and sets

    log sigma^-2 = sum_l 2^{-l(s+1/2)} l^-2 sum_k u_lk psi_lk
    H            = sum_l 2^{-l(s+3/2)} l^-2 sum_k u_bar_lk psi_lk
    b            = ((sigma2)' + sigma2 H') / 2,

over the interior index set, so that the invariant density is
``exp(H) / int exp(H)``. The likelihood of a path is the stationary density
of the first observation times the product of the discretized transition
densities, interpolated bilinearly off the grid.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import erf

from .estimator import optimal_eps
from .generator import assemble_generator, generator_stencil, transition_kernel
from .gridfn import Grid, GridFn, l2_distance
from .model import DiffusionParams, drift_from_mu, invariant_density
from .simulate import SamplePath
from .wavelets import IndexSet, WaveletBasis, build_basis, interior_index_set

DENSITY_FLOOR = 1e-12
# semigroup modes with Delta * lambda below this contribute < exp(-50)
MODE_CUTOFF = -50.0
STALL_ITERATIONS = 1000


class LikelihoodError(ValueError):
    """A transition density at an observed pair is not positive."""


# ---------------------------------------------------------------------------
# prior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriorConfig:
    """Hierarchical prior on ``(sigma2, b)``.

    Parameters
    ----------
    s : float
        Smoothness index entering the coefficient weights.
    B : float
        Bound on the normalized truth coefficients.
    B_tilde : float
        Support bound of the coefficient density, ``B_tilde >= B``.
    density_kind : {"uniform", "truncated-normal"}
        Coefficient density ``phi`` (the same for ``u`` and ``u_bar``).
    normal_scale : float
        Standard deviation of the untruncated normal.
    L_n, L_bar_n : int
        Finest levels of the ``u`` and ``u_bar`` series. A level below the
        coarsest interior level gives an empty series.
    A, B_int : float
        Interior interval carrying the wavelets.
    N, J0, m : int
        Daubechies order, coarsest level of the basis and grid exponent of
        the surrogate model.
    """

    s: float = 2.0
    B: float = 600.0
    B_tilde: float = 3000.0
    density_kind: str = "uniform"
    normal_scale: float = 1.0
    L_n: int = 4
    L_bar_n: int = 4
    A: float = 0.1
    B_int: float = 0.9
    N: int = 6
    J0: int = 2
    m: int = 8

    def __post_init__(self):
        if self.density_kind not in ("uniform", "truncated-normal"):
            raise ValueError(f"unknown density kind {self.density_kind!r}")
        if not (0 < self.B <= self.B_tilde):
            raise ValueError("need 0 < B <= B_tilde")
        if self.normal_scale <= 0:
            raise ValueError("normal_scale must be positive")
        if self.zeta <= 0:
            raise ValueError("coefficient density vanishes on [-B, B]")

    @property
    def log_normalizer(self) -> float:
        """Log of the normalizing constant of ``phi`` on ``[-B_tilde, B_tilde]``."""
        if self.density_kind == "uniform":
            return float(np.log(2.0 * self.B_tilde))
        c = self.normal_scale
        mass = erf(self.B_tilde / (np.sqrt(2.0) * c))
        return float(np.log(np.sqrt(2.0 * np.pi) * c * mass))

    @property
    def zeta(self) -> float:
        """Infimum of ``phi`` over ``[-B, B]``."""
        if self.density_kind == "uniform":
            return 1.0 / (2.0 * self.B_tilde)
        return float(np.exp(-0.5 * (self.B / self.normal_scale) ** 2 - self.log_normalizer))

    def with_levels(self, L_n: int, L_bar_n: int) -> "PriorConfig":
        return PriorConfig(**{**asdict(self), "L_n": L_n, "L_bar_n": L_bar_n})


def truncation_level(n: int, s: float, coarsest: int) -> int:
    """Smallest ``l`` with ``2^{-l(s+1)} <= eps_n``, at least ``coarsest``."""
    eps = optimal_eps(n, s)
    level = int(np.ceil(np.log2(1.0 / eps) / (s + 1.0) - 1e-12))
    return max(level, coarsest)


def log_phi(x: np.ndarray, cfg: PriorConfig) -> np.ndarray:
    """Log coefficient density, ``-inf`` outside the support."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) <= cfg.B_tilde
    if cfg.density_kind == "uniform":
        vals = np.full(x.shape, -cfg.log_normalizer)
    else:
        vals = -0.5 * (x / cfg.normal_scale) ** 2 - cfg.log_normalizer
    return np.where(inside, vals, -np.inf)


def draw_phi(cfg: PriorConfig, rng: np.random.Generator, size) -> np.ndarray:
    """I.i.d. draws from the coefficient density."""
    if cfg.density_kind == "uniform":
        return rng.uniform(-cfg.B_tilde, cfg.B_tilde, size)
    out = np.empty(size)
    flat = out.reshape(-1)
    filled = 0
    while filled < flat.size:
        z = rng.normal(0.0, cfg.normal_scale, flat.size - filled)
        z = z[np.abs(z) <= cfg.B_tilde]
        flat[filled:filled + len(z)] = z
        filled += len(z)
    return out


@dataclass(frozen=True, eq=False)
class CoefficientState:
    """Normalized coefficients of ``log sigma^-2`` (``u``) and ``H`` (``u_bar``)."""

    u: np.ndarray
    u_bar: np.ndarray

    def __post_init__(self):
        for name in ("u", "u_bar"):
            v = np.array(getattr(self, name), dtype=float).reshape(-1)
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.u, self.u_bar])

    def within(self, bound: float) -> bool:
        return bool(np.all(np.abs(self.vector) <= bound))


INDEX_GRID_M = 10


@lru_cache(maxsize=16)
def reference_index_set(N: int, J0: int, A: float, B: float) -> IndexSet:
    """Interior index set from supports tabulated on the reference grid.

    Fixing the grid keeps the set, and hence the state dimension, the same
    for the coarse likelihood grid and the fine diagnostic grid.
    """
    return interior_index_set(build_basis(N, J0, grid=Grid(INDEX_GRID_M)), A, B)


class PriorModel:
    """Map from coefficient states to parameter pairs on a fixed grid."""

    def __init__(self, cfg: PriorConfig, grid: Grid | None = None,
                 basis: WaveletBasis | None = None):
        grid = grid or Grid(cfg.m)
        self.cfg = cfg
        self.grid = grid
        self.basis = basis or build_basis(cfg.N, cfg.J0, grid=grid)
        self.index_set: IndexSet = reference_index_set(cfg.N, cfg.J0, cfg.A, cfg.B_int)
        self.u_index = [(l, k) for l, k in self.index_set.indices if l <= cfg.L_n]
        self.u_bar_index = [(l, k) for l, k in self.index_set.indices if l <= cfg.L_bar_n]
        s = cfg.s
        self.u_weights = np.array([2.0 ** (-l * (s + 0.5)) / l**2 for l, _ in self.u_index])
        self.u_bar_weights = np.array([2.0 ** (-l * (s + 1.5)) / l**2 for l, _ in self.u_bar_index])
        rows = lambda idx: [self.basis.row(l, k) for l, k in idx]
        self.u_table = self.basis.table[rows(self.u_index)].reshape(len(self.u_index), grid.M)
        self.u_bar_table = self.basis.table[rows(self.u_bar_index)].reshape(
            len(self.u_bar_index), grid.M)

    @property
    def dims(self) -> tuple[int, int]:
        return len(self.u_index), len(self.u_bar_index)

    @property
    def levels(self) -> np.ndarray:
        """Wavelet level of each entry of ``CoefficientState.vector``."""
        return np.array([l for l, _ in self.u_index + self.u_bar_index], dtype=int)

    def zero_state(self) -> CoefficientState:
        a, b = self.dims
        return CoefficientState(np.zeros(a), np.zeros(b))

    def log_inv_sigma2(self, state: CoefficientState) -> GridFn:
        return GridFn(self.grid, (self.u_weights * state.u) @ self.u_table
                      if len(state.u) else np.zeros(self.grid.M))

    def log_mu(self, state: CoefficientState) -> GridFn:
        return GridFn(self.grid, (self.u_bar_weights * state.u_bar) @ self.u_bar_table
                      if len(state.u_bar) else np.zeros(self.grid.M))

    def params(self, state: CoefficientState) -> DiffusionParams:
        """Parameter pair of a state.

        The invariant density is set to the normalized ``exp(H)``; the
        density induced by ``(sigma2, b)`` agrees with it up to the
        discretization error, which is recorded in ``meta``.
        """
        if state.u.shape != (self.dims[0],) or state.u_bar.shape != (self.dims[1],):
            raise ValueError(f"state dimensions {state.u.shape}, {state.u_bar.shape} "
                             f"do not match the model {self.dims}")
        sigma2 = self.log_inv_sigma2(state).map(lambda v: np.exp(-v))
        H = self.log_mu(state)
        b = drift_from_mu(sigma2, H)
        induced, G = invariant_density(sigma2, b)
        e = np.exp(H.values - H.values.max())
        mu = GridFn(self.grid, e / np.dot(e, self.grid.weights))
        gap = float(np.max(np.abs(induced.values - mu.values)))
        return DiffusionParams(sigma2, b, mu, G, {"name": "prior", "mu_consistency": gap})


@lru_cache(maxsize=16)
def prior_model(cfg: PriorConfig, m: int | None = None) -> PriorModel:
    """Cached :class:`PriorModel` on the grid with exponent ``m``."""
    return PriorModel(cfg, Grid(cfg.m if m is None else m))


def sample_prior(cfg: PriorConfig, rng: np.random.Generator,
                 model: PriorModel | None = None) -> tuple[CoefficientState, DiffusionParams]:
    """One prior draw and its parameter pair."""
    model = model or prior_model(cfg)
    a, b = model.dims
    state = CoefficientState(draw_phi(cfg, rng, a), draw_phi(cfg, rng, b))
    return state, model.params(state)


def log_prior_density(state: CoefficientState, cfg: PriorConfig) -> float:
    """Sum of log coefficient densities; ``-inf`` outside the support."""
    return float(np.sum(log_phi(state.vector, cfg)))


# ---------------------------------------------------------------------------
# likelihood
# ---------------------------------------------------------------------------


def log_likelihood(p: DiffusionParams, path: SamplePath, delta: float | None = None) -> float:
    """``log mu(X_0) + sum log p(Delta, X_{i-1}, X_i)`` with bilinear interpolation."""
    delta = path.delta if delta is None else delta
    X = path.values
    mu0 = float(p.mu(X[0]))
    if mu0 <= DENSITY_FLOOR:
        raise LikelihoodError(f"invariant density {mu0:.3e} at X_0 = {X[0]:.6f}")
    total = np.log(mu0)
    if path.n == 0:
        return float(total)
    K = transition_kernel(assemble_generator(p), delta)
    dens = K.density(X[:-1], X[1:])
    _check_positive(dens, X)
    return float(total + np.sum(np.log(dens)))


def _check_positive(dens: np.ndarray, X: np.ndarray) -> None:
    bad = dens <= DENSITY_FLOOR
    if np.any(bad):
        i = int(np.argmax(bad))
        raise LikelihoodError(
            f"transition density {dens[i]:.3e} at increment {i + 1}: "
            f"({X[i]:.6f} -> {X[i + 1]:.6f})"
        )


class LikelihoodEvaluator:
    """Repeated likelihood evaluation for one path on one grid.

    Grid locations of the observations are computed once and only the
    semigroup modes with ``Delta * lambda > MODE_CUTOFF`` are kept.
    """

    def __init__(self, path: SamplePath, grid: Grid, delta: float | None = None):
        self.path = path
        self.grid = grid
        self.delta = path.delta if delta is None else delta
        X = path.values
        self.x0 = float(X[0])
        self.ix, self.tx = grid.locate(X[:-1])
        self.iy, self.ty = grid.locate(X[1:])
        self.evaluations = 0

    def kernel_entries(self, p: DiffusionParams) -> np.ndarray:
        lower, diag, upper, pi = generator_stencil(p)
        lam, Q = eigh_tridiagonal(diag, np.sqrt(upper * lower), select="v",
                                  select_range=(MODE_CUTOFF / self.delta, 1.0))
        V = Q / np.sqrt(pi)[:, None]
        P = ((V * np.exp(self.delta * lam)) @ (V.T * p.mu.values)).ravel()
        M = self.grid.M
        a, c, tx, ty = self.ix * M, self.iy, self.tx, self.ty
        return ((1 - tx) * ((1 - ty) * P[a + c] + ty * P[a + c + 1])
                + tx * ((1 - ty) * P[a + M + c] + ty * P[a + M + c + 1]))

    def __call__(self, p: DiffusionParams) -> float:
        if p.grid != self.grid:
            raise ValueError("parameters live on a different grid")
        self.evaluations += 1
        mu0 = float(p.mu(self.x0))
        if mu0 <= DENSITY_FLOOR:
            raise LikelihoodError(f"invariant density {mu0:.3e} at X_0 = {self.x0:.6f}")
        if self.path.n == 0:
            return float(np.log(mu0))
        dens = self.kernel_entries(p)
        _check_positive(dens, self.path.values)
        return float(np.log(mu0) + np.sum(np.log(dens)))


# ---------------------------------------------------------------------------
# Metropolis sampler
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Chain:
    """Thinned Metropolis output.

    ``states`` has one row per stored state (``u`` entries first, then
    ``u_bar``); ``burn_in`` counts stored states to discard.
    """

    cfg: PriorConfig
    states: np.ndarray
    log_posts: np.ndarray
    acceptance_rates: np.ndarray
    proposal_scales: np.ndarray
    seed: int | None
    thinning: int
    burn_in: int
    n_iters: int
    n_data: int
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.states) != len(self.log_posts):
            raise ValueError("states and log posteriors differ in length")
        if np.any((self.acceptance_rates < 0) | (self.acceptance_rates > 1)):
            raise ValueError("acceptance rates outside [0, 1]")

    @property
    def dims(self) -> tuple[int, int]:
        model = prior_model(self.cfg)
        return model.dims

    def state(self, i: int) -> CoefficientState:
        a, _ = self.dims
        return CoefficientState(self.states[i, :a], self.states[i, a:])

    def kept(self) -> np.ndarray:
        """Stored states after burn-in."""
        return self.states[self.burn_in:]

    def save(self, path: str | Path) -> None:
        """CSV of stored states plus a JSON manifest."""
        path = Path(path)
        a, b = self.dims
        header = ",".join(["log_post"] + [f"u{i}" for i in range(a)]
                          + [f"ubar{i}" for i in range(b)])
        np.savetxt(path, np.column_stack([self.log_posts, self.states]), delimiter=",",
                   header=header, comments="", fmt="%.17g")
        manifest = {
            "prior": asdict(self.cfg), "seed": self.seed, "thinning": self.thinning,
            "burn_in": self.burn_in, "n_iters": self.n_iters, "n_data": self.n_data,
            "acceptance_rates": self.acceptance_rates.tolist(),
            "proposal_scales": self.proposal_scales.tolist(), "warnings": self.warnings,
        }
        path.with_suffix(".json").write_text(json.dumps(manifest, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "Chain":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        man = json.loads(path.with_suffix(".json").read_text())
        return cls(PriorConfig(**man["prior"]), data[:, 1:], data[:, 0],
                   np.array(man["acceptance_rates"]), np.array(man["proposal_scales"]),
                   man["seed"], man["thinning"], man["burn_in"], man["n_iters"],
                   man["n_data"], man["warnings"])


def metropolis_log_ratio(log_post_current: float, log_post_proposal: float) -> float:
    """Log acceptance ratio of a symmetric proposal."""
    if log_post_proposal == -np.inf:
        return -np.inf
    return min(0.0, log_post_proposal - log_post_current)


def reflect(x: np.ndarray, bound: float) -> np.ndarray:
    """Fold ``x`` into ``[-bound, bound]`` by repeated reflection."""
    period = 4.0 * bound
    y = np.mod(x + bound, period)
    return np.where(y > 2.0 * bound, period - y, y) - bound


def mcmc_run(cfg: PriorConfig, path: SamplePath | None, n_iters: int,
             proposal_scale: float, rng: np.random.Generator, *,
             thinning: int = 10, burn_in: float = 0.2, adapt: bool = True,
             initial: CoefficientState | None = None, seed: int | None = None,
             target_acceptance: float = 0.3) -> Chain:
    """Componentwise random-walk Metropolis over the coefficients.

    Each iteration proposes every coordinate in turn with a Gaussian step of
    standard deviation ``scale_i * B_tilde`` (the coefficients are already
    normalized by the prior level weights) and reflects at ``+-B_tilde``.
    The scales start at ``proposal_scale``; with ``adapt`` they are tuned
    toward ``target_acceptance`` during the burn-in only, so the stored
    post-burn-in states come from a fixed Markov kernel. ``path=None``
    targets the prior.

    Parameters
    ----------
    cfg : PriorConfig
    path : SamplePath or None
    n_iters : int
        Number of sweeps over all coordinates.
    proposal_scale : float
        Initial relative step size.
    rng : numpy.random.Generator
    thinning : int
        Store every ``thinning``-th state.
    burn_in : float
        Fraction of iterations discarded by the diagnostics.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    if proposal_scale <= 0 or thinning < 1 or not (0 <= burn_in < 1):
        raise ValueError("invalid sampler settings")
    model = prior_model(cfg)
    loglik = LikelihoodEvaluator(path, model.grid) if path is not None else (lambda p: 0.0)
    if initial is None:
        initial, _ = sample_prior(cfg, rng, model)
    a, b = model.dims
    x = initial.vector.copy()
    dim = len(x)
    split = lambda v: CoefficientState(v[:a], v[a:])

    def log_post(v):
        lp = float(np.sum(log_phi(v, cfg)))
        if lp == -np.inf:
            return -np.inf
        return lp + loglik(model.params(split(v)))

    current = log_post(x)
    if not np.isfinite(current):
        raise ValueError("initial state has zero posterior density")
    scales = np.full(dim, float(proposal_scale))
    burn_iters = int(burn_in * n_iters)
    accepted = np.zeros(dim)
    proposed = np.zeros(dim)
    window_acc = np.zeros(dim)
    stored, posts = [], []
    notes = []
    stall = 0
    for it in range(n_iters):
        any_accept = False
        for i in range(dim):
            prop = x.copy()
            prop[i] = reflect(x[i] + scales[i] * cfg.B_tilde * rng.standard_normal(),
                              cfg.B_tilde)
            try:
                cand = log_post(prop)
            except LikelihoodError:
                cand = -np.inf
            if np.log(rng.random()) < metropolis_log_ratio(current, cand):
                x, current = prop, cand
                any_accept = True
                window_acc[i] += 1
                if it >= burn_iters:
                    accepted[i] += 1
            if it >= burn_iters:
                proposed[i] += 1
        stall = 0 if any_accept else stall + 1
        if stall == STALL_ITERATIONS:
            msg = f"no proposal accepted in {STALL_ITERATIONS} iterations (at {it + 1})"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        if adapt and it < burn_iters and (it + 1) % 50 == 0:
            rate = window_acc / 50.0
            scales *= np.exp(rate - target_acceptance)
            scales = np.clip(scales, 1e-6, 2.0)
            window_acc[:] = 0
        if (it + 1) % thinning == 0:
            stored.append(x.copy())
            posts.append(current)
    rates = np.divide(accepted, proposed, out=np.zeros(dim), where=proposed > 0)
    states = np.array(stored).reshape(-1, dim)
    return Chain(cfg, states, np.array(posts), rates, scales, seed, thinning,
                 burn_iters // thinning, n_iters, 0 if path is None else path.n, notes)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def effective_sample_size(x: np.ndarray) -> float:
    """Initial-monotone-sequence estimate of the effective sample size."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4 or np.var(x) == 0:
        return float(n)
    z = x - x.mean()
    f = np.fft.rfft(z, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * np.var(x))
    pairs = acf[: n - 1: 2][: (n - 1) // 2] + acf[1:n:2][: (n - 1) // 2]
    total = 0.0
    prev = np.inf
    for g in pairs:
        if g <= 0:
            break
        g = min(g, prev)
        total += g
        prev = g
    tau = max(2.0 * total - 1.0, 1.0 / n)
    return float(min(n / tau, n))


def contraction_rates(n: int, s: float) -> tuple[float, float]:
    """``(n eps_n^3, n^2 eps_n^5)`` for the diffusion coefficient and drift."""
    eps = optimal_eps(n, s)
    return n * eps**3, n**2 * eps**5


def _as_chains(chains) -> list[Chain]:
    return [chains] if isinstance(chains, Chain) else list(chains)


def draw_distances(chains, truth: DiffusionParams, A: float = 0.1,
                   B: float = 0.9) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-chain ``L^2([A, B])`` distances of the kept draws to the truth."""
    out_s, out_b = [], []
    for ch in _as_chains(chains):
        model = prior_model(ch.cfg, truth.grid.m)
        a, _ = model.dims
        ds, db = [], []
        for v in ch.kept():
            p = model.params(CoefficientState(v[:a], v[a:]))
            ds.append(l2_distance(p.sigma2, truth.sigma2, A, B))
            db.append(l2_distance(p.b, truth.b, A, B))
        out_s.append(np.array(ds))
        out_b.append(np.array(db))
    return out_s, out_b


QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
M_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)


def posterior_diagnostics(chains, truth: DiffusionParams, n: int, s: float = 2.0,
                          A: float = 0.1, B: float = 0.9,
                          M_grid=M_GRID) -> dict:
    """Distances, quantiles, exceedance fractions and effective sample sizes.

    ``chains`` is a :class:`Chain` or a sequence of chains sharing a prior.
    """
    chains = _as_chains(chains)
    if sum(len(ch.kept()) for ch in chains) < 100:
        raise ValueError("need at least 100 post-burn-in states")
    ds, db = draw_distances(chains, truth, A, B)
    all_s, all_b = np.concatenate(ds), np.concatenate(db)
    delta_n, delta_n_b = contraction_rates(max(n, 1), s)
    q = lambda v: {f"{p:g}": float(np.quantile(v, p)) for p in QUANTILES}
    return {
        "n": n,
        "delta_n": delta_n,
        "delta_n_drift": delta_n_b,
        "sigma2_distances": all_s.tolist(),
        "drift_distances": all_b.tolist(),
        "sigma2_quantiles": q(all_s),
        "drift_quantiles": q(all_b),
        "sigma2_median": float(np.median(all_s)),
        "drift_median": float(np.median(all_b)),
        "exceedance": [
            {"M": float(M),
             "sigma2": float(np.mean(all_s > M * delta_n)),
             "drift": float(np.mean(all_b > M * delta_n_b))}
            for M in M_grid
        ],
        "ess_sigma2": [effective_sample_size(d) for d in ds],
        "ess_drift": [effective_sample_size(d) for d in db],
        "acceptance_rates": [ch.acceptance_rates.tolist() for ch in chains],
    }


def prior_distance_sample(cfg: PriorConfig, truth: DiffusionParams, draws: int,
                          rng: np.random.Generator, A: float = 0.1,
                          B: float = 0.9) -> tuple[np.ndarray, np.ndarray]:
    """Direct prior Monte Carlo of the ``sigma2`` and drift distances."""
    model = prior_model(cfg, truth.grid.m)
    ds = np.empty(draws)
    db = np.empty(draws)
    for i in range(draws):
        _, p = sample_prior(cfg, rng, model)
        ds[i] = l2_distance(p.sigma2, truth.sigma2, A, B)
        db[i] = l2_distance(p.b, truth.b, A, B)
    return ds, db


def state_from_params_meta(truth: DiffusionParams, cfg: PriorConfig) -> CoefficientState:
    """Coefficient state reproducing an interior fixture truth.

    Uses the ``tau``/``beta`` entries recorded by the fixture; coefficients
    outside the prior's index set must be zero.
    """
    model = prior_model(cfg, truth.grid.m)
    level = truth.meta["level"]
    s = truth.meta["s"]
    u = dict(zip(truth.meta["shifts"], truth.meta["tau"]))
    ub = dict(zip(truth.meta["shifts"], truth.meta["beta"]))
    tau_w = 2.0 ** (-level * (s + 0.5)) / level**2
    beta_w = 2.0 ** (-level * (s + 1.5)) / level**2
    uv = np.array([u.get(k, 0.0) / tau_w if l == level else 0.0 for l, k in model.u_index])
    ubv = np.array([ub.get(k, 0.0) / beta_w if l == level else 0.0
                    for l, k in model.u_bar_index])
    return CoefficientState(uv, ubv)
