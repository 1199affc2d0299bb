"""Named numerical checks with measured values and tolerances.

Each check returns a :class:`CheckResult`; none of them raises on a failed
comparison, so a report can list every outcome.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .bayes import (CoefficientState, LikelihoodError, LikelihoodEvaluator, PriorConfig,
                    effective_sample_size, mcmc_run, prior_model)
from .estimator import estimate_drift, estimate_from_eigen, estimate_sigma2
from .generator import (assemble_generator, centered_generator_apply, green_kernel,
                        hs_lipschitz_gap, info_distances, inverse_exp_lipschitz,
                        random_negative_definite, small_ball_rhs, spectral_pair,
                        transition_kernel)
from .gridfn import Grid, GridFn
from .model import DiffusionParams
from .simulate import euler_reflected, sample_chain
from .wavelets import build_basis


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: dict
    tolerance: dict
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        tols = ", ".join(f"{k}<{_fmt(v)}" for k, v in self.tolerance.items())
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {vals} ({tols})"


def _fmt(v) -> str:
    return f"{v:.4g}" if isinstance(v, float) else str(v)


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


def bump_drift_model(grid: Grid, height: float = 30.0) -> DiffusionParams:
    """Unit diffusion with a smooth compactly supported drift on ``(0.2, 0.8)``."""

    def bump(x):
        inside = (x > 0.2) & (x < 0.8)
        q = np.where(inside, (x - 0.2) * (0.8 - x), 1.0)
        return np.where(inside, height * np.exp(-1.0 / q), 0.0)

    return DiffusionParams.from_coefficients(grid.fn(1.0), grid.fn(bump), name="bump")


# ---------------------------------------------------------------------------
# generator and semigroup
# ---------------------------------------------------------------------------


def neumann_spectrum(m: int = 11, modes: int = 5, tol_value: float = 1e-3,
                     tol_function: float = 1e-3) -> CheckResult:
    """Eigenpairs of reflected Brownian motion against ``-k^2 pi^2/2`` and cosines."""
    g = Grid(m)
    L = assemble_generator(DiffusionParams.trivial(g))
    k = np.arange(1, modes + 1)
    exact = k**2 * np.pi**2 / 2
    rel = np.abs(L.eigvals[1:modes + 1] + exact) / exact
    fun_err = []
    for kk in k:
        v = L.eigvecs[:, kk]
        c = np.sqrt(2.0) * np.cos(kk * np.pi * g.x)
        sign = np.sign(v @ (c * L.pi))
        fun_err.append(float(np.max(np.abs(sign * v - c))))
    measured = {"eigenvalue_rel_error": float(rel.max()),
                "eigenfunction_sup_error": max(fun_err)}
    return CheckResult("neumann_spectrum",
                       measured["eigenvalue_rel_error"] < tol_value
                       and measured["eigenfunction_sup_error"] < tol_function,
                       measured, {"eigenvalue_rel_error": tol_value,
                                  "eigenfunction_sup_error": tol_function},
                       {"m": m, "rel_errors": rel.tolist(), "function_errors": fun_err})


def semigroup_eigenvalue(m: int = 10, delta: float = 0.1, tol_kappa: float = 1e-4,
                         tol_ck: float = 1e-6) -> CheckResult:
    """``kappa1 = exp(-delta pi^2/2)`` and the Chapman-Kolmogorov identity."""
    g = Grid(m)
    L = assemble_generator(DiffusionParams.trivial(g))
    kappa, _ = spectral_pair(L, delta)
    full = transition_kernel(L, delta).p
    half = transition_kernel(L, delta / 2).p
    composed = (half * g.weights[None, :]) @ half
    measured = {"kappa1": kappa,
                "kappa1_error": abs(kappa - float(np.exp(-delta * np.pi**2 / 2))),
                "chapman_kolmogorov_error": float(np.max(np.abs(composed - full)))}
    return CheckResult("semigroup_eigenvalue",
                       measured["kappa1_error"] < tol_kappa
                       and measured["chapman_kolmogorov_error"] < tol_ck,
                       measured, {"kappa1_error": tol_kappa,
                                  "chapman_kolmogorov_error": tol_ck}, {"m": m})


def green_identity(m: int = 10, tol: float = 1e-3) -> CheckResult:
    """``(L - mu0(L)) J f = f - int f dmu0`` on two models, five test functions."""
    g = Grid(m)
    tests = [lambda x, j=j: np.cos(j * np.pi * x) + 0.3 * np.sin(2 * j * x) for j in range(1, 6)]
    errors = {}
    for model in (DiffusionParams.trivial(g), bump_drift_model(g)):
        L = assemble_generator(model)
        mu0 = model.mu
        gk = green_kernel(model, mu0)
        worst = 0.0
        for func in tests:
            f = g.fn(func)
            lhs = centered_generator_apply(L, mu0, gk.apply(f)).values
            rhs = f.values - np.dot(f.values, mu0.values * g.weights)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        errors[model.meta["name"]] = worst
    err = max(errors.values())
    return CheckResult("green_identity", err < tol, {"sup_error": err},
                       {"sup_error": tol}, {"per_model": errors, "m": m})


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------


def population_exactness(m: int = 10, delta: float = 0.1, A: float = 0.1, B: float = 0.9,
                         tol: float = 1e-3) -> CheckResult:
    """Exact eigen-data of reflected Brownian motion through the plug-in formulas."""
    g = Grid(m)
    kappa = float(np.exp(-delta * np.pi**2 / 2))
    u1 = g.fn(lambda x: np.sqrt(2.0) * np.cos(np.pi * x))
    se = estimate_from_eigen(kappa, u1, g.fn(1.0))
    s2 = estimate_sigma2(se, delta, A, B)
    b = estimate_drift(se, delta, A, B)
    inside = (g.x >= A) & (g.x <= B)
    measured = {"sigma2_sup_error": float(np.max(np.abs(s2.values[inside] - 1.0))),
                "drift_sup_error": float(np.max(np.abs(b.values[inside])))}
    return CheckResult("population_exactness",
                       max(measured.values()) < tol, measured,
                       {"sigma2_sup_error": tol, "drift_sup_error": tol}, {"m": m})


# ---------------------------------------------------------------------------
# simulator
# ---------------------------------------------------------------------------


def binned_transition_matrix(p: DiffusionParams, delta: float, bins: int = 32) -> np.ndarray:
    """Row-normalized probabilities of moving from bin ``a`` to bin ``c``."""
    g = p.grid
    K = transition_kernel(assemble_generator(p), delta)
    W = _bin_weights(g, bins)
    joint = (W * p.mu.values) @ K.p @ W.T
    return joint / joint.sum(axis=1, keepdims=True)


def _bin_weights(g: Grid, bins: int) -> np.ndarray:
    """Trapezoid weights of each grid node within each of ``bins`` equal bins."""
    per = (g.M - 1) // bins
    if per * bins != g.M - 1:
        raise ValueError("bins must divide the number of grid cells")
    W = np.zeros((bins, g.M))
    for a in range(bins):
        lo = a * per
        W[a, lo:lo + per + 1] = g.h
        W[a, lo] = W[a, lo + per] = g.h / 2
    return W


def empirical_transition_matrix(values: np.ndarray, bins: int = 32) -> tuple[np.ndarray, np.ndarray]:
    idx = np.minimum((values * bins).astype(int), bins - 1)
    counts = np.zeros((bins, bins))
    np.add.at(counts, (idx[:-1], idx[1:]), 1.0)
    rows = counts.sum(axis=1, keepdims=True)
    return counts / np.maximum(rows, 1.0), rows[:, 0]


def row_tv(values: np.ndarray, oracle: np.ndarray) -> np.ndarray:
    emp, _ = empirical_transition_matrix(values, oracle.shape[0])
    return 0.5 * np.abs(emp - oracle).sum(axis=1)


def marginal_chi_square(values: np.ndarray, mu: GridFn, bins: int = 32) -> float:
    """p-value of the chi-square test of the binned marginal against ``mu``."""
    W = _bin_weights(mu.grid, bins)
    expected = W @ mu.values
    expected = expected / expected.sum() * len(values)
    idx = np.minimum((values * bins).astype(int), bins - 1)
    observed = np.bincount(idx, minlength=bins)
    return float(stats.chisquare(observed, expected).pvalue)


def simulator_consistency(p: DiffusionParams, rng: np.random.Generator, n: int = 100_000,
                          delta: float = 0.1, fine_step: float = 1e-3, bins: int = 32,
                          tol_chain: float = 0.05, tol_euler: float = 0.08,
                          min_pvalue: float = 1e-3) -> CheckResult:
    """Binned transitions of both samplers against the discretized semigroup."""
    oracle = binned_transition_matrix(p, delta, bins)
    K = transition_kernel(assemble_generator(p), delta)
    chain = sample_chain(K, p.mu, n, rng)
    euler = euler_reflected(p, delta, n, fine_step, rng)
    tv_chain = row_tv(chain.values, oracle)
    tv_euler = row_tv(euler.values, oracle)
    pval = marginal_chi_square(chain.values, p.mu, bins)
    measured = {"chain_max_row_tv": float(tv_chain.max()),
                "euler_max_row_tv": float(tv_euler.max()),
                "chain_marginal_pvalue": pval}
    passed = (measured["chain_max_row_tv"] < tol_chain
              and measured["euler_max_row_tv"] < tol_euler and pval > min_pvalue)
    return CheckResult("simulator_consistency", passed, measured,
                       {"chain_max_row_tv": tol_chain, "euler_max_row_tv": tol_euler,
                        "chain_marginal_pvalue(>)": min_pvalue},
                       {"chain_mean_row_tv": float(tv_chain.mean()),
                        "euler_mean_row_tv": float(tv_euler.mean()), "n": n})


def row_tv_noise(oracle: np.ndarray, row_counts: np.ndarray, rng: np.random.Generator,
                 replicates: int = 200) -> np.ndarray:
    """Max-over-rows TV of multinomial draws from the oracle itself."""
    out = np.empty(replicates)
    for r in range(replicates):
        worst = 0.0
        for a, cnt in enumerate(row_counts.astype(int)):
            if cnt == 0:
                continue
            draw = rng.multinomial(cnt, oracle[a]) / cnt
            worst = max(worst, 0.5 * np.abs(draw - oracle[a]).sum())
        out[r] = worst
    return out


# ---------------------------------------------------------------------------
# information distances and functional calculus
# ---------------------------------------------------------------------------


def small_ball_link(m: int = 10, level: int = 3, shift: int = 3,
                    ts=(1e-2, 1e-3, 1e-4), delta: float = 0.1,
                    tol_spread: float = 0.5) -> CheckResult:
    """``KL / small_ball_rhs^2`` along ``sigma2_t = exp(t psi_{level, shift})``.

    The spread is ``max/min - 1`` of the ratio over ``ts``.
    """
    g = Grid(m)
    basis = build_basis(grid=g)
    psi = basis.function(level, shift)
    p0 = DiffusionParams.trivial(g)
    ratios, kls, rhs = [], [], []
    for t in ts:
        p = DiffusionParams.from_coefficients((t * psi).map(np.exp), g.fn(0.0))
        kl = info_distances(p0, p, delta).kl
        r = small_ball_rhs(p0, p, basis)
        kls.append(kl)
        rhs.append(r)
        ratios.append(kl / r**2)
    spread = max(ratios) / min(ratios) - 1.0
    return CheckResult("small_ball_link", spread < tol_spread,
                       {"ratio_spread": float(spread), "ratio_max": float(max(ratios))},
                       {"ratio_spread": tol_spread},
                       {"t": list(ts), "kl": kls, "rhs": rhs, "ratios": ratios})


def hs_lipschitz(rng: np.random.Generator, pairs: int = 20, dim: int = 12,
                 delta: float = 0.1, c1: float = 0.5, c2: float = 50.0) -> CheckResult:
    """``|f(N) - f(M)|_HS <= Lambda |N - M|_HS`` for ``f(z) = exp(delta/z)``."""
    lam = inverse_exp_lipschitz(delta, c1, c2)
    violations = 0
    worst = 0.0
    for _ in range(pairs):
        N = random_negative_definite(dim, c1, c2, rng)
        Mm = random_negative_definite(dim, c1, c2, rng)
        lhs, diff = hs_lipschitz_gap(N, Mm, delta)
        worst = max(worst, lhs / (lam * diff))
        violations += int(lhs > lam * diff * (1 + 1e-12))
    return CheckResult("hs_lipschitz", violations == 0,
                       {"violations": violations, "max_ratio_to_bound": worst},
                       {"violations": 1}, {"Lambda": lam, "c1": c1, "c2": c2, "delta": delta})


# ---------------------------------------------------------------------------
# Metropolis sampler against a quadrature posterior
# ---------------------------------------------------------------------------


def toy_posterior_grid(cfg, path, bins: int = 50, refine: int = 4,
                       window: float = 30.0) -> tuple[np.ndarray, np.ndarray]:
    """Bin masses of a two-coefficient posterior by dense quadrature.

    The log posterior is tabulated at bin centres; bins within ``window`` of
    the maximum are then integrated with a ``refine x refine`` midpoint rule.
    Returns the bin edges and the normalized mass matrix.
    """
    model = prior_model(cfg)
    if model.dims[0] + model.dims[1] != 2:
        raise ValueError(f"toy posterior needs exactly two coefficients, got {model.dims}")
    a = model.dims[0]
    ev = LikelihoodEvaluator(path, model.grid)

    def loglik(v):
        v = np.asarray(v, dtype=float)
        try:
            return ev(model.params(CoefficientState(v[:a], v[a:])))
        except LikelihoodError:
            return -np.inf

    edges = np.linspace(-cfg.B_tilde, cfg.B_tilde, bins + 1)
    width = edges[1] - edges[0]
    centres = edges[:-1] + width / 2
    coarse = np.array([[loglik((c1, c2)) for c2 in centres] for c1 in centres])
    top = coarse.max()
    sub = (np.arange(refine) + 0.5) / refine
    mass = np.zeros((bins, bins))
    for i, j in np.argwhere(coarse > top - window):
        vals = [loglik((edges[i] + width * p, edges[j] + width * q)) for p in sub for q in sub]
        mass[i, j] = np.mean(np.exp(np.array(vals) - top))
    return edges, mass / mass.sum()


def mcmc_toy_validity(rng: np.random.Generator, n: int = 20_000, iterations: int = 100_000,
                      B_tilde: float = 12_000.0, truth_u=(480.0, -360.0), m: int = 7,
                      bins: int = 50, tol: float = 0.05) -> CheckResult:
    """Binned total variation between Metropolis draws and the quadrature posterior.

    The toy keeps the two level-4 coefficients of ``log sigma^-2`` and drops
    the drift series, so the posterior lives on a square.
    """
    cfg = PriorConfig(B_tilde=B_tilde, L_n=4, L_bar_n=3, m=m)
    model = prior_model(cfg)
    truth = model.params(CoefficientState(np.asarray(truth_u), np.zeros(model.dims[1])))
    data_rng, chain_rng = rng.spawn(2)
    K = transition_kernel(assemble_generator(truth), 0.1)
    path = sample_chain(K, truth.mu, n, data_rng)
    edges, mass = toy_posterior_grid(cfg, path, bins)
    chain = mcmc_run(cfg, path, iterations, 0.1, chain_rng, thinning=1, burn_in=0.1)
    kept = chain.kept()
    hist, _, _ = np.histogram2d(kept[:, 0], kept[:, 1], bins=[edges, edges])
    hist /= hist.sum()
    tv = 0.5 * float(np.abs(hist - mass).sum())
    return CheckResult("mcmc_toy_validity", tv < tol, {"binned_tv": tv}, {"binned_tv": tol},
                       {"acceptance": chain.acceptance_rates.tolist(),
                        "ess": [effective_sample_size(kept[:, k]) for k in range(2)],
                        "kept": len(kept), "n": n, "iterations": iterations})


CHECKS = {
    "neumann_spectrum": lambda cfg, rng: neumann_spectrum(cfg.get("m", 11)),
    "semigroup_eigenvalue": lambda cfg, rng: semigroup_eigenvalue(cfg.get("m", 10)),
    "green_identity": lambda cfg, rng: green_identity(cfg.get("m", 10)),
    "population_exactness": lambda cfg, rng: population_exactness(cfg.get("m", 10)),
    "small_ball_link": lambda cfg, rng: small_ball_link(cfg.get("m", 10)),
    "hs_lipschitz": lambda cfg, rng: hs_lipschitz(rng),
}
