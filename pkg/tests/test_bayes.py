import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad

from diffpost.bayes import (Chain, CoefficientState, LikelihoodError, LikelihoodEvaluator,
                            PriorConfig, contraction_rates, draw_phi, effective_sample_size,
                            log_likelihood, log_phi, log_prior_density, mcmc_run,
                            metropolis_log_ratio, posterior_diagnostics, prior_distance_sample,
                            prior_model, reflect, sample_prior, state_from_params_meta,
                            truncation_level)
from diffpost.estimator import optimal_eps
from diffpost.fixtures import TruthConfig, make_truth
from diffpost.generator import (assemble_generator, info_distances, small_ball_rhs,
                                transition_kernel)
from diffpost.gridfn import Grid, GridFn, l2_distance
from diffpost.model import DiffusionParams
from diffpost.simulate import SamplePath, sample_chains

DELTA = 0.1


@pytest.fixture(scope="module")
def cfg():
    return PriorConfig()


@pytest.fixture(scope="module")
def model(cfg):
    return prior_model(cfg)


@pytest.fixture(scope="module")
def prior_chain(cfg):
    # prior target: no data
    return mcmc_run(cfg, None, 13_000, 0.5, np.random.default_rng(0), thinning=1, burn_in=0.1)


def test_config_validation():
    with pytest.raises(ValueError):
        PriorConfig(B=10.0, B_tilde=5.0)
    with pytest.raises(ValueError):
        PriorConfig(density_kind="laplace")
    assert PriorConfig().zeta == pytest.approx(1 / 6000)


@pytest.mark.parametrize("kind", ["uniform", "truncated-normal"])
def test_density_integrates_to_one(kind):
    cfg = PriorConfig(B=2.0, B_tilde=3.0, density_kind=kind, normal_scale=1.5)
    mass = quad(lambda x: np.exp(log_phi(np.array(x), cfg)), -cfg.B_tilde, cfg.B_tilde,
                epsabs=1e-13, epsrel=1e-13)[0]
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_zero_state_gives_trivial_params(model):
    p = model.params(model.zero_state())
    np.testing.assert_allclose(p.sigma2.values, 1.0, atol=1e-14)
    np.testing.assert_allclose(p.b.values, 0.0, atol=1e-14)
    np.testing.assert_allclose(p.mu.values, 1.0, atol=1e-12)


def test_prior_dimensions_follow_truncation(cfg):
    assert prior_model(cfg).dims == (2, 2)
    assert prior_model(cfg.with_levels(5, 3)).dims[1] == 0
    assert prior_model(cfg.with_levels(5, 4)).dims[0] > 2


def test_uniform_coefficient_marginal(cfg, model):
    rng = np.random.default_rng(1)
    first = np.array([sample_prior(cfg, rng, model)[0].u[0] for _ in range(10_000)])
    assert stats.kstest(first, stats.uniform(-cfg.B_tilde, 2 * cfg.B_tilde).cdf).statistic < 0.02


def test_truncated_normal_draws_respect_support():
    cfg = PriorConfig(B=1.0, B_tilde=1.5, density_kind="truncated-normal", normal_scale=2.0)
    x = draw_phi(cfg, np.random.default_rng(2), 20_000)
    assert np.all(np.abs(x) <= 1.5)
    target = stats.truncnorm(-1.5 / 2.0, 1.5 / 2.0, scale=2.0)
    assert stats.kstest(x, target.cdf).statistic < 0.02


def test_prior_draws_respect_bounds(cfg, model):
    rng = np.random.default_rng(3)
    for _ in range(50):
        state, p = sample_prior(cfg, rng, model)
        assert state.within(cfg.B_tilde)
        assert np.all(p.sigma2.values > 0)


def test_mu_consistency_is_second_order(cfg, model):
    # gap between the induced invariant density and exp(H)/int exp(H)
    rng = np.random.default_rng(3)
    states = [sample_prior(cfg, rng, model)[0] for _ in range(20)]
    worst = [max(prior_model(cfg, m).params(s).meta["mu_consistency"] for s in states)
             for m in (10, 12)]
    assert np.log2(worst[0] / worst[1]) / 2 > 1.8
    assert worst[1] < 1e-3


def test_log_prior_examples(cfg):
    state = CoefficientState(np.zeros(2), np.array([10.0, -5.0]))
    assert log_prior_density(state, cfg) == pytest.approx(-4 * np.log(2 * cfg.B_tilde))
    outside = CoefficientState(np.array([cfg.B_tilde + 0.1, 0.0]), np.zeros(2))
    assert log_prior_density(outside, cfg) == -np.inf


def test_truncated_normal_log_density_against_quadrature():
    cfg = PriorConfig(B=2.0, B_tilde=2.0, density_kind="truncated-normal")
    Z = quad(lambda x: np.exp(-x**2 / 2), -2.0, 2.0, epsabs=1e-14, epsrel=1e-14)[0]
    x = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(log_phi(x, cfg), -x**2 / 2 - np.log(Z), atol=1e-10)


def test_single_point_likelihood(model):
    p = model.params(CoefficientState(np.zeros(2), np.array([200.0, -100.0])))
    path = SamplePath(DELTA, np.array([0.42]))
    assert log_likelihood(p, path) == pytest.approx(np.log(p.mu(0.42)))
    assert LikelihoodEvaluator(path, p.grid)(p) == pytest.approx(np.log(p.mu(0.42)))


def test_evaluator_matches_full_likelihood(cfg, model):
    rng = np.random.default_rng(4)
    _, p = sample_prior(cfg, rng, model)
    K = transition_kernel(assemble_generator(p), DELTA)
    path = SamplePath(DELTA, sample_chains(K, p.mu, 500, 1, rng)[0])
    ev = LikelihoodEvaluator(path, p.grid)
    assert ev(p) == pytest.approx(log_likelihood(p, path), abs=1e-8)
    with pytest.raises(ValueError):
        ev(DiffusionParams.trivial(Grid(9)))


def test_likelihood_rejects_zero_density():
    g = Grid(6)
    p = DiffusionParams.trivial(g)
    dead = DiffusionParams(p.sigma2, p.b, GridFn(g, np.where(g.x < 0.5, 0.0, 2.0)), 1.0)
    with pytest.raises(LikelihoodError, match="X_0"):
        log_likelihood(dead, SamplePath(DELTA, np.array([0.1, 0.7])))


def _wavy(g):
    return DiffusionParams.from_coefficients(
        g.fn(lambda x: 1 + 0.5 * np.sin(np.pi * x) ** 2),
        g.fn(lambda x: 2 * np.sin(np.pi * x) ** 2))


def test_average_loglik_matches_entropy_oracle():
    g = Grid(8)
    p = _wavy(g)
    K = transition_kernel(assemble_generator(p), DELTA)
    w = g.weights
    entropy = float(np.sum((p.mu.values * w)[:, None] * w[None, :] * K.p * np.log(K.p)))
    paths = sample_chains(K, p.mu, 500, 100, np.random.default_rng(5))
    per_step = np.array([
        log_likelihood(p, SamplePath(DELTA, row)) - np.log(p.mu(row[0])) for row in paths
    ]) / 500
    se = per_step.std(ddof=1) / np.sqrt(len(per_step))
    assert abs(per_step.mean() - entropy) < 3 * se


def test_likelihood_ratio_matches_kl():
    g = Grid(8)
    p0 = _wavy(g)
    K = transition_kernel(assemble_generator(p0), DELTA)
    n = 200
    paths = sample_chains(K, p0.mu, n, 300, np.random.default_rng(6))
    rng = np.random.default_rng(7)
    base = np.array([log_likelihood(p0, SamplePath(DELTA, r)) for r in paths])
    for _ in range(5):
        a = rng.normal(scale=0.15, size=2)
        p = DiffusionParams.from_coefficients(
            p0.sigma2 * g.fn(lambda x: np.exp(a[0] * np.cos(np.pi * x))),
            p0.b + g.fn(lambda x: a[1] * np.sin(np.pi * x) ** 2))
        diff = base - np.array([log_likelihood(p, SamplePath(DELTA, r)) for r in paths])
        d = info_distances(p0, p, DELTA)
        se = diff.std(ddof=1) / np.sqrt(len(diff))
        assert abs(diff.mean() - (d.kl_mu + n * d.kl)) < 3.5 * se


def test_metropolis_ratio_two_states():
    # symmetric proposal: the ratio is the posterior ratio, capped at one
    lp_a, lp_b = -10.0, -12.5
    assert metropolis_log_ratio(lp_a, lp_b) == pytest.approx(-2.5)
    assert metropolis_log_ratio(lp_b, lp_a) == 0.0
    assert metropolis_log_ratio(lp_a, -np.inf) == -np.inf


def test_reflect_examples():
    assert reflect(np.array(1.2), 1.0) == pytest.approx(0.8)
    assert reflect(np.array(-3.5), 1.0) == pytest.approx(0.5)
    assert reflect(np.array(0.3), 1.0) == pytest.approx(0.3)


@given(st.floats(-1e6, 1e6, allow_nan=False), st.floats(0.1, 1e4))
def test_reflect_lands_in_support(x, bound):
    y = float(reflect(np.array(x), bound))
    assert -bound - 1e-9 * bound <= y <= bound + 1e-9 * bound


def test_mcmc_settings_validated(cfg):
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        mcmc_run(cfg, None, 0, 0.1, rng)
    with pytest.raises(ValueError):
        mcmc_run(cfg, None, 10, -0.1, rng)


def test_prior_recovery(cfg, prior_chain):
    kept = prior_chain.kept()
    uniform = stats.uniform(-cfg.B_tilde, 2 * cfg.B_tilde).cdf
    for i in range(kept.shape[1]):
        ess = effective_sample_size(kept[:, i])
        assert ess > 9000
        # 0.03 is the stated tolerance; the statistic scales like ess^-1/2
        assert stats.kstest(kept[:, i], uniform).statistic < 0.03


def test_chain_bookkeeping(tmp_path, cfg):
    ch = mcmc_run(cfg, None, 100, 0.2, np.random.default_rng(8), thinning=5, seed=8)
    assert ch.states.shape == (20, 4)
    assert ch.burn_in == 4
    assert np.all((ch.acceptance_rates >= 0) & (ch.acceptance_rates <= 1))
    assert np.all(np.abs(ch.states) <= cfg.B_tilde)
    ch.save(tmp_path / "chain.csv")
    back = Chain.load(tmp_path / "chain.csv")
    np.testing.assert_array_equal(back.states, ch.states)
    np.testing.assert_array_equal(back.log_posts, ch.log_posts)
    assert back.seed == 8 and back.cfg == ch.cfg


def test_chain_is_reproducible(cfg):
    a = mcmc_run(cfg, None, 50, 0.2, np.random.default_rng(9), thinning=1)
    b = mcmc_run(cfg, None, 50, 0.2, np.random.default_rng(9), thinning=1)
    np.testing.assert_array_equal(a.states, b.states)


def test_effective_sample_size():
    rng = np.random.default_rng(10)
    iid = rng.standard_normal(20_000)
    assert effective_sample_size(iid) == pytest.approx(20_000, rel=0.1)
    phi = 0.9
    ar = np.empty(20_000)
    ar[0] = 0.0
    for t in range(1, len(ar)):
        ar[t] = phi * ar[t - 1] + rng.standard_normal()
    assert effective_sample_size(ar) == pytest.approx(20_000 * (1 - phi) / (1 + phi), rel=0.2)
    assert effective_sample_size(np.ones(50)) == 50


def test_contraction_rates_and_truncation():
    n = 10_000
    d, d_b = contraction_rates(n, 2.0)
    assert d == pytest.approx(n ** (-2 / 7))
    assert d_b == pytest.approx(n ** (-1 / 7))
    assert truncation_level(1000, 2.0, 2) == 2
    assert truncation_level(10**12, 2.0, 2) == int(np.ceil(np.log2(1 / optimal_eps(10**12)) / 3))


@pytest.fixture(scope="module")
def truth8():
    g = Grid(8)
    return make_truth(TruthConfig(), g)


def test_state_from_fixture_reproduces_truth(cfg, model, truth8):
    state = state_from_params_meta(truth8, cfg)
    p = model.params(state)
    assert l2_distance(p.sigma2, truth8.sigma2) < 1e-10
    assert l2_distance(p.b, truth8.b) < 1e-10
    assert state.within(cfg.B)


def test_diagnostics_for_chain_at_truth(cfg, truth8):
    v = state_from_params_meta(truth8, cfg).vector
    ch = Chain(cfg, np.tile(v, (150, 1)), np.zeros(150), np.zeros(4), np.ones(4), None, 1,
               0, 150, 1000)
    rep = posterior_diagnostics(ch, truth8, 1000)
    assert max(rep["sigma2_distances"]) < 1e-10
    assert max(rep["drift_distances"]) < 1e-10
    assert all(e["sigma2"] == 0 and e["drift"] == 0 for e in rep["exceedance"])
    with pytest.raises(ValueError):
        posterior_diagnostics(Chain(cfg, np.tile(v, (50, 1)), np.zeros(50), np.zeros(4),
                                    np.ones(4), None, 1, 0, 50, 0), truth8, 1000)


def test_prior_chain_diagnostics_match_prior_monte_carlo(cfg, prior_chain, truth8):
    chain = Chain(prior_chain.cfg, prior_chain.states[::10], prior_chain.log_posts[::10],
                  prior_chain.acceptance_rates, prior_chain.proposal_scales, None, 10,
                  prior_chain.burn_in // 10, prior_chain.n_iters, 0)
    rep = posterior_diagnostics(chain, truth8, 1000)
    direct, _ = prior_distance_sample(cfg, truth8, 2000, np.random.default_rng(11))
    delta_n = rep["delta_n"]
    for row in rep["exceedance"]:
        baseline = np.mean(direct > row["M"] * delta_n)
        assert abs(row["sigma2"] - baseline) < 0.05
    assert rep["sigma2_median"] == pytest.approx(np.median(direct), rel=0.1)


def test_small_ball_mass_grows_with_radius(cfg, model):
    p0 = DiffusionParams.trivial(model.grid)
    rng = np.random.default_rng(12)
    rhs = np.array([small_ball_rhs(p0, sample_prior(cfg, rng, model)[1], model.basis)
                    for _ in range(10_000)])
    radii = (0.02, 0.05, 0.1, 0.2)
    mass = [np.mean(rhs < r) for r in radii]
    assert mass[0] > 0
    assert all(b > a for a, b in zip(mass, mass[1:]))
