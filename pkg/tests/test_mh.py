import math

import numpy as np
import pytest
from scipy.stats import invgamma, wasserstein_distance

import dame.gp as gp
from dame.errors import NumericalError
from dame.gp import GpHyper, PriorConfig
from dame.sampler import MhDriver, MhSettings, mh_update_gp_hyper

PRIOR = PriorConfig(a=2.0, b=1.0, gamma=5.0)


def hyper_logpost(vectors, tau, kappa, prior, kappa_max=1e3):
    """Reference (tau, kappa) log-target used by the grid oracles; written
    against the density directly rather than the sampler's helper."""
    if kappa > kappa_max:
        return -math.inf
    cov = tau * gp.exp_covariance(kappa, vectors.shape[1]).values
    return (
        gp.mvn_logpdf_sum(vectors, cov)
        + gp.ig_logpdf(tau, prior.a, prior.b)
        + gp.half_cauchy_logpdf(kappa, prior.gamma, upper=kappa_max)
        + math.log(tau)
        + math.log(kappa)
    )


def run_mh(vectors, n_steps, seed, mh=None, start=(1.0, 1.0), scale=1.0):
    mh = mh or MhSettings(adapt=False)
    rng = np.random.default_rng(seed)
    cur = GpHyper(*start)
    out = np.empty((n_steps, 2))
    for k in range(n_steps):
        cur, _ = mh_update_gp_hyper(rng, vectors, cur, PRIOR, mh, scale=scale)
        out[k] = (cur.tau, cur.kappa)
    return out


def test_zero_step_proposal_always_accepted():
    mh = MhSettings(step_tau=0.0, step_kappa=0.0, adapt=False)
    rng = np.random.default_rng(1)
    v = rng.standard_normal((1, 4))
    cur = GpHyper(2.0, 3.0)
    for _ in range(20):
        new, accepted = mh_update_gp_hyper(rng, v, cur, PRIOR, mh)
        assert accepted
        assert (new.tau, new.kappa) == (cur.tau, cur.kappa)


def test_fixed_rng_consumption_per_call():
    ## rejected and accepted steps consume the same number of variates,
    ## so downstream draws stay aligned
    mh = MhSettings(adapt=False)
    v = np.zeros((1, 3))
    for seed in (3, 4):
        rng1 = np.random.default_rng(seed)
        mh_update_gp_hyper(rng1, v, GpHyper(1.0, 1.0), PRIOR, mh)
        tail1 = rng1.standard_normal(4)
        rng2 = np.random.default_rng(seed)
        mh_update_gp_hyper(rng2, v, GpHyper(1.0, 1.0), PRIOR, mh, scale=17.0)
        tail2 = rng2.standard_normal(4)
        assert np.array_equal(tail1, tail2)


def test_zero_vectors_tau_matches_conjugate_oracle():
    ## with v = 0 and T = 1 the tau-marginal is exactly IG(a + k/2, b)
    k = 3
    v = np.zeros((k, 1))
    chain = run_mh(v, 60_000, seed=5)
    taus = chain[5_000:, 0]
    a_post, b_post = PRIOR.a + k / 2.0, PRIOR.b
    want_mean = b_post / (a_post - 1)
    assert abs(taus.mean() - want_mean) < 0.03
    ## quantiles and precision moments are tail-robust (the raw second
    ## moment of an IG with a < 4 has infinite estimator variance)
    oracle = invgamma(a_post, scale=b_post)
    for q in (0.1, 0.25, 0.5, 0.75, 0.9):
        want = oracle.ppf(q)
        assert abs(np.quantile(taus, q) - want) < 0.06 * want, q
    assert abs((1.0 / taus).mean() - a_post / b_post) < 0.1


def test_kappa_above_bound_rejected():
    mh = MhSettings(adapt=False, kappa_max=10.0)
    rng = np.random.default_rng(6)
    v = rng.standard_normal((1, 5))
    cur = GpHyper(1.0, 9.99)
    for _ in range(500):
        cur, _ = mh_update_gp_hyper(rng, v, cur, PRIOR, mh)
        assert cur.kappa <= 10.0


def test_factorization_failure_autorejects(monkeypatch):
    import dame.sampler as sampler_mod

    def boom(*a, **k):
        raise NumericalError("forced")

    monkeypatch.setattr(sampler_mod.gp, "exp_covariance", boom)
    rng = np.random.default_rng(7)
    cur = GpHyper(1.0, 2.0)
    new, accepted = sampler_mod.mh_update_gp_hyper(
        rng, np.ones((1, 3)), cur, PRIOR, MhSettings(adapt=False)
    )
    assert not accepted and new == cur


def test_adaptation_reaches_target_and_freezes():
    rng = np.random.default_rng(8)
    v = gp.mvn_sample(rng, np.zeros(20), gp.exp_covariance(8.0, 20).scaled(3.0))[None]
    driver = MhDriver(MhSettings(step_tau=2.5, step_kappa=2.5, adapt=True))
    cur = GpHyper(1.0, 1.0)
    for _ in range(4000):
        cur = driver.step(rng, "fam", v, cur, PRIOR)
    rate_adapting = driver.accepted["fam"] / driver.proposed["fam"]
    driver.freeze()
    frozen_scale = dict(driver.log_scale)
    driver.accepted["fam"] = driver.proposed["fam"] = 0
    for _ in range(3000):
        cur = driver.step(rng, "fam", v, cur, PRIOR)
    assert driver.log_scale == frozen_scale
    rate = driver.accepted["fam"] / driver.proposed["fam"]
    assert 0.15 < rate < 0.45, (rate_adapting, rate)


def grid_posterior(vectors, n_grid=60, tau_rng=(0.05, 50.0), kappa_rng=(0.05, 900.0)):
    """Exact posterior masses on a log-log grid; returns (taus, kappas, mass)."""
    taus = np.exp(np.linspace(math.log(tau_rng[0]), math.log(tau_rng[1]), n_grid))
    kappas = np.exp(np.linspace(math.log(kappa_rng[0]), math.log(kappa_rng[1]), n_grid))
    logp = np.empty((n_grid, n_grid))
    for j, kap in enumerate(kappas):
        corr = gp.exp_covariance(kap, vectors.shape[1])
        for i, tau in enumerate(taus):
            logp[i, j] = (
                gp.mvn_logpdf_sum(vectors, corr.scaled(tau))
                + gp.ig_logpdf(tau, PRIOR.a, PRIOR.b)
                + gp.half_cauchy_logpdf(kap, PRIOR.gamma, upper=1e3)
            )
    ## uniform log-spacing: density x tau x kappa absorbs the Jacobian
    logp += np.log(taus)[:, None] + np.log(kappas)[None, :]
    mass = np.exp(logp - logp.max())
    return taus, kappas, mass / mass.sum()


def test_mh_marginals_match_grid_target():
    ## detailed-balance smoke test: empirical (tau, kappa) marginals vs a
    ## grid-evaluated exact target, 1-D Wasserstein in log space
    rng = np.random.default_rng(9)
    cov = gp.exp_covariance(6.0, 8).scaled(2.0)
    v = np.array([gp.mvn_sample(rng, np.zeros(8), cov) for _ in range(2)])
    chain = run_mh(v, 50_000, seed=10, scale=1.2)[5_000:]
    taus, kappas, mass = grid_posterior(v, n_grid=50)
    for dim, axis_vals in ((0, taus), (1, kappas)):
        marginal = mass.sum(axis=1 - dim)
        w = wasserstein_distance(
            np.log(chain[:, dim]), np.log(axis_vals), v_weights=marginal
        )
        spread = math.sqrt(
            np.sum(marginal * np.log(axis_vals) ** 2)
            - np.sum(marginal * np.log(axis_vals)) ** 2
        )
        assert w < 0.12 * spread, (dim, w, spread)


def test_kappa_mode_recovery_against_grid_oracle():
    ## a single long path with strong serial correlation: the sampler's
    ## posterior location for (tau, kappa) must match the grid oracle
    rng = np.random.default_rng(11)
    cov = gp.exp_covariance(10.0, 50).scaled(5.0)
    v = gp.mvn_sample(rng, np.zeros(50), cov)[None]
    chain = run_mh(v, 30_000, seed=12)[3_000:]
    taus, kappas, mass = grid_posterior(v, n_grid=80, tau_rng=(0.2, 80.0))
    i_star, j_star = np.unravel_index(np.argmax(mass), mass.shape)
    tau_star, kappa_star = taus[i_star], kappas[j_star]
    ## oracle located near the generating values
    assert kappa_star / 10.0 < 4.0 and 10.0 / kappa_star < 4.0
    tau_hat = np.median(chain[:, 0])
    kappa_hat = np.median(chain[:, 1])
    ## grid medians for a like-for-like comparison
    tau_marg = mass.sum(axis=1)
    kap_marg = mass.sum(axis=0)
    tau_med = taus[np.searchsorted(np.cumsum(tau_marg), 0.5)]
    kap_med = kappas[np.searchsorted(np.cumsum(kap_marg), 0.5)]
    assert max(tau_hat / tau_med, tau_med / tau_hat) < 2.0
    assert max(kappa_hat / kap_med, kap_med / kappa_hat) < 2.0
