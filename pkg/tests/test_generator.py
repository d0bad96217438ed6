import numpy as np
import pytest

from dame.errors import ConfigError
from dame.generator import (
    SimConfig,
    complete_availability,
    draw_state_from_prior,
    simulate_dataset,
    simulate_transitivity_dataset,
)
from dame.sampler import ModelConfig, ModelData, compute_residuals, current_responses


def test_seed_determinism():
    cfg = SimConfig(n_nodes=8, n_times=4, n_cov=2, rank=2, missing_fraction=0.1, seed=42)
    net1, cov1, truth1 = simulate_dataset(cfg)
    net2, cov2, truth2 = simulate_dataset(cfg)
    assert np.array_equal(net1.values, net2.values, equal_nan=True)
    assert np.array_equal(net1.mask, net2.mask)
    assert np.array_equal(cov1.values, cov2.values)
    assert np.array_equal(truth1.beta, truth2.beta)
    assert np.array_equal(truth1.u, truth2.u)
    assert truth1.sigma2 == truth2.sigma2
    net3, _, _ = simulate_dataset(SimConfig(
        n_nodes=8, n_times=4, n_cov=2, rank=2, missing_fraction=0.1, seed=43))
    assert not np.array_equal(net1.values, net3.values, equal_nan=True)


def test_network_shape_and_symmetry():
    net, cov, truth = simulate_dataset(SimConfig(n_nodes=6, n_times=3, seed=1))
    assert net.values.shape == (3, 6, 6)
    assert np.array_equal(net.values, np.transpose(net.values, (0, 2, 1)), equal_nan=True)
    assert not np.diagonal(net.mask, axis1=1, axis2=2).any()
    assert cov.values.shape == (3, 1, 6, 6)
    assert len(net.nodes) == len(set(net.nodes)) == 6


def test_truth_echo_is_exact():
    ## the held-out responses ride along in truth.imputed, ordered the way
    ## the model matrix orders random-missing slots, so the complete
    ## response tensor can be reconstructed bit-for-bit
    cfg = SimConfig(n_nodes=10, n_times=5, n_cov=2, rank=2, missing_fraction=0.2, seed=3)
    net, cov, truth = simulate_dataset(cfg)
    data = ModelData(net, cov)
    assert data.n_missing == len(truth.imputed) > 0
    y_full = current_responses(truth, data)
    obs = data.observed
    assert np.array_equal(y_full[obs], net.values[obs])
    t, i, j = data.missing_idx.T
    assert np.array_equal(y_full[t, i, j], truth.imputed)
    assert np.array_equal(y_full[t, j, i], truth.imputed)


def test_residual_noise_matches_sigma2():
    ## with the true parameters plugged in, residuals are exactly the
    ## generating noise: mean ~ 0 and variance within 5% of sigma2
    cfg = SimConfig(n_nodes=50, n_times=10, n_cov=0, rank=0, kappa=(0.0, 5.0, 0.0), seed=4)
    net, cov, truth = simulate_dataset(cfg)
    data = ModelData(net, cov)
    E = compute_residuals(truth, data)
    assert not E[~data.valid].any()
    iu, ju = np.triu_indices(50, k=1)
    eps = E[:, iu, ju].ravel()
    assert abs(eps.mean()) < 4.0 * np.sqrt(truth.sigma2 / eps.size)
    assert abs(eps.var() / truth.sigma2 - 1.0) < 0.05


def test_transitivity_patterns_clamp_eigenvalues():
    cfg = SimConfig(n_nodes=8, n_times=4, rank=2, kappa=(0.0, 0.0, 0.0), seed=5)
    for name, (s1, s2) in (("positive", (1, 1)), ("mixed", (-1, 1)), ("negative", (-1, -1))):
        _, _, truth = simulate_transitivity_dataset(cfg, name)
        assert np.all(truth.d[0] == 2.0 * s1)
        assert np.all(truth.d[1] == 2.0 * s2)
    _, _, truth = simulate_transitivity_dataset(cfg, (1, -1))
    assert np.all(truth.d == np.array([[2.0], [-2.0]]) * np.ones(4))
    with pytest.raises(ConfigError):
        simulate_transitivity_dataset(cfg, "sideways")
    with pytest.raises(ConfigError):
        simulate_transitivity_dataset(SimConfig(n_nodes=8, n_times=4, rank=1), "mixed")


def test_kappa_controls_serial_correlation():
    ## lag-1 correlation of the node-effect paths tracks exp(-1/kappa)
    def lag1(kappa, seed):
        cfg = ModelConfig(rank=0, variant="AE", kappa_mode="fixed",
                          kappa_fixed=(0.0, kappa, 0.0))
        rng = np.random.default_rng(seed)
        st = draw_state_from_prior(rng, cfg, n_nodes=600, n_times=8, n_cov=0)
        a, b = st.theta[:, :-1].ravel(), st.theta[:, 1:].ravel()
        return np.corrcoef(a, b)[0, 1]

    assert lag1(20.0, seed=6) > 0.85  # exp(-1/20) ~ 0.95
    assert abs(lag1(0.0, seed=7)) < 0.08


def test_user_covariates_pass_through():
    rng = np.random.default_rng(8)
    half = rng.standard_normal((3, 2, 5, 5))
    vals = half + np.transpose(half, (0, 1, 3, 2))
    cfg = SimConfig(n_nodes=5, n_times=3, n_cov=2, rank=1, covariates=vals, seed=9)
    _, cov, _ = simulate_dataset(cfg)
    assert np.array_equal(cov.values, vals)
    assert cov.names == ("x1", "x2")
    with pytest.raises(ConfigError, match="shape"):
        SimConfig(n_nodes=5, n_times=3, n_cov=1, covariates=vals)


def test_missing_fraction_holds_out_dyads():
    cfg = SimConfig(n_nodes=12, n_times=6, missing_fraction=0.25, seed=10)
    net, _, _ = simulate_dataset(cfg)
    iu, ju = np.triu_indices(12, k=1)
    frac = np.isnan(net.values[:, iu, ju]).mean()
    n_dyads = 6 * len(iu)
    assert abs(frac - 0.25) <= 1.0 / n_dyads  # exact up to rounding
    assert np.isnan(net.values[:, ju, iu]).mean() == frac


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(n_nodes=1)
    with pytest.raises(ConfigError):
        SimConfig(missing_fraction=1.0)
    with pytest.raises(ConfigError):
        SimConfig(kappa=(1.0, -2.0, 3.0))
    with pytest.raises(ConfigError):
        SimConfig(rank=1, fixed_d=np.ones((2, 10)))


def test_complete_availability():
    avail = complete_availability(4, 3, ("a", "b", "c", "d"))
    assert avail.entries.shape == (4, 3) and avail.entries.all()
    assert avail.nodes == ("a", "b", "c", "d")


def test_prior_draw_stream_alignment_across_variants():
    ## inactive blocks must not consume randomness: the shared blocks of a
    ## nested variant line up draw-for-draw with the full model
    kw = dict(n_nodes=6, n_times=4, n_cov=2)
    full = draw_state_from_prior(
        np.random.default_rng(11), ModelConfig(rank=2, variant="DAME"), **kw)
    no_theta = draw_state_from_prior(
        np.random.default_rng(11), ModelConfig(rank=2, variant="ME"), **kw)
    assert np.array_equal(full.beta, no_theta.beta)
    assert not no_theta.theta.any()
    assert full.theta.any()
