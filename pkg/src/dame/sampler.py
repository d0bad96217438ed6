"""Gibbs sampler for dynamic additive/multiplicative effect models.

Symmetric responses decompose dyad-wise as

    y^t_ij = sum_p beta^t_p x^t_ijp + theta^t_i + theta^t_j
             + u^t_i' D^t u^t_j + eps^t_ij,        eps ~ N(0, sigma2),

with GP priors N_T(0, tau * f(kappa)) on the beta/theta/d paths and
independent N(0, tau_u_rt) priors on the latent positions u.  One sweep
runs: impute random-missing responses, then draw sigma2, beta, theta, d
and u from their full conditionals, keeping the residual tensor E current
after every individual draw.  GP hyperparameters (tau, kappa) move by a
joint random-walk Metropolis step on the log scale, adapted during
burn-in only.  All sums skip structurally missing dyads (unavailable
nodes), whose entries are identically zero in every internal tensor.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from . import gp
from .data import (
    AvailabilityMatrix,
    CovariateTensor,
    DynamicNetwork,
    classify_missingness,
    pair_available,
)
from .errors import ConfigError, NumericalError
from .gp import GpHyper, PriorConfig

log = logging.getLogger(__name__)

VARIANTS = ("DAME", "ME", "AE", "NO")
MULT_FORMS = ("eigen", "inner")
KAPPA_MODES = ("estimate", "fixed")
KERNELS = ("exponential", "squared")


@dataclass(frozen=True)
class MhSettings:
    """Random-walk settings for the (log tau, log kappa) updates."""

    step_tau: float = 0.4
    step_kappa: float = 0.4
    target_accept: float = 0.3
    adapt: bool = True
    adapt_rate: float = 0.66  # Robbins-Monro decay exponent
    kappa_max: float = gp.DEFAULT_KAPPA_MAX

    def __post_init__(self):
        if self.step_tau < 0 or self.step_kappa < 0:
            raise ConfigError("MH step sizes must be nonnegative")
        if not 0.0 < self.target_accept < 1.0:
            raise ConfigError("target acceptance rate must lie in (0, 1)")
        if not self.kappa_max > 0:
            raise ConfigError("kappa_max must be positive")


@dataclass(frozen=True)
class ChainSettings:
    iterations: int = 6000
    burn_in: int = 1000
    thin: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.burn_in < 0:
            raise ConfigError("burn-in must be nonnegative")
        if self.iterations < self.burn_in:
            raise ConfigError("iterations must be at least the burn-in")
        if self.thin < 1:
            raise ConfigError("thinning interval must be >= 1")


@dataclass(frozen=True)
class ModelConfig:
    """Model variant, priors and chain settings for one sampler run.

    ``variant`` selects which effect blocks are active: DAME has both
    additive and multiplicative effects, AE only additive, ME only
    multiplicative, NO neither.  ``multiplicative_form`` chooses between
    the eigen form u'Du (d estimated) and the inner-product form u'u
    (d pinned at 1).  ``fixed_d`` pins the eigenvalue paths to a given
    R x T array and skips their updates.  ``kappa_mode`` either estimates
    each kappa by MH or fixes them at ``kappa_fixed`` = (beta, theta, d),
    in which case the tau updates are conjugate inverse-gamma draws.
    """

    rank: int = 2
    variant: str = "DAME"
    multiplicative_form: str = "eigen"
    kappa_mode: str = "estimate"
    kappa_fixed: tuple[float, float, float] = (0.0, 0.0, 0.0)
    fixed_d: np.ndarray | None = None
    kernel: str = "exponential"
    priors: PriorConfig = field(default_factory=PriorConfig)
    mh: MhSettings = field(default_factory=MhSettings)
    chain: ChainSettings = field(default_factory=ChainSettings)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.multiplicative_form not in MULT_FORMS:
            raise ConfigError(f"unknown multiplicative form {self.multiplicative_form!r}")
        if self.kappa_mode not in KAPPA_MODES:
            raise ConfigError(f"unknown kappa mode {self.kappa_mode!r}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.rank < 0:
            raise ConfigError("rank must be nonnegative")
        if len(self.kappa_fixed) != 3 or any(k < 0 for k in self.kappa_fixed):
            raise ConfigError("kappa_fixed must be three nonnegative values (beta, theta, d)")
        if self.fixed_d is not None:
            arr = np.asarray(self.fixed_d, dtype=float)
            if arr.ndim != 2 or arr.shape[0] != self.rank:
                raise ConfigError("fixed_d must be an R x T array matching the configured rank")
            object.__setattr__(self, "fixed_d", arr)

    @property
    def has_theta(self) -> bool:
        return self.variant in ("DAME", "AE")

    @property
    def has_mult(self) -> bool:
        return self.variant in ("DAME", "ME") and self.rank > 0

    @property
    def updates_d(self) -> bool:
        return (
            self.has_mult
            and self.multiplicative_form == "eigen"
            and self.fixed_d is None
        )

    @property
    def squared_kernel(self) -> bool:
        return self.kernel == "squared"


@dataclass
class ParameterState:
    """One complete set of model parameters (a single MCMC draw)."""

    beta: np.ndarray  # (P, T)
    theta: np.ndarray  # (N, T)
    d: np.ndarray  # (R, T)
    u: np.ndarray  # (T, N, R)
    sigma2: float
    tau_beta: np.ndarray  # (P,)
    kappa_beta: np.ndarray  # (P,)
    tau_theta: float
    kappa_theta: float
    tau_d: np.ndarray  # (R,)
    kappa_d: np.ndarray  # (R,)
    tau_u: np.ndarray  # (R, T)
    imputed: np.ndarray  # values at the random-missing positions

    def copy(self) -> "ParameterState":
        return ParameterState(
            beta=self.beta.copy(),
            theta=self.theta.copy(),
            d=self.d.copy(),
            u=self.u.copy(),
            sigma2=self.sigma2,
            tau_beta=self.tau_beta.copy(),
            kappa_beta=self.kappa_beta.copy(),
            tau_theta=self.tau_theta,
            kappa_theta=self.kappa_theta,
            tau_d=self.tau_d.copy(),
            kappa_d=self.kappa_d.copy(),
            tau_u=self.tau_u.copy(),
            imputed=self.imputed.copy(),
        )

    def hyper_beta(self, p: int) -> GpHyper:
        return GpHyper(float(self.tau_beta[p]), float(self.kappa_beta[p]))

    def hyper_theta(self) -> GpHyper:
        return GpHyper(float(self.tau_theta), float(self.kappa_theta))

    def hyper_d(self, r: int) -> GpHyper:
        return GpHyper(float(self.tau_d[r]), float(self.kappa_d[r]))


class ModelData:
    """Dataset tensors prepared for sampling.

    Structurally missing entries (unavailable nodes) and the diagonal are
    zeroed everywhere at construction, so block updates can sum over full
    matrices without re-masking; the ``valid`` mask records which dyads
    exist at each timepoint.
    """

    def __init__(
        self,
        net: DynamicNetwork,
        cov: CovariateTensor | None = None,
        avail: AvailabilityMatrix | None = None,
        times=None,
    ):
        n_times, n = net.n_times, net.n_nodes
        if cov is None:
            cov = CovariateTensor(values=np.zeros((n_times, 0, n, n)), names=())
        if avail is None:
            avail = AvailabilityMatrix(
                entries=np.ones((n, n_times), dtype=bool), nodes=net.nodes
            )
        if cov.values.shape[0] != n_times or cov.values.shape[2] != n:
            raise ConfigError("covariate tensor does not match the network dimensions")
        cls = classify_missingness(net, avail)  # raises on inconsistency

        self.nodes = net.nodes
        self.cov_names = cov.names
        self.n_times = n_times
        self.n_nodes = n
        self.n_cov = cov.n_covariates
        self.valid = pair_available(avail)
        self.validf = self.valid.astype(float)
        self.avail_nodes = avail.entries.T.copy()  # (T, N) bool
        self.observed = cls.observed
        self.random_missing = cls.random_missing
        tri = np.argwhere(self.random_missing)
        self.missing_idx = tri[tri[:, 1] < tri[:, 2]]  # (n_missing, 3), i < j
        self.y = np.where(self.observed, net.values, 0.0)
        self.x = cov.values * self.validf[:, None]
        self.sum_x2 = 0.5 * np.einsum("tpij,tpij->pt", self.x, self.x)
        self.partner_count = self.valid.sum(axis=2).T.astype(float)  # (N, T)
        self.n_avail = self.avail_nodes.sum(axis=1).astype(float)  # (T,)
        self.n_pairs = float(self.valid.sum()) / 2.0
        if times is None:
            times = np.arange(1, n_times + 1, dtype=float)  # matches the CSV convention
        self.times = np.asarray(times, dtype=float)
        if self.times.shape != (n_times,):
            raise ConfigError("times must have one entry per timepoint")

    @property
    def n_missing(self) -> int:
        return len(self.missing_idx)


def initial_state(data: ModelData, config: ModelConfig) -> ParameterState:
    """Deterministic starting point: per-timepoint least-squares beta on
    the observed dyads, theta/u at zero, sigma2 at the residual variance,
    tau at the prior mean, kappa at 1 (or the fixed values)."""
    n_times, n, p = data.n_times, data.n_nodes, data.n_cov
    r = config.rank
    pr = config.priors

    beta = np.zeros((p, n_times))
    resid_ss, resid_n = 0.0, 0
    for t in range(n_times):
        obs = np.argwhere(data.observed[t])
        obs = obs[obs[:, 0] > obs[:, 1]]
        if len(obs) == 0:
            continue
        yv = data.y[t, obs[:, 0], obs[:, 1]]
        if p:
            xv = data.x[t, :, obs[:, 0], obs[:, 1]]  # (n_obs, P)
            sol, *_ = np.linalg.lstsq(xv, yv, rcond=None)
            beta[:, t] = sol
            res = yv - xv @ sol
        else:
            res = yv
        resid_ss += float(res @ res)
        resid_n += len(res)
    sigma2 = max(resid_ss / resid_n, 1e-8) if resid_n else 1.0

    tau0 = pr.b / (pr.a - 1.0) if pr.a > 1.0 else pr.b
    tau_u0 = pr.bu / (pr.au - 1.0) if pr.au > 1.0 else pr.bu
    if config.kappa_mode == "fixed":
        kb, kt, kd = config.kappa_fixed
    else:
        kb = kt = kd = 1.0

    if config.fixed_d is not None:
        if config.fixed_d.shape[1] != n_times:
            raise ConfigError("fixed_d must have one column per timepoint")
        d = config.fixed_d.copy()
    elif config.multiplicative_form == "inner":
        d = np.ones((r, n_times))
    else:
        d = np.zeros((r, n_times))

    return ParameterState(
        beta=beta,
        theta=np.zeros((n, n_times)),
        d=d,
        u=np.zeros((n_times, n, r)),
        sigma2=float(sigma2),
        tau_beta=np.full(p, tau0),
        kappa_beta=np.full(p, kb),
        tau_theta=tau0,
        kappa_theta=kt,
        tau_d=np.full(r, tau0),
        kappa_d=np.full(r, kd),
        tau_u=np.full((r, n_times), tau_u0),
        imputed=np.zeros(data.n_missing),
    )


# ---------------------------------------------------------------------------
# residual bookkeeping


def compute_mean(state: ParameterState, data: ModelData) -> np.ndarray:
    """Model mean on valid dyads (zero elsewhere): beta X + theta_i +
    theta_j + u' D u.  Inactive blocks contribute zeros through the state."""
    th = state.theta.T  # (T, N)
    m = th[:, :, None] + th[:, None, :]
    if data.n_cov:
        m += np.einsum("pt,tpij->tij", state.beta, data.x)
    if state.u.shape[2]:
        m += np.einsum("tir,rt,tjr->tij", state.u, state.d, state.u)
    return m * data.validf


def current_responses(state: ParameterState, data: ModelData) -> np.ndarray:
    """Responses with the state's imputations filled in at random-missing
    positions; zero at structural-missing positions and the diagonal."""
    y = data.y.copy()
    if data.n_missing:
        t, i, j = data.missing_idx.T
        y[t, i, j] = state.imputed
        y[t, j, i] = state.imputed
    return y


def compute_residuals(state: ParameterState, data: ModelData) -> np.ndarray:
    """E = y - mean on valid dyads; exactly zero at invalid positions."""
    return (current_responses(state, data) - compute_mean(state, data)) * data.validf


# ---------------------------------------------------------------------------
# Metropolis-Hastings update of one (tau, kappa) pair


def _gp_hyper_logpost(vectors, tau, kappa, prior, mh, squared, times) -> float:
    if kappa > mh.kappa_max:
        return -math.inf
    try:
        corr = gp.exp_covariance(kappa, vectors.shape[1], squared=squared, times=times)
    except NumericalError:
        return -math.inf
    return (
        gp.mvn_logpdf_sum(vectors, corr.scaled(tau))
        + gp.ig_logpdf(tau, prior.a, prior.b)
        + gp.half_cauchy_logpdf(kappa, prior.gamma, upper=mh.kappa_max)
        + math.log(tau)
        + math.log(kappa)
    )


def mh_update_gp_hyper(
    rng,
    vectors,
    current: GpHyper,
    prior: PriorConfig,
    mh: MhSettings,
    *,
    scale: float = 1.0,
    squared: bool = False,
    times=None,
) -> tuple[GpHyper, bool]:
    """One joint random-walk step on (log tau, log kappa).

    The target is the product of the centered GP likelihood of ``vectors``,
    the inverse-gamma prior on tau, the half-Cauchy prior on kappa
    truncated at ``mh.kappa_max``, and the log-scale Jacobian.  Proposals
    whose covariance cannot be factorized are rejected.  Exactly three rng
    variates are consumed per call regardless of the outcome.
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vectors.size == 0:
        raise ValueError("mh_update_gp_hyper needs at least one vector")
    if not current.kappa > 0.0:
        raise ValueError("MH kappa updates require kappa > 0; use fixed mode for kappa = 0")
    step = np.array([mh.step_tau, mh.step_kappa]) * scale
    z = rng.standard_normal(2)
    log_u = math.log(rng.uniform())
    tau_new = current.tau * math.exp(step[0] * z[0])
    kappa_new = current.kappa * math.exp(step[1] * z[1])
    lp_cur = _gp_hyper_logpost(vectors, current.tau, current.kappa, prior, mh, squared, times)
    lp_new = _gp_hyper_logpost(vectors, tau_new, kappa_new, prior, mh, squared, times)
    if log_u < lp_new - lp_cur:
        return GpHyper(tau_new, kappa_new), True
    return current, False


def sample_tau_conjugate(rng, vectors, corr: gp.CovarianceMatrix, prior: PriorConfig) -> float:
    """Conjugate tau draw for fixed kappa: IG(a + kT/2, b + quad/2)."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    w = solve_triangular(corr.chol, vectors.T, lower=True, check_finite=False)
    quad = float(np.sum(w * w))
    return float(gp.ig_sample(rng, prior.a + vectors.size / 2.0, prior.b + quad / 2.0))


class MhDriver:
    """Per-family random-walk scales with burn-in adaptation and
    acceptance accounting."""

    def __init__(self, mh: MhSettings):
        self.mh = mh
        self.adapting = mh.adapt
        self.log_scale: dict[str, float] = {}
        self.n_steps: dict[str, int] = {}
        self.accepted: dict[str, int] = {}
        self.proposed: dict[str, int] = {}

    def step(self, rng, family, vectors, current, prior, *, squared=False, times=None):
        s = math.exp(self.log_scale.get(family, 0.0))
        hyper, accepted = mh_update_gp_hyper(
            rng, vectors, current, prior, self.mh, scale=s, squared=squared, times=times
        )
        self.proposed[family] = self.proposed.get(family, 0) + 1
        self.accepted[family] = self.accepted.get(family, 0) + int(accepted)
        if self.adapting:
            n = self.n_steps.get(family, 0) + 1
            self.n_steps[family] = n
            gain = n ** (-self.mh.adapt_rate)
            self.log_scale[family] = self.log_scale.get(family, 0.0) + gain * (
                float(accepted) - self.mh.target_accept
            )
        return hyper

    def freeze(self):
        self.adapting = False

    def acceptance_rates(self) -> dict[str, float]:
        return {
            fam: self.accepted[fam] / self.proposed[fam] for fam in sorted(self.proposed)
        }


# ---------------------------------------------------------------------------
# block updates (each leaves E current with respect to the new state)


def _corr_for(config: ModelConfig, data: ModelData, kappa: float) -> gp.CovarianceMatrix:
    return gp.exp_covariance(
        kappa, data.n_times, squared=config.squared_kernel, times=data.times
    )


def _update_hyper(rng, family, vectors, tau, kappa, config, data, driver):
    """Shared (tau, kappa) update: MH in estimate mode, conjugate tau
    draw in fixed mode.  Returns (tau, kappa, prior correlation)."""
    if config.kappa_mode == "estimate":
        hyper = driver.step(
            rng,
            family,
            vectors,
            GpHyper(float(tau), float(kappa)),
            config.priors,
            squared=config.squared_kernel,
            times=data.times,
        )
        corr = _corr_for(config, data, hyper.kappa)
        return hyper.tau, hyper.kappa, corr
    corr = _corr_for(config, data, kappa)
    tau_new = sample_tau_conjugate(rng, vectors, corr, config.priors)
    return tau_new, float(kappa), corr


def sample_sigma2(rng, E: np.ndarray, prior: PriorConfig, data: ModelData) -> float:
    """IG draw with shape |available (t, i>j)|/2 + a_sigma and scale
    (sum of squared residuals over those dyads)/2 + b_sigma."""
    shape = data.n_pairs / 2.0 + prior.a_sigma
    scale = 0.25 * float(np.einsum("tij,tij->", E, E)) + prior.b_sigma
    if not math.isfinite(scale):
        raise NumericalError("non-finite residual sum of squares")
    return float(gp.ig_sample(rng, shape, scale))


def impute_missing(rng, state: ParameterState, data: ModelData, y: np.ndarray | None = None):
    """Draw each random-missing response from N(model mean, sigma2).

    Updates ``state.imputed`` and, when given, writes the values into the
    running response tensor ``y`` (both orientations).
    """
    n_m = data.n_missing
    if n_m == 0:
        return state.imputed
    t, i, j = data.missing_idx.T
    mean = state.theta[i, t] + state.theta[j, t]
    if data.n_cov:
        xm = data.x[t, :, i, j]  # (n_m, P)
        mean = mean + np.einsum("mp,pm->m", xm, state.beta[:, t])
    if state.u.shape[2]:
        mean = mean + np.einsum("mr,rm,mr->m", state.u[t, i], state.d[:, t], state.u[t, j])
    vals = mean + math.sqrt(state.sigma2) * rng.standard_normal(n_m)
    state.imputed = vals
    if y is not None:
        y[t, i, j] = vals
        y[t, j, i] = vals
    return vals


def draw_beta_path(rng, state, data, E, p: int, prior_prec: np.ndarray) -> np.ndarray:
    """Conjugate N_T draw for one coefficient path, precision
    ``prior_prec + diag(sum x^2)/sigma2``; mutates state and E."""
    xp = data.x[:, p]
    ex = 0.5 * np.einsum("tij,tij->t", E, xp)
    rhs = (ex + state.beta[p] * data.sum_x2[p]) / state.sigma2
    prec = prior_prec + np.diag(data.sum_x2[p] / state.sigma2)
    new = gp.sample_mvn_from_precision(rng, prec, rhs)
    E += (state.beta[p] - new)[:, None, None] * xp
    state.beta[p] = new
    return new


def update_beta_block(rng, state, data, E, config, driver=None):
    """Per covariate p in random order: hyper update, then the conjugate
    path draw."""
    p_total = state.beta.shape[0]
    if p_total == 0:
        return
    driver = driver if driver is not None else MhDriver(replace(config.mh, adapt=False))
    for p in rng.permutation(p_total):
        state.tau_beta[p], state.kappa_beta[p], corr = _update_hyper(
            rng, f"beta[{p}]", state.beta[p][None], state.tau_beta[p],
            state.kappa_beta[p], config, data, driver,
        )
        draw_beta_path(rng, state, data, E, p, corr.scaled(state.tau_beta[p]).inverse())


def draw_theta_path(rng, state, data, E, i: int, prior_prec: np.ndarray) -> np.ndarray:
    """Conjugate N_T draw for one node's additive-effect path; the partner
    count replaces N-1 wherever nodes are unavailable."""
    n_i = data.partner_count[i]  # (T,)
    inv_s2 = 1.0 / state.sigma2
    rowsum = E[:, i, :].sum(axis=1)
    rhs = (rowsum + n_i * state.theta[i]) * inv_s2
    prec = prior_prec + np.diag(n_i * inv_s2)
    new = gp.sample_mvn_from_precision(rng, prec, rhs)
    upd = (state.theta[i] - new)[:, None] * data.validf[:, i, :]
    E[:, i, :] += upd
    E[:, :, i] += upd
    state.theta[i] = new
    return new


def update_theta_block(rng, state, data, E, config, driver=None):
    """One shared hyper update over all N paths, then per-node conjugate
    draws in random order."""
    n = state.theta.shape[0]
    driver = driver if driver is not None else MhDriver(replace(config.mh, adapt=False))
    state.tau_theta, state.kappa_theta, corr = _update_hyper(
        rng, "theta", state.theta, state.tau_theta, state.kappa_theta, config, data, driver
    )
    prior_prec = corr.scaled(state.tau_theta).inverse()
    for i in rng.permutation(n):
        draw_theta_path(rng, state, data, E, i, prior_prec)


def draw_d_path(rng, state, data, E, r: int, prior_prec: np.ndarray) -> np.ndarray:
    """Conjugate N_T draw for one eigenvalue path."""
    w = state.u[:, :, r]
    W = np.einsum("ti,tj->tij", w, w) * data.validf
    s_ww = 0.5 * np.einsum("tij,tij->t", W, W)
    s_we = 0.5 * np.einsum("tij,tij->t", W, E)
    rhs = (s_we + state.d[r] * s_ww) / state.sigma2
    prec = prior_prec + np.diag(s_ww / state.sigma2)
    new = gp.sample_mvn_from_precision(rng, prec, rhs)
    E += (state.d[r] - new)[:, None, None] * W
    state.d[r] = new
    return new


def update_d_block(rng, state, data, E, config, driver=None):
    """Per latent dimension r in random order: hyper update, then the
    conjugate eigenvalue-path draw.  No-op unless the eigen form with
    free d is active."""
    if not config.updates_d:
        return
    r_total = state.d.shape[0]
    driver = driver if driver is not None else MhDriver(replace(config.mh, adapt=False))
    for r in rng.permutation(r_total):
        state.tau_d[r], state.kappa_d[r], corr = _update_hyper(
            rng, f"d[{r}]", state.d[r][None], state.tau_d[r], state.kappa_d[r],
            config, data, driver,
        )
        draw_d_path(rng, state, data, E, r, corr.scaled(state.tau_d[r]).inverse())


def draw_tau_u(rng, state, data, prior: PriorConfig) -> np.ndarray:
    """Conjugate IG draw of every latent-position variance tau_u_rt,
    summing over available nodes only."""
    availf = data.avail_nodes.astype(float)  # (T, N)
    ssq = np.einsum("tnr,tn->rt", state.u * state.u, availf)
    shape = np.broadcast_to(data.n_avail / 2.0 + prior.au, ssq.shape)
    state.tau_u = (ssq / 2.0 + prior.bu) / rng.gamma(shape, 1.0)
    return state.tau_u


def draw_u_position(rng, state, data, E, t: int, i: int) -> np.ndarray:
    """Conjugate N_R draw for one latent position, precision
    diag(tau_u_t)^-1 + sum over available partners of (D u_j)(D u_j)'/sigma2."""
    inv_s2 = 1.0 / state.sigma2
    a = state.u[t] * state.d[:, t]  # (N, R) rows D u_j
    pa = data.validf[t, i]  # (N,) zero at i and at unavailable partners
    aw = a * pa[:, None]
    m = a.T @ aw
    rhs = (aw.T @ E[t, i] + m @ state.u[t, i]) * inv_s2
    prec = np.diag(1.0 / state.tau_u[:, t]) + m * inv_s2
    new = gp.sample_mvn_from_precision(rng, prec, rhs)
    delta = (a @ (state.u[t, i] - new)) * pa
    E[t, i, :] += delta
    E[t, :, i] += delta
    state.u[t, i] = new
    return new


def update_u_block(rng, state, data, E, config):
    """Latent-position sweep: variance draws for every (r, t), then the
    per-(t, i) position draws in random order."""
    if state.u.shape[2] == 0:
        return
    draw_tau_u(rng, state, data, config.priors)
    n = data.n_nodes
    for flat in rng.permutation(data.n_times * n):
        t, i = divmod(int(flat), n)
        draw_u_position(rng, state, data, E, t, i)


# ---------------------------------------------------------------------------
# chain driver


@dataclass
class ChainResult:
    draws: list[ParameterState]
    acceptance: dict[str, float]
    runtime_seconds: float
    iterations: int
    burn_in: int
    thin: int
    seed: int

    def __len__(self) -> int:
        return len(self.draws)


class GibbsSampler:
    """Stateful single-chain sampler; ``run()`` executes the full schedule,
    ``sweep()`` one iteration (exposed for calibration testing)."""

    def __init__(self, data: ModelData, config: ModelConfig):
        if config.rank > data.n_nodes:
            raise ConfigError("rank cannot exceed the number of nodes")
        if config.fixed_d is not None and config.fixed_d.shape[1] != data.n_times:
            raise ConfigError("fixed_d must have one column per timepoint")
        self.data = data
        self.config = config
        self.rng = np.random.default_rng(config.chain.seed)
        self.state = initial_state(data, config)
        self.driver = MhDriver(config.mh)
        self._y = data.y.copy()
        self._E = None
        self._iteration = 0

    def set_responses(self, values: np.ndarray):
        """Replace the response tensor (complete-data calibration use)."""
        if values.shape != self._y.shape:
            raise ConfigError("response tensor has the wrong shape")
        self._y = np.where(self.data.valid, values, 0.0)

    def sweep(self):
        """One full Gibbs iteration over all active blocks."""
        rng, st, data, cfg = self.rng, self.state, self.data, self.config
        impute_missing(rng, st, data, y=self._y)
        E = (self._y - compute_mean(st, data)) * data.validf
        st.sigma2 = sample_sigma2(rng, E, cfg.priors, data)
        update_beta_block(rng, st, data, E, cfg, self.driver)
        if cfg.has_theta:
            update_theta_block(rng, st, data, E, cfg, self.driver)
        if cfg.has_mult:
            update_d_block(rng, st, data, E, cfg, self.driver)
            update_u_block(rng, st, data, E, cfg)
        self._E = E
        self._iteration += 1
        if not (np.isfinite(st.sigma2) and np.isfinite(E).all()):
            raise NumericalError(f"non-finite sampler state at iteration {self._iteration}")

    def run(self) -> ChainResult:
        cfg = self.config.chain
        draws: list[ParameterState] = []
        if cfg.iterations == cfg.burn_in:
            warnings.warn("iterations equal burn-in: no draws will be retained")
        start = time.perf_counter()
        for it in range(1, cfg.iterations + 1):
            if it == cfg.burn_in + 1:
                self.driver.freeze()
            self.sweep()
            if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                draws.append(self.state.copy())
        elapsed = time.perf_counter() - start
        expected = (cfg.iterations - cfg.burn_in) // cfg.thin
        assert len(draws) == expected
        if draws:
            log.info(
                "chain done: %d retained draws in %.1fs, acceptance %s",
                len(draws), elapsed, self.driver.acceptance_rates(),
            )
        return ChainResult(
            draws=draws,
            acceptance=self.driver.acceptance_rates(),
            runtime_seconds=elapsed,
            iterations=cfg.iterations,
            burn_in=cfg.burn_in,
            thin=cfg.thin,
            seed=cfg.seed,
        )


def run_chain(data: ModelData, config: ModelConfig) -> ChainResult:
    """Run one chain to completion; fully reproducible given the seed."""
    return GibbsSampler(data, config).run()
