"""Forward simulation from the generative process.

Synthesizes complete symmetric dynamic networks: GP paths for the
regression coefficients, additive effects and eigenvalues (variance drawn
from the inverse-gamma prior, range fixed by configuration), independent
latent positions, Gaussian noise.  The same prior-sampling machinery
drives the sampler's calibration checks, where every hyperparameter --
including the ranges -- is drawn from its prior.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import gp
from .data import AvailabilityMatrix, CovariateTensor, DynamicNetwork
from .errors import ConfigError
from .gp import PriorConfig
from .sampler import ModelConfig, ParameterState

TRANSITIVITY_PATTERNS = {
    "positive": (1.0, 1.0),
    "mixed": (-1.0, 1.0),
    "negative": (-1.0, -1.0),
}


@dataclass(frozen=True)
class SimConfig:
    """Synthetic-dataset settings.

    ``kappa`` holds the generating ranges (beta, theta, d); zero means
    serially uncorrelated paths.  ``fixed_d`` pins the eigenvalue paths to
    a given R x T array instead of drawing them.  ``covariates`` supplies
    a (T, P, N, N) tensor; by default each dyadic covariate is an i.i.d.
    standard normal shared by both orientations.  ``missing_fraction``
    holds out that share of dyad-time pairs as random missing.
    """

    n_nodes: int = 20
    n_times: int = 10
    n_cov: int = 1
    rank: int = 2
    kappa: tuple[float, float, float] = (10.0, 10.0, 10.0)
    priors: PriorConfig = field(default_factory=PriorConfig)
    fixed_d: np.ndarray | None = None
    covariates: np.ndarray | None = None
    missing_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 2 or self.n_times < 1:
            raise ConfigError("simulation needs at least 2 nodes and 1 timepoint")
        if self.n_cov < 0 or self.rank < 0:
            raise ConfigError("covariate count and rank must be nonnegative")
        if any(k < 0 for k in self.kappa) or len(self.kappa) != 3:
            raise ConfigError("kappa must be three nonnegative values (beta, theta, d)")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ConfigError("missing_fraction must lie in [0, 1)")
        if self.fixed_d is not None:
            arr = np.asarray(self.fixed_d, dtype=float)
            if arr.shape != (self.rank, self.n_times):
                raise ConfigError("fixed_d must be an R x T array")
            object.__setattr__(self, "fixed_d", arr)
        if self.covariates is not None:
            arr = np.asarray(self.covariates, dtype=float)
            want = (self.n_times, self.n_cov, self.n_nodes, self.n_nodes)
            if arr.shape != want:
                raise ConfigError(f"covariates must have shape {want}")
            object.__setattr__(self, "covariates", arr)

    def model_config(self) -> ModelConfig:
        """The generating process expressed as a sampler configuration
        (full model, ranges fixed at the generating values)."""
        return ModelConfig(
            rank=self.rank,
            variant="DAME",
            multiplicative_form="eigen",
            kappa_mode="fixed",
            kappa_fixed=tuple(float(k) for k in self.kappa),
            fixed_d=self.fixed_d,
            priors=self.priors,
        )


def draw_state_from_prior(
    rng,
    config: ModelConfig,
    n_nodes: int,
    n_times: int,
    n_cov: int,
    times=None,
    n_missing: int = 0,
) -> ParameterState:
    """Draw a complete parameter state from the joint prior of ``config``.

    In estimate mode each kappa comes from the truncated half-Cauchy; in
    fixed mode it is pinned and only tau is drawn.  Blocks inactive under
    the variant are left at their deterministic defaults (zeros for paths,
    prior means for variances), consuming no randomness, so variant
    switches leave the stream alignment of active blocks intact.
    """
    pr = config.priors
    r = config.rank

    def draw_hyper(which: int):
        if config.kappa_mode == "fixed":
            kap = float(config.kappa_fixed[which])
        else:
            kap = gp.half_cauchy_sample(rng, pr.gamma, upper=config.mh.kappa_max)
        tau = float(gp.ig_sample(rng, pr.a, pr.b))
        return tau, kap

    def path_cov(tau, kap):
        return gp.exp_covariance(
            kap, n_times, squared=config.squared_kernel, times=times
        ).scaled(tau)

    tau0 = pr.b / (pr.a - 1.0) if pr.a > 1.0 else pr.b
    tau_u0 = pr.bu / (pr.au - 1.0) if pr.au > 1.0 else pr.bu

    beta = np.zeros((n_cov, n_times))
    tau_beta = np.full(n_cov, tau0)
    kappa_beta = np.ones(n_cov)
    for p in range(n_cov):
        tau_beta[p], kappa_beta[p] = draw_hyper(0)
        beta[p] = gp.mvn_sample(rng, np.zeros(n_times), path_cov(tau_beta[p], kappa_beta[p]))

    theta = np.zeros((n_nodes, n_times))
    tau_theta, kappa_theta = tau0, 1.0
    if config.has_theta:
        tau_theta, kappa_theta = draw_hyper(1)
        z = rng.standard_normal((n_nodes, n_times))
        theta = z @ path_cov(tau_theta, kappa_theta).chol.T

    tau_d = np.full(r, tau0)
    kappa_d = np.ones(r)
    if config.fixed_d is not None:
        d = config.fixed_d.copy()
        kappa_d = np.full(r, float(config.kappa_fixed[2]))
    elif config.has_mult and config.multiplicative_form == "inner":
        d = np.ones((r, n_times))
    elif config.updates_d:
        d = np.zeros((r, n_times))
        for k in range(r):
            tau_d[k], kappa_d[k] = draw_hyper(2)
            d[k] = gp.mvn_sample(rng, np.zeros(n_times), path_cov(tau_d[k], kappa_d[k]))
    else:
        d = np.zeros((r, n_times))

    tau_u = np.full((r, n_times), tau_u0)
    u = np.zeros((n_times, n_nodes, r))
    if config.has_mult:
        tau_u = gp.ig_sample(rng, pr.au, pr.bu, size=(r, n_times))
        u = rng.standard_normal((n_times, n_nodes, r)) * np.sqrt(tau_u.T)[:, None, :]

    sigma2 = float(gp.ig_sample(rng, pr.a_sigma, pr.b_sigma))
    return ParameterState(
        beta=beta,
        theta=theta,
        d=d,
        u=u,
        sigma2=sigma2,
        tau_beta=tau_beta,
        kappa_beta=kappa_beta,
        tau_theta=float(tau_theta),
        kappa_theta=float(kappa_theta),
        tau_d=tau_d,
        kappa_d=kappa_d,
        tau_u=tau_u,
        imputed=np.zeros(n_missing),
    )


def simulate_covariates(rng, n_nodes: int, n_times: int, n_cov: int) -> CovariateTensor:
    """I.i.d. standard-normal dyadic covariates, one value per dyad shared
    by both orientations; zero diagonal."""
    x = np.zeros((n_times, n_cov, n_nodes, n_nodes))
    iu, ju = np.triu_indices(n_nodes, k=1)
    z = rng.standard_normal((n_times, n_cov, len(iu)))
    x[:, :, iu, ju] = z
    x[:, :, ju, iu] = z
    return CovariateTensor(values=x, names=tuple(f"x{p + 1}" for p in range(n_cov)))


def simulate_responses(rng, state: ParameterState, x: np.ndarray) -> np.ndarray:
    """Complete symmetric response tensor: model mean plus fresh dyad-wise
    Gaussian noise; zero diagonal."""
    n_times, _, n_nodes, _ = x.shape
    th = state.theta.T
    mean = th[:, :, None] + th[:, None, :]
    if x.shape[1]:
        mean = mean + np.einsum("pt,tpij->tij", state.beta, x)
    if state.u.shape[2]:
        mean = mean + np.einsum("tir,rt,tjr->tij", state.u, state.d, state.u)
    iu, ju = np.triu_indices(n_nodes, k=1)
    eps = np.sqrt(state.sigma2) * rng.standard_normal((n_times, len(iu)))
    y = mean.copy()
    y[:, iu, ju] = mean[:, iu, ju] + eps
    y[:, ju, iu] = y[:, iu, ju]
    idx = np.arange(n_nodes)
    y[:, idx, idx] = 0.0
    return y


def simulate_dataset(
    config: SimConfig,
) -> tuple[DynamicNetwork, CovariateTensor, ParameterState]:
    """Generate one synthetic dataset plus its ground-truth parameters.

    Bit-identical for a fixed seed.  When ``missing_fraction`` > 0 the
    held-out true responses are kept in the returned state's ``imputed``
    slot (ordered as the loader orders random-missing positions), so
    residual checks against the truth remain exact.
    """
    rng = np.random.default_rng(config.seed)
    n, n_times = config.n_nodes, config.n_times
    state = draw_state_from_prior(rng, config.model_config(), n, n_times, config.n_cov)
    if config.covariates is not None:
        # user-supplied covariates consume no randomness
        cov = CovariateTensor(
            values=config.covariates,
            names=tuple(f"x{p + 1}" for p in range(config.n_cov)),
        )
    else:
        cov = simulate_covariates(rng, n, n_times, config.n_cov)
    y = simulate_responses(rng, state, cov.values)

    mask = np.ones((n_times, n, n), dtype=bool)
    idx = np.arange(n)
    mask[:, idx, idx] = False
    iu, ju = np.triu_indices(n, k=1)
    n_dyads = len(iu)
    if config.missing_fraction > 0.0:
        n_hold = int(round(config.missing_fraction * n_times * n_dyads))
        flat = rng.choice(n_times * n_dyads, size=n_hold, replace=False)
        t_h, k_h = np.divmod(flat, n_dyads)
        mask[t_h, iu[k_h], ju[k_h]] = False
        mask[t_h, ju[k_h], iu[k_h]] = False
        held = ~mask.copy()
        held[:, idx, idx] = False
        coords = np.argwhere(held)
        coords = coords[coords[:, 1] < coords[:, 2]]
        state.imputed = y[coords[:, 0], coords[:, 1], coords[:, 2]]
    values = np.where(mask, y, np.nan)
    nodes = tuple(f"n{k + 1:03d}" for k in range(n))
    net = DynamicNetwork(values=values, mask=mask, nodes=nodes)
    return net, cov, state


def simulate_transitivity_dataset(
    config: SimConfig, pattern
) -> tuple[DynamicNetwork, CovariateTensor, ParameterState]:
    """Dataset with the eigenvalue paths clamped to a +/-2 sign pattern.

    ``pattern`` is "positive", "mixed", "negative" or a pair of signs;
    requires rank 2.  Serially uncorrelated generation (kappa = 0) is the
    conventional companion setting and is up to the caller's config.
    """
    if config.rank != 2:
        raise ConfigError("transitivity datasets use rank 2")
    if isinstance(pattern, str):
        try:
            signs = TRANSITIVITY_PATTERNS[pattern]
        except KeyError:
            raise ConfigError(
                f"unknown pattern {pattern!r}; expected one of {sorted(TRANSITIVITY_PATTERNS)}"
            ) from None
    else:
        signs = tuple(float(s) for s in pattern)
        if len(signs) != 2 or any(abs(s) != 1.0 for s in signs):
            raise ConfigError("sign pattern must be a pair of +/-1")
    fixed = np.stack(
        [np.full(config.n_times, 2.0 * signs[0]), np.full(config.n_times, 2.0 * signs[1])]
    )
    return simulate_dataset(replace(config, fixed_d=fixed))


def complete_availability(n_nodes: int, n_times: int, nodes) -> AvailabilityMatrix:
    """All-available matrix matching a simulated dataset."""
    return AvailabilityMatrix(
        entries=np.ones((n_nodes, n_times), dtype=bool), nodes=tuple(nodes)
    )
