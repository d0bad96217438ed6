"""Posterior summaries, predictive replication and identified latent positions.

Everything here is read-only over a set of retained draws: predictive
networks are simulated per draw, degree-based diagnostics are computed on
observed or replicated tensors, and the multiplicative effects are turned
into interpretable coordinates via an eigendecomposition plus a Procrustes
alignment against a posterior-mean reference.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import orthogonal_procrustes
from scipy.stats import chi2

from .errors import ConfigError, DataError
from .sampler import (
    ChainResult,
    ModelConfig,
    ModelData,
    ParameterState,
    compute_mean,
)

DEGREE_MOMENTS = (1, 2, 3)

## quantile convention used for every credible interval in this module:
## linear interpolation between order statistics (numpy's default rule)
QUANTILE_RULE = "linear"
INTERVAL = (0.025, 0.975)


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained post-burn-in states plus the labels needed to report them."""

    states: tuple[ParameterState, ...]
    config: ModelConfig
    nodes: tuple[str, ...]
    times: np.ndarray
    cov_names: tuple[str, ...]

    def __post_init__(self):
        if not self.states:
            raise DataError("no retained draws")

    def __len__(self) -> int:
        return len(self.states)

    def stack(self, name: str) -> np.ndarray:
        """All draws of one parameter family, stacked on a leading axis."""
        return np.stack([np.asarray(getattr(s, name), dtype=float) for s in self.states])

    @classmethod
    def from_chains(cls, results, data: ModelData, config: ModelConfig):
        """Pool one or more chain results over the same data and config."""
        results = [results] if isinstance(results, ChainResult) else list(results)
        states = tuple(d for r in results for d in r.draws)
        return cls(
            states=states,
            config=config,
            nodes=data.nodes,
            times=np.asarray(data.times, dtype=float),
            cov_names=data.cov_names,
        )


def ppc_sample(rng, draws: PosteriorDraws, data: ModelData, count: int) -> np.ndarray:
    """Posterior predictive networks, one per sampled draw.

    Draws are taken without replacement while ``count`` fits inside the
    retained set, with replacement beyond that.  Entries that are not a
    valid dyad (diagonal, unavailable node) come back as NaN.
    """
    if count < 1:
        raise ConfigError("ppc replicate count must be positive")
    pool = len(draws)
    idx = rng.choice(pool, size=count, replace=count > pool)
    out = np.full((count, data.n_times, data.n_nodes, data.n_nodes), np.nan)
    iu, ju = np.triu_indices(data.n_nodes, k=1)
    for k, s in enumerate(idx):
        state = draws.states[s]
        mean = compute_mean(state, data)
        eps = rng.standard_normal((data.n_times, len(iu))) * np.sqrt(state.sigma2)
        y = mean.copy()
        y[:, iu, ju] += eps
        y[:, ju, iu] = y[:, iu, ju]
        out[k] = np.where(data.valid, y, np.nan)
    return out


def degree_stats(values: np.ndarray, moment: int = 1) -> np.ndarray:
    """Node degrees of the matrix power ``Y^moment``, as an N x T table.

    Missing entries contribute zero to every sum, and the diagonal is
    cleared before powering so self-ties never enter.
    """
    if moment not in DEGREE_MOMENTS:
        raise ConfigError(f"degree moment must be one of {DEGREE_MOMENTS}")
    y = np.nan_to_num(np.asarray(values, dtype=float))
    if y.ndim != 3 or y.shape[1] != y.shape[2]:
        raise DataError("expected a (T, N, N) network tensor")
    n = y.shape[1]
    idx = np.arange(n)
    y[:, idx, idx] = 0.0
    power = y.copy()
    for _ in range(moment - 1):
        power = power @ y
    return power.sum(axis=2).T  # (N, T)


def lagged_degree_correlation(
    values: np.ndarray, lag: int, avail_nodes: np.ndarray | None = None
) -> float:
    """Pearson correlation between node degrees ``lag`` steps apart.

    The two stacked vectors pair node i at time t with node i at t+lag;
    when an availability table (N x T bool... transposed from the model's
    (T, N) layout is also accepted) is given, only pairs with the node
    present at both endpoints enter.  Returns NaN when fewer than two
    pairs remain or either side is constant.
    """
    if lag < 1:
        raise ConfigError("lag must be at least 1")
    deg = degree_stats(values, moment=1)  # (N, T)
    n, n_times = deg.shape
    if lag >= n_times:
        return float("nan")
    v1 = deg[:, : n_times - lag]
    v2 = deg[:, lag:]
    if avail_nodes is not None:
        avail = np.asarray(avail_nodes, dtype=bool)
        if avail.shape == (n_times, n):
            avail = avail.T
        if avail.shape != (n, n_times):
            raise DataError("availability table does not match the network")
        keep = avail[:, : n_times - lag] & avail[:, lag:]
        v1, v2 = v1[keep], v2[keep]
    a, b = np.ravel(v1), np.ravel(v2)
    if a.size < 2 or np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


def ppc_degree_correlations(
    replicates: np.ndarray, lags=(1, 2, 3), avail_nodes: np.ndarray | None = None
) -> np.ndarray:
    """Lagged degree correlations per replicate: shape (len(lags), count)."""
    out = np.empty((len(lags), replicates.shape[0]))
    for j, lag in enumerate(lags):
        for k in range(replicates.shape[0]):
            out[j, k] = lagged_degree_correlation(replicates[k], lag, avail_nodes)
    return out


## ---------------------------------------------------------------------------
## latent-position identification


@dataclass(frozen=True)
class LatentPositions:
    """Identified multiplicative-effect coordinates per draw and timepoint.

    ``coords[s, t]`` is N x R with column r scaled by sqrt(|eigenvalue|);
    ``signs`` records each column's eigenvalue sign so that
    sum_r sign_r c_r c_r' reproduces the rank-R truncation of u'Du.
    """

    coords: np.ndarray  # (S, T, N, R)
    signs: np.ndarray  # (S, T, R), +/-1
    eigenvalues: np.ndarray  # (S, T, R), signed, |.| descending
    nodes: tuple[str, ...]
    times: np.ndarray

    @property
    def rank(self) -> int:
        return self.coords.shape[3]

    def mean_coords(self) -> np.ndarray:
        return self.coords.mean(axis=0)  # (T, N, R)


def multiplicative_matrix(state: ParameterState, t: int) -> np.ndarray:
    """The symmetric interaction matrix u^t diag(d^t) u^t' at one time."""
    u = state.u[t]
    return (u * state.d[:, t]) @ u.T


def _top_eigenpairs(m: np.ndarray, rank: int):
    lam, vec = np.linalg.eigh(m)
    order = np.argsort(np.abs(lam))[::-1][:rank]
    lam = lam[order]
    vec = vec[:, order]
    coords = vec * np.sqrt(np.abs(lam))
    return lam, coords


def _align_blocks(coords, lam, ref_coords, ref_lam):
    """Orthogonal Procrustes alignment restricted to same-sign eigenvalue
    blocks, which leaves sum_r sign_r c_r c_r' unchanged."""
    aligned = np.empty_like(coords)
    mismatch = False
    for positive in (True, False):
        cols = np.flatnonzero((lam >= 0.0) == positive)
        ref_cols = np.flatnonzero((ref_lam >= 0.0) == positive)
        if cols.size == 0:
            continue
        a = coords[:, cols]
        b = ref_coords[:, ref_cols]
        if ref_cols.size != cols.size:
            mismatch = True
            pad = np.zeros((coords.shape[0], cols.size))
            pad[:, : min(cols.size, ref_cols.size)] = b[:, : cols.size]
            b = pad
        rot, _ = orthogonal_procrustes(a, b)
        aligned[:, cols] = a @ rot
    return aligned, mismatch


def identify_latent(draws: PosteriorDraws, rank: int | None = None) -> LatentPositions:
    """Eigendecompose every draw's u'Du and align the scaled eigenvectors.

    The reference frame per timepoint is the decomposition of the
    posterior-mean interaction matrix; each draw is then rotated onto it
    within its positive and negative eigenvalue blocks separately, so the
    reported coordinates stay exactly reconstruction-equivalent.
    """
    config = draws.config
    if not config.has_mult or config.rank == 0:
        raise ConfigError(
            "these draws contain no multiplicative effects; "
            "latent positions require a DAME or ME fit with rank >= 1"
        )
    rank = config.rank if rank is None else rank
    if not 1 <= rank <= config.rank:
        raise ConfigError("identification rank must lie in 1..model rank")
    n_draws = len(draws)
    n_times = draws.states[0].u.shape[0]
    n = draws.states[0].u.shape[1]

    mbar = np.zeros((n_times, n, n))
    for state in draws.states:
        for t in range(n_times):
            mbar[t] += multiplicative_matrix(state, t)
    mbar /= n_draws
    ref = [_top_eigenpairs(mbar[t], rank) for t in range(n_times)]

    coords = np.empty((n_draws, n_times, n, rank))
    signs = np.empty((n_draws, n_times, rank))
    eigenvalues = np.empty((n_draws, n_times, rank))
    any_mismatch = False
    for s, state in enumerate(draws.states):
        for t in range(n_times):
            lam, c = _top_eigenpairs(multiplicative_matrix(state, t), rank)
            ref_lam, ref_c = ref[t]
            aligned, mismatch = _align_blocks(c, lam, ref_c, ref_lam)
            any_mismatch = any_mismatch or mismatch
            coords[s, t] = aligned
            eigenvalues[s, t] = lam
            signs[s, t] = np.where(lam >= 0.0, 1.0, -1.0)
    if any_mismatch:
        warnings.warn(
            "eigenvalue sign pattern varies across draws; alignment used "
            "zero-padded reference blocks where the counts disagree"
        )
    return LatentPositions(
        coords=coords,
        signs=signs,
        eigenvalues=eigenvalues,
        nodes=draws.nodes,
        times=draws.times,
    )


def credible_ellipse(points: np.ndarray, level: float = 0.95):
    """Coverage ellipse of a 2-D draw cloud.

    Returns (center, half_axes, angle_degrees) where the half-axes scale the
    covariance eigenvectors by sqrt(chi2(level, df=2) * eigenvalue).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DataError("ellipse fitting expects an (S, 2) draw cloud")
    if len(pts) < 3:
        raise DataError("need at least 3 draws for an ellipse")
    center = pts.mean(axis=0)
    cov = np.cov(pts.T)
    lam, vec = np.linalg.eigh(cov)
    lam = np.clip(lam, 0.0, None)
    scale = chi2.ppf(level, df=2)
    half_axes = np.sqrt(scale * lam)[::-1]  # major first
    major = vec[:, 1]
    angle = float(np.degrees(np.arctan2(major[1], major[0])))
    return center, half_axes, angle


## ---------------------------------------------------------------------------
## scalar summaries

SCALAR_FAMILIES = ("sigma2", "tau_theta", "kappa_theta")


def _family_index(draws: PosteriorDraws, family: str):
    """Index-column names and label tuples for one parameter family."""
    p_names = list(draws.cov_names)
    if not p_names:
        p_names = [f"x{k + 1}" for k in range(draws.states[0].beta.shape[0])]
    times = [_fmt_time(v) for v in draws.times]
    nodes = list(draws.nodes)
    ranks = [str(r + 1) for r in range(draws.states[0].d.shape[0])]
    table = {
        "beta": (("p", "t"), (p_names, times)),
        "theta": (("node", "t"), (nodes, times)),
        "d": (("r", "t"), (ranks, times)),
        "u": (("t", "node", "r"), (times, nodes, ranks)),
        "sigma2": ((), ()),
        "tau_beta": (("p",), (p_names,)),
        "kappa_beta": (("p",), (p_names,)),
        "tau_theta": ((), ()),
        "kappa_theta": ((), ()),
        "tau_d": (("r",), (ranks,)),
        "kappa_d": (("r",), (ranks,)),
        "tau_u": (("r", "t"), (ranks, times)),
    }
    if family not in table:
        raise ConfigError(f"unknown parameter family {family!r}")
    return table[family]


def _fmt_time(v) -> str:
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)


def active_families(config: ModelConfig) -> tuple[str, ...]:
    """Parameter families actually sampled under this configuration."""
    fams = ["beta", "sigma2", "tau_beta"]
    if config.kappa_mode == "estimate":
        fams.append("kappa_beta")
    if config.has_theta:
        fams.extend(["theta", "tau_theta"])
        if config.kappa_mode == "estimate":
            fams.append("kappa_theta")
    if config.has_mult:
        fams.extend(["u", "tau_u", "d"])
        if config.updates_d:
            fams.append("tau_d")
            if config.kappa_mode == "estimate":
                fams.append("kappa_d")
    return tuple(fams)


def summarize(draws: PosteriorDraws, family: str) -> list[dict]:
    """Posterior mean and central 95% interval for every scalar index.

    Quantiles interpolate linearly between order statistics; the rows come
    back in C order over the family's index grid.
    """
    names, labels = _family_index(draws, family)
    values = draws.stack(family)
    flat = values.reshape(len(draws), -1)
    mean = flat.mean(axis=0)
    lo, hi = np.quantile(flat, INTERVAL, axis=0, method=QUANTILE_RULE)
    rows = []
    grid = [()] if not names else _cartesian(labels)
    for k, combo in enumerate(grid):
        row = dict(zip(names, combo))
        row.update(mean=float(mean[k]), lo=float(lo[k]), hi=float(hi[k]))
        rows.append(row)
    return rows


def _cartesian(label_lists):
    out = [()]
    for labels in label_lists:
        out = [combo + (lab,) for combo in out for lab in labels]
    return out
