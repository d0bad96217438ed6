"""Run-configuration files: YAML with flat sections, explicit defaults,
and strict key checking.

A fit file has sections ``model``, ``priors``, ``mh``, ``chain`` and
``data``; a simulation file has ``simulate`` and ``priors``.  Every key is
optional unless stated otherwise, and unknown keys are rejected by name so
typos fail loudly rather than silently running defaults.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .data import (
    AvailabilityMatrix,
    CovariateTensor,
    DynamicNetwork,
    attach_covariates,
    build_vote_network,
    load_dataset,
    load_votes,
)
from .errors import ConfigError
from .generator import TRANSITIVITY_PATTERNS, SimConfig
from .gp import PriorConfig
from .sampler import (
    KAPPA_MODES,
    KERNELS,
    MULT_FORMS,
    VARIANTS,
    ChainSettings,
    MhSettings,
    ModelConfig,
)

FIT_SECTIONS = ("model", "priors", "mh", "chain", "data")
SIM_SECTIONS = ("simulate", "priors")


def _bool(v):
    if isinstance(v, bool):
        return v
    raise ValueError(f"expected true/false, got {v!r}")


def _choice(options):
    def coerce(v):
        if v in options:
            return v
        raise ValueError(f"expected one of {list(options)}, got {v!r}")

    return coerce


def _float_triplet(v):
    vals = [float(x) for x in v]
    if len(vals) != 3:
        raise ValueError("expected three numbers (beta, theta, d)")
    return tuple(vals)


def _matrix(v):
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 2:
        raise ValueError("expected a nested list forming an R x T matrix")
    return arr


def _opt(coerce):
    return lambda v: None if v is None else coerce(v)


## key -> (default, coercion); defaults mirror the dataclass defaults so
## the documented behavior lives in one place
MODEL_KEYS = {
    "rank": (2, int),
    "variant": ("DAME", _choice(VARIANTS)),
    "multiplicative_form": ("eigen", _choice(MULT_FORMS)),
    "kernel": ("exponential", _choice(KERNELS)),
    "kappa_mode": ("estimate", _choice(KAPPA_MODES)),
    "kappa_fixed": ((0.0, 0.0, 0.0), _float_triplet),
    "fixed_d": (None, _matrix),
}
PRIOR_KEYS = {
    "a": (2.0, float),
    "b": (1.0, float),
    "a_sigma": (2.0, float),
    "b_sigma": (1.0, float),
    "gamma": (5.0, float),
    "a_u": (None, float),
    "b_u": (None, float),
}
MH_KEYS = {
    "step_tau": (0.4, float),
    "step_kappa": (0.4, float),
    "target_accept": (0.3, float),
    "adapt": (True, _bool),
    "adapt_rate": (0.66, float),
    "kappa_max": (1000.0, float),
}
CHAIN_KEYS = {
    "iterations": (6000, int),
    "burn_in": (1000, int),
    "thin": (10, int),
    "seed": (0, int),
}
DATA_KEYS = {
    "network": (None, str),
    "covariates": (None, str),
    "availability": (None, str),
    "votes": (None, str),
    "intercept": (False, _bool),
}
SIM_KEYS = {
    "n_nodes": (20, int),
    "n_times": (10, int),
    "n_cov": (1, int),
    "rank": (2, int),
    "kappa": ((10.0, 10.0, 10.0), _float_triplet),
    "missing_fraction": (0.0, float),
    "seed": (0, int),
    "fixed_d": (None, _matrix),
    "transitivity": (None, _choice(tuple(TRANSITIVITY_PATTERNS))),
}


@dataclass(frozen=True)
class DataFiles:
    """Input-file names (relative to the data directory) plus loader flags."""

    network: str | None
    covariates: str | None
    availability: str | None
    votes: str | None
    intercept: bool


@dataclass(frozen=True)
class FitSettings:
    model: ModelConfig
    data: DataFiles


@dataclass(frozen=True)
class SimulateSettings:
    sim: SimConfig
    transitivity: str | None


def _read_yaml(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as err:
        raise ConfigError(f"config file {path} is not valid YAML: {err}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must be a mapping of sections")
    return raw


def _check_sections(raw: dict, allowed, path):
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(
            f"unknown section(s) {unknown} in {path}; allowed sections: {list(allowed)}"
        )


def _section(raw: dict, name: str, keys: dict, required=()) -> dict:
    body = raw.get(name) or {}
    if not isinstance(body, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    unknown = sorted(set(body) - set(keys))
    if unknown:
        raise ConfigError(
            f"unknown key(s) {unknown} in section '{name}'; "
            f"allowed: {sorted(keys)}"
        )
    out = {}
    for key, (default, coerce) in keys.items():
        if body.get(key) is not None:
            try:
                out[key] = coerce(body[key])
            except (TypeError, ValueError) as err:
                raise ConfigError(
                    f"invalid value for '{name}.{key}' (default {default!r}): {err}"
                ) from None
        elif key in required:
            raise ConfigError(f"'{name}.{key}' is required (no default)")
        else:
            out[key] = default
    return out


def _prior_config(raw) -> PriorConfig:
    return PriorConfig(**_section(raw, "priors", PRIOR_KEYS))


def load_fit_config(path) -> FitSettings:
    """Parse a fit configuration file into validated model + data settings."""
    raw = _read_yaml(path)
    _check_sections(raw, FIT_SECTIONS, path)
    model = _section(raw, "model", MODEL_KEYS)
    data = DataFiles(**_section(raw, "data", DATA_KEYS))
    if data.network is None and data.votes is None:
        raise ConfigError(
            "'data.network' or 'data.votes' is required (no default): "
            "give a dyadic response file or a ballot file to build one from"
        )
    if data.network is not None and data.votes is not None:
        raise ConfigError("'data.network' and 'data.votes' are mutually exclusive")
    if data.votes is not None and data.availability is not None:
        raise ConfigError(
            "'data.availability' is derived from the ballots when 'data.votes' is used"
        )
    config = ModelConfig(
        priors=_prior_config(raw),
        mh=MhSettings(**_section(raw, "mh", MH_KEYS)),
        chain=ChainSettings(**_section(raw, "chain", CHAIN_KEYS)),
        **model,
    )
    return FitSettings(model=config, data=data)


def load_simulate_config(path) -> SimulateSettings:
    """Parse a simulation configuration file."""
    raw = _read_yaml(path)
    _check_sections(raw, SIM_SECTIONS, path)
    body = _section(raw, "simulate", SIM_KEYS)
    transitivity = body.pop("transitivity")
    if transitivity is not None and (raw.get("simulate") or {}).get("kappa") is None:
        # transitivity studies default to serially uncorrelated paths
        body["kappa"] = (0.0, 0.0, 0.0)
    sim = SimConfig(priors=_prior_config(raw), **body)
    if transitivity is not None and sim.rank != 2:
        raise ConfigError("'simulate.transitivity' requires simulate.rank = 2")
    return SimulateSettings(sim=sim, transitivity=transitivity)


def load_input_data(
    files: DataFiles, base_dir
) -> tuple[DynamicNetwork, CovariateTensor | None, AvailabilityMatrix]:
    """Load the dataset a fit config points at, relative to ``base_dir``.

    With ``votes`` set, ballots are ingested and turned into the pairwise
    agreement network (availability derived from ballot presence);
    otherwise the dyadic CSV files are read directly.
    """
    base = Path(base_dir)

    def resolve(name):
        return None if name is None else base / name

    if files.votes is not None:
        records = load_votes(resolve(files.votes))
        net, avail = build_vote_network(records)
        cov = attach_covariates(
            net,
            avail,
            covariate_file=resolve(files.covariates),
            add_intercept=files.intercept,
        )
        return net, cov, avail
    return load_dataset(
        resolve(files.network),
        covariate_file=resolve(files.covariates),
        availability_file=resolve(files.availability),
        add_intercept=files.intercept,
    )


def model_config_to_dict(config: ModelConfig) -> dict:
    """Config echo for manifests; inverse of the loader's section tables."""
    return {
        "model": {
            "rank": config.rank,
            "variant": config.variant,
            "multiplicative_form": config.multiplicative_form,
            "kernel": config.kernel,
            "kappa_mode": config.kappa_mode,
            "kappa_fixed": list(config.kappa_fixed),
            "fixed_d": None if config.fixed_d is None else config.fixed_d.tolist(),
        },
        "priors": {
            "a": config.priors.a,
            "b": config.priors.b,
            "a_sigma": config.priors.a_sigma,
            "b_sigma": config.priors.b_sigma,
            "gamma": config.priors.gamma,
            "a_u": config.priors.a_u,
            "b_u": config.priors.b_u,
        },
        "mh": {
            "step_tau": config.mh.step_tau,
            "step_kappa": config.mh.step_kappa,
            "target_accept": config.mh.target_accept,
            "adapt": config.mh.adapt,
            "adapt_rate": config.mh.adapt_rate,
            "kappa_max": config.mh.kappa_max,
        },
        "chain": {
            "iterations": config.chain.iterations,
            "burn_in": config.chain.burn_in,
            "thin": config.chain.thin,
            "seed": config.chain.seed,
        },
    }


def model_config_from_dict(payload: dict) -> ModelConfig:
    """Rebuild a ModelConfig from a manifest echo."""
    model = dict(payload["model"])
    fixed_d = model.pop("fixed_d", None)
    return ModelConfig(
        priors=PriorConfig(**payload["priors"]),
        mh=MhSettings(**payload["mh"]),
        chain=ChainSettings(**payload["chain"]),
        fixed_d=None if fixed_d is None else np.asarray(fixed_d, dtype=float),
        kappa_fixed=tuple(model.pop("kappa_fixed")),
        **model,
    )
