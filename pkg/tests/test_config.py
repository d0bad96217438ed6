"""Configuration-file parsing and the dataset loading it drives."""

import textwrap

import numpy as np
import pytest

from dame.config import (
    DataFiles,
    load_fit_config,
    load_input_data,
    load_simulate_config,
    model_config_from_dict,
    model_config_to_dict,
)
from dame.errors import ConfigError
from dame.gp import PriorConfig
from dame.sampler import ChainSettings, MhSettings, ModelConfig


def write(tmp_path, text, name="config.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def test_fit_defaults(tmp_path):
    path = write(tmp_path, """
        data:
          network: net.csv
    """)
    settings = load_fit_config(path)
    cfg = settings.model
    assert cfg.rank == 2
    assert cfg.variant == "DAME"
    assert cfg.multiplicative_form == "eigen"
    assert cfg.kernel == "exponential"
    assert cfg.kappa_mode == "estimate"
    assert cfg.kappa_fixed == (0.0, 0.0, 0.0)
    assert cfg.fixed_d is None
    assert cfg.priors == PriorConfig(a=2.0, b=1.0, a_sigma=2.0, b_sigma=1.0, gamma=5.0)
    assert cfg.mh.step_tau == 0.4 and cfg.mh.kappa_max == 1000.0 and cfg.mh.adapt
    assert cfg.chain == ChainSettings(iterations=6000, burn_in=1000, thin=10, seed=0)
    assert settings.data == DataFiles(
        network="net.csv", covariates=None, availability=None, votes=None, intercept=False
    )


def test_fit_full_round_trip(tmp_path):
    path = write(tmp_path, """
        model:
          rank: 3
          variant: ME
          multiplicative_form: inner
          kernel: squared
          kappa_mode: fixed
          kappa_fixed: [1.0, 2.0, 3.0]
          fixed_d: [[1.0, 1.0], [-1.0, -1.0], [0.5, 0.5]]
        priors:
          a: 5.0
          b: 4.0
          a_sigma: 3.0
          b_sigma: 2.0
          gamma: 7.0
          a_u: 2.5
          b_u: 1.5
        mh:
          step_tau: 0.2
          step_kappa: 0.1
          target_accept: 0.25
          adapt: false
          adapt_rate: 0.5
          kappa_max: 50.0
        chain:
          iterations: 200
          burn_in: 50
          thin: 5
          seed: 11
        data:
          network: y.csv
          covariates: x.csv
          availability: a.csv
          intercept: true
    """)
    settings = load_fit_config(path)
    cfg = settings.model
    assert cfg.rank == 3 and cfg.variant == "ME"
    assert cfg.multiplicative_form == "inner" and cfg.kernel == "squared"
    assert cfg.kappa_mode == "fixed" and cfg.kappa_fixed == (1.0, 2.0, 3.0)
    assert np.array_equal(cfg.fixed_d, [[1, 1], [-1, -1], [0.5, 0.5]])
    assert cfg.priors.a_u == 2.5 and cfg.priors.b_u == 1.5
    assert cfg.mh == MhSettings(step_tau=0.2, step_kappa=0.1, target_accept=0.25,
                                adapt=False, adapt_rate=0.5, kappa_max=50.0)
    assert cfg.chain.seed == 11
    assert settings.data.intercept is True


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("data:\n  network: y.csv\nmodel:\n  rnak: 2\n", "rnak"),
        ("data:\n  network: y.csv\nmodle:\n  rank: 2\n", "modle"),
        ("data:\n  network: y.csv\nmodel:\n  variant: DAMES\n", "model.variant"),
        ("data:\n  network: y.csv\nchain:\n  iterations: soon\n", "chain.iterations"),
        ("data:\n  network: y.csv\nmodel:\n  kappa_fixed: [1.0, 2.0]\n", "kappa_fixed"),
    ],
)
def test_fit_rejects_bad_keys_by_name(tmp_path, text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        load_fit_config(write(tmp_path, text))


def test_fit_requires_a_response_source(tmp_path):
    with pytest.raises(ConfigError, match="data.network"):
        load_fit_config(write(tmp_path, "chain:\n  seed: 1\n"))
    with pytest.raises(ConfigError, match="mutually exclusive"):
        load_fit_config(write(tmp_path, "data:\n  network: y.csv\n  votes: v.csv\n"))
    with pytest.raises(ConfigError, match="derived from the ballots"):
        load_fit_config(write(tmp_path, "data:\n  votes: v.csv\n  availability: a.csv\n"))


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_fit_config(tmp_path / "nope.yaml")
    with pytest.raises(ConfigError, match="YAML"):
        load_fit_config(write(tmp_path, "data: [unclosed\n"))
    with pytest.raises(ConfigError, match="mapping"):
        load_fit_config(write(tmp_path, "- just\n- a list\n"))
    # an empty file is a valid mapping but supplies no data source
    with pytest.raises(ConfigError, match="required"):
        load_fit_config(write(tmp_path, ""))


def test_simulate_defaults_and_transitivity_guard(tmp_path):
    settings = load_simulate_config(write(tmp_path, "simulate:\n  seed: 9\n"))
    sim = settings.sim
    assert (sim.n_nodes, sim.n_times, sim.n_cov, sim.rank) == (20, 10, 1, 2)
    assert sim.kappa == (10.0, 10.0, 10.0) and sim.seed == 9
    assert settings.transitivity is None

    settings = load_simulate_config(write(tmp_path, """
        simulate:
          transitivity: mixed
    """))
    assert settings.transitivity == "mixed"
    # transitivity studies default to uncorrelated paths unless overridden
    assert settings.sim.kappa == (0.0, 0.0, 0.0)
    override = load_simulate_config(write(tmp_path, """
        simulate:
          transitivity: mixed
          kappa: [10, 10, 0]
    """))
    assert override.sim.kappa == (10.0, 10.0, 0.0)

    with pytest.raises(ConfigError, match="rank"):
        load_simulate_config(write(tmp_path, """
            simulate:
              rank: 1
              transitivity: positive
        """))
    with pytest.raises(ConfigError, match="simulate.transitivity"):
        load_simulate_config(write(tmp_path, "simulate:\n  transitivity: sideways\n"))


def test_simulate_rejects_fit_sections(tmp_path):
    with pytest.raises(ConfigError, match="chain"):
        load_simulate_config(write(tmp_path, "simulate:\n  seed: 1\nchain:\n  seed: 2\n"))


VOTES = """\
t,vote_id,node,ballot
1,r1,alpha,Y
1,r1,bravo,Y
1,r1,congo,N
1,r2,alpha,Y
1,r2,bravo,N
1,r2,congo,A
2,r3,alpha,N
2,r3,bravo,N
"""


def test_load_input_data_votes_pipeline(tmp_path):
    (tmp_path / "votes.csv").write_text(VOTES)
    files = DataFiles(network=None, covariates=None, availability=None,
                      votes="votes.csv", intercept=True)
    net, cov, avail = load_input_data(files, tmp_path)
    assert net.nodes == ("alpha", "bravo", "congo")
    a, b, c = 0, 1, 2
    # t=1: alpha/bravo agree on r1, split on r2
    assert net.values[0, a, b] == pytest.approx(0.5)
    # abstain against a definite vote scores one half
    assert net.values[0, b, c] == pytest.approx(0.25)
    # congo casts no ballot at t=2 -> unavailable there
    assert avail.entries[c, 0] and not avail.entries[c, 1]
    assert net.values[1, a, b] == pytest.approx(1.0)
    # intercept flag materializes a constant covariate
    assert cov.names == ("intercept",)
    assert np.all(cov.values[0, 0, a, b] == 1.0)


def test_load_input_data_network_files(tmp_path):
    (tmp_path / "net.csv").write_text("t,i,j,value\n1,u,v,0.5\n1,u,w,-0.25\n1,v,w,0.0\n")
    files = DataFiles(network="net.csv", covariates=None, availability=None,
                      votes=None, intercept=False)
    net, cov, avail = load_input_data(files, tmp_path)
    assert net.n_nodes == 3 and net.n_times == 1
    assert cov is None or cov.n_covariates == 0
    assert avail.entries.all()


def test_model_config_dict_round_trip():
    config = ModelConfig(
        rank=2,
        variant="DAME",
        multiplicative_form="eigen",
        kernel="squared",
        kappa_mode="fixed",
        kappa_fixed=(4.0, 5.0, 6.0),
        fixed_d=np.array([[2.0, 2.0], [-2.0, -2.0]]),
        priors=PriorConfig(a=3.0, b=2.0, a_u=1.5, b_u=0.5),
        mh=MhSettings(step_tau=0.3),
        chain=ChainSettings(iterations=100, burn_in=10, thin=3, seed=4),
    )
    payload = model_config_to_dict(config)
    rebuilt = model_config_from_dict(payload)
    assert rebuilt.kappa_fixed == config.kappa_fixed
    assert np.array_equal(rebuilt.fixed_d, config.fixed_d)
    assert rebuilt.priors == config.priors
    assert rebuilt.mh == config.mh
    assert rebuilt.chain == config.chain
    assert (rebuilt.rank, rebuilt.variant, rebuilt.kernel) == (2, "DAME", "squared")
    # and the dict is JSON-ready (no numpy scalars/arrays)
    import json

    json.dumps(payload)


def test_model_config_dict_round_trip_none_fixed_d():
    config = ModelConfig(rank=0, variant="AE")
    rebuilt = model_config_from_dict(model_config_to_dict(config))
    assert rebuilt.fixed_d is None and rebuilt.rank == 0 and rebuilt.variant == "AE"
