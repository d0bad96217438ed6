"""End-to-end runs of the command-line interface (in-process)."""

import json
import textwrap

import pytest

from dame import storage
from dame.cli import main
from dame.errors import NumericalError

SIM = """
simulate:
  n_nodes: 7
  n_times: 5
  n_cov: 1
  rank: 1
  missing_fraction: 0.1
  seed: 21
"""

FIT = """
model:
  rank: 1
chain:
  iterations: 40
  burn_in: 20
  thin: 2
  seed: 9
data:
  network: network.csv
  covariates: covariates.csv
  availability: availability.csv
"""


def write_yaml(path, text):
    path.write_text(textwrap.dedent(text))
    return path


@pytest.fixture
def workspace(tmp_path):
    sim_cfg = write_yaml(tmp_path / "sim.yaml", SIM)
    fit_cfg = write_yaml(tmp_path / "fit.yaml", FIT)
    data_dir = tmp_path / "data"
    assert main(["simulate", "--config", str(sim_cfg), "--out", str(data_dir)]) == 0
    return tmp_path, fit_cfg, data_dir


def test_simulate_outputs(workspace):
    tmp_path, _, data_dir = workspace
    for name in ("network.csv", "covariates.csv", "availability.csv",
                 "truth.json", "manifest.json"):
        assert (data_dir / name).exists(), name
    manifest = storage.read_manifest(data_dir)
    assert manifest["command"] == "simulate"
    assert manifest["config"]["seed"] == 21
    # recorded digests match the files on disk
    for name, digest in manifest["outputs"].items():
        assert storage.file_digest(data_dir / name) == digest


def test_simulate_refuses_rerun_without_force(workspace, capsys):
    tmp_path, _, data_dir = workspace
    rc = main(["simulate", "--config", str(tmp_path / "sim.yaml"), "--out", str(data_dir)])
    assert rc == 2
    assert "--force" in capsys.readouterr().err
    rc = main(["simulate", "--config", str(tmp_path / "sim.yaml"),
               "--out", str(data_dir), "--force"])
    assert rc == 0


def test_fit_then_analyze(workspace):
    tmp_path, fit_cfg, data_dir = workspace
    run = tmp_path / "run"
    rc = main(["fit", "--config", str(fit_cfg), "--data", str(data_dir),
               "--out", str(run), "--chains", "2"])
    assert rc == 0
    manifest = storage.read_manifest(run)
    assert [c["seed"] for c in manifest["chains"]] == [9, 10]
    assert (run / "chain_00" / "beta.csv").exists()
    assert (run / "chain_01" / "beta.csv").exists()
    # chains with different seeds produce different draws
    assert ((run / "chain_00" / "sigma2.csv").read_bytes()
            != (run / "chain_01" / "sigma2.csv").read_bytes())
    # inputs were copied verbatim
    assert ((run / "data" / "network.csv").read_bytes()
            == (data_dir / "network.csv").read_bytes())

    rc = main(["analyze", "--draws", str(run),
               "--tasks", "summary,ppc,dc,latent", "--ppc-count", "50"])
    assert rc == 0
    analysis = run / "analysis"
    for name in ("summary_beta.csv", "summary_sigma2.csv", "ppc_degrees.csv",
                 "observed_degrees.csv", "dc.csv", "latent_draws.csv",
                 "latent_summary.csv", "manifest.json"):
        assert (analysis / name).exists(), name
    meta = storage.read_manifest(analysis)
    assert meta["command"] == "analyze"
    assert meta["tasks"] == ["summary", "ppc", "dc", "latent"]
    assert meta["draw_count"] == 20
    # no SVG without the flag
    assert not list(analysis.glob("*.svg"))


def test_fit_reruns_are_byte_identical(workspace):
    tmp_path, fit_cfg, data_dir = workspace
    outs = []
    for name in ("run_a", "run_b"):
        out = tmp_path / name
        assert main(["fit", "--config", str(fit_cfg), "--data", str(data_dir),
                     "--out", str(out)]) == 0
        outs.append(out)
    a_files = sorted((outs[0] / "chain_00").iterdir())
    b_files = sorted((outs[1] / "chain_00").iterdir())
    assert [f.name for f in a_files] == [f.name for f in b_files]
    for fa, fb in zip(a_files, b_files):
        assert fa.read_bytes() == fb.read_bytes(), fa.name


def test_analyze_is_seed_deterministic(workspace):
    tmp_path, fit_cfg, data_dir = workspace
    run = tmp_path / "run"
    assert main(["fit", "--config", str(fit_cfg), "--data", str(data_dir),
                 "--out", str(run)]) == 0
    for name in ("an1", "an2"):
        assert main(["analyze", "--draws", str(run), "--tasks", "ppc,dc",
                     "--out", str(tmp_path / name), "--seed", "4",
                     "--ppc-count", "30"]) == 0
    assert ((tmp_path / "an1" / "ppc_degrees.csv").read_bytes()
            == (tmp_path / "an2" / "ppc_degrees.csv").read_bytes())
    assert ((tmp_path / "an1" / "dc.csv").read_bytes()
            == (tmp_path / "an2" / "dc.csv").read_bytes())
    # a different seed draws different replicates
    assert main(["analyze", "--draws", str(run), "--tasks", "dc",
                 "--out", str(tmp_path / "an3"), "--seed", "5",
                 "--ppc-count", "30"]) == 0
    assert ((tmp_path / "an1" / "dc.csv").read_bytes()
            != (tmp_path / "an3" / "dc.csv").read_bytes())


def test_svg_rendering(workspace):
    tmp_path, fit_cfg, data_dir = workspace
    run = tmp_path / "run"
    assert main(["fit", "--config", str(fit_cfg), "--data", str(data_dir),
                 "--out", str(run)]) == 0
    rc = main(["analyze", "--draws", str(run), "--tasks", "summary,ppc,dc,latent",
               "--ppc-count", "20", "--svg"])
    assert rc == 0
    analysis = run / "analysis"
    svgs = {p.name for p in analysis.glob("*.svg")}
    assert {"beta_paths.svg", "ppc_degrees.svg", "dc.svg"} <= svgs
    assert any(name.startswith("latent_t") for name in svgs)
    for name in svgs:
        assert b"<svg" in (analysis / name).read_bytes()


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "bad.yaml", """
        model:
          rnak: 2
        data:
          network: net.csv
    """)
    rc = main(["fit", "--config", str(cfg), "--data", str(tmp_path),
               "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "rnak" in capsys.readouterr().err


def test_data_error_exit_code(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "fit.yaml", FIT)
    rc = main(["fit", "--config", str(cfg), "--data", str(tmp_path / "nowhere"),
               "--out", str(tmp_path / "out")])
    assert rc == 3
    assert "error:" in capsys.readouterr().err


def test_numerical_error_exit_code(workspace, monkeypatch, capsys):
    tmp_path, fit_cfg, data_dir = workspace

    def explode(data, config):
        raise NumericalError("non-finite sampler state at iteration 17")

    import dame.cli as cli_mod

    monkeypatch.setattr(cli_mod, "run_chain", explode)
    rc = main(["fit", "--config", str(fit_cfg), "--data", str(data_dir),
               "--out", str(tmp_path / "out")])
    assert rc == 4
    assert "iteration 17" in capsys.readouterr().err


def test_analyze_rejects_unknown_task_and_bad_counts(workspace, capsys):
    tmp_path, fit_cfg, data_dir = workspace
    run = tmp_path / "run"
    assert main(["fit", "--config", str(fit_cfg), "--data", str(data_dir),
                 "--out", str(run)]) == 0
    assert main(["analyze", "--draws", str(run), "--tasks", "summary,scatter"]) == 2
    assert "scatter" in capsys.readouterr().err
    assert main(["analyze", "--draws", str(run), "--tasks", "dc", "--lags", "0,1"]) == 2
    assert main(["analyze", "--draws", str(run), "--tasks", "ppc",
                 "--ppc-count", "0"]) == 2
    assert main(["analyze", "--draws", str(run), "--node", "nobody"]) == 2


def test_latent_task_requires_multiplicative_fit(workspace, capsys):
    tmp_path, _, data_dir = workspace
    cfg = write_yaml(tmp_path / "ae.yaml", """
        model:
          variant: AE
        chain:
          iterations: 30
          burn_in: 10
          thin: 2
          seed: 1
        data:
          network: network.csv
          covariates: covariates.csv
          availability: availability.csv
    """)
    run = tmp_path / "ae_run"
    assert main(["fit", "--config", str(cfg), "--data", str(data_dir),
                 "--out", str(run)]) == 0
    rc = main(["analyze", "--draws", str(run), "--tasks", "latent"])
    assert rc == 2
    assert "multiplicative" in capsys.readouterr().err


def test_analyze_refuses_existing_out_without_force(workspace):
    tmp_path, fit_cfg, data_dir = workspace
    run = tmp_path / "run"
    assert main(["fit", "--config", str(fit_cfg), "--data", str(data_dir),
                 "--out", str(run)]) == 0
    assert main(["analyze", "--draws", str(run), "--tasks", "summary"]) == 0
    assert main(["analyze", "--draws", str(run), "--tasks", "summary"]) == 2
    assert main(["analyze", "--draws", str(run), "--tasks", "summary", "--force"]) == 0


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "dame" in capsys.readouterr().out
