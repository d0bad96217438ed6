"""Command-line interface: ``dame simulate | fit | analyze``.

Each command writes into a fresh output directory with a ``manifest.json``
recording the configuration, input digests and produced files; reruns
refuse to overwrite an existing run unless ``--force`` is given.
Exit codes: 0 success, 2 configuration problem, 3 data problem,
4 numerical failure inside the sampler.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, storage
from .config import (
    DataFiles,
    load_fit_config,
    load_input_data,
    load_simulate_config,
    model_config_to_dict,
)
from .data import (
    write_availability_csv,
    write_covariates_csv,
    write_network_csv,
)
from .errors import ConfigError, DameError
from .generator import (
    complete_availability,
    simulate_dataset,
    simulate_transitivity_dataset,
)
from .posterior import (
    active_families,
    credible_ellipse,
    degree_stats,
    identify_latent,
    lagged_degree_correlation,
    ppc_degree_correlations,
    ppc_sample,
    summarize,
)
from .sampler import ModelData, run_chain

ANALYZE_TASKS = ("summary", "ppc", "dc", "latent")
DEGREE_MOMENTS = (1, 2, 3)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dame",
        description="Dynamic additive and multiplicative effects models for "
        "symmetric longitudinal networks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    sim.add_argument("--config", required=True, help="simulation config (YAML)")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--force", action="store_true", help="overwrite an existing run")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="run the Gibbs sampler on a dataset")
    fit.add_argument("--config", required=True, help="fit config (YAML)")
    fit.add_argument("--data", required=True, help="directory holding the input files")
    fit.add_argument("--out", required=True, help="output directory")
    fit.add_argument("--chains", type=int, default=1,
                     help="independent chains, seeds offset by index (default 1)")
    fit.add_argument("--force", action="store_true", help="overwrite an existing run")
    fit.set_defaults(func=cmd_fit)

    an = sub.add_parser("analyze", help="summaries and checks from a fit directory")
    an.add_argument("--draws", required=True, help="fit output directory")
    an.add_argument("--tasks", default="summary",
                    help=f"comma-separated subset of {','.join(ANALYZE_TASKS)}")
    an.add_argument("--out", default=None,
                    help="output directory (default: <draws>/analysis)")
    an.add_argument("--seed", type=int, default=0,
                    help="seed for posterior predictive draws (default 0)")
    an.add_argument("--ppc-count", type=int, default=500,
                    help="posterior predictive replicates (default 500)")
    an.add_argument("--lags", default="1,2,3",
                    help="lags for degree correlations (default 1,2,3)")
    an.add_argument("--node", default=None,
                    help="focal node for the degree check plot (default: first node)")
    an.add_argument("--svg", action="store_true", help="also render SVG figures")
    an.add_argument("--force", action="store_true", help="overwrite an existing run")
    an.set_defaults(func=cmd_analyze)
    return parser


## ---------------------------------------------------------------------------
## simulate


def _sim_dict(settings) -> dict:
    sim, priors = settings.sim, settings.sim.priors
    return {
        "n_nodes": sim.n_nodes,
        "n_times": sim.n_times,
        "n_cov": sim.n_cov,
        "rank": sim.rank,
        "kappa": list(sim.kappa),
        "missing_fraction": sim.missing_fraction,
        "seed": sim.seed,
        "fixed_d": None if sim.fixed_d is None else sim.fixed_d.tolist(),
        "transitivity": settings.transitivity,
        "priors": {
            "a": priors.a, "b": priors.b,
            "a_sigma": priors.a_sigma, "b_sigma": priors.b_sigma,
            "gamma": priors.gamma, "a_u": priors.a_u, "b_u": priors.b_u,
        },
    }


def cmd_simulate(args) -> int:
    start = time.perf_counter()
    settings = load_simulate_config(args.config)
    out = storage.ensure_fresh_dir(args.out, force=args.force)
    if settings.transitivity is not None:
        net, cov, truth = simulate_transitivity_dataset(settings.sim, settings.transitivity)
    else:
        net, cov, truth = simulate_dataset(settings.sim)
    avail = complete_availability(net.n_nodes, net.n_times, net.nodes)

    write_network_csv(net, out / "network.csv")
    write_availability_csv(avail, out / "availability.csv")
    outputs = ["network.csv", "availability.csv"]
    if cov.n_covariates:
        write_covariates_csv(cov, net.nodes, out / "covariates.csv", avail)
        outputs.append("covariates.csv")
    sim_dict = _sim_dict(settings)
    storage.write_truth(out, truth, sim_dict)
    outputs.append("truth.json")

    storage.write_manifest(out, {
        "command": "simulate",
        "config": sim_dict,
        "outputs": {name: storage.file_digest(out / name) for name in outputs},
        "wall_time_seconds": round(time.perf_counter() - start, 3),
    })
    print(f"wrote {net.n_nodes} nodes x {net.n_times} timepoints to {out}")
    return 0


## ---------------------------------------------------------------------------
## fit


def cmd_fit(args) -> int:
    start = time.perf_counter()
    if args.chains < 1:
        raise ConfigError("--chains must be at least 1")
    settings = load_fit_config(args.config)
    out = storage.ensure_fresh_dir(args.out, force=args.force)
    net, cov, avail = load_input_data(settings.data, args.data)
    data = ModelData(net, cov, avail)

    base = Path(args.data)
    sources = {
        role: base / name
        for role, name in (
            ("network", settings.data.network),
            ("covariates", settings.data.covariates),
            ("availability", settings.data.availability),
            ("votes", settings.data.votes),
        )
        if name is not None
    }
    catalog = storage.copy_inputs(out, sources)
    copied = DataFiles(
        network=catalog.get("network", {}).get("file"),
        covariates=catalog.get("covariates", {}).get("file"),
        availability=catalog.get("availability", {}).get("file"),
        votes=catalog.get("votes", {}).get("file"),
        intercept=settings.data.intercept,
    )

    chain_infos = []
    for c in range(args.chains):
        config = replace(
            settings.model,
            chain=replace(settings.model.chain, seed=settings.model.chain.seed + c),
        )
        result = run_chain(data, config)
        name = f"chain_{c:02d}"
        files = storage.write_chain(out / name, result, data, config)
        chain_infos.append({
            "directory": name,
            "seed": result.seed,
            "draws": len(result),
            "acceptance": result.acceptance,
            "runtime_seconds": round(result.runtime_seconds, 3),
            "files": files,
        })
        rates = ", ".join(f"{k}={v:.2f}" for k, v in sorted(result.acceptance.items()))
        print(f"{name}: {len(result)} draws retained"
              + (f" (acceptance {rates})" if rates else ""))

    storage.write_manifest(out, {
        "command": "fit",
        "config": model_config_to_dict(settings.model),
        "data_files": {
            "network": copied.network,
            "covariates": copied.covariates,
            "availability": copied.availability,
            "votes": copied.votes,
            "intercept": copied.intercept,
        },
        "input_digests": catalog,
        "data_summary": {
            "n_nodes": data.n_nodes,
            "n_times": data.n_times,
            "n_covariates": data.n_cov,
            "n_random_missing": data.n_missing,
        },
        "chains": chain_infos,
        "wall_time_seconds": round(time.perf_counter() - start, 3),
    })
    print(f"fit complete: {args.chains} chain(s) in {out}")
    return 0


## ---------------------------------------------------------------------------
## analyze


def _parse_tasks(raw: str) -> list[str]:
    tasks = [t.strip() for t in raw.split(",") if t.strip()]
    unknown = sorted(set(tasks) - set(ANALYZE_TASKS))
    if unknown:
        raise ConfigError(
            f"unknown task(s) {unknown}; available: {', '.join(ANALYZE_TASKS)}"
        )
    if not tasks:
        raise ConfigError("no tasks given")
    return [t for t in ANALYZE_TASKS if t in tasks]


def _parse_lags(raw: str) -> tuple[int, ...]:
    try:
        lags = tuple(int(tok) for tok in raw.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"--lags must be comma-separated integers, got {raw!r}") from None
    if not lags or any(lag < 1 for lag in lags):
        raise ConfigError("--lags must contain positive integers")
    return lags


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _observed_tensor(data: ModelData) -> np.ndarray:
    return np.where(data.observed, data.y, np.nan)


def _task_summary(out, draws, config, svg: bool) -> list[str]:
    written = []
    for family in active_families(config):
        rows = summarize(draws, family)
        header = storage.FAMILY_COLUMNS[family] + ("mean", "lo", "hi")
        name = f"summary_{family}.csv"
        _write_rows(out / name, header,
                    ([row[c] for c in header] for row in rows))
        written.append(name)
    if svg:
        from . import plots

        rows = summarize(draws, "beta")
        series = {}
        for p in draws.cov_names:
            mine = [r for r in rows if r["p"] == p]
            series[p] = tuple(
                np.array([r[k] for r in mine]) for k in ("mean", "lo", "hi")
            )
        plots.render_paths(out / "beta_paths.svg", draws.times, series,
                           ylabel="coefficient")
        written.append("beta_paths.svg")
    return written


def _task_ppc(out, data, replicates, node, svg: bool) -> list[str]:
    observed = _observed_tensor(data)
    obs_deg = np.stack([degree_stats(observed, m) for m in DEGREE_MOMENTS])  # (M, N, T)
    rep_deg = np.stack(
        [np.stack([degree_stats(rep, m) for m in DEGREE_MOMENTS]) for rep in replicates]
    )  # (S, M, N, T)

    def block_rows(block):
        for m_idx, moment in enumerate(DEGREE_MOMENTS):
            for n_idx, label in enumerate(data.nodes):
                for t_idx in range(data.n_times):
                    yield (storage.fmt_label(data.times[t_idx]), label, moment,
                           repr(float(block[m_idx, n_idx, t_idx])))

    _write_rows(out / "ppc_degrees.csv",
                ("replicate", "t", "node", "moment", "degree"),
                ((s + 1,) + row
                 for s in range(rep_deg.shape[0])
                 for row in block_rows(rep_deg[s])))
    _write_rows(out / "observed_degrees.csv",
                ("t", "node", "moment", "degree"), block_rows(obs_deg))
    written = ["ppc_degrees.csv", "observed_degrees.csv"]

    if svg:
        from . import plots

        n_idx = data.nodes.index(node)
        bands = np.quantile(rep_deg[:, :, n_idx, :], (0.025, 0.975), axis=0)  # (2, M, T)
        plots.render_ppc_degrees(
            out / "ppc_degrees.svg", data.times, node,
            obs_deg[:, n_idx, :], np.swapaxes(bands, 0, 1),
        )
        written.append("ppc_degrees.svg")
    return written


def _task_dc(out, data, replicates, lags, svg: bool) -> list[str]:
    observed = {
        lag: lagged_degree_correlation(_observed_tensor(data), lag, data.avail_nodes)
        for lag in lags
    }
    rep_dc = ppc_degree_correlations(replicates, lags=lags, avail_nodes=data.avail_nodes)

    rows = [(lag, "observed", 0, repr(float(observed[lag]))) for lag in lags]
    for j, lag in enumerate(lags):
        rows.extend(
            (lag, "replicate", s + 1, repr(float(rep_dc[j, s])))
            for s in range(rep_dc.shape[1])
        )
    _write_rows(out / "dc.csv", ("lag", "source", "replicate", "value"), rows)
    written = ["dc.csv"]
    if svg:
        from . import plots

        plots.render_dc(out / "dc.svg", lags, observed, rep_dc)
        written.append("dc.svg")
    return written


def _task_latent(out, draws, data, svg: bool) -> list[str]:
    pos = identify_latent(draws)
    n_draws = pos.coords.shape[0]

    def draw_rows():
        for s in range(n_draws):
            for t_idx in range(data.n_times):
                t_label = storage.fmt_label(data.times[t_idx])
                for n_idx, label in enumerate(data.nodes):
                    for r in range(pos.rank):
                        yield (
                            s + 1, t_label, label, r + 1,
                            repr(float(pos.coords[s, t_idx, n_idx, r])),
                            int(pos.signs[s, t_idx, r]),
                        )

    _write_rows(out / "latent_draws.csv",
                ("draw", "t", "node", "dim", "value", "sign"), draw_rows())
    written = ["latent_draws.csv"]

    mean = pos.mean_coords()  # (T, N, R)
    _write_rows(
        out / "latent_summary.csv", ("t", "node", "dim", "mean"),
        (
            (storage.fmt_label(data.times[t]), data.nodes[n], r + 1, repr(float(mean[t, n, r])))
            for t in range(data.n_times)
            for n in range(data.n_nodes)
            for r in range(pos.rank)
        ),
    )
    written.append("latent_summary.csv")

    ellipses = {}
    if pos.rank >= 2 and n_draws >= 3:
        rows = []
        for t in range(data.n_times):
            for n, label in enumerate(data.nodes):
                center, half_axes, angle = credible_ellipse(pos.coords[:, t, n, :2])
                ellipses[(t, n)] = (center, half_axes, angle)
                rows.append((
                    storage.fmt_label(data.times[t]), label,
                    repr(float(center[0])), repr(float(center[1])),
                    repr(float(half_axes[0])), repr(float(half_axes[1])),
                    repr(float(angle)),
                ))
        _write_rows(out / "latent_ellipses.csv",
                    ("t", "node", "center_1", "center_2",
                     "half_major", "half_minor", "angle_degrees"), rows)
        written.append("latent_ellipses.csv")

    if svg:
        from . import plots

        t_last = data.n_times - 1
        t_label = storage.fmt_label(data.times[t_last])
        plots.render_latent(
            out / f"latent_t{t_label}.svg",
            mean[t_last, :, :2] if pos.rank >= 2
            else np.column_stack([mean[t_last, :, 0], np.zeros(data.n_nodes)]),
            data.nodes,
            [ellipses.get((t_last, n)) for n in range(data.n_nodes)],
            title=f"latent positions at t={t_label}",
        )
        written.append(f"latent_t{t_label}.svg")
    return written


def cmd_analyze(args) -> int:
    start = time.perf_counter()
    tasks = _parse_tasks(args.tasks)
    lags = _parse_lags(args.lags)
    if args.ppc_count < 1:
        raise ConfigError("--ppc-count must be at least 1")
    draws, data, config, fit_manifest = storage.load_run(args.draws)
    node = args.node if args.node is not None else data.nodes[0]
    if node not in data.nodes:
        raise ConfigError(f"node {node!r} is not in this dataset")

    out = storage.ensure_fresh_dir(
        args.out if args.out is not None else Path(args.draws) / "analysis",
        force=args.force,
    )
    written: list[str] = []
    replicates = None
    if "ppc" in tasks or "dc" in tasks:
        rng = np.random.default_rng(args.seed)
        replicates = ppc_sample(rng, draws, data, count=args.ppc_count)

    if "summary" in tasks:
        written += _task_summary(out, draws, config, args.svg)
    if "ppc" in tasks:
        written += _task_ppc(out, data, replicates, node, args.svg)
    if "dc" in tasks:
        written += _task_dc(out, data, replicates, lags, args.svg)
    if "latent" in tasks:
        written += _task_latent(out, draws, data, args.svg)

    storage.write_manifest(out, {
        "command": "analyze",
        "source": str(Path(args.draws)),
        "source_config": fit_manifest["config"],
        "tasks": tasks,
        "seed": args.seed,
        "ppc_count": args.ppc_count if replicates is not None else None,
        "lags": list(lags),
        "draw_count": len(draws.states),
        "outputs": {name: storage.file_digest(out / name) for name in written},
        "wall_time_seconds": round(time.perf_counter() - start, 3),
    })
    print(f"analysis ({', '.join(tasks)}) written to {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DameError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
