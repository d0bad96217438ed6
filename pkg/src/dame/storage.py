"""On-disk layout of runs: draw CSVs, JSON manifests and sidecars.

A fit directory looks like::

    out/
      manifest.json          one per output directory
      data/                  verbatim copies of the input files
      chain_00/              one file per sampled parameter family
        beta.csv             draw,p,t,value
        theta.csv            draw,node,t,value
        ...

Values are written with ``repr`` so reading a chain back reproduces the
draws bit-for-bit; identical config + seed therefore means byte-identical
draw files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import shutil
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError
from .posterior import PosteriorDraws, active_families
from .sampler import ChainResult, ModelConfig, ModelData, initial_state

MANIFEST_NAME = "manifest.json"

## per family: index-column names and a writer/reader index layout; the
## value layout mirrors posterior._family_index so summaries and files agree
FAMILY_COLUMNS = {
    "beta": ("p", "t"),
    "theta": ("node", "t"),
    "d": ("r", "t"),
    "u": ("t", "node", "r"),
    "sigma2": (),
    "tau_beta": ("p",),
    "kappa_beta": ("p",),
    "tau_theta": (),
    "kappa_theta": (),
    "tau_d": ("r",),
    "kappa_d": ("r",),
    "tau_u": ("r", "t"),
}


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def ensure_fresh_dir(path, force: bool = False) -> Path:
    """Create an output directory, refusing to reuse one that already
    holds a manifest unless ``force`` is set."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / MANIFEST_NAME
    if marker.exists() and not force:
        raise ConfigError(
            f"{out} already contains a run (found {MANIFEST_NAME}); "
            "pass --force to overwrite"
        )
    return out


def write_manifest(out_dir, payload: dict):
    payload = dict(payload)
    payload.setdefault("package_version", __version__)
    payload.setdefault("quantile_rule", "linear")
    with open(Path(out_dir) / MANIFEST_NAME, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / MANIFEST_NAME
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"no {MANIFEST_NAME} in {run_dir}; not a run directory") from None
    except json.JSONDecodeError as err:
        raise DataError(f"{path} is not valid JSON: {err}") from None


def _index_labels(family: str, data: ModelData, config: ModelConfig):
    """Label lists matching each index column of one family's array."""
    p_names = list(data.cov_names) or [f"x{k + 1}" for k in range(data.n_cov)]
    times = [fmt_label(v) for v in data.times]
    nodes = list(data.nodes)
    ranks = [str(r + 1) for r in range(config.rank)]
    by_column = {"p": p_names, "t": times, "node": nodes, "r": ranks}
    return [by_column[c] for c in FAMILY_COLUMNS[family]]


def fmt_label(v) -> str:
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)


def write_chain(
    chain_dir, result: ChainResult, data: ModelData, config: ModelConfig
) -> list[str]:
    """Write one chain's draws, one CSV per active parameter family."""
    out = Path(chain_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for family in active_families(config):
        labels = _index_labels(family, data, config)
        rows_per_draw = [combo for combo in _grid(labels)]
        path = out / f"{family}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("draw",) + FAMILY_COLUMNS[family] + ("value",))
            for k, state in enumerate(result.draws, start=1):
                flat = np.asarray(getattr(state, family), dtype=float).reshape(-1)
                for combo, value in zip(rows_per_draw, flat):
                    w.writerow((k,) + combo + (repr(float(value)),))
        written.append(path.name)
    if data.n_missing:
        path = out / "imputed.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("draw", "t", "i", "j", "value"))
            for k, state in enumerate(result.draws, start=1):
                for (t, i, j), value in zip(data.missing_idx, state.imputed):
                    w.writerow(
                        (k, fmt_label(data.times[t]), data.nodes[i], data.nodes[j],
                         repr(float(value)))
                    )
        written.append(path.name)
    return written


def _grid(label_lists):
    out = [()]
    for labels in label_lists:
        out = [combo + (lab,) for combo in out for lab in labels]
    return out


def read_chain(chain_dir, data: ModelData, config: ModelConfig):
    """Rebuild the retained states of one chain from its CSV files.

    Families that were inactive under ``config`` are restored to their
    deterministic in-chain values (they are never updated while sampling),
    so the reconstruction is draw-for-draw exact.
    """
    chain_dir = Path(chain_dir)
    base = initial_state(data, config)
    counts: list[int] = []

    def read_family(family, path):
        labels = _index_labels(family, data, config)
        lookup = [
            {lab: idx for idx, lab in enumerate(col_labels)} for col_labels in labels
        ]
        shape = tuple(len(col) for col in labels)
        per_draw = int(np.prod(shape, dtype=int)) if shape else 1
        values: dict[int, np.ndarray] = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            want = ("draw",) + FAMILY_COLUMNS[family] + ("value",)
            if tuple(header or ()) != want:
                raise DataError(f"{path} has header {header}, expected {list(want)}")
            for row in reader:
                if not row:
                    continue
                k = int(row[0])
                arr = values.setdefault(k, np.full(shape or (1,), np.nan))
                idx = tuple(look[col] for look, col in zip(lookup, row[1:-1]))
                arr[idx if shape else (0,)] = float(row[-1])
        if not values or sorted(values) != list(range(1, len(values) + 1)):
            raise DataError(f"{path} has missing or non-contiguous draw indices")
        stacked = np.stack([values[k] for k in sorted(values)])
        if np.isnan(stacked).any():
            raise DataError(f"{path} is missing rows (expected {per_draw} per draw)")
        return stacked

    arrays = {}
    for family in active_families(config):
        path = chain_dir / f"{family}.csv"
        if not path.exists():
            raise DataError(f"missing draw file for family {family!r}: {path}")
        arrays[family] = read_family(family, path)
    n_draws = {a.shape[0] for a in arrays.values()}
    if len(n_draws) != 1:
        raise DataError(f"draw files in {chain_dir} disagree on the number of draws")
    (count,) = n_draws

    imputed = None
    if data.n_missing:
        path = chain_dir / "imputed.csv"
        if path.exists():
            imputed = _read_imputed(path, data, count)

    states = []
    for k in range(count):
        st = base.copy()
        for family, stacked in arrays.items():
            template = getattr(st, family)
            value = stacked[k]
            if np.isscalar(template) or np.ndim(template) == 0:
                setattr(st, family, float(value[0]))
            else:
                setattr(st, family, value.reshape(np.shape(template)))
        if imputed is not None:
            st.imputed = imputed[k]
        states.append(st)
    return states


def _read_imputed(path, data: ModelData, count: int) -> np.ndarray:
    key_index = {
        (fmt_label(data.times[t]), data.nodes[i], data.nodes[j]): m
        for m, (t, i, j) in enumerate(data.missing_idx)
    }
    out = np.full((count, data.n_missing), np.nan)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != ("draw", "t", "i", "j", "value"):
            raise DataError(f"{path} has an unexpected header")
        for row in reader:
            if not row:
                continue
            k = int(row[0]) - 1
            key = (row[1], row[2], row[3])
            if key not in key_index:
                raise DataError(f"{path} references unknown missing slot {key}")
            out[k, key_index[key]] = float(row[4])
    if np.isnan(out).any():
        raise DataError(f"{path} does not cover every missing slot in every draw")
    return out


## ---------------------------------------------------------------------------
## run directories


def copy_inputs(out_dir, files: dict[str, Path]) -> dict:
    """Copy input files into ``out/data`` and return name -> digest info."""
    data_dir = Path(out_dir) / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    catalog = {}
    for role, src in files.items():
        if src is None:
            continue
        dst = data_dir / Path(src).name
        shutil.copyfile(src, dst)
        catalog[role] = {"file": dst.name, "sha256": file_digest(dst)}
    return catalog


def write_truth(out_dir, truth, sim_dict: dict):
    """Ground-truth sidecar for a simulated dataset."""
    payload = {
        "simulate": sim_dict,
        "parameters": {
            "beta": truth.beta.tolist(),
            "theta": truth.theta.tolist(),
            "d": truth.d.tolist(),
            "u": truth.u.tolist(),
            "sigma2": truth.sigma2,
            "tau_beta": truth.tau_beta.tolist(),
            "kappa_beta": truth.kappa_beta.tolist(),
            "tau_theta": truth.tau_theta,
            "kappa_theta": truth.kappa_theta,
            "tau_d": truth.tau_d.tolist(),
            "kappa_d": truth.kappa_d.tolist(),
            "tau_u": truth.tau_u.tolist(),
            "held_out_values": np.asarray(truth.imputed).tolist(),
        },
    }
    with open(Path(out_dir) / "truth.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def chain_dirs(run_dir) -> list[Path]:
    run = Path(run_dir)
    dirs = sorted(p for p in run.glob("chain_*") if p.is_dir())
    if not dirs:
        raise DataError(f"no chain_* directories under {run}")
    return dirs


def load_run(run_dir):
    """Load a fit directory back into memory.

    Returns (draws, data, config, manifest) with draws pooled across all
    chains in index order.
    """
    from .config import DataFiles, load_input_data, model_config_from_dict

    run = Path(run_dir)
    manifest = read_manifest(run)
    if manifest.get("command") != "fit":
        raise DataError(f"{run} is not a fit directory")
    config = model_config_from_dict(manifest["config"])
    files = DataFiles(**manifest["data_files"])
    net, cov, avail = load_input_data(files, run / "data")
    data = ModelData(net, cov, avail)
    states = []
    for chain_dir in chain_dirs(run):
        states.extend(read_chain(chain_dir, data, config))
    draws = PosteriorDraws(
        states=tuple(states),
        config=config,
        nodes=data.nodes,
        times=np.asarray(data.times, dtype=float),
        cov_names=data.cov_names,
    )
    return draws, data, config, manifest
