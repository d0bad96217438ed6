"""Containers, validation and file formats for dynamic symmetric networks.

A dataset is a stack of T symmetric N x N relational matrices with a
per-entry observation mask, symmetric dyadic covariates, and an N x T
availability matrix that separates the two kinds of missingness: entries
involving an unavailable node are structurally missing (excluded from the
model entirely), while absent entries between available nodes are missing
at random (imputed during sampling).  Roll-call style vote records can be
aggregated into agreement networks.

File formats are long CSVs with 1-based timepoints and string node labels:
networks ``t,i,j,value`` (empty value = missing), covariates
``t,i,j,p,value``, availability ``node,t,available`` (omitted rows default
to available), votes ``t,vote_id,node,ballot``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

# Missingness classification codes.
OBSERVED = 0
RANDOM_MISSING = 1
STRUCTURAL_MISSING = 2

# Ballot codes; ABSENT is excluded from agreement scores.
BALLOT_YES = 0
BALLOT_ABSTAIN = 1
BALLOT_NO = 2
BALLOT_ABSENT = 3
BALLOT_CODES = {"Y": BALLOT_YES, "A": BALLOT_ABSTAIN, "N": BALLOT_NO, "absent": BALLOT_ABSENT}


@dataclass(frozen=True)
class DynamicNetwork:
    """T x N x N response stack; ``mask`` flags observed off-diagonal entries."""

    values: np.ndarray  # float, NaN where unobserved
    mask: np.ndarray  # bool, True = observed
    nodes: tuple[str, ...]

    def __post_init__(self):
        v, m = self.values, self.mask
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise DataError("network values must have shape (T, N, N)")
        if m.shape != v.shape or m.dtype != bool:
            raise DataError("network mask must be a boolean array matching values")
        if v.shape[1] != len(self.nodes):
            raise DataError("node labels must match the network dimension")
        if len(set(self.nodes)) != len(self.nodes):
            raise DataError("duplicate node labels")
        diag = np.arange(v.shape[1])
        if m[:, diag, diag].any():
            raise DataError("self-ties are undefined: diagonal entries cannot be observed")
        if not np.array_equal(m, m.transpose(0, 2, 1)):
            raise DataError("observation mask must be symmetric")
        obs = np.where(m, v, 0.0)
        if not np.isfinite(obs).all():
            raise DataError("observed network values must be finite")
        if not np.array_equal(obs, obs.transpose(0, 2, 1)):
            raise DataError("observed network values must be symmetric")

    @property
    def n_times(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CovariateTensor:
    """T x P x N x N stack of symmetric dyadic covariates."""

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        v = self.values
        if v.ndim != 4 or v.shape[2] != v.shape[3]:
            raise DataError("covariate values must have shape (T, P, N, N)")
        if v.shape[1] != len(self.names):
            raise DataError("covariate names must match the P dimension")
        if len(set(self.names)) != len(self.names):
            raise DataError("duplicate covariate names")
        if not np.isfinite(v).all():
            raise DataError("covariate values must be finite")
        if not np.array_equal(v, v.transpose(0, 1, 3, 2)):
            raise DataError("asymmetric covariate slice")

    @property
    def n_covariates(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AvailabilityMatrix:
    """N x T availability flags; every node must be available somewhere."""

    entries: np.ndarray  # bool (N, T)
    nodes: tuple[str, ...]

    def __post_init__(self):
        e = self.entries
        if e.ndim != 2 or e.dtype != bool:
            raise DataError("availability entries must be a boolean (N, T) array")
        if e.shape[0] != len(self.nodes):
            raise DataError("availability node labels must match the N dimension")
        never = [self.nodes[i] for i in np.flatnonzero(~e.any(axis=1))]
        if never:
            raise DataError(f"nodes never available: {', '.join(never)}")


@dataclass(frozen=True)
class MissingnessClassification:
    """Per-entry labels partitioning the off-diagonal into observed,
    random-missing and structural-missing (the diagonal is always coded
    structural and sits outside the partition)."""

    labels: np.ndarray  # int8 (T, N, N)

    @property
    def observed(self) -> np.ndarray:
        return self.labels == OBSERVED

    @property
    def random_missing(self) -> np.ndarray:
        return self.labels == RANDOM_MISSING

    @property
    def structural_missing(self) -> np.ndarray:
        return self.labels == STRUCTURAL_MISSING

    def counts(self) -> dict[str, int]:
        return {
            "observed": int(self.observed.sum()),
            "random_missing": int(self.random_missing.sum()),
            "structural_missing": int(self.structural_missing.sum()),
        }


@dataclass(frozen=True)
class VoteRecords:
    """Ballot matrices grouped by timepoint: ``ballots[t]`` is
    (n_votes, N) with integer ballot codes."""

    ballots: dict[int, np.ndarray]
    nodes: tuple[str, ...]

    def __post_init__(self):
        if not self.ballots:
            raise DataError("vote records contain no timepoints")
        for t, arr in self.ballots.items():
            if arr.ndim != 2 or arr.shape[1] != len(self.nodes):
                raise DataError(f"ballot matrix for timepoint {t} has wrong shape")

    @property
    def n_times(self) -> int:
        return max(self.ballots)


def pair_available(avail: AvailabilityMatrix) -> np.ndarray:
    """(T, N, N) bool: both endpoints available and i != j."""
    a = avail.entries.T.astype(bool)  # (T, N)
    both = a[:, :, None] & a[:, None, :]
    n = avail.entries.shape[0]
    both[:, np.arange(n), np.arange(n)] = False
    return both


def classify_missingness(
    net: DynamicNetwork, avail: AvailabilityMatrix
) -> MissingnessClassification:
    """Label every entry observed / random-missing / structural-missing.

    An observed value sitting at a structurally missing position is an
    inconsistency in the data and raises.
    """
    if avail.entries.shape != (net.n_nodes, net.n_times):
        raise DataError("availability shape does not match the network")
    valid = pair_available(avail)
    bad = net.mask & ~valid
    if bad.any():
        t, i, j = map(int, np.argwhere(bad)[0])
        raise DataError(
            f"observed value at structurally missing position "
            f"(t={t + 1}, {net.nodes[i]}, {net.nodes[j]}): node unavailable"
        )
    labels = np.full(net.values.shape, STRUCTURAL_MISSING, dtype=np.int8)
    labels[valid & ~net.mask] = RANDOM_MISSING
    labels[net.mask] = OBSERVED
    return MissingnessClassification(labels)


def apply_availability(net: DynamicNetwork, avail: AvailabilityMatrix) -> DynamicNetwork:
    """Blank every entry whose dyad is structurally missing under ``avail``."""
    valid = pair_available(avail)
    values = np.where(net.mask & valid, net.values, np.nan)
    return DynamicNetwork(values=values, mask=net.mask & valid, nodes=net.nodes)


def agreement_index(ballots_i: np.ndarray, ballots_j: np.ndarray) -> float:
    """Mean pairwise agreement over votes both nodes participated in.

    Identical ballots score 1 (abstain/abstain included), yes/no score 0,
    abstain against yes-or-no scores 1/2; absences drop out.  NaN when the
    two nodes share no vote.
    """
    bi = np.asarray(ballots_i)
    bj = np.asarray(ballots_j)
    if bi.shape != bj.shape:
        raise DataError("ballot vectors must have equal length")
    joint = (bi != BALLOT_ABSENT) & (bj != BALLOT_ABSENT)
    if not joint.any():
        return float("nan")
    bi, bj = bi[joint], bj[joint]
    score = np.where(
        bi == bj, 1.0, np.where((bi == BALLOT_ABSTAIN) | (bj == BALLOT_ABSTAIN), 0.5, 0.0)
    )
    return float(score.mean())


def build_vote_network(records: VoteRecords) -> tuple[DynamicNetwork, AvailabilityMatrix]:
    """Aggregate ballots into a T x N x N agreement network.

    A node absent from every vote at a timepoint is unavailable there;
    dyads of available nodes with no joint vote come out random-missing.
    """
    n = len(records.nodes)
    n_times = records.n_times
    missing_ts = sorted(set(range(1, n_times + 1)) - set(records.ballots))
    if missing_ts:
        raise DataError(f"no votes recorded for timepoint(s): {missing_ts}")
    values = np.full((n_times, n, n), np.nan)
    mask = np.zeros((n_times, n, n), dtype=bool)
    entries = np.zeros((n, n_times), dtype=bool)
    for t in range(1, n_times + 1):
        b = records.ballots[t]
        present = (b != BALLOT_ABSENT).any(axis=0)
        entries[:, t - 1] = present
        for i in range(n):
            if not present[i]:
                continue
            for j in range(i + 1, n):
                if not present[j]:
                    continue
                v = agreement_index(b[:, i], b[:, j])
                if np.isnan(v):
                    continue
                values[t - 1, i, j] = values[t - 1, j, i] = v
                mask[t - 1, i, j] = mask[t - 1, j, i] = True
    net = DynamicNetwork(values=values, mask=mask, nodes=records.nodes)
    avail = AvailabilityMatrix(entries=entries, nodes=records.nodes)
    return net, avail


# ---------------------------------------------------------------------------
# CSV readers


def _read_rows(path, fields):
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if header == list(fields):
        rows = rows[1:]
    for idx, row in enumerate(rows, start=2 if header == list(fields) else 1):
        if len(row) != len(fields):
            raise DataError(f"{path}:{idx}: expected {len(fields)} columns {fields}, got {len(row)}")
    return [[c.strip() for c in row] for row in rows]


def _parse_t(token, path) -> int:
    try:
        t = int(token)
    except ValueError as exc:
        raise DataError(f"{path}: timepoint {token!r} is not an integer") from exc
    if t < 1:
        raise DataError(f"{path}: timepoints are 1-based, got {t}")
    return t


def _parse_value(token, path) -> float:
    try:
        v = float(token)
    except ValueError as exc:
        raise DataError(f"{path}: value {token!r} is not a number") from exc
    if not np.isfinite(v):
        raise DataError(f"{path}: non-finite value {token!r}")
    return v


def load_network_csv(path):
    """Parse a ``t,i,j,value`` file into raw entries.

    Returns (entries, labels, n_times) where entries maps
    (t, label_i, label_j) with labels in sorted orientation to a float or
    None (explicit missing).
    """
    entries: dict[tuple, float | None] = {}
    labels: set[str] = set()
    n_times = 0
    for t_tok, i, j, val in _read_rows(path, ("t", "i", "j", "value")):
        t = _parse_t(t_tok, path)
        if not i or not j:
            raise DataError(f"{path}: empty node label at t={t}")
        if i == j:
            raise DataError(f"{path}: self-tie ({i},{i}) at t={t}; diagonal entries are undefined")
        key = (t, *sorted((i, j)))
        if key in entries:
            raise DataError(f"{path}: duplicate entry for dyad ({i},{j}) at t={t}")
        entries[key] = None if val == "" else _parse_value(val, path)
        labels.update((i, j))
        n_times = max(n_times, t)
    return entries, labels, n_times


def load_availability_csv(path):
    """Parse a ``node,t,available`` file; returns (flags, labels, n_times)."""
    flags: dict[tuple[str, int], bool] = {}
    labels: set[str] = set()
    n_times = 0
    for node, t_tok, avail_tok in _read_rows(path, ("node", "t", "available")):
        t = _parse_t(t_tok, path)
        if avail_tok not in ("0", "1"):
            raise DataError(f"{path}: availability must be 0 or 1, got {avail_tok!r}")
        key = (node, t)
        if key in flags:
            raise DataError(f"{path}: duplicate availability row for ({node}, t={t})")
        flags[key] = avail_tok == "1"
        labels.add(node)
        n_times = max(n_times, t)
    return flags, labels, n_times


def load_covariates_csv(path):
    """Parse a ``t,i,j,p,value`` file; returns (entries, names, labels, n_times)."""
    entries: dict[tuple, float] = {}
    names: list[str] = []
    labels: set[str] = set()
    n_times = 0
    for t_tok, i, j, p, val in _read_rows(path, ("t", "i", "j", "p", "value")):
        t = _parse_t(t_tok, path)
        if i == j:
            raise DataError(f"{path}: covariate on the diagonal ({i},{i}) at t={t}")
        if not p:
            raise DataError(f"{path}: empty covariate name at t={t}")
        key = (t, p, *sorted((i, j)))
        value = _parse_value(val, path)
        if key in entries:
            if entries[key] != value:
                raise DataError(
                    f"{path}: asymmetric covariate {p!r} for dyad ({i},{j}) at t={t}"
                )
            raise DataError(f"{path}: duplicate covariate row {p!r} ({i},{j}) at t={t}")
        entries[key] = value
        if p not in names:
            names.append(p)
        labels.update((i, j))
        n_times = max(n_times, t)
    return entries, names, labels, n_times


def load_votes(path) -> VoteRecords:
    """Parse a ``t,vote_id,node,ballot`` file into :class:`VoteRecords`."""
    raw: dict[int, dict[str, dict[str, int]]] = {}
    labels: set[str] = set()
    seen: set[tuple] = set()
    for t_tok, vote_id, node, ballot in _read_rows(path, ("t", "vote_id", "node", "ballot")):
        t = _parse_t(t_tok, path)
        if ballot not in BALLOT_CODES:
            raise DataError(
                f"{path}: unknown ballot {ballot!r} (expected one of {sorted(BALLOT_CODES)})"
            )
        key = (t, vote_id, node)
        if key in seen:
            raise DataError(f"{path}: duplicate ballot for {node!r} on vote {vote_id!r} at t={t}")
        seen.add(key)
        raw.setdefault(t, {}).setdefault(vote_id, {})[node] = BALLOT_CODES[ballot]
        labels.add(node)
    if not raw:
        raise DataError(f"{path}: no ballots found")
    nodes = tuple(sorted(labels))
    index = {n: k for k, n in enumerate(nodes)}
    ballots = {}
    for t, votes in raw.items():
        mat = np.full((len(votes), len(nodes)), BALLOT_ABSENT, dtype=np.int8)
        for row, vote_id in enumerate(sorted(votes)):
            for node, code in votes[vote_id].items():
                mat[row, index[node]] = code
        ballots[t] = mat
    return VoteRecords(ballots=ballots, nodes=nodes)


def load_dataset(
    network_file,
    covariate_file=None,
    availability_file=None,
    add_intercept: bool = False,
) -> tuple[DynamicNetwork, CovariateTensor, AvailabilityMatrix]:
    """Load and cross-validate a dataset from its CSV files.

    The node universe is the union of the labels in the network and
    availability files, ordered lexicographically; covariates may only
    reference nodes from that universe.  Omitted network rows become
    missing entries; omitted availability rows default to available.
    Every available off-diagonal dyad must carry a complete covariate set.
    """
    net_entries, net_labels, t_net = load_network_csv(network_file)

    av_flags: dict[tuple[str, int], bool] = {}
    av_labels: set[str] = set()
    t_av = 0
    if availability_file is not None:
        av_flags, av_labels, t_av = load_availability_csv(availability_file)

    cov_entries: dict[tuple, float] = {}
    cov_names: list[str] = []
    cov_labels: set[str] = set()
    t_cov = 0
    if covariate_file is not None:
        cov_entries, cov_names, cov_labels, t_cov = load_covariates_csv(covariate_file)

    nodes = tuple(sorted(net_labels | av_labels))
    if not nodes:
        raise DataError("dataset has no nodes")
    unknown = sorted(cov_labels - set(nodes))
    if unknown:
        raise DataError(
            f"unknown node label(s) in covariate file: {', '.join(unknown)} "
            "(covariates may only reference nodes present in the network or availability files)"
        )
    n_times = max(t_net, t_av, t_cov)
    n = len(nodes)
    index = {label: k for k, label in enumerate(nodes)}

    entries = np.ones((n, n_times), dtype=bool)
    for (node, t), flag in av_flags.items():
        entries[index[node], t - 1] = flag
    avail = AvailabilityMatrix(entries=entries, nodes=nodes)

    values = np.full((n_times, n, n), np.nan)
    mask = np.zeros((n_times, n, n), dtype=bool)
    for (t, i, j), val in net_entries.items():
        if val is None:
            continue
        a, b = index[i], index[j]
        values[t - 1, a, b] = values[t - 1, b, a] = val
        mask[t - 1, a, b] = mask[t - 1, b, a] = True
    net = DynamicNetwork(values=values, mask=mask, nodes=nodes)

    # cross-check: observed-but-unavailable raises inside classify
    classify_missingness(net, avail)
    cov = _assemble_covariates(
        net, avail, cov_entries, cov_names, add_intercept=add_intercept
    )
    return net, cov, avail


def _assemble_covariates(net, avail, cov_entries, cov_names, add_intercept):
    nodes, n, n_times = net.nodes, net.n_nodes, net.n_times
    index = {label: k for k, label in enumerate(nodes)}
    names = (["intercept"] if add_intercept else []) + cov_names
    if add_intercept and "intercept" in cov_names:
        raise DataError("covariate file already defines 'intercept'")
    x = np.zeros((n_times, len(names), n, n))
    if add_intercept:
        x[:, 0] = 1.0
    offset = 1 if add_intercept else 0
    name_index = {p: k + offset for k, p in enumerate(cov_names)}
    for (t, p, i, j), val in cov_entries.items():
        a, b = index[i], index[j]
        x[t - 1, name_index[p], a, b] = x[t - 1, name_index[p], b, a] = val
    cov = CovariateTensor(values=x, names=tuple(names))

    # every available dyad needs the full covariate set
    if cov_names:
        valid = pair_available(avail)
        for t in range(1, n_times + 1):
            for a in range(n):
                for b in range(a + 1, n):
                    if not valid[t - 1, a, b]:
                        continue
                    for p in cov_names:
                        # nodes are sorted, so (nodes[a], nodes[b]) is canonical
                        if (t, p, nodes[a], nodes[b]) not in cov_entries:
                            raise DataError(
                                f"covariate {p!r} missing for dyad "
                                f"({nodes[a]},{nodes[b]}) at t={t}"
                            )
    return cov


def attach_covariates(
    net: DynamicNetwork,
    avail: AvailabilityMatrix,
    covariate_file=None,
    add_intercept: bool = False,
) -> CovariateTensor:
    """Covariate tensor for an already-built network/availability pair.

    Used when the network comes from something other than a dyadic CSV
    (for example a ballot file); applies the same label, completeness and
    intercept rules as ``load_dataset``.
    """
    cov_entries: dict[tuple, float] = {}
    cov_names: list[str] = []
    if covariate_file is not None:
        cov_entries, cov_names, cov_labels, t_cov = load_covariates_csv(covariate_file)
        unknown = sorted(cov_labels - set(net.nodes))
        if unknown:
            raise DataError(
                f"unknown node label(s) in covariate file: {', '.join(unknown)} "
                "(covariates may only reference nodes present in the network)"
            )
        if t_cov > net.n_times:
            raise DataError(
                f"covariate file references t={t_cov} beyond the network's "
                f"{net.n_times} timepoints"
            )
    return _assemble_covariates(
        net, avail, cov_entries, cov_names, add_intercept=add_intercept
    )


# ---------------------------------------------------------------------------
# CSV writers (inverse of the loaders; only canonical i<j rows are written)


def write_network_csv(net: DynamicNetwork, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "i", "j", "value"))
        for t in range(net.n_times):
            for a in range(net.n_nodes):
                for b in range(a + 1, net.n_nodes):
                    if net.mask[t, a, b]:
                        w.writerow((t + 1, net.nodes[a], net.nodes[b],
                                    repr(float(net.values[t, a, b]))))


def write_covariates_csv(cov: CovariateTensor, nodes, path, avail: AvailabilityMatrix | None = None):
    valid = None if avail is None else pair_available(avail)
    n_times, n_cov, n, _ = cov.values.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "i", "j", "p", "value"))
        for t in range(n_times):
            for a in range(n):
                for b in range(a + 1, n):
                    if valid is not None and not valid[t, a, b]:
                        continue
                    for p in range(n_cov):
                        w.writerow((t + 1, nodes[a], nodes[b], cov.names[p],
                                    repr(float(cov.values[t, p, a, b]))))


def write_availability_csv(avail: AvailabilityMatrix, path):
    n, n_times = avail.entries.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("node", "t", "available"))
        for a in range(n):
            for t in range(n_times):
                w.writerow((avail.nodes[a], t + 1, int(avail.entries[a, t])))
