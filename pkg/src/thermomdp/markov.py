"""Discrete Markov process estimated from simulated schedules.

States cross a temperature bin with an electrical-power bin.  In product
mode the composite index is ``alpha = i_temp * m + i_power`` (row-major), so
``S = n * m``.  Marginal mode drops temperature and uses the ``m`` power bins
alone.

Matrices are column-stochastic: ``probs[a, b]`` is the probability of moving
to state ``a`` from state ``b``, and every column sums to one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from . import _jsonio
from .errors import ParameterError, SchemaError

POWER_VARS = {"heat_pump": "p_hp", "auxiliary": "p_a"}
PRODUCT, MARGINAL = "product", "marginal"
DEFAULT_TEMP_SOURCE = "t_sh[0]"
STOCHASTIC_TOL = 1e-12
STATIONARY_TOL = 1e-10


@dataclass(frozen=True)
class BinningSpec:
    """Uniform binning of (temperature, power).

    ``temp_range``/``power_range`` of ``None`` mean "auto": the min/max over
    the traces being binned (see :meth:`resolve`).
    """

    power_var: str = "heat_pump"
    n_temp_bins: int = 10
    n_power_bins: int = 10
    mode: str = PRODUCT
    temp_source: str = DEFAULT_TEMP_SOURCE
    temp_range: tuple[float, float] | None = None
    power_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.power_var not in POWER_VARS:
            raise ParameterError(f"power_var must be one of {sorted(POWER_VARS)}, got {self.power_var!r}")
        if self.mode not in (PRODUCT, MARGINAL):
            raise ParameterError(f"mode must be {PRODUCT!r} or {MARGINAL!r}, got {self.mode!r}")
        if self.n_power_bins < 2:
            raise ParameterError("n_power_bins must be >= 2")
        if self.mode == PRODUCT and self.n_temp_bins < 2:
            raise ParameterError("n_temp_bins must be >= 2 in product mode")
        for name in ("temp_range", "power_range"):
            rng = getattr(self, name)
            if rng is not None:
                lo, hi = map(float, rng)
                if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                    raise ParameterError(f"{name} must satisfy lo < hi, got {rng}")
                object.__setattr__(self, name, (lo, hi))

    @property
    def n_temp(self) -> int:
        """Temperature bins that enter the state index (1 in marginal mode)."""
        return self.n_temp_bins if self.mode == PRODUCT else 1

    @property
    def n_states(self) -> int:
        return self.n_temp * self.n_power_bins

    @property
    def resolved(self) -> bool:
        return self.temp_range is not None and self.power_range is not None

    def resolve(self, traces) -> "BinningSpec":
        """Fill auto ranges from the traces; a flat series gets ``±0.5``."""
        if self.resolved:
            return self
        if not traces:
            raise ParameterError("cannot resolve auto ranges without traces")
        temp_range = self.temp_range or _span(np.concatenate([t.column(self.temp_source) for t in traces]))
        power_range = self.power_range or _span(np.concatenate([_power(t, self) for t in traces]))
        return replace(self, temp_range=temp_range, power_range=power_range)

    def temp_edges(self) -> np.ndarray:
        return np.linspace(*self.temp_range, self.n_temp + 1)

    def power_edges(self) -> np.ndarray:
        return np.linspace(*self.power_range, self.n_power_bins + 1)

    def state_power(self) -> np.ndarray:
        e = self.power_edges()
        return np.tile(0.5 * (e[:-1] + e[1:]), self.n_temp)

    def state_temp(self) -> np.ndarray:
        e = self.temp_edges()
        return np.repeat(0.5 * (e[:-1] + e[1:]), self.n_power_bins)

    def to_dict(self) -> dict:
        return {
            "power_var": self.power_var,
            "n_temp_bins": self.n_temp_bins,
            "n_power_bins": self.n_power_bins,
            "mode": self.mode,
            "temp_source": self.temp_source,
            "temp_range": list(self.temp_range) if self.temp_range else None,
            "power_range": list(self.power_range) if self.power_range else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BinningSpec":
        return cls(
            power_var=d["power_var"],
            n_temp_bins=d["n_temp_bins"],
            n_power_bins=d["n_power_bins"],
            mode=d["mode"],
            temp_source=d["temp_source"],
            temp_range=tuple(d["temp_range"]) if d["temp_range"] else None,
            power_range=tuple(d["power_range"]) if d["power_range"] else None,
        )


def _span(values: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi - lo < 1e-12:
        return lo - 0.5, hi + 0.5
    return lo, hi


def _power(trace, bins: BinningSpec) -> np.ndarray:
    return trace.column(POWER_VARS[bins.power_var])


def bin_index(values: np.ndarray, edges: np.ndarray) -> tuple[np.ndarray, int]:
    """Bin per value plus the number of values clamped from outside the range.

    A value exactly on an interior edge belongs to the upper bin; values
    below or above the range land in the first or last bin.
    """
    values = np.asarray(values, dtype=float)
    idx = np.searchsorted(edges[1:-1], values, side="right")
    clamped = int(np.count_nonzero((values < edges[0]) | (values > edges[-1])))
    return idx, clamped


@dataclass(frozen=True, eq=False)
class StateSequence:
    indices: np.ndarray
    n_states: int
    n_clamped: int = 0

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_states):
            raise ParameterError(f"state index outside [0, {self.n_states})")
        object.__setattr__(self, "indices", idx.astype(np.int64))

    def __len__(self) -> int:
        return len(self.indices)


def discretize(trace, bins: BinningSpec) -> StateSequence:
    """Map each step of ``trace`` to its composite state index."""
    if len(trace.d_H) == 0:
        raise ParameterError("cannot discretize an empty trace")
    if not bins.resolved:
        bins = bins.resolve([trace])
    i_pow, c_pow = bin_index(_power(trace, bins), bins.power_edges())
    if bins.mode == MARGINAL:
        return StateSequence(i_pow, bins.n_states, c_pow)
    i_tmp, c_tmp = bin_index(trace.column(bins.temp_source), bins.temp_edges())
    return StateSequence(i_tmp * bins.n_power_bins + i_pow, bins.n_states, c_pow + c_tmp)


def count_transitions(seqs, n_states: int) -> np.ndarray:
    """Pooled counts ``C[a, b]`` of steps from ``b`` to ``a`` within each sequence."""
    counts = np.zeros((n_states, n_states), dtype=np.int64)
    for seq in seqs:
        idx = seq.indices if isinstance(seq, StateSequence) else np.asarray(seq, dtype=np.int64)
        if isinstance(seq, StateSequence) and seq.n_states != n_states:
            raise ParameterError(f"sequence has {seq.n_states} states, expected {n_states}")
        if idx.size and (idx.min() < 0 or idx.max() >= n_states):
            raise ParameterError(f"state index outside [0, {n_states})")
        np.add.at(counts, (idx[1:], idx[:-1]), 1)
    return counts


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    probs: np.ndarray
    counts: np.ndarray
    bins: BinningSpec | None = None
    state_power: np.ndarray | None = None
    state_temp: np.ndarray | None = None
    n_traces: int = 0
    n_transitions: int = 0
    fallback_columns: tuple[int, ...] = ()
    n_clamped: int = 0

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    def to_dict(self) -> dict:
        return {
            "schema_version": _jsonio.SCHEMA_VERSION,
            "orientation": "probs[a][b] = P(a <- b); columns sum to 1",
            "n_states": self.n_states,
            "bins": self.bins.to_dict() if self.bins else None,
            "probs": self.probs.tolist(),
            "counts": self.counts.tolist(),
            "state_power": None if self.state_power is None else self.state_power.tolist(),
            "state_temp": None if self.state_temp is None else self.state_temp.tolist(),
            "provenance": {
                "n_traces": self.n_traces,
                "n_transitions": self.n_transitions,
                "fallback_columns": list(self.fallback_columns),
                "n_clamped": self.n_clamped,
            },
        }


def normalize(counts: np.ndarray, bins: BinningSpec | None = None, **provenance) -> TransitionMatrix:
    """Column-normalize ``counts``; never-visited source states get a self-loop."""
    counts = np.asarray(counts)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise ParameterError(f"counts must be square, got shape {counts.shape}")
    if np.any(counts < 0):
        raise ParameterError("counts must be nonnegative")
    col = counts.sum(axis=0)
    probs = np.zeros(counts.shape)
    seen = col > 0
    probs[:, seen] = counts[:, seen] / col[seen]
    empty = np.flatnonzero(~seen)
    probs[empty, empty] = 1.0
    provenance.setdefault("n_transitions", int(col.sum()))
    return TransitionMatrix(
        probs=probs,
        counts=counts.astype(np.int64),
        bins=bins,
        state_power=None if bins is None else bins.state_power(),
        state_temp=None if bins is None else bins.state_temp(),
        fallback_columns=tuple(int(b) for b in empty),
        **provenance,
    )


def build_matrix(traces, bins: BinningSpec) -> TransitionMatrix:
    """Discretize every trace with shared ranges, pool counts and normalize."""
    bins = bins.resolve(traces)
    seqs = [discretize(t, bins) for t in traces]
    counts = count_transitions(seqs, bins.n_states)
    return normalize(counts, bins, n_traces=len(traces), n_clamped=sum(s.n_clamped for s in seqs))


@dataclass
class ValidationReport:
    n_states: int
    column_residual: float
    min_entry: float
    density: float
    diagonal_mass: float
    classes: list[list[int]]
    closed: list[bool]
    irreducible: bool
    stationary: np.ndarray | None = None
    stationary_residual: float | None = None
    n_clamped: int = 0
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    @property
    def n_absorbing(self) -> int:
        return sum(1 for c, closed in zip(self.classes, self.closed) if closed and len(c) == 1)

    def to_dict(self) -> dict:
        return {
            "schema_version": _jsonio.SCHEMA_VERSION,
            "n_states": self.n_states,
            "column_residual": self.column_residual,
            "min_entry": self.min_entry,
            "density": self.density,
            "diagonal_mass": self.diagonal_mass,
            "n_classes": len(self.classes),
            "n_absorbing": self.n_absorbing,
            "classes": self.classes,
            "closed": self.closed,
            "irreducible": self.irreducible,
            "stationary": None if self.stationary is None else self.stationary.tolist(),
            "stationary_residual": self.stationary_residual,
            "n_clamped": self.n_clamped,
            "ok": self.ok,
            "problems": self.problems,
        }


def validate_matrix(tm: TransitionMatrix | np.ndarray, tol: float = STOCHASTIC_TOL) -> ValidationReport:
    """Structural report on a transition matrix; reports problems instead of raising."""
    P = np.asarray(tm.probs if isinstance(tm, TransitionMatrix) else tm, dtype=float)
    S = P.shape[0]
    problems = []
    if P.ndim != 2 or P.shape != (S, S) or S == 0:
        return ValidationReport(S, np.inf, np.nan, 0.0, 0.0, [], [], False, problems=["matrix is not square"])
    if not np.all(np.isfinite(P)):
        return ValidationReport(S, np.inf, np.nan, 0.0, 0.0, [], [], False, problems=["non-finite entries"])
    residual = float(np.max(np.abs(P.sum(axis=0) - 1.0)))
    if residual > tol:
        problems.append(f"column sums deviate from 1 by {residual:.3g}")
    min_entry = float(P.min())
    if min_entry < 0:
        problems.append(f"negative entry {min_entry:.3g}")

    n_comp, labels = scipy.sparse.csgraph.connected_components(
        scipy.sparse.csr_matrix(P.T > 0), directed=True, connection="strong"
    )
    classes = [np.flatnonzero(labels == k).tolist() for k in range(n_comp)]
    classes.sort(key=lambda c: c[0])
    support = P > 0
    closed = []
    for c in classes:
        outside = np.ones(S, dtype=bool)
        outside[c] = False
        closed.append(not bool(support[np.ix_(outside, c)].any()))
    irreducible = len(classes) == 1
    stationary = resid = None
    if irreducible and not problems:
        stationary, resid = stationary_distribution(P)
    return ValidationReport(
        n_states=S,
        column_residual=residual,
        min_entry=min_entry,
        density=float(np.count_nonzero(P) / P.size),
        diagonal_mass=float(np.mean(np.diag(P))),
        classes=classes,
        closed=closed,
        irreducible=irreducible,
        stationary=stationary,
        stationary_residual=resid,
        n_clamped=tm.n_clamped if isinstance(tm, TransitionMatrix) else 0,
        problems=problems,
    )


def stationary_distribution(P: np.ndarray, tol: float = STATIONARY_TOL, max_iter: int = 1_000_000):
    """Power iteration on the lazy chain ``(I + P) / 2``.

    The lazy chain has the same stationary vector and is aperiodic, so the
    iteration converges for periodic irreducible chains too.  Returns the
    vector and its final L1 update size.
    """
    S = P.shape[0]
    pi = np.full(S, 1.0 / S)
    step = np.inf
    for _ in range(max_iter):
        nxt = 0.5 * (pi + P @ pi)
        nxt /= nxt.sum()
        step = float(np.abs(nxt - pi).sum())
        pi = nxt
        if step < tol:
            break
    return pi, step


MATRIX_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "n_states", "probs", "counts"],
    "properties": {
        "schema_version": {"const": _jsonio.SCHEMA_VERSION},
        "orientation": {"type": "string"},
        "n_states": {"type": "integer", "minimum": 1},
        "bins": {"type": ["object", "null"]},
        "probs": _jsonio.number_matrix(),
        "counts": {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
        "state_power": {"type": ["array", "null"], "items": {"type": "number"}},
        "state_temp": {"type": ["array", "null"], "items": {"type": "number"}},
        "provenance": {"type": "object"},
    },
}


def save_matrix(tm: TransitionMatrix, path: str | Path) -> None:
    _jsonio.dump(tm.to_dict(), path)


def load_matrix(path: str | Path) -> TransitionMatrix:
    """Read a matrix file as stored; call :func:`validate_matrix` to check it."""
    d = _jsonio.load_checked(path, MATRIX_SCHEMA)
    S = d["n_states"]
    probs = np.asarray(d["probs"], dtype=float)
    counts = np.asarray(d["counts"], dtype=np.int64)
    for name, arr in (("probs", probs), ("counts", counts)):
        if arr.shape != (S, S):
            raise SchemaError(f"{name} must be {S}x{S}, got {arr.shape}", str(path), None)
    prov = d.get("provenance", {})
    vec = lambda key: None if d.get(key) is None else np.asarray(d[key], dtype=float)  # noqa: E731
    return TransitionMatrix(
        probs=probs,
        counts=counts,
        bins=BinningSpec.from_dict(d["bins"]) if d.get("bins") else None,
        state_power=vec("state_power"),
        state_temp=vec("state_temp"),
        n_traces=prov.get("n_traces", 0),
        n_transitions=prov.get("n_transitions", int(counts.sum())),
        fallback_columns=tuple(prov.get("fallback_columns", ())),
        n_clamped=prov.get("n_clamped", 0),
    )


def write_probs_csv(tm: TransitionMatrix, path: str | Path) -> None:
    """Probabilities as CSV: header ``to\\from,s0..``, one row per destination."""
    S = tm.n_states
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["to\\from"] + [f"s{b}" for b in range(S)])
        for a in range(S):
            w.writerow([f"s{a}"] + [repr(float(v)) for v in tm.probs[a]])
