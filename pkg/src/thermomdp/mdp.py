"""KL-regularized ensemble control with unit penalty weights.

The controller picks per-step transition matrices ``P*_t`` to maximize
expected utility minus the KL divergence from the default dynamics ``P_bar``.
With unit weights the problem is linearly solvable: the desirability
``z = exp(-v)`` obeys

    z_T = 1,   z_t[b] = sum_a P_bar_t[a, b] * exp(U_{t+1}[a]) * z_{t+1}[a],

and ``P*_t[a, b] = P_bar_t[a, b] * exp(U_{t+1}[a]) * z_{t+1}[a] / z_t[b]``.
``log z`` is carried in log space and every column's weights are shifted by
their largest exponent before exponentiating, so nothing overflows.

Arrays are indexed ``U[t, a]`` for ``t = 0..T-1``, where row ``t`` holds the
utility collected on arrival at step ``t + 1``.  ``rho`` has ``T + 1`` rows,
``rho[0]`` being the initial distribution.  Powers are consumption-positive.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _jsonio
from .errors import MdpError, ParameterError, SchemaError

DEFAULT_HORIZON = 96
DEFAULT_PF = 0.95
SIMPLEX_TOL = 1e-12
FLUSH_BELOW = 1e-300


def reactive_power(p_alpha: np.ndarray, pf: float = DEFAULT_PF) -> np.ndarray:
    """Reactive power at a fixed power factor: ``q = p * tan(arccos(pf))``."""
    if not 0.0 < pf <= 1.0:
        raise ParameterError(f"power factor must lie in (0, 1], got {pf}")
    return np.asarray(p_alpha, dtype=float) * np.tan(np.arccos(pf))


@dataclass(frozen=True, eq=False)
class MdpProblem:
    """``P_bar`` is (S, S) or (T, S, S); ``U`` is (T, S)."""

    P_bar: np.ndarray
    U: np.ndarray
    rho0: np.ndarray
    p_alpha: np.ndarray
    q_alpha: np.ndarray | None = None
    gamma: float | np.ndarray = 1.0

    def __post_init__(self):
        P = np.asarray(self.P_bar, dtype=float)
        U = np.atleast_2d(np.asarray(self.U, dtype=float))
        rho0 = np.asarray(self.rho0, dtype=float)
        S = rho0.shape[0]
        if P.ndim not in (2, 3) or P.shape[-2:] != (S, S):
            raise ParameterError(f"P_bar must be ({S}, {S}) or (T, {S}, {S}), got {P.shape}")
        if U.ndim != 2 or U.shape[1] != S or U.shape[0] < 1:
            raise ParameterError(f"U must be (T >= 1, {S}), got {U.shape}")
        if P.ndim == 3 and P.shape[0] != U.shape[0]:
            raise ParameterError(f"P_bar covers {P.shape[0]} steps, U covers {U.shape[0]}")
        if not np.all(np.isfinite(U)):
            raise ParameterError("U must be finite")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise ParameterError("P_bar entries must be finite and nonnegative")
        if np.max(np.abs(P.sum(axis=-2) - 1.0)) > SIMPLEX_TOL:
            raise ParameterError("P_bar columns must sum to 1 within 1e-12")
        if np.any(rho0 < 0) or abs(rho0.sum() - 1.0) > SIMPLEX_TOL:
            raise ParameterError("rho0 must be a probability vector (sum 1 within 1e-12)")
        if not np.all(np.asarray(self.gamma) == 1.0):
            raise MdpError("only unit KL weights (gamma = 1) have the analytic solution; got non-unit gamma")
        p = np.asarray(self.p_alpha, dtype=float)
        q = np.zeros(S) if self.q_alpha is None else np.asarray(self.q_alpha, dtype=float)
        if p.shape != (S,) or q.shape != (S,):
            raise ParameterError(f"p_alpha and q_alpha must have shape ({S},)")
        for name, val in (("P_bar", P), ("U", U), ("rho0", rho0), ("p_alpha", p), ("q_alpha", q)):
            object.__setattr__(self, name, val)

    @property
    def horizon(self) -> int:
        return self.U.shape[0]

    @property
    def n_states(self) -> int:
        return self.rho0.shape[0]

    def P_at(self, t: int) -> np.ndarray:
        return self.P_bar if self.P_bar.ndim == 2 else self.P_bar[t]


@dataclass(frozen=True, eq=False)
class MdpSolution:
    P_star: np.ndarray  # (T, S, S)
    log_z: np.ndarray  # (T + 1, S)
    rho: np.ndarray  # (T + 1, S)
    p_t: np.ndarray  # (T + 1,)
    q_t: np.ndarray
    kl_cost: np.ndarray  # (T,)
    utility: np.ndarray  # (T,) expected utility collected at t + 1
    objective: float

    @property
    def horizon(self) -> int:
        return self.P_star.shape[0]

    def to_dict(self, include_p_star: bool = False) -> dict:
        d = {
            "schema_version": _jsonio.SCHEMA_VERSION,
            "horizon": self.horizon,
            "n_states": self.rho.shape[1],
            "rho": self.rho.tolist(),
            "p_t": self.p_t.tolist(),
            "q_t": self.q_t.tolist(),
            "kl_cost": self.kl_cost.tolist(),
            "utility": self.utility.tolist(),
            "objective": self.objective,
        }
        if include_p_star:
            d["P_star"] = self.P_star.tolist()
        return d


def backward_pass(prob: MdpProblem) -> tuple[np.ndarray, np.ndarray]:
    """Log-desirabilities ``log_z`` (T+1, S) and optimal matrices ``P_star`` (T, S, S).

    Each column is reweighted by ``exp(w - c)`` with ``w = U + log z`` and
    ``c`` the largest ``w`` over the column's support, so no weight overflows
    and the heaviest successor keeps weight one.  ``P_star`` inherits the
    column sums of ``P_bar``; a column whose successors all carry the same
    weight is returned as the default column unchanged.
    """
    T, S = prob.horizon, prob.n_states
    log_z = np.zeros((T + 1, S))
    P_star = np.zeros((T, S, S))
    for t in range(T - 1, -1, -1):
        Pb = prob.P_at(t)
        support = Pb > 0
        w = prob.U[t] + log_z[t + 1]
        shifted = np.where(support, w[:, None], -np.inf)
        c = shifted.max(axis=0)
        dead = np.flatnonzero(~np.isfinite(c))
        if dead.size:
            raise MdpError(f"state {int(dead[0])} has no admissible successor at step {t}")
        W = Pb * np.exp(shifted - c[None, :])
        d = W.sum(axis=0)
        s = Pb.sum(axis=0)
        log_z[t] = c + np.log(d / s)
        Pt = W * (s / d)[None, :]
        flushed = (Pt < FLUSH_BELOW) & (Pt > 0)
        if flushed.any():
            Pt[flushed] = 0.0
            Pt *= (s / Pt.sum(axis=0))[None, :]
        P_star[t] = Pt
    return log_z, P_star


def forward_pass(P_star: np.ndarray, rho0: np.ndarray) -> np.ndarray:
    """Distributions ``rho`` (T+1, S) under ``P_star``; drift beyond 1e-12 raises."""
    T = P_star.shape[0]
    rho = np.zeros((T + 1, len(rho0)))
    rho[0] = rho0
    for t in range(T):
        rho[t + 1] = P_star[t] @ rho[t]
        drift = abs(rho[t + 1].sum() - 1.0)
        if drift > SIMPLEX_TOL:
            raise MdpError(f"distribution drifted off the simplex by {drift:.3g} at step {t + 1}")
    return rho


def expected_power(rho: np.ndarray, p_alpha: np.ndarray, q_alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return rho @ np.asarray(p_alpha, dtype=float), rho @ np.asarray(q_alpha, dtype=float)


def kl_cost(P_star_t: np.ndarray, P_bar_t: np.ndarray, rho_t: np.ndarray) -> float:
    """Expected KL divergence of the controlled columns from the default ones."""
    bad = (P_star_t > 0) & (P_bar_t <= 0)
    if bad.any():
        a, b = np.argwhere(bad)[0]
        raise MdpError(f"controlled transition {b}->{a} is not allowed by the default matrix")
    pos = P_star_t > 0
    terms = np.zeros_like(P_star_t)
    terms[pos] = P_star_t[pos] * np.log(P_star_t[pos] / P_bar_t[pos])
    return float(terms.sum(axis=0) @ rho_t)


def solve(prob: MdpProblem) -> MdpSolution:
    log_z, P_star = backward_pass(prob)
    rho = forward_pass(P_star, prob.rho0)
    p_t, q_t = expected_power(rho, prob.p_alpha, prob.q_alpha)
    kl = np.array([kl_cost(P_star[t], prob.P_at(t), rho[t]) for t in range(prob.horizon)])
    util = np.einsum("ts,ts->t", rho[1:], prob.U)
    return MdpSolution(
        P_star=P_star,
        log_z=log_z,
        rho=rho,
        p_t=p_t,
        q_t=q_t,
        kl_cost=kl,
        utility=util,
        objective=float(kl.sum() - util.sum()),
    )


def build_utility(prices: np.ndarray, p_alpha: np.ndarray, dt_hours: float, weight: float = 1.0) -> np.ndarray:
    """``U[t, a] = -weight * price[t] * p_alpha[a] * dt_hours`` (cost of energy as negative utility)."""
    prices = np.asarray(prices, dtype=float)
    if not np.all(np.isfinite(prices)):
        raise ParameterError("prices must be finite")
    return -weight * dt_hours * np.outer(prices, np.asarray(p_alpha, dtype=float))


def entropy(dist: np.ndarray) -> float:
    d = np.asarray(dist, dtype=float)
    d = d[d > 0]
    return float(-(d * np.log(d)).sum())


def synthetic_prices(
    n_steps: int = DEFAULT_HORIZON,
    dt_hours: float = 1.0,
    base: float = 0.10,
    peak: float = 2.0,
    peak_hours: tuple[float, float] = (17.0, 21.0),
) -> np.ndarray:
    """Flat day price with a strong evening peak, repeated daily (per kWh)."""
    hod = (np.arange(n_steps) * dt_hours) % 24.0
    return np.where((hod >= peak_hours[0]) & (hod < peak_hours[1]), peak, base)


def read_price_csv(path: str | Path) -> np.ndarray:
    """Read ``step,price`` rows (steps consecutive from 0)."""
    path = Path(path)
    prices = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["step", "price"]:
            raise SchemaError("header must be step,price", str(path), 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise SchemaError(f"expected 2 fields, got {len(row)}", str(path), lineno)
            try:
                step, price = int(row[0]), float(row[1])
            except ValueError:
                raise SchemaError(f"non-numeric field in {row!r}", str(path), lineno) from None
            if step != len(prices):
                raise SchemaError(f"expected step {len(prices)}, got {step}", str(path), lineno)
            if not np.isfinite(price):
                raise SchemaError("price must be finite", str(path), lineno)
            prices.append(price)
    if not prices:
        raise SchemaError("no data rows", str(path), 2)
    return np.asarray(prices)


def write_price_csv(prices: np.ndarray, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "price"])
        for t, v in enumerate(prices):
            w.writerow([t, repr(float(v))])


SOLUTION_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "horizon", "n_states", "rho", "p_t", "q_t", "kl_cost", "objective"],
    "properties": {
        "schema_version": {"const": _jsonio.SCHEMA_VERSION},
        "horizon": {"type": "integer", "minimum": 1},
        "n_states": {"type": "integer", "minimum": 1},
        "rho": _jsonio.number_matrix(),
        "p_t": {"type": "array", "items": {"type": "number"}},
        "q_t": {"type": "array", "items": {"type": "number"}},
        "kl_cost": {"type": "array", "items": {"type": "number"}},
        "utility": {"type": "array", "items": {"type": "number"}},
        "objective": {"type": "number"},
        "P_star": {"type": "array"},
        "state_power": {"type": "array", "items": {"type": "number"}},
    },
}


def save_solution(sol: MdpSolution, path: str | Path, include_p_star: bool = False, extra: dict | None = None) -> None:
    d = sol.to_dict(include_p_star)
    d.update(extra or {})
    _jsonio.dump(d, path)


def load_solution(path: str | Path) -> dict:
    return _jsonio.load_checked(path, SOLUTION_SCHEMA)
