"""Optimal heating schedules: window LPs chained over a horizon.

Each window is one LP minimizing total electrical demand subject to the
demand split, capacity limits, COP coupling, envelope dynamics, comfort
bounds and the tank energy balance.  Windows are solved in sequence; the
terminal thermal state of one window seeds the next.  Each window LP
extends ``lookahead_steps`` past its end (clipped at the horizon); only the
window's own steps are kept, so an arrival right after a boundary can still
be preheated.  Each LP starts from a basis built on the hold-lower-bound
schedule of :func:`hold_point`, which is usually close to optimal.

If a window is infeasible (for example a cold snap with an arrival right at
the window start), it is re-solved with elastic slack on the lower comfort
bounds at a penalty of ``RELAX_PENALTY`` per °C·step, and the window is
flagged in the trace metadata.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _jsonio
from .errors import AssemblyError, DimensionError, InfeasibleWindowError, ParameterError, ProfileError
from .lp import LpInstance, basis_from_point, solve_lp
from .occupancy import (
    DEFAULT_P_ARRIVE,
    DEFAULT_P_LEAVE,
    ComfortSchedule,
    OccupancyProfile,
    comfort_bounds,
    generate_profile,
    hw_draw,
    hw_draw_template,
    profile_seeds,
)
from .thermal import (
    DEFAULT_DT,
    DEFAULT_HORIZON,
    DEFAULT_RC,
    DEFAULT_X0,
    NO_ZONE,
    BuildingModel,
    GainSchedule,
    ThermalState,
    default_building,
)
from .weather import DEFAULT_WEATHER_SEED, synthetic_weather

log = logging.getLogger(__name__)

RELAX_PENALTY = 1e6
DEFAULT_WINDOW = 96
DEFAULT_LOOKAHEAD = 8
POWER_FIELDS = ("p_hp_sh", "p_hp_hw", "p_a_sh", "p_a_hw")


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    building: BuildingModel
    gains: GainSchedule
    comfort: ComfortSchedule
    horizon_steps: int
    window_steps: int = DEFAULT_WINDOW
    initial_state: ThermalState = DEFAULT_X0
    presence: np.ndarray | None = None
    profile_seed: int | None = None
    lookahead_steps: int = DEFAULT_LOOKAHEAD
    heuristic_start: bool = True

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise ParameterError("horizon_steps must be >= 1")
        if not 1 <= self.window_steps <= self.horizon_steps:
            raise ParameterError("window_steps must lie in [1, horizon_steps]")
        if self.lookahead_steps < 0:
            raise ParameterError("lookahead_steps must be >= 0")
        if len(self.gains) < self.horizon_steps:
            raise DimensionError("gains", f"(>= {self.horizon_steps} steps)", (len(self.gains),))
        if len(self.comfort) < self.horizon_steps:
            raise DimensionError("comfort", f"(>= {self.horizon_steps} steps)", (len(self.comfort),))
        if self.gains.E.shape[1] != self.building.n_states:
            raise DimensionError("gains.E", f"(steps, {self.building.n_states})", self.gains.E.shape)
        if self.comfort.t_lo.shape[1] != self.building.n_zones:
            raise DimensionError("comfort.t_lo", f"(steps, {self.building.n_zones})", self.comfort.t_lo.shape)
        if self.initial_state.t_sh.shape != (self.building.n_states,):
            raise DimensionError("initial_state.t_sh", (self.building.n_states,), self.initial_state.t_sh.shape)
        cop = self.building.cop_sh
        if np.ndim(cop) and len(cop) < self.horizon_steps:
            raise DimensionError("cop_sh", f"(>= {self.horizon_steps},)", np.shape(cop))

    @property
    def dt_hours(self) -> float:
        return self.gains.dt_hours


class WindowLayout:
    """Column layout of a window LP.

    Per step the block is ``d_H, p_hp_sh, p_hp_hw, p_a_sh, p_a_hw,
    q_sh[zones], t_sh[states], t_hw``; relaxation slacks, when present,
    follow all step blocks.
    """

    def __init__(self, n_states: int, n_zones: int, n_steps: int):
        self.n_states, self.n_zones, self.n_steps = n_states, n_zones, n_steps
        self.q0 = 5
        self.t0 = 5 + n_zones
        self.hw = 5 + n_zones + n_states
        self.block = 6 + n_zones + n_states
        self.n_core = self.block * n_steps

    def col(self, k: int, offset: int) -> int:
        return k * self.block + offset

    def names(self) -> list[str]:
        base = ["d_H", *POWER_FIELDS]
        base += [f"q_sh[{z}]" for z in range(self.n_zones)]
        base += [f"t_sh[{i}]" for i in range(self.n_states)]
        base += ["t_hw"]
        return [f"{name}@{k}" for k in range(self.n_steps) for name in base]

    def unpack(self, x: np.ndarray) -> np.ndarray:
        return x[: self.n_core].reshape(self.n_steps, self.block)


def build_window_lp(
    cfg: ScenarioConfig,
    start: int,
    stop: int,
    x0: ThermalState,
    relax: bool = False,
) -> LpInstance:
    """Assemble the LP for steps ``start..stop-1`` starting from ``x0``."""
    bm = cfg.building
    n, nz = bm.n_states, bm.n_zones
    if not 0 <= start < stop <= cfg.horizon_steps:
        raise AssemblyError("window", f"range [{start}, {stop}) outside horizon {cfg.horizon_steps}")
    if x0.t_sh.shape != (n,):
        raise AssemblyError("dynamics", f"x0 has {x0.t_sh.shape[0]} states, model has {n}")
    W = stop - start
    lay = WindowLayout(n, nz, W)
    dt = cfg.dt_hours
    tank = bm.tank
    g = dt * tank.G / tank.C

    zone_rows = [i for i in range(n) if bm.zone_of_state[i] != NO_ZONE]
    n_slack = W * (len(zone_rows) + 1) if relax else 0
    nv = lay.n_core + n_slack

    rows_per_step = 2 + n + 1
    A_eq = np.zeros((W * rows_per_step, nv))
    b_eq = np.zeros(W * rows_per_step)
    A_ub = np.zeros((W * 2 + n_slack, nv))
    b_ub = np.zeros(W * 2 + n_slack)
    lo = np.zeros(nv)
    hi = np.full(nv, np.inf)
    c = np.zeros(nv)

    E = cfg.gains.E[start:stop]
    draw = cfg.gains.hw_draw[start:stop]
    comfort = cfg.comfort.slice(start, stop)
    if E.shape[1] != n:
        raise AssemblyError("dynamics", f"gains have {E.shape[1]} states, model has {n}")
    if comfort.t_lo.shape[1] != nz:
        raise AssemblyError("comfort", f"bounds cover {comfort.t_lo.shape[1]} zones, model has {nz}")

    for k in range(W):
        col = lambda off: lay.col(k, off)  # noqa: E731
        r = k * rows_per_step
        dH = col(0)
        p = [col(1 + i) for i in range(4)]
        q = [col(lay.q0 + z) for z in range(nz)]
        ts = [col(lay.t0 + i) for i in range(n)]
        thw = col(lay.hw)
        c[dH] = 1.0

        # demand split: d_H = sum of the four power components
        A_eq[r, dH] = 1.0
        A_eq[r, p] = -1.0
        # COP coupling: sum_z q_z = cop_sh * p_hp_sh + p_a_sh
        A_eq[r + 1, q] = 1.0
        A_eq[r + 1, p[0]] = -bm.cop_sh_at(start + k)
        A_eq[r + 1, p[2]] = -1.0
        # envelope dynamics: t_k - A t_{k-1} - B q_k = E_k
        for i in range(n):
            row = r + 2 + i
            A_eq[row, ts[i]] = 1.0
            for z in range(nz):
                A_eq[row, q[z]] = -bm.B[i, z]
            b_eq[row] = E[k, i]
            if k == 0:
                b_eq[row] += bm.A[i] @ x0.t_sh
            else:
                for jj in range(n):
                    A_eq[row, lay.col(k - 1, lay.t0 + jj)] = -bm.A[i, jj]
        # tank balance, loss evaluated at the new temperature
        row = r + 2 + n
        A_eq[row, thw] = 1.0 + g
        A_eq[row, p[1]] = -(dt / tank.C) * bm.cop_hw
        A_eq[row, p[3]] = -(dt / tank.C)
        b_eq[row] = g * tank.T_env - (dt / tank.C) * draw[k]
        if k == 0:
            b_eq[row] += x0.t_hw
        else:
            A_eq[row, lay.col(k - 1, lay.hw)] = -1.0

        # nameplate capacities
        A_ub[2 * k, [p[0], p[1]]] = 1.0
        b_ub[2 * k] = bm.p_hp_max
        A_ub[2 * k + 1, [p[2], p[3]]] = 1.0
        b_ub[2 * k + 1] = bm.p_a_max
        hi[p[0]] = hi[p[1]] = bm.p_hp_max
        hi[p[2]] = hi[p[3]] = bm.p_a_max

        for i in range(n):
            z = bm.zone_of_state[i]
            if z == NO_ZONE:
                lo[ts[i]] = 0.0
            else:
                lo[ts[i]] = comfort.t_lo[k, z]
                hi[ts[i]] = comfort.t_hi[k, z]
        lo[thw], hi[thw] = comfort.hw_lo[k], comfort.hw_hi[k]

    if relax:
        s = lay.n_core
        urow = 2 * W
        for k in range(W):
            targets = [lay.col(k, lay.t0 + i) for i in zone_rows] + [lay.col(k, lay.hw)]
            for tcol in targets:
                # t + s >= lo  ->  -t - s <= -lo
                A_ub[urow, tcol] = -1.0
                A_ub[urow, s] = -1.0
                b_ub[urow] = -lo[tcol]
                lo[tcol] = -np.inf if tcol != lay.col(k, lay.hw) else 0.0
                c[s] = RELAX_PENALTY
                s += 1
                urow += 1

    return LpInstance(c=c, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, lo=lo, hi=hi, names=None)


@dataclass(eq=False)
class SimulationTrace:
    """Per-step schedule; ``t_sh`` is (steps, n_states), ``q_sh`` (steps, n_zones)."""

    d_H: np.ndarray
    p_hp_sh: np.ndarray
    p_hp_hw: np.ndarray
    p_a_sh: np.ndarray
    p_a_hw: np.ndarray
    q_sh: np.ndarray
    t_sh: np.ndarray
    t_hw: np.ndarray
    presence: np.ndarray
    building_id: str = ""
    profile_seed: int | None = None
    dt_hours: float = DEFAULT_DT
    relaxed_windows: list[int] = field(default_factory=list)
    lp_iterations: int = 0

    @property
    def p_hp(self) -> np.ndarray:
        return self.p_hp_sh + self.p_hp_hw

    @property
    def p_a(self) -> np.ndarray:
        return self.p_a_sh + self.p_a_hw

    def __len__(self) -> int:
        return len(self.d_H)

    def column(self, name: str) -> np.ndarray:
        """Named series, e.g. ``p_hp``, ``t_sh[0]``, ``q_sh[1]``."""
        if name.startswith("t_sh[") or name.startswith("q_sh["):
            arr = getattr(self, name[:4])
            return arr[:, int(name[5:-1])]
        return np.asarray(getattr(self, name))

    def columns(self) -> list[str]:
        nz, n = self.q_sh.shape[1], self.t_sh.shape[1]
        return (
            ["step", "d_H", "p_hp", "p_a", *POWER_FIELDS]
            + [f"q_sh[{z}]" for z in range(nz)]
            + [f"t_sh[{i}]" for i in range(n)]
            + ["t_hw", "presence"]
        )

    def check(self, building: BuildingModel, tol: float = 1e-7) -> list[str]:
        """Return violated trace invariants (empty when all hold)."""
        bad = []
        if np.max(np.abs(self.d_H - self.p_hp - self.p_a), initial=0.0) > 1e-9:
            bad.append("d_H != p_hp + p_a")
        if np.max(self.p_hp, initial=0.0) > building.p_hp_max + tol:
            bad.append("p_hp exceeds capacity")
        if np.max(self.p_a, initial=0.0) > building.p_a_max + tol:
            bad.append("p_a exceeds capacity")
        powers = np.concatenate([self.d_H, self.p_hp_sh, self.p_hp_hw, self.p_a_sh, self.p_a_hw])
        if np.min(powers, initial=0.0) < -1e-9:
            bad.append("negative power")
        return bad

    def comfort_violation(self, building: BuildingModel, comfort: ComfortSchedule) -> float:
        """Largest bound violation in °C over zone states and the tank."""
        worst = 0.0
        for i, z in enumerate(building.zone_of_state):
            if z == NO_ZONE:
                continue
            worst = max(worst, float(np.max(comfort.t_lo[: len(self), z] - self.t_sh[:, i])))
            worst = max(worst, float(np.max(self.t_sh[:, i] - comfort.t_hi[: len(self), z])))
        worst = max(worst, float(np.max(comfort.hw_lo[: len(self)] - self.t_hw)))
        worst = max(worst, float(np.max(self.t_hw - comfort.hw_hi[: len(self)])))
        return worst

    def metadata(self, config_hash: str = "") -> dict:
        return {
            "schema_version": _jsonio.SCHEMA_VERSION,
            "building_id": self.building_id,
            "profile_seed": self.profile_seed,
            "dt_hours": self.dt_hours,
            "n_steps": len(self),
            "relaxed_windows": list(self.relaxed_windows),
            "config_hash": config_hash,
            "lp_iterations": self.lp_iterations,
        }

    def write_csv(self, path: str | Path) -> None:
        cols = self.columns()
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for t in range(len(self)):
                row = [t]
                for name in cols[1:]:
                    v = self.column(name)[t]
                    row.append(int(v) if name == "presence" else repr(float(v)))
                w.writerow(row)

    def write(self, csv_path: str | Path, config_hash: str = "") -> None:
        """CSV plus a ``.meta.json`` sidecar next to it."""
        csv_path = Path(csv_path)
        self.write_csv(csv_path)
        _jsonio.dump(self.metadata(config_hash), csv_path.with_suffix(".meta.json"))


def read_trace(csv_path: str | Path) -> SimulationTrace:
    csv_path = Path(csv_path)
    with csv_path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ParameterError(f"{csv_path}: trace has no rows")
    data = np.asarray(rows)
    idx = {name: i for i, name in enumerate(header)}
    qcols = [i for name, i in idx.items() if name.startswith("q_sh[")]
    tcols = [i for name, i in idx.items() if name.startswith("t_sh[")]
    meta_path = csv_path.with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return SimulationTrace(
        d_H=data[:, idx["d_H"]],
        p_hp_sh=data[:, idx["p_hp_sh"]],
        p_hp_hw=data[:, idx["p_hp_hw"]],
        p_a_sh=data[:, idx["p_a_sh"]],
        p_a_hw=data[:, idx["p_a_hw"]],
        q_sh=data[:, qcols],
        t_sh=data[:, tcols],
        t_hw=data[:, idx["t_hw"]],
        presence=data[:, idx["presence"]].astype(np.int8),
        building_id=meta.get("building_id", ""),
        profile_seed=meta.get("profile_seed"),
        dt_hours=meta.get("dt_hours", DEFAULT_DT),
        relaxed_windows=meta.get("relaxed_windows", []),
    )


def _first_upper_violation(cfg: ScenarioConfig, start: int, stop: int, x0: ThermalState) -> tuple[int, str]:
    """Free-running (unheated) rollout: first step pushed above an upper bound."""
    bm = cfg.building
    x = x0.t_sh
    for k in range(start, stop):
        x = bm.A @ x + cfg.gains.E[k]
        for i, z in enumerate(bm.zone_of_state):
            if z != NO_ZONE and x[i] > cfg.comfort.t_hi[k, z]:
                return k, f"t_sh[{i}] <= {cfg.comfort.t_hi[k, z]}"
    return start, "unidentified bound"


def hold_point(cfg: ScenarioConfig, start: int, stop: int, x0: ThermalState) -> np.ndarray:
    """Schedule that heats each zone and the tank just to its lower bound.

    Heat-pump capacity goes to space heating first, then hot water; the
    auxiliary heater covers the rest.  When even the auxiliary heater falls
    short at a step, the missing heat is moved one step earlier (sized by the
    one-step response) and the walk resumes from there, so shortfalls
    propagate backward as preheating.  The point may still break bounds when
    no preheating suffices; it only seeds the simplex basis.
    """
    bm = cfg.building
    n, nz = bm.n_states, bm.n_zones
    W = stop - start
    lay = WindowLayout(n, nz, W)
    dt, tank = cfg.dt_hours, bm.tank
    g = dt * tank.G / tank.C
    rows = np.array([next(i for i in range(n) if bm.zone_of_state[i] == z) for z in range(nz)])
    Bz = bm.B[rows]
    ABz = (bm.A @ bm.B)[rows]
    extra = np.zeros((W, nz))
    extra_hw = np.zeros(W)
    states = [(x0.t_sh.copy(), float(x0.t_hw))] + [None] * W
    out = np.zeros(lay.n_core)
    k, budget = 0, 20 * W
    while k < W:
        t, t_hw = states[k]
        free = bm.A @ t + cfg.gains.E[start + k]
        need = cfg.comfort.t_lo[start + k] - free[rows]
        q = np.zeros(nz)
        active = need > 0
        for _ in range(nz):
            if not active.any():
                break
            q[:] = 0.0
            q[active] = np.linalg.solve(Bz[np.ix_(active, active)], need[active])
            if np.all(q >= 0):
                break
            active &= q > 0
        q = np.maximum(q, 0.0) + extra[k]
        t_free = (t_hw + g * tank.T_env - dt / tank.C * cfg.gains.hw_draw[start + k]) / (1 + g)
        h_hw = max(0.0, (cfg.comfort.hw_lo[start + k] - t_free) * (1 + g) * tank.C / dt) + extra_hw[k]
        cop = bm.cop_sh_at(start + k)
        p_hp_sh = min(q.sum() / cop, bm.p_hp_max)
        p_a_sh = q.sum() - p_hp_sh * cop
        p_hp_hw = min(h_hw / bm.cop_hw, bm.p_hp_max - p_hp_sh)
        p_a_hw = h_hw - p_hp_hw * bm.cop_hw
        short = p_a_sh + p_a_hw - bm.p_a_max
        if short > 1e-9 and k > 0 and budget > 0:
            budget -= 1
            d_sh = min(short, p_a_sh)
            dT = Bz @ (q * d_sh / q.sum()) if d_sh > 0 else np.zeros(nz)
            d_hw = (short - d_sh) * dt / tank.C / (1 + g)
            j = _preheat(out, lay, bm, cfg, start, k, dT, d_hw, extra, extra_hw, rows, g)
            if j < k:
                k = j
                continue
        states[k + 1] = (free + bm.B @ q, t_free + dt / tank.C * h_hw / (1 + g))
        blk = out[lay.col(k, 0) : lay.col(k, 0) + lay.block]
        blk[1:5] = p_hp_sh, p_hp_hw, p_a_sh, p_a_hw
        blk[0] = blk[1:5].sum()
        blk[lay.q0 : lay.q0 + nz] = q
        blk[lay.t0 : lay.t0 + n] = states[k + 1][0]
        blk[lay.hw] = states[k + 1][1]
        k += 1
    return out


def _preheat(out, lay, bm, cfg, start, k, dT, d_hw, extra, extra_hw, rows, g):
    """Spread a comfort deficit at step ``k`` over earlier steps with spare capacity.

    ``dT`` is the zone temperature deficit and ``d_hw`` the tank deficit
    (°C).  Returns the earliest step that received heat, or ``k`` if none.
    """
    dt, tank = cfg.dt_hours, bm.tank
    M = bm.B.copy()
    decay = 1.0 / (1 + g) ** 2
    earliest = k
    for j in range(k - 1, -1, -1):
        if np.all(dT <= 1e-9) and d_hw <= 1e-9:
            break
        blk = out[lay.col(j, 0) : lay.col(j, 0) + lay.block]
        cop = bm.cop_sh_at(start + j)
        hp_room = max(0.0, bm.p_hp_max - blk[1] - blk[2])
        a_room = max(0.0, bm.p_a_max - blk[3] - blk[4])
        if np.any(dT > 1e-9):
            R = M[rows]
            dq = np.maximum(np.linalg.lstsq(R, np.maximum(dT, 0.0), rcond=None)[0], 0.0)
            room = hp_room * cop + a_room
            f = min(1.0, room / dq.sum()) if dq.sum() > 0 else 0.0
            if f > 0:
                extra[j] += f * dq
                dT = dT - R @ (f * dq)
                used = f * dq.sum()
                hp_used = min(used / cop, hp_room)
                hp_room -= hp_used
                a_room -= used - hp_used * cop
                earliest = j
        if d_hw > 1e-9:
            gain = dt / tank.C * decay
            room = hp_room * bm.cop_hw + max(a_room, 0.0)
            h = min(d_hw / gain, room)
            if h > 0:
                extra_hw[j] += h
                d_hw -= h * gain
                earliest = j
        M = bm.A @ M
        decay /= 1 + g
    return earliest


def solve_window(cfg: ScenarioConfig, start: int, stop: int, x0: ThermalState):
    """Solve steps ``start..stop-1``, relaxing lower bounds if needed.

    Returns ``(values, relaxed, iterations)`` with one row of LP values per
    step (see :class:`WindowLayout`).
    """
    inst = build_window_lp(cfg, start, stop, x0)
    warm = basis_from_point(inst, hold_point(cfg, start, stop, x0)) if cfg.heuristic_start else None
    sol = solve_lp(inst, warm=warm)
    relaxed = False
    iters = sol.iterations
    if not sol.optimal:
        log.info("window [%d, %d) %s; relaxing lower comfort bounds", start, stop, sol.status)
        inst = build_window_lp(cfg, start, stop, x0, relax=True)
        sol = solve_lp(inst)
        iters += sol.iterations
        relaxed = True
        if not sol.optimal:
            step, bound = _first_upper_violation(cfg, start, stop, x0)
            raise InfeasibleWindowError(step, bound, f"relaxed window LP {sol.status}")
    lay = WindowLayout(cfg.building.n_states, cfg.building.n_zones, stop - start)
    return lay.unpack(sol.x), relaxed, iters


def simulate_horizon(cfg: ScenarioConfig) -> SimulationTrace:
    bm = cfg.building
    lay = WindowLayout(bm.n_states, bm.n_zones, 1)
    blocks = []
    relaxed_windows = []
    iters = 0
    x0 = cfg.initial_state
    for w, start in enumerate(range(0, cfg.horizon_steps, cfg.window_steps)):
        stop = min(start + cfg.window_steps, cfg.horizon_steps)
        # solve past the window end so arrivals just after it can be preheated
        vals, relaxed, it = solve_window(cfg, start, min(stop + cfg.lookahead_steps, cfg.horizon_steps), x0)
        vals = vals[: stop - start]
        iters += it
        if relaxed:
            relaxed_windows.append(w)
        blocks.append(vals)
        x0 = ThermalState(t_sh=vals[-1, lay.t0 : lay.t0 + bm.n_states].copy(), t_hw=float(vals[-1, lay.hw]))
    V = np.vstack(blocks)
    presence = (
        np.asarray(cfg.presence[: cfg.horizon_steps], dtype=np.int8)
        if cfg.presence is not None
        else np.zeros(cfg.horizon_steps, dtype=np.int8)
    )
    return SimulationTrace(
        d_H=V[:, 0].copy(),
        p_hp_sh=V[:, 1].copy(),
        p_hp_hw=V[:, 2].copy(),
        p_a_sh=V[:, 3].copy(),
        p_a_hw=V[:, 4].copy(),
        q_sh=V[:, lay.q0 : lay.q0 + bm.n_zones].copy(),
        t_sh=V[:, lay.t0 : lay.t0 + bm.n_states].copy(),
        t_hw=V[:, lay.hw].copy(),
        presence=presence,
        building_id=bm.id,
        profile_seed=cfg.profile_seed,
        dt_hours=cfg.dt_hours,
        relaxed_windows=relaxed_windows,
        lp_iterations=iters,
    )


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True, eq=False)
class EnsembleTemplate:
    """Everything shared by the profiles of one ensemble.

    ``E_base`` holds the weather-driven gains; ``internal_gain`` is added to
    ``E`` at occupied steps.  Hot-water draw is ``draw_template`` times
    presence.
    """

    building: BuildingModel
    E_base: np.ndarray
    ambient: np.ndarray
    internal_gain: np.ndarray
    draw_template: np.ndarray
    horizon_steps: int = DEFAULT_HORIZON
    window_steps: int = DEFAULT_WINDOW
    dt_hours: float = DEFAULT_DT
    initial_state: ThermalState = DEFAULT_X0
    p_arrive: float = DEFAULT_P_ARRIVE
    p_leave: float = DEFAULT_P_LEAVE
    lookahead_steps: int = DEFAULT_LOOKAHEAD

    def scenario(self, profile: OccupancyProfile) -> ScenarioConfig:
        pres = profile.presence[: self.horizon_steps].astype(float)
        E = self.E_base[: self.horizon_steps] + pres[:, None] * self.internal_gain[None, :]
        gains = GainSchedule(
            E=E,
            hw_draw=hw_draw(profile, self.draw_template)[: self.horizon_steps],
            ambient=self.ambient[: self.horizon_steps],
            dt_hours=self.dt_hours,
        )
        return ScenarioConfig(
            building=self.building,
            gains=gains,
            comfort=comfort_bounds(profile),
            horizon_steps=self.horizon_steps,
            window_steps=self.window_steps,
            lookahead_steps=self.lookahead_steps,
            initial_state=self.initial_state,
            presence=profile.presence[: self.horizon_steps],
            profile_seed=profile.seed,
        )

    def profile(self, seed: int) -> OccupancyProfile:
        return generate_profile(seed, self.horizon_steps, self.dt_hours, self.p_arrive, self.p_leave)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.building.to_dict(), sort_keys=True).encode())
        for arr in (self.E_base, self.ambient, self.internal_gain, self.draw_template, self.initial_state.t_sh):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        h.update(
            repr(
                (self.horizon_steps, self.window_steps, self.dt_hours, self.initial_state.t_hw,
                 self.p_arrive, self.p_leave, self.lookahead_steps)
            ).encode()
        )
        return h.hexdigest()[:16]


def default_template(
    horizon_steps: int = DEFAULT_HORIZON,
    window_steps: int = DEFAULT_WINDOW,
    weather_seed: int = DEFAULT_WEATHER_SEED,
    building: BuildingModel | None = None,
    dt_hours: float = DEFAULT_DT,
    lookahead_steps: int = DEFAULT_LOOKAHEAD,
) -> EnsembleTemplate:
    """Default four-week scenario on the synthetic building and weather."""
    building = building or default_building(dt_hours)
    _, _, W = DEFAULT_RC.discretize(dt_hours)
    weather = synthetic_weather(horizon_steps, dt_hours, weather_seed)
    E_base = np.column_stack([weather.ambient, weather.solar, np.zeros(horizon_steps)]) @ W.T
    return EnsembleTemplate(
        building=building,
        E_base=E_base,
        ambient=weather.ambient,
        internal_gain=W[:, 2].copy(),
        draw_template=hw_draw_template(horizon_steps, dt_hours),
        horizon_steps=horizon_steps,
        window_steps=window_steps,
        dt_hours=dt_hours,
        lookahead_steps=lookahead_steps,
    )


def template_from_gains(
    building: BuildingModel,
    E: np.ndarray,
    ambient: np.ndarray,
    draw: np.ndarray,
    horizon_steps: int,
    window_steps: int = DEFAULT_WINDOW,
    dt_hours: float = DEFAULT_DT,
    lookahead_steps: int = DEFAULT_LOOKAHEAD,
) -> EnsembleTemplate:
    """Template from an ingested gains table.

    ``E`` is used as is (no occupant gains are added) and ``draw`` is the
    hot-water draw when occupied.
    """
    if E.shape[0] < horizon_steps:
        raise DimensionError("gains", f"(>= {horizon_steps} steps)", E.shape)
    return EnsembleTemplate(
        building=building,
        E_base=np.asarray(E, dtype=float),
        ambient=np.asarray(ambient, dtype=float),
        internal_gain=np.zeros(building.n_states),
        draw_template=np.asarray(draw, dtype=float),
        horizon_steps=horizon_steps,
        window_steps=window_steps,
        dt_hours=dt_hours,
        lookahead_steps=lookahead_steps,
    )


class EnsembleError(RuntimeError):
    """Some profiles failed; ``traces`` holds the ones that succeeded."""

    def __init__(self, traces, failures: list[ProfileError]):
        self.traces = traces
        self.failures = failures
        super().__init__("; ".join(str(f) for f in failures))


def _simulate_seed(args):
    template, seed = args
    try:
        return simulate_horizon(template.scenario(template.profile(seed)))
    except Exception as exc:  # attach the seed, keep going
        return ProfileError(seed, exc)


def run_ensemble(
    template: EnsembleTemplate,
    n_profiles: int,
    master_seed: int,
    workers: int = 1,
) -> list[SimulationTrace]:
    """Simulate ``n_profiles`` occupancy profiles derived from ``master_seed``.

    Results keep profile order regardless of ``workers``.  Failed profiles
    do not stop the others; they are raised together at the end as an
    :class:`EnsembleError` carrying the successful traces.
    """
    if n_profiles < 1:
        raise ParameterError("n_profiles must be >= 1")
    seeds = profile_seeds(master_seed, n_profiles)
    jobs = [(template, s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_seed, jobs))
    else:
        results = [_simulate_seed(j) for j in jobs]
    traces = [r for r in results if isinstance(r, SimulationTrace)]
    failures = [r for r in results if isinstance(r, ProfileError)]
    if failures:
        raise EnsembleError(traces, failures)
    return traces
