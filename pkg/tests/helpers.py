"""Builders and brute-force oracles shared by the test modules."""

from __future__ import annotations

import itertools

import numpy as np

from thermomdp.lp import LpInstance
from thermomdp.occupancy import ComfortSchedule
from thermomdp.schedule import ScenarioConfig
from thermomdp.thermal import BuildingModel, GainSchedule, TankParams, ThermalState

# ---------------------------------------------------------------------------
# 1-state, 1-zone toy building


TOY = dict(a=0.9, b=0.5, E=1.0, x0=18.0, cop=3.0, p_hp_max=1.0, p_a_max=2.0)


def toy_building(n_zones: int = 1, **kw) -> BuildingModel:
    p = {**TOY, **kw}
    return BuildingModel(
        id="toy",
        A=[[p["a"]]],
        B=[[p["b"]] * n_zones],
        cop_sh=p["cop"],
        cop_hw=2.5,
        p_hp_max=p["p_hp_max"],
        p_a_max=p["p_a_max"],
        tank=TankParams(G=0.002, C=0.233, T_env=15.0),
        zone_of_state=(0,),
    )


def toy_scenario(t_lo, E=None, building=None, t_hi=100.0, lookahead_steps=0) -> ScenarioConfig:
    """Scenario on the toy building; the tank bounds never bind and there is no draw."""
    t_lo = np.asarray(t_lo, dtype=float)
    T = t_lo.size
    bm = building or toy_building()
    nz = bm.n_zones
    E = np.full((T, 1), TOY["E"]) if E is None else np.asarray(E, dtype=float).reshape(T, 1)
    comfort = ComfortSchedule(
        t_lo=np.repeat(t_lo[:, None], nz, axis=1),
        t_hi=np.full((T, nz), t_hi),
        hw_lo=np.zeros(T),
        hw_hi=np.full(T, 100.0),
    )
    gains = GainSchedule(E=E, hw_draw=np.zeros(T), ambient=np.zeros(T), dt_hours=0.25)
    return ScenarioConfig(
        building=bm,
        gains=gains,
        comfort=comfort,
        horizon_steps=T,
        window_steps=T,
        initial_state=ThermalState(np.array([TOY["x0"]]), 50.0),
        lookahead_steps=lookahead_steps,
    )


def grid_search_two_step(t_lo, h: float = 1e-3) -> float:
    """Least energy over a (p_hp_sh, p_a_sh) grid at each of two steps.

    Exhaustive over both steps: the best second-step pair for a required
    heat is looked up from a suffix minimum over pairs sorted by heat.
    """
    p = TOY
    hp = np.arange(0, round(p["p_hp_max"] / h) + 1) * h
    aux = np.arange(0, round(p["p_a_max"] / h) + 1) * h
    H, Aux = np.meshgrid(hp, aux, indexing="ij")
    heat = (p["cop"] * H + Aux).ravel()
    energy = (H + Aux).ravel()

    order = np.argsort(heat)
    heat_sorted = heat[order]
    best_from = np.minimum.accumulate(energy[order][::-1])[::-1]

    t1 = p["a"] * p["x0"] + p["E"] + p["b"] * heat
    ok1 = t1 >= t_lo[0] - 1e-12
    need2 = (t_lo[1] - p["a"] * t1 - p["E"]) / p["b"]
    pos = np.searchsorted(heat_sorted, need2 - 1e-12, side="left")
    ok2 = pos < heat_sorted.size
    total = np.full(heat.size, np.inf)
    sel = ok1 & ok2
    total[sel] = energy[sel] + best_from[pos[sel]]
    return float(total.min())


# ---------------------------------------------------------------------------
# LP vertex enumeration


def vertex_enumeration(inst: LpInstance) -> float:
    """Least objective over all basic feasible solutions (bounded instances)."""
    n = inst.n
    rows, rhs = [inst.A_ub], [inst.b_ub]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(inst.hi[j]):
            rows.append(e[None, :])
            rhs.append([inst.hi[j]])
        if np.isfinite(inst.lo[j]):
            rows.append(-e[None, :])
            rhs.append([-inst.lo[j]])
    G, h = np.vstack(rows), np.concatenate(rhs)
    m_eq = inst.A_eq.shape[0]
    best = np.inf
    for active in itertools.combinations(range(G.shape[0]), n - m_eq):
        M = np.vstack([inst.A_eq, G[list(active)]])
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, np.concatenate([inst.b_eq, h[list(active)]]))
        if np.all(G @ x <= h + 1e-9):
            best = min(best, float(inst.c @ x))
    return best


def random_lp(rng: np.random.Generator, n: int = 6, m_ub: int = 3, m_eq: int = 1) -> LpInstance:
    """Bounded, feasible instance: ``x0`` in the box satisfies every row."""
    lo = np.zeros(n)
    hi = rng.uniform(1.0, 5.0, n)
    x0 = rng.uniform(lo, hi)
    A_ub = rng.normal(size=(m_ub, n))
    b_ub = A_ub @ x0 + rng.uniform(0.0, 2.0, m_ub)
    A_eq = rng.normal(size=(m_eq, n))
    return LpInstance(c=rng.normal(size=n), A_eq=A_eq, b_eq=A_eq @ x0, A_ub=A_ub, b_ub=b_ub, lo=lo, hi=hi)


# ---------------------------------------------------------------------------
# KL-control brute force


def mdp_objective(P: np.ndarray, P_bar: np.ndarray, U: np.ndarray, rho0: np.ndarray) -> np.ndarray:
    """Objective for a batch of policies ``P`` of shape (K, T, S, S)."""
    K, T, S, _ = P.shape
    rho = np.broadcast_to(rho0, (K, S)).copy()
    total = np.zeros(K)
    for t in range(T):
        Pt = P[:, t]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(Pt > 0, Pt * np.log(Pt / P_bar), 0.0)
        total += np.einsum("kb,kb->k", terms.sum(axis=1), rho)
        rho = np.einsum("kab,kb->ka", Pt, rho)
        total -= rho @ U[t]
    return total


def brute_force_mdp(P_bar, U, rho0, radius: int = 5, finest: float = 1e-4) -> float:
    """Coordinate-wise grid search over simplex columns with shrinking step."""
    T, S = U.shape
    P = np.broadcast_to(P_bar, (T, S, S)).copy()
    best = float(mdp_objective(P[None], P_bar, U, rho0)[0])
    offsets = np.array(list(itertools.product(range(-radius, radius + 1), repeat=S - 1)), dtype=float)
    for step in (0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, finest):
        for _ in range(50):
            improved = False
            for t in range(T):
                for b in range(S):
                    col = P[t, :, b]
                    cand = np.empty((len(offsets), S))
                    cand[:, : S - 1] = col[: S - 1] + step * offsets
                    cand[:, S - 1] = 1.0 - cand[:, : S - 1].sum(axis=1)
                    cand = cand[np.all(cand >= 0, axis=1)]
                    batch = np.repeat(P[None], len(cand), axis=0)
                    batch[:, t, :, b] = cand
                    vals = mdp_objective(batch, P_bar, U, rho0)
                    k = int(np.argmin(vals))
                    if vals[k] < best - 1e-15:
                        best = float(vals[k])
                        P[t, :, b] = cand[k]
                        improved = True
            if not improved:
                break
    return best
