"""Building envelope, heating system and hot-water tank dynamics.

Space heating follows a discrete linear state-space model
``x_t = A x_{t-1} + B q_t + E_t`` with ``x`` the thermal-state temperatures
(°C), ``q`` the per-zone heat input (kW) and ``E`` the exogenous gains
(°C per step).  The tank temperature obeys an energy balance whose loss term
is evaluated at the new temperature, which gives a closed-form update.

The default building is a synthetic two-zone model, each zone an air node
and a thermal-mass node (2R2C), discretized with a zero-order hold.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from . import _jsonio
from .errors import DimensionError, ParameterError, SchemaError
from .occupancy import comfort_bounds, default_profile_seed, generate_profile, hw_draw, hw_draw_template
from .weather import DEFAULT_WEATHER_SEED, Weather, synthetic_weather

SPECTRAL_TOL = 1e-9
NO_ZONE = -1


@dataclass(frozen=True)
class TankParams:
    G: float  # kW/°C
    C: float  # kWh/°C
    T_env: float  # °C
    volume_l: float = 200.0

    def __post_init__(self):
        if not self.G >= 0:
            raise ParameterError(f"tank G must be >= 0, got {self.G}")
        if not self.C > 0:
            raise ParameterError(f"tank C must be > 0, got {self.C}")


@dataclass(frozen=True, eq=False)
class BuildingModel:
    id: str
    A: np.ndarray
    B: np.ndarray
    cop_sh: float | np.ndarray
    cop_hw: float
    p_hp_max: float
    p_a_max: float
    tank: TankParams
    zone_of_state: tuple[int, ...]

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError("A", "(n_states, n_states)", A.shape)
        n = A.shape[0]
        if B.ndim != 2 or B.shape[0] != n:
            raise DimensionError("B", f"({n}, n_zones)", B.shape)
        if len(self.zone_of_state) != n:
            raise DimensionError("zone_of_state", (n,), (len(self.zone_of_state),))
        nz = B.shape[1]
        zos = tuple(int(z) for z in self.zone_of_state)
        if any(z != NO_ZONE and not 0 <= z < nz for z in zos):
            raise ParameterError(f"zone_of_state entries must be -1 or in [0, {nz})")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ParameterError("A and B must be finite")
        cop = np.asarray(self.cop_sh, dtype=float)
        if np.any(cop < 1) or not np.all(np.isfinite(cop)):
            raise ParameterError("cop_sh must be >= 1")
        if not self.cop_hw >= 1:
            raise ParameterError("cop_hw must be >= 1")
        if not self.p_hp_max > 0:
            raise ParameterError("p_hp_max must be > 0")
        if not self.p_a_max >= 0:
            raise ParameterError("p_a_max must be >= 0")
        radius = float(np.max(np.abs(np.linalg.eigvals(A)))) if n else 0.0
        if radius >= 1 + SPECTRAL_TOL:
            raise ParameterError(f"state matrix is unstable (spectral radius {radius:.6g})")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "zone_of_state", zos)
        object.__setattr__(self, "cop_sh", float(cop) if cop.ndim == 0 else cop)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_zones(self) -> int:
        return self.B.shape[1]

    def cop_sh_at(self, t: int) -> float:
        if np.ndim(self.cop_sh) == 0:
            return float(self.cop_sh)
        return float(self.cop_sh[t])

    def zone_states(self, zone: int) -> list[int]:
        return [i for i, z in enumerate(self.zone_of_state) if z == zone]

    def to_dict(self) -> dict:
        cop = self.cop_sh
        return {
            "schema_version": _jsonio.SCHEMA_VERSION,
            "id": self.id,
            "n_states": self.n_states,
            "n_zones": self.n_zones,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "cop_sh": cop if np.ndim(cop) == 0 else np.asarray(cop).tolist(),
            "cop_hw": self.cop_hw,
            "p_hp_max": self.p_hp_max,
            "p_a_max": self.p_a_max,
            "tank": {"G": self.tank.G, "C": self.tank.C, "T_env": self.tank.T_env, "volume_l": self.tank.volume_l},
            "zone_of_state": [None if z == NO_ZONE else z for z in self.zone_of_state],
        }


@dataclass(frozen=True, eq=False)
class GainSchedule:
    """Exogenous inputs; ``E`` has shape (steps, n_states)."""

    E: np.ndarray
    hw_draw: np.ndarray
    ambient: np.ndarray
    dt_hours: float = 0.25

    def __post_init__(self):
        E = np.atleast_2d(np.asarray(self.E, dtype=float))
        n = E.shape[0]
        for name in ("hw_draw", "ambient"):
            if len(getattr(self, name)) != n:
                raise DimensionError(name, (n,), (len(getattr(self, name)),))
        if not self.dt_hours > 0:
            raise ParameterError("dt_hours must be > 0")
        if np.any(np.asarray(self.hw_draw) < 0):
            raise ParameterError("hw_draw must be >= 0")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "hw_draw", np.asarray(self.hw_draw, dtype=float))
        object.__setattr__(self, "ambient", np.asarray(self.ambient, dtype=float))

    def __len__(self) -> int:
        return self.E.shape[0]


@dataclass(frozen=True, eq=False)
class ThermalState:
    t_sh: np.ndarray
    t_hw: float

    def __post_init__(self):
        t = np.asarray(self.t_sh, dtype=float)
        if t.ndim != 1 or not np.all(np.isfinite(t)) or not np.isfinite(self.t_hw):
            raise ParameterError("thermal state must be a finite vector and a finite tank temperature")
        object.__setattr__(self, "t_sh", t)
        object.__setattr__(self, "t_hw", float(self.t_hw))


def step_thermal(model: BuildingModel, x, q_sh, E_t) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    q = np.asarray(q_sh, dtype=float)
    E_t = np.asarray(E_t, dtype=float)
    n, nz = model.n_states, model.n_zones
    if x.shape != (n,):
        raise DimensionError("t_sh", (n,), x.shape)
    if q.shape != (nz,):
        raise DimensionError("q_sh", (nz,), q.shape)
    if E_t.shape != (n,):
        raise DimensionError("E", (n,), E_t.shape)
    return model.A @ x + model.B @ q + E_t


def step_tank(
    tank: TankParams,
    t_prev: float,
    p_hp_hw: float,
    p_a_hw: float,
    draw: float,
    cop_hw: float,
    dt: float,
) -> float:
    """Advance the tank one step, solving the implicit loss term exactly."""
    if not tank.C > 0:
        raise ParameterError("tank C must be > 0")
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    g = dt * tank.G / tank.C
    return (t_prev + g * tank.T_env + (dt / tank.C) * (cop_hw * p_hp_hw + p_a_hw - draw)) / (1.0 + g)


def affine_cop(ambient, cop_ref: float, slope: float, t_ref: float = 2.0) -> np.ndarray:
    """COP schedule ``cop_ref + slope * (ambient - t_ref)`` clipped to >= 1."""
    return np.maximum(1.0, cop_ref + slope * (np.asarray(ambient, dtype=float) - t_ref))


# ---------------------------------------------------------------------------
# synthetic two-zone RC building


@dataclass(frozen=True)
class ZoneRC:
    c_air: float  # kWh/°C
    c_mass: float  # kWh/°C
    h_air_out: float  # kW/°C, ventilation + glazing
    h_mass_out: float  # kW/°C, opaque envelope
    h_air_mass: float  # kW/°C
    solar_peak: float  # kW at full irradiance
    internal: float  # kW when occupied


@dataclass(frozen=True)
class RcNetwork:
    """Two zones (day, night); states ordered air_d, mass_d, air_n, mass_n."""

    day: ZoneRC = field(
        default_factory=lambda: ZoneRC(
            c_air=0.25, c_mass=9.0, h_air_out=0.05, h_mass_out=0.035, h_air_mass=0.9, solar_peak=1.0, internal=0.25
        )
    )
    night: ZoneRC = field(
        default_factory=lambda: ZoneRC(
            c_air=0.25, c_mass=9.0, h_air_out=0.04, h_mass_out=0.03, h_air_mass=0.9, solar_peak=0.4, internal=0.1
        )
    )
    h_inter: float = 0.04  # kW/°C between the two air nodes
    solar_to_air: float = 0.3  # remainder lands on the mass node

    def continuous(self):
        """Return ``(Ac, Bc, Wc)`` with disturbances ``[T_out, solar, presence]``."""
        zones = (self.day, self.night)
        Ac = np.zeros((4, 4))
        Bc = np.zeros((4, 2))
        Wc = np.zeros((4, 3))
        for z, zr in enumerate(zones):
            a, m = 2 * z, 2 * z + 1
            Ac[a, a] = -(zr.h_air_out + zr.h_air_mass + self.h_inter) / zr.c_air
            Ac[a, m] = zr.h_air_mass / zr.c_air
            Ac[m, m] = -(zr.h_air_mass + zr.h_mass_out) / zr.c_mass
            Ac[m, a] = zr.h_air_mass / zr.c_mass
            Bc[a, z] = 1.0 / zr.c_air
            Wc[a, 0] = zr.h_air_out / zr.c_air
            Wc[m, 0] = zr.h_mass_out / zr.c_mass
            Wc[a, 1] = self.solar_to_air * zr.solar_peak / zr.c_air
            Wc[m, 1] = (1 - self.solar_to_air) * zr.solar_peak / zr.c_mass
            Wc[a, 2] = zr.internal / zr.c_air
        Ac[0, 2] = self.h_inter / self.day.c_air
        Ac[2, 0] = self.h_inter / self.night.c_air
        return Ac, Bc, Wc

    def discretize(self, dt_hours: float):
        """Zero-order-hold discretization: ``(A, B, W)``."""
        Ac, Bc, Wc = self.continuous()
        n, nu = Ac.shape[0], Bc.shape[1] + Wc.shape[1]
        M = np.zeros((n + nu, n + nu))
        M[:n, :n] = Ac
        M[:n, n:] = np.hstack([Bc, Wc])
        Md = scipy.linalg.expm(M * dt_hours)
        A = Md[:n, :n]
        BW = Md[:n, n:]
        return A, BW[:, : Bc.shape[1]], BW[:, Bc.shape[1] :]


DEFAULT_RC = RcNetwork()
DEFAULT_DT = 0.25
DEFAULT_HORIZON = 4 * 7 * 96
DEFAULT_COP_SH = 3.5
DEFAULT_COP_HW = 2.5
HP_SHARE = 0.8
DEFAULT_X0 = ThermalState(t_sh=np.array([20.5, 20.0, 18.5, 18.0]), t_hw=50.0)
ZONE_OF_STATE = (0, NO_ZONE, 1, NO_ZONE)
WATER_KWH_PER_L_K = 4.186 / 3600.0


def default_tank(volume_l: float = 200.0) -> TankParams:
    return TankParams(G=0.0025, C=volume_l * WATER_KWH_PER_L_K, T_env=15.0, volume_l=volume_l)


def weather_gains(rc: RcNetwork, weather: Weather, presence=None) -> np.ndarray:
    """Per-step ``E`` (steps, 4) from weather and optional presence."""
    _, _, W = rc.discretize(weather.dt_hours)
    occ = np.zeros(len(weather)) if presence is None else np.asarray(presence, dtype=float)
    w = np.column_stack([weather.ambient, weather.solar, occ])
    return w @ W.T


def hold_demand(A, B, E, setpoint, zone_rows, x0) -> np.ndarray:
    """Heat (kW per zone) that keeps each zone state at or above ``setpoint``.

    ``setpoint`` is either one value per zone or an array (steps, zones).
    Zones that would need negative heat get zero and the rest are re-solved.
    """
    Bz = B[zone_rows, :]
    sp = np.broadcast_to(np.asarray(setpoint, dtype=float), (E.shape[0], Bz.shape[0]))
    x = np.array(x0, dtype=float)
    out = np.zeros((E.shape[0], B.shape[1]))
    for t in range(E.shape[0]):
        pred = A @ x + E[t]
        r = sp[t] - pred[zone_rows]
        active = r > 0
        q = np.zeros(B.shape[1])
        for _ in range(len(q)):
            if not active.any():
                break
            q[:] = 0.0
            q[active] = np.linalg.solve(Bz[np.ix_(active, active)], r[active])
            if np.all(q >= 0):
                break
            active &= q > 0
        q = np.maximum(q, 0.0)
        out[t] = q
        x = pred + B @ q
    return out


def peak_heat_demand(
    rc: RcNetwork = DEFAULT_RC,
    dt_hours: float = DEFAULT_DT,
    n_steps: int = DEFAULT_HORIZON,
    weather_seed: int = DEFAULT_WEATHER_SEED,
    profile_seed: int | None = None,
    burn_in_steps: int = 96,
) -> float:
    """Peak thermal demand (kW) of the default scenario.

    Simulates the default weather and the default occupancy profile with a
    controller that holds every zone at its time-varying lower comfort bound
    without any capacity limit, and adds the hot-water draw.  Recovery after
    setbacks is therefore part of the peak.  The first ``burn_in_steps`` are
    excluded so the initial-state transient does not set the peak.
    """
    A, B, _ = rc.discretize(dt_hours)
    weather = synthetic_weather(n_steps, dt_hours, weather_seed)
    seed = default_profile_seed() if profile_seed is None else profile_seed
    profile = generate_profile(seed, n_steps, dt_hours)
    E = weather_gains(rc, weather, profile.presence)
    comfort = comfort_bounds(profile)
    q = hold_demand(A, B, E, comfort.t_lo, [0, 2], DEFAULT_X0.t_sh)
    total = q.sum(axis=1) + hw_draw(profile, hw_draw_template(n_steps, dt_hours))
    return float(total[burn_in_steps:].max())


def default_building(dt_hours: float = DEFAULT_DT) -> BuildingModel:
    """Synthetic 4-state, 2-zone building with a 200 l tank.

    The heat pump covers 80 % of the peak heat demand of the default scenario
    (electrical rating ``0.8 * peak / cop_sh``); the auxiliary resistance
    heater covers the remaining 20 %.  Cached per ``dt_hours``.
    """
    return _default_building(float(dt_hours))


@functools.lru_cache(maxsize=8)
def _default_building(dt_hours: float) -> BuildingModel:
    A, B, _ = DEFAULT_RC.discretize(dt_hours)
    peak = peak_heat_demand(dt_hours=dt_hours, n_steps=round(DEFAULT_HORIZON * DEFAULT_DT / dt_hours))
    return BuildingModel(
        id="synthetic-2zone-2r2c",
        A=A,
        B=B,
        cop_sh=DEFAULT_COP_SH,
        cop_hw=DEFAULT_COP_HW,
        p_hp_max=HP_SHARE * peak / DEFAULT_COP_SH,
        p_a_max=(1 - HP_SHARE) * peak,
        tank=default_tank(200.0),
        zone_of_state=ZONE_OF_STATE,
    )


default_building.cache_clear = _default_building.cache_clear


BUILDING_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": [
        "schema_version",
        "id",
        "n_states",
        "n_zones",
        "A",
        "B",
        "cop_sh",
        "cop_hw",
        "p_hp_max",
        "p_a_max",
        "tank",
        "zone_of_state",
    ],
    "properties": {
        "schema_version": {"const": _jsonio.SCHEMA_VERSION},
        "id": {"type": "string"},
        "n_states": {"type": "integer", "minimum": 1},
        "n_zones": {"type": "integer", "minimum": 1},
        "A": _jsonio.number_matrix(),
        "B": _jsonio.number_matrix(),
        "cop_sh": {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]},
        "cop_hw": {"type": "number"},
        "p_hp_max": {"type": "number"},
        "p_a_max": {"type": "number"},
        "tank": {
            "type": "object",
            "additionalProperties": False,
            "required": ["G", "C", "T_env"],
            "properties": {
                "G": {"type": "number"},
                "C": {"type": "number"},
                "T_env": {"type": "number"},
                "volume_l": {"type": "number"},
            },
        },
        "zone_of_state": {"type": "array", "items": {"type": ["integer", "null"]}},
    },
}


def building_from_dict(d: dict, source: str = "<dict>") -> BuildingModel:
    n, nz = d["n_states"], d["n_zones"]
    A, B = np.asarray(d["A"], dtype=float), np.asarray(d["B"], dtype=float)
    if A.shape != (n, n):
        raise SchemaError(f"A: expected {n}x{n}, got {A.shape}", source)
    if B.shape != (n, nz):
        raise SchemaError(f"B: expected {n}x{nz}, got {B.shape}", source)
    if len(d["zone_of_state"]) != n:
        raise SchemaError(f"zone_of_state: expected {n} entries", source)
    cop = d["cop_sh"]
    return BuildingModel(
        id=d["id"],
        A=A,
        B=B,
        cop_sh=np.asarray(cop, dtype=float) if isinstance(cop, list) else float(cop),
        cop_hw=float(d["cop_hw"]),
        p_hp_max=float(d["p_hp_max"]),
        p_a_max=float(d["p_a_max"]),
        tank=TankParams(**d["tank"]),
        zone_of_state=tuple(NO_ZONE if z is None else z for z in d["zone_of_state"]),
    )


def load_building(path: str | Path) -> BuildingModel:
    data = _jsonio.load_checked(path, BUILDING_SCHEMA)
    return building_from_dict(data, str(path))


def save_building(model: BuildingModel, path: str | Path) -> None:
    _jsonio.dump(model.to_dict(), path)
