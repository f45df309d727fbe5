"""Stochastic presence profiles and the comfort bounds they imply.

Presence follows a two-state Markov chain (0 = absent, 1 = present) with
per-step arrival and departure probabilities.  Sampling uses numpy's PCG64
bit generator seeded with the profile seed, so a seed fully determines the
sequence.  Ensembles derive per-profile seeds from one master seed through
:class:`numpy.random.SeedSequence` spawning (see :func:`profile_seeds`).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, SchemaError

# mean absence 8 h and ~60 % occupancy at 15-min steps
DEFAULT_P_ARRIVE = 1.0 / 32.0
DEFAULT_P_LEAVE = 1.0 / 48.0

DEFAULT_MASTER_SEED = 2013

DAY_OCCUPIED = (20.0, 22.0)
NIGHT_OCCUPIED = (18.0, 20.0)
UNOCCUPIED_LOWER = 16.0
TANK_BOUNDS = (45.0, 55.0)


@dataclass(frozen=True, eq=False)
class OccupancyProfile:
    seed: int
    presence: np.ndarray
    dt_hours: float

    def __post_init__(self):
        p = np.asarray(self.presence)
        if p.ndim != 1 or p.size == 0:
            raise ParameterError("presence must be a nonempty 1-D sequence")
        if not np.all((p == 0) | (p == 1)):
            raise ParameterError("presence values must be 0 or 1")
        object.__setattr__(self, "presence", p.astype(np.int8))

    def __len__(self) -> int:
        return len(self.presence)

    @property
    def occupied_fraction(self) -> float:
        return float(self.presence.mean())


@dataclass(frozen=True, eq=False)
class ComfortSchedule:
    """Per-step bounds; ``t_lo``/``t_hi`` have shape (steps, n_zones)."""

    t_lo: np.ndarray
    t_hi: np.ndarray
    hw_lo: np.ndarray
    hw_hi: np.ndarray

    def __post_init__(self):
        if np.any(self.t_lo > self.t_hi) or np.any(self.hw_lo > self.hw_hi):
            raise ParameterError("comfort lower bound exceeds upper bound")

    def __len__(self) -> int:
        return self.t_lo.shape[0]

    def slice(self, start: int, stop: int) -> "ComfortSchedule":
        return ComfortSchedule(
            self.t_lo[start:stop], self.t_hi[start:stop], self.hw_lo[start:stop], self.hw_hi[start:stop]
        )


def generate_profile(
    seed: int,
    n_steps: int,
    dt_hours: float = 0.25,
    p_arrive: float = DEFAULT_P_ARRIVE,
    p_leave: float = DEFAULT_P_LEAVE,
    initial: int | None = None,
) -> OccupancyProfile:
    """Sample a presence sequence.

    Step 0 holds the initial state; each later step applies one transition.
    With ``initial=None`` the initial state is drawn from the chain's
    stationary distribution.
    """
    if n_steps <= 0:
        raise ParameterError("n_steps must be positive")
    for name, p in (("p_arrive", p_arrive), ("p_leave", p_leave)):
        if not 0.0 <= p <= 1.0:
            raise ParameterError(f"{name} must lie in [0, 1], got {p}")
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random(n_steps)
    if initial is None:
        total = p_arrive + p_leave
        pi_present = 0.5 if total == 0 else p_arrive / total
        state = int(u[0] < pi_present)
    else:
        state = int(initial)
    out = np.empty(n_steps, dtype=np.int8)
    out[0] = state
    for i in range(1, n_steps):
        if state:
            state = 0 if u[i] < p_leave else 1
        else:
            state = 1 if u[i] < p_arrive else 0
        out[i] = state
    return OccupancyProfile(seed=seed, presence=out, dt_hours=dt_hours)


def profile_seeds(master_seed: int, n_profiles: int) -> list[int]:
    """Per-profile seeds: first 32-bit word of each spawned child sequence."""
    children = np.random.SeedSequence(master_seed).spawn(n_profiles)
    return [int(c.generate_state(1)[0]) for c in children]


def default_profile_seed() -> int:
    """Seed of the first profile of the default ensemble."""
    return profile_seeds(DEFAULT_MASTER_SEED, 1)[0]


def comfort_bounds(
    profile: OccupancyProfile,
    day_occupied: tuple[float, float] = DAY_OCCUPIED,
    night_occupied: tuple[float, float] = NIGHT_OCCUPIED,
    unoccupied_lower: float = UNOCCUPIED_LOWER,
    tank: tuple[float, float] = TANK_BOUNDS,
) -> ComfortSchedule:
    """Map presence pointwise to zone (day, night) and tank bounds."""
    present = profile.presence.astype(bool)
    n = len(present)
    lo = np.where(present[:, None], [day_occupied[0], night_occupied[0]], unoccupied_lower)
    hi = np.broadcast_to([day_occupied[1], night_occupied[1]], (n, 2)).copy()
    return ComfortSchedule(
        t_lo=lo.astype(float),
        t_hi=hi,
        hw_lo=np.full(n, tank[0]),
        hw_hi=np.full(n, tank[1]),
    )


def hw_draw_template(
    n_steps: int,
    dt_hours: float = 0.25,
    morning: tuple[float, float, float] = (7.0, 8.0, 1.2),
    evening: tuple[float, float, float] = (19.0, 21.0, 1.0),
) -> np.ndarray:
    """Daily hot-water draw pulses in kW thermal.

    Each pulse is ``(start_hour, end_hour, kW)``; the template repeats daily.
    """
    hod = (np.arange(n_steps) * dt_hours) % 24.0
    draw = np.zeros(n_steps)
    for start, end, kw in (morning, evening):
        draw[(hod >= start) & (hod < end)] += kw
    return draw


def hw_draw(profile: OccupancyProfile, template: np.ndarray) -> np.ndarray:
    """Scale the draw template by presence (no draw when nobody is home)."""
    return np.asarray(template)[: len(profile)] * profile.presence


def write_profile_csv(profile: OccupancyProfile, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step_index", "presence"])
        for i, v in enumerate(profile.presence):
            w.writerow([i, int(v)])


def read_profile_csv(path: str | Path, seed: int = 0, dt_hours: float = 0.25) -> OccupancyProfile:
    path = Path(path)
    values = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["step_index", "presence"]:
            raise SchemaError("header must be step_index,presence", str(path), 1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2 or row[1] not in ("0", "1") or row[0] != str(len(values)):
                raise SchemaError(f"bad row {row!r}", str(path), lineno)
            values.append(int(row[1]))
    if not values:
        raise SchemaError("no data rows", str(path), 2)
    return OccupancyProfile(seed=seed, presence=np.array(values), dt_hours=dt_hours)
