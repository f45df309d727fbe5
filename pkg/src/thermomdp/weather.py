"""Synthetic winter weather and gains CSV ingestion.

The synthetic generator stands in for metered weather data.  It produces
outdoor temperature (diurnal cosine plus a slow AR(1) synoptic component)
and a solar gain shape with a random daily cloudiness factor.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError

DEFAULT_WEATHER_SEED = 2013


@dataclass(frozen=True)
class Weather:
    ambient: np.ndarray  # °C
    solar: np.ndarray  # normalized 0..1 irradiance shape
    dt_hours: float

    def __len__(self) -> int:
        return len(self.ambient)


def synthetic_weather(
    n_steps: int,
    dt_hours: float = 0.25,
    seed: int = DEFAULT_WEATHER_SEED,
    mean_temp: float = 3.0,
    diurnal_amp: float = 3.0,
    synoptic_std: float = 2.5,
    synoptic_tau_hours: float = 48.0,
) -> Weather:
    rng = np.random.Generator(np.random.PCG64(seed))
    hours = np.arange(n_steps) * dt_hours
    hod = hours % 24.0
    # coldest around 06:00, warmest around 15:00
    diurnal = diurnal_amp * np.cos(2 * np.pi * (hod - 15.0) / 24.0)
    phi = np.exp(-dt_hours / synoptic_tau_hours)
    sigma = synoptic_std * np.sqrt(1 - phi**2)
    eps = rng.standard_normal(n_steps)
    syn = np.empty(n_steps)
    acc = synoptic_std * rng.standard_normal()
    for i in range(n_steps):
        acc = phi * acc + sigma * eps[i]
        syn[i] = acc
    ambient = mean_temp + diurnal + syn

    n_days = int(np.ceil(hours[-1] / 24.0)) + 1 if n_steps else 0
    cloud = rng.uniform(0.2, 1.0, size=n_days)
    day_idx = (hours // 24.0).astype(int)
    shape = np.clip(np.sin(np.pi * (hod - 8.5) / 8.0), 0.0, None)
    shape[(hod < 8.5) | (hod > 16.5)] = 0.0
    solar = shape * cloud[day_idx]
    return Weather(ambient=ambient, solar=solar, dt_hours=dt_hours)


def read_gains_csv(path: str | Path, n_states: int):
    """Read ``step, E_1..E_n, ambient, hw_draw`` rows.

    Returns ``(E, ambient, hw_draw)`` arrays; ``E`` has shape (steps, n_states).
    """
    path = Path(path)
    expected = ["step"] + [f"E_{i + 1}" for i in range(n_states)] + ["ambient", "hw_draw"]
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty gains file", str(path), 1) from None
        if [h.strip() for h in header] != expected:
            raise SchemaError(f"header must be {','.join(expected)}", str(path), 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise SchemaError(f"expected {len(expected)} fields, got {len(row)}", str(path), lineno)
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise SchemaError(f"non-numeric field: {exc}", str(path), lineno) from None
            if int(vals[0]) != len(rows) or not np.all(np.isfinite(vals)):
                raise SchemaError("steps must be consecutive from 0 and values finite", str(path), lineno)
            if vals[-1] < 0:
                raise SchemaError("hw_draw must be >= 0", str(path), lineno)
            rows.append(vals)
    if not rows:
        raise SchemaError("no data rows", str(path), 2)
    arr = np.asarray(rows)
    return arr[:, 1 : 1 + n_states], arr[:, 1 + n_states], arr[:, 2 + n_states]


def write_gains_csv(path: str | Path, E: np.ndarray, ambient: np.ndarray, hw_draw: np.ndarray) -> None:
    E = np.atleast_2d(E)
    n = E.shape[1]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"E_{i + 1}" for i in range(n)] + ["ambient", "hw_draw"])
        for t in range(E.shape[0]):
            w.writerow([t] + [repr(float(v)) for v in E[t]] + [repr(float(ambient[t])), repr(float(hw_draw[t]))])
