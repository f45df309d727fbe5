"""Run configuration: an INI file with sections, every key optional.

``print-config`` prints the effective configuration including defaults.
Only the output directory can also come from the environment
(``THERMOMDP_OUTPUT_DIR``), which overrides the file but not an explicit
command-line flag.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ThermoMdpError
from .markov import MARGINAL, POWER_VARS, PRODUCT
from .mdp import DEFAULT_HORIZON as MDP_HORIZON
from .mdp import DEFAULT_PF
from .occupancy import DEFAULT_MASTER_SEED
from .schedule import DEFAULT_LOOKAHEAD, DEFAULT_WINDOW
from .thermal import DEFAULT_DT, DEFAULT_HORIZON
from .weather import DEFAULT_WEATHER_SEED

OUTPUT_ENV = "THERMOMDP_OUTPUT_DIR"


class ConfigError(ThermoMdpError, ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # [paths]; empty means the built-in synthetic default
    building: str = ""
    gains: str = ""
    prices: str = ""
    # [scenario]
    horizon_steps: int = DEFAULT_HORIZON
    dt_hours: float = DEFAULT_DT
    window_steps: int = DEFAULT_WINDOW
    lookahead_steps: int = DEFAULT_LOOKAHEAD
    n_profiles: int = 52
    master_seed: int = DEFAULT_MASTER_SEED
    weather_seed: int = DEFAULT_WEATHER_SEED
    workers: int = 1
    # [binning]
    power_var: str = "heat_pump"
    n_temp_bins: int = 10
    n_power_bins: int = 10
    mode: str = PRODUCT
    # [mdp]
    mdp_horizon: int = MDP_HORIZON
    mdp_dt_hours: float = 1.0
    pf: float = DEFAULT_PF
    utility_weight: float = 1.0
    include_p_star: bool = False
    # [output]
    output_dir: str = "out"

    def __post_init__(self):
        checks = [
            (self.horizon_steps >= 1, "horizon_steps must be >= 1"),
            (0 < self.dt_hours <= 24, "dt_hours must lie in (0, 24]"),
            (1 <= self.window_steps, "window_steps must be >= 1"),
            (self.lookahead_steps >= 0, "lookahead_steps must be >= 0"),
            (self.n_profiles >= 1, "n_profiles must be >= 1"),
            (self.master_seed >= 0 and self.weather_seed >= 0, "seeds must be >= 0"),
            (self.workers >= 1, "workers must be >= 1"),
            (self.power_var in POWER_VARS, f"power_var must be one of {sorted(POWER_VARS)}"),
            (self.n_power_bins >= 2, "n_power_bins must be >= 2"),
            (self.n_temp_bins >= 1, "n_temp_bins must be >= 1"),
            (self.mode in (PRODUCT, MARGINAL), f"mode must be {PRODUCT} or {MARGINAL}"),
            (self.mdp_horizon >= 1, "mdp_horizon must be >= 1"),
            (self.mdp_dt_hours > 0, "mdp_dt_hours must be > 0"),
            (0 < self.pf <= 1, "pf must lie in (0, 1]"),
            (bool(self.output_dir), "output_dir must not be empty"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def missing_files(self) -> list[str]:
        return [p for p in (self.building, self.gains, self.prices) if p and not Path(p).is_file()]

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for section, names in SECTIONS.items():
            cp[section] = {n: _fmt(getattr(self, n)) for n in names}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self) -> str:
        """Hash of the settings that affect results (output location excluded)."""
        return hashlib.sha256(replace(self, output_dir="-", workers=1).to_ini().encode()).hexdigest()[:16]


SECTIONS = {
    "paths": ["building", "gains", "prices"],
    "scenario": [
        "horizon_steps", "dt_hours", "window_steps", "lookahead_steps",
        "n_profiles", "master_seed", "weather_seed", "workers",
    ],
    "binning": ["power_var", "n_temp_bins", "n_power_bins", "mode"],
    "mdp": ["mdp_horizon", "mdp_dt_hours", "pf", "utility_weight", "include_p_star"],
    "output": ["output_dir"],
}  # fmt: skip
FIELD_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def parse_value(name: str, text: str):
    kind = FIELD_TYPES[name]
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        return kind(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {kind.__name__}") from None


def load_config(path: str | Path | None = None, overrides: dict | None = None, env=None) -> RunConfig:
    """Defaults, then the file, then ``THERMOMDP_OUTPUT_DIR``, then ``overrides``."""
    values = {}
    if path is not None:
        cp = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in cp.sections():
            if section not in SECTIONS:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, text in cp[section].items():
                if key not in SECTIONS[section]:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
                values[key] = parse_value(key, text)
    env = os.environ if env is None else env
    if env.get(OUTPUT_ENV):
        values["output_dir"] = env[OUTPUT_ENV]
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**values)
