"""Configuration utilities for the qutrit cross-Kerr simulator.

Run configurations are dotenv-style ``key=value`` files. Every key is
optional; missing keys fall back to the two-resonator gate point.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values, load_dotenv

from .device import DeviceParams, solve_gate_parameters

APP_VERSION = "1.0.0"
APP_NAME = "Qutrit Kerr Simulator"

PROJECT_ROOT = Path(__file__).resolve().parents[2]
WORKERS_ENV = "QKERR_WORKERS"

EXPERIMENTS = ("gate", "heatmap", "cat", "validate")


class ConfigError(ValueError):
    """Raised for unknown keys, unparsable values or invalid run settings."""


def _float(raw: str) -> float:
    return float(raw)


def _optional_float(raw: str) -> Optional[float]:
    return None if raw.strip() == "" else float(raw)


def _int(raw: str) -> int:
    value = float(raw)
    if not value.is_integer():
        raise ValueError(f"{raw!r} is not an integer")
    return int(value)


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"{raw!r} is not a boolean")


def _float_list(raw: str) -> Tuple[float, ...]:
    return tuple(float(item) for item in raw.split(",") if item.strip())


def _int_list(raw: str) -> Tuple[int, ...]:
    return tuple(_int(item) for item in raw.split(",") if item.strip())


def _str(raw: str) -> str:
    return raw.strip()


def _path(raw: str) -> Path:
    return Path(raw.strip())


_PARSERS: Dict[str, Callable[[str], Any]] = {
    "experiment": _str,
    "omega_a_ghz": _float,
    "omega_b_ghz": _float,
    "delta_a_ghz": _float,
    "delta_b_ghz": _float,
    "g_mhz": _float,
    "mu_mhz": _optional_float,
    "g_ab_ratio": _float,
    "k": _int,
    "gamma_us": _float,
    "eta_us": _float,
    "dim_a": _int,
    "dim_b": _int,
    "dim_cat": _int,
    "alpha_a": _float,
    "beta_b": _float,
    "delta_b_list_ghz": _float_list,
    "gamma_list_us": _float_list,
    "eta_list_us": _float_list,
    "d_list": _float_list,
    "m_list": _int_list,
    "sector": _int,
    "scales": _float_list,
    "dt_ns": _optional_float,
    "monitor_every": _int,
    "workers": _int,
    "out_dir": _path,
    "plot": _bool,
}


@dataclass(frozen=True)
class RunConfig:
    """Resolved run configuration (ν-convention units: GHz, MHz, μs)."""

    experiment: str = "gate"
    omega_a_ghz: float = 3.5
    omega_b_ghz: float = 6.5
    delta_a_ghz: float = -0.3
    delta_b_ghz: float = 0.7
    g_mhz: float = 50.0
    mu_mhz: Optional[float] = None
    g_ab_ratio: float = 0.1
    k: int = 1
    gamma_us: float = 10.0
    eta_us: float = 20.0
    dim_a: int = 4
    dim_b: int = 4
    dim_cat: int = 10
    alpha_a: float = 0.5
    beta_b: float = 1.0
    delta_b_list_ghz: Tuple[float, ...] = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2)
    gamma_list_us: Tuple[float, ...] = ()
    eta_list_us: Tuple[float, ...] = ()
    d_list: Tuple[float, ...] = ()
    m_list: Tuple[int, ...] = (4, 5, 6, 7)
    sector: int = 1
    scales: Tuple[float, ...] = (1.0, 2.0, 4.0)
    dt_ns: Optional[float] = None
    monitor_every: int = 200
    workers: int = 1
    out_dir: Path = field(default_factory=lambda: Path("outputs"))
    plot: bool = False

    @property
    def resolved_mu_mhz(self) -> float:
        """μ from the config, or solved from the gate relations when left empty."""

        if self.mu_mhz is not None:
            return self.mu_mhz
        return solve_gate_parameters(self.g_mhz, self.delta_a_ghz, self.delta_b_ghz, self.k).mu_mhz

    @property
    def dt_us(self) -> Optional[float]:
        return None if self.dt_ns is None else self.dt_ns * 1e-3

    def device_params(self, *, lossy: bool = True) -> DeviceParams:
        params = DeviceParams(
            omega_a=self.omega_a_ghz,
            omega_b=self.omega_b_ghz,
            delta_a=self.delta_a_ghz,
            delta_b=self.delta_b_ghz,
            g=self.g_mhz,
            mu=self.resolved_mu_mhz,
            g_ab=self.g_ab_ratio * self.g_mhz,
            k=self.k,
        )
        if lossy:
            params = params.with_decoherence(self.gamma_us, self.eta_us)
        return params.validate()

    def with_overrides(self, **changes: Any) -> "RunConfig":
        """Apply CLI overrides; ``None`` values mean "not given"."""

        effective = {key: value for key, value in changes.items() if value is not None}
        updated = replace(self, **effective)
        updated.check()
        updated.device_params()
        return updated

    def check(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}, got {self.experiment!r}")
        for name in ("dim_a", "dim_b", "dim_cat"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be >= 2")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.monitor_every < 1:
            raise ConfigError("monitor_every must be >= 1")
        if self.dt_ns is not None and self.dt_ns <= 0:
            raise ConfigError("dt_ns must be positive")
        if self.sector < 0:
            raise ConfigError("sector must be >= 0")
        if self.gamma_us <= 0 or self.eta_us <= 0:
            raise ConfigError("gamma_us and eta_us must be positive")
        if any(m < 1 for m in self.m_list) or not self.m_list:
            raise ConfigError("m_list must hold positive integers")
        if not self.scales or any(scale <= 0 for scale in self.scales):
            raise ConfigError("scales must be positive")
        if any(value <= 0 for value in (*self.gamma_list_us, *self.eta_list_us)):
            raise ConfigError("Decoherence grid values must be positive")
        if self.mu_mhz is not None and self.mu_mhz < 0:
            raise ConfigError("mu_mhz must be non-negative")
        if self.g_ab_ratio < 0:
            raise ConfigError("g_ab_ratio must be non-negative")

    def as_dict(self) -> Dict[str, Any]:
        document = asdict(self)
        document["out_dir"] = str(self.out_dir)
        document["mu_mhz_resolved"] = self.resolved_mu_mhz
        for key, value in document.items():
            if isinstance(value, tuple):
                document[key] = list(value)
        return document


def parse_values(values: Mapping[str, Optional[str]]) -> Dict[str, Any]:
    """Convert raw ``key=value`` strings to typed RunConfig fields."""

    unknown = sorted(set(values) - set(_PARSERS))
    if unknown:
        raise ConfigError(f"Unknown config key(s): {', '.join(unknown)}")
    parsed: Dict[str, Any] = {}
    for key, raw in values.items():
        try:
            parsed[key] = _PARSERS[key]("" if raw is None else raw)
        except ValueError as exc:
            raise ConfigError(f"Invalid value for {key}: {raw!r} ({exc})") from exc
    return parsed


def load_config(path: Optional[Path] = None) -> RunConfig:
    """Load a run configuration from ``path`` (or defaults) and check it."""

    load_dotenv(PROJECT_ROOT / ".env", override=False)
    values: Dict[str, Optional[str]] = {}
    if path is not None:
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        values = dict(dotenv_values(path))
    config = RunConfig(**parse_values(values))
    config.check()
    config.device_params()
    return config


def resolve_workers(flag: Optional[int], config: RunConfig) -> int:
    """Worker count: flag, then the environment variable, then the config key."""

    if flag is not None:
        workers = flag
    elif os.getenv(WORKERS_ENV):
        try:
            workers = int(os.environ[WORKERS_ENV])
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {os.environ[WORKERS_ENV]!r}") from exc
    else:
        workers = config.workers
    if workers < 1:
        raise ConfigError("worker count must be >= 1")
    return workers
