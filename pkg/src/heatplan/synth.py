"""Synthetic heating-season data and reference system configurations.

The provincial dataset behind the planning studies is not public, so this
module fabricates a stand-in: an hourly heating-season time series (diurnal
electric load, temperature-driven heat load, autoregressive wind, clear-sky
PV under clouds) and system catalogs at two scales — the small reference
case (two CHP units, one traditional generator, one slot of each plannable
heat source) and an enlarged case with 53 CHP and 32 traditional generators.
Every artifact derived from this module is marked synthetic.
"""

from __future__ import annotations

import dataclasses
import datetime

import numpy as np

from .dispatch import ChpGenerator, SystemConfig, TraditionalGenerator
from .scenario import DayRecord, SeasonData

__all__ = [
    "PlanningSpace",
    "SynthSpec",
    "generate_season",
    "generate_system",
    "planning_space",
    "temperature_series",
]

# Daylight window: PV is identically zero at and outside these hours.
SUNRISE = 7
SUNSET = 17

# Temperature model (deg C): season edge level, seasonal swing, diurnal swing,
# heating reference and the scale that turns degrees into heat-level fractions.
_T_EDGE = 8.0
_T_SWING = 16.0
_T_DIURNAL = 3.0
_T_REF = 18.0
_T_SCALE = 30.0


@dataclasses.dataclass(frozen=True)
class SynthSpec:
    """Shape and noise parameters of a synthetic heating season."""

    days: int = 180
    start: str = "2025-11-01"
    peak_electric: float = 400.0
    peak_heat: float = 170.0
    wind_capacity: float = 150.0
    pv_capacity: float = 80.0
    seed: int = 0
    weekend_factor: float = 0.92
    seasonal_electric: float = 0.08
    heat_diurnal: float = 0.25
    temp_coupling: float = 1.0
    noise_electric: float = 0.02
    noise_heat: float = 0.03
    noise_temp: float = 1.5
    noise_wind: float = 0.12
    noise_cloud: float = 0.25

    def __post_init__(self):
        if self.days < 28:
            raise ValueError("a season needs at least 28 days")
        datetime.date.fromisoformat(self.start)
        for name in ("peak_electric", "peak_heat"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in (
            "wind_capacity",
            "pv_capacity",
            "noise_electric",
            "noise_heat",
            "noise_temp",
            "noise_wind",
            "noise_cloud",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 < self.weekend_factor <= 1:
            raise ValueError("weekend_factor must be in (0, 1]")
        if not 0 <= self.heat_diurnal < 1:
            raise ValueError("heat_diurnal must be in [0, 1)")


def _streams(spec: SynthSpec) -> list[np.random.Generator]:
    # Independent child streams so each series is reproducible on its own.
    seeds = np.random.SeedSequence(spec.seed).spawn(5)
    return [np.random.default_rng(s) for s in seeds]


def _seasonal_level(spec: SynthSpec) -> np.ndarray:
    d = np.arange(spec.days)
    return np.sin(np.pi * (d + 0.5) / spec.days)


def _daily_mean_temperature(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    tbar = _T_EDGE - _T_SWING * _seasonal_level(spec)
    noise = np.zeros(spec.days)
    for d in range(1, spec.days):
        noise[d] = 0.7 * noise[d - 1] + spec.noise_temp * rng.standard_normal()
    return tbar + noise


def temperature_series(spec: SynthSpec) -> np.ndarray:
    """Hourly synthetic temperature, shape (days, 24); drives the heat load."""
    rng_temp = _streams(spec)[0]
    tbar = _daily_mean_temperature(spec, rng_temp)
    h = np.arange(24)
    diurnal = _T_DIURNAL * np.cos(2 * np.pi * (h - 15) / 24)
    return tbar[:, None] + diurnal[None, :]


def _ar1_unit(rng, n, start, pull, sigma, lo, hi):
    out = np.empty(n)
    out[0] = start
    for t in range(1, n):
        step = pull * (start - out[t - 1]) + sigma * rng.standard_normal()
        out[t] = min(hi, max(lo, out[t - 1] + step))
    return out


def generate_season(spec: SynthSpec) -> SeasonData:
    """A deterministic-per-seed hourly season honoring the declared peaks."""
    rng_temp, rng_elec, rng_heat, rng_wind, rng_cloud = _streams(spec)
    n, hours = spec.days, np.arange(24)
    start = datetime.date.fromisoformat(spec.start)
    seasonal = _seasonal_level(spec)

    # electric: double-peak diurnal shape x weekday factor x mild seasonal lift
    shape = (
        0.62
        + 0.20 * np.exp(-((hours - 10.5) ** 2) / 8.0)
        + 0.25 * np.exp(-((hours - 19.0) ** 2) / 6.0)
    )
    shape /= shape.max()
    electric = np.empty((n, 24))
    for d in range(n):
        dow = (start + datetime.timedelta(days=d)).weekday()
        week = spec.weekend_factor if dow >= 5 else 1.0
        level = week * (1.0 + spec.seasonal_electric * seasonal[d])
        noise = 1.0 + np.clip(spec.noise_electric * rng_elec.standard_normal(24), -0.45, 0.45)
        electric[d] = level * shape * noise
    electric *= spec.peak_electric / electric.max()

    # heat: daily level driven by the daily-mean temperature, within-day profile
    # peaking in the cold early hours, multiplicative hourly noise
    tbar = _daily_mean_temperature(spec, rng_temp)
    level = 1.0 + spec.temp_coupling * (_T_REF - tbar) / _T_SCALE
    profile = 1.0 + spec.heat_diurnal * np.cos(2 * np.pi * (hours - 4) / 24)
    heat = level[:, None] * profile[None, :]
    heat *= 1.0 + np.clip(spec.noise_heat * rng_heat.standard_normal((n, 24)), -0.45, 0.45)
    heat *= spec.peak_heat / heat.max()

    wind = spec.wind_capacity * _ar1_unit(
        rng_wind, n * 24, start=0.45, pull=0.25, sigma=spec.noise_wind, lo=0.0, hi=1.0
    ).reshape(n, 24)

    clearsky = np.where(
        (hours > SUNRISE) & (hours < SUNSET),
        np.sin(np.pi * (hours - SUNRISE) / (SUNSET - SUNRISE)),
        0.0,
    )
    cloud = _ar1_unit(
        rng_cloud, n * 24, start=0.75, pull=0.3, sigma=spec.noise_cloud, lo=0.15, hi=1.0
    ).reshape(n, 24)
    pv = spec.pv_capacity * clearsky[None, :] * cloud

    days = []
    for d in range(n):
        days.append(
            DayRecord(
                date=(start + datetime.timedelta(days=d)).isoformat(),
                electric_load=electric[d],
                heat_load=heat[d],
                wind_max=wind[d],
                pv_max=pv[d],
            )
        )
    return SeasonData(days=tuple(days))


# ---------------------------------------------------------------------------
# System catalogs

_CHP_TEMPLATES = (
    dict(
        cost=(1.03, 32.74, 14.62, 0.58, 22.56, 0.15),
        region=(0.045, 0.75, 0.15),
        p_min=50.0,
        p_max=200.0,
        h_min=0.0,
        h_max=150.0,
        ramp=60.0,
    ),
    dict(
        cost=(1.09, 38.80, 18.82, 0.61, 24.10, 0.16),
        region=(0.03, 0.72, 0.2),
        p_min=40.0,
        p_max=160.0,
        h_min=0.0,
        h_max=120.0,
        ramp=50.0,
    ),
)

_TRA_TEMPLATE = dict(cost=(2.44, 35.64, 11.54), p_min=0.0, p_max=150.0, ramp=80.0)


def _jitter(rng: np.random.Generator, values, spread: float):
    return tuple(float(v * rng.uniform(1 - spread, 1 + spread)) for v in values)


def generate_system(scale: str = "small", seed: int = 0) -> SystemConfig:
    """Reference system catalogs: ``small`` (catalog values) or ``large``.

    The large case keeps the small case's parameter families but jitters them
    around the catalog values across 53 CHP and 32 traditional generators.
    """
    if scale == "small":
        return SystemConfig(
            traditional=(TraditionalGenerator(**_TRA_TEMPLATE),),
            chp=tuple(ChpGenerator(**tpl) for tpl in _CHP_TEMPLATES),
            wind_capacity=150.0,
            pv_capacity=80.0,
        )
    if scale == "large":
        rng = np.random.default_rng(seed)
        chps = []
        for i in range(53):
            tpl = _CHP_TEMPLATES[i % 2]
            p_min = tpl["p_min"] * rng.uniform(0.85, 1.15)
            p_max = tpl["p_max"] * rng.uniform(0.85, 1.15)
            h_max = tpl["h_max"] * rng.uniform(0.85, 1.15)
            chps.append(
                ChpGenerator(
                    cost=_jitter(rng, tpl["cost"], 0.10),
                    region=_jitter(rng, tpl["region"], 0.05),
                    p_min=float(p_min),
                    p_max=float(max(p_max, p_min + 20.0)),
                    h_min=0.0,
                    h_max=float(h_max),
                    ramp=float(tpl["ramp"] * rng.uniform(0.85, 1.15)),
                )
            )
        tras = []
        for _ in range(32):
            p_max = _TRA_TEMPLATE["p_max"] * rng.uniform(0.85, 1.15)
            tras.append(
                TraditionalGenerator(
                    cost=_jitter(rng, _TRA_TEMPLATE["cost"], 0.10),
                    p_min=0.0,
                    p_max=float(p_max),
                    ramp=float(_TRA_TEMPLATE["ramp"] * rng.uniform(0.85, 1.15)),
                )
            )
        return SystemConfig(
            traditional=tuple(tras),
            chp=tuple(chps),
            wind_capacity=2000.0,
            pv_capacity=1000.0,
            e_net_max=3000.0,
        )
    raise ValueError(f"unknown scale {scale!r}; expected 'small' or 'large'")


@dataclasses.dataclass(frozen=True)
class PlanningSpace:
    """Unit counts and per-unit size caps of the capacity search space."""

    n_eb: int
    n_pump: int
    n_tes: int
    n_csh: int
    eb_max: float
    pump_max: float
    tes_max: float
    csh_max: float

    @property
    def dimension(self) -> int:
        return self.n_eb + self.n_pump + self.n_tes + self.n_csh

    def counts(self) -> dict[str, int]:
        return {
            "n_eb": self.n_eb,
            "n_pump": self.n_pump,
            "n_tes": self.n_tes,
            "n_csh": self.n_csh,
        }

    def bounds(self) -> list[tuple[float, float]]:
        out: list[tuple[float, float]] = []
        out += [(0.0, self.eb_max)] * self.n_eb
        out += [(0.0, self.pump_max)] * self.n_pump
        out += [(0.0, self.tes_max)] * self.n_tes
        out += [(0.0, self.csh_max)] * self.n_csh
        return out


def planning_space(scale: str = "small") -> PlanningSpace:
    """Search space matching :func:`generate_system`: one slot of each kind
    for the small case, two larger slots per kind for the large case."""
    if scale == "small":
        return PlanningSpace(1, 1, 1, 1, eb_max=60.0, pump_max=40.0, tes_max=300.0, csh_max=150.0)
    if scale == "large":
        return PlanningSpace(2, 2, 2, 2, eb_max=400.0, pump_max=250.0, tes_max=2000.0, csh_max=1000.0)
    raise ValueError(f"unknown scale {scale!r}; expected 'small' or 'large'")
