"""Tests for the synthetic season generator and system catalogs."""

import numpy as np
import pytest

from heatplan.dispatch import CapacityScheme, TypicalDay, simulate_day
from heatplan.scenario import SERIES_NAMES, load_season, save_season
from heatplan.synth import (
    PlanningSpace,
    SUNRISE,
    SUNSET,
    SynthSpec,
    generate_season,
    generate_system,
    planning_space,
    temperature_series,
)


def _series_matrix(season, name):
    return np.array([day.series(name) for day in season.days])


def _normalized(curve):
    span = curve.max() - curve.min()
    if span <= 1e-12:
        return np.zeros_like(curve)
    return (curve - curve.min()) / span


# ---------------------------------------------------------------------------
# season generation


def test_zero_noise_weekly_periodic_shape():
    spec = SynthSpec(
        days=28, noise_electric=0.0, noise_heat=0.0, noise_temp=0.0, noise_wind=0.0, noise_cloud=0.0
    )
    season = generate_season(spec)
    for name in SERIES_NAMES:
        day1 = season.days[0].series(name)
        day8 = season.days[7].series(name)
        np.testing.assert_allclose(
            _normalized(day1), _normalized(day8), atol=1e-9, err_msg=name
        )


def test_pv_zero_outside_daylight():
    season = generate_season(SynthSpec(days=60, seed=3))
    pv = _series_matrix(season, "pv_max")
    dark = [h for h in range(24) if h <= SUNRISE or h >= SUNSET]
    assert np.all(pv[:, dark] == 0.0)
    assert pv.max() > 0.0


def test_heat_anticorrelated_with_temperature():
    spec = SynthSpec(days=180, seed=5)
    season = generate_season(spec)
    heat = _series_matrix(season, "heat_load").ravel()
    temp = temperature_series(spec).ravel()
    corr = np.corrcoef(heat, temp)[0, 1]
    assert corr < -0.5


def test_season_bounds_and_scales():
    spec = SynthSpec(days=90, seed=7)
    season = generate_season(spec)
    electric = _series_matrix(season, "electric_load")
    heat = _series_matrix(season, "heat_load")
    wind = _series_matrix(season, "wind_max")
    pv = _series_matrix(season, "pv_max")
    for arr in (electric, heat, wind, pv):
        assert np.all(arr >= 0.0) and np.all(np.isfinite(arr))
    assert electric.max() == pytest.approx(spec.peak_electric)
    assert heat.max() == pytest.approx(spec.peak_heat)
    assert wind.max() <= spec.wind_capacity + 1e-9
    assert pv.max() <= spec.pv_capacity + 1e-9


def test_season_deterministic_per_seed():
    a = generate_season(SynthSpec(days=40, seed=11))
    b = generate_season(SynthSpec(days=40, seed=11))
    c = generate_season(SynthSpec(days=40, seed=12))
    for name in SERIES_NAMES:
        np.testing.assert_array_equal(_series_matrix(a, name), _series_matrix(b, name))
    assert any(
        not np.array_equal(_series_matrix(a, name), _series_matrix(c, name))
        for name in SERIES_NAMES
    )


def test_season_calendar_months():
    season = generate_season(SynthSpec(days=180, start="2025-11-01", seed=1))
    months = season.months()
    assert months == ["2025-11", "2025-12", "2026-01", "2026-02", "2026-03", "2026-04"]
    assert len(season.month_day_indices("2025-11")) == 30
    assert len(season.month_day_indices("2026-02")) == 28


def test_season_file_roundtrip(tmp_path):
    season = generate_season(SynthSpec(days=30, seed=9))
    path = tmp_path / "season.csv"
    save_season(path, season)
    loaded = load_season(path)
    assert len(loaded) == 30
    for a, b in zip(loaded.days, season.days):
        for name in SERIES_NAMES:
            np.testing.assert_array_equal(a.series(name), b.series(name))


def test_spec_validation():
    with pytest.raises(ValueError, match="28"):
        SynthSpec(days=10)
    with pytest.raises(ValueError, match="peak_electric"):
        SynthSpec(peak_electric=0.0)
    with pytest.raises(ValueError, match="noise_wind"):
        SynthSpec(noise_wind=-0.1)
    with pytest.raises(ValueError):
        SynthSpec(start="late autumn")


# ---------------------------------------------------------------------------
# system catalogs


def test_small_system_catalog_values():
    cfg = generate_system("small")
    assert len(cfg.chp) == 2 and len(cfg.traditional) == 1
    assert cfg.chp[0].cost == (1.03, 32.74, 14.62, 0.58, 22.56, 0.15)
    assert cfg.chp[0].region == (0.045, 0.75, 0.15)
    assert cfg.chp[1].cost == (1.09, 38.80, 18.82, 0.61, 24.10, 0.16)
    assert cfg.chp[1].region == (0.03, 0.72, 0.2)
    assert cfg.traditional[0].cost == (2.44, 35.64, 11.54)
    assert cfg.eb.unit_cost == 300000.0 and cfg.eb.lifetime == 25
    assert cfg.pump.unit_cost == 3000000.0 and cfg.pump.cop == 4.0
    assert cfg.tes.unit_cost == 100000.0 and cfg.tes.eta == pytest.approx(0.10)
    assert cfg.csh.unit_cost == 50000.0 and cfg.csh.lifetime == 15


def test_large_system_counts_and_validity():
    cfg = generate_system("large", seed=4)
    assert len(cfg.chp) == 53
    assert len(cfg.traditional) == 32
    # construction enforces region convexity and bound ordering per unit
    for unit in cfg.chp:
        assert unit.p_min < unit.p_max
        assert unit.h_max > 0


def test_large_system_deterministic():
    a = generate_system("large", seed=2)
    b = generate_system("large", seed=2)
    c = generate_system("large", seed=3)
    assert a == b
    assert a != c


def test_unknown_scale():
    with pytest.raises(ValueError, match="scale"):
        generate_system("medium")
    with pytest.raises(ValueError, match="scale"):
        planning_space("xl")


def test_planning_space_shapes():
    small = planning_space("small")
    assert small.dimension == 4
    assert small.bounds() == [
        (0.0, small.eb_max),
        (0.0, small.pump_max),
        (0.0, small.tes_max),
        (0.0, small.csh_max),
    ]
    large = planning_space("large")
    assert large.dimension == 8
    assert len(large.bounds()) == 8
    assert large.counts() == {"n_eb": 2, "n_pump": 2, "n_tes": 2, "n_csh": 2}


# ---------------------------------------------------------------------------
# the small case dispatches its own season


def test_small_system_dispatches_synthetic_days():
    # the zero-capacity scheme must stay feasible on typical synthetic days
    season = generate_season(SynthSpec(days=35, seed=21))
    cfg = generate_system("small")
    scheme = CapacityScheme(eb_rated=(0.0,), pump_rated=(0.0,), tes_capacity=(0.0,), csh_capacity=(0.0,))
    for day_idx in (0, 17, 34):
        rec = season.days[day_idx]
        day = TypicalDay(rec.electric_load, rec.heat_load, rec.wind_max, rec.pv_max)
        result = simulate_day(cfg, scheme, day)
        assert result.feasible, f"day {day_idx}: {result.status} {result.message}"
        assert result.cost > 0.0
