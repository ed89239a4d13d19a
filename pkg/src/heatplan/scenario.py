"""Typical-day scenario generation from a full heating-season time series.

Each month of the season is compressed into one representative day: a
K-medoids pick (K=1, so the min-sum-distance day) on four day-level
features — mean and variance of the heat load and of the net load
(electric load minus renewable availability) — followed by a power-law
moment adjustment ``S = S'**a + b`` per series so the typical day's mean
and variance match the whole month.  The season file is an hourly CSV;
the result is a JSON bundle of weighted typical days ready for dispatch.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime
import json
from typing import Mapping, Sequence

import numpy as np

from .dispatch import TypicalDay

__all__ = [
    "AdjustmentError",
    "BundleFormatError",
    "DayFeatures",
    "DayRecord",
    "ScenarioBundle",
    "SeasonData",
    "SeasonFormatError",
    "SeriesAdjustment",
    "TypicalScenario",
    "SERIES_NAMES",
    "adjust_curve",
    "compute_features",
    "generate_typical_scenarios",
    "load_bundle",
    "load_season",
    "monthly_moments",
    "save_bundle",
    "save_season",
    "select_medoid",
]

SERIES_NAMES = ("electric_load", "heat_load", "wind_max", "pv_max")

HOURS_PER_DAY = 24

# Season CSV header, in file order.
_CSV_COLUMNS = {
    "timestamp": None,
    "electric_load_mw": "electric_load",
    "heat_load_mw": "heat_load",
    "wind_mw": "wind_max",
    "pv_mw": "pv_max",
}

BUNDLE_FORMAT = "typical-scenario-bundle/v1"

SELECTION_MODES = ("joint", "independent", "random")

# Exponent search interval and bisection tolerance for the moment adjustment.
_A_LO = 0.1
_A_HI = 10.0
_A_TOL = 1e-10
_MOMENT_RTOL = 1e-6


class SeasonFormatError(ValueError):
    """Season file violates the hourly-CSV contract (message carries line/column)."""


class BundleFormatError(ValueError):
    """Typical-scenario bundle file is malformed."""


class AdjustmentError(ValueError):
    """No admissible exponent matches the requested variance."""


@dataclasses.dataclass(frozen=True)
class DayRecord:
    """One calendar day of hourly series; the month tag is the date's YYYY-MM."""

    date: str
    electric_load: np.ndarray
    heat_load: np.ndarray
    wind_max: np.ndarray
    pv_max: np.ndarray

    def __post_init__(self):
        try:
            datetime.date.fromisoformat(self.date)
        except ValueError as exc:
            raise SeasonFormatError(f"bad day date {self.date!r}: {exc}") from None
        for name in SERIES_NAMES:
            arr = np.asarray(getattr(self, name), dtype=float).ravel()
            object.__setattr__(self, name, arr)
            if arr.size != HOURS_PER_DAY:
                raise SeasonFormatError(
                    f"day {self.date}: {name} has {arr.size} samples, expected {HOURS_PER_DAY}"
                )
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise SeasonFormatError(f"day {self.date}: {name} must be finite and >= 0")

    @property
    def month(self) -> str:
        return self.date[:7]

    def series(self, name: str) -> np.ndarray:
        if name not in SERIES_NAMES:
            raise KeyError(name)
        return getattr(self, name)


@dataclasses.dataclass(frozen=True)
class SeasonData:
    """An ordered heating season: one DayRecord per calendar day."""

    days: tuple[DayRecord, ...]

    def __post_init__(self):
        days = tuple(self.days)
        object.__setattr__(self, "days", days)
        if not days:
            raise SeasonFormatError("season has no days")
        seen = set()
        for day in days:
            if day.date in seen:
                raise SeasonFormatError(f"duplicate day {day.date}")
            seen.add(day.date)

    def months(self) -> list[str]:
        """Month tags in order of first appearance."""
        out: list[str] = []
        for day in self.days:
            if day.month not in out:
                out.append(day.month)
        return out

    def month_day_indices(self, month: str) -> list[int]:
        return [i for i, day in enumerate(self.days) if day.month == month]

    def __len__(self) -> int:
        return len(self.days)


@dataclasses.dataclass(frozen=True)
class DayFeatures:
    """Clustering features of one day: heat-load and net-load moments."""

    mean_heat: float
    var_heat: float
    mean_net: float
    var_net: float

    def vector(self) -> np.ndarray:
        return np.array([self.mean_heat, self.var_heat, self.mean_net, self.var_net])


def compute_features(day: DayRecord) -> DayFeatures:
    """Population moments of the heat load and the net load over the 24 hours."""
    net = day.electric_load - day.wind_max - day.pv_max
    return DayFeatures(
        mean_heat=float(np.mean(day.heat_load)),
        var_heat=float(np.var(day.heat_load)),
        mean_net=float(np.mean(net)),
        var_net=float(np.var(net)),
    )


def _standardize_features(features: np.ndarray) -> np.ndarray:
    # z-score per feature; a feature constant across the month carries no
    # distance information, so its (zero) spread is left at scale one.
    mu = features.mean(axis=0)
    sd = features.std(axis=0)
    sd = np.where(sd > 0.0, sd, 1.0)
    return (features - mu) / sd


def _medoid_index(features: np.ndarray) -> int:
    z = _standardize_features(features)
    diff = z[:, None, :] - z[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    return int(np.argmin(dist.sum(axis=1)))


def select_medoid(days: Sequence[DayRecord]) -> int:
    """Index of the day minimizing summed feature distance to the others.

    Features are z-scored across the given days before distances; ties break
    to the lowest index.
    """
    if not days:
        raise ValueError("select_medoid needs at least one day")
    feats = np.array([compute_features(d).vector() for d in days])
    return _medoid_index(feats)


def monthly_moments(days: Sequence[DayRecord]) -> dict[str, tuple[float, float]]:
    """Pooled (mean, population variance) of each series over whole days."""
    out = {}
    for name in SERIES_NAMES:
        pooled = np.concatenate([d.series(name) for d in days])
        out[name] = (float(np.mean(pooled)), float(np.var(pooled)))
    return out


def _power_curve(curve: np.ndarray, lo: float, span: float, a: float) -> np.ndarray:
    # Affine map to [1, 2], power, and map back through the same affine map;
    # a = 1 is exactly the identity and zero-anchored values stay anchored.
    u = 1.0 + (curve - lo) / span
    return lo + (u**a - 1.0) * span


def adjust_curve(
    curve: Sequence[float], target_mean: float, target_var: float
) -> tuple[np.ndarray, float, float]:
    """Match a curve's mean/variance to targets via ``curve**a + b``.

    The exponent acts on the curve affinely mapped to [1, 2] (mapped back
    afterwards), so zeros never meet a fractional power.  Variance is matched
    by bisection on the exponent — the transformed variance is strictly
    increasing in ``a`` — and the mean by the additive ``b``.  Returns
    ``(adjusted, a, b)``.
    """
    c = np.asarray(curve, dtype=float).ravel()
    if c.size < 2 or not np.all(np.isfinite(c)):
        raise ValueError("curve must hold >= 2 finite samples")
    if not np.isfinite(target_mean) or not np.isfinite(target_var) or target_var < 0.0:
        raise ValueError("targets must be finite with target_var >= 0")

    lo = float(c.min())
    span = float(c.max() - c.min())
    if span <= 1e-12 * max(1.0, abs(lo)):
        # Constant curve: only a pure shift is available.
        if target_var <= 1e-12 * max(1.0, target_mean**2):
            b = target_mean - float(c.mean())
            return c + b, 1.0, b
        raise AdjustmentError(
            f"constant curve cannot reach variance {target_var:.6g}; only 0 is achievable"
        )

    def var_at(a: float) -> float:
        return float(np.var(_power_curve(c, lo, span, a)))

    v_lo, v_hi = var_at(_A_LO), var_at(_A_HI)
    if not (v_lo <= target_var <= v_hi):
        raise AdjustmentError(
            f"no exponent in [{_A_LO}, {_A_HI}] reaches variance {target_var:.6g}: "
            f"achievable range [{v_lo:.6g}, {v_hi:.6g}]"
        )
    a_lo, a_hi = _A_LO, _A_HI
    while a_hi - a_lo > _A_TOL:
        mid = 0.5 * (a_lo + a_hi)
        if var_at(mid) < target_var:
            a_lo = mid
        else:
            a_hi = mid
    a = 0.5 * (a_lo + a_hi)

    powered = _power_curve(c, lo, span, a)
    b = target_mean - float(powered.mean())
    adjusted = powered + b
    var_err = abs(float(np.var(adjusted)) - target_var) / max(target_var, 1e-12)
    if var_err > _MOMENT_RTOL:
        raise AdjustmentError(
            f"variance match failed: relative error {var_err:.3g} at a={a:.12g}"
        )
    return adjusted, float(a), float(b)


@dataclasses.dataclass(frozen=True)
class SeriesAdjustment:
    """Power-law parameters applied to one series (or the fallback record)."""

    a: float
    b: float
    adjusted: bool
    message: str = ""


@dataclasses.dataclass(frozen=True)
class TypicalScenario:
    """One month's representative day with its selection and adjustment trail.

    ``series`` holds the exact adjusted vectors (these carry the matched
    moments); ``day`` is the dispatchable projection with availability
    clipped at zero.
    """

    month: str
    weight: float
    series: Mapping[str, np.ndarray]
    series_days: Mapping[str, int]
    adjustments: Mapping[str, SeriesAdjustment]

    def __post_init__(self):
        series = {k: np.asarray(v, dtype=float).ravel() for k, v in self.series.items()}
        if set(series) != set(SERIES_NAMES):
            raise ValueError(f"series keys must be {SERIES_NAMES}")
        object.__setattr__(self, "series", series)

    @property
    def day_index(self) -> int | None:
        """Source day index when all four series share one day, else None."""
        idx = set(self.series_days.values())
        return idx.pop() if len(idx) == 1 else None

    @property
    def day(self) -> TypicalDay:
        return TypicalDay(
            electric_load=np.maximum(self.series["electric_load"], 0.0),
            heat_load=np.maximum(self.series["heat_load"], 0.0),
            wind_max=np.maximum(self.series["wind_max"], 0.0),
            pv_max=np.maximum(self.series["pv_max"], 0.0),
            weight=self.weight,
        )


def _select_series_days(
    season: SeasonData,
    month_idx: list[int],
    selection: str,
    rng: np.random.Generator,
) -> dict[str, int]:
    days = [season.days[i] for i in month_idx]
    if selection == "joint":
        local = select_medoid(days)
        return {name: month_idx[local] for name in SERIES_NAMES}
    if selection == "independent":
        # One medoid per series on that series' own (mean, variance).
        chosen = {}
        for name in SERIES_NAMES:
            feats = np.array(
                [[np.mean(d.series(name)), np.var(d.series(name))] for d in days]
            )
            chosen[name] = month_idx[_medoid_index(feats)]
        return chosen
    if selection == "random":
        # Like the independent mode, one day per series (drawn uniformly).
        return {
            name: month_idx[int(rng.integers(len(month_idx)))] for name in SERIES_NAMES
        }
    raise ValueError(f"unknown selection mode {selection!r}; expected one of {SELECTION_MODES}")


def generate_typical_scenarios(
    season: SeasonData, selection: str = "joint", seed: int = 0
) -> list[TypicalScenario]:
    """One moment-matched typical day per month of the season.

    ``selection`` picks the source day(s): ``joint`` (default) is the medoid
    on the four clustering features followed by the power-law moment
    adjustment; ``independent`` and ``random`` are unadjusted comparison
    modes (per-series medoids, and a seeded uniform draw).
    """
    if selection not in SELECTION_MODES:
        raise ValueError(f"unknown selection mode {selection!r}; expected one of {SELECTION_MODES}")
    rng = np.random.default_rng(seed)
    out: list[TypicalScenario] = []
    for month in season.months():
        month_idx = season.month_day_indices(month)
        series_days = _select_series_days(season, month_idx, selection, rng)
        targets = monthly_moments([season.days[i] for i in month_idx])
        series: dict[str, np.ndarray] = {}
        notes: dict[str, SeriesAdjustment] = {}
        for name in SERIES_NAMES:
            source = season.days[series_days[name]].series(name)
            if selection != "joint":
                series[name] = source.copy()
                notes[name] = SeriesAdjustment(
                    1.0, 0.0, False, f"{selection} selection does not adjust moments"
                )
                continue
            mean_t, var_t = targets[name]
            try:
                adjusted, a, b = adjust_curve(source, mean_t, var_t)
                series[name] = adjusted
                notes[name] = SeriesAdjustment(a, b, True)
            except (AdjustmentError, ValueError) as exc:
                series[name] = source.copy()
                notes[name] = SeriesAdjustment(1.0, 0.0, False, str(exc))
        out.append(
            TypicalScenario(
                month=month,
                weight=float(len(month_idx)),
                series=series,
                series_days=series_days,
                adjustments=notes,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Season CSV


def _parse_timestamp(text: str, line: int) -> datetime.datetime:
    try:
        return datetime.datetime.fromisoformat(text.strip())
    except ValueError:
        raise SeasonFormatError(f"line {line}: bad timestamp {text!r}") from None


def load_season(path) -> SeasonData:
    """Parse an hourly season CSV (timestamp + the four MW series).

    Rows must form whole days: 24 consecutive rows per date, hours 0..23 in
    order.  Errors cite the offending line and column.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SeasonFormatError("season file is empty") from None
        header = [h.strip() for h in header]
        col = {}
        for name in _CSV_COLUMNS:
            if name not in header:
                raise SeasonFormatError(f"missing column {name!r} in season file header")
            col[name] = header.index(name)

        days: list[DayRecord] = []
        cur_date: datetime.date | None = None
        cur: dict[str, list[float]] = {}
        line = 1

        def close_day(line: int):
            if cur_date is None:
                return
            if len(cur["electric_load"]) != HOURS_PER_DAY:
                raise SeasonFormatError(
                    f"line {line}: day {cur_date} has {len(cur['electric_load'])} "
                    f"hourly rows, expected {HOURS_PER_DAY}"
                )
            days.append(DayRecord(date=cur_date.isoformat(), **{k: np.array(v) for k, v in cur.items()}))

        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise SeasonFormatError(f"line {line}: expected {len(header)} fields, got {len(row)}")
            stamp = _parse_timestamp(row[col["timestamp"]], line)
            if stamp.date() != cur_date:
                close_day(line)
                cur_date = stamp.date()
                cur = {field: [] for field in SERIES_NAMES}
            hour = len(cur["electric_load"])
            if stamp.hour != hour:
                raise SeasonFormatError(
                    f"line {line}: expected hour {hour:02d} of {cur_date}, got {stamp.hour:02d}"
                )
            for name, field in _CSV_COLUMNS.items():
                if field is None:
                    continue
                cell = row[col[name]]
                try:
                    value = float(cell)
                except ValueError:
                    raise SeasonFormatError(
                        f"line {line}, column {name}: bad number {cell!r}"
                    ) from None
                if not np.isfinite(value) or value < 0.0:
                    raise SeasonFormatError(
                        f"line {line}, column {name}: value must be finite and >= 0"
                    )
                cur[field].append(value)
        close_day(line + 1)
        return SeasonData(days=tuple(days))


def save_season(path, season: SeasonData) -> None:
    """Write the hourly season CSV consumed by :func:`load_season`."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(_CSV_COLUMNS))
        for day in season.days:
            for hour in range(HOURS_PER_DAY):
                writer.writerow(
                    [f"{day.date} {hour:02d}:00"]
                    + [repr(float(day.series(name)[hour])) for name in SERIES_NAMES]
                )


# ---------------------------------------------------------------------------
# Typical-scenario bundle


@dataclasses.dataclass(frozen=True)
class ScenarioBundle:
    """A saved set of typical scenarios plus provenance notes."""

    scenarios: tuple[TypicalScenario, ...]
    selection: str = "joint"
    source: Mapping[str, object] | None = None

    def typical_days(self) -> list[TypicalDay]:
        return [s.day for s in self.scenarios]


def save_bundle(path, bundle: ScenarioBundle) -> None:
    """Serialize a bundle to deterministic JSON."""
    doc = {
        "format": BUNDLE_FORMAT,
        "selection": bundle.selection,
        "source": dict(bundle.source) if bundle.source else None,
        "scenarios": [
            {
                "month": s.month,
                "weight": s.weight,
                "series_days": dict(s.series_days),
                "series": {k: [float(v) for v in s.series[k]] for k in SERIES_NAMES},
                "adjustments": {
                    k: dataclasses.asdict(s.adjustments[k]) for k in SERIES_NAMES
                },
            }
            for s in bundle.scenarios
        ],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_bundle(path) -> ScenarioBundle:
    """Parse a bundle written by :func:`save_bundle`."""
    try:
        with open(path, encoding="utf-8") as handle:
            doc = json.load(handle)
    except json.JSONDecodeError as exc:
        raise BundleFormatError(f"bundle is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != BUNDLE_FORMAT:
        raise BundleFormatError(
            f"unrecognized bundle format {doc.get('format')!r} (expected {BUNDLE_FORMAT!r})"
        )
    scenarios = []
    for i, item in enumerate(doc.get("scenarios", [])):
        try:
            notes = {
                k: SeriesAdjustment(**item["adjustments"][k]) for k in SERIES_NAMES
            }
            scenarios.append(
                TypicalScenario(
                    month=str(item["month"]),
                    weight=float(item["weight"]),
                    series={k: np.asarray(item["series"][k], float) for k in SERIES_NAMES},
                    series_days={k: int(v) for k, v in item["series_days"].items()},
                    adjustments=notes,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BundleFormatError(f"scenarios[{i}]: {exc}") from None
    if not scenarios:
        raise BundleFormatError("bundle holds no scenarios")
    return ScenarioBundle(
        scenarios=tuple(scenarios),
        selection=str(doc.get("selection", "joint")),
        source=doc.get("source"),
    )
