"""Day-ahead operation simulation of an electric-heat coupled system.

Builds one convex quadratic program per typical day: thermal generators and
combined heat-and-power units serve the electric load together with wind and
photovoltaic in-feed, while a district heating network with transport delay
and loss couples the heat sources (CHP extraction, heat pumps, electric
boilers, storage discharge) to the heat load. Capacity variables of the
planning layer (boiler/pump ratings, storage sizes) enter as bounds and
investment terms only, so the per-day problem stays convex.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np
import scipy.sparse as sp

from .solver import QuadraticProgram, SolverSettings, solve_qp

__all__ = [
    "BoilerSpec",
    "CapacityError",
    "CapacityScheme",
    "ChpGenerator",
    "DispatchResult",
    "HeaterStorageSpec",
    "ObjectivePair",
    "PumpSpec",
    "StorageSpec",
    "SystemConfig",
    "TraditionalGenerator",
    "TypicalDay",
    "build_day_problem",
    "capital_recovery",
    "config_from_dict",
    "config_to_dict",
    "constraint_residuals",
    "evaluate_scheme",
    "investment_cost",
    "load_config",
    "save_config",
    "scheme_from_vector",
    "scheme_to_vector",
    "simulate_day",
]

_ZERO_CAP = 1e-12


class CapacityError(ValueError):
    """A configuration that cannot serve its loads regardless of dispatch."""


@dataclasses.dataclass(frozen=True)
class TraditionalGenerator:
    """Condensing unit with quadratic fuel cost c1*P^2 + c2*P + c3."""

    cost: tuple[float, float, float]
    p_min: float
    p_max: float
    ramp: float

    def __post_init__(self):
        object.__setattr__(self, "cost", tuple(float(c) for c in self.cost))
        if len(self.cost) != 3:
            raise ValueError("traditional generator needs 3 cost coefficients")
        if self.cost[0] < 0:
            raise ValueError("quadratic fuel coefficient must be >= 0")
        if not 0 <= self.p_min <= self.p_max:
            raise ValueError("need 0 <= p_min <= p_max")
        if self.ramp <= 0:
            raise ValueError("ramp limit must be positive")


@dataclasses.dataclass(frozen=True)
class ChpGenerator:
    """Extraction CHP unit with coupled electric/thermal output.

    cost holds c1..c6 of the fuel polynomial
    c1*P^2 + c2*P + c3 + c4*H^2 + c5*H + c6*H*P; region holds the feasible
    operating region slopes (c_vcd, c_m, c_cab). The lower-boundary intercept
    c_k defaults to the value that makes both lower boundaries meet at
    (h_min, p_min).
    """

    cost: tuple[float, float, float, float, float, float]
    region: tuple[float, float, float]
    p_min: float
    p_max: float
    h_min: float
    h_max: float
    ramp: float
    c_k: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "cost", tuple(float(c) for c in self.cost))
        object.__setattr__(self, "region", tuple(float(c) for c in self.region))
        if len(self.cost) != 6:
            raise ValueError("CHP generator needs 6 cost coefficients")
        if len(self.region) != 3:
            raise ValueError("CHP generator needs 3 region coefficients")
        c1, _, _, c4, _, c6 = self.cost
        # operating cost must stay jointly convex in (P, H)
        if c1 < 0 or c4 < 0 or 4.0 * c1 * c4 < c6 * c6 - 1e-12:
            raise ValueError("CHP fuel polynomial is not convex")
        if not 0 <= self.p_min <= self.p_max:
            raise ValueError("need 0 <= p_min <= p_max")
        if not 0 <= self.h_min <= self.h_max:
            raise ValueError("need 0 <= h_min <= h_max")
        if self.ramp <= 0:
            raise ValueError("ramp limit must be positive")

    @property
    def intercept(self) -> float:
        """Lower-boundary intercept of the back-pressure line."""
        if self.c_k is not None:
            return float(self.c_k)
        c_vcd, c_m, _ = self.region
        return self.p_min - (c_vcd + c_m) * self.h_min


@dataclasses.dataclass(frozen=True)
class BoilerSpec:
    """Electric boiler catalog entry (rated in MW consumed)."""

    unit_cost: float = 300_000.0
    lifetime: int = 25
    kappa: float = 0.02
    beta: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("boiler conversion efficiency must be in (0, 1]")


@dataclasses.dataclass(frozen=True)
class PumpSpec:
    """Heat pump catalog entry (rated in MW consumed)."""

    unit_cost: float = 3_000_000.0
    lifetime: int = 15
    kappa: float = 0.02
    cop: float = 4.0

    def __post_init__(self):
        if self.cop < 1.0:
            raise ValueError("COP must be >= 1")


@dataclasses.dataclass(frozen=True)
class StorageSpec:
    """Thermal storage tank catalog entry (sized in MWh).

    eta is the per-step self-discharge fraction, rho the auxiliary pumping
    power per MWh/h moved, io_ratio the per-step charge/discharge cap as a
    fraction of capacity.
    """

    unit_cost: float = 100_000.0
    lifetime: int = 25
    kappa: float = 0.02
    eta: float = 0.10
    rho: float = 0.02
    io_ratio: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("self-discharge must be in [0, 1)")
        if self.rho < 0 or self.io_ratio <= 0:
            raise ValueError("rho must be >= 0 and io_ratio > 0")


@dataclasses.dataclass(frozen=True)
class HeaterStorageSpec:
    """Combined storage heater catalog entry (sized in MWh).

    The built-in resistive heater charges the store from electricity at
    conversion beta; heater_ratio is its MW rating per MWh of storage.
    """

    unit_cost: float = 50_000.0
    lifetime: int = 15
    kappa: float = 0.02
    beta: float = 0.95
    eta: float = 0.05
    rho: float = 0.02
    io_ratio: float = 0.25
    heater_ratio: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("heater conversion efficiency must be in (0, 1]")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("self-discharge must be in [0, 1)")
        if self.rho < 0 or self.io_ratio <= 0 or self.heater_ratio <= 0:
            raise ValueError("rho >= 0 and positive io/heater ratios required")


@dataclasses.dataclass(frozen=True)
class SystemConfig:
    """Immutable description of the existing system and equipment catalog."""

    traditional: tuple[TraditionalGenerator, ...] = ()
    chp: tuple[ChpGenerator, ...] = ()
    lambda_net: float = 0.05
    t_delay: int = 2
    e_net_min: float = 0.0
    e_net_max: float = 200.0
    price_eb: float = 1.0
    price_csh: float = 1.0
    eb: BoilerSpec = BoilerSpec()
    pump: PumpSpec = PumpSpec()
    tes: StorageSpec = StorageSpec()
    csh: HeaterStorageSpec = HeaterStorageSpec()
    tau: float = 0.05
    wind_capacity: float = 0.0
    pv_capacity: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "traditional", tuple(self.traditional))
        object.__setattr__(self, "chp", tuple(self.chp))
        if not 0.0 <= self.lambda_net < 1.0:
            raise ValueError("network loss fraction must be in [0, 1)")
        if self.t_delay < 0 or int(self.t_delay) != self.t_delay:
            raise ValueError("transport delay must be a nonnegative integer")
        if self.e_net_min > self.e_net_max:
            raise ValueError("need e_net_min <= e_net_max")
        if self.tau <= 0:
            raise ValueError("interest rate must be positive")
        if self.wind_capacity < 0 or self.pv_capacity < 0:
            raise ValueError("fleet sizes must be >= 0")


@dataclasses.dataclass(frozen=True)
class CapacityScheme:
    """Candidate sizes for the four plannable heat-source kinds."""

    eb_rated: tuple[float, ...] = ()
    pump_rated: tuple[float, ...] = ()
    tes_capacity: tuple[float, ...] = ()
    csh_capacity: tuple[float, ...] = ()

    def __post_init__(self):
        for name in ("eb_rated", "pump_rated", "tes_capacity", "csh_capacity"):
            vals = tuple(float(v) for v in getattr(self, name))
            if any(v < 0 for v in vals):
                raise ValueError(f"{name} entries must be >= 0")
            object.__setattr__(self, name, vals)


def scheme_from_vector(x, n_eb: int, n_pump: int, n_tes: int, n_csh: int) -> CapacityScheme:
    """Unpacks a flat decision vector ordered [eb..., pump..., tes..., csh...]."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != n_eb + n_pump + n_tes + n_csh:
        raise ValueError(f"expected {n_eb + n_pump + n_tes + n_csh} entries, got {x.size}")
    parts = np.split(x, np.cumsum([n_eb, n_pump, n_tes]))
    return CapacityScheme(
        eb_rated=tuple(parts[0]),
        pump_rated=tuple(parts[1]),
        tes_capacity=tuple(parts[2]),
        csh_capacity=tuple(parts[3]),
    )


def scheme_to_vector(scheme: CapacityScheme) -> np.ndarray:
    return np.array(
        scheme.eb_rated + scheme.pump_rated + scheme.tes_capacity + scheme.csh_capacity
    )


@dataclasses.dataclass(frozen=True)
class TypicalDay:
    """One clustered day: loads and renewable availability, hourly steps."""

    electric_load: np.ndarray
    heat_load: np.ndarray
    wind_max: np.ndarray
    pv_max: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        arrays = {}
        for name in ("electric_load", "heat_load", "wind_max", "pv_max"):
            arr = np.asarray(getattr(self, name), dtype=float).ravel()
            arrays[name] = arr
            object.__setattr__(self, name, arr)
        lengths = {a.size for a in arrays.values()}
        if len(lengths) != 1 or lengths == {0}:
            raise ValueError("all day curves must share one length >= 1")
        for name, arr in arrays.items():
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} must be finite and >= 0")
        if not self.weight > 0:
            raise ValueError("day weight must be positive")

    @property
    def horizon(self) -> int:
        return self.electric_load.size


@dataclasses.dataclass
class DispatchResult:
    """Optimal day schedule, or a flagged failure."""

    status: str
    cost: float
    res_consumed: float
    schedules: dict[str, np.ndarray]
    iterations: int = 0
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"


@dataclasses.dataclass(frozen=True)
class ObjectivePair:
    """The two minimized planning objectives for one scheme."""

    annual_cost: float
    neg_res_consumed: float
    penalized: bool = False

    @property
    def values(self) -> tuple[float, float]:
        return (self.annual_cost, self.neg_res_consumed)


# ------------------------------------------------------------- investment


def capital_recovery(tau: float, t_life: int) -> float:
    """Annualization factor tau(1+tau)^T / ((1+tau)^T - 1)."""
    if tau <= 0:
        raise ValueError("interest rate must be positive")
    if t_life < 1 or int(t_life) != t_life:
        raise ValueError("lifetime must be an integer >= 1")
    if t_life == 1:
        # one-year annuity degenerates to principal plus interest; the
        # general formula loses this identity to cancellation in the divisor
        return 1.0 + tau
    growth = (1.0 + tau) ** int(t_life)
    return tau * growth / (growth - 1.0)


def investment_cost(scheme: CapacityScheme, cfg: SystemConfig) -> float:
    """Equivalent annual investment plus fixed O&M, linear in each size."""
    total = 0.0
    for sizes, spec in (
        (scheme.eb_rated, cfg.eb),
        (scheme.pump_rated, cfg.pump),
        (scheme.tes_capacity, cfg.tes),
        (scheme.csh_capacity, cfg.csh),
    ):
        factor = capital_recovery(cfg.tau, spec.lifetime) + spec.kappa
        total += spec.unit_cost * factor * sum(sizes)
    return total


# ------------------------------------------------------------ QP assembly


class _Layout:
    """Column bookkeeping: each block is n_units contiguous runs of T."""

    def __init__(self, T: int):
        self.T = T
        self.blocks: dict[str, tuple[int, int]] = {}
        self.n = 0

    def add(self, name: str, n_units: int) -> None:
        if n_units > 0:
            self.blocks[name] = (self.n, n_units)
            self.n += n_units * self.T

    def has(self, name: str) -> bool:
        return name in self.blocks

    def idx(self, name: str, unit: int, t: int) -> int:
        start, n_units = self.blocks[name]
        if not 0 <= unit < n_units:
            raise IndexError(f"unit {unit} out of range for block {name}")
        return start + unit * self.T + t

    def units(self, name: str) -> int:
        return self.blocks[name][1] if name in self.blocks else 0


def _active(sizes) -> list[tuple[int, float]]:
    return [(i, float(s)) for i, s in enumerate(sizes) if s > _ZERO_CAP]


def _precheck(cfg: SystemConfig, scheme: CapacityScheme, day: TypicalDay) -> None:
    """Rejects configurations that cannot balance either carrier.

    Only necessary conditions are tested, so a passing instance may still be
    infeasible (the solver settles that), but a failure here is certain.
    """
    T = day.horizon
    heat_rate = (
        sum(g.h_max for g in cfg.chp)
        + cfg.eb.beta * sum(scheme.eb_rated)
        + cfg.pump.cop * sum(scheme.pump_rated)
        + cfg.csh.beta * cfg.csh.heater_ratio * sum(scheme.csh_capacity)
    )
    producible = (1.0 - cfg.lambda_net) * T * heat_rate
    if day.heat_load.sum() > producible + 1e-9:
        raise CapacityError(
            f"daily heat demand {day.heat_load.sum():.1f} MWh exceeds the "
            f"maximum producible {producible:.1f} MWh"
        )
    p_max_total = sum(g.p_max for g in cfg.traditional) + sum(g.p_max for g in cfg.chp)
    short = day.electric_load - (p_max_total + day.wind_max + day.pv_max)
    if np.any(short > 1e-9):
        t = int(np.argmax(short))
        raise CapacityError(f"electric load at step {t} exceeds total generation capability")
    p_min_total = sum(g.p_min for g in cfg.traditional) + sum(g.p_min for g in cfg.chp)
    absorb = (
        sum(scheme.eb_rated)
        + sum(scheme.pump_rated)
        + cfg.csh.heater_ratio * sum(scheme.csh_capacity)
        + 2.0 * cfg.tes.rho * cfg.tes.io_ratio * sum(scheme.tes_capacity)
        + 2.0 * cfg.csh.rho * cfg.csh.io_ratio * sum(scheme.csh_capacity)
    )
    surplus = p_min_total - (day.electric_load + absorb)
    if np.any(surplus > 1e-9):
        t = int(np.argmax(surplus))
        raise CapacityError(
            f"minimum generation exceeds electric load plus absorbable demand at step {t}"
        )


def _build(cfg: SystemConfig, scheme: CapacityScheme, day: TypicalDay):
    _precheck(cfg, scheme, day)
    T = day.horizon
    td = float(day.weight)

    eb_act = _active(scheme.eb_rated)
    pump_act = _active(scheme.pump_rated)
    tes_act = _active(scheme.tes_capacity)
    csh_act = _active(scheme.csh_capacity)

    heat_side = bool(
        cfg.chp
        or eb_act
        or pump_act
        or tes_act
        or csh_act
        or np.any(day.heat_load > 0)
    )

    lay = _Layout(T)
    lay.add("tra", len(cfg.traditional))
    lay.add("chp_p", len(cfg.chp))
    lay.add("chp_h", len(cfg.chp))
    lay.add("wind", 1 if np.any(day.wind_max > 0) else 0)
    lay.add("pv", 1 if np.any(day.pv_max > 0) else 0)
    lay.add("eb_p", len(eb_act))
    lay.add("eb_h", len(eb_act))
    lay.add("pump_p", len(pump_act))
    lay.add("pump_h", len(pump_act))
    lay.add("csh_p", len(csh_act))
    lay.add("csh_in", len(csh_act))
    lay.add("csh_out", len(csh_act))
    lay.add("csh_q", len(csh_act))
    lay.add("tes_in", len(tes_act))
    lay.add("tes_out", len(tes_act))
    lay.add("tes_q", len(tes_act))
    if heat_side:
        lay.add("h_net_in", 1)
        lay.add("e_net", 1)
    if lay.n == 0:
        raise CapacityError("model has no decision variables")

    eq_rows: list[list[tuple[int, float]]] = []
    eq_rhs: list[float] = []
    in_rows: list[list[tuple[int, float]]] = []
    in_lo: list[float] = []
    in_up: list[float] = []

    def add_eq(coeffs, rhs):
        eq_rows.append(coeffs)
        eq_rhs.append(rhs)

    def add_in(coeffs, lo, up):
        in_rows.append(coeffs)
        in_lo.append(lo)
        in_up.append(up)

    # power balance: generation = load + electric heat-source consumption
    for t in range(T):
        row = []
        for i in range(len(cfg.traditional)):
            row.append((lay.idx("tra", i, t), 1.0))
        for i in range(len(cfg.chp)):
            row.append((lay.idx("chp_p", i, t), 1.0))
        if lay.has("wind"):
            row.append((lay.idx("wind", 0, t), 1.0))
        if lay.has("pv"):
            row.append((lay.idx("pv", 0, t), 1.0))
        for a in range(len(eb_act)):
            row.append((lay.idx("eb_p", a, t), -1.0))
        for a in range(len(pump_act)):
            row.append((lay.idx("pump_p", a, t), -1.0))
        for a in range(len(tes_act)):
            row.append((lay.idx("tes_in", a, t), -cfg.tes.rho))
            row.append((lay.idx("tes_out", a, t), -cfg.tes.rho))
        for a in range(len(csh_act)):
            row.append((lay.idx("csh_p", a, t), -1.0))
            row.append((lay.idx("csh_in", a, t), -cfg.csh.rho))
            row.append((lay.idx("csh_out", a, t), -cfg.csh.rho))
        add_eq(row, float(day.electric_load[t]))

    # conversion links
    for a in range(len(eb_act)):
        for t in range(T):
            add_eq([(lay.idx("eb_h", a, t), 1.0), (lay.idx("eb_p", a, t), -cfg.eb.beta)], 0.0)
    for a in range(len(pump_act)):
        for t in range(T):
            add_eq(
                [(lay.idx("pump_h", a, t), 1.0), (lay.idx("pump_p", a, t), -cfg.pump.cop)], 0.0
            )
    for a in range(len(csh_act)):
        for t in range(T):
            add_eq(
                [(lay.idx("csh_in", a, t), 1.0), (lay.idx("csh_p", a, t), -cfg.csh.beta)], 0.0
            )

    if heat_side:
        # source-side header: production minus storage charge feeds the network
        for t in range(T):
            row = [(lay.idx("h_net_in", 0, t), 1.0)]
            for i in range(len(cfg.chp)):
                row.append((lay.idx("chp_h", i, t), -1.0))
            for a in range(len(eb_act)):
                row.append((lay.idx("eb_h", a, t), -1.0))
            for a in range(len(pump_act)):
                row.append((lay.idx("pump_h", a, t), -1.0))
            for a in range(len(tes_act)):
                row.append((lay.idx("tes_in", a, t), 1.0))
                row.append((lay.idx("tes_out", a, t), -1.0))
            for a in range(len(csh_act)):
                row.append((lay.idx("csh_out", a, t), -1.0))
            add_eq(row, 0.0)

        # network energy with loss and transport delay, cyclic over the day
        for t in range(T):
            row = [
                (lay.idx("e_net", 0, t), 1.0),
                (lay.idx("e_net", 0, (t - 1) % T), -1.0),
                (lay.idx("h_net_in", 0, t), -(1.0 - cfg.lambda_net)),
            ]
            add_eq(row, -float(day.heat_load[(t + cfg.t_delay) % T]))

    for act, kind, spec in (
        (tes_act, "tes", cfg.tes),
        (csh_act, "csh", cfg.csh),
    ):
        for a in range(len(act)):
            for t in range(T):
                add_eq(
                    [
                        (lay.idx(f"{kind}_q", a, t), 1.0),
                        (lay.idx(f"{kind}_q", a, (t - 1) % T), -(1.0 - spec.eta)),
                        (lay.idx(f"{kind}_in", a, t), -1.0),
                        (lay.idx(f"{kind}_out", a, t), 1.0),
                    ],
                    0.0,
                )

    # variable boxes
    for i, g in enumerate(cfg.traditional):
        for t in range(T):
            add_in([(lay.idx("tra", i, t), 1.0)], g.p_min, g.p_max)
    for i, g in enumerate(cfg.chp):
        for t in range(T):
            add_in([(lay.idx("chp_p", i, t), 1.0)], g.p_min, g.p_max)
            add_in([(lay.idx("chp_h", i, t), 1.0)], g.h_min, g.h_max)
    if lay.has("wind"):
        for t in range(T):
            add_in([(lay.idx("wind", 0, t), 1.0)], 0.0, float(day.wind_max[t]))
    if lay.has("pv"):
        for t in range(T):
            add_in([(lay.idx("pv", 0, t), 1.0)], 0.0, float(day.pv_max[t]))
    for a, (_, rated) in enumerate(eb_act):
        for t in range(T):
            add_in([(lay.idx("eb_p", a, t), 1.0)], 0.0, rated)
    for a, (_, rated) in enumerate(pump_act):
        for t in range(T):
            add_in([(lay.idx("pump_p", a, t), 1.0)], 0.0, rated)
    for a, (_, size) in enumerate(csh_act):
        cap_io = cfg.csh.io_ratio * size
        for t in range(T):
            add_in([(lay.idx("csh_p", a, t), 1.0)], 0.0, cfg.csh.heater_ratio * size)
            add_in([(lay.idx("csh_in", a, t), 1.0)], 0.0, cap_io)
            add_in([(lay.idx("csh_out", a, t), 1.0)], 0.0, cap_io)
            add_in([(lay.idx("csh_q", a, t), 1.0)], 0.0, size)
    for a, (_, size) in enumerate(tes_act):
        cap_io = cfg.tes.io_ratio * size
        for t in range(T):
            add_in([(lay.idx("tes_in", a, t), 1.0)], 0.0, cap_io)
            add_in([(lay.idx("tes_out", a, t), 1.0)], 0.0, cap_io)
            add_in([(lay.idx("tes_q", a, t), 1.0)], 0.0, size)
    if heat_side:
        for t in range(T):
            add_in([(lay.idx("h_net_in", 0, t), 1.0)], 0.0, np.inf)
            add_in([(lay.idx("e_net", 0, t), 1.0)], cfg.e_net_min, cfg.e_net_max)

    # ramping, cyclic like the storage states
    if T > 1:
        for i, g in enumerate(cfg.traditional):
            for t in range(T):
                add_in(
                    [(lay.idx("tra", i, t), 1.0), (lay.idx("tra", i, (t - 1) % T), -1.0)],
                    -g.ramp,
                    g.ramp,
                )
        for i, g in enumerate(cfg.chp):
            for t in range(T):
                add_in(
                    [(lay.idx("chp_p", i, t), 1.0), (lay.idx("chp_p", i, (t - 1) % T), -1.0)],
                    -g.ramp,
                    g.ramp,
                )

    # CHP feasible operating region
    for i, g in enumerate(cfg.chp):
        c_vcd, c_m, c_cab = g.region
        for t in range(T):
            p = lay.idx("chp_p", i, t)
            h = lay.idx("chp_h", i, t)
            add_in([(p, 1.0), (h, c_vcd)], g.p_min, np.inf)
            add_in([(p, 1.0), (h, -c_m)], g.intercept, np.inf)
            add_in([(p, 1.0), (h, c_cab)], -np.inf, g.p_max)

    # cost: quadratic fuel terms plus linear electricity prices, all x weight
    q = np.zeros(lay.n)
    Q_r: list[int] = []
    Q_c: list[int] = []
    Q_v: list[float] = []
    for i, g in enumerate(cfg.traditional):
        c1, c2, _ = g.cost
        for t in range(T):
            col = lay.idx("tra", i, t)
            if c1 > 0:
                Q_r.append(col)
                Q_c.append(col)
                Q_v.append(2.0 * c1 * td)
            q[col] += c2 * td
    for i, g in enumerate(cfg.chp):
        c1, c2, _, c4, c5, c6 = g.cost
        for t in range(T):
            p = lay.idx("chp_p", i, t)
            h = lay.idx("chp_h", i, t)
            if c1 > 0:
                Q_r.append(p)
                Q_c.append(p)
                Q_v.append(2.0 * c1 * td)
            if c4 > 0:
                Q_r.append(h)
                Q_c.append(h)
                Q_v.append(2.0 * c4 * td)
            if c6 != 0.0:
                Q_r.extend([p, h])
                Q_c.extend([h, p])
                Q_v.extend([c6 * td, c6 * td])
            q[p] += c2 * td
            q[h] += c5 * td
    for a in range(len(eb_act)):
        for t in range(T):
            q[lay.idx("eb_p", a, t)] += cfg.price_eb * td
    for a in range(len(csh_act)):
        for t in range(T):
            q[lay.idx("csh_p", a, t)] += cfg.price_csh * td

    def to_csc(rows):
        r, c, v = [], [], []
        for k, coeffs in enumerate(rows):
            for col, val in coeffs:
                r.append(k)
                c.append(col)
                v.append(val)
        return sp.csc_matrix((v, (r, c)), shape=(len(rows), lay.n))

    problem = QuadraticProgram(
        Q=sp.csc_matrix((Q_v, (Q_r, Q_c)), shape=(lay.n, lay.n)),
        q=q,
        A_eq=to_csc(eq_rows),
        b_eq=np.array(eq_rhs),
        A_in=to_csc(in_rows),
        l_in=np.array(in_lo),
        u_in=np.array(in_up),
    )
    active = {"eb": eb_act, "pump": pump_act, "tes": tes_act, "csh": csh_act}
    return problem, lay, active


def build_day_problem(
    cfg: SystemConfig, scheme: CapacityScheme, day: TypicalDay
) -> QuadraticProgram:
    """Assembles the convex day-dispatch program for one typical day."""
    problem, _, _ = _build(cfg, scheme, day)
    return problem


def _extract_schedules(z, lay: _Layout, cfg, scheme, active, T):
    def pull(name, n_total, act=None):
        out = np.zeros((n_total, T))
        if lay.has(name):
            start, n_units = lay.blocks[name]
            for a in range(n_units):
                orig = act[a][0] if act is not None else a
                out[orig] = z[start + a * T : start + (a + 1) * T]
        return out

    return {
        "tra": pull("tra", len(cfg.traditional)),
        "chp_p": pull("chp_p", len(cfg.chp)),
        "chp_h": pull("chp_h", len(cfg.chp)),
        "wind": pull("wind", 1)[0],
        "pv": pull("pv", 1)[0],
        "eb_p": pull("eb_p", len(scheme.eb_rated), active["eb"]),
        "eb_h": pull("eb_h", len(scheme.eb_rated), active["eb"]),
        "pump_p": pull("pump_p", len(scheme.pump_rated), active["pump"]),
        "pump_h": pull("pump_h", len(scheme.pump_rated), active["pump"]),
        "csh_p": pull("csh_p", len(scheme.csh_capacity), active["csh"]),
        "csh_in": pull("csh_in", len(scheme.csh_capacity), active["csh"]),
        "csh_out": pull("csh_out", len(scheme.csh_capacity), active["csh"]),
        "csh_q": pull("csh_q", len(scheme.csh_capacity), active["csh"]),
        "tes_in": pull("tes_in", len(scheme.tes_capacity), active["tes"]),
        "tes_out": pull("tes_out", len(scheme.tes_capacity), active["tes"]),
        "tes_q": pull("tes_q", len(scheme.tes_capacity), active["tes"]),
        "h_net_in": pull("h_net_in", 1)[0],
        "e_net": pull("e_net", 1)[0],
    }


def _generation_cost(cfg: SystemConfig, sched: dict[str, np.ndarray]) -> float:
    """Unweighted one-day generation cost evaluated from the schedules."""
    total = 0.0
    for i, g in enumerate(cfg.traditional):
        c1, c2, c3 = g.cost
        p = sched["tra"][i]
        total += float(np.sum(c1 * p * p + c2 * p + c3))
    for i, g in enumerate(cfg.chp):
        c1, c2, c3, c4, c5, c6 = g.cost
        p = sched["chp_p"][i]
        h = sched["chp_h"][i]
        total += float(np.sum(c1 * p * p + c2 * p + c3 + c4 * h * h + c5 * h + c6 * h * p))
    total += cfg.price_eb * float(sched["eb_p"].sum())
    total += cfg.price_csh * float(sched["csh_p"].sum())
    return total


def simulate_day(
    cfg: SystemConfig,
    scheme: CapacityScheme,
    day: TypicalDay,
    settings: SolverSettings | None = None,
) -> DispatchResult:
    """Solves one typical day and reports cost, RES use, and schedules.

    cost is the unweighted one-day generation cost; the day weight is applied
    by evaluate_scheme when aggregating a season.  The problem is solved at
    unit weight — a positive objective scale never moves the argmin — so a
    day's schedule is invariant to the weight it later carries.
    """
    if day.weight != 1.0:
        day = dataclasses.replace(day, weight=1.0)
    try:
        problem, lay, active = _build(cfg, scheme, day)
    except CapacityError as exc:
        return DispatchResult(
            status="capacity", cost=math.nan, res_consumed=0.0, schedules={}, message=str(exc)
        )
    sol = solve_qp(problem, settings)
    if sol.status != "optimal":
        return DispatchResult(
            status=sol.status,
            cost=math.nan,
            res_consumed=0.0,
            schedules={},
            iterations=sol.iterations,
            message=f"day solve ended with status {sol.status}",
        )
    sched = _extract_schedules(sol.z, lay, cfg, scheme, active, day.horizon)
    cost = _generation_cost(cfg, sched)
    res = float(sched["wind"].sum() + sched["pv"].sum())
    return DispatchResult(
        status="optimal",
        cost=cost,
        res_consumed=res,
        schedules=sched,
        iterations=sol.iterations,
    )


def _cost_ceiling(cfg: SystemConfig, days) -> float:
    """Deterministic upper bound on any one-day generation cost."""
    T = max(d.horizon for d in days)
    total = 0.0
    for g in cfg.traditional:
        c1, c2, c3 = g.cost
        total += T * (c1 * g.p_max**2 + abs(c2) * g.p_max + abs(c3))
    for g in cfg.chp:
        c1, c2, c3, c4, c5, c6 = g.cost
        total += T * (
            c1 * g.p_max**2
            + abs(c2) * g.p_max
            + abs(c3)
            + c4 * g.h_max**2
            + abs(c5) * g.h_max
            + abs(c6) * g.h_max * g.p_max
        )
    return max(total, 1.0)


def evaluate_scheme(
    cfg: SystemConfig,
    scheme: CapacityScheme,
    days,
    settings: SolverSettings | None = None,
) -> ObjectivePair:
    """Annualized objectives of one scheme over a weighted typical-day set.

    Infeasible days contribute ten times the largest feasible day cost seen
    in this evaluation (a deterministic ceiling when every day fails) and no
    renewable energy, and the pair is flagged as penalized.
    """
    days = list(days)
    if not days:
        raise ValueError("need at least one typical day")
    results = [simulate_day(cfg, scheme, d, settings) for d in days]
    feasible_costs = [r.cost for r in results if r.feasible]
    penalized = len(feasible_costs) < len(results)
    base = max(feasible_costs) if feasible_costs else _cost_ceiling(cfg, days)
    penalty = 10.0 * max(base, 1.0)
    gen = 0.0
    res = 0.0
    for day, r in zip(days, results):
        if r.feasible:
            gen += day.weight * r.cost
            res += day.weight * r.res_consumed
        else:
            gen += day.weight * penalty
    return ObjectivePair(
        annual_cost=investment_cost(scheme, cfg) + gen,
        neg_res_consumed=-res,
        penalized=penalized,
    )


# ------------------------------------------------------------- diagnostics


def constraint_residuals(
    cfg: SystemConfig, scheme: CapacityScheme, day: TypicalDay, result: DispatchResult
) -> dict[str, float]:
    """Largest violation of each constraint family, recomputed from schedules."""
    if not result.feasible:
        raise ValueError("residuals are only defined for a feasible result")
    s = result.schedules
    T = day.horizon

    consumption = (
        day.electric_load
        + s["pump_p"].sum(axis=0)
        + s["eb_p"].sum(axis=0)
        + cfg.tes.rho * (s["tes_in"] + s["tes_out"]).sum(axis=0)
        + cfg.csh.rho * (s["csh_in"] + s["csh_out"]).sum(axis=0)
        + s["csh_p"].sum(axis=0)
    )
    generation = s["tra"].sum(axis=0) + s["chp_p"].sum(axis=0) + s["wind"] + s["pv"]
    out = {"power_balance": float(np.abs(generation - consumption).max())}

    supply = (
        s["chp_h"].sum(axis=0)
        + s["pump_h"].sum(axis=0)
        + s["eb_h"].sum(axis=0)
        - s["tes_in"].sum(axis=0)
        + s["tes_out"].sum(axis=0)
        + s["csh_out"].sum(axis=0)
    )
    out["heat_source_balance"] = float(np.abs(s["h_net_in"] - supply).max())

    e = s["e_net"]
    delayed = day.heat_load[(np.arange(T) + cfg.t_delay) % T]
    state = e - np.roll(e, 1) - (1.0 - cfg.lambda_net) * s["h_net_in"] + delayed
    out["network_state"] = float(np.abs(state).max())
    out["network_bounds"] = float(
        max(np.max(e - cfg.e_net_max, initial=0.0), np.max(cfg.e_net_min - e, initial=0.0))
    )

    for kind, spec, sizes in (
        ("tes", cfg.tes, scheme.tes_capacity),
        ("csh", cfg.csh, scheme.csh_capacity),
    ):
        q_s = s[f"{kind}_q"]
        flow = q_s - (1.0 - spec.eta) * np.roll(q_s, 1, axis=1) - s[f"{kind}_in"] + s[f"{kind}_out"]
        out[f"{kind}_state"] = float(np.abs(flow).max(initial=0.0))
        viol = 0.0
        for i, size in enumerate(sizes):
            cap_io = spec.io_ratio * size
            viol = max(
                viol,
                np.max(q_s[i] - size, initial=0.0),
                np.max(-q_s[i], initial=0.0),
                np.max(s[f"{kind}_in"][i] - cap_io, initial=0.0),
                np.max(-s[f"{kind}_in"][i], initial=0.0),
                np.max(s[f"{kind}_out"][i] - cap_io, initial=0.0),
                np.max(-s[f"{kind}_out"][i], initial=0.0),
            )
        out[f"{kind}_bounds"] = float(viol)

    viol = 0.0
    for i, g in enumerate(cfg.chp):
        c_vcd, c_m, c_cab = g.region
        p, h = s["chp_p"][i], s["chp_h"][i]
        viol = max(
            viol,
            np.max(g.p_min - (p + c_vcd * h), initial=0.0),
            np.max(g.intercept - (p - c_m * h), initial=0.0),
            np.max(p + c_cab * h - g.p_max, initial=0.0),
            np.max(g.p_min - p, initial=0.0),
            np.max(p - g.p_max, initial=0.0),
            np.max(g.h_min - h, initial=0.0),
            np.max(h - g.h_max, initial=0.0),
        )
        if T > 1:
            viol = max(viol, float(np.abs(p - np.roll(p, 1)).max() - g.ramp), 0.0)
    out["chp_region"] = float(viol)

    viol = 0.0
    for i, g in enumerate(cfg.traditional):
        p = s["tra"][i]
        viol = max(viol, np.max(g.p_min - p, initial=0.0), np.max(p - g.p_max, initial=0.0))
        if T > 1:
            viol = max(viol, float(np.abs(p - np.roll(p, 1)).max() - g.ramp), 0.0)
    out["traditional_bounds"] = float(viol)

    out["res_bounds"] = float(
        max(
            np.max(s["wind"] - day.wind_max, initial=0.0),
            np.max(-s["wind"], initial=0.0),
            np.max(s["pv"] - day.pv_max, initial=0.0),
            np.max(-s["pv"], initial=0.0),
        )
    )

    links = [
        np.abs(s["eb_h"] - cfg.eb.beta * s["eb_p"]),
        np.abs(s["pump_h"] - cfg.pump.cop * s["pump_p"]),
        np.abs(s["csh_in"] - cfg.csh.beta * s["csh_p"]),
    ]
    out["conversion_links"] = float(max(arr.max(initial=0.0) for arr in links))
    return out


# ------------------------------------------------------------ config I/O


def config_to_dict(cfg: SystemConfig) -> dict:
    return dataclasses.asdict(cfg)


def _build_from(cls, data: dict, where: str):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - fields
    if unknown:
        raise ValueError(f"{where}: unknown key(s) {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ValueError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> SystemConfig:
    """Validates and reconstructs a SystemConfig from plain JSON data."""
    if not isinstance(data, dict):
        raise ValueError("config root must be an object")
    data = dict(data)
    kwargs = {}
    kwargs["traditional"] = tuple(
        _build_from(TraditionalGenerator, g, f"traditional[{i}]")
        for i, g in enumerate(data.pop("traditional", []))
    )
    kwargs["chp"] = tuple(
        _build_from(ChpGenerator, g, f"chp[{i}]") for i, g in enumerate(data.pop("chp", []))
    )
    for key, cls in (
        ("eb", BoilerSpec),
        ("pump", PumpSpec),
        ("tes", StorageSpec),
        ("csh", HeaterStorageSpec),
    ):
        if key in data:
            kwargs[key] = _build_from(cls, data.pop(key), key)
    scalar_fields = {
        f.name
        for f in dataclasses.fields(SystemConfig)
        if f.name not in ("traditional", "chp", "eb", "pump", "tes", "csh")
    }
    unknown = set(data) - scalar_fields
    if unknown:
        raise ValueError(f"config: unknown key(s) {sorted(unknown)}")
    kwargs.update(data)
    return SystemConfig(**kwargs)


def save_config(cfg: SystemConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> SystemConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(data)
