"""Domain types and exact evaluators for dynamic economic dispatch with
prohibited operating zones (DED-POZ).

All types are immutable after construction and safe to share across threads;
the evaluators are pure functions of their arguments.
"""

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ValidationError

#: default tolerance (MW) for bounds / zone / ramp / reserve membership audits
AUDIT_TOL = 1e-6


def _readonly_array(values, what, ndim):
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ValidationError(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class OperatingSegment:
    """One allowed output interval of a unit.

    ``index`` is 1-based: segment 1 starts at the unit minimum and the last
    segment ends at the unit maximum.
    """

    index: int
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValidationError(f"segment {self.index}: lo {self.lo} > hi {self.hi}")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class GeneratingUnit:
    """A thermal unit with quadratic hourly cost and prohibited zones.

    The cost of producing ``p`` MW for one period is
    ``alpha + beta * p + gamma * p**2``.  ``ramp_down`` is a positive
    magnitude: output may drop by at most ``ramp_down`` MW between
    consecutive periods.  ``p_initial``, when given, constrains the ramp
    into the first period.
    """

    id: int
    alpha: float
    beta: float
    gamma: float
    p_min: float
    p_max: float
    ramp_up: float
    ramp_down: float
    prohibited_zones: tuple = ()
    p_initial: float | None = None

    def __post_init__(self):
        zones = tuple((float(lo), float(hi)) for lo, hi in self.prohibited_zones)
        object.__setattr__(self, "prohibited_zones", zones)
        name = f"unit {self.id}"
        for field in ("alpha", "beta", "gamma", "p_min", "p_max", "ramp_up", "ramp_down"):
            if not np.isfinite(getattr(self, field)):
                raise ValidationError(f"{name}: {field} must be finite")
        if not self.p_min < self.p_max:
            raise ValidationError(f"{name}: p_min {self.p_min} must be < p_max {self.p_max}")
        if self.gamma < 0:
            raise ValidationError(f"{name}: gamma must be >= 0 (convex cost), got {self.gamma}")
        if self.ramp_up <= 0:
            raise ValidationError(f"{name}: ramp_up must be > 0, got {self.ramp_up}")
        if self.ramp_down <= 0:
            raise ValidationError(f"{name}: ramp_down must be > 0, got {self.ramp_down}")
        if self.p_initial is not None and not np.isfinite(self.p_initial):
            raise ValidationError(f"{name}: p_initial must be finite")
        for k, (lo, hi) in enumerate(zones, start=1):
            if lo >= hi:
                raise ValidationError(f"{name}: zone {k} is empty or reversed ({lo}, {hi})")
            if lo <= self.p_min or hi >= self.p_max:
                raise ValidationError(
                    f"{name}: zone {k} ({lo}, {hi}) must lie strictly inside "
                    f"({self.p_min}, {self.p_max})")
        for k in range(1, len(zones)):
            if zones[k][0] <= zones[k - 1][1]:
                raise ValidationError(
                    f"{name}: zones {k} and {k + 1} overlap or are out of order")

    @property
    def n_zones(self) -> int:
        return len(self.prohibited_zones)

    def segments(self) -> tuple:
        return tuple(derive_segments(self))


def derive_segments(unit: GeneratingUnit) -> list:
    """Split ``[p_min, p_max]`` into the allowed intervals between zones.

    A unit with ``k`` zones yields ``k + 1`` segments; with no zones the
    single segment is the full operating range.
    """
    edges = [unit.p_min]
    for lo, hi in unit.prohibited_zones:
        edges.extend((lo, hi))
    edges.append(unit.p_max)
    return [OperatingSegment(index=j + 1, lo=edges[2 * j], hi=edges[2 * j + 1])
            for j in range(len(edges) // 2)]


@dataclass(frozen=True)
class LossModel:
    """Quadratic network-loss coefficients, per unit on an MVA base.

    For one period's outputs ``p`` (MW) the loss in MW is

        (b00 + b0 . (p / base) + (p / base)' B (p / base)) * base

    with ``base = base_mva``.  ``b_matrix`` must be symmetric; positive
    semidefiniteness is checked but only warned about, since published
    coefficient sets are occasionally slightly indefinite.
    """

    b00: float
    b0: np.ndarray
    b_matrix: np.ndarray
    base_mva: float = 100.0

    def __post_init__(self):
        b0 = _readonly_array(self.b0, "b0", 1)
        bm = _readonly_array(self.b_matrix, "b_matrix", 2)
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "b_matrix", bm)
        n = b0.shape[0]
        if bm.shape != (n, n):
            raise ValidationError(f"b_matrix shape {bm.shape} does not match b0 length {n}")
        if not np.isfinite(self.b00):
            raise ValidationError("b00 must be finite")
        if not np.isfinite(self.base_mva) or self.base_mva <= 0:
            raise ValidationError(f"base_mva must be > 0, got {self.base_mva}")
        scale = max(1.0, float(np.abs(bm).max(initial=0.0)))
        if float(np.abs(bm - bm.T).max(initial=0.0)) > 1e-9 * scale:
            raise ValidationError("b_matrix must be symmetric")
        if n and float(np.linalg.eigvalsh(bm).min()) < -1e-9 * scale:
            warnings.warn("b_matrix is indefinite; proceeding anyway", RuntimeWarning,
                          stacklevel=2)

    @property
    def n_units(self) -> int:
        return self.b0.shape[0]

    def is_zero(self) -> bool:
        return self.b00 == 0.0 and not self.b0.any() and not self.b_matrix.any()


def evaluate_loss_mw(loss_model: LossModel, p_t) -> float:
    """Network loss in MW for one period's outputs ``p_t`` (MW)."""
    p = np.asarray(p_t, dtype=float)
    if p.shape != (loss_model.n_units,):
        raise ValidationError(
            f"expected {loss_model.n_units} unit outputs, got shape {p.shape}")
    q = p / loss_model.base_mva
    per_unit = loss_model.b00 + loss_model.b0 @ q + q @ loss_model.b_matrix @ q
    return float(per_unit * loss_model.base_mva)


@dataclass(frozen=True)
class SystemInstance:
    """Units plus per-period demand and spinning-reserve requirements (MW)."""

    units: tuple
    demand: np.ndarray
    reserve: np.ndarray
    loss_model: LossModel | None = None

    def __post_init__(self):
        units = tuple(self.units)
        object.__setattr__(self, "units", units)
        demand = _readonly_array(self.demand, "demand", 1)
        reserve = _readonly_array(self.reserve, "reserve", 1)
        object.__setattr__(self, "demand", demand)
        object.__setattr__(self, "reserve", reserve)
        if not units:
            raise ValidationError("at least one unit is required")
        if demand.shape[0] < 1:
            raise ValidationError("at least one period is required")
        if reserve.shape != demand.shape:
            raise ValidationError(
                f"reserve length {reserve.shape[0]} != demand length {demand.shape[0]}")
        if np.any(demand <= 0):
            raise ValidationError("demand must be positive in every period")
        if np.any(reserve < 0):
            raise ValidationError("reserve requirements must be non-negative")
        if self.loss_model is not None and self.loss_model.n_units != len(units):
            raise ValidationError(
                f"loss model sized for {self.loss_model.n_units} units, "
                f"instance has {len(units)}")

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_periods(self) -> int:
        return int(self.demand.shape[0])

    @cached_property
    def segments(self) -> tuple:
        return tuple(tuple(derive_segments(u)) for u in self.units)

    def _unit_array(self, attr):
        return _readonly_array([getattr(u, attr) for u in self.units], attr, 1)

    @cached_property
    def p_mins(self):
        return self._unit_array("p_min")

    @cached_property
    def p_maxs(self):
        return self._unit_array("p_max")

    @cached_property
    def alphas(self):
        return self._unit_array("alpha")

    @cached_property
    def betas(self):
        return self._unit_array("beta")

    @cached_property
    def gammas(self):
        return self._unit_array("gamma")

    @cached_property
    def ramp_ups(self):
        return self._unit_array("ramp_up")

    @cached_property
    def ramp_downs(self):
        return self._unit_array("ramp_down")


@dataclass(frozen=True)
class Schedule:
    """Power outputs ``p`` and spinning-reserve allocations ``sr``, both T x N."""

    p: np.ndarray
    sr: np.ndarray

    def __post_init__(self):
        p = _readonly_array(self.p, "p", 2)
        sr = _readonly_array(self.sr, "sr", 2)
        if sr.shape != p.shape:
            raise ValidationError(f"sr shape {sr.shape} != p shape {p.shape}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "sr", sr)

    @property
    def n_periods(self) -> int:
        return int(self.p.shape[0])

    @property
    def n_units(self) -> int:
        return int(self.p.shape[1])


def _check_dims(instance: SystemInstance, schedule: Schedule):
    if schedule.p.shape != (instance.n_periods, instance.n_units):
        raise ValidationError(
            f"schedule shape {schedule.p.shape} does not match instance "
            f"({instance.n_periods} periods x {instance.n_units} units)")


def evaluate_cost(instance: SystemInstance, schedule: Schedule) -> float:
    """Total fuel cost in $ over the horizon; the constant term is charged
    once per unit per period."""
    _check_dims(instance, schedule)
    p = schedule.p
    cost = instance.alphas + instance.betas * p + instance.gammas * p * p
    return float(cost.sum())


@dataclass(frozen=True)
class FeasibilityReport:
    """Constraint audit of a schedule against an instance.

    Slack arrays are signed; an entry below ``-tol`` marks a violation and
    flips the corresponding boolean.  ``balance_violation`` holds the
    per-period absolute mismatch E_t between generation and demand plus
    losses; ``max_violation`` is its maximum.
    """

    balance_violation: np.ndarray
    max_violation: float
    bounds_ok: bool
    poz_ok: bool
    ramp_ok: bool
    reserve_ok: bool
    bounds_slack: np.ndarray
    poz_slack: np.ndarray
    ramp_slack: np.ndarray
    reserve_unit_slack: np.ndarray
    reserve_system_slack: np.ndarray
    losses: np.ndarray
    tol: float

    @property
    def feasible(self) -> bool:
        return self.bounds_ok and self.poz_ok and self.ramp_ok and self.reserve_ok


def evaluate_violations(instance: SystemInstance, schedule: Schedule, *,
                        use_loss: bool = True, tol: float = AUDIT_TOL) -> FeasibilityReport:
    """Audit a schedule: balance mismatch, bounds, zones, ramps and reserve.

    With ``use_loss=False`` the balance check ignores any loss model (useful
    when auditing a solve that deliberately neglected losses).
    """
    _check_dims(instance, schedule)
    p, sr = schedule.p, schedule.sr
    t_count, n = p.shape

    losses = np.zeros(t_count)
    if use_loss and instance.loss_model is not None:
        for t in range(t_count):
            losses[t] = evaluate_loss_mw(instance.loss_model, p[t])
    balance = np.abs(p.sum(axis=1) - instance.demand - losses)

    bounds_slack = np.minimum(p - instance.p_mins, instance.p_maxs - p)

    poz_slack = np.empty_like(p)
    for i, segs in enumerate(instance.segments):
        los = np.array([s.lo for s in segs])
        his = np.array([s.hi for s in segs])
        col = p[:, i:i + 1]
        poz_slack[:, i] = np.minimum(col - los, his - col).max(axis=1)

    ramp_slack = np.full_like(p, np.inf)
    if t_count > 1:
        step = p[1:] - p[:-1]
        ramp_slack[1:] = np.minimum(instance.ramp_ups - step, step + instance.ramp_downs)
    for i, unit in enumerate(instance.units):
        if unit.p_initial is not None:
            step0 = p[0, i] - unit.p_initial
            ramp_slack[0, i] = min(unit.ramp_up - step0, step0 + unit.ramp_down)

    reserve_unit_slack = np.minimum(
        np.minimum(instance.p_maxs - p - sr, instance.ramp_ups - sr), sr)
    reserve_system_slack = sr.sum(axis=1) - instance.reserve

    for arr in (losses, balance, bounds_slack, poz_slack, ramp_slack,
                reserve_unit_slack, reserve_system_slack):
        arr.setflags(write=False)

    return FeasibilityReport(
        balance_violation=balance,
        max_violation=float(balance.max()),
        bounds_ok=bool((bounds_slack >= -tol).all()),
        poz_ok=bool((poz_slack >= -tol).all()),
        ramp_ok=bool((ramp_slack >= -tol).all()),
        reserve_ok=bool((reserve_unit_slack >= -tol).all()
                        and (reserve_system_slack >= -tol).all()),
        bounds_slack=bounds_slack,
        poz_slack=poz_slack,
        ramp_slack=ramp_slack,
        reserve_unit_slack=reserve_unit_slack,
        reserve_system_slack=reserve_system_slack,
        losses=losses,
        tol=tol,
    )
