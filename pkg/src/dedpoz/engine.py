"""Dispatch drivers tying the model builders to the branch-and-bound core.

Two entry points: a single-shot solve for lossless systems, and an
anchor-refinement loop for systems with a quadratic network-loss model.  The
loop alternates between solving a linearized problem and re-anchoring the
loss cut at a blend of the last two dispatches until the power balance checks
out against the true loss at every period.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .bnb import MILP_INFEASIBLE, BnbConfig, MilpSolution, solve_milp
from .milp import build_milp1, build_milp2
from .system import (FeasibilityReport, Schedule, SystemInstance,
                     evaluate_cost, evaluate_loss_mw, evaluate_violations)
from .errors import InfeasibleError


@dataclass(frozen=True)
class IaConfig:
    """Knobs for the dispatch drivers."""
    epsilon: float = 0.1
    iter_max: int = 5
    tangent_steps: int = 4
    gap: float = 1e-4
    time_limit_s: float = 300.0
    node_limit: int | None = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.iter_max < 1:
            raise ValueError(f"iter_max must be >= 1, got {self.iter_max}")


@dataclass(frozen=True)
class IaIteration:
    """One pass of the refinement loop."""
    k: int
    anchor: np.ndarray | None
    objective: float
    max_balance_error: float
    balance_error: np.ndarray
    solve_time_s: float
    nodes: int


@dataclass(frozen=True)
class DispatchReport:
    schedule: Schedule
    cost: float
    surrogate_objective: float
    losses: np.ndarray
    audit: FeasibilityReport
    milp: MilpSolution
    iterations: list[IaIteration] = field(default_factory=list)
    terminated_by: str | None = None
    chosen_k: int | None = None

    @property
    def violations(self) -> np.ndarray:
        """Per-period balance mismatch of the returned schedule."""
        return self.audit.balance_violation

    @property
    def max_violation(self) -> float:
        return self.audit.max_violation


def midpoint_anchor(p_a: np.ndarray, p_b: np.ndarray) -> np.ndarray:
    return 0.5 * (np.asarray(p_a, dtype=float) + np.asarray(p_b, dtype=float))


def _diagnose_infeasibility(instance: SystemInstance) -> str | None:
    """Cheap necessary-condition screen; names the first failing period."""
    cap = instance.p_maxs.sum()
    floor = instance.p_mins.sum()
    ramp_room = instance.ramp_ups.sum()
    for t in range(instance.n_periods):
        d = instance.demand[t]
        if cap < d - 1e-9:
            return (f"period {t + 1}: total capacity {cap:g} MW cannot meet "
                    f"demand {d:g} MW")
        if floor > d + 1e-9:
            return (f"period {t + 1}: total minimum output {floor:g} MW "
                    f"exceeds demand {d:g} MW")
        room = min(cap - d, ramp_room)
        if room < instance.reserve[t] - 1e-9:
            return (f"period {t + 1}: at most {room:g} MW of reserve is "
                    f"available but {instance.reserve[t]:g} MW is required")
    return None


def _bnb_config(config: IaConfig) -> BnbConfig:
    return BnbConfig(gap=config.gap, time_limit_s=config.time_limit_s,
                     node_limit=config.node_limit)


def _run_milp(model, varmap, config: IaConfig, what: str):
    started = time.perf_counter()
    sol = solve_milp(model, varmap=varmap, config=_bnb_config(config))
    elapsed = time.perf_counter() - started
    if sol.status == MILP_INFEASIBLE:
        raise InfeasibleError(f"{what}: no feasible dispatch exists")
    return sol, elapsed


def _balance_error(instance: SystemInstance, p: np.ndarray) -> np.ndarray:
    """Per-period absolute mismatch between generation, demand, and the true
    quadratic loss at the candidate dispatch."""
    loss = np.array([evaluate_loss_mw(instance.loss_model, p[t])
                     for t in range(instance.n_periods)])
    return np.abs(p.sum(axis=1) - instance.demand - loss)


def solve_ded_no_loss(instance: SystemInstance,
                      config: IaConfig | None = None) -> DispatchReport:
    """Minimum-cost schedule for a lossless system."""
    config = config or IaConfig()
    reason = _diagnose_infeasibility(instance)
    if reason is not None:
        raise InfeasibleError(reason)
    model, varmap = build_milp1(instance, tangent_steps=config.tangent_steps)
    sol, elapsed = _run_milp(model, varmap, config, "lossless dispatch")
    schedule = varmap.extract_schedule(sol.values)
    audit = evaluate_violations(instance, schedule, use_loss=False)
    cost = evaluate_cost(instance, schedule)
    it = IaIteration(k=1, anchor=None, objective=sol.objective,
                     max_balance_error=audit.balance_violation.max(initial=0.0),
                     balance_error=audit.balance_violation,
                     solve_time_s=elapsed, nodes=sol.nodes_explored)
    return DispatchReport(schedule=schedule, cost=cost,
                          surrogate_objective=sol.objective,
                          losses=np.zeros(instance.n_periods),
                          audit=audit, milp=sol, iterations=[it])


def solve_ded_with_loss(instance: SystemInstance,
                        config: IaConfig | None = None) -> DispatchReport:
    """Anchor-refinement dispatch for a system with a quadratic loss model.

    Pass 1 ignores loss to get a starting dispatch; pass 2 linearizes the
    loss around it.  Each later pass re-anchors at the midpoint of the two
    previous dispatches and stops once every period's generation matches
    demand plus the true loss to within ``config.epsilon`` MW.  If the
    iteration budget runs out, the best pass-3-or-later dispatch (smallest
    worst-period mismatch) is returned.
    """
    config = config or IaConfig()
    if instance.loss_model is None:
        raise ValueError("instance has no loss model; use solve_ded_no_loss")
    reason = _diagnose_infeasibility(instance)
    if reason is not None:
        raise InfeasibleError(reason)

    iterations: list[IaIteration] = []
    candidates: list[tuple[int, Schedule, MilpSolution]] = []

    model, varmap = build_milp1(instance, tangent_steps=config.tangent_steps)
    sol, elapsed = _run_milp(model, varmap, config, "pass 1 (lossless)")
    p_prev2 = varmap.extract_schedule(sol.values).p
    err = _balance_error(instance, p_prev2)
    iterations.append(IaIteration(k=1, anchor=None, objective=sol.objective,
                                  max_balance_error=float(err.max()),
                                  balance_error=err, solve_time_s=elapsed,
                                  nodes=sol.nodes_explored))

    def lossy_pass(k, anchor):
        m, vm = build_milp2(instance, tangent_steps=config.tangent_steps,
                            anchors=anchor)
        s, dt = _run_milp(m, vm, config, f"pass {k}")
        sched = vm.extract_schedule(s.values)
        e = _balance_error(instance, sched.p)
        iterations.append(IaIteration(k=k, anchor=np.array(anchor, copy=True),
                                      objective=s.objective,
                                      max_balance_error=float(e.max()),
                                      balance_error=e, solve_time_s=dt,
                                      nodes=s.nodes_explored))
        return sched, s, e

    sched, milp_sol, err = lossy_pass(2, p_prev2)
    p_prev1 = sched.p
    terminated_by = "iter_max"
    chosen = None

    for k in range(3, config.iter_max + 1):
        anchor = midpoint_anchor(p_prev2, p_prev1)
        sched, milp_sol, err = lossy_pass(k, anchor)
        candidates.append((k, sched, milp_sol))
        if float(err.max()) < config.epsilon:
            terminated_by = "epsilon"
            chosen = (k, sched, milp_sol)
            break
        p_prev2, p_prev1 = p_prev1, sched.p

    if chosen is None:
        if not candidates:
            # iter_max < 3 leaves only the pass-2 dispatch to fall back on
            chosen = (2, sched, milp_sol)
        else:
            chosen = min(candidates,
                         key=lambda c: iterations[c[0] - 1].max_balance_error)

    chosen_k, schedule, milp_sol = chosen
    audit = evaluate_violations(instance, schedule, use_loss=True)
    cost = evaluate_cost(instance, schedule)
    return DispatchReport(schedule=schedule, cost=cost,
                          surrogate_objective=milp_sol.objective,
                          losses=audit.losses, audit=audit, milp=milp_sol,
                          iterations=iterations, terminated_by=terminated_by,
                          chosen_k=chosen_k)
