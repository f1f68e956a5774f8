"""Model construction tests: variables, rows, tangent cuts, relaxation."""

import numpy as np
import pytest

from dedpoz import ValidationError, build_milp1, build_milp2, lp_relaxation
from dedpoz.milp import (
    BINARY,
    CONTINUOUS,
    EQ,
    GE,
    LE,
    Constraint,
    MilpModel,
    TangentPlan,
    Variable,
    dump_lp_text,
    make_tangent_plan,
    tangent_cut,
    tangent_gap_bound,
)
from dedpoz.system import Schedule, SystemInstance
from support import make_unit

STEPS = 3


def _instance(p_initial=None):
    units = (make_unit(uid=1, gamma=0.01, p_min=10, p_max=40,
                       zones=((20.0, 25.0),), p_initial=p_initial),
             make_unit(uid=2, gamma=0.02, p_min=10, p_max=50))
    return SystemInstance(units=units, demand=np.array([45.0, 55.0]),
                          reserve=np.array([3.0, 3.0]))


def test_variable_layout_and_counts():
    instance = _instance()
    model, varmap = build_milp1(instance, tangent_steps=STEPS)
    model.validate()
    t_count, segs_total = 2, 3  # unit 1 has two segments, unit 2 one
    assert model.n_variables == 2 * 2 * t_count + 3 * t_count * segs_total
    assert model.n_binaries == t_count * segs_total
    kinds = [v.kind for v in model.variables]
    assert kinds.count(BINARY) == t_count * segs_total
    # p bounded by unit limits, selectors binary in [0, 1], sr by ramp_up
    p_var = model.variables[varmap.p_total[0][0]]
    assert (p_var.lb, p_var.ub) == (10.0, 40.0)
    for i, unit in enumerate(instance.units):
        for t in range(t_count):
            sr_var = model.variables[varmap.sr[i][t]]
            assert (sr_var.lb, sr_var.ub) == (0.0, unit.ramp_up)
            for j, seg in enumerate(instance.segments[i]):
                seg_var = model.variables[varmap.p_seg[i][t][j]]
                assert (seg_var.lb, seg_var.ub) == (0.0, seg.hi)
                pick = model.variables[varmap.u_seg[i][t][j]]
                assert pick.kind == BINARY and (pick.lb, pick.ub) == (0.0, 1.0)
    assert varmap.loss_quad is None
    covered = varmap.all_indices()
    assert sorted(covered) == list(range(model.n_variables))


def test_row_counts_by_sense():
    instance = _instance()
    model, _ = build_milp1(instance, tangent_steps=STEPS)
    t_count, n, segs_total = 2, 2, 3
    senses = [c.sense for c in model.constraints]
    # link + pick_one per unit-period, balance per period
    assert senses.count(EQ) == 2 * n * t_count + t_count
    # segment floors, one cut per tangent point, reserve per period,
    # downward ramps for t >= 1
    assert senses.count(GE) == (t_count * segs_total
                                + t_count * segs_total * (STEPS + 1)
                                + t_count
                                + n * (t_count - 1))
    # segment caps, upward ramps for t >= 1, headroom
    assert senses.count(LE) == (t_count * segs_total
                                + n * (t_count - 1)
                                + n * t_count)


def test_initial_ramp_rows_only_with_p_initial():
    without = build_milp1(_instance(), tangent_steps=STEPS)[0]
    with_init = build_milp1(_instance(p_initial=15.0), tangent_steps=STEPS)[0]
    assert with_init.n_constraints == without.n_constraints + 2
    names = {c.name for c in with_init.constraints}
    assert "ramp_up(0,0)" in names and "ramp_dn(0,0)" in names
    assert "ramp_up(1,0)" not in names


def test_objective_covers_segment_costs_only():
    instance = _instance()
    model, varmap = build_milp1(instance, tangent_steps=STEPS)
    cost_indices = sorted(
        idx for i in range(2) for t in range(2) for idx in varmap.cost_seg[i][t])
    assert sorted(j for j, _ in model.objective) == cost_indices
    assert all(c == 1.0 for _, c in model.objective)
    assert model.objective_constant == pytest.approx(
        2 * (instance.units[0].alpha + instance.units[1].alpha))
    assert varmap.constant_cost == model.objective_constant


def test_tangent_plan_points():
    instance = _instance()
    plan = make_tangent_plan(instance, steps=4)
    assert plan.steps == 4
    seg = instance.segments[0][1]  # unit 1, [25, 40]
    pts = plan.points[0][1]
    assert len(pts) == 5
    np.testing.assert_allclose(pts, np.linspace(seg.lo, seg.hi, 5))
    assert all(a < b for a, b in zip(pts, pts[1:]))
    with pytest.raises(ValidationError, match="tangent steps must be >= 1"):
        make_tangent_plan(instance, steps=0)
    with pytest.raises(ValidationError, match="tangent steps must be >= 1"):
        TangentPlan(steps=0, points=())


def test_tangent_cut_is_supporting_line():
    beta, gamma = 1.7, 0.03
    rng = np.random.default_rng(3)
    for p_bar in rng.uniform(5.0, 80.0, 6):
        coef_p, coef_u = tangent_cut(beta, gamma, p_bar)
        assert coef_p == pytest.approx(2 * gamma * p_bar + beta)
        assert coef_u == pytest.approx(-gamma * p_bar * p_bar)
        # exact at the anchor, below the curve elsewhere, zero at p = u = 0
        at_anchor = coef_p * p_bar + coef_u
        assert at_anchor == pytest.approx(beta * p_bar + gamma * p_bar ** 2)
        for p in np.linspace(0.0, 100.0, 41):
            assert coef_p * p + coef_u <= beta * p + gamma * p * p + 1e-9


def test_tangent_envelope_error_bound():
    # the max gap between the curve and its tangent envelope on one segment
    # is gamma * (w / steps)^2 / 4, reached midway between anchors
    beta, gamma, lo, hi, steps = 2.0, 0.05, 10.0, 22.0, 3
    anchors = np.linspace(lo, hi, steps + 1)
    worst = 0.0
    for p in np.linspace(lo, hi, 601):
        envelope = max(tangent_cut(beta, gamma, a)[0] * p
                       + tangent_cut(beta, gamma, a)[1] for a in anchors)
        worst = max(worst, beta * p + gamma * p * p - envelope)
    bound = gamma * ((hi - lo) / steps) ** 2 / 4.0
    assert worst <= bound + 1e-12
    assert worst == pytest.approx(bound, rel=1e-3)  # bound is tight


def test_tangent_gap_bound_uses_active_segment():
    instance = _instance()
    sched = Schedule(p=np.array([[15.0, 30.0], [30.0, 30.0]]),
                     sr=np.zeros((2, 2)))
    got = tangent_gap_bound(instance, sched, STEPS)
    # unit 1: p=15 sits in [10,20] (w=10), p=30 in [25,40] (w=15)
    # unit 2: both periods in the single [10,50] segment (w=40)
    expect = (0.01 * (10 / STEPS) ** 2 / 4 + 0.01 * (15 / STEPS) ** 2 / 4
              + 2 * 0.02 * (40 / STEPS) ** 2 / 4)
    assert got == pytest.approx(expect)


def test_balance_row_lossless():
    instance = _instance()
    model, varmap = build_milp1(instance, tangent_steps=STEPS)
    balance = [c for c in model.constraints if c.name.startswith("balance")]
    assert len(balance) == 2
    for t, row in enumerate(balance):
        assert row.sense == EQ and row.rhs == instance.demand[t]
        assert dict(row.coeffs) == {varmap.p_total[i][t]: 1.0 for i in range(2)}


def test_build_milp2_rows_and_validation():
    base = _instance()
    with pytest.raises(ValidationError, match="no loss model"):
        build_milp2(base, STEPS, np.zeros((2, 2)))

    from dedpoz.system import LossModel
    lm = LossModel(b00=2e-4, b0=np.array([0.01, 0.02]),
                   b_matrix=np.array([[3e-3, 1e-3], [1e-3, 4e-3]]),
                   base_mva=100.0)
    instance = SystemInstance(units=base.units, demand=base.demand,
                              reserve=base.reserve, loss_model=lm)
    with pytest.raises(ValidationError, match="anchors shape"):
        build_milp2(instance, STEPS, np.zeros((3, 2)))
    with pytest.raises(ValidationError, match="non-finite"):
        build_milp2(instance, STEPS, np.full((2, 2), np.nan))

    anchors = np.array([[20.0, 25.0], [30.0, 26.0]])
    model, varmap = build_milp2(instance, STEPS, anchors)
    model.validate()
    assert varmap.loss_quad is not None and len(varmap.loss_quad) == 2
    rows = {c.name: c for c in model.constraints}
    b_mw = lm.b_matrix / lm.base_mva
    for t in range(2):
        cut = rows[f"loss_cut({t})"]
        grad = 2.0 * b_mw @ anchors[t]
        assert cut.sense == GE
        assert cut.rhs == pytest.approx(-anchors[t] @ b_mw @ anchors[t])
        coeffs = dict(cut.coeffs)
        assert coeffs[varmap.loss_quad[t]] == 1.0
        for i in range(2):
            assert coeffs[varmap.p_total[i][t]] == pytest.approx(-grad[i])
        balance = rows[f"balance({t})"]
        assert balance.rhs == pytest.approx(instance.demand[t] + lm.b00 * 100.0)
        bal = dict(balance.coeffs)
        for i in range(2):
            assert bal[varmap.p_total[i][t]] == pytest.approx(1.0 - lm.b0[i])
        assert bal[varmap.loss_quad[t]] == -1.0


def test_lp_relaxation_drops_binaries():
    model, _ = build_milp1(_instance(), tangent_steps=STEPS)
    relaxed = lp_relaxation(model)
    assert relaxed.n_binaries == 0
    assert all(v.kind == CONTINUOUS for v in relaxed.variables)
    assert relaxed.constraints is model.constraints
    assert relaxed.objective == model.objective
    again = lp_relaxation(relaxed)
    assert again.variables == relaxed.variables


def test_model_validate_rejects_bad_pieces():
    ok_var = Variable("x", CONTINUOUS, 0.0, 1.0)
    with pytest.raises(ValidationError, match="unknown kind"):
        MilpModel((Variable("x", "int", 0, 1),), (), ()).validate()
    with pytest.raises(ValidationError, match="lb"):
        MilpModel((Variable("x", CONTINUOUS, 2.0, 1.0),), (), ()).validate()
    with pytest.raises(ValidationError, match="bounds within"):
        MilpModel((Variable("x", BINARY, 0.0, 2.0),), (), ()).validate()
    with pytest.raises(ValidationError, match="out of range"):
        MilpModel((ok_var,), (), ((3, 1.0),)).validate()
    with pytest.raises(ValidationError, match="unknown sense"):
        MilpModel((ok_var,), (Constraint("r", ((0, 1.0),), "<", 0.0),), ()).validate()
    with pytest.raises(ValidationError, match="rhs not finite"):
        MilpModel((ok_var,), (Constraint("r", ((0, 1.0),), LE, np.inf),), ()).validate()
    with pytest.raises(ValidationError, match="variable 5 out of range"):
        MilpModel((ok_var,), (Constraint("r", ((5, 1.0),), LE, 0.0),), ()).validate()


def test_dump_lp_text_sections():
    model, _ = build_milp1(_instance(), tangent_steps=1)
    text = dump_lp_text(model)
    for section in ("minimize", "bounds", "subject to", "binaries"):
        assert section in text
    assert "pick(0,0,1)" in text
    assert "balance(0):" in text
    assert text.count("<=") >= model.n_variables  # every bounds line has two
