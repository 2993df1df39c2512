import math

import numpy as np
import pytest

from spectrocnot.model import TWO_PI, PAPER_DEVICE
from spectrocnot.optimizer import (
    DEFAULT_LOWER, DEFAULT_UPPER, PENALTY, GateContext, SearchSpace, build_schedule,
    default_space, evaluate, fidelity_curve, minimize_bounded, objective, operating_point,
    optimize_gate, screening_points, seed_from_sensitivity,
)
from spectrocnot.spectrum import labeled_spectrum, transition_frequencies

FAST = GateContext(dt_search=0.04, dt_final=0.02)
X0 = np.array([0.11, 0.21, 0.0, math.pi, 5.0, 1.0, 1.0, 1.0])


def space(budget=5, restarts=0, seed=0, x0=X0):
    return SearchSpace(DEFAULT_LOWER.copy(), DEFAULT_UPPER.copy(), x0.copy(), budget, restarts, seed)


def test_objective_range_and_determinism():
    a = objective(X0, 25.0, FAST)
    assert 0.0 <= a <= 1.0
    assert objective(X0, 25.0, FAST) == a


def test_objective_penalizes_empty_drive_window():
    x = X0.copy()
    x[4] = 10.0
    assert objective(x, 20.0, FAST) == PENALTY
    assert evaluate(x, 20.0, FAST).schedule is None


def test_schedule_geometry():
    sched = build_schedule(X0, 25.0, FAST)
    assert sched.t_gate == pytest.approx(2 * sched.t_ramp + sched.drive.t_g)
    assert sched.epsilon_drive == pytest.approx(6.5 + 0.21)
    assert sched.epsilon_park == pytest.approx(FAST.epsilon_park)
    omega_on, s_c, _, m = operating_point(0.11, 0.21, FAST)
    assert sched.drive.omega_c == pytest.approx(omega_on)
    # theta is the dressed rotation angle; the envelope area compensates m
    assert sched.drive.theta == pytest.approx(math.pi / m)
    shifted = build_schedule(np.r_[X0[:2], 0.5, X0[3:]], 25.0, FAST)
    assert shifted.drive.omega_c == pytest.approx(omega_on + 0.5 * s_c)


def test_operating_point_matches_spectrum():
    on, s_c, anh, m = operating_point(0.115, 0.215, FAST)
    spec = labeled_spectrum(PAPER_DEVICE.with_(epsilon=6.715))
    w_on, w_off = transition_frequencies(spec)
    assert on == pytest.approx(w_on) and s_c == pytest.approx(abs(w_on - w_off))
    # the upper rung of the driven ladder sits above: negative anharmonicity here
    assert anh == pytest.approx(w_on - (spec[2, 1] - spec[1, 1]))
    assert anh < 0
    assert 0.5 < m < 1.0


def test_budget_one_returns_initial_guess():
    rec = optimize_gate(25.0, space(budget=1), FAST)
    assert np.array_equal(rec.params, X0)
    assert rec.evaluations == 1
    assert rec.budget_exhausted
    assert rec.fidelity == pytest.approx(1.0 - objective(X0, 25.0, FAST.__class__(
        dt_search=FAST.dt_final, dt_final=FAST.dt_final)), abs=1e-9)


def test_short_search_contract():
    sp = space(budget=12, restarts=1, seed=4)
    rec = optimize_gate(25.0, sp, FAST)
    assert rec.evaluations == 12
    assert len(rec.history) == 12
    assert np.all(np.diff(rec.history) <= 0)
    assert np.all(rec.params >= sp.lower) and np.all(rec.params <= sp.upper)
    assert 0.0 <= rec.fidelity <= 1.0
    assert rec.max_unitarity_error < 1e-8
    sched = rec.schedule
    assert sched.t_gate == pytest.approx(2 * sched.t_ramp + sched.drive.t_g)
    again = optimize_gate(25.0, sp, FAST)
    assert np.array_equal(again.params, rec.params) and again.fidelity == rec.fidelity


def test_initial_ramp_adjusted_for_short_gates():
    rec = optimize_gate(9.0, space(budget=1), FAST)
    assert rec.params[4] * 2 < 9.0


def test_minimizer_on_shifted_quadratic():
    rng = np.random.default_rng(11)
    lo, hi = -np.ones(8), np.ones(8)
    center = rng.uniform(-0.6, 0.6, 8)
    weights = np.linspace(1.0, 5.0, 8)

    def f(x):
        return float(np.sum(weights * (x - center) ** 2))

    sp = SearchSpace(lo, hi, np.zeros(8), budget=2000, restarts=4, seed=0)
    tracker = minimize_bounded(f, sp)
    assert tracker.count <= 2000
    assert np.abs(tracker.best_x - center).max() < 1e-4


def test_screening_grid_covers_guess_window():
    pts = np.array(screening_points(space().with_(screen=3)))
    assert pts.shape == (9, 8)
    assert sorted(set(pts[:, 0])) == pytest.approx([0.1, 0.1125, 0.125])
    assert sorted(set(pts[:, 1])) == pytest.approx([0.2, 0.225, 0.25])
    np.testing.assert_array_equal(pts[:, 2:], np.tile(X0[2:], (9, 1)))
    assert screening_points(space().with_(screen=0)) == []


def test_minimizer_escapes_local_basin_via_candidates():
    # double well: x0 sits in the shallow basin, one candidate in the deep one
    def f(x):
        return float(min(np.sum((x - 0.5) ** 2) + 1.0, np.sum((x + 0.5) ** 2)))

    sp = SearchSpace(-np.ones(8), np.ones(8), np.full(8, 0.5), budget=600, restarts=1, seed=0)
    cands = [np.full(8, 0.9), np.full(8, -0.4)]
    tracker = minimize_bounded(f, sp, candidates=cands)
    assert tracker.count <= 600
    assert tracker.history[0] == pytest.approx(1.0)
    assert tracker.best_f < 1e-4


def test_minimizer_respects_bounds():
    sp = SearchSpace(np.zeros(8), np.ones(8), np.full(8, 0.5), budget=1000, restarts=2, seed=1)
    target = np.array([2.0, -1.0, 0.3, 0.4, 0.5, 0.6, 0.7, 0.2])
    seen = []

    def f(x):
        seen.append(x.copy())
        return float(np.sum((x - target) ** 2))

    tracker = minimize_bounded(f, sp)
    assert np.all(np.array(seen) >= 0) and np.all(np.array(seen) <= 1)
    assert np.abs(tracker.best_x - np.clip(target, 0, 1)).max() < 1e-3


def test_seed_in_recommended_window():
    x0 = seed_from_sensitivity(PAPER_DEVICE)
    assert 0.200 <= x0[1] <= 0.250
    assert 0.100 <= x0[0] <= 0.125
    assert x0[3] == pytest.approx(math.pi)
    assert np.all(x0[5:] == 1.0)
    omega_on, s_c, _, _ = operating_point(x0[0], x0[1], GateContext())
    sched = build_schedule(x0, 45.0, GateContext())
    assert abs(sched.drive.omega_c - omega_on) <= s_c / 2


def test_default_space_contains_seed():
    sp = default_space(PAPER_DEVICE)
    assert np.all(sp.x0 >= sp.lower) and np.all(sp.x0 <= sp.upper)
    assert sp.lower[4] == 4.0 and sp.upper[4] == 12.0


@pytest.mark.parametrize("changes", [
    {"x0": np.zeros(8)},
    {"lower": np.zeros(7)},
    {"budget": 0},
    {"restarts": -1},
    {"upper": DEFAULT_LOWER.copy()},
])
def test_search_space_validation(changes):
    kw = dict(lower=DEFAULT_LOWER.copy(), upper=DEFAULT_UPPER.copy(), x0=X0.copy())
    kw.update(changes)
    with pytest.raises(ValueError):
        SearchSpace(**kw)


def test_fidelity_curve_rows():
    recs = fidelity_curve([20.0, 25.0], space(budget=1), FAST)
    assert [r.t_gate for r in recs] == [20.0, 25.0]
    with pytest.raises(ValueError):
        fidelity_curve([], space(), FAST)


def test_record_serializes():
    rec = optimize_gate(25.0, space(budget=2), FAST)
    d = rec.to_dict()
    assert set(d["params"]) == {"g", "detuning", "omega_c_frac", "theta", "t_ramp", "scale3",
                                "scale5", "scale_det"}
    assert d["schedule"]["t_gate_ns"] == 25.0
    assert d["schedule"]["omega_c_ghz"] == pytest.approx(rec.schedule.drive.omega_c / TWO_PI)
