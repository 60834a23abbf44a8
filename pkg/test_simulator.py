#!/usr/bin/env python3
"""
Tests for the game simulator, the budget audit and the test adversaries.
"""

import json
import math
import os
import sys

import numpy as np
import pytest

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from modules.game_model import (
    ConstraintClass, ConstraintKind, Pursuer, Scenario, capture_halfspace, example_scenario,
)
from modules.game_value import gamma_analytic_example, gamma_optimize
from modules.hilbert_geometry import HalfSpace, halfspace_contains
from modules.simulator import (
    ControlSourceError, PiecewiseConstantControl, SimConfig, SimulationError, audit_budget,
    random_admissible_evader, random_admissible_pursuer, run_game, rush_controls, save_control,
)
from modules.strategies import check_theorem_hypotheses, evader_guaranteed_plan
from utils.config import config


def integral(rho):
    return ConstraintClass(ConstraintKind.INTEGRAL, rho)


def geometric(rho):
    return ConstraintClass(ConstraintKind.GEOMETRIC, rho)


def inside_with_margin(h: HalfSpace, z, margin=1e-6):
    return h.slack(z) > margin


def test_audit_budget_examples():
    trace = [[1.0, 0.0], [0.0, 2.0]]
    audit = audit_budget(trace, integral(2.0), dt=0.5)
    assert audit.spent == pytest.approx(2.5)
    assert audit.ok and audit.margin == pytest.approx(-1.5)

    assert audit_budget(trace, geometric(2.0), dt=0.5).ok
    assert not audit_budget(np.array(trace) * 1.01, geometric(2.0), dt=0.5).ok

    exact = PiecewiseConstantControl.constant([2.0, 0.0], 1.0)
    assert audit_budget(exact, integral(2.0)).ok
    assert not audit_budget(exact.scaled(1.01), integral(2.0)).ok

    with pytest.raises(SimulationError):
        audit_budget(trace, integral(2.0))


def test_random_evader_single_piece():
    s = Scenario(2, 4.0, 2.0, [0.0, 0.0], (Pursuer(0, [5.0, 0.0], integral(1.0)),))
    control = random_admissible_evader(s, 1, seed=3)
    assert np.linalg.norm(control.values[0]) == pytest.approx(s.sigma / math.sqrt(s.theta))
    assert control.integral_budget() == pytest.approx(s.sigma ** 2)


def test_random_evader_is_seeded_and_uses_its_budget():
    s = example_scenario(4)
    first = random_admissible_evader(s, 8, seed=11)
    again = random_admissible_evader(s, 8, seed=11)
    np.testing.assert_array_equal(first.values, again.values)
    assert not np.array_equal(first.values, random_admissible_evader(s, 8, seed=12).values)
    assert first.integral_budget() == pytest.approx(s.sigma ** 2)


@pytest.mark.parametrize("theta", [0.5, 9.0])
def test_rate_bounded_evader(theta):
    s = Scenario(3, theta, 2.0, [0.0, 0.0, 0.0], (Pursuer(0, [5.0, 0.0, 0.0], integral(1.0)),))
    control = random_admissible_evader(s, 12, seed=5, rate_bounded=True)
    assert control.max_rate() <= s.sigma + 1e-12
    assert control.integral_budget() == pytest.approx(s.sigma ** 2 * min(1.0, theta))


def test_random_pursuers_are_admissible():
    s = example_scenario(3)
    for n, p in enumerate(s.pursuers):
        control = random_admissible_pursuer(p, s.theta, 6, seed=n)
        assert audit_budget(control, p.constraint).ok
    with pytest.raises(SimulationError):
        random_admissible_pursuer(s.pursuers[0], s.theta, 0, seed=0)


def test_zero_controls_keep_everyone_still():
    s = example_scenario(2)
    result = run_game(s, {}, PiecewiseConstantControl.zero(2, s.theta), SimConfig(steps=10))
    assert np.all(result.evader_path == 0.0)
    for n, p in enumerate(s.pursuers):
        assert np.all(result.pursuer_paths[n] == p.position())
    assert result.payoff == pytest.approx(3.0)
    assert result.admissible


def test_rush_controls_reach_target():
    s = example_scenario(2)
    target = np.array([0.0, -2.0])
    result = run_game(s, rush_controls(s, target), PiecewiseConstantControl.zero(2, s.theta), SimConfig(steps=50))
    assert result.admissible
    ends = result.pursuer_paths[:, -1, :]
    np.testing.assert_allclose(ends[:2], np.tile(target, (2, 1)), atol=1e-9)


def test_open_loop_rejects_unknown_pursuers():
    s = example_scenario(2)
    with pytest.raises(SimulationError, match="unknown"):
        run_game(s, {42: PiecewiseConstantControl.zero(2, s.theta)}, PiecewiseConstantControl.zero(2, s.theta))


def test_integral_lemma_budget_matches_capture_halfspace():
    s = Scenario(2, 1.0, 1.0, [0.0, 0.0], (Pursuer(0, [3.0, 0.0], integral(3.5)),))
    p = s.pursuers[0]
    h = capture_halfspace(p.position(), s.y0, p.rho, s.sigma, s.theta, p.kind)
    checked = 0
    for seed in range(30):
        evader = random_admissible_evader(s, 5, seed=seed)
        result = run_game(s, "lemma", evader, SimConfig(steps=200))
        assert result.payoff == pytest.approx(0.0, abs=1e-9)
        terminal = result.evader_path[-1]
        if abs(h.slack(terminal)) < 1e-6:
            continue
        assert result.pursuer_audits[0].ok == halfspace_contains(h, terminal)
        checked += 1
    assert checked >= 20


def test_geometric_lemma_captures_inside_halfspace():
    s = Scenario(2, 1.0, 1.0, [0.0, 0.0], (Pursuer(0, [3.0, 0.0], geometric(3.5)),))
    p = s.pursuers[0]
    h = capture_halfspace(p.position(), s.y0, p.rho, s.sigma, s.theta, p.kind)
    captured = 0
    for seed in range(30):
        evader = random_admissible_evader(s, 5, seed=seed, rate_bounded=True)
        result = run_game(s, "lemma", evader, SimConfig(steps=200))
        assert result.colinearity_error <= 1e-9
        assert result.pursuer_audits[0].ok
        if inside_with_margin(h, result.evader_path[-1]):
            assert result.payoff <= config.CAPTURE_TOL
            assert result.switch_times[0] is not None
            captured += 1
    assert captured > 0


def test_piecewise_linear_paths_are_exact():
    s = Scenario(2, 2.0, 1.0, [0.0, 0.0], (Pursuer(0, [4.0, 1.0], geometric(1.5)),))
    evader = PiecewiseConstantControl.constant([0.3, -0.4], s.theta)
    coarse = run_game(s, "lemma", evader, SimConfig(steps=7))
    fine = run_game(s, "lemma", evader, SimConfig(steps=1000))
    np.testing.assert_allclose(coarse.pursuer_paths[:, -1], fine.pursuer_paths[:, -1], atol=1e-9)
    np.testing.assert_allclose(coarse.evader_path[-1], fine.evader_path[-1], atol=1e-12)
    assert coarse.payoff == pytest.approx(fine.payoff, abs=1e-9)


def test_requested_step_length_divides_theta():
    steps, dt = SimConfig(dt=0.4).grid(1.0)
    assert steps == 3 and dt == pytest.approx(1.0 / 3.0)
    with pytest.raises(SimulationError):
        SimConfig(steps=0)
    with pytest.raises(SimulationError):
        SimConfig(dt=-1.0)


def test_theorem_sandwich_on_example():
    s = example_scenario(8)
    gv = gamma_optimize(s)
    plan = evader_guaranteed_plan(s, gv)
    result = run_game(s, "theorem", plan, gamma=gv.gamma)
    assert result.demoted == frozenset(range(8, 16))
    assert result.admissible
    assert plan.guarantee - 1e-6 <= result.payoff <= gv.gamma + config.UPPER_ENVELOPE
    assert result.gamma == pytest.approx(gamma_analytic_example(8), abs=1e-4)


def test_theorem_against_random_evaders():
    s = example_scenario(4)
    gamma = gamma_analytic_example(4)
    for seed in range(3):
        evader = random_admissible_evader(s, 6, seed=seed)
        result = run_game(s, "theorem", evader, SimConfig(steps=300), gamma=gamma)
        assert result.admissible
        assert result.payoff <= gamma + config.UPPER_ENVELOPE
        assert set(result.fictitious) == set(int(i) for i in s.ids)


def test_theorem_freezes_pursuers_outside_active_set():
    s = Scenario(2, 1.0, 1.0, [0.0, 0.0], (
        Pursuer(0, [0.0, 0.0], integral(1.0)),
        Pursuer(1, [50.0, 0.0], integral(1.0)),
    ))
    evader = random_admissible_evader(s, 5, seed=3)
    result = run_game(s, "theorem", evader, SimConfig(steps=200))
    assert result.gamma == 0.0
    assert result.frozen == frozenset({1})
    assert np.all(result.pursuer_paths[1] == [50.0, 0.0])
    assert result.payoff <= config.CAPTURE_TOL
    assert result.admissible


def test_negative_gamma_rejected():
    s = example_scenario(2, groups="integral")
    with pytest.raises(SimulationError):
        run_game(s, "theorem", PiecewiseConstantControl.zero(2, s.theta), gamma=-1.0)


def test_trajectory_frame_layout():
    s = example_scenario(2)
    result = run_game(s, {}, PiecewiseConstantControl.zero(2, s.theta), SimConfig(steps=4))
    frame = result.to_frame()
    assert list(frame.columns) == ["t", "player_id", "role", "c0", "c1"]
    assert len(frame) == 5 * (s.size + 1)
    assert set(frame.loc[frame.role == "evader", "player_id"]) == {-1}


def test_control_files_round_trip(tmp_path):
    control = PiecewiseConstantControl(np.array([0.0, 1.5]), np.array([[1.0, 0.0], [0.0, -0.5]]), 3.0)
    path = save_control(control, str(tmp_path / "evader.csv"))
    loaded = PiecewiseConstantControl.load(path, 3.0, 2)
    np.testing.assert_allclose(loaded.values, control.values)
    np.testing.assert_allclose(loaded.starts, control.starts)

    as_json = tmp_path / "evader.json"
    as_json.write_text(json.dumps({"times": [0.0, 1.5], "values": [[1.0, 0.0], [0.0, -0.5]]}), encoding="utf-8")
    np.testing.assert_allclose(PiecewiseConstantControl.load(str(as_json), 3.0, 2).values, control.values)
    assert loaded.value_at(2.0)[1] == -0.5


def test_control_validation():
    with pytest.raises(ControlSourceError):
        PiecewiseConstantControl(np.array([0.5]), np.array([[1.0]]), 1.0)
    with pytest.raises(ControlSourceError):
        PiecewiseConstantControl(np.array([0.0, 0.5]), [[1.0, 0.0], [2.0]], 1.0)
    with pytest.raises(ControlSourceError):
        PiecewiseConstantControl(np.array([0.0]), np.array([[float("nan")]]), 1.0)


def test_control_file_errors(tmp_path):
    wrong_dimension = tmp_path / "wide.json"
    wrong_dimension.write_text(json.dumps({"times": [0.0], "values": [[1.0, 2.0, 3.0]]}), encoding="utf-8")
    with pytest.raises(ControlSourceError, match="dimension"):
        PiecewiseConstantControl.load(str(wrong_dimension), 1.0, 2)
    with pytest.raises(ControlSourceError):
        PiecewiseConstantControl.load(str(tmp_path / "control.txt"), 1.0, 2)
    extra_key = tmp_path / "extra.json"
    extra_key.write_text(json.dumps({"times": [0.0], "values": [[1.0]], "note": 1}), encoding="utf-8")
    with pytest.raises(ControlSourceError):
        PiecewiseConstantControl.load(str(extra_key), 1.0, 1)


def random_lemma_scenario(rng, kind):
    """Single pursuer somewhere around the edge of its reach; sigma <= rho for geometric pursuers."""
    dimension = int(rng.integers(1, 6))
    theta = float(rng.uniform(0.5, 3.0))
    sigma = float(rng.uniform(0.5, 2.0))
    y0 = rng.uniform(-1, 1, dimension)
    heading = rng.normal(size=dimension)
    heading /= np.linalg.norm(heading)
    if kind is ConstraintKind.INTEGRAL:
        rho = sigma * float(rng.uniform(0.8, 2.5))
        reach = rho * math.sqrt(theta)
    else:
        rho = sigma * float(rng.uniform(1.0, 2.5))
        reach = rho * theta
    x0 = y0 + heading * reach * float(rng.uniform(0.3, 1.5))
    return Scenario(dimension, theta, sigma, y0, (Pursuer(0, x0, ConstraintClass(kind, rho)),))


def test_integral_lemma_on_random_scenarios():
    rng = np.random.default_rng(31)
    inside = 0
    for seed in range(200):
        s = random_lemma_scenario(rng, ConstraintKind.INTEGRAL)
        p = s.pursuers[0]
        h = capture_halfspace(p.position(), s.y0, p.rho, s.sigma, s.theta, p.kind)
        result = run_game(s, "lemma", random_admissible_evader(s, 5, seed=seed), SimConfig(steps=100))
        assert result.evader_audit.ok
        assert result.payoff <= 1e-6
        if inside_with_margin(h, result.evader_path[-1]):
            assert result.budgets[0] <= p.rho ** 2 + 1e-6
            inside += 1
    assert inside >= 20


def test_geometric_lemma_on_random_scenarios():
    rng = np.random.default_rng(37)
    inside = 0
    for seed in range(200):
        s = random_lemma_scenario(rng, ConstraintKind.GEOMETRIC)
        p = s.pursuers[0]
        h = capture_halfspace(p.position(), s.y0, p.rho, s.sigma, s.theta, p.kind)
        evader = random_admissible_evader(s, 5, seed=seed, rate_bounded=True)
        result = run_game(s, "lemma", evader, SimConfig(steps=100))
        assert result.colinearity_error <= 1e-9
        assert result.budgets[0] <= p.rho + 1e-9
        if inside_with_margin(h, result.evader_path[-1]):
            assert result.payoff <= 1e-6
            assert result.switch_times[0] is not None
            inside += 1
    assert inside >= 20

def test_sampling_reads_the_piece_a_step_starts_in():
    control = random_admissible_evader(example_scenario(8), 8, seed=6)
    just_below = np.nextafter(control.starts, -np.inf)
    np.testing.assert_array_equal(control.sample(just_below), control.values)
    np.testing.assert_array_equal(control.sample(control.starts + control.durations / 2), control.values)
    steps = np.arange(1000) * (control.horizon / 1000)
    np.testing.assert_array_equal(control.sample(steps), np.repeat(control.values, 125, axis=0))



def test_played_random_controls_keep_their_budgets():
    """Piece boundaries at i theta/8 land on the 1000-step grid only up to roundoff."""
    s = example_scenario(8)
    for seed in range(10):
        evader = random_admissible_evader(s, 8, seed=seed)
        pursuers = {p.id: random_admissible_pursuer(p, s.theta, 8, seed=100 * seed + n)
                    for n, p in enumerate(s.pursuers)}
        result = run_game(s, pursuers, evader, SimConfig(steps=1000))
        assert result.evader_audit.ok
        assert result.evader_audit.spent == pytest.approx(s.sigma ** 2, abs=1e-9)
        assert all(audit.ok for audit in result.pursuer_audits.values())
        for p in s.pursuers:
            if p.kind is ConstraintKind.INTEGRAL:
                assert result.budgets[p.id] == pytest.approx(p.rho ** 2, abs=1e-9)


def test_audit_mutation_over_random_controls():
    rng = np.random.default_rng(41)
    for seed in range(500):
        kind = ConstraintKind.INTEGRAL if seed % 2 else ConstraintKind.GEOMETRIC
        p = Pursuer(0, np.zeros(3), ConstraintClass(kind, float(rng.uniform(0.5, 3.0))))
        theta = float(rng.uniform(0.5, 9.0))
        control = random_admissible_pursuer(p, theta, int(rng.integers(1, 10)), seed=seed)
        if kind is ConstraintKind.GEOMETRIC:
            control = control.scaled(p.rho / control.max_rate())
        assert audit_budget(control, p.constraint).ok
        assert not audit_budget(control.scaled(1.01), p.constraint).ok


def test_payoff_is_the_closest_terminal_distance():
    s = example_scenario(4)
    gamma = gamma_analytic_example(4)
    for seed in range(3):
        result = run_game(s, "theorem", random_admissible_evader(s, 6, seed=seed), SimConfig(steps=100), gamma=gamma)
        ends = result.pursuer_paths[:, -1, :]
        assert result.payoff == float(np.linalg.norm(ends - result.evader_path[-1], axis=1).min())
        assert result.payoff == float(result.terminal_distances().min())


def test_value_sandwich_on_eight_dimensional_example():
    s = example_scenario(8)
    gv = gamma_optimize(s)
    plan = evader_guaranteed_plan(s, gv)
    cfg = SimConfig(dt=s.theta / 2000, epsilon=1e-3)
    hypotheses = check_theorem_hypotheses(s, gv.gamma, cfg.epsilon)
    for trial in range(50):
        upper = run_game(s, "theorem", random_admissible_evader(s, 8, seed=trial), cfg,
                         gamma=gv.gamma, hypotheses=hypotheses)
        assert upper.admissible
        assert upper.payoff <= gv.gamma + config.UPPER_ENVELOPE

        if trial == 0:
            pursuers = rush_controls(s, plan.target)
        else:
            pursuers = {p.id: random_admissible_pursuer(p, s.theta, 8, seed=7919 * trial + n)
                        for n, p in enumerate(s.pursuers)}
        lower = run_game(s, pursuers, plan, cfg)
        assert lower.admissible
        assert lower.payoff >= gv.gamma - config.LOWER_SLACK


if __name__ == "__main__":
    print("🎮 Running simulator tests...")
    sys.exit(pytest.main([__file__, "-q"]))
