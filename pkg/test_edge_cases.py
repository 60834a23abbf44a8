#!/usr/bin/env python3
"""
Edge cases: degenerate scenarios, coincident starts, tiny budgets and
oversized runs.
"""

import os
import sys

import numpy as np
import pytest

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import modules.simulator as simulator
from modules.game_model import ConstraintClass, ConstraintKind, Pursuer, Scenario, example_scenario
from modules.game_value import gamma_optimize
from modules.simulator import PiecewiseConstantControl, SimConfig, SimulationError, run_game
from modules.strategies import StrategyMode, evader_guaranteed_plan


def test_geometric_pursuer_starting_on_the_evader_shadows():
    s = Scenario(2, 1.0, 1.0, [1.0, 2.0], (
        Pursuer(0, [1.0, 2.0], ConstraintClass(ConstraintKind.GEOMETRIC, 1.5)),
    ))
    evader = PiecewiseConstantControl.constant([0.6, -0.8], 1.0)
    result = run_game(s, "lemma", evader, SimConfig(steps=20))
    assert result.switch_times[0] == 0.0
    assert result.final_states[0].mode is StrategyMode.SHADOWING
    np.testing.assert_allclose(result.pursuer_paths[0], result.evader_path, atol=1e-12)
    assert result.pursuer_audits[0].ok


def test_integral_pursuer_starting_on_the_evader_mirrors_it():
    s = Scenario(3, 2.0, 1.0, [0.0, 0.0, 0.0], (
        Pursuer(0, [0.0, 0.0, 0.0], ConstraintClass(ConstraintKind.INTEGRAL, 1.0)),
    ))
    evader = simulator.random_admissible_evader(s, 4, seed=9)
    result = run_game(s, "lemma", evader, SimConfig(steps=40))
    assert result.payoff == pytest.approx(0.0, abs=1e-12)
    assert result.budgets[0] == pytest.approx(1.0)


def test_value_with_evader_inside_every_reach():
    s = Scenario(1, 1.0, 0.5, [0.0], (
        Pursuer(0, [0.1], ConstraintClass(ConstraintKind.GEOMETRIC, 3.0)),
    ))
    gv = gamma_optimize(s, starts=8, iters=400)
    assert gv.gamma == 0.0
    plan = evader_guaranteed_plan(s, gv)
    assert plan.guarantee < 0


def test_tiny_evader_budget():
    s = Scenario(2, 1.0, 1e-9, [0.0, 0.0], (
        Pursuer(0, [5.0, 0.0], ConstraintClass(ConstraintKind.INTEGRAL, 1.0)),
    ))
    gv = gamma_optimize(s, starts=8, iters=400)
    assert gv.gamma == pytest.approx(4.0, abs=1e-6)


def test_one_dimensional_shared_example():
    assert example_scenario(1).size == 2


def test_oversized_runs_are_refused(monkeypatch):
    monkeypatch.setattr(simulator, "MAX_TRAJECTORY_ENTRIES", 100)
    s = example_scenario(4)
    with pytest.raises(SimulationError, match="too large"):
        run_game(s, {}, PiecewiseConstantControl.zero(4, s.theta), SimConfig(steps=50))


def test_control_horizon_must_match_theta():
    s = example_scenario(2)
    with pytest.raises(SimulationError, match="horizon"):
        run_game(s, {}, PiecewiseConstantControl.zero(2, 1.0))


def test_control_dimension_must_match():
    s = example_scenario(2)
    with pytest.raises(SimulationError, match="dimension"):
        run_game(s, {}, PiecewiseConstantControl.zero(3, s.theta))


def test_single_step_run():
    s = example_scenario(2, groups="integral")
    result = run_game(s, "theorem", PiecewiseConstantControl.zero(2, s.theta), SimConfig(steps=1))
    assert result.steps == 1
    assert result.admissible


if __name__ == "__main__":
    print("🧪 Running edge case tests...")
    sys.exit(pytest.main([__file__, "-q"]))
