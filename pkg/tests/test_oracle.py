from __future__ import annotations

import json
import math

import pytest

from popsched import (
    ConstantScheduler,
    StateSpaceError,
    TimeSwitchScheduler,
    brute_force_constant,
    enumerate_states,
    exact_value,
    make_property,
    parse_model,
)


class TestEnumeration:
    def test_interval_count(self):
        m = parse_model(json.dumps({
            "variables": [{"name": "x", "lower": 0, "upper": 3}],
            "actions": ["a"],
            "transitions": [],
            "initial_state": [0],
        }))
        assert enumerate_states(m) == [(0,), (1,), (2,), (3,)]

    def test_sis_constrained_count(self, sis_model):
        states = enumerate_states(sis_model)
        # triangular count: sum over X_S of the admissible X_I values
        assert len(states) == sum(k + 1 for k in range(101))
        assert len(states) == 5151
        assert states == sorted(states)

    def test_empty_region_is_an_error(self):
        m_doc = {
            "variables": [{"name": "x", "lower": 0, "upper": 5}],
            "constraints": [{"coeffs": [1], "bound": -1}],
            "actions": ["a"],
            "transitions": [],
            "initial_state": [0],
        }
        with pytest.raises(Exception):
            # the initial state is outside the (empty) region already
            parse_model(json.dumps(m_doc))

    def test_cap_exceeded_reports(self, sis_model):
        with pytest.raises(StateSpaceError, match="more than 100"):
            enumerate_states(sis_model, cap=100)


class TestExactValue:
    def test_reach_closed_form(self, reach_model):
        prop = make_property(reach_model, "eventually", 0.0, 1.0, "x == 1")
        sch = ConstantScheduler(reach_model.actions, "go")
        assert exact_value(reach_model, sch, prop, 0.01) == pytest.approx(
            1 - math.exp(-1.0), abs=1e-6)

    def test_time_switch_closed_form(self, switch_model):
        prop = make_property(switch_model, "eventually", 0.0, 1.0, "x == 1")
        sch = TimeSwitchScheduler(switch_model.actions, [0.5], ["slow", "fast"])
        expected = 1 - math.exp(-1.5)  # integrated rate 0.5*1 + 0.5*2
        assert exact_value(switch_model, sch, prop, 0.05) == pytest.approx(expected, abs=1e-5)
        assert exact_value(switch_model, sch, prop, 0.01) == pytest.approx(expected, abs=1e-6)

    def test_survival_closed_form(self, survival_model):
        prop = make_property(survival_model, "globally", 0.0, 2.0, "x == 0")
        sch = ConstantScheduler(survival_model.actions, "stay")
        assert exact_value(survival_model, sch, prop, 0.01) == pytest.approx(
            math.exp(-1.4), abs=1e-6)

    def test_delayed_window_reach(self, reach_model):
        prop = make_property(reach_model, "eventually", 1.0, 2.0, "x == 1")
        sch = ConstantScheduler(reach_model.actions, "go")
        # absorbing goal: reached by the window end
        assert exact_value(reach_model, sch, prop, 0.01) == pytest.approx(
            1 - math.exp(-2.0), abs=1e-6)

    def test_step_size_convergence_is_first_order(self, switch_model):
        # successive halvings differ by at most C*h (the policy switch does
        # not align with segment edges, which is the worst case)
        prop = make_property(switch_model, "eventually", 0.0, 1.0, "x == 1")
        sch = TimeSwitchScheduler(switch_model.actions, [0.33], ["slow", "fast"])
        steps = (0.4, 0.2, 0.1, 0.05)
        values = {h: exact_value(switch_model, sch, prop, h) for h in steps}
        for h, half in zip(steps[:-1], steps[1:]):
            assert abs(values[h] - values[half]) <= 0.15 * h
        truth = 1 - math.exp(-(0.33 + 2 * 0.67))
        assert all(abs(v - truth) <= 0.15 * h for h, v in values.items())

    def test_values_stay_in_unit_interval(self, sis_model, sis_basis):
        from popsched import initial_scheduler

        prop = make_property(sis_model, "globally", 2.0, 3.0, "X_S == 100")
        sch = initial_scheduler(sis_basis, sis_model.actions, "uniform")
        v = exact_value(sis_model, sch, prop, 0.25)
        assert 0.0 <= v <= 1.0

    def test_bad_time_step(self, reach_model):
        prop = make_property(reach_model, "eventually", 0.0, 1.0, "x == 1")
        sch = ConstantScheduler(reach_model.actions, "go")
        with pytest.raises(ValueError, match="time_step"):
            exact_value(reach_model, sch, prop, 0.0)


class TestBruteForce:
    def test_two_constant_assignments(self, switch_model):
        prop = make_property(switch_model, "eventually", 0.0, 1.0, "x == 1")
        results = brute_force_constant(switch_model, prop, 0.01)
        assert len(results) == 2
        best_action, best = results[0]
        worst_action, worst = results[1]
        assert best_action == "fast"
        assert best == pytest.approx(1 - math.exp(-2.0), abs=1e-6)
        assert worst == pytest.approx(1 - math.exp(-1.0), abs=1e-6)
        assert best >= worst

    def test_symmetric_actions_tie(self):
        doc = {
            "variables": [{"name": "x", "lower": 0, "upper": 1}],
            "actions": ["a", "b"],
            "transitions": [
                {"action": "a", "update": [1], "rate": "1.3"},
                {"action": "b", "update": [1], "rate": "1.3"},
            ],
            "initial_state": [0],
        }
        m = parse_model(json.dumps(doc))
        prop = make_property(m, "eventually", 0.0, 1.0, "x == 1")
        results = brute_force_constant(m, prop, 0.01)
        assert abs(results[0][1] - results[1][1]) <= 1e-10

    def test_per_state_sweep(self, toy_model):
        prop = make_property(toy_model, "eventually", 0.0, 2.0, "x == 2")
        results = brute_force_constant(toy_model, prop, 0.02, per_state=True)
        assert len(results) == 2 ** 3
        values = dict(results)
        # fastest route: action a in state 0, action b in state 1
        best_assignment = results[0][0]
        assert best_assignment[0] == "a" and best_assignment[1] == "b"
        r1 = r2 = 2.0
        erlang = 1 - math.exp(-r1 * 2) * (1 + r1 * 2)
        assert values[best_assignment] == pytest.approx(erlang, abs=1e-4)

    def test_per_state_sweep_caps_at_three_states(self, sis_model, sis_property):
        with pytest.raises(StateSpaceError, match="<= 3 states"):
            brute_force_constant(sis_model, sis_property, 0.1, per_state=True)


class TestAgainstSimulation:
    def test_smc_lands_in_its_interval_around_oracle(self, reach_model, survival_model):
        """Constant policies: committed-action and mixed-rate semantics agree."""
        from popsched import estimate_probability

        cases = [
            (reach_model, "eventually", "x == 1", "go", 1.0),
            (survival_model, "globally", "x == 0", "stay", 2.0),
        ]
        for model, mode, goal, action, t_end in cases:
            prop = make_property(model, mode, 0.0, t_end, goal)
            sch = ConstantScheduler(model.actions, action)
            truth = exact_value(model, sch, prop, 0.01)
            result = estimate_probability(model, sch, prop, 10_000, 31, confidence=0.99)
            assert result.ci_low <= truth <= result.ci_high
