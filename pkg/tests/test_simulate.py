from __future__ import annotations

import json
import math

import pytest
import scipy.stats

from popsched import (
    ConstantScheduler,
    Dynamics,
    ReachabilityProperty,
    Step,
    Trajectory,
    check_property,
    make_property,
    parse_model,
    simulate,
    simulate_and_check,
)
from popsched.seeding import rng_from

from conftest import make_chain


def single_action_scheduler(model):
    return ConstantScheduler(model.actions, model.actions[0])


@pytest.fixture(scope="module")
def rate2_model():
    return parse_model(make_chain(2.0))


class TestSimulate:
    def test_no_transitions_absorbs_immediately(self):
        m = parse_model(json.dumps({
            "variables": [{"name": "x", "lower": 0, "upper": 1}],
            "actions": ["only"],
            "transitions": [],
            "initial_state": [0],
        }))
        tr = simulate(m, single_action_scheduler(m), 5.0, rng_from(0))
        assert len(tr.steps) == 1
        assert tr.steps[0] == Step((0,), "only", 0.0, None)

    def test_mean_first_jump_time(self, rate2_model):
        sch = single_action_scheduler(rate2_model)
        dyn = Dynamics(rate2_model)
        n = 100_000
        total = 0.0
        for i in range(n):
            tr = simulate(rate2_model, sch, 50.0, rng_from(3, i), dyn)
            assert tr.steps[0].sojourn is not None
            total += tr.steps[0].sojourn
        se = 0.5 / math.sqrt(n)  # exponential sd equals its mean
        assert abs(total / n - 0.5) <= 3 * se

    def test_fixed_seed_bit_identical(self, sis_model, sis_basis):
        from popsched import initial_scheduler

        sch = initial_scheduler(sis_basis, sis_model.actions, "uniform")
        a = simulate(sis_model, sch, 60.0, rng_from(77), Dynamics(sis_model))
        b = simulate(sis_model, sch, 60.0, rng_from(77))
        assert a == b

    def test_entry_times_strictly_increase_and_stay_in_region(self, sis_model, sis_basis):
        from popsched import initial_scheduler

        sch = initial_scheduler(sis_basis, sis_model.actions, "uniform")
        dyn = Dynamics(sis_model)
        for i in range(200):
            tr = simulate(sis_model, sch, 60.0, rng_from(13, i), dyn)
            times = [s.entry_time for s in tr.steps]
            assert all(a < b for a, b in zip(times, times[1:]))
            assert times[0] == 0.0
            assert all(sis_model.in_region(s.state) for s in tr.steps)
            assert all(s.sojourn > 0 for s in tr.steps[:-1])
            assert tr.steps[-1].sojourn is None

    def test_sojourns_are_exponential(self, rate2_model):
        # repeated visits to the same state via a self-loop
        doc = json.loads(make_chain(2.0))
        doc["transitions"][0]["update"] = [0]
        m = parse_model(json.dumps(doc))
        sch = single_action_scheduler(m)
        tr = simulate(m, sch, 6000.0, rng_from(5))
        sojourns = [s.sojourn for s in tr.steps if s.sojourn is not None]
        assert len(sojourns) >= 10_000
        result = scipy.stats.kstest(sojourns[:10_000], "expon", args=(0, 1 / 2.0))
        assert result.pvalue > 0.01

    def test_horizon_validation(self, sis_model, sis_basis):
        from popsched import initial_scheduler

        sch = initial_scheduler(sis_basis, sis_model.actions, "uniform")
        with pytest.raises(ValueError, match="horizon"):
            simulate(sis_model, sch, 120.0, rng_from(0))


def traj(steps, horizon):
    return Trajectory(tuple(steps), horizon)


class TestCheckProperty:
    def prop(self, model, mode, t1, t2, goal="x == 1"):
        return make_property(model, mode, t1, t2, goal)

    def test_absorbing_goal_before_window(self, reach_model):
        p = self.prop(reach_model, "eventually", 1.0, 2.0)
        tr = traj([Step((0,), "go", 0.0, 0.4), Step((1,), "go", 0.4, None)], 2.0)
        assert check_property(tr, p) is True

    def test_never_entering_goal_and_duality(self, reach_model):
        p_reach = self.prop(reach_model, "eventually", 0.0, 2.0)
        p_stay = self.prop(reach_model, "globally", 0.0, 2.0, "x == 0")
        tr = traj([Step((0,), "go", 0.0, None)], 2.0)
        assert check_property(tr, p_reach) is False
        assert check_property(tr, p_stay) is True

    def test_boundary_exit_just_inside_window(self, reach_model):
        # leaves the goal region at 0.9; the non-goal state covers [0.9, 1]
        p = self.prop(reach_model, "globally", 0.0, 1.0, "x == 0")
        tr = traj([Step((0,), "go", 0.0, 0.9), Step((1,), "go", 0.9, None)], 1.0)
        assert check_property(tr, p) is False

    def test_exit_exactly_at_window_start_does_not_count(self, reach_model):
        # occupancy [0, 1) is half-open: not present at time 1
        p = self.prop(reach_model, "eventually", 1.0, 2.0, "x == 0")
        tr = traj([Step((0,), "go", 0.0, 1.0), Step((1,), "go", 1.0, None)], 2.0)
        assert check_property(tr, p) is False

    def test_entry_exactly_at_window_end(self, reach_model):
        p = self.prop(reach_model, "eventually", 0.0, 1.0)
        # final stay starting exactly at the window end counts (closed window)
        tr = traj([Step((0,), "go", 0.0, 1.0), Step((1,), "go", 1.0, None)], 2.0)
        assert check_property(tr, p) is True
        # a half-open stay entered exactly at the window end does not
        tr2 = traj([Step((0,), "go", 0.0, 1.0), Step((1,), "go", 1.0, 0.5),
                    Step((0,), "go", 1.5, None)], 2.0)
        assert check_property(tr2, p) is False

    def test_horizon_too_short(self, reach_model):
        p = self.prop(reach_model, "eventually", 0.0, 5.0)
        tr = traj([Step((0,), "go", 0.0, None)], 2.0)
        with pytest.raises(ValueError, match="horizon"):
            check_property(tr, p)


class TestSimulateAndCheck:
    def empirical(self, model, sch, prop, n, seed):
        dyn = Dynamics(model)
        hits = sum(
            simulate_and_check(model, sch, prop, rng_from(seed, i), dyn)
            for i in range(n)
        )
        return hits / n

    def test_reach_within_one(self, reach_model):
        p = make_property(reach_model, "eventually", 0.0, 1.0, "x == 1")
        sch = single_action_scheduler(reach_model)
        expected = 1 - math.exp(-1.0)
        n = 100_000
        got = self.empirical(reach_model, sch, p, n, 101)
        assert abs(got - expected) <= 3 * math.sqrt(expected * (1 - expected) / n)

    def test_reach_in_later_window_with_absorbing_goal(self, reach_model):
        p = make_property(reach_model, "eventually", 1.0, 2.0, "x == 1")
        sch = single_action_scheduler(reach_model)
        expected = 1 - math.exp(-2.0)
        n = 100_000
        got = self.empirical(reach_model, sch, p, n, 102)
        assert abs(got - expected) <= 3 * math.sqrt(expected * (1 - expected) / n)

    def test_survival_probability(self, survival_model):
        p = make_property(survival_model, "globally", 0.0, 2.0, "x == 0")
        sch = single_action_scheduler(survival_model)
        expected = math.exp(-0.7 * 2.0)
        n = 100_000
        got = self.empirical(survival_model, sch, p, n, 103)
        assert abs(got - expected) <= 3 * math.sqrt(expected * (1 - expected) / n)

    def test_early_termination_equals_full_check(self, sis_model, sis_basis, sis_property):
        from popsched import initial_scheduler

        sch = initial_scheduler(sis_basis, sis_model.actions, "uniform")
        dyn = Dynamics(sis_model)
        for i in range(10_000):
            fast = simulate_and_check(sis_model, sch, sis_property, rng_from(55, i), dyn)
            full = check_property(
                simulate(sis_model, sch, sis_property.t_end, rng_from(55, i), dyn),
                sis_property,
            )
            assert fast == full

    def test_property_validation(self):
        with pytest.raises(ValueError, match="t_start"):
            ReachabilityProperty("eventually", 3.0, 2.0, "x == 1", ("x",))
        with pytest.raises(ValueError, match="mode"):
            ReachabilityProperty("until", 0.0, 2.0, "x == 1", ("x",))
