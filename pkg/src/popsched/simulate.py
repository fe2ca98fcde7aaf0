"""Trajectory sampling of the controlled process and property monitoring.

Semantics: on entering a state, the scheduler is queried at the exact entry
time, an action is drawn and committed for the whole stay.  The sojourn is
exponential with the committed action's exit rate; the successor is drawn
from the jump distribution.  A committed action with zero exit rate leaves
the state absorbing.

A property asks whether some (``eventually``) or every (``globally``) state
occupying the closed window ``[t_start, t_end]`` satisfies a goal predicate.
State occupancies are half-open ``[entry, exit)`` except for the last state
of a run, which holds through the horizon.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
import numpy as np

from . import model as _model
from .exprs import compile_predicate, parse_predicate
from .model import PopulationModel, State


@dataclass(frozen=True)
class Step:
    state: State
    action: str | None
    entry_time: float
    sojourn: float | None  # None: open stay (absorbing or truncated at horizon)


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[Step, ...]
    horizon: float


@dataclass(frozen=True)
class ReachabilityProperty:
    """Time-bounded reachability (``eventually``) or safety (``globally``)."""

    mode: str                     # "eventually" | "globally"
    t_start: float
    t_end: float
    goal: str                     # canonical predicate source
    variables: tuple[str, ...]

    def __post_init__(self):
        if self.mode not in ("eventually", "globally"):
            raise ValueError(f"mode must be 'eventually' or 'globally', got {self.mode!r}")
        if not 0 <= self.t_start <= self.t_end:
            raise ValueError(f"need 0 <= t_start <= t_end, got [{self.t_start}, {self.t_end}]")

    @property
    def goal_fn(self):
        return compile_predicate(self.goal, self.variables)


def make_property(model: PopulationModel, mode: str, t_start: float,
                  t_end: float, goal: str) -> ReachabilityProperty:
    """Parse the goal predicate against the model's variables."""
    source = parse_predicate(goal, model.variable_names)
    return ReachabilityProperty(mode, float(t_start), float(t_end), source,
                                model.variable_names)


class Dynamics:
    """Per-model memo of exit rates and jump tables, keyed by state.

    Derives everything from the public model operations, so cached and
    uncached simulations agree exactly.  Purely a lookup structure: sharing
    or rebuilding it never changes results.
    """

    def __init__(self, model: PopulationModel):
        self.model = model
        self._table: dict[State, list] = {}

    def entry(self, state: State) -> list:
        row = self._table.get(state)
        if row is None:
            row = []
            for action in self.model.actions:
                rate = _model.exit_rate(self.model, state, action)
                if rate > 0.0:
                    dist = _model.jump_distribution(self.model, state, action)
                    targets = [tgt for tgt, _ in dist]
                    cum = []
                    acc = 0.0
                    for _, p in dist:
                        acc += p
                        cum.append(acc)
                    cum[-1] = 1.0
                    row.append((rate, cum, targets))
                else:
                    row.append((0.0, None, None))
            self._table[state] = row
        return row


def _open_uniform(rng: np.random.Generator) -> float:
    u = rng.random()
    while u <= 0.0:  # keep the inverse transform on the open interval
        u = rng.random()
    return u


def simulate(model: PopulationModel, sch, horizon: float,
             rng: np.random.Generator, dynamics: Dynamics | None = None) -> Trajectory:
    """Sample one run of the process controlled by ``sch`` up to ``horizon``."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if sch.horizon < horizon:
        raise ValueError(f"scheduler horizon {sch.horizon} < simulation horizon {horizon}")
    dyn = dynamics if dynamics is not None else Dynamics(model)
    actions = model.actions
    steps: list[Step] = []
    s = model.initial_state
    t = 0.0
    while True:
        a_idx = sch._pick(s, t, rng.random())
        rate, cum, targets = dyn.entry(s)[a_idx]
        if rate == 0.0:
            steps.append(Step(s, actions[a_idx], t, None))
            break
        delta = -math.log(_open_uniform(rng)) / rate
        if t + delta >= horizon:
            steps.append(Step(s, actions[a_idx], t, None))
            break
        steps.append(Step(s, actions[a_idx], t, delta))
        s = targets[bisect_right(cum, rng.random())] if len(cum) > 1 else targets[0]
        t += delta
    return Trajectory(tuple(steps), float(horizon))


def _occupies_window(entry: float, exit_time: float | None, t1: float, t2: float) -> bool:
    # Open (final) stays hold through the horizon and are closed at t2; a
    # half-open stay entered exactly at t2 does not count.
    if exit_time is None:
        return entry <= t2
    return entry < t2 and exit_time > t1


def check_property(tr: Trajectory, prop: ReachabilityProperty) -> bool:
    """Evaluate the satisfaction indicator of ``prop`` on a finished run."""
    t1, t2 = prop.t_start, prop.t_end
    if tr.horizon < t2:
        raise ValueError(f"trajectory horizon {tr.horizon} shorter than window end {t2}")
    goal = prop.goal_fn
    want_goal = prop.mode == "eventually"
    for step in tr.steps:
        exit_time = None if step.sojourn is None else step.entry_time + step.sojourn
        if not _occupies_window(step.entry_time, exit_time, t1, t2):
            continue
        if goal(step.state) == want_goal:
            # eventually: a goal state occupies the window -> satisfied;
            # globally: a non-goal state occupies the window -> violated.
            return want_goal
    return not want_goal


def simulate_and_check(model: PopulationModel, sch, prop: ReachabilityProperty,
                       rng: np.random.Generator,
                       dynamics: Dynamics | None = None) -> bool:
    """One Bernoulli sample of the property indicator.

    Simulates with horizon ``prop.t_end`` and stops as soon as the outcome
    is decided; the result equals ``check_property(simulate(...))`` on the
    same stream.
    """
    t1, t2 = prop.t_start, prop.t_end
    horizon = t2
    if sch.horizon < horizon:
        raise ValueError(f"scheduler horizon {sch.horizon} < property window end {horizon}")
    dyn = dynamics if dynamics is not None else Dynamics(model)
    goal = prop.goal_fn
    want_goal = prop.mode == "eventually"
    rng_random = rng.random
    pick = sch._pick
    entry = dyn.entry
    log = math.log
    s = model.initial_state
    t = 0.0
    while t <= t2:
        a_idx = pick(s, t, rng_random())
        rate, cum, targets = entry(s)[a_idx]
        if rate == 0.0:
            if goal(s) == want_goal:  # final stay covers the window end
                return want_goal
            return not want_goal
        u = rng_random()
        while u <= 0.0:
            u = rng_random()
        delta = -log(u) / rate
        exit_time = t + delta
        if exit_time >= horizon:
            if t <= t2 and goal(s) == want_goal:
                return want_goal
            return not want_goal
        if t < t2 and exit_time > t1 and goal(s) == want_goal:
            return want_goal
        s = targets[bisect_right(cum, rng_random())] if len(cum) > 1 else targets[0]
        t = exit_time
    return not want_goal


def trajectory_rows(tr: Trajectory, run_id: int) -> list[tuple]:
    """Flatten a trajectory for CSV export: (run, step, time, action, *state)."""
    return [
        (run_id, i, step.entry_time, step.action, *step.state)
        for i, step in enumerate(tr.steps)
    ]
