"""Exact window-probability computation for small models under a fixed policy.

The controlled process is reduced to a time-dependent Markov chain by mixing
the per-action rate matrices with the scheduler's probabilities, holding the
mix constant on short time segments (sampled at segment midpoints).  The
window probability then propagates backward segment by segment through a
Poisson-series representation of each segment's transition matrix, truncated
at a 1e-10 tail.

The generator mixture re-reads the scheduler continuously in time, whereas
the simulator commits an action for each whole stay.  The two coincide for
deterministic schedulers that do not switch during a stay (in particular any
constant choice) and, more generally, whenever the committed action cannot
matter across a stay; for other randomized policies the mixture is an
approximation, so cross-checks against simulation use constant or
single-action inputs only.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import model as _model
from .model import PopulationModel, State
from .scheduler import ConstantScheduler
from .simulate import ReachabilityProperty

TAIL_MASS = 1e-10
RATE_HEADROOM = 1.02
DEFAULT_CAP = 20_000
VALUE_SLACK = 1e-9


class StateSpaceError(ValueError):
    """Region empty, too large, or otherwise not explicitly analyzable."""


def enumerate_states(model: PopulationModel, cap: int = DEFAULT_CAP) -> list[State]:
    """All integer points of the region, lexicographically ordered."""
    ranges = [range(v.lower, v.upper + 1) for v in model.variables]
    states: list[State] = []
    for point in itertools.product(*ranges):
        if model.in_region(point):
            states.append(point)
            if len(states) > cap:
                raise StateSpaceError(f"state space exceeds cap: more than {cap} states")
    if not states:
        raise StateSpaceError("region is empty: bounds and constraints admit no state")
    return states


def _action_matrices(model: PopulationModel, states: list[State]):
    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    mats = []
    for action in model.actions:
        rows, cols, vals = [], [], []
        exits = np.zeros(n)
        for i, s in enumerate(states):
            for tr in model.transitions:
                if tr.action != action and tr.action != _model.WILDCARD:
                    continue
                target = tuple(x + v for x, v in zip(s, tr.update))
                j = index.get(target)
                if j is None:
                    continue
                rate = _model.eval_rate(model, tr, s)
                if rate > 0.0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(rate)
                    exits[i] += rate
        mats.append((sp.csr_matrix((vals, (rows, cols)), shape=(n, n)), exits))
    return index, mats


def _segments(t_start: float, t_end: float, step: float) -> list[tuple[float, float, bool]]:
    out: list[tuple[float, float, bool]] = []
    for lo, hi, in_window in ((0.0, t_start, False), (t_start, t_end, True)):
        span = hi - lo
        if span <= 0:
            continue
        pieces = max(1, math.ceil(span / step - 1e-12))
        edges = np.linspace(lo, hi, pieces + 1)
        out.extend((float(a), float(b), in_window) for a, b in zip(edges[:-1], edges[1:]))
    return out


def exact_value(model: PopulationModel, sch, prop: ReachabilityProperty,
                time_step: float, cap: int = DEFAULT_CAP) -> float:
    """Window probability from the initial state under the mixed-rate chain.

    ``eventually``: goal states become success-absorbing inside the window;
    ``globally``: states violating the goal become failure-absorbing inside
    the window.  Per-segment series truncation keeps the numerical error at
    the 1e-10 tail mass per segment.
    """
    if time_step <= 0:
        raise ValueError("time_step must be positive")
    states = enumerate_states(model, cap)
    index, mats = _action_matrices(model, states)
    n = len(states)
    goal_fn = prop.goal_fn
    goal = np.array([bool(goal_fn(s)) for s in states])
    frozen = goal if prop.mode == "eventually" else ~goal

    value = goal.astype(float)
    for lo, hi, in_window in reversed(_segments(prop.t_start, prop.t_end, time_step)):
        mid = (lo + hi) / 2.0
        probs = np.array([sch.action_probabilities(s, mid) for s in states])
        off = None
        exits = np.zeros(n)
        for a in range(len(model.actions)):
            rates, action_exits = mats[a]
            weighted = rates.multiply(probs[:, a][:, None])
            off = weighted if off is None else off + weighted
            exits += probs[:, a] * action_exits
        if in_window:
            keep = ~frozen
            off = off.multiply(keep[:, None].astype(float))
            exits = exits * keep
        peak = float(exits.max())
        if peak <= 0.0:
            continue
        lam = RATE_HEADROOM * peak
        mass = lam * (hi - lo)
        if mass > 700.0:
            raise StateSpaceError(
                f"uniformisation rate overflow (rate*step = {mass:.1f}); reduce time_step"
            )
        hop = sp.eye(n, format="csr") + (off.tocsr() - sp.diags(exits)) / lam
        term = math.exp(-mass)
        cum = term
        acc = term * value
        y = value
        k = 0
        while cum < 1.0 - TAIL_MASS:
            k += 1
            y = hop @ y
            term *= mass / k
            acc += term * y
            cum += term
        value = acc
        if value.min() < -VALUE_SLACK or value.max() > 1.0 + VALUE_SLACK:
            raise StateSpaceError("value vector left [0, 1]; numerical breakdown")
        np.clip(value, 0.0, 1.0, out=value)
    return float(value[index[model.initial_state]])


class _TabularScheduler:
    """Deterministic per-state action table (for exhaustive sweeps)."""

    def __init__(self, actions: Sequence[str], table: dict[State, int]):
        self.actions = tuple(actions)
        self.table = table
        self.horizon = math.inf

    def action_probabilities(self, x, t) -> np.ndarray:
        p = np.zeros(len(self.actions))
        p[self.table[tuple(x)]] = 1.0
        return p

    def _pick(self, x, t, u) -> int:
        return self.table[tuple(x)]


def brute_force_constant(model: PopulationModel, prop: ReachabilityProperty,
                         time_step: float, per_state: bool = False,
                         cap: int = DEFAULT_CAP) -> list[tuple]:
    """Exact values of every constant deterministic policy, best first.

    By default enumerates the state-independent policies (one per action).
    With ``per_state`` it sweeps all per-state action tables, which is only
    allowed for models with at most 3 states.
    """
    if per_state:
        states = enumerate_states(model, cap)
        if len(states) > 3:
            raise StateSpaceError(
                f"per-state sweep needs <= 3 states, model has {len(states)}"
            )
        results = []
        for combo in itertools.product(range(len(model.actions)), repeat=len(states)):
            table = dict(zip(states, combo))
            sch = _TabularScheduler(model.actions, table)
            assignment = tuple(model.actions[i] for i in combo)
            results.append((assignment, exact_value(model, sch, prop, time_step, cap)))
    else:
        results = [
            (action, exact_value(model, ConstantScheduler(model.actions, action),
                                 prop, time_step, cap))
            for action in model.actions
        ]
    return sorted(results, key=lambda kv: (-kv[1], str(kv[0])))
