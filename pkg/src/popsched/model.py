"""Population models of continuous-time Markov decision processes.

A model holds integer population variables confined to a box plus optional
linear constraints, a finite action set, and guarded transitions ``(action,
update vector, rate expression)``.  Fixing an action in a state induces a
race between the transitions guarded by that action (or by the wildcard
``"*"``); the winning transition fires after an exponential delay.

States are plain tuples of ints throughout.  Models are immutable after
construction and safe to share across simulation workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .exprs import (
    ExpressionError,
    compile_arith,
    constant_items,
    parse_arith,
)

WILDCARD = "*"

State = tuple[int, ...]


class ModelError(ValueError):
    """Invalid model description or contract violation."""


class RateError(ModelError):
    """A rate expression produced a negative or non-finite value."""


@dataclass(frozen=True)
class VariableSpec:
    name: str
    lower: int
    upper: int


@dataclass(frozen=True)
class LinearConstraint:
    """Inequality  sum_i coeffs[i] * x_i <= bound  restricting the region."""

    coeffs: tuple[float, ...]
    bound: float


@dataclass(frozen=True)
class Transition:
    action: str
    update: tuple[int, ...]
    rate: str  # canonical arithmetic expression source
    label: str | None = None

    def describe(self) -> str:
        tag = self.label if self.label else f"{self.action} {list(self.update)}"
        return f"transition '{tag}' (rate {self.rate})"


@dataclass(frozen=True)
class PopulationModel:
    variables: tuple[VariableSpec, ...]
    actions: tuple[str, ...]
    transitions: tuple[Transition, ...]
    initial_state: State
    constraints: tuple[LinearConstraint, ...] = ()
    constants: Mapping[str, float] = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return len(self.variables)

    @property
    def variable_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def in_region(self, state: Sequence[int]) -> bool:
        if len(state) != self.dimension:
            return False
        for value, var in zip(state, self.variables):
            if value < var.lower or value > var.upper:
                return False
        for con in self.constraints:
            if sum(c * x for c, x in zip(con.coeffs, state)) > con.bound:
                return False
        return True

    def _rate_fn(self, tr: Transition):
        return compile_arith(tr.rate, self.variable_names,
                             constant_items(self.constants))


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ModelError(message)


def eval_rate(model: PopulationModel, tr: Transition, state: Sequence[int]) -> float:
    """Evaluate a transition's rate at a state; must be finite and >= 0.

    Negative intermediates inside the expression are fine; only the final
    value is checked.  Division by zero and negative results raise
    ``RateError`` naming the transition.
    """
    try:
        value = model._rate_fn(tr)(state)
    except ZeroDivisionError:
        raise RateError(f"division by zero in {tr.describe()} at state {tuple(state)}") from None
    if not math.isfinite(value) or value < 0:
        raise RateError(
            f"rate of {tr.describe()} at state {tuple(state)} is {value!r}; "
            "rates must be finite and nonnegative"
        )
    return float(value)


def _guarded(model: PopulationModel, action: str) -> Iterable[Transition]:
    for tr in model.transitions:
        if tr.action == action or tr.action == WILDCARD:
            yield tr


def exit_rate(model: PopulationModel, state: Sequence[int], action: str) -> float:
    """Total outflow rate from ``state`` under a committed ``action``.

    Transitions whose target ``state + update`` would leave the region
    contribute zero (they are disabled at the boundary).
    """
    _require(action in model.actions, f"unknown action {action!r}")
    s = tuple(state)
    total = 0.0
    for tr in _guarded(model, action):
        target = tuple(x + v for x, v in zip(s, tr.update))
        if model.in_region(target):
            total += eval_rate(model, tr, s)
    return total


def jump_distribution(model: PopulationModel, state: Sequence[int],
                      action: str) -> list[tuple[State, float]]:
    """Successor distribution given that ``action`` was committed in ``state``.

    Transitions reaching the same target state are aggregated (their rates
    add).  Requires a positive exit rate.
    """
    s = tuple(state)
    rates: dict[State, float] = {}
    for tr in _guarded(model, action):
        target = tuple(x + v for x, v in zip(s, tr.update))
        if model.in_region(target):
            r = eval_rate(model, tr, s)
            if r > 0.0:
                rates[target] = rates.get(target, 0.0) + r
    total = sum(rates.values())
    _require(total > 0.0,
             f"jump_distribution called with zero exit rate at {s} under {action!r}")
    return [(target, r / total) for target, r in rates.items()]


def enabled_actions(model: PopulationModel, state: Sequence[int]) -> set[str]:
    return {a for a in model.actions if exit_rate(model, state, a) > 0.0}


# ---------------------------------------------------------------------------
# Parsing and serialization


def _parse_int_vector(raw, n: int, what: str) -> tuple[int, ...]:
    if not isinstance(raw, (list, tuple)) or len(raw) != n:
        raise ModelError(f"{what} must be a list of {n} integers, got {raw!r}")
    out = []
    for x in raw:
        if isinstance(x, bool) or not isinstance(x, int):
            raise ModelError(f"{what} must contain integers, got {x!r}")
        out.append(x)
    return tuple(out)


def parse_model(text: str) -> PopulationModel:
    """Parse a JSON model description into a validated ``PopulationModel``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(
            f"model document is not valid JSON (line {exc.lineno}, col {exc.colno}): {exc.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")

    raw_vars = doc.get("variables")
    _require(isinstance(raw_vars, list) and len(raw_vars) >= 1,
             "field 'variables' must be a nonempty list")
    variables = []
    seen = set()
    for rv in raw_vars:
        _require(isinstance(rv, dict) and {"name", "lower", "upper"} <= rv.keys(),
                 f"variable entries need name/lower/upper, got {rv!r}")
        name = rv["name"]
        _require(isinstance(name, str) and name.isidentifier(),
                 f"variable name {name!r} must be an identifier")
        _require(name not in seen, f"duplicate variable {name!r}")
        seen.add(name)
        lower, upper = rv["lower"], rv["upper"]
        _require(isinstance(lower, int) and isinstance(upper, int),
                 f"bounds of {name!r} must be integers")
        _require(lower <= upper, f"variable {name!r} has lower > upper")
        variables.append(VariableSpec(name, lower, upper))
    n = len(variables)
    names = tuple(v.name for v in variables)

    constants: dict[str, float] = {}
    for cname, cval in (doc.get("constants") or {}).items():
        _require(isinstance(cname, str) and cname.isidentifier() and cname not in seen,
                 f"constant name {cname!r} invalid or clashes with a variable")
        _require(isinstance(cval, (int, float)) and math.isfinite(cval) and cval >= 0,
                 f"constant {cname!r} must be a finite nonnegative number")
        constants[cname] = float(cval)
    known = names + tuple(constants)

    raw_actions = doc.get("actions")
    _require(isinstance(raw_actions, list) and len(raw_actions) >= 1,
             "field 'actions' must be a nonempty list")
    _require(len(set(raw_actions)) == len(raw_actions), "duplicate actions")
    for a in raw_actions:
        _require(isinstance(a, str) and a and a != WILDCARD,
                 f"invalid action name {a!r}")
    actions = tuple(raw_actions)

    constraints = []
    for rc in doc.get("constraints") or []:
        _require(isinstance(rc, dict) and {"coeffs", "bound"} <= rc.keys(),
                 f"constraint entries need coeffs/bound, got {rc!r}")
        coeffs = rc["coeffs"]
        _require(isinstance(coeffs, list) and len(coeffs) == n,
                 f"constraint coeffs must have length {n}")
        constraints.append(LinearConstraint(tuple(float(c) for c in coeffs),
                                            float(rc["bound"])))

    transitions = []
    for i, rt in enumerate(doc.get("transitions") or []):
        _require(isinstance(rt, dict) and {"action", "update", "rate"} <= rt.keys(),
                 f"transition {i} needs action/update/rate")
        action = rt["action"]
        _require(action == WILDCARD or action in actions,
                 f"transition {i} uses undeclared action {action!r}")
        update = _parse_int_vector(rt["update"], n, f"update of transition {i}")
        try:
            rate = parse_arith(str(rt["rate"]), known)
        except ExpressionError as exc:
            raise ModelError(f"transition {i}: {exc}") from None
        label = rt.get("label")
        transitions.append(Transition(action, update, rate,
                                      str(label) if label is not None else None))

    initial = _parse_int_vector(doc.get("initial_state"), n, "initial_state")
    model = PopulationModel(tuple(variables), actions, tuple(transitions),
                            initial, tuple(constraints), constants)
    _require(model.in_region(initial),
             f"initial state {initial} lies outside the model region")
    return model


def serialize_model(model: PopulationModel) -> str:
    """Render the canonical JSON form; ``parse_model`` round-trips it."""
    doc: dict = {
        "variables": [
            {"name": v.name, "lower": v.lower, "upper": v.upper}
            for v in model.variables
        ],
    }
    if model.constraints:
        doc["constraints"] = [
            {"coeffs": list(c.coeffs), "bound": c.bound} for c in model.constraints
        ]
    if model.constants:
        doc["constants"] = {k: model.constants[k] for k in sorted(model.constants)}
    doc["actions"] = list(model.actions)
    doc["transitions"] = [
        {
            "action": t.action,
            "update": list(t.update),
            "rate": t.rate,
            **({"label": t.label} if t.label else {}),
        }
        for t in model.transitions
    ]
    doc["initial_state"] = list(model.initial_state)
    return json.dumps(doc, indent=2) + "\n"


def load_model(path) -> PopulationModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())
