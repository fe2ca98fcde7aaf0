from __future__ import annotations

import json
from importlib import resources

import pytest

from popsched import make_grid_basis, make_property, parse_model


def bundled_text(name: str) -> str:
    return resources.files("popsched").joinpath(f"data/{name}.json").read_text()


@pytest.fixture(scope="session")
def sis_model():
    return parse_model(bundled_text("sis"))


@pytest.fixture(scope="session")
def sis_property(sis_model):
    return make_property(sis_model, "globally", 50.0, 60.0, "X_S == 100")


@pytest.fixture(scope="session")
def sis_basis(sis_model):
    return make_grid_basis(sis_model, 60.0, (10, 10, 16))


@pytest.fixture(scope="session")
def reach_model():
    """Two-state chain: advance at rate 1, second state absorbing."""
    return parse_model(bundled_text("chain_reach"))


@pytest.fixture(scope="session")
def switch_model():
    """Two-state chain with a slow (rate 1) and a fast (rate 2) action."""
    return parse_model(bundled_text("chain_switch"))


@pytest.fixture(scope="session")
def survival_model():
    """Two-state chain leaving the initial state at rate 0.7."""
    return parse_model(bundled_text("chain_survival"))


@pytest.fixture(scope="session")
def toy_model():
    """Three-state chain where each action is fast in a different state."""
    return parse_model(bundled_text("toy_grid"))


def make_chain(rate: float, actions=("go",), extra_transitions=()) -> str:
    """Inline two-state chain description with a configurable advance rate."""
    doc = {
        "variables": [{"name": "x", "lower": 0, "upper": 1}],
        "actions": list(actions),
        "transitions": [
            {"action": actions[0], "update": [1], "rate": repr(float(rate))},
            *extra_transitions,
        ],
        "initial_state": [0],
    }
    return json.dumps(doc)
