"""Randomized time-dependent schedulers over a Gaussian kernel basis.

A scheduler keeps one weight vector per action over a shared set of Gaussian
bumps spread across state space and time, plus one extra weight on an
implicit constant basis function (a per-action bias).  Per-action logits are
the weighted kernel sums; action probabilities come out of a softmax, so any
real weights yield a valid distribution.  The state coordinates are relaxed
to the reals, which is what lets a finite kernel grid cover a huge discrete
state space.

Schedulers are immutable; perturbations and updates return new values.
Evaluation caches per-state partial sums internally, which is safe because
weights never change in place.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import PopulationModel, VariableSpec

PREFER_BIAS = 10.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KernelBasis:
    """Shared Gaussian bump layout on state space x [0, horizon].

    ``centers`` has one row per bump; ``lengthscales`` holds one positive
    scale per dimension (state dims first, time last).  ``axes`` carries the
    per-dimension center arrays when the bumps form a full Cartesian grid,
    which enables a factorized fast path for evaluation.
    """

    centers: np.ndarray          # (count, n+1)
    lengthscales: np.ndarray     # (n+1,)
    horizon: float
    axes: tuple[np.ndarray, ...] | None = None
    variables: tuple[VariableSpec, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "centers", _frozen(np.atleast_2d(self.centers)))
        object.__setattr__(self, "lengthscales", _frozen(self.lengthscales))
        if self.axes is not None:
            object.__setattr__(self, "axes", tuple(_frozen(a) for a in self.axes))
        if self.centers.shape[0] < 1:
            raise ValueError("basis needs at least one kernel")
        if self.centers.shape[1] != self.lengthscales.shape[0]:
            raise ValueError("centers and lengthscales disagree on dimension")
        if not np.all(self.lengthscales > 0):
            raise ValueError("lengthscales must be strictly positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    @property
    def dimension(self) -> int:
        return self.centers.shape[1] - 1


def _axis_centers(lower: float, upper: float, count: int) -> tuple[np.ndarray, float]:
    extent = float(upper - lower)
    if count == 1:
        scale = extent if extent > 0 else 1.0
        return np.array([lower + extent / 2.0]), scale
    pts = np.linspace(lower, upper, count)
    spacing = extent / (count - 1)
    return pts, (spacing if spacing > 0 else 1.0)


def make_grid_basis(model: PopulationModel, horizon: float,
                    counts: Sequence[int]) -> KernelBasis:
    """Evenly spread bumps on the variable box times [0, horizon].

    ``counts`` gives the number of bumps per dimension (state variables in
    declaration order, then time).  Each dimension's lengthscale equals the
    spacing between its successive bumps; a single bump sits at the midpoint
    and takes the full extent as its scale.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    counts = tuple(int(c) for c in counts)
    if len(counts) != model.dimension + 1:
        raise ValueError(
            f"need {model.dimension + 1} kernel counts (state dims + time), got {len(counts)}"
        )
    if any(c < 1 for c in counts):
        raise ValueError("kernel counts must be >= 1")
    axes: list[np.ndarray] = []
    scales: list[float] = []
    for var, c in zip(model.variables, counts[:-1]):
        pts, scale = _axis_centers(var.lower, var.upper, c)
        axes.append(pts)
        scales.append(scale)
    tpts, tscale = _axis_centers(0.0, horizon, counts[-1])
    axes.append(tpts)
    scales.append(tscale)
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=1)
    return KernelBasis(centers, np.array(scales), float(horizon),
                       tuple(axes), model.variables)


@dataclass(frozen=True)
class Direction:
    """A weight-space displacement, one row per action (bias column included)."""

    actions: tuple[str, ...]
    values: np.ndarray  # (len(actions), kernel count + 1)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("direction entries must be finite")

    def scaled(self, factor: float) -> "Direction":
        return Direction(self.actions, self.values * factor)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()


@dataclass(frozen=True)
class KernelScheduler:
    basis: KernelBasis
    actions: tuple[str, ...]
    weights: np.ndarray  # (len(actions), basis.count + 1); last column is the bias

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "weights", _frozen(self.weights))
        expected = (len(self.actions), self.basis.count + 1)
        if self.weights.shape != expected:
            raise ValueError(f"weights must have shape {expected}, got {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "_cache", {})
        object.__setattr__(self, "_parts", None)

    def __getstate__(self):
        return {"basis": self.basis, "actions": self.actions, "weights": self.weights}

    def __setstate__(self, state):
        object.__setattr__(self, "basis", state["basis"])
        object.__setattr__(self, "actions", state["actions"])
        object.__setattr__(self, "weights", state["weights"])
        object.__setattr__(self, "_cache", {})
        object.__setattr__(self, "_parts", None)

    @property
    def horizon(self) -> float:
        return self.basis.horizon

    # -- evaluation ---------------------------------------------------------

    def _grid_parts(self):
        # Weight tensor reshaped over the grid axes, time axis kept last.
        parts = object.__getattribute__(self, "_parts")
        if parts is None:
            basis = self.basis
            if basis.axes is not None:
                shape = (len(self.actions),) + tuple(len(a) for a in basis.axes)
                kernel_w = np.ascontiguousarray(self.weights[:, :-1].reshape(shape))
            else:
                kernel_w = np.ascontiguousarray(self.weights[:, :-1])
            parts = (kernel_w, np.ascontiguousarray(self.weights[:, -1]))
            object.__setattr__(self, "_parts", parts)
        return parts

    def _entry(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Per-state partial contraction: (time-profile matrix, bias vector)."""
        key = tuple(x)
        cache = object.__getattribute__(self, "_cache")
        hit = cache.get(key)
        if hit is not None:
            return hit
        kernel_w, bias = self._grid_parts()
        basis = self.basis
        if basis.axes is not None:
            m = kernel_w
            for d in range(basis.dimension):
                v = np.exp(-0.5 * ((key[d] - basis.axes[d]) / basis.lengthscales[d]) ** 2)
                m = np.tensordot(m, v, axes=([1], [0]))
            entry = (np.ascontiguousarray(m), bias)
        else:
            d2 = np.zeros(basis.count)
            for d in range(basis.dimension):
                d2 += ((key[d] - basis.centers[:, d]) / basis.lengthscales[d]) ** 2
            entry = (np.ascontiguousarray(kernel_w), bias, d2)
        cache[key] = entry
        return entry

    def _logits(self, x, t: float) -> np.ndarray:
        basis = self.basis
        entry = self._entry(x)
        if basis.axes is not None:
            m, bias = entry
            kt = np.exp(-0.5 * ((t - basis.axes[-1]) / basis.lengthscales[-1]) ** 2)
            return m @ kt + bias
        kernel_w, bias, d2 = entry
        full = d2 + ((t - basis.centers[:, -1]) / basis.lengthscales[-1]) ** 2
        return kernel_w @ np.exp(-0.5 * full) + bias

    def _check_time(self, t: float) -> None:
        if not 0.0 <= t <= self.basis.horizon:
            raise ValueError(f"time {t} outside [0, {self.basis.horizon}]")

    def logit(self, action: str, x: Sequence[float], t: float) -> float:
        """Kernel-sum logit of one action at a (possibly non-integer) point."""
        self._check_time(t)
        if action not in self.actions:
            raise ValueError(f"unknown action {action!r}")
        return float(self._logits(x, t)[self.actions.index(action)])

    def action_probabilities(self, x: Sequence[float], t: float) -> np.ndarray:
        """Softmax over the per-action logits; positive entries summing to 1."""
        self._check_time(t)
        logits = self._logits(x, t)
        e = np.exp(logits - logits.max())
        return e / e.sum()

    def _pick(self, x, t: float, u: float) -> int:
        # Inverse CDF in declaration order with a single uniform variate.
        logits = self._logits(x, t)
        e = np.exp(logits - logits.max())
        target = u * e.sum()
        acc = 0.0
        last = len(e) - 1
        for i in range(last):
            acc += e[i]
            if target < acc:
                return i
        return last

    def sample_action(self, x: Sequence[float], t: float, rng: np.random.Generator) -> str:
        self._check_time(t)
        return self.actions[self._pick(x, t, rng.random())]

    # -- updates --------------------------------------------------------------

    def with_weights(self, weights: np.ndarray) -> "KernelScheduler":
        return KernelScheduler(self.basis, self.actions, weights)

    def axpy_update(self, coeff: float, direction: Direction) -> "KernelScheduler":
        """New scheduler with weights + coeff * direction."""
        if direction.values.shape != self.weights.shape:
            raise ValueError(
                f"direction shape {direction.values.shape} does not match weights "
                f"{self.weights.shape}"
            )
        return self.with_weights(self.weights + coeff * direction.values)

    def random_direction(self, rng: np.random.Generator) -> Direction:
        return Direction(self.actions, rng.standard_normal(self.weights.shape))

    def perturb(self, eps: float, rng: np.random.Generator,
                direction: Direction | None = None) -> tuple["KernelScheduler", Direction]:
        """Standard-normal weight-space displacement scaled by ``eps``.

        Returns the displaced scheduler together with the raw direction; the
        original is untouched.
        """
        if eps <= 0:
            raise ValueError("eps must be positive")
        g = direction if direction is not None else self.random_direction(rng)
        return self.axpy_update(eps, g), g

    # -- construction and serialization ---------------------------------------

    @staticmethod
    def uniform(basis: KernelBasis, actions: Sequence[str]) -> "KernelScheduler":
        return KernelScheduler(basis, tuple(actions),
                               np.zeros((len(actions), basis.count + 1)))

    def to_dict(self) -> dict:
        basis = self.basis
        return {
            "horizon": basis.horizon,
            "actions": list(self.actions),
            "variables": (
                [{"name": v.name, "lower": v.lower, "upper": v.upper}
                 for v in basis.variables]
                if basis.variables is not None else None
            ),
            "basis": {
                "centers": basis.centers.tolist(),
                "lengthscales": basis.lengthscales.tolist(),
                "grid_axes": ([a.tolist() for a in basis.axes]
                              if basis.axes is not None else None),
            },
            "weights": {a: self.weights[i, :-1].tolist()
                        for i, a in enumerate(self.actions)},
            "bias": {a: float(self.weights[i, -1])
                     for i, a in enumerate(self.actions)},
        }

    @staticmethod
    def from_dict(doc: dict) -> "KernelScheduler":
        raw_vars = doc.get("variables")
        variables = (tuple(VariableSpec(v["name"], v["lower"], v["upper"])
                           for v in raw_vars)
                     if raw_vars is not None else None)
        raw_axes = doc["basis"].get("grid_axes")
        basis = KernelBasis(
            np.array(doc["basis"]["centers"]),
            np.array(doc["basis"]["lengthscales"]),
            float(doc["horizon"]),
            tuple(np.array(a) for a in raw_axes) if raw_axes is not None else None,
            variables,
        )
        actions = tuple(doc["actions"])
        weights = np.array(
            [doc["weights"][a] + [doc["bias"][a]] for a in actions], dtype=float
        )
        return KernelScheduler(basis, actions, weights)


def save_scheduler(sch: KernelScheduler, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(sch.to_dict(), fh, indent=2)
        fh.write("\n")


def load_scheduler(path) -> KernelScheduler:
    with open(path, "r", encoding="utf-8") as fh:
        return KernelScheduler.from_dict(json.load(fh))


_PRESET_ALIASES = {
    "no-treatment-only": "no_treatment",
    "treatment-only": "treatment",
}


def initial_scheduler(basis: KernelBasis, actions: Sequence[str], spec: str,
                      rng: np.random.Generator | None = None) -> KernelScheduler:
    """Build a starting scheduler from a preset name or a scheduler file.

    Presets: ``uniform`` (all weights zero), ``random`` (unit-normal
    weights, needs ``rng``), ``prefer:<action>`` (constant bias of
    ``PREFER_BIAS`` on that action), ``file:<path>``.  The aliases
    ``no-treatment-only`` / ``treatment-only`` resolve against the action
    whose normalized name matches.
    """
    actions = tuple(actions)
    if spec in _PRESET_ALIASES:
        wanted = _PRESET_ALIASES[spec]
        matches = [a for a in actions if a.replace("-", "_").lower() == wanted]
        if not matches:
            raise ValueError(f"preset {spec!r} needs an action named like {wanted!r}")
        spec = f"prefer:{matches[0]}"
    if spec == "uniform":
        return KernelScheduler.uniform(basis, actions)
    if spec == "random":
        if rng is None:
            raise ValueError("preset 'random' needs a random generator")
        return KernelScheduler(basis, actions,
                               rng.standard_normal((len(actions), basis.count + 1)))
    if spec.startswith("prefer:"):
        action = spec.split(":", 1)[1]
        if action not in actions:
            raise ValueError(f"preset prefers unknown action {action!r}")
        w = np.zeros((len(actions), basis.count + 1))
        w[actions.index(action), -1] = PREFER_BIAS
        return KernelScheduler(basis, actions, w)
    if spec.startswith("file:"):
        return load_scheduler(spec.split(":", 1)[1])
    raise ValueError(f"unknown initial-scheduler spec {spec!r}")


# ---------------------------------------------------------------------------
# Simple deterministic schedulers (benchmarks and oracle inputs)


class ConstantScheduler:
    """Always picks one fixed action, everywhere and at all times."""

    def __init__(self, actions: Sequence[str], action: str):
        self.actions = tuple(actions)
        if action not in self.actions:
            raise ValueError(f"unknown action {action!r}")
        self.chosen = self.actions.index(action)
        self.horizon = math.inf

    def action_probabilities(self, x, t) -> np.ndarray:
        p = np.zeros(len(self.actions))
        p[self.chosen] = 1.0
        return p

    def _pick(self, x, t, u) -> int:
        return self.chosen


class TimeSwitchScheduler:
    """Deterministic action choice that is piecewise constant in time.

    ``switch_times`` must be increasing; ``choices`` has one more entry than
    ``switch_times`` and names the action used on each successive interval.
    """

    def __init__(self, actions: Sequence[str], switch_times: Sequence[float],
                 choices: Sequence[str]):
        self.actions = tuple(actions)
        if len(choices) != len(switch_times) + 1:
            raise ValueError("need one more choice than switch times")
        if list(switch_times) != sorted(switch_times):
            raise ValueError("switch times must be increasing")
        self.switch_times = tuple(float(s) for s in switch_times)
        self.choice_idx = tuple(self.actions.index(c) for c in choices)
        self.horizon = math.inf

    def _index_at(self, t: float) -> int:
        for i, s in enumerate(self.switch_times):
            if t < s:
                return self.choice_idx[i]
        return self.choice_idx[-1]

    def action_probabilities(self, x, t) -> np.ndarray:
        p = np.zeros(len(self.actions))
        p[self._index_at(t)] = 1.0
        return p

    def _pick(self, x, t, u) -> int:
        return self._index_at(t)


class ArgmaxScheduler:
    """Deterministic rounding of a randomized scheduler (ties go first)."""

    def __init__(self, base):
        self.base = base
        self.actions = base.actions
        self.horizon = base.horizon

    def action_probabilities(self, x, t) -> np.ndarray:
        p = np.zeros(len(self.actions))
        p[self._pick(x, t, 0.0)] = 1.0
        return p

    def _pick(self, x, t, u) -> int:
        return int(np.argmax(self.base.action_probabilities(x, t)))
