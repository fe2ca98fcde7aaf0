"""Monte Carlo estimation of satisfaction probabilities with score intervals.

Each of the ``runs`` simulations owns an independent substream derived from
``(seed, run index)``, so the estimate is a plain sum of indicators and is
bit-identical for any worker count or execution order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .model import PopulationModel
from .seeding import as_seedseq, rng_from
from .simulate import Dynamics, ReachabilityProperty, simulate_and_check


@dataclass(frozen=True)
class SMCResult:
    estimate: float
    successes: int
    runs: int
    ci_low: float
    ci_high: float
    confidence: float


def wilson_interval(successes: int, runs: int, confidence: float = 0.95) -> tuple[float, float]:
    """Score interval for a binomial proportion; well behaved near 0 and 1."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if not 0 <= successes <= runs:
        raise ValueError(f"successes must lie in [0, {runs}], got {successes}")
    if not 0 < confidence < 1:
        raise ValueError("confidence must be in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    n = float(runs)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == runs else min(1.0, center + half)
    return low, high


def _count_successes(model: PopulationModel, sch, prop: ReachabilityProperty,
                     seed_seq: np.random.SeedSequence, start: int, stop: int) -> int:
    dynamics = Dynamics(model)
    count = 0
    for i in range(start, stop):
        if simulate_and_check(model, sch, prop, rng_from(seed_seq, i), dynamics):
            count += 1
    return count


def estimate_probability(model: PopulationModel, sch, prop: ReachabilityProperty,
                         runs: int, seed, *, confidence: float = 0.95,
                         workers: int = 1, executor: ProcessPoolExecutor | None = None,
                         dynamics: Dynamics | None = None) -> SMCResult:
    """Mean of ``runs`` independent property indicators, with a score interval.

    ``workers`` is a throughput hint only: run ``i`` always uses the stream
    derived from ``(seed, i)``, so results do not depend on it.  An existing
    ``executor`` may be passed to amortize process startup across calls.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    base = as_seedseq(seed)
    if workers <= 1 and executor is None:
        dyn = dynamics if dynamics is not None else Dynamics(model)
        successes = 0
        for i in range(runs):
            if simulate_and_check(model, sch, prop, rng_from(base, i), dyn):
                successes += 1
    else:
        own = None
        if executor is None:
            own = executor = ProcessPoolExecutor(max_workers=workers)
        try:
            nchunks = max(1, min(runs, getattr(executor, "_max_workers", workers)))
            bounds = np.linspace(0, runs, nchunks + 1).astype(int)
            futures = [
                executor.submit(_count_successes, model, sch, prop, base, int(lo), int(hi))
                for lo, hi in zip(bounds[:-1], bounds[1:])
                if hi > lo
            ]
            successes = sum(f.result() for f in futures)
        finally:
            if own is not None:
                own.shutdown()
    low, high = wilson_interval(successes, runs, confidence)
    return SMCResult(successes / runs, successes, runs, low, high, confidence)
