"""Policy learning for population continuous-time Markov decision processes.

Builds randomized, time-dependent schedulers over a Gaussian kernel basis
and improves them by simulation-based gradient ascent on the probability of
a time-bounded reachability or safety property.
"""

from .learn import (
    GradientEstimate,
    LearnConfig,
    QTrace,
    TraceRow,
    estimate_gradient,
    gradient_ascent,
)
from .model import (
    ModelError,
    PopulationModel,
    RateError,
    Transition,
    enabled_actions,
    eval_rate,
    exit_rate,
    jump_distribution,
    load_model,
    parse_model,
    serialize_model,
)
from .oracle import (
    StateSpaceError,
    brute_force_constant,
    enumerate_states,
    exact_value,
)
from .scheduler import (
    ArgmaxScheduler,
    ConstantScheduler,
    Direction,
    KernelBasis,
    KernelScheduler,
    TimeSwitchScheduler,
    initial_scheduler,
    load_scheduler,
    make_grid_basis,
    save_scheduler,
)
from .simulate import (
    Dynamics,
    ReachabilityProperty,
    Step,
    Trajectory,
    check_property,
    make_property,
    simulate,
    simulate_and_check,
)
from .smc import SMCResult, estimate_probability, wilson_interval

__version__ = "0.1.0"

__all__ = [
    "ArgmaxScheduler",
    "ConstantScheduler",
    "Direction",
    "Dynamics",
    "GradientEstimate",
    "KernelBasis",
    "KernelScheduler",
    "LearnConfig",
    "ModelError",
    "PopulationModel",
    "QTrace",
    "RateError",
    "ReachabilityProperty",
    "SMCResult",
    "StateSpaceError",
    "Step",
    "TimeSwitchScheduler",
    "TraceRow",
    "Trajectory",
    "Transition",
    "brute_force_constant",
    "check_property",
    "enabled_actions",
    "enumerate_states",
    "estimate_gradient",
    "estimate_probability",
    "eval_rate",
    "exact_value",
    "exit_rate",
    "gradient_ascent",
    "initial_scheduler",
    "jump_distribution",
    "load_model",
    "load_scheduler",
    "make_grid_basis",
    "make_property",
    "parse_model",
    "save_scheduler",
    "serialize_model",
    "simulate",
    "simulate_and_check",
    "wilson_interval",
]
