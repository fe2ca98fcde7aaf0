"""Command-line experiment runner.

Subcommands: ``learn`` (full ascent experiment with artifacts), ``estimate``
(one-shot probability estimate), ``exact`` (explicit-state value), ``heatmap``
(policy probability export), ``suite`` (directory of experiments), and
``validate`` (config linting).

Configuration precedence: built-in defaults, then the config file, then
``CTMDP_SCHED_<FIELD>`` environment variables, then command-line flags.
Exit codes: 0 success, 1 validation problem, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .learn import LearnConfig, QTrace, gradient_ascent
from .model import ModelError, PopulationModel, load_model
from .oracle import StateSpaceError, exact_value
from .scheduler import (
    ConstantScheduler,
    KernelScheduler,
    initial_scheduler,
    load_scheduler,
    make_grid_basis,
    save_scheduler,
)
from .seeding import rng_from
from .simulate import make_property, simulate, trajectory_rows
from .smc import estimate_probability

ENV_PREFIX = "CTMDP_SCHED_"
PANEL_FRACTIONS = (0.1875, 0.375, 0.5625, 0.75, 0.875, 1.0)


class ConfigError(ValueError):
    """Invalid experiment configuration; message lists field-level problems."""


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = ""
    mode: str = "eventually"
    t1: float = 0.0
    t2: float = 0.0
    goal: str = ""
    kernel_counts: tuple[int, ...] | None = None
    init: str = "uniform"
    gamma0: float = 5.0
    eps: float = 0.1
    batch_k: int = 5
    runs_per_q: int = 1000
    n_max: int = 100
    confidence: float = 0.95
    seed: int = 0
    workers: int = 1
    output_dir: str = "out"
    checkpoint_every: int = 0
    figures: bool = True

    def learn_config(self) -> LearnConfig:
        return LearnConfig(
            gamma0=self.gamma0, eps=self.eps, batch_k=self.batch_k,
            runs_per_q=self.runs_per_q, n_max=self.n_max, init=self.init,
            kernel_counts=self.kernel_counts, seed=self.seed,
            confidence=self.confidence, workers=self.workers,
        )


_INT_FIELDS = {"batch_k", "runs_per_q", "n_max", "seed", "workers", "checkpoint_every"}
_FLOAT_FIELDS = {"t1", "t2", "gamma0", "eps", "confidence"}


def _coerce(name: str, value, problems: list[str]):
    try:
        if name in _INT_FIELDS:
            return int(value)
        if name in _FLOAT_FIELDS:
            return float(value)
        if name == "kernel_counts" and value is not None:
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            return tuple(int(v) for v in value)
        if name == "figures":
            if isinstance(value, str):
                return value.lower() not in ("0", "false", "no")
            return bool(value)
    except (TypeError, ValueError):
        problems.append(f"{name}: cannot interpret {value!r}")
        return None
    return value


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge defaults, config file, environment, and explicit overrides."""
    problems: list[str] = []
    merged: dict = {}
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config: file {path} does not exist")
        base_dir = path.parent
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: not valid JSON ({exc.msg} at line {exc.lineno})")
        if not isinstance(doc, dict):
            raise ConfigError("config: document must be a JSON object")
        prop = doc.pop("property", None)
        if prop is not None:
            if not isinstance(prop, dict):
                problems.append("property: must be an object")
            else:
                for key in ("mode", "t1", "t2", "goal"):
                    if key in prop:
                        merged[key] = prop[key]
        merged.update(doc)

    known = {f.name for f in fields(ExperimentConfig)}
    for key in list(merged):
        if key not in known:
            problems.append(f"{key}: unknown configuration field")
            merged.pop(key)

    for field_name in known:
        raw = os.environ.get(ENV_PREFIX + field_name.upper())
        if raw is not None:
            merged[field_name] = raw
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})

    for key in list(merged):
        merged[key] = _coerce(key, merged[key], problems)

    cfg = ExperimentConfig(**{k: v for k, v in merged.items() if v is not None})

    if not cfg.model:
        problems.append("model: required")
    elif not cfg.model.startswith("bundled:"):
        resolved = (base_dir / cfg.model).resolve()
        if not resolved.exists():
            problems.append(f"model: file {resolved} does not exist")
        else:
            cfg = replace(cfg, model=str(resolved))
    if cfg.mode not in ("eventually", "globally"):
        problems.append(f"mode: must be 'eventually' or 'globally', got {cfg.mode!r}")
    if not 0 <= cfg.t1 <= cfg.t2:
        problems.append(f"t1/t2: need 0 <= t1 <= t2, got [{cfg.t1}, {cfg.t2}]")
    if cfg.t2 <= 0:
        problems.append("t2: window end must be positive")
    if not cfg.goal:
        problems.append("goal: required")
    if cfg.kernel_counts is None and not cfg.init.startswith("file:"):
        problems.append("kernel_counts: required unless init is a scheduler file")
    if cfg.gamma0 < 0:
        problems.append("gamma0: must be >= 0")
    if cfg.eps <= 0:
        problems.append("eps: must be > 0")
    if cfg.batch_k < 1:
        problems.append("batch_k: must be >= 1")
    if cfg.runs_per_q < 1:
        problems.append("runs_per_q: must be >= 1")
    if cfg.n_max < 1:
        problems.append("n_max: must be >= 1")
    if not 0 < cfg.confidence < 1:
        problems.append("confidence: must be in (0, 1)")
    if cfg.workers < 1:
        problems.append("workers: must be >= 1")
    if cfg.checkpoint_every < 0:
        problems.append("checkpoint_every: must be >= 0")
    if problems:
        raise ConfigError("invalid configuration: " + "; ".join(problems))
    return cfg


def resolve_model(spec: str) -> PopulationModel:
    if spec.startswith("bundled:"):
        name = spec.split(":", 1)[1]
        ref = resources.files("popsched").joinpath(f"data/{name}.json")
        try:
            text = ref.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ConfigError(f"model: no bundled model named {name!r}") from None
        from .model import parse_model

        return parse_model(text)
    return load_model(spec)


def _write_summary(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def run_experiment(cfg: ExperimentConfig, progress=None) -> dict:
    """Run one learning experiment and write its artifacts.

    Produces ``qtrace.csv``, ``scheduler_final.json``, ``summary.json``,
    optional checkpoints, and (unless disabled) ``qtrace.png`` in
    ``cfg.output_dir``.  Deterministic given the seed, apart from recorded
    wall times.
    """
    model = resolve_model(cfg.model)
    prop = make_property(model, cfg.mode, cfg.t1, cfg.t2, cfg.goal)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    checkpoint = None
    if cfg.checkpoint_every > 0:
        ckdir = out / "checkpoints"
        ckdir.mkdir(exist_ok=True)

        def checkpoint(iteration: int, sch: KernelScheduler) -> None:
            if iteration % cfg.checkpoint_every == 0:
                save_scheduler(sch, ckdir / f"scheduler_iter_{iteration:04d}.json")

    started = time.perf_counter()
    last_note = [started]

    def noting(iteration, sch):
        if checkpoint is not None:
            checkpoint(iteration, sch)
        if progress is not None and (time.perf_counter() - last_note[0] > 5.0
                                     or iteration == cfg.n_max):
            last_note[0] = time.perf_counter()
            progress(f"  iteration {iteration}/{cfg.n_max}")

    final, trace = gradient_ascent(model, prop, cfg.learn_config(),
                                   checkpoint=noting)
    wall = time.perf_counter() - started

    trace.write_csv(out / "qtrace.csv")
    save_scheduler(final, out / "scheduler_final.json")
    last = trace.rows[-1]
    summary = {
        "final_q": last.q,
        "ci_low": last.ci_low,
        "ci_high": last.ci_high,
        "confidence": cfg.confidence,
        "budget_runs": trace.budget_runs,
        "wall_time_s": round(wall, 3),
        "seed": cfg.seed,
        "iterations_to_half": trace.iterations_to(0.5),
        "config": asdict(cfg),
    }
    _write_summary(out / "summary.json", summary)
    if cfg.figures:
        from .report import plot_qtrace

        plot_qtrace(trace, out / "qtrace.png", title=f"init={cfg.init} seed={cfg.seed}")
    return summary


def export_heatmap(sch: KernelScheduler, times, grid_counts, path) -> list[tuple]:
    """Policy probabilities over an evaluation grid, written as CSV rows.

    The grid spans each variable's bounds with the requested number of
    evenly spaced (real-valued) points; a count of 1 evaluates the midpoint.
    Rows are ``(t, *coordinates, p(action) for each action)``.
    """
    if sch.basis.variables is None:
        raise ConfigError("scheduler file lacks variable metadata; cannot build a grid")
    for t in times:
        if not 0 <= t <= sch.horizon:
            raise ConfigError(f"heatmap time {t} outside [0, {sch.horizon}]")
    axes = []
    for var, count in zip(sch.basis.variables, grid_counts):
        if count == 1:
            axes.append(np.array([(var.lower + var.upper) / 2.0]))
        else:
            axes.append(np.linspace(var.lower, var.upper, count))
    rows = []
    for t in times:
        for point in np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes)):
            probs = sch.action_probabilities(tuple(point), t)
            rows.append((t, *point, *probs))
    names = [v.name for v in sch.basis.variables]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", *names, *(f"p_{a}" for a in sch.actions)])
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
    return rows


def run_suite(config_dir: str | Path, output_dir: str | Path, figures: bool = True,
              progress=None) -> tuple[list[dict], list[str]]:
    """Run every ``*.json`` config in a directory; one summary row each."""
    config_dir = Path(config_dir)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    failures: list[str] = []
    traces: dict[str, QTrace] = {}
    for cfg_path in sorted(config_dir.glob("*.json")):
        name = cfg_path.stem
        try:
            cfg = load_config(cfg_path, {"output_dir": str(output_dir / name),
                                         "figures": figures})
            if progress is not None:
                progress(f"suite: running {name}")
            summary = run_experiment(cfg, progress=progress)
            rows.append({
                "name": name,
                "init": cfg.init,
                "final_q": summary["final_q"],
                "ci_low": summary["ci_low"],
                "ci_high": summary["ci_high"],
                "iterations_to_half": summary["iterations_to_half"],
            })
            qtrace_csv = output_dir / name / "qtrace.csv"
            if qtrace_csv.exists():
                traces[name] = _read_trace(qtrace_csv)
        except Exception as exc:  # keep going; report at the end
            failures.append(f"{name}: {exc}")
    with open(output_dir / "suite_summary.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["name", "init", "final_q", "ci_low", "ci_high",
                            "iterations_to_half"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    if figures and traces:
        from .report import plot_qtrace_overlay

        plot_qtrace_overlay(traces, output_dir / "suite_qtraces.png")
    return rows, failures


def _read_trace(path: Path) -> QTrace:
    from .learn import TraceRow

    rows = []
    with open(path, encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(TraceRow(int(rec["iteration"]), float(rec["q"]),
                                 float(rec["ci_low"]), float(rec["ci_high"]),
                                 float(rec["gamma"]), 0.0))
    return QTrace(tuple(rows), 0)


# ---------------------------------------------------------------------------
# argument parsing


def _add_property_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=["eventually", "globally"], required=True)
    p.add_argument("--t1", type=float, required=True, help="window start")
    p.add_argument("--t2", type=float, required=True, help="window end")
    p.add_argument("--goal", required=True, help="goal predicate over variables")


def _scheduler_from_flags(args, model: PopulationModel, horizon: float):
    if args.scheduler:
        return load_scheduler(args.scheduler)
    if getattr(args, "constant", None):
        return ConstantScheduler(model.actions, args.constant)
    basis = make_grid_basis(model, horizon, (1,) * (model.dimension + 1))
    return initial_scheduler(basis, model.actions, "uniform")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="popsched",
        description="Learn time-dependent policies for population Markov decision processes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_learn = sub.add_parser("learn", help="run a learning experiment from a config file")
    p_learn.add_argument("--config", required=True)
    for flag, kind in (("--seed", int), ("--gamma0", float), ("--eps", float),
                       ("--batch-k", int), ("--runs-per-q", int), ("--n-max", int),
                       ("--workers", int), ("--checkpoint-every", int)):
        p_learn.add_argument(flag, type=kind, default=None)
    p_learn.add_argument("--init", default=None)
    p_learn.add_argument("--kernel-counts", default=None)
    p_learn.add_argument("--output-dir", default=None)
    p_learn.add_argument("--no-figures", action="store_true")
    p_learn.add_argument("--quiet", action="store_true")

    p_est = sub.add_parser("estimate", help="one-shot probability estimate")
    p_est.add_argument("--model", required=True)
    _add_property_flags(p_est)
    p_est.add_argument("--scheduler", help="scheduler JSON file")
    p_est.add_argument("--constant", help="use a constant policy with this action")
    p_est.add_argument("--runs", type=int, default=1000)
    p_est.add_argument("--seed", type=int, default=0)
    p_est.add_argument("--confidence", type=float, default=0.95)
    p_est.add_argument("--workers", type=int, default=1)
    p_est.add_argument("--dump-trajectories", help="CSV path for sampled runs")
    p_est.add_argument("--dump-runs", type=int, default=10)

    p_exact = sub.add_parser("exact", help="explicit-state window probability")
    p_exact.add_argument("--model", required=True)
    _add_property_flags(p_exact)
    p_exact.add_argument("--scheduler", help="scheduler JSON file")
    p_exact.add_argument("--constant", help="use a constant policy with this action")
    p_exact.add_argument("--time-step", type=float, default=0.01)
    p_exact.add_argument("--cap", type=int, default=20000)

    p_heat = sub.add_parser("heatmap", help="export policy probabilities on a grid")
    p_heat.add_argument("--scheduler", required=True)
    p_heat.add_argument("--times", help="comma-separated time points")
    p_heat.add_argument("--grid", help="comma-separated per-variable point counts")
    p_heat.add_argument("--out", required=True, help="CSV output path")
    p_heat.add_argument("--action", help="action shown in the figure (default: first)")
    p_heat.add_argument("--no-figures", action="store_true")

    p_suite = sub.add_parser("suite", help="run every config in a directory")
    p_suite.add_argument("--dir", required=True)
    p_suite.add_argument("--output-dir", required=True)
    p_suite.add_argument("--no-figures", action="store_true")
    p_suite.add_argument("--quiet", action="store_true")

    p_val = sub.add_parser("validate", help="check a config file and its model")
    p_val.add_argument("--config", required=True)

    return parser


def _cmd_learn(args) -> int:
    overrides = {
        "seed": args.seed, "gamma0": args.gamma0, "eps": args.eps,
        "batch_k": args.batch_k, "runs_per_q": args.runs_per_q,
        "n_max": args.n_max, "workers": args.workers,
        "checkpoint_every": args.checkpoint_every, "init": args.init,
        "kernel_counts": args.kernel_counts, "output_dir": args.output_dir,
    }
    if args.no_figures:
        overrides["figures"] = False
    cfg = load_config(args.config, overrides)
    progress = None if args.quiet else lambda msg: print(msg, file=sys.stderr)
    summary = run_experiment(cfg, progress=progress)
    print(json.dumps({k: summary[k] for k in
                      ("final_q", "ci_low", "ci_high", "budget_runs", "seed")}))
    return 0


def _cmd_estimate(args) -> int:
    model = resolve_model(args.model)
    prop = make_property(model, args.mode, args.t1, args.t2, args.goal)
    sch = _scheduler_from_flags(args, model, prop.t_end)
    result = estimate_probability(model, sch, prop, args.runs, args.seed,
                                  confidence=args.confidence, workers=args.workers)
    if args.dump_trajectories:
        with open(args.dump_trajectories, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["run_id", "step", "time", "action",
                             *model.variable_names])
            for i in range(min(args.dump_runs, args.runs)):
                tr = simulate(model, sch, prop.t_end, rng_from(args.seed, i))
                writer.writerows(trajectory_rows(tr, i))
    print(json.dumps({
        "estimate": result.estimate, "ci_low": result.ci_low,
        "ci_high": result.ci_high, "successes": result.successes,
        "runs": result.runs, "confidence": result.confidence, "seed": args.seed,
    }))
    return 0


def _cmd_exact(args) -> int:
    model = resolve_model(args.model)
    prop = make_property(model, args.mode, args.t1, args.t2, args.goal)
    sch = _scheduler_from_flags(args, model, prop.t_end)
    value = exact_value(model, sch, prop, args.time_step, cap=args.cap)
    print(f"{value:.6f}")
    return 0


def _cmd_heatmap(args) -> int:
    sch = load_scheduler(args.scheduler)
    if args.times:
        times = [float(v) for v in args.times.split(",") if v]
    else:
        times = [f * sch.horizon for f in PANEL_FRACTIONS]
    nvars = sch.basis.dimension
    if args.grid:
        counts = [int(v) for v in args.grid.split(",") if v]
        if len(counts) != nvars:
            raise ConfigError(f"grid: need {nvars} counts, got {len(counts)}")
    else:
        counts = [26] * nvars
    export_heatmap(sch, times, counts, args.out)
    if not args.no_figures and nvars <= 2:
        from .report import plot_heatmap_panels

        action = args.action or sch.actions[0]
        if action not in sch.actions:
            raise ConfigError(f"action: unknown action {action!r}")
        axes = []
        for var, count in zip(sch.basis.variables, counts):
            axes.append(np.array([(var.lower + var.upper) / 2.0]) if count == 1
                        else np.linspace(var.lower, var.upper, count))
        plot_heatmap_panels(sch, action, times, axes,
                            Path(args.out).with_suffix(".png"))
    return 0


def _cmd_suite(args) -> int:
    progress = None if args.quiet else lambda msg: print(msg, file=sys.stderr)
    rows, failures = run_suite(args.dir, args.output_dir,
                               figures=not args.no_figures, progress=progress)
    if rows:
        header = f"{'name':30s} {'init':20s} {'final_q':>8s} {'ci':>17s} {'to_0.5':>7s}"
        print(header)
        for row in rows:
            ci = f"[{row['ci_low']:.3f},{row['ci_high']:.3f}]"
            reach = row["iterations_to_half"]
            print(f"{row['name']:30s} {row['init']:20s} {row['final_q']:8.4f} "
                  f"{ci:>17s} {('-' if reach is None else str(reach)):>7s}")
    for failure in failures:
        print(f"FAILED {failure}", file=sys.stderr)
    return 2 if failures else 0


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    model = resolve_model(cfg.model)
    make_property(model, cfg.mode, cfg.t1, cfg.t2, cfg.goal)
    if cfg.kernel_counts is not None:
        make_grid_basis(model, cfg.t2, cfg.kernel_counts)
    print(f"OK: {args.config} (model {cfg.model!r}, "
          f"{len(model.variables)} variables, {len(model.actions)} actions)")
    return 0


_COMMANDS = {
    "learn": _cmd_learn,
    "estimate": _cmd_estimate,
    "exact": _cmd_exact,
    "heatmap": _cmd_heatmap,
    "suite": _cmd_suite,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except StateSpaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
