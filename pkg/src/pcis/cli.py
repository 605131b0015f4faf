"""``pcis`` command-line entry point.

Exit codes: 0 when the computed set is nonempty, 2 when it is empty, 1 on error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import io
from .discretize import Abstraction, abstract_model, approx_finite_pcis
from .finite_horizon import build_finite_lp, largest_finite_pcis
from .generators import EXAMPLES, example_document
from .infinite_horizon import (
    DEFAULT_TOL,
    _infinite_milp,
    check_existence_conditions,
    infinite_pcis_via_rcis,
    largest_infinite_pcis,
    rcis_discrete,
)
from .model import DiscreteModel, LoadedModel, ModelError, load_model, parse_model, restrict
from .results import PcisResult
from .sim import simulate_continuous, simulate_discrete
from .solver import to_lp_format

log = logging.getLogger("pcis")

EXIT_OK, EXIT_ERROR, EXIT_EMPTY = 0, 1, 2


@dataclass
class RunConfig:
    command: str
    model: str | None = None
    example: str | None = None
    epsilon: float | None = None
    horizon: int | None = None  # None means infinite
    delta: float | None = None
    method: str | None = None
    big_m: float = 2.0
    tol: float = DEFAULT_TOL
    seed: int = 0
    trials: int = 1000
    threads: int = 1
    ignore_error: bool = False
    out_dir: Path = Path(".")
    svg: bool = False
    dump_lp: Path | None = None
    solver: str = "auto"
    lp_solver: str = "auto"
    x0: list = field(default_factory=list)
    target_set: list | None = None
    slack: float | None = None

    def check(self) -> None:
        if self.epsilon is not None and not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("--epsilon must lie in [0, 1]")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("--horizon must be a positive integer or 'inf'")
        if self.delta is not None and not self.delta > 0:
            raise ValueError("--delta must be positive")
        if self.trials < 1:
            raise ValueError("--trials must be at least 1")


def _horizon(text: str) -> int | None:
    if text.lower() in ("inf", "infinity"):
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"horizon must be an integer or 'inf', got {text!r}") from None


def _load(cfg: RunConfig) -> LoadedModel:
    if (cfg.model is None) == (cfg.example is None):
        raise ValueError("give exactly one of --model and --example")
    if cfg.model is not None:
        return load_model(cfg.model)
    return parse_model(example_document(cfg.example))


def _candidates(loaded: LoadedModel) -> tuple:
    model = loaded.model
    return loaded.safe_set if loaded.safe_set is not None else model.states


def _abstraction(cfg: RunConfig, loaded: LoadedModel) -> Abstraction:
    if loaded.region is None:
        raise ValueError("continuous model needs a 'region' field")
    grid = loaded.grid or {}
    if cfg.delta is None and not grid:
        raise ValueError("continuous model needs --delta or a 'grid' field")
    if cfg.delta is not None:
        return abstract_model(loaded.model, loaded.region, cfg.delta, workers=cfg.threads)
    return abstract_model(loaded.model, loaded.region, state_cells=grid["state_cells"],
                          control_cells=grid["control_cells"], workers=cfg.threads)


def _need(value, flag: str):
    if value is None:
        raise ValueError(f"{flag} is required")
    return value


def _emit(cfg: RunConfig, result: PcisResult, loaded: LoadedModel, **meta) -> int:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    io.write_result_csv(result, out / "result.csv")
    io.write_json(io.result_metadata(result, model=loaded.name, **meta), out / "result.json")
    if "abstraction" in result.extra:
        io.write_grid_csv(result, out / "grid.csv")
        if cfg.svg:
            if result.extra["abstraction"].state_grid.dim <= 2:
                (out / "heatmap.svg").write_text(io.heatmap_svg(result))
            else:
                log.warning("no heatmap for state dimension > 2; CSV only")
    elif cfg.svg:
        log.warning("heatmaps need a gridded state space; CSV only")
    for d in result.diagnostics:
        log.warning("%s", d)
    label = "" if result.certified else " (uncertified)"
    print(f"{len(result.states)}/{len(result.candidates)} states kept{label}; "
          f"iterations={result.iterations} trace={result.trace}")
    return EXIT_EMPTY if result.empty else EXIT_OK


def _finite_result(cfg: RunConfig, loaded: LoadedModel) -> PcisResult:
    eps = _need(cfg.epsilon, "--epsilon")
    N = _need(cfg.horizon, "--horizon (finite)")
    if isinstance(loaded.model, DiscreteModel):
        Q = _candidates(loaded)
        method = cfg.method or "dp"
        if cfg.dump_lp is not None:
            cfg.dump_lp.write_text(to_lp_format(build_finite_lp(loaded.model, Q, N)))
        return largest_finite_pcis(loaded.model, Q, N, eps, method=method, lp_backend=cfg.lp_solver)
    if cfg.method not in (None, "dp"):
        raise ValueError("gridded continuous models use --method dp")
    ab = _abstraction(cfg, loaded)
    return approx_finite_pcis(None, None, N, eps, ignore_error=cfg.ignore_error, abstraction=ab)


def cmd_finite(cfg: RunConfig) -> int:
    loaded = _load(cfg)
    result = _finite_result(cfg, loaded)
    extra = {}
    if "abstraction" in result.extra:
        extra = {"delta": result.extra["delta"], "volume": result.extra["volume"],
                 "tau0_delta_full": result.extra["tau0_delta_full"]}
    return _emit(cfg, result, loaded, **extra)


def _discrete_target(cfg: RunConfig, loaded: LoadedModel) -> tuple[DiscreteModel, tuple, dict]:
    """Discrete model and candidate set; continuous models go through their grid abstraction."""
    if isinstance(loaded.model, DiscreteModel):
        return loaded.model, tuple(_candidates(loaded)), {}
    ab = _abstraction(cfg, loaded)
    return ab.model, ab.cell_states, {"abstraction": ab}


def _infinite_result(cfg: RunConfig, loaded: LoadedModel) -> PcisResult:
    eps = _need(cfg.epsilon, "--epsilon")
    model, Q, extra = _discrete_target(cfg, loaded)
    if cfg.dump_lp is not None:
        cfg.dump_lp.write_text(to_lp_format(_infinite_milp(restrict(model, Q), cfg.big_m)[0]))
    if cfg.method == "rcis-seeded":
        result = infinite_pcis_via_rcis(model, Q, eps)
    elif cfg.method in (None, "milp", "vi"):
        result = largest_infinite_pcis(model, Q, eps, method=cfg.method, tol=cfg.tol,
                                       big_m=cfg.big_m, backend=cfg.solver)
    else:
        raise ValueError(f"unknown --method {cfg.method!r}; expected milp, vi or rcis-seeded")
    if extra:
        # no infinite-horizon abstraction error bound exists
        result.certified = False
        result.extra.update(extra)
    return result


def cmd_infinite(cfg: RunConfig) -> int:
    loaded = _load(cfg)
    result = _infinite_result(cfg, loaded)
    log.info("%s: %d iteration(s), trace %s", result.method, result.iterations, result.trace)
    return _emit(cfg, result, loaded)


def cmd_rcis(cfg: RunConfig) -> int:
    loaded = _load(cfg)
    model, Q, extra = _discrete_target(cfg, loaded)
    kept = rcis_discrete(model, Q)
    states = tuple(x for x in Q if x in kept)
    result = PcisResult(
        states=states, probabilities={x: float(x in kept) for x in Q}, policy=None,
        trace=[len(Q), len(states)], epsilon=1.0, horizon=1, method="rcis",
        certified=not extra, candidates=tuple(Q), extra=dict(extra),
        diagnostics=[] if states else ["empty robust controlled invariant set"],
    )
    return _emit(cfg, result, loaded)


def cmd_check_existence(cfg: RunConfig) -> int:
    loaded = _load(cfg)
    eps = _need(cfg.epsilon, "--epsilon")
    model, Q, _ = _discrete_target(cfg, loaded)
    seed = cfg.target_set if cfg.target_set is not None else sorted(rcis_discrete(model, Q), key=model.index)
    report = check_existence_conditions(model, Q, seed, eps)
    report.update(epsilon=eps, seed_set=list(seed))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    io.write_json(report, cfg.out_dir / "existence.json")
    print(f"necessary: {report['necessary_holds']}  sufficient: {report['sufficient_holds']}")
    return EXIT_OK


def _parse_point(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def cmd_simulate(cfg: RunConfig) -> int:
    loaded = _load(cfg)
    if cfg.horizon is None:
        result = _infinite_result(cfg, loaded)
    else:
        result = _finite_result(cfg, loaded)
    if result.empty:
        print("computed set is empty; nothing to simulate")
        return EXIT_EMPTY
    if isinstance(loaded.model, DiscreteModel) and "abstraction" not in result.extra:
        starts = cfg.x0 or list(result.states)
        report = simulate_discrete(loaded.model, result.policy, result.states, starts, cfg.horizon,
                                   cfg.trials, cfg.seed, computed=result.probabilities)
    else:
        if cfg.horizon is None:
            raise ValueError("continuous simulation needs a finite --horizon")
        if not cfg.x0:
            raise ValueError("continuous simulation needs at least one --x0 point")
        ab = result.extra["abstraction"]
        points = [_parse_point(p) for p in cfg.x0]
        computed = {}
        for p in points:
            cell = ab.state_grid.locate(p)
            computed[",".join(f"{v:g}" for v in p)] = result.probabilities.get(f"q{cell}", float("nan"))
        slack = result.tau_delta if cfg.slack is None else cfg.slack
        report = simulate_continuous(ab.continuous, ab, result.policy, None, points, cfg.horizon,
                                     cfg.trials, cfg.seed, computed=computed, slack=slack)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    io.write_sim_csv(report, out / "sim.csv")
    io.write_json(io.result_metadata(result, model=loaded.name, simulation=report.metadata()), out / "sim.json")
    for r in report.rows:
        print(f"{r.state}: computed={r.computed_p:.6g} empirical={r.empirical_p:.6g} "
              f"+/-{r.ci_halfwidth:.3g} {r.verdict}")
    return EXIT_OK


def cmd_examples(cfg: RunConfig, name: str) -> int:
    doc = example_document(name)
    text = json.dumps(doc, indent=1) + "\n"
    if cfg.out_dir == Path("."):
        sys.stdout.write(text)
    else:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        (cfg.out_dir / f"{name}.json").write_text(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("model")
    src.add_argument("--model", help="model JSON file")
    src.add_argument("--example", choices=sorted(EXAMPLES), help="built-in example model")
    run = common.add_argument_group("run")
    run.add_argument("--epsilon", type=float, help="probability threshold in [0, 1]")
    run.add_argument("--horizon", type=_horizon, default=None, help="N, or 'inf'")
    run.add_argument("--delta", type=float, help="grid size for continuous models")
    run.add_argument("--method", help="dp|lp (finite); milp|vi|rcis-seeded (infinite)")
    run.add_argument("--big-m", type=float, default=2.0, help="MILP big-M constant (> 1)")
    run.add_argument("--tol", type=float, default=DEFAULT_TOL, help="value-iteration tolerance")
    run.add_argument("--solver", choices=("auto", "bnb", "highs"), default="auto", help="MILP backend")
    run.add_argument("--lp-solver", choices=("auto", "simplex", "highs"), default="auto", help="LP backend")
    run.add_argument("--seed", type=int, default=0, help="simulation seed")
    run.add_argument("--trials", type=int, default=1000, help="simulation trials")
    run.add_argument("--threads", type=int, default=1, help="worker cap for abstraction building")
    run.add_argument("--ignore-approx-error", action="store_true",
                     help="skip the grid error correction; results are uncertified")
    run.add_argument("--x0", action="append", default=[], help="initial state (repeatable)")
    run.add_argument("--target-set", help="comma-separated RCIS for check-existence")
    run.add_argument("--slack", type=float, help="extra tolerance for simulation verdicts")
    out = common.add_argument_group("output")
    out.add_argument("--out-dir", type=Path, default=Path("."), help="directory for result files")
    out.add_argument("--svg", action="store_true", help="write a heatmap for 1-D/2-D grids")
    out.add_argument("--dump-lp", type=Path, help="write the LP/MILP in LP-format text")
    out.add_argument("-v", "--verbose", action="store_true", help="log each iteration")

    p = argparse.ArgumentParser(prog="pcis", description="Probabilistic controlled invariant sets.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("finite", parents=[common], help="largest N-step epsilon-PCIS")
    sub.add_parser("infinite", parents=[common], help="largest infinite-horizon epsilon-PCIS")
    sub.add_parser("rcis", parents=[common], help="largest robust controlled invariant set")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo check of a computed policy")
    sub.add_parser("check-existence", parents=[common], help="existence conditions given an RCIS")
    ex = sub.add_parser("examples", parents=[common], help="write a built-in example model file")
    ex.add_argument("name", help=f"one of {', '.join(sorted(EXAMPLES))}")
    return p


def _config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(
        command=args.command, model=args.model, example=args.example, epsilon=args.epsilon,
        horizon=args.horizon, delta=args.delta, method=args.method, big_m=args.big_m, tol=args.tol,
        seed=args.seed, trials=args.trials, threads=max(1, args.threads),
        ignore_error=args.ignore_approx_error, out_dir=args.out_dir, svg=args.svg,
        dump_lp=args.dump_lp, solver=args.solver, lp_solver=args.lp_solver, x0=args.x0,
        target_set=None if args.target_set is None else args.target_set.split(","),
        slack=args.slack,
    )
    cfg.check()
    return cfg


def _setup_logging(cfg: RunConfig, verbose: bool) -> None:
    root = logging.getLogger("pcis")
    root.handlers.clear()
    root.setLevel(logging.INFO)
    root.propagate = False
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    root.addHandler(console)
    if cfg.command != "examples":
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(cfg.out_dir / "run.log", mode="w")
        fh.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(fh)


COMMANDS = {
    "finite": cmd_finite,
    "infinite": cmd_infinite,
    "rcis": cmd_rcis,
    "simulate": cmd_simulate,
    "check-existence": cmd_check_existence,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        _setup_logging(cfg, args.verbose)
        if cfg.command == "examples":
            return cmd_examples(cfg, args.name)
        return COMMANDS[cfg.command](cfg)
    except (ValueError, ModelError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        for h in list(logging.getLogger("pcis").handlers):
            h.close()
            logging.getLogger("pcis").removeHandler(h)


if __name__ == "__main__":
    sys.exit(main())
