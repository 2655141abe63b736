"""Command-line interface: generate primitives, search, optimize, plan, bench.

Exit codes: 0 on success, 1 when the planner finds no solution (or a checked
trajectory is infeasible), 2 on usage or schema errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import run_benchmark, summarize
from .dbastar import check_db_bounded, db_astar
from .dynamics import ConfigurationError, make_system
from .planner import PlannerConfig
from .primitives import (
    GenerationError,
    LibraryFormatError,
    PrimitiveLibrary,
    compute_delta,
    generate_primitives,
    load_library,
    save_library,
    sort_by_dispersion,
)
from .scenario import (
    SchemaError,
    load_scenario,
    load_trajectory,
    save_trajectory,
    write_results_csv,
    write_timelines_json,
)
from .trajopt import OptProblem, feasibility_report, optimize_fixed_T


def _cmd_gen_primitives(args) -> int:
    system = make_system(args.system, args.variant)
    motions = generate_primitives(
        system, args.count, piece_length=args.piece_length, seed=args.seed, t_max=args.t_max
    )
    from .metric import StateMetric

    metric = StateMetric()
    motions = sort_by_dispersion(metric, system, motions)
    lib = PrimitiveLibrary(system.name, system.variant, metric, tuple(motions))
    save_library(lib, args.out)
    print(f"wrote {len(motions)} primitives to {args.out}")
    return 0


def _cmd_db_astar(args) -> int:
    scenario = load_scenario(args.scenario)
    lib = load_library(args.primitives, scenario.system)
    motions = list(lib.motions)
    delta = args.delta
    if delta is None:
        delta = compute_delta(
            scenario.metric, scenario.system, motions, min(10, len(motions)), seed=args.seed
        )
    sol = db_astar(
        scenario.start,
        scenario.goal,
        scenario.env,
        scenario.shape,
        scenario.system,
        scenario.metric,
        motions,
        delta,
        alpha=args.alpha,
        c_max=args.max_cost,
    )
    if sol is None:
        print("infeasible")
        return 1
    report = check_db_bounded(
        scenario.system, scenario.metric, scenario.env, scenario.shape,
        sol.states, sol.controls, delta, scenario.start, scenario.goal,
    )
    save_trajectory(
        args.out, scenario.system, sol.states, sol.controls, cost=sol.cost,
        residuals={"delta": delta, "max_dynamics_gap": report.max_dynamics_gap},
    )
    print(f"solution cost {sol.cost:.2f} s ({sol.T} steps, delta {delta:.3f}) -> {args.out}")
    return 0


def _cmd_optimize(args) -> int:
    scenario = load_scenario(args.scenario)
    guess = load_trajectory(args.guess)
    if (guess["system"], guess["variant"]) != (scenario.system.name, scenario.system.variant):
        raise SchemaError(f"{args.guess}: trajectory is for {guess['system']}/{guess['variant']}")
    T = args.T or len(guess["actions"])
    from .trajopt import optimize_with_time_search, resample_guess

    X0, U0 = guess["states"], guess["actions"]
    problem = OptProblem(
        system=scenario.system,
        T=len(U0),
        x_s=scenario.start,
        x_f=scenario.goal,
        X0=X0,
        U0=U0,
        env=scenario.env,
        shape=scenario.shape,
    )
    if args.time_search:
        res = optimize_with_time_search(problem, T)
    else:
        if T != len(U0):
            X0, U0 = resample_guess(scenario.system, X0, U0, T)
            problem = OptProblem(
                system=scenario.system, T=T, x_s=scenario.start, x_f=scenario.goal,
                X0=X0, U0=U0, env=scenario.env, shape=scenario.shape,
            )
        res = optimize_fixed_T(problem)
        res = res if res.converged else None
    if res is None:
        print("optimization failed to converge")
        return 1
    save_trajectory(args.out, scenario.system, res.states, res.controls,
                    cost=res.cost, residuals=res.residuals)
    print(f"converged at T={res.T} (cost {res.cost:.2f} s) -> {args.out}")
    return 0


def _cmd_plan(args) -> int:
    from .bench import run_trial

    scenario = load_scenario(args.scenario)
    lib = load_library(args.primitives, scenario.system)
    config = PlannerConfig(timeout=args.timeout, seed=args.seed,
                           max_iterations=args.max_iterations)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0

    def emit(sol):
        nonlocal count
        count += 1
        save_trajectory(
            out_dir / f"solution_{count:03d}.yaml",
            scenario.system,
            sol.states,
            sol.controls,
            cost=sol.cost,
            residuals=sol.residuals,
        )
        print(f"solution {count}: cost {sol.cost:.2f} s at {sol.found_at:.1f} s")

    row = run_trial(scenario, list(lib.motions), config, on_solution=emit)
    trace = row["trace"]
    (out_dir / "trace.json").write_text(json.dumps(trace.deterministic_dict(), indent=1, sort_keys=True))
    (out_dir / "trace_timings.json").write_text(json.dumps(trace.timing_dict(), indent=1, sort_keys=True))
    if not row["success"]:
        print("no solution found")
        return 1
    return 0


def _cmd_check(args) -> int:
    scenario = load_scenario(args.scenario)
    traj = load_trajectory(args.trajectory)
    if (traj["system"], traj["variant"]) != (scenario.system.name, scenario.system.variant):
        raise SchemaError(f"{args.trajectory}: trajectory is for {traj['system']}/{traj['variant']}")
    report = feasibility_report(
        scenario.system, scenario.env, scenario.shape,
        traj["states"], traj["actions"], scenario.start, scenario.goal, scenario.metric,
    )
    print("feasibility:", "ok" if report.ok else "NOT ok")
    for key, val in report.as_dict().items():
        print(f"  {key}: {val}")
    ok = report.ok
    if args.delta is not None:
        db = check_db_bounded(
            scenario.system, scenario.metric, scenario.env, scenario.shape,
            traj["states"], traj["actions"], args.delta, scenario.start, scenario.goal,
        )
        print(f"discontinuity-bounded (delta={args.delta}):", "ok" if db.ok else "NOT ok")
        for cond, idx in db.violations[:20]:
            print(f"  violated {cond} at index {idx}")
        ok = db.ok
    return 0 if ok else 1


def _cmd_bench(args) -> int:
    scenario_paths = args.scenario
    library_paths = args.primitives
    if len(library_paths) == 1 and len(scenario_paths) > 1:
        library_paths = library_paths * len(scenario_paths)
    if len(library_paths) != len(scenario_paths):
        raise SchemaError("need one --primitives per --scenario (or a single shared one)")
    rows = run_benchmark(
        scenario_paths,
        library_paths,
        trials=args.trials,
        timeout=args.timeout,
        master_seed=args.seed,
        workers=args.workers,
        max_iterations=args.max_iterations,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_results_csv(rows, out_dir / "results.csv")
    write_timelines_json(
        [
            {"scenario": r["scenario"], "trial": r["trial"], "seed": r["seed"],
             "timeline": [[t, J] for t, J in r["timeline"]]}
            for r in rows
        ],
        out_dir / "timelines.json",
    )
    for name, s in summarize(rows).items():
        def fmt(v):
            return "-" if v is None else f"{v:.2f}"
        print(f"{name}: p={s['p']:.2f} t_first={fmt(s['t_first'])} "
              f"J_first={fmt(s['J_first'])} J_final={fmt(s['J_final'])}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinoplan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-primitives", help="generate a motion-primitive library")
    p.add_argument("--system", required=True)
    p.add_argument("--variant", default="v0")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--piece-length", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-max", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_primitives)

    p = sub.add_parser("db-astar", help="run the bounded-discontinuity search once")
    p.add_argument("--scenario", required=True)
    p.add_argument("--primitives", required=True)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--max-cost", type=float, default=np.inf)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_db_astar)

    p = sub.add_parser("optimize", help="repair/optimize a guess trajectory")
    p.add_argument("--scenario", required=True)
    p.add_argument("--guess", required=True)
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--time-search", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("plan", help="run the anytime planner")
    p.add_argument("--scenario", required=True)
    p.add_argument("--primitives", required=True)
    p.add_argument("--timeout", type=float, default=300.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("check", help="check a trajectory against a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("bench", help="run the benchmark protocol")
    p.add_argument("--scenario", action="append", required=True)
    p.add_argument("--primitives", action="append", required=True)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--timeout", type=float, default=300.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, LibraryFormatError, ConfigurationError, GenerationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
