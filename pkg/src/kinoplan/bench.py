"""Benchmark trial runner: per-(scenario, trial) planning under a wall clock.

Trials run in separate worker processes; each trial's seed is a pure function
of (master seed, scenario name, trial index) so any single trial can be
reproduced in isolation.  A crash inside a trial is recorded as a failure and
never aborts the batch.
"""

from __future__ import annotations

import hashlib
import statistics
from concurrent.futures import ProcessPoolExecutor

from .planner import PlannerConfig, kmp_db_astar
from .primitives import load_library
from .scenario import Scenario, load_scenario


def trial_seed(master_seed: int, scenario_name: str, trial: int) -> int:
    digest = hashlib.sha256(f"{master_seed}:{scenario_name}:{trial}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def run_trial(
    scenario: Scenario,
    library,
    config: PlannerConfig,
    on_solution=None,
) -> dict:
    """One planning trial; returns the CSV row fields plus the raw timeline."""
    timeline: list[tuple[float, float]] = []

    def record(sol):
        timeline.append((sol.found_at, sol.cost))
        if on_solution is not None:
            on_solution(sol)

    best, trace = kmp_db_astar(
        scenario.system,
        scenario.env,
        scenario.shape,
        scenario.metric,
        scenario.start,
        scenario.goal,
        list(library),
        config,
        on_solution=record,
    )
    success = bool(timeline)
    return {
        "scenario": scenario.name,
        "seed": config.seed,
        "success": success,
        "t_first": timeline[0][0] if success else None,
        "J_first": timeline[0][1] if success else None,
        "J_final": timeline[-1][1] if success else None,
        "timeline": timeline,
        "trace": trace,
    }


def _worker(args) -> dict:
    scenario_path, library_path, trial, seed, timeout, max_iterations = args
    try:
        scenario = load_scenario(scenario_path)
        library = load_library(library_path, scenario.system)
        config = PlannerConfig(timeout=timeout, seed=seed, max_iterations=max_iterations)
        row = run_trial(scenario, list(library.motions), config)
        row["trial"] = trial
        row.pop("trace", None)
        return row
    except Exception as e:  # a crashed trial is a failed trial
        return {
            "scenario": str(scenario_path),
            "trial": trial,
            "seed": seed,
            "success": False,
            "t_first": None,
            "J_first": None,
            "J_final": None,
            "timeline": [],
            "error": f"{type(e).__name__}: {e}",
        }


def run_benchmark(
    scenario_paths: list,
    library_paths: list,
    trials: int,
    timeout: float,
    master_seed: int = 0,
    workers: int = 1,
    max_iterations: int | None = None,
) -> list[dict]:
    """Run trials x scenarios; returns one result row per (scenario, trial)."""
    if trials < 1:
        raise ValueError("need at least one trial")
    jobs = []
    for spath, lpath in zip(scenario_paths, library_paths):
        name = load_scenario(spath).name
        for trial in range(trials):
            jobs.append(
                (spath, lpath, trial, trial_seed(master_seed, name, trial), timeout, max_iterations)
            )
    if workers <= 1:
        rows = [_worker(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_worker, jobs))
    # fill in scenario display names for crashed rows recorded under the path
    return rows


def summarize(rows: list[dict]) -> dict:
    """Per-scenario success rate and medians over the successful trials."""
    by_scenario: dict[str, list[dict]] = {}
    for row in rows:
        by_scenario.setdefault(row["scenario"], []).append(row)
    out = {}
    for name, group in sorted(by_scenario.items()):
        succ = [r for r in group if r["success"]]
        out[name] = {
            "trials": len(group),
            "p": len(succ) / len(group),
            "t_first": statistics.median(r["t_first"] for r in succ) if succ else None,
            "J_first": statistics.median(r["J_first"] for r in succ) if succ else None,
            "J_final": statistics.median(r["J_final"] for r in succ) if succ else None,
        }
    return out
