"""Throughput comparison of the monthly-pass kernels.

Runs the same replicates through every importable backend, reports
simulated months per second and the compiled-vs-python speedup, and
checks that the backends produce identical traces while doing so.

Usage: python3 benchmarks/bench_backends.py [--seed-count N] [--duration M]
"""

import argparse
import time

from incarsim.config import (
    PopulationConfig,
    build_population,
    build_scenario,
    build_transmission,
    default_run_config,
)
from incarsim.engine import available_backends, run_replicate


def build_workload(args):
    population = build_population(
        PopulationConfig(
            seed_count=args.seed_count,
            horizon_years=args.horizon_years,
            burn_in_years=args.burn_in_years,
            rng_seed=args.rng_seed,
        )
    )
    config = default_run_config()
    scenario_config = config.scenario("black")
    scenario_config = type(scenario_config)(
        label="bench",
        sentence=scenario_config.sentence,
        initial_prevalence=scenario_config.initial_prevalence,
        duration_months=args.duration,
        n_replicates=args.replicates,
    )
    transmission = build_transmission(config.transmission)
    scenario = build_scenario(
        scenario_config, population, transmission, config.master_seed
    )
    return population, scenario


def time_backend(population, scenario, backend, replicates):
    started = time.perf_counter()
    traces = [
        run_replicate(population, scenario, index, backend=backend)
        for index in range(replicates)
    ]
    elapsed = time.perf_counter() - started
    return elapsed, traces


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed-count", type=int, default=400)
    parser.add_argument("--horizon-years", type=int, default=160)
    parser.add_argument("--burn-in-years", type=int, default=110)
    parser.add_argument("--rng-seed", type=int, default=7)
    parser.add_argument("--duration", type=int, default=240)
    parser.add_argument("--replicates", type=int, default=3)
    args = parser.parse_args()

    population, scenario = build_workload(args)
    n_agents = len(population.agents)
    total_months = args.duration * args.replicates
    print(
        f"workload: {n_agents} agents, {args.duration} months x "
        f"{args.replicates} replicates"
    )

    results = {}
    for backend in available_backends():
        elapsed, traces = time_backend(
            population, scenario, backend, args.replicates
        )
        results[backend] = (elapsed, traces)
        print(
            f"{backend:>8}: {elapsed:7.3f} s total, "
            f"{total_months / elapsed:9.1f} months/s, "
            f"{total_months * n_agents / elapsed / 1e6:7.2f} M agent-months/s"
        )

    if len(results) > 1:
        python_traces = results["python"][1]
        for backend, (_, traces) in results.items():
            if backend == "python":
                continue
            matches = all(a == b for a, b in zip(python_traces, traces))
            status = "identical" if matches else "MISMATCH"
            print(f"{backend} vs python traces: {status}")
            if not matches:
                return 1
            speedup = results["python"][0] / results[backend][0]
            print(f"{backend} speedup over python: {speedup:.2f}x")
    else:
        print("only the python backend is available; build the extension to compare")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
