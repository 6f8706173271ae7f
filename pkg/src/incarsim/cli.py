"""Command-line entry point: the full pipeline behind one executable.

Subcommands: synth-pop, fit-sentences, derive-probs, run, analyze, ode,
calibrate-spontaneous. Each prints a machine-readable JSON result on
stdout. Exit codes: 0 success, 1 contract failure (fit, calibration, or
engine errors), 2 configuration or input errors.

A run directory is self-describing: it holds the resolved config echo,
the population file, per-replicate trace archives, per-scenario counts
and summary CSVs, and a metadata file with input hashes, seeds, library
versions, and wall-clock times. Replicate seeds derive only from the
master seed and replicate index, so rerunning a config reproduces the
summary CSVs byte for byte at any worker count.

The default output root is ``./runs``, overridable with the
``INCARSIM_OUTPUT_ROOT`` environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analytics import (
    PrevalenceSummary,
    export_plot_csv,
    log_pvalue_series,
    overlay_external_series,
    recidivism_report,
    summarize_ensemble,
)
from .config import (
    PopulationConfig,
    RunConfig,
    build_population,
    build_scenario,
    build_transmission,
    default_run_config,
    load_run_config,
    resolved_config_dict,
    seeding_summary,
)
from .engine import (
    EVENT_FIELDS,
    EpidemicTrace,
    available_backends,
    calibrate_spontaneous_rate,
    default_backend,
    default_worker_count,
    run_ensemble,
    run_replicate,
)
from .errors import (
    CalibrationError,
    ConfigurationError,
    EngineError,
    FitError,
    IncarsimError,
)
from .ode import critical_sentence, ode_report, steady_state_prevalence
from .popgen import load_population, save_population, write_edge_csv
from .sentencing import fit_negative_binomial, fit_report
from .transmission import (
    default_survey_table,
    derive_transmission_table,
    load_survey_table,
    write_monthly_table_csv,
)

OUTPUT_ROOT_ENV = "INCARSIM_OUTPUT_ROOT"
TRACE_DIR_NAME = "traces"
CONFIG_FILE_NAME = "config.json"
METADATA_FILE_NAME = "metadata.json"
POPULATION_FILE_NAME = "population.json.gz"


def _json_default(value):
    if isinstance(value, (np.integer, np.floating)):
        return value.item()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True, default=_json_default)
    sys.stdout.write("\n")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default)
        handle.write("\n")


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# ---------------------------------------------------------------------------
# trace persistence


def trace_path(run_dir: Path, label: str, replicate_index: int) -> Path:
    return run_dir / TRACE_DIR_NAME / label / f"replicate-{replicate_index:04d}.npz"


def save_trace(trace: EpidemicTrace, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"ev_{field}": trace.events[field] for field in EVENT_FIELDS}
    np.savez_compressed(
        path,
        counts=trace.counts,
        initial_alive=trace.initial_alive,
        replicate_index=np.int64(trace.replicate_index),
        fingerprint=np.str_(trace.fingerprint),
        **arrays,
    )


def load_trace(path: Path) -> EpidemicTrace:
    if not path.exists():
        raise ConfigurationError(f"missing trace file: {path}")
    with np.load(path) as archive:
        events = {field: archive[f"ev_{field}"] for field in EVENT_FIELDS}
        return EpidemicTrace(
            replicate_index=int(archive["replicate_index"]),
            counts=archive["counts"],
            events=events,
            fingerprint=str(archive["fingerprint"]),
            initial_alive=archive["initial_alive"],
        )


def load_scenario_traces(run_dir: Path, label: str, n_replicates: int) -> list:
    return [
        load_trace(trace_path(run_dir, label, index))
        for index in range(n_replicates)
    ]


# ---------------------------------------------------------------------------
# run-directory CSVs


def write_counts_csv(path: Path, traces) -> None:
    with open(path, "w") as handle:
        handle.write("replicate,month,alive,incarcerated\n")
        for trace in traces:
            for month, (alive, incarcerated) in enumerate(trace.counts):
                handle.write(
                    f"{trace.replicate_index},{month},{alive},{incarcerated}\n"
                )


def _degenerate_summary(trace: EpidemicTrace, label: str) -> PrevalenceSummary:
    prevalence = trace.prevalence()
    nan = np.full_like(prevalence, np.nan)
    return PrevalenceSummary(
        label=label,
        months=np.arange(prevalence.size),
        mean=prevalence,
        se=nan,
        ci_low=nan.copy(),
        ci_high=nan.copy(),
        n_replicates=1,
    )


def summarize_traces(traces, label: str) -> PrevalenceSummary:
    """Ensemble summary; a single replicate yields a degenerate (NaN) CI."""
    if len(traces) == 1:
        print(
            f"warning: scenario {label!r} has a single replicate; "
            "confidence interval is degenerate",
            file=sys.stderr,
        )
        return _degenerate_summary(traces[0], label)
    return summarize_ensemble(traces, label=label)


# ---------------------------------------------------------------------------
# synth-pop


def cmd_synth_pop(args) -> int:
    population_config = PopulationConfig(
        tables_dir=args.tables_dir,
        seed_count=args.seed_count,
        horizon_years=args.horizon_years,
        burn_in_years=args.burn_in_years,
        rng_seed=args.rng_seed,
        seed_birth_span=args.seed_birth_span,
    )
    population = build_population(population_config)
    output = Path(args.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    save_population(population, output)
    if args.edges_csv:
        write_edge_csv(population, args.edges_csv)
    result = {
        "population_file": str(output),
        "file_sha256": _sha256(output),
        "parameter_hash": population.parameter_hash,
        "rng_seed": population_config.rng_seed,
        "stats": population.stats.as_dict(),
    }
    if args.stats_json:
        _write_json(Path(args.stats_json), result)
    _emit(result)
    return 0


# ---------------------------------------------------------------------------
# fit-sentences


def cmd_fit_sentences(args) -> int:
    try:
        dist = fit_negative_binomial(args.mean, args.median, label=args.label)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    report = fit_report(dist, args.mean, args.median)
    if args.pmf_csv:
        pmf = dist.pmf_array()
        with open(args.pmf_csv, "w") as handle:
            handle.write("months,probability\n")
            for offset, mass in enumerate(pmf):
                handle.write(f"{dist.floor + offset},{float(mass)!r}\n")
        report["pmf_csv"] = args.pmf_csv
    _emit(report)
    return 0


# ---------------------------------------------------------------------------
# derive-probs


def cmd_derive_probs(args) -> int:
    if args.survey_table:
        try:
            survey = load_survey_table(args.survey_table)
        except FileNotFoundError:
            raise ConfigurationError(
                f"survey table not found: {args.survey_table}"
            ) from None
    else:
        survey = default_survey_table()
    table = derive_transmission_table(survey, args.sentence_months)
    write_monthly_table_csv(table, args.output, digits=args.digits)
    _emit(
        {
            "output": args.output,
            "calibration_sentence_months": args.sentence_months,
            "digits": args.digits,
            "cells": len(table.cells),
        }
    )
    return 0


# ---------------------------------------------------------------------------
# run


def _load_config_for(args) -> RunConfig:
    if args.config is not None and args.default_config:
        raise ConfigurationError("give --config or --default-config, not both")
    if args.config is None and not args.default_config:
        raise ConfigurationError("give --config FILE or --default-config")
    if args.config is not None:
        config = load_run_config(args.config)
    else:
        config = default_run_config()
    overrides = {}
    if getattr(args, "output_dir", None) is not None:
        overrides["output_dir"] = args.output_dir
    if getattr(args, "master_seed", None) is not None:
        overrides["master_seed"] = args.master_seed
    if getattr(args, "n_workers", None) is not None:
        overrides["n_workers"] = args.n_workers
    if getattr(args, "backend", None) is not None:
        overrides["backend"] = args.backend
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def _resolve_run_dir(config: RunConfig) -> Path:
    if config.output_dir is not None:
        return Path(config.output_dir)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    stamp = datetime.now(timezone.utc).strftime("%Y%m%d-%H%M%S")
    candidate = root / f"run-{stamp}"
    suffix = 1
    while candidate.exists():
        candidate = root / f"run-{stamp}-{suffix}"
        suffix += 1
    return candidate


def _prepare_run_dir(run_dir: Path, force: bool) -> None:
    if run_dir.exists() and any(run_dir.iterdir()):
        if not force:
            raise ConfigurationError(
                f"output directory {run_dir} is not empty (use --force to overwrite)"
            )
    run_dir.mkdir(parents=True, exist_ok=True)


def _regenerated_population(population_config: PopulationConfig, replicate: int):
    per_replicate = dataclasses.replace(
        population_config,
        population_file=None,
        rng_seed=population_config.rng_seed + 1 + replicate,
    )
    return build_population(per_replicate)


def _run_scenario_regenerated(config, scenario_config, transmission, backend):
    """Sensitivity mode: a fresh population per replicate.

    The per-replicate generation seed is base seed + 1 + replicate index,
    so results stay deterministic and worker-count independent.
    """
    traces = []
    failures = []
    for index in range(scenario_config.n_replicates):
        try:
            population = _regenerated_population(config.population, index)
            scenario = build_scenario(
                scenario_config, population, transmission, config.master_seed
            )
            traces.append(
                run_replicate(population, scenario, index, backend=backend)
            )
        except IncarsimError as exc:
            failures.append(f"replicate {index}: {type(exc).__name__}: {exc}")
    if failures:
        raise EngineError(
            f"{len(failures)} replicate(s) failed: " + "; ".join(failures[:5])
        )
    return traces


def cmd_run(args) -> int:
    config = _load_config_for(args)
    run_dir = _resolve_run_dir(config)
    _prepare_run_dir(run_dir, args.force)
    config = dataclasses.replace(config, output_dir=str(run_dir))

    started = time.perf_counter()
    population = build_population(config.population)
    transmission = build_transmission(config.transmission)
    backend = default_backend() if config.backend == "auto" else config.backend
    n_workers = (
        default_worker_count() if config.n_workers is None else config.n_workers
    )

    config_path = run_dir / CONFIG_FILE_NAME
    _write_json(config_path, resolved_config_dict(config))
    population_path = run_dir / POPULATION_FILE_NAME
    save_population(population, population_path)

    scenario_meta = []
    failures = []
    for scenario_config in config.scenarios:
        scenario = build_scenario(
            scenario_config, population, transmission, config.master_seed
        )
        entry = {
            "label": scenario_config.label,
            "fingerprint": scenario.fingerprint(population.parameter_hash),
            "n_replicates": scenario_config.n_replicates,
            "seeding": seeding_summary(scenario_config, population),
            "sentence": scenario.sentence_dist.params(),
        }
        scenario_started = time.perf_counter()
        try:
            if args.regenerate_population:
                traces = _run_scenario_regenerated(
                    config, scenario_config, transmission, backend
                )
            else:
                traces = run_ensemble(
                    population, scenario, n_workers=n_workers, backend=backend
                )
        except EngineError as exc:
            entry["error"] = str(exc)
            failures.append(f"{scenario_config.label}: {exc}")
            scenario_meta.append(entry)
            continue
        for trace in traces:
            save_trace(trace, trace_path(run_dir, scenario_config.label, trace.replicate_index))
        write_counts_csv(run_dir / f"counts_{scenario_config.label}.csv", traces)
        summary = summarize_traces(traces, scenario_config.label)
        export_plot_csv([summary], run_dir / f"summary_{scenario_config.label}.csv")
        entry["wall_seconds"] = round(time.perf_counter() - scenario_started, 3)
        entry["end_prevalence_mean"] = float(summary.mean[-1])
        scenario_meta.append(entry)

    completed = not failures
    metadata = {
        "created_utc": _utc_now(),
        "completed": completed,
        "failures": failures,
        "tool_version": __version__,
        "python_version": sys.version.split()[0],
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "backend": backend,
        "available_backends": list(available_backends()),
        "n_workers": n_workers,
        "master_seed": config.master_seed,
        "regenerate_population": bool(args.regenerate_population),
        "config_sha256": _sha256(config_path),
        "population_sha256": _sha256(population_path),
        "population_parameter_hash": population.parameter_hash,
        "scenarios": scenario_meta,
        "wall_seconds": round(time.perf_counter() - started, 3),
    }
    _write_json(run_dir / METADATA_FILE_NAME, metadata)
    _emit(
        {
            "run_dir": str(run_dir),
            "completed": completed,
            "failures": failures,
            "scenarios": [
                {
                    key: entry[key]
                    for key in ("label", "n_replicates", "end_prevalence_mean")
                    if key in entry
                }
                for entry in scenario_meta
            ],
        }
    )
    if not completed:
        raise EngineError(
            "run incomplete: " + "; ".join(failures)
        )
    return 0


# ---------------------------------------------------------------------------
# analyze


def _open_run_dir(run_dir: Path):
    config_path = run_dir / CONFIG_FILE_NAME
    metadata_path = run_dir / METADATA_FILE_NAME
    if not config_path.exists() or not metadata_path.exists():
        raise ConfigurationError(
            f"{run_dir} is not a run directory (missing {CONFIG_FILE_NAME} "
            f"or {METADATA_FILE_NAME})"
        )
    with open(config_path) as handle:
        config = RunConfig.from_dict(json.load(handle))
    with open(metadata_path) as handle:
        metadata = json.load(handle)
    return config, metadata


def cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    config, metadata = _open_run_dir(run_dir)
    if not metadata.get("completed", False):
        raise ConfigurationError(
            f"run {run_dir} is marked incomplete; re-run before analyzing"
        )
    population = load_population(run_dir / POPULATION_FILE_NAME)
    output_dir = Path(args.output_dir) if args.output_dir else run_dir / "analysis"
    output_dir.mkdir(parents=True, exist_ok=True)

    labels = [scenario.label for scenario in config.scenarios]
    traces_by_label = {
        label: load_scenario_traces(
            run_dir, label, config.scenario(label).n_replicates
        )
        for label in labels
    }

    written = []
    summaries = {}
    for label in labels:
        summaries[label] = summarize_traces(traces_by_label[label], label)
    summary_path = output_dir / "prevalence_summary.csv"
    export_plot_csv(list(summaries.values()), summary_path)
    written.append(str(summary_path))

    pair = args.pair if args.pair else (labels[:2] if len(labels) >= 2 else None)
    if pair:
        first, second = pair
        for label in (first, second):
            if label not in traces_by_label:
                raise ConfigurationError(f"no scenario labelled {label!r} in run")
        log_p = log_pvalue_series(traces_by_label[first], traces_by_label[second])
        pair_path = output_dir / f"log_pvalues_{first}_vs_{second}.csv"
        export_plot_csv(log_p, pair_path)
        written.append(str(pair_path))

    recidivism_meta = {}
    for label in labels:
        report = recidivism_report(
            population, traces_by_label[label], window_months=args.window_months
        )
        recid_path = output_dir / f"recidivism_{label}.csv"
        export_plot_csv(report, recid_path)
        written.append(str(recid_path))
        recidivism_meta[label] = {
            "n_releases": report.n_releases,
            "n_censored": report.n_censored,
            "empty": report.empty,
        }

    overlay_meta = None
    if args.overlay:
        if not Path(args.overlay).exists():
            raise ConfigurationError(f"overlay file not found: {args.overlay}")
        rows = overlay_external_series(
            summaries, args.overlay, start_year=args.overlay_start_year
        )
        overlay_path = output_dir / "overlay.csv"
        export_plot_csv(rows, overlay_path)
        written.append(str(overlay_path))
        overlay_meta = {"rows": len(rows)}

    result = {
        "run_dir": str(run_dir),
        "output_dir": str(output_dir),
        "files": written,
        "end_prevalence_mean": {
            label: float(summary.mean[-1]) for label, summary in summaries.items()
        },
        "recidivism": recidivism_meta,
    }
    if overlay_meta:
        result["overlay"] = overlay_meta
    _emit(result)
    return 0


# ---------------------------------------------------------------------------
# ode


def cmd_ode(args) -> int:
    if args.run_dir is not None and args.p is not None:
        raise ConfigurationError("give --run-dir or --p, not both")
    if args.run_dir is None and args.p is None:
        raise ConfigurationError("give --run-dir or --p")

    if args.p is not None:
        if not args.sentences:
            raise ConfigurationError("--p requires --sentences")
        result = {
            "p": args.p,
            "critical_sentence": critical_sentence(args.p),
            "steady_state_by_sentence": {
                repr(float(s)): steady_state_prevalence(args.p, s)
                for s in args.sentences
            },
        }
    else:
        run_dir = Path(args.run_dir)
        config, metadata = _open_run_dir(run_dir)
        if not metadata.get("completed", False):
            raise ConfigurationError(
                f"run {run_dir} is marked incomplete; re-run before analyzing"
            )
        traces_by_label = {}
        sentence_means = {}
        for scenario_config in config.scenarios:
            label = scenario_config.label
            traces_by_label[label] = load_scenario_traces(
                run_dir, label, scenario_config.n_replicates
            )
            sentence_means[label] = scenario_config.sentence.build(label).mean
        result = ode_report(traces_by_label, sentence_means)
    if args.output:
        _write_json(Path(args.output), result)
    _emit(result)
    return 0


# ---------------------------------------------------------------------------
# calibrate-spontaneous


def cmd_calibrate_spontaneous(args) -> int:
    config = _load_config_for(args)
    scenario_config = config.scenario(args.scenario)
    population = build_population(config.population)
    transmission = build_transmission(config.transmission)
    scenario = build_scenario(
        scenario_config, population, transmission, config.master_seed
    )
    template = dataclasses.replace(scenario, contagion_enabled=False)
    backend = default_backend() if config.backend == "auto" else config.backend
    result = calibrate_spontaneous_rate(
        population,
        template,
        target_end_prevalence=args.target,
        n_replicates=args.replicates,
        tolerance=args.tolerance,
        n_workers=config.n_workers,
        backend=backend,
    )
    payload = {
        "scenario": args.scenario,
        "target_end_prevalence": args.target,
        "rate": result.rate,
        "achieved": result.achieved,
        "n_replicates": args.replicates,
        "evaluations": [list(pair) for pair in result.evaluations],
    }
    if args.output:
        _write_json(Path(args.output), payload)
    _emit(payload)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_config_arguments(parser) -> None:
    parser.add_argument("--config", help="run config JSON file")
    parser.add_argument(
        "--default-config",
        action="store_true",
        help="use the built-in two-scenario default experiment",
    )
    parser.add_argument("--master-seed", type=int, help="override the master seed")
    parser.add_argument("--n-workers", type=int, help="override the worker count")
    parser.add_argument(
        "--backend",
        choices=("auto", "python", "cython"),
        help="override the kernel backend",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="incarsim",
        description=__doc__.splitlines()[0],
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser(
        "synth-pop", help="generate and save a synthetic population"
    )
    synth.add_argument("--tables-dir", help="directory of demographic table CSVs")
    synth.add_argument("--seed-count", type=int, default=1500)
    synth.add_argument("--horizon-years", type=int, default=200)
    synth.add_argument("--burn-in-years", type=int, default=150)
    synth.add_argument("--rng-seed", type=int, default=7)
    synth.add_argument("--seed-birth-span", type=int, default=25)
    synth.add_argument("--output", default="population.json.gz")
    synth.add_argument("--edges-csv", help="also write the directed-role edge CSV")
    synth.add_argument("--stats-json", help="also write the result JSON to a file")
    synth.set_defaults(func=cmd_synth_pop)

    fit = commands.add_parser(
        "fit-sentences", help="fit a floored negative binomial to mean/median"
    )
    fit.add_argument("--mean", type=float, required=True)
    fit.add_argument("--median", type=int, required=True)
    fit.add_argument("--label", default="")
    fit.add_argument("--pmf-csv", help="write the fitted pmf as CSV")
    fit.set_defaults(func=cmd_fit_sentences)

    derive = commands.add_parser(
        "derive-probs", help="derive monthly transmission probabilities"
    )
    derive.add_argument("--survey-table", help="survey CSV (role, women, men)")
    derive.add_argument("--sentence-months", type=int, default=14)
    derive.add_argument("--digits", type=int, default=3)
    derive.add_argument("--output", default="monthly_probs.csv")
    derive.set_defaults(func=cmd_derive_probs)

    run = commands.add_parser("run", help="execute all scenarios of a config")
    _add_config_arguments(run)
    run.add_argument("--output-dir", help="run directory (default under output root)")
    run.add_argument(
        "--force", action="store_true", help="allow a non-empty output directory"
    )
    run.add_argument(
        "--regenerate-population",
        action="store_true",
        help="sensitivity mode: generate a fresh population per replicate",
    )
    run.set_defaults(func=cmd_run)

    analyze = commands.add_parser("analyze", help="summarize a completed run")
    analyze.add_argument("--run-dir", required=True)
    analyze.add_argument("--output-dir", help="default: <run-dir>/analysis")
    analyze.add_argument(
        "--pair",
        nargs=2,
        metavar=("LABEL_A", "LABEL_B"),
        help="scenario pair for the log p-value series (default: first two)",
    )
    analyze.add_argument("--window-months", type=int, default=36)
    analyze.add_argument("--overlay", help="external prevalence CSV to join")
    analyze.add_argument("--overlay-start-year", type=int, default=0)
    analyze.set_defaults(func=cmd_analyze)

    ode = commands.add_parser("ode", help="mean-field reduction and steady states")
    ode.add_argument("--run-dir", help="estimate p from a completed run")
    ode.add_argument("--p", type=float, help="per-edge monthly probability")
    ode.add_argument(
        "--sentences", type=float, nargs="+", help="sentence means to evaluate"
    )
    ode.add_argument("--output", help="also write the result JSON to a file")
    ode.set_defaults(func=cmd_ode)

    calibrate = commands.add_parser(
        "calibrate-spontaneous",
        help="bisect the spontaneous rate to a target end prevalence",
    )
    _add_config_arguments(calibrate)
    calibrate.add_argument("--scenario", required=True, help="scenario label")
    calibrate.add_argument("--target", type=float, required=True)
    calibrate.add_argument("--replicates", type=int, default=50)
    calibrate.add_argument("--tolerance", type=float, default=0.001)
    calibrate.add_argument("--output", help="also write the result JSON to a file")
    calibrate.set_defaults(func=cmd_calibrate_spontaneous)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FitError, CalibrationError, EngineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
