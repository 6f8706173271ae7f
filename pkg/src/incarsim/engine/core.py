"""Replicate execution: seeding, monthly stepping, ensembles, calibration."""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import os
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import CalibrationError, ConfigurationError, EngineError
from ..popgen import Population
from ..sentencing import SentenceDistribution
from ..transmission import ADULT_CHILD_MIN_AGE_MONTHS, TransmissionTable
from . import kernel_py
from .arrays import (
    MONTHS_PER_YEAR,
    PopulationArrays,
    build_arrays,
    edge_activation_months,
    transmission_matrix,
)
from .kernel_py import (
    DEAD,
    EVENT_BIRTH,
    EVENT_DEATH,
    EVENT_EDGE,
    EVENT_RELEASE,
    EVENT_SEED,
    EVENT_SPONTANEOUS,
    INCARCERATED,
    SUSCEPTIBLE,
    UNBORN,
)

EVENT_FIELDS = ("month", "agent", "code", "sentence", "source")

_EVENT_DTYPES = {
    "month": np.int32,
    "agent": np.int32,
    "code": np.int8,
    "sentence": np.int32,
    "source": np.int32,
}

INFECTION_CODES = (EVENT_SEED, EVENT_EDGE, EVENT_SPONTANEOUS)


@dataclass(frozen=True)
class Scenario:
    """One epidemic configuration run against a shared population."""

    label: str
    sentence_dist: SentenceDistribution
    transmission: TransmissionTable
    initial_prevalence: float = 0.01
    duration_months: int = 600
    n_replicates: int = 250
    eligibility_min_age: int = 15
    spontaneous_monthly_prob: float = 0.0
    contagion_enabled: bool = True
    master_seed: int = 0
    allow_mixed_drivers: bool = False

    def __post_init__(self):
        if not 0.0 <= self.initial_prevalence < 1.0:
            raise ConfigurationError(
                f"initial_prevalence must be in [0, 1), got {self.initial_prevalence}"
            )
        if self.duration_months < 0:
            raise ConfigurationError(
                f"duration_months must be >= 0, got {self.duration_months}"
            )
        if self.n_replicates < 1:
            raise ConfigurationError(
                f"n_replicates must be >= 1, got {self.n_replicates}"
            )
        if not 0.0 <= self.spontaneous_monthly_prob <= 1.0:
            raise ConfigurationError(
                f"spontaneous_monthly_prob must be in [0, 1], got "
                f"{self.spontaneous_monthly_prob}"
            )
        if self.eligibility_min_age < 0:
            raise ConfigurationError("eligibility_min_age must be >= 0")
        if (
            self.contagion_enabled
            and self.spontaneous_monthly_prob > 0.0
            and not self.allow_mixed_drivers
        ):
            raise ConfigurationError(
                "contagion and a spontaneous rate are both active; set "
                "allow_mixed_drivers to combine them deliberately"
            )

    @property
    def eligibility_age_months(self) -> int:
        return self.eligibility_min_age * MONTHS_PER_YEAR

    def fingerprint(self, population_hash: str) -> str:
        payload = {
            "label": self.label,
            "sentence_dist": self.sentence_dist.params(),
            "transmission": {
                f"{role}|{sex}": value
                for (role, sex), value in sorted(self.transmission.cells.items())
            },
            "calibration_sentence_months": self.transmission.calibration_sentence_months,
            "initial_prevalence": self.initial_prevalence,
            "duration_months": self.duration_months,
            "n_replicates": self.n_replicates,
            "eligibility_min_age": self.eligibility_min_age,
            "spontaneous_monthly_prob": self.spontaneous_monthly_prob,
            "contagion_enabled": self.contagion_enabled,
            "master_seed": self.master_seed,
            "population": population_hash,
        }
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("ascii")).hexdigest()


@dataclass
class SimState:
    """Mutable per-replicate state; arrays are indexed by dense agent index."""

    month: int
    status: np.ndarray
    remaining_sentence: np.ndarray
    events: list

    def counts(self):
        incarcerated = int(np.count_nonzero(self.status == INCARCERATED))
        alive = int(np.count_nonzero(self.status == SUSCEPTIBLE)) + incarcerated
        return alive, incarcerated


@dataclass(eq=False)
class EpidemicTrace:
    """Counts series plus the full event log for one replicate."""

    replicate_index: int
    counts: np.ndarray
    events: dict
    fingerprint: str
    initial_alive: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, EpidemicTrace):
            return NotImplemented
        return (
            self.replicate_index == other.replicate_index
            and self.fingerprint == other.fingerprint
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.initial_alive, other.initial_alive)
            and all(
                np.array_equal(self.events[name], other.events[name])
                for name in EVENT_FIELDS
            )
        )

    @property
    def duration_months(self) -> int:
        return self.counts.shape[0] - 1

    def prevalence(self) -> np.ndarray:
        return self.counts[:, 1] / self.counts[:, 0]


def _pack_events(event_tuples) -> dict:
    if event_tuples:
        columns = list(zip(*event_tuples))
    else:
        columns = [[] for _ in EVENT_FIELDS]
    return {
        name: np.asarray(column, dtype=_EVENT_DTYPES[name])
        for name, column in zip(EVENT_FIELDS, columns)
    }


def ensure_arrays(population) -> PopulationArrays:
    if isinstance(population, PopulationArrays):
        return population
    if isinstance(population, Population):
        return build_arrays(population)
    raise ConfigurationError(
        f"expected Population or PopulationArrays, got {type(population).__name__}"
    )


def _initial_status(arrays: PopulationArrays) -> np.ndarray:
    status = np.full(arrays.n_agents, SUSCEPTIBLE, dtype=np.int8)
    status[arrays.birth_month > 0] = UNBORN
    status[arrays.death_month <= 0] = DEAD
    return status


def seed_initial_infections(population, scenario: Scenario, rng) -> SimState:
    """Month-0 state with round(prevalence * eligible) agents incarcerated."""
    arrays = ensure_arrays(population)
    status = _initial_status(arrays)
    remaining = np.zeros(arrays.n_agents, dtype=np.int32)
    events = []

    eligible = np.flatnonzero(
        (status == SUSCEPTIBLE)
        & (arrays.birth_month + scenario.eligibility_age_months <= 0)
    )
    if eligible.size == 0:
        raise ConfigurationError("no eligible agents alive at month 0")
    n_seeds = int(round(scenario.initial_prevalence * eligible.size))
    if n_seeds >= eligible.size:
        raise ConfigurationError(
            f"initial prevalence {scenario.initial_prevalence} rounds to "
            f"{n_seeds} seeds for an eligible pool of {eligible.size}"
        )
    if n_seeds:
        chosen = np.sort(rng.choice(eligible, size=n_seeds, replace=False))
        sentences = scenario.sentence_dist.sentences_from_uniforms(
            rng.random(n_seeds)
        )
        status[chosen] = INCARCERATED
        remaining[chosen] = sentences + 1
        for agent, sentence in zip(chosen, sentences):
            events.append((0, int(agent), EVENT_SEED, int(sentence), -1))
    return SimState(month=0, status=status, remaining_sentence=remaining, events=events)


def _kernel_inputs(arrays: PopulationArrays, scenario: Scenario):
    prob_matrix = transmission_matrix(scenario.transmission)
    edge_src = np.repeat(
        np.arange(arrays.n_agents, dtype=np.int64), np.diff(arrays.edge_indptr)
    )
    edge_prob = prob_matrix[
        arrays.edge_role.astype(np.int64), arrays.sex_code[edge_src].astype(np.int64)
    ]
    edge_activation = edge_activation_months(
        arrays, scenario.eligibility_age_months, ADULT_CHILD_MIN_AGE_MONTHS
    )
    eligibility_month = arrays.birth_month + scenario.eligibility_age_months
    dist = scenario.sentence_dist
    return {
        "edge_src": edge_src,
        "edge_target": arrays.edge_target,
        "edge_prob": edge_prob,
        "edge_activation": edge_activation,
        "eligibility_month": eligibility_month,
        "sentence_cdf": dist.cdf_table,
        "sentence_floor": dist.floor,
        "sentence_support_max": dist.support_max,
    }


def step_month(state: SimState, population, scenario: Scenario, rng) -> SimState:
    """Advance the state by one month using the pure-python kernel."""
    arrays = ensure_arrays(population)
    inputs = _kernel_inputs(arrays, scenario)
    state.month += 1
    kernel_py.month_pass(
        state.month,
        state.status,
        state.remaining_sentence,
        arrays.birth_month,
        arrays.death_month,
        inputs["edge_src"],
        inputs["edge_target"],
        inputs["edge_prob"],
        inputs["edge_activation"],
        inputs["eligibility_month"],
        inputs["sentence_cdf"],
        inputs["sentence_floor"],
        inputs["sentence_support_max"],
        scenario.spontaneous_monthly_prob,
        scenario.contagion_enabled,
        rng,
        state.events,
    )
    return state


def _select_backend(backend: str):
    if backend == "python":
        return kernel_py
    if backend in ("auto", "cython"):
        try:
            from . import _kernel
        except ImportError:
            if backend == "cython":
                raise ConfigurationError(
                    "compiled kernel requested but not built"
                ) from None
            return kernel_py
        return _kernel
    raise ConfigurationError(f"unknown backend {backend!r}")


def run_replicate(
    population,
    scenario: Scenario,
    replicate_seed: int,
    backend: str = "auto",
) -> EpidemicTrace:
    """Run one replicate; deterministic given (master_seed, replicate_seed)."""
    arrays = ensure_arrays(population)
    kernel = _select_backend(backend)
    rng = np.random.default_rng(
        np.random.SeedSequence([scenario.master_seed, replicate_seed])
    )
    state = seed_initial_infections(arrays, scenario, rng)
    initial_alive = np.flatnonzero(
        (state.status == SUSCEPTIBLE) | (state.status == INCARCERATED)
    ).astype(np.int32)

    inputs = _kernel_inputs(arrays, scenario)
    counts = np.zeros((scenario.duration_months + 1, 2), dtype=np.int64)
    counts[0] = state.counts()
    for month in range(1, scenario.duration_months + 1):
        counts[month] = kernel.month_pass(
            month,
            state.status,
            state.remaining_sentence,
            arrays.birth_month,
            arrays.death_month,
            inputs["edge_src"],
            inputs["edge_target"],
            inputs["edge_prob"],
            inputs["edge_activation"],
            inputs["eligibility_month"],
            inputs["sentence_cdf"],
            inputs["sentence_floor"],
            inputs["sentence_support_max"],
            scenario.spontaneous_monthly_prob,
            scenario.contagion_enabled,
            rng,
            state.events,
        )
    state.month = scenario.duration_months
    return EpidemicTrace(
        replicate_index=replicate_seed,
        counts=counts,
        events=_pack_events(state.events),
        fingerprint=scenario.fingerprint(arrays.parameter_hash),
        initial_alive=initial_alive,
    )


_WORKER_CONTEXT = {}


def _init_worker(arrays, scenario, backend):
    _WORKER_CONTEXT["arrays"] = arrays
    _WORKER_CONTEXT["scenario"] = scenario
    _WORKER_CONTEXT["backend"] = backend


def _run_indexed(replicate_index):
    try:
        trace = run_replicate(
            _WORKER_CONTEXT["arrays"],
            _WORKER_CONTEXT["scenario"],
            replicate_index,
            backend=_WORKER_CONTEXT["backend"],
        )
        return replicate_index, trace, None
    except Exception as exc:
        return replicate_index, None, f"{type(exc).__name__}: {exc}"


def default_worker_count() -> int:
    return os.cpu_count() or 1


def run_ensemble(
    population,
    scenario: Scenario,
    n_workers: int | None = None,
    backend: str = "auto",
) -> list:
    """All replicates of a scenario, ordered by replicate index.

    Replicate seeds derive from (master_seed, index), so the result is
    independent of worker count and scheduling.
    """
    arrays = ensure_arrays(population)
    if n_workers is None:
        n_workers = default_worker_count()
    if n_workers < 1:
        raise ConfigurationError(f"n_workers must be >= 1, got {n_workers}")
    indices = range(scenario.n_replicates)
    if n_workers == 1 or scenario.n_replicates == 1:
        results = [_run_one(arrays, scenario, i, backend) for i in indices]
    else:
        context = multiprocessing.get_context("fork")
        with context.Pool(
            processes=min(n_workers, scenario.n_replicates),
            initializer=_init_worker,
            initargs=(arrays, scenario, backend),
        ) as pool:
            results = pool.map(_run_indexed, indices)
    failures = [(i, err) for i, _, err in results if err is not None]
    if failures:
        listing = "; ".join(f"replicate {i}: {err}" for i, err in failures[:5])
        raise EngineError(f"{len(failures)} replicate(s) failed: {listing}")
    return [trace for _, trace, _ in results]


def _run_one(arrays, scenario, index, backend):
    try:
        return index, run_replicate(arrays, scenario, index, backend=backend), None
    except Exception as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


def end_prevalence_mean(traces) -> float:
    return float(np.mean([trace.prevalence()[-1] for trace in traces]))


@dataclass(frozen=True)
class CalibrationResult:
    rate: float
    achieved: float
    evaluations: tuple


def calibrate_spontaneous_rate(
    population,
    scenario_template: Scenario,
    target_end_prevalence: float,
    n_replicates: int = 50,
    tolerance: float = 0.001,
    bracket: tuple = (0.0, 0.05),
    max_iterations: int = 40,
    n_workers: int | None = None,
    backend: str = "auto",
) -> CalibrationResult:
    """Bisect the spontaneous monthly rate to a target mean end prevalence."""
    if scenario_template.contagion_enabled:
        raise ConfigurationError(
            "calibration requires a template with contagion disabled"
        )
    if target_end_prevalence < 0:
        raise ConfigurationError("target_end_prevalence must be >= 0")
    arrays = ensure_arrays(population)
    lo, hi = bracket
    if not 0.0 <= lo < hi:
        raise ConfigurationError(f"invalid bracket {bracket}")
    if target_end_prevalence == 0.0:
        return CalibrationResult(rate=0.0, achieved=0.0, evaluations=())

    evaluations = []

    def objective(rate):
        scenario = replace(
            scenario_template,
            spontaneous_monthly_prob=rate,
            n_replicates=n_replicates,
        )
        value = end_prevalence_mean(
            run_ensemble(arrays, scenario, n_workers=n_workers, backend=backend)
        )
        evaluations.append((rate, value))
        return value

    f_hi = objective(hi)
    if f_hi < target_end_prevalence - tolerance:
        raise CalibrationError(
            f"target {target_end_prevalence} unreachable: end prevalence at "
            f"bracket top {hi} is {f_hi:.5f}"
        )
    f_lo = objective(lo)
    if f_lo > target_end_prevalence + tolerance:
        raise CalibrationError(
            f"target {target_end_prevalence} unreachable: end prevalence at "
            f"bracket bottom {lo} is {f_lo:.5f}"
        )

    best_rate, best_value = min(
        ((hi, f_hi), (lo, f_lo)), key=lambda rv: abs(rv[1] - target_end_prevalence)
    )
    for _ in range(max_iterations):
        if abs(best_value - target_end_prevalence) <= tolerance:
            break
        mid = 0.5 * (lo + hi)
        f_mid = objective(mid)
        if abs(f_mid - target_end_prevalence) < abs(best_value - target_end_prevalence):
            best_rate, best_value = mid, f_mid
        if f_mid < target_end_prevalence:
            lo = mid
        else:
            hi = mid
    if abs(best_value - target_end_prevalence) > tolerance:
        raise CalibrationError(
            f"calibration did not converge: best rate {best_rate} gives "
            f"{best_value:.5f} vs target {target_end_prevalence} "
            f"(tolerance {tolerance})"
        )
    return CalibrationResult(
        rate=best_rate, achieved=best_value, evaluations=tuple(evaluations)
    )


def replay_counts(trace: EpidemicTrace) -> np.ndarray:
    """Recompute the counts series from the event log alone."""
    agents = trace.events["agent"]
    highest = int(trace.initial_alive.max()) if trace.initial_alive.size else -1
    if agents.size:
        highest = max(highest, int(agents.max()))
    status = np.full(highest + 1, UNBORN, dtype=np.int8)
    status[trace.initial_alive] = SUSCEPTIBLE

    months = trace.events["month"]
    codes = trace.events["code"]
    counts = np.zeros_like(trace.counts)
    cursor = 0
    n_events = months.size
    for month in range(trace.counts.shape[0]):
        while cursor < n_events and months[cursor] == month:
            agent = agents[cursor]
            code = codes[cursor]
            if code in INFECTION_CODES:
                status[agent] = INCARCERATED
            elif code == EVENT_RELEASE:
                status[agent] = SUSCEPTIBLE
            elif code == EVENT_DEATH:
                status[agent] = DEAD
            elif code == EVENT_BIRTH:
                status[agent] = SUSCEPTIBLE
            cursor += 1
        incarcerated = int(np.count_nonzero(status == INCARCERATED))
        alive = int(np.count_nonzero(status == SUSCEPTIBLE)) + incarcerated
        counts[month] = (alive, incarcerated)
    return counts


def annotate_spells(population: Population, trace: EpidemicTrace) -> Population:
    """Fill agents' incarceration_spells from one replicate's event log.

    Mutates the given population in place; intended for single-replicate
    inspection, not for populations shared across an ensemble.
    """
    for agent in population.agents:
        agent.incarceration_spells = []
    codes = trace.events["code"]
    mask = np.isin(codes, INFECTION_CODES)
    for month, agent_idx, sentence in zip(
        trace.events["month"][mask],
        trace.events["agent"][mask],
        trace.events["sentence"][mask],
    ):
        population.agents[agent_idx].incarceration_spells.append(
            (int(month), int(sentence))
        )
    return population
