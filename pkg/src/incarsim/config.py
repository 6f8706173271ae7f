"""Run configuration: one JSON document describing a full experiment.

A run config has four sections: the population to generate (or a file to
load), the scenario list, the transmission table derivation, and output
settings. Parsing is strict: unknown keys anywhere are rejected so a typo
cannot silently fall back to a default. Every run directory receives the
fully resolved config as an echo.

Scenario ``initial_prevalence`` is expressed as a share of the living
population at month 0, the quantity plotted on epidemic curves. The engine
seeds among age-eligible agents only, so the share is converted with the
population's alive/eligible ratio when scenarios are built.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .engine import MONTHS_PER_YEAR, Scenario, ensure_arrays
from .errors import ConfigurationError
from .popgen import Population, generate_population, load_population
from .sentencing import SentenceDistribution, fit_negative_binomial
from .tables import load_demographic_tables
from .transmission import (
    DEFAULT_CALIBRATION_SENTENCE_MONTHS,
    TransmissionTable,
    derive_transmission_table,
    default_survey_table,
    load_survey_table,
)

__all__ = [
    "PopulationConfig",
    "SentenceConfig",
    "ScenarioConfig",
    "TransmissionConfig",
    "RunConfig",
    "default_run_config",
    "parse_run_config",
    "load_run_config",
    "resolved_config_dict",
    "build_tables",
    "build_population",
    "build_transmission",
    "build_scenario",
    "population_share_to_eligible",
    "seeding_summary",
]

DEFAULT_MASTER_SEED = 1
DEFAULT_POPULATION_SEED = 7


def _check_keys(section: str, data: dict, allowed) -> None:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{section}: expected an object, got {type(data).__name__}")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigurationError(f"{section}: unknown key(s) {sorted(unknown)}")


def _require(section: str, condition: bool, message: str) -> None:
    if not condition:
        raise ConfigurationError(f"{section}: {message}")


@dataclass(frozen=True)
class PopulationConfig:
    """How to obtain the shared synthetic population."""

    tables_dir: str | None = None
    population_file: str | None = None
    seed_count: int = 1500
    horizon_years: int = 200
    burn_in_years: int = 150
    rng_seed: int = DEFAULT_POPULATION_SEED
    seed_birth_span: int = 25

    @classmethod
    def from_dict(cls, data: dict) -> "PopulationConfig":
        _check_keys("population", data, cls.__dataclass_fields__)
        config = cls(**data)
        _require("population", config.seed_count >= 2, "seed_count must be >= 2")
        _require(
            "population",
            config.horizon_years > config.burn_in_years >= 0,
            "need horizon_years > burn_in_years >= 0",
        )
        _require("population", config.seed_birth_span >= 1, "seed_birth_span must be >= 1")
        return config


@dataclass(frozen=True)
class SentenceConfig:
    """Either (mean, median) fit targets or explicit floored-NB parameters."""

    mean: float | None = None
    median: int | None = None
    dispersion: float | None = None
    success_prob: float | None = None
    floor: int = 1

    @classmethod
    def from_dict(cls, data: dict, label: str) -> "SentenceConfig":
        section = f"scenario {label!r} sentence"
        _check_keys(section, data, cls.__dataclass_fields__)
        config = cls(**data)
        targets = config.mean is not None or config.median is not None
        explicit = config.dispersion is not None or config.success_prob is not None
        _require(section, targets != explicit, "give mean/median or dispersion/success_prob, not both")
        if targets:
            _require(
                section,
                config.mean is not None and config.median is not None,
                "mean and median must be given together",
            )
            _require(
                section,
                config.floor == 1,
                "floor is fixed at 1 when fitting to mean/median targets",
            )
        else:
            _require(
                section,
                config.dispersion is not None and config.success_prob is not None,
                "dispersion and success_prob must be given together",
            )
        return config

    def build(self, label: str) -> SentenceDistribution:
        if self.mean is not None:
            try:
                return fit_negative_binomial(self.mean, self.median, label=label)
            except ValueError as exc:
                raise ConfigurationError(
                    f"scenario {label!r} sentence: {exc}"
                ) from None
        try:
            return SentenceDistribution(
                dispersion=self.dispersion,
                success_prob=self.success_prob,
                floor=self.floor,
                label=label,
            )
        except ValueError as exc:
            raise ConfigurationError(f"scenario {label!r} sentence: {exc}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    """One epidemic configuration; prevalence is a living-population share."""

    label: str
    sentence: SentenceConfig
    initial_prevalence: float = 0.01
    duration_months: int = 600
    n_replicates: int = 250
    eligibility_min_age: int = 15
    spontaneous_monthly_prob: float = 0.0
    contagion_enabled: bool = True
    allow_mixed_drivers: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        _check_keys("scenario", data, cls.__dataclass_fields__)
        _require("scenario", "label" in data and data["label"], "label is required")
        _require("scenario", "sentence" in data, "sentence section is required")
        label = data["label"]
        fields = dict(data)
        fields["sentence"] = SentenceConfig.from_dict(data["sentence"], label)
        config = cls(**fields)
        section = f"scenario {label!r}"
        _require(
            section,
            0.0 <= config.initial_prevalence < 1.0,
            "initial_prevalence must be in [0, 1)",
        )
        _require(section, config.duration_months >= 0, "duration_months must be >= 0")
        _require(section, config.n_replicates >= 1, "n_replicates must be >= 1")
        return config


@dataclass(frozen=True)
class TransmissionConfig:
    """Survey table source and the calibration sentence length."""

    survey_table: str | None = None
    calibration_sentence_months: int = DEFAULT_CALIBRATION_SENTENCE_MONTHS

    @classmethod
    def from_dict(cls, data: dict) -> "TransmissionConfig":
        _check_keys("transmission", data, cls.__dataclass_fields__)
        config = cls(**data)
        _require(
            "transmission",
            config.calibration_sentence_months >= 1,
            "calibration_sentence_months must be >= 1",
        )
        return config


@dataclass(frozen=True)
class RunConfig:
    """Validated top-level experiment description."""

    population: PopulationConfig = field(default_factory=PopulationConfig)
    scenarios: tuple = ()
    transmission: TransmissionConfig = field(default_factory=TransmissionConfig)
    output_dir: str | None = None
    master_seed: int = DEFAULT_MASTER_SEED
    n_workers: int | None = None
    backend: str = "auto"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        _check_keys("config", data, cls.__dataclass_fields__)
        population = PopulationConfig.from_dict(data.get("population", {}))
        raw_scenarios = data.get("scenarios", [])
        _require("config", isinstance(raw_scenarios, list), "scenarios must be a list")
        _require("config", len(raw_scenarios) >= 1, "at least one scenario is required")
        scenarios = tuple(ScenarioConfig.from_dict(entry) for entry in raw_scenarios)
        labels = [scenario.label for scenario in scenarios]
        _require(
            "config",
            len(set(labels)) == len(labels),
            f"scenario labels must be unique, got {labels}",
        )
        transmission = TransmissionConfig.from_dict(data.get("transmission", {}))
        config = cls(
            population=population,
            scenarios=scenarios,
            transmission=transmission,
            output_dir=data.get("output_dir"),
            master_seed=data.get("master_seed", DEFAULT_MASTER_SEED),
            n_workers=data.get("n_workers"),
            backend=data.get("backend", "auto"),
        )
        _require(
            "config",
            config.n_workers is None or config.n_workers >= 1,
            "n_workers must be >= 1",
        )
        _require(
            "config",
            config.backend in ("auto", "python", "cython"),
            f"backend must be auto, python, or cython, got {config.backend!r}",
        )
        return config

    def scenario(self, label: str) -> ScenarioConfig:
        for scenario in self.scenarios:
            if scenario.label == label:
                return scenario
        raise ConfigurationError(f"no scenario labelled {label!r}")


def default_run_config() -> RunConfig:
    """The headline experiment: Black and White sentence regimes, shared
    population and transmission table, 250 replicates over 600 months."""
    return RunConfig.from_dict(
        {
            "population": {},
            "scenarios": [
                {
                    "label": "black",
                    "sentence": {"mean": 17, "median": 12},
                },
                {
                    "label": "white",
                    "sentence": {"mean": 14, "median": 10},
                },
            ],
            "transmission": {},
        }
    )


def parse_run_config(data: dict) -> RunConfig:
    return RunConfig.from_dict(data)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path) as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return parse_run_config(data)


def resolved_config_dict(config: RunConfig) -> dict:
    """Fully populated config echo, including every defaulted value."""
    data = asdict(config)
    data["scenarios"] = [asdict(scenario) for scenario in config.scenarios]
    return data


def build_tables(population_config: PopulationConfig):
    try:
        return load_demographic_tables(population_config.tables_dir)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"demographic table missing: {exc}") from None


def build_population(population_config: PopulationConfig) -> Population:
    if population_config.population_file is not None:
        path = Path(population_config.population_file)
        if not path.exists():
            raise ConfigurationError(f"population file not found: {path}")
        return load_population(path)
    tables = build_tables(population_config)
    return generate_population(
        tables,
        seed_count=population_config.seed_count,
        horizon_years=population_config.horizon_years,
        burn_in_years=population_config.burn_in_years,
        rng_seed=population_config.rng_seed,
        seed_birth_span=population_config.seed_birth_span,
    )


def build_transmission(transmission_config: TransmissionConfig) -> TransmissionTable:
    if transmission_config.survey_table is not None:
        try:
            survey = load_survey_table(transmission_config.survey_table)
        except FileNotFoundError:
            raise ConfigurationError(
                f"survey table not found: {transmission_config.survey_table}"
            ) from None
    else:
        survey = default_survey_table()
    return derive_transmission_table(
        survey, transmission_config.calibration_sentence_months
    )


def _month_zero_counts(population, eligibility_min_age: int):
    arrays = ensure_arrays(population)
    alive = (arrays.birth_month <= 0) & (arrays.death_month > 0)
    eligible = alive & (
        arrays.birth_month + eligibility_min_age * MONTHS_PER_YEAR <= 0
    )
    return int(np.count_nonzero(alive)), int(np.count_nonzero(eligible))


def population_share_to_eligible(
    population, eligibility_min_age: int, share: float
) -> float:
    """Convert a living-population prevalence share to the eligible-pool
    share the engine seeds with."""
    alive, eligible = _month_zero_counts(population, eligibility_min_age)
    if eligible == 0:
        raise ConfigurationError("no age-eligible agents alive at month 0")
    return share * alive / eligible


def build_scenario(
    scenario_config: ScenarioConfig,
    population,
    transmission: TransmissionTable,
    master_seed: int,
) -> Scenario:
    eligible_share = population_share_to_eligible(
        population,
        scenario_config.eligibility_min_age,
        scenario_config.initial_prevalence,
    )
    if not 0.0 <= eligible_share < 1.0:
        raise ConfigurationError(
            f"scenario {scenario_config.label!r}: initial_prevalence "
            f"{scenario_config.initial_prevalence} converts to eligible share "
            f"{eligible_share:.4f} outside [0, 1)"
        )
    return Scenario(
        label=scenario_config.label,
        sentence_dist=scenario_config.sentence.build(scenario_config.label),
        transmission=transmission,
        initial_prevalence=eligible_share,
        duration_months=scenario_config.duration_months,
        n_replicates=scenario_config.n_replicates,
        eligibility_min_age=scenario_config.eligibility_min_age,
        spontaneous_monthly_prob=scenario_config.spontaneous_monthly_prob,
        contagion_enabled=scenario_config.contagion_enabled,
        master_seed=master_seed,
        allow_mixed_drivers=scenario_config.allow_mixed_drivers,
    )


def seeding_summary(scenario_config: ScenarioConfig, population) -> dict:
    """Realized month-0 seeding arithmetic for the run metadata."""
    alive, eligible = _month_zero_counts(
        population, scenario_config.eligibility_min_age
    )
    eligible_share = population_share_to_eligible(
        population, scenario_config.eligibility_min_age,
        scenario_config.initial_prevalence,
    )
    n_seeds = int(round(eligible_share * eligible))
    return {
        "alive_month0": alive,
        "eligible_month0": eligible,
        "population_share": scenario_config.initial_prevalence,
        "eligible_share": eligible_share,
        "n_seeds": n_seeds,
        "realized_population_share": n_seeds / alive if alive else 0.0,
    }
