"""Per-relation transmission probabilities.

An incarcerated agent exposes each network neighbour to a fixed monthly
transmission probability that depends on the inmate's sex and on the
neighbour's relation to the inmate (mother, father, sister, brother, spouse,
adult child). Monthly probabilities are derived from whole-sentence survey
probabilities by inverting the complement rule

    p_sentence = 1 - (1 - p_monthly) ** s

at a calibration sentence length of s months. Friends are treated as
siblings: the susceptible's sex picks the sister or brother row. A parent
transmits to a child only once the child is 18 or older.
"""

from __future__ import annotations

import csv
import importlib.resources
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ConsistencyError

SURVEY_ROLES = ("mother", "father", "sister", "brother", "spouse", "adult_child")
SEXES = ("female", "male")

# Age below which the adult-child relation does not transmit (parent -> child).
ADULT_CHILD_MIN_AGE_MONTHS = 216

DEFAULT_CALIBRATION_SENTENCE_MONTHS = 14


@dataclass(frozen=True)
class SurveyTable:
    """Whole-sentence transmission probabilities by (relation role, inmate sex).

    ``cells[(role, sex)]`` is the probability that an inmate of the given sex
    transmits to a relation of the given role over a whole sentence of the
    calibration length.
    """

    cells: dict

    def __post_init__(self):
        missing = [
            (role, sex)
            for role in SURVEY_ROLES
            for sex in SEXES
            if (role, sex) not in self.cells
        ]
        if missing:
            raise ConfigurationError(f"survey table missing cells: {missing}")
        for key, value in self.cells.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(
                    f"survey probability out of [0,1] at {key}: {value}"
                )

    def value(self, role, inmate_sex):
        return self.cells[(role, inmate_sex)]


@dataclass(frozen=True)
class TransmissionTable:
    """Monthly transmission probabilities by (relation role, inmate sex)."""

    cells: dict
    calibration_sentence_months: int = DEFAULT_CALIBRATION_SENTENCE_MONTHS

    def value(self, role, inmate_sex):
        return self.cells[(role, inmate_sex)]

    def rounded(self, digits=3):
        """Cells rounded for display; full precision is kept internally."""
        return {key: round(value, digits) for key, value in self.cells.items()}


def derive_monthly_prob(p_sentence: float, s: int) -> float:
    """Monthly probability whose s-month complement product equals p_sentence.

    Inverts ``p_sentence = 1 - (1 - p_monthly) ** s``.
    """
    if not 0.0 <= p_sentence < 1.0:
        raise ValueError(
            f"whole-sentence probability must lie in [0, 1), got {p_sentence}"
        )
    if s < 1:
        raise ValueError(f"sentence length must be >= 1 month, got {s}")
    return float(-np.expm1(np.log1p(-p_sentence) / s))


def prob_over_sentence(p_monthly: float, s: int) -> float:
    """Probability of at least one transmission over s months at p_monthly per month."""
    if not 0.0 <= p_monthly <= 1.0:
        raise ValueError(f"monthly probability out of [0,1]: {p_monthly}")
    if s < 0:
        raise ValueError(f"sentence length must be >= 0, got {s}")
    if p_monthly == 1.0:
        return 0.0 if s == 0 else 1.0
    return float(-np.expm1(s * np.log1p(-p_monthly)))


def derive_transmission_table(
    survey: SurveyTable, s: int = DEFAULT_CALIBRATION_SENTENCE_MONTHS
) -> TransmissionTable:
    """Derive the monthly table from the survey table at calibration sentence s."""
    cells = {key: derive_monthly_prob(value, s) for key, value in survey.cells.items()}
    return TransmissionTable(cells=cells, calibration_sentence_months=s)


def marginal_transmission_prob_exact(p_monthly: float, dist) -> float:
    """Sentence-averaged whole-sentence transmission probability, summed exactly.

    Sums prob_over_sentence over the distribution's truncated support weighted
    by its pmf; serves as the oracle for the Monte Carlo estimate.
    """
    if p_monthly == 0.0:
        return 0.0
    support = np.arange(dist.floor, dist.support_max + 1)
    pmf = dist.pmf_array()
    return float(np.sum(pmf * -np.expm1(support * np.log1p(-p_monthly))))


def marginal_transmission_prob(p_monthly: float, dist, n_samples: int, rng) -> float:
    """Monte Carlo estimate of the sentence-averaged transmission probability."""
    if n_samples < 10_000:
        raise ValueError(f"n_samples must be >= 10000, got {n_samples}")
    if p_monthly == 0.0:
        return 0.0
    draws = dist.sample(rng, size=n_samples)
    return float(np.mean(-np.expm1(draws * np.log1p(-p_monthly))))


def lookup_edge_prob(
    table: TransmissionTable,
    role: str,
    inmate_sex: str,
    susceptible_sex: str | None = None,
    susceptible_age_months: int | None = None,
) -> float:
    """Monthly probability for one directed (inmate -> susceptible) attempt.

    ``role`` is the susceptible's relation to the inmate. ``friend`` resolves
    to the sister/brother row by the susceptible's sex; ``child`` resolves to
    the adult-child row, or zero while the child is under 18. Roles without a
    table row are rejected because the population generator never emits them.
    """
    if inmate_sex not in SEXES:
        raise ConsistencyError(f"unknown inmate sex: {inmate_sex!r}")
    if role == "friend":
        if susceptible_sex not in SEXES:
            raise ConsistencyError("friend edges need the susceptible's sex")
        role = "sister" if susceptible_sex == "female" else "brother"
    elif role == "child":
        if susceptible_age_months is None:
            raise ConsistencyError("child edges need the susceptible's age")
        if susceptible_age_months < ADULT_CHILD_MIN_AGE_MONTHS:
            return 0.0
        role = "adult_child"
    if role not in SURVEY_ROLES:
        raise ConsistencyError(f"no transmission row for role {role!r}")
    return table.value(role, inmate_sex)


def load_survey_table(path) -> SurveyTable:
    """Read a survey CSV with columns role, women, men."""
    cells = {}
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        expected = {"role", "women", "men"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ConfigurationError(
                f"{path}: expected header role,women,men, got {reader.fieldnames}"
            )
        for lineno, row in enumerate(reader, start=2):
            role = row["role"].strip()
            if role not in SURVEY_ROLES:
                raise ConfigurationError(f"{path}:{lineno}: unknown role {role!r}")
            try:
                cells[(role, "female")] = float(row["women"])
                cells[(role, "male")] = float(row["men"])
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{lineno}: {exc}") from exc
    return SurveyTable(cells=cells)


def default_survey_table() -> SurveyTable:
    """Survey table shipped with the package."""
    resource = importlib.resources.files("incarsim.data") / "survey_probabilities.csv"
    with importlib.resources.as_file(resource) as path:
        return load_survey_table(path)


def write_monthly_table_csv(table: TransmissionTable, path, digits=3):
    """Write the derived monthly table (rounded for display) as CSV."""
    path = Path(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["role", "women", "men"])
        for role in SURVEY_ROLES:
            writer.writerow(
                [
                    role,
                    f"{table.value(role, 'female'):.{digits}f}",
                    f"{table.value(role, 'male'):.{digits}f}",
                ]
            )
