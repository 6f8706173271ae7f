"""Demographic input tables: mortality, fertility, and friend counts.

All tables ship as editable CSV files under ``incarsim/data`` and are loaded
into a validated DemographicTables bundle. Life tables give the probability
of death within the year at each age 0-119 by sex, applied as fixed hazards
throughout the simulation; survival past age 119 is closed out by certain
death at 120. The fertility and friend-count tables are discrete probability
distributions; the fertility table must carry the configured expected number
of children per woman (2.07 by default).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError

MAX_AGE = 120
FERTILITY_TARGET_MEAN = 2.07
AGE_FIRST_BIRTH_OFFSET_MEAN = 10.6
AGE_FIRST_BIRTH_MIN = 15
CHILD_GAP_MEAN = 4.5
PARTNER_AGE_GAP_RANGE = (0, 9)

_DATA_FILES = {
    "life_table": "life_table.csv",
    "fertility": "fertility.csv",
    "friend_counts": "friend_counts.csv",
}


@dataclass(frozen=True)
class DemographicTables:
    """Validated bundle of demographic inputs for population generation."""

    life_table_female: np.ndarray
    life_table_male: np.ndarray
    fertility_dist: np.ndarray
    friend_count_dist: np.ndarray
    age_first_birth_offset_mean: float = AGE_FIRST_BIRTH_OFFSET_MEAN
    child_gap_mean: float = CHILD_GAP_MEAN
    partner_age_gap_range: tuple = PARTNER_AGE_GAP_RANGE
    fertility_target_mean: float = FERTILITY_TARGET_MEAN

    def __post_init__(self):
        for name in ("life_table_female", "life_table_male"):
            table = getattr(self, name)
            if table.shape != (MAX_AGE,):
                raise ConfigurationError(
                    f"{name} must cover ages 0-{MAX_AGE - 1}, got shape {table.shape}"
                )
            if np.any(table < 0) or np.any(table > 1):
                raise ConfigurationError(f"{name} has probabilities outside [0,1]")
        for name in ("fertility_dist", "friend_count_dist"):
            dist = getattr(self, name)
            if dist.size == 0:
                raise ConfigurationError(f"{name} is empty")
            if np.any(dist < 0) or np.any(dist > 1):
                raise ConfigurationError(f"{name} has probabilities outside [0,1]")
            total = float(dist.sum())
            if abs(total - 1.0) > 1e-9:
                raise ConfigurationError(f"{name} sums to {total}, expected 1")
        mean = float(np.arange(self.fertility_dist.size) @ self.fertility_dist)
        if abs(mean - self.fertility_target_mean) > 1e-6:
            raise ConfigurationError(
                f"fertility_dist mean {mean} differs from target "
                f"{self.fertility_target_mean}"
            )
        lo, hi = self.partner_age_gap_range
        if not (isinstance(lo, int) and isinstance(hi, int) and 0 <= lo <= hi):
            raise ConfigurationError(
                f"partner_age_gap_range must be an ordered integer pair, got {self.partner_age_gap_range}"
            )

    def lifespan_pmf(self, sex: str) -> np.ndarray:
        """Distribution of age at death (0..120) induced by the hazard table.

        Survivors of every yearly hazard die at MAX_AGE with the residual mass,
        so the pmf always sums to one.
        """
        hazard = self.life_table_female if sex == "female" else self.life_table_male
        survival = np.concatenate([[1.0], np.cumprod(1.0 - hazard)])
        pmf = np.empty(MAX_AGE + 1)
        pmf[:MAX_AGE] = survival[:MAX_AGE] * hazard
        pmf[MAX_AGE] = survival[MAX_AGE]
        return pmf

    def lifespan_expectation(self, sex: str) -> float:
        pmf = self.lifespan_pmf(sex)
        return float(np.arange(pmf.size) @ pmf)


def tilt_to_mean(base: np.ndarray, target_mean: float) -> np.ndarray:
    """Exponentially tilt a discrete distribution on 0..K to an exact mean.

    Reweights base[k] by exp(theta * k) with theta solved so the normalized
    mean equals target_mean. The support's positive-mass range must bracket
    the target.
    """
    base = np.asarray(base, dtype=float)
    if np.any(base < 0) or base.sum() <= 0:
        raise ConfigurationError("base distribution must be non-negative with mass")
    base = base / base.sum()
    support = np.arange(base.size, dtype=float)
    positive = support[base > 0]
    if not positive.min() < target_mean < positive.max():
        raise ConfigurationError(
            f"target mean {target_mean} outside the support ({positive.min()}, {positive.max()})"
        )

    def tilted_mean(theta):
        weights = base * np.exp(theta * support)
        weights /= weights.sum()
        return float(support @ weights) - target_mean

    theta = brentq(tilted_mean, -50.0, 50.0, xtol=1e-15)
    weights = base * np.exp(theta * support)
    return weights / weights.sum()


def _read_columns(path, columns):
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or set(reader.fieldnames) != set(columns):
            raise ConfigurationError(
                f"{path}: expected columns {columns}, got {reader.fieldnames}"
            )
        rows = list(reader)
    if not rows:
        raise ConfigurationError(f"{path}: empty table")
    out = {}
    for column in columns:
        try:
            out[column] = np.array([float(row[column]) for row in rows])
        except ValueError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
    return out


def load_life_table(path):
    """Read a life table CSV with columns age, female, male."""
    data = _read_columns(path, ("age", "female", "male"))
    ages = data["age"].astype(int)
    if not np.array_equal(ages, np.arange(MAX_AGE)):
        raise ConfigurationError(f"{path}: ages must run 0..{MAX_AGE - 1}")
    return data["female"], data["male"]


def load_distribution(path, value_column):
    """Read a distribution CSV with columns (value_column, probability)."""
    data = _read_columns(path, (value_column, "probability"))
    values = data[value_column].astype(int)
    if not np.array_equal(values, np.arange(values.size)):
        raise ConfigurationError(f"{path}: {value_column} must run 0..K contiguously")
    return data["probability"]


def load_demographic_tables(
    directory=None,
    fertility_target_mean: float = FERTILITY_TARGET_MEAN,
) -> DemographicTables:
    """Load the table bundle from a directory of CSVs (package data by default)."""
    if directory is None:
        import importlib.resources

        root = importlib.resources.files("incarsim.data")
        with importlib.resources.as_file(root / _DATA_FILES["life_table"]) as path:
            female, male = load_life_table(path)
        with importlib.resources.as_file(root / _DATA_FILES["fertility"]) as path:
            fertility = load_distribution(path, "children")
        with importlib.resources.as_file(root / _DATA_FILES["friend_counts"]) as path:
            friends = load_distribution(path, "friends")
        return DemographicTables(
            life_table_female=female,
            life_table_male=male,
            fertility_dist=fertility,
            friend_count_dist=friends,
            fertility_target_mean=fertility_target_mean,
        )
    directory = Path(directory)
    female, male = load_life_table(directory / _DATA_FILES["life_table"])
    fertility = load_distribution(directory / _DATA_FILES["fertility"], "children")
    friends = load_distribution(directory / _DATA_FILES["friend_counts"], "friends")
    return DemographicTables(
        life_table_female=female,
        life_table_male=male,
        fertility_dist=fertility,
        friend_count_dist=friends,
        fertility_target_mean=fertility_target_mean,
    )
