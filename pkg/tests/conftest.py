"""Shared fixtures and micro-population helpers for the test suite."""

import numpy as np
import pytest

from incarsim.popgen import Agent, GenerationStats, Population, generate_population
from incarsim.sentencing import fit_negative_binomial
from incarsim.tables import load_demographic_tables
from incarsim.transmission import default_survey_table, derive_transmission_table


def _stats(n):
    return GenerationStats(
        total_generated=n,
        retained=n,
        edge_count=0,
        directed_ties=0,
        mean_degree=0.0,
        completed_fertility_mean=0.0,
        realized_fertility_mean=0.0,
        kind_counts={},
    )


def make_population(agents, edges, burn_in=150, horizon=200, seed=3):
    """Population wrapper around hand-built agents and edges."""
    return Population(
        agents=agents,
        edges=edges,
        burn_in_years=burn_in,
        horizon_years=horizon,
        generation_seed=seed,
        stats=_stats(len(agents)),
        parameter_hash="test-population",
    )


def adult(agent_id, sex="male", birth_year=100, death_year=199):
    return Agent(
        id=agent_id, sex=sex, birth_year=birth_year, death_year=death_year, x=0.0, y=0.0
    )


class FakeTrace:
    """Minimal trace stand-in: counts plus a typed event log."""

    def __init__(self, counts, event_rows):
        self.counts = np.asarray(counts, dtype=np.int64)
        if event_rows:
            months, agents, codes, sentences, sources = zip(*event_rows)
        else:
            months, agents, codes, sentences, sources = [], [], [], [], []
        self.events = {
            "month": np.asarray(months, dtype=np.int32),
            "agent": np.asarray(agents, dtype=np.int32),
            "code": np.asarray(codes, dtype=np.int8),
            "sentence": np.asarray(sentences, dtype=np.int32),
            "source": np.asarray(sources, dtype=np.int32),
        }

    @property
    def duration_months(self):
        return self.counts.shape[0] - 1

    def prevalence(self):
        return self.counts[:, 1] / self.counts[:, 0]


@pytest.fixture(scope="session")
def demographic_tables():
    return load_demographic_tables()


@pytest.fixture(scope="session")
def small_population(demographic_tables):
    # Small but structured enough to exercise every edge kind.
    return generate_population(
        demographic_tables,
        seed_count=120,
        horizon_years=120,
        burn_in_years=70,
        rng_seed=11,
    )


@pytest.fixture(scope="session")
def survey():
    return default_survey_table()


@pytest.fixture(scope="session")
def table(survey):
    return derive_transmission_table(survey, 14)


@pytest.fixture(scope="session")
def white_dist():
    return fit_negative_binomial(14, 10, label="white")


@pytest.fixture(scope="session")
def black_dist():
    return fit_negative_binomial(17, 12, label="black")
