"""Array views of a population for the monthly simulation kernel.

The yearly demographic clock maps onto the epidemic's monthly clock as
month = 12 * (year - burn_in) + u with u drawn once per birth and death
event uniformly from {0..11}. The smearing stream is seeded from the
population's generation seed, so every scenario run on a population sees
the same timeline and month 0 is the start of the post-burn-in window.

Directed edges are stored in CSR layout keyed by the potential inmate:
row i lists the susceptible endpoints that an incarcerated agent i can
infect, each with the role code of the susceptible's relation to i and
the month from which the edge can transmit (the susceptible's general
eligibility age, or adulthood for the parent-to-child direction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..popgen import Population, directed_roles
from ..transmission import SEXES, SURVEY_ROLES, TransmissionTable

MONTHS_PER_YEAR = 12

TIMELINE_STREAM_TAG = 0xA11

ROLE_CODES = {
    "mother": 0,
    "father": 1,
    "sister": 2,
    "brother": 3,
    "spouse": 4,
    "child": 5,
}

CHILD_ROLE_CODE = ROLE_CODES["child"]


@dataclass(frozen=True)
class PopulationArrays:
    """Immutable numeric view of a population, shared across replicates."""

    n_agents: int
    agent_ids: np.ndarray
    sex_code: np.ndarray
    birth_month: np.ndarray
    death_month: np.ndarray
    edge_indptr: np.ndarray
    edge_target: np.ndarray
    edge_role: np.ndarray
    burn_in_years: int
    horizon_years: int
    generation_seed: int
    parameter_hash: str

    @property
    def n_directed_edges(self) -> int:
        return int(self.edge_target.size)

    def months_available(self) -> int:
        return (self.horizon_years - self.burn_in_years) * MONTHS_PER_YEAR


def build_arrays(population: Population) -> PopulationArrays:
    """Lower a population to kernel arrays with a smeared monthly timeline."""
    agents = population.agents
    n = len(agents)
    index_of = {agent.id: i for i, agent in enumerate(agents)}

    rng = np.random.default_rng(
        np.random.SeedSequence([population.generation_seed, TIMELINE_STREAM_TAG])
    )
    birth_u = rng.integers(0, MONTHS_PER_YEAR, size=n)
    death_u = rng.integers(0, MONTHS_PER_YEAR, size=n)

    burn_in = population.burn_in_years
    birth_year = np.array([a.birth_year for a in agents], dtype=np.int64)
    death_year = np.array([a.death_year for a in agents], dtype=np.int64)
    birth_month = (birth_year - burn_in) * MONTHS_PER_YEAR + birth_u
    # death_year is exclusive on the yearly clock; the death event lands in a
    # month of the last alive year, with death_month exclusive on the monthly
    # clock. Smearing can invert the interval for agents who die in their
    # birth year, so the death is pushed to give at least one alive month.
    death_month = (death_year - 1 - burn_in) * MONTHS_PER_YEAR + death_u + 1
    death_month = np.maximum(death_month, birth_month + 1)

    sex_code = np.array([0 if a.sex == "female" else 1 for a in agents], dtype=np.int8)
    agent_ids = np.array([a.id for a in agents], dtype=np.int64)

    by_id = population.agents_by_id()
    sources = []
    targets = []
    roles = []
    for edge in population.edges:
        for inmate_id, susceptible_id, role in directed_roles(edge, by_id):
            sources.append(index_of[inmate_id])
            targets.append(index_of[susceptible_id])
            roles.append(ROLE_CODES[role])
    if sources:
        src = np.array(sources, dtype=np.int64)
        dst = np.array(targets, dtype=np.int64)
        role_arr = np.array(roles, dtype=np.int8)
        order = np.lexsort((dst, src))
        src, dst, role_arr = src[order], dst[order], role_arr[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        indptr = np.cumsum(indptr)
    else:
        dst = np.empty(0, dtype=np.int64)
        role_arr = np.empty(0, dtype=np.int8)
        indptr = np.zeros(n + 1, dtype=np.int64)

    return PopulationArrays(
        n_agents=n,
        agent_ids=agent_ids,
        sex_code=sex_code,
        birth_month=birth_month.astype(np.int64),
        death_month=death_month.astype(np.int64),
        edge_indptr=indptr,
        edge_target=dst,
        edge_role=role_arr,
        burn_in_years=population.burn_in_years,
        horizon_years=population.horizon_years,
        generation_seed=population.generation_seed,
        parameter_hash=population.parameter_hash,
    )


def transmission_matrix(table: TransmissionTable) -> np.ndarray:
    """(role code, inmate sex code) -> monthly probability.

    Row 5 is the parent-to-child direction and carries the adult-child
    probability; the kernel only applies it once the susceptible is an
    adult, so no under-18 value is needed here.
    """
    matrix = np.zeros((len(ROLE_CODES), len(SEXES)))
    for role, code in ROLE_CODES.items():
        survey_role = "adult_child" if role == "child" else role
        assert survey_role in SURVEY_ROLES
        for sex_code, sex in enumerate(SEXES):
            matrix[code, sex_code] = table.cells[(survey_role, sex)]
    return matrix


def edge_activation_months(
    arrays: PopulationArrays,
    eligibility_age_months: int,
    adult_age_months: int,
) -> np.ndarray:
    """First month each directed edge can transmit, from the susceptible's age."""
    base = arrays.birth_month[arrays.edge_target] + eligibility_age_months
    child_gate = arrays.birth_month[arrays.edge_target] + adult_age_months
    return np.where(
        arrays.edge_role == CHILD_ROLE_CODE, np.maximum(base, child_gate), base
    ).astype(np.int64)
