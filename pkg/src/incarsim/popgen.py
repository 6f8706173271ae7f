"""Synthetic multi-generational population with kin and friendship ties.

A seed cohort is created with random sexes, birth years, unit-square
locations, and table-sampled lifespans. A yearly loop then plays out births
and friendship formation: each woman carries an age at first birth
(15 + Poisson offset), a planned child count from the fertility table, and
floored Poisson gaps between births; a partner is chosen at her first birth
(nearest unrelated unmarried male no more than nine years older, monogamous);
each agent forms friendships in the year it turns ten with the nearest alive
non-sibling peers aged nine to eleven. Agents alive at or after the burn-in
year are retained together with the edges among them.

All randomness flows through one generator stream in a fixed event order, so
a given seed reproduces the population byte for byte.
"""

from __future__ import annotations

import csv
import gzip
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .tables import MAX_AGE, DemographicTables

EDGE_KINDS = ("parent-child", "sibling", "spouse", "friend")

FRIEND_FORMATION_AGE = 10
FRIEND_CANDIDATE_AGES = (9, 10, 11)
COMPLETED_FERTILITY_AGE = 50


@dataclass
class Agent:
    """One individual; years are integer iterations of the yearly clock.

    ``death_year`` is exclusive: the agent is alive during years
    [birth_year, death_year). Female agents carry fertility attributes;
    ``realized_children`` counts births that actually occurred.
    ``incarceration_spells`` stays empty during generation; the engine can
    fill it with (start_month, sentence_months) pairs for a single replicate.
    """

    id: int
    sex: str
    birth_year: int
    death_year: int
    x: float
    y: float
    mother_id: int | None = None
    father_id: int | None = None
    age_first_birth: int | None = None
    planned_children: int | None = None
    realized_children: int = 0
    incarceration_spells: list = field(default_factory=list)

    def alive_at(self, year: int) -> bool:
        return self.birth_year <= year < self.death_year

    def age_at(self, year: int) -> int:
        return year - self.birth_year


@dataclass(frozen=True)
class RelationEdge:
    """Undirected relation; parent-child edges store the parent as agent_a."""

    agent_a: int
    agent_b: int
    kind: str


@dataclass(frozen=True)
class GenerationStats:
    total_generated: int
    retained: int
    edge_count: int
    directed_ties: int
    mean_degree: float
    completed_fertility_mean: float
    realized_fertility_mean: float
    kind_counts: dict

    def as_dict(self) -> dict:
        return {
            "total_generated": self.total_generated,
            "retained": self.retained,
            "edge_count": self.edge_count,
            "directed_ties": self.directed_ties,
            "mean_degree": self.mean_degree,
            "completed_fertility_mean": self.completed_fertility_mean,
            "realized_fertility_mean": self.realized_fertility_mean,
            "kind_counts": dict(self.kind_counts),
        }


@dataclass
class Population:
    agents: list
    edges: list
    burn_in_years: int
    horizon_years: int
    generation_seed: int
    stats: GenerationStats
    parameter_hash: str = ""

    def agents_by_id(self) -> dict:
        return {agent.id: agent for agent in self.agents}


def sample_lifespan(sex: str, tables: DemographicTables, rng) -> int:
    """Age at death in whole years, in [0, 120].

    One inverse-CDF draw from the distribution the hazard table induces
    (equivalent to walking the yearly hazards), with certain death at 120.
    """
    pmf = tables.lifespan_pmf(sex)
    cdf = np.cumsum(pmf)
    age = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(age, MAX_AGE)


def child_location(mother_loc, father_loc, rng):
    """Per-axis uniform noise of half-width 0.05 around the parents' midpoint.

    An absent father (None) centers the child on the mother. Results are
    clamped to the unit square.
    """
    mx, my = mother_loc
    if father_loc is None:
        cx, cy = mx, my
    else:
        cx, cy = (mx + father_loc[0]) / 2.0, (my + father_loc[1]) / 2.0
    x = cx + rng.uniform(-0.05, 0.05)
    y = cy + rng.uniform(-0.05, 0.05)
    return min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0)


def schedule_children(mother: Agent, rng, child_gap_mean: float = 4.5) -> list:
    """Birth years for a mother's planned children.

    The whole family is committed in the year of the first birth: the first
    child arrives at age_first_birth and each later child at that year plus
    an independent floored Poisson offset. The planned count is the number of
    children the woman will have, so the schedule is not trimmed by her death;
    only the horizon cuts it off.
    """
    if not mother.planned_children:
        return []
    first = mother.birth_year + mother.age_first_birth
    years = [first]
    for _ in range(mother.planned_children - 1):
        years.append(first + max(1, int(rng.poisson(child_gap_mean))))
    return sorted(years)


def nearest_agent(location, candidates, count=1):
    """The ``count`` candidates nearest to ``location``; ties to lower id."""
    if not candidates:
        return []
    xs = np.array([c.x for c in candidates])
    ys = np.array([c.y for c in candidates])
    ids = np.array([c.id for c in candidates])
    dist2 = (xs - location[0]) ** 2 + (ys - location[1]) ** 2
    order = np.lexsort((ids, dist2))
    return [candidates[i] for i in order[: min(count, len(candidates))]]


def assign_friends(agent: Agent, candidates, friend_count_dist, rng):
    """Friendship edges formed the year ``agent`` turns ten.

    Draws the tie count from ``friend_count_dist`` and links the nearest
    candidates; fewer candidates than the draw means all are linked. The draw
    happens even when it is zero so the random stream does not depend on the
    outcome.
    """
    cdf = np.cumsum(friend_count_dist)
    count = int(np.searchsorted(cdf, rng.random(), side="right"))
    chosen = nearest_agent((agent.x, agent.y), candidates, count)
    return [RelationEdge(agent.id, other.id, "friend") for other in chosen]


def _ancestor_ids(agent: Agent, agents_by_id) -> set:
    out = set()
    stack = [agent]
    while stack:
        current = stack.pop()
        for parent_id in (current.mother_id, current.father_id):
            if parent_id is not None and parent_id not in out:
                out.add(parent_id)
                stack.append(agents_by_id[parent_id])
    return out


def eligible_partners(
    mother: Agent,
    males,
    current_year: int,
    married: set,
    adjacency: dict,
    agents_by_id: dict,
    age_gap_range=(0, 9),
):
    """Males an unpartnered mother may marry in ``current_year``.

    Alive, unmarried, with age minus the mother's age inside the gap range,
    and unrelated: no existing tie of any kind and no ancestor/descendant
    line between them.
    """
    lo, hi = age_gap_range
    mother_age = mother.age_at(current_year)
    neighbors = adjacency.get(mother.id, frozenset())
    mother_ancestors = _ancestor_ids(mother, agents_by_id)
    out = []
    for male in males:
        if male.id == mother.id or not male.alive_at(current_year):
            continue
        if not lo <= male.age_at(current_year) - mother_age <= hi:
            continue
        if male.id in married or male.id in neighbors:
            continue
        if male.id in mother_ancestors:
            continue
        if mother.id in _ancestor_ids(male, agents_by_id):
            continue
        out.append(male)
    return out


def assign_partner(
    mother: Agent,
    males,
    current_year: int,
    married: set,
    adjacency: dict,
    agents_by_id: dict,
    age_gap_range=(0, 9),
):
    """Nearest eligible male, or None (single mother)."""
    candidates = eligible_partners(
        mother, males, current_year, married, adjacency, agents_by_id, age_gap_range
    )
    chosen = nearest_agent((mother.x, mother.y), candidates, 1)
    return chosen[0] if chosen else None


class _Builder:
    """Mutable state for one generation run."""

    def __init__(self, tables: DemographicTables, horizon_years: int, rng):
        self.tables = tables
        self.horizon = horizon_years
        self.rng = rng
        self.agents = []
        self.edges = []
        self.adjacency = {}
        self.married = set()
        self.spouse_of = {}
        self.children_of_mother = {}
        self.births_in_year = {}
        self.friend_events = {}
        self.males_by_year = {}
        self.cohorts = {}
        self.lifespan_cdf = {
            sex: np.cumsum(tables.lifespan_pmf(sex)) for sex in ("female", "male")
        }
        self.fertility_cdf = np.cumsum(tables.fertility_dist)
        self.friend_cdf = np.cumsum(tables.friend_count_dist)

    def _draw_lifespan(self, sex):
        age = int(np.searchsorted(self.lifespan_cdf[sex], self.rng.random(), side="right"))
        return min(age, MAX_AGE)

    def _register(self, agent: Agent):
        self.agents.append(agent)
        self.adjacency[agent.id] = set()
        self.cohorts.setdefault(agent.birth_year, []).append(agent.id)
        if agent.sex == "male":
            self.males_by_year.setdefault(agent.birth_year, []).append(agent.id)
        formation_year = agent.birth_year + FRIEND_FORMATION_AGE
        if formation_year < self.horizon:
            self.friend_events.setdefault(formation_year, []).append(agent.id)
        if agent.sex == "female":
            for index, year in enumerate(self._female_schedule(agent)):
                if year < self.horizon:
                    self.births_in_year.setdefault(year, []).append((agent.id, index))

    def _female_schedule(self, agent: Agent):
        agent.age_first_birth = 15 + int(self.rng.poisson(self.tables.age_first_birth_offset_mean))
        agent.planned_children = int(
            np.searchsorted(self.fertility_cdf, self.rng.random(), side="right")
        )
        return schedule_children(agent, self.rng, self.tables.child_gap_mean)

    def _add_edge(self, a: int, b: int, kind: str):
        self.edges.append(RelationEdge(a, b, kind))
        self.adjacency[a].add(b)
        self.adjacency[b].add(a)

    def create_seed(self, agent_id: int, birth_span: int):
        sex = "female" if self.rng.random() < 0.5 else "male"
        birth_year = int(self.rng.integers(0, birth_span + 1))
        x = self.rng.random()
        y = self.rng.random()
        lifespan = self._draw_lifespan(sex)
        agent = Agent(
            id=agent_id,
            sex=sex,
            birth_year=birth_year,
            death_year=birth_year + lifespan + 1,
            x=x,
            y=y,
        )
        self._register(agent)

    def create_child(self, mother: Agent, father: Agent | None, year: int):
        sex = "female" if self.rng.random() < 0.5 else "male"
        father_loc = (father.x, father.y) if father is not None else None
        x, y = child_location((mother.x, mother.y), father_loc, self.rng)
        lifespan = self._draw_lifespan(sex)
        child = Agent(
            id=len(self.agents),
            sex=sex,
            birth_year=year,
            death_year=year + lifespan + 1,
            x=x,
            y=y,
            mother_id=mother.id,
            father_id=father.id if father is not None else None,
        )
        self._register(child)
        self._add_edge(mother.id, child.id, "parent-child")
        if father is not None:
            self._add_edge(father.id, child.id, "parent-child")
        for sibling_id in self.children_of_mother.get(mother.id, ()):
            self._add_edge(sibling_id, child.id, "sibling")
        self.children_of_mother.setdefault(mother.id, []).append(child.id)
        mother.realized_children += 1

    def run_year(self, year: int):
        # Agent ids equal list indices during generation, so the agent list
        # doubles as the id lookup.
        for mother_id, birth_index in self.births_in_year.get(year, ()):
            mother = self.agents[mother_id]
            if birth_index == 0 and mother_id not in self.spouse_of:
                partner = self._find_partner(mother, year, self.agents)
                if partner is not None:
                    self.spouse_of[mother_id] = partner.id
                    self.married.add(partner.id)
                    self._add_edge(mother.id, partner.id, "spouse")
            father_id = self.spouse_of.get(mother_id)
            father = self.agents[father_id] if father_id is not None else None
            self.create_child(mother, father, year)
        for agent_id in self.friend_events.get(year, ()):
            agent = self.agents[agent_id]
            if not agent.alive_at(year):
                continue
            candidates = self._friend_candidates(agent, year)
            for edge in assign_friends(
                agent, candidates, self.tables.friend_count_dist, self.rng
            ):
                self._add_edge(edge.agent_a, edge.agent_b, "friend")

    def _find_partner(self, mother: Agent, year: int, agents_by_id):
        lo, hi = self.tables.partner_age_gap_range
        males = []
        for age_gap in range(lo, hi + 1):
            for male_id in self.males_by_year.get(mother.birth_year - age_gap, ()):
                males.append(self.agents[male_id])
        return assign_partner(
            mother,
            males,
            year,
            self.married,
            self.adjacency,
            agents_by_id,
            self.tables.partner_age_gap_range,
        )

    def _friend_candidates(self, agent: Agent, year: int):
        siblings = set()
        if agent.mother_id is not None:
            siblings = set(self.children_of_mother.get(agent.mother_id, ()))
        friends = self.adjacency[agent.id]
        out = []
        for age in FRIEND_CANDIDATE_AGES:
            for candidate_id in self.cohorts.get(year - age, ()):
                if candidate_id == agent.id:
                    continue
                candidate = self.agents[candidate_id]
                if not candidate.alive_at(year):
                    continue
                if candidate_id in siblings or candidate_id in friends:
                    continue
                out.append(candidate)
        return out


def _parameter_hash(
    tables: DemographicTables,
    seed_count: int,
    horizon_years: int,
    burn_in_years: int,
    rng_seed: int,
    seed_birth_span: int,
) -> str:
    payload = {
        "life_table_female": tables.life_table_female.tolist(),
        "life_table_male": tables.life_table_male.tolist(),
        "fertility_dist": tables.fertility_dist.tolist(),
        "friend_count_dist": tables.friend_count_dist.tolist(),
        "age_first_birth_offset_mean": tables.age_first_birth_offset_mean,
        "child_gap_mean": tables.child_gap_mean,
        "partner_age_gap_range": list(tables.partner_age_gap_range),
        "seed_count": seed_count,
        "horizon_years": horizon_years,
        "burn_in_years": burn_in_years,
        "rng_seed": rng_seed,
        "seed_birth_span": seed_birth_span,
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("ascii")).hexdigest()


def generate_population(
    tables: DemographicTables,
    seed_count: int = 1500,
    horizon_years: int = 200,
    burn_in_years: int = 150,
    rng_seed: int = 7,
    seed_birth_span: int = 25,
) -> Population:
    """Generate and retain the post-burn-in population.

    Returns agents alive at or after ``burn_in_years`` and the edges among
    them; generation statistics cover the full pre-retention run.
    """
    if seed_count < 2:
        raise ConfigurationError(f"seed_count must be >= 2, got {seed_count}")
    if not horizon_years > burn_in_years >= 0:
        raise ConfigurationError(
            f"need horizon_years > burn_in_years >= 0, got {horizon_years}, {burn_in_years}"
        )
    rng = np.random.default_rng(rng_seed)
    builder = _Builder(tables, horizon_years, rng)
    for agent_id in range(seed_count):
        builder.create_seed(agent_id, seed_birth_span)
    for year in range(horizon_years):
        builder.run_year(year)

    retained = [a for a in builder.agents if a.death_year > burn_in_years]
    retained_ids = {a.id for a in retained}
    kept_edges = [
        e for e in builder.edges
        if e.agent_a in retained_ids and e.agent_b in retained_ids
    ]

    women = [a for a in builder.agents if a.sex == "female"]
    completed = [
        w.realized_children
        for w in women
        if w.birth_year + COMPLETED_FERTILITY_AGE < horizon_years
        and w.death_year > w.birth_year + COMPLETED_FERTILITY_AGE
    ]
    kind_counts = {kind: 0 for kind in EDGE_KINDS}
    for edge in kept_edges:
        kind_counts[edge.kind] += 1
    stats = GenerationStats(
        total_generated=len(builder.agents),
        retained=len(retained),
        edge_count=len(kept_edges),
        directed_ties=2 * len(kept_edges),
        mean_degree=2 * len(kept_edges) / len(retained) if retained else 0.0,
        completed_fertility_mean=float(np.mean(completed)) if completed else float("nan"),
        realized_fertility_mean=(
            float(np.mean([w.realized_children for w in women])) if women else float("nan")
        ),
        kind_counts=kind_counts,
    )
    return Population(
        agents=retained,
        edges=kept_edges,
        burn_in_years=burn_in_years,
        horizon_years=horizon_years,
        generation_seed=rng_seed,
        stats=stats,
        parameter_hash=_parameter_hash(
            tables, seed_count, horizon_years, burn_in_years, rng_seed, seed_birth_span
        ),
    )


def directed_roles(edge: RelationEdge, agents_by_id) -> list:
    """Both directed (inmate, susceptible, role) views of an edge.

    The role is the susceptible's relation to the inmate and selects the
    transmission-table row; ``child`` marks the parent-to-child direction,
    which only transmits once the child is an adult.
    """
    a = agents_by_id[edge.agent_a]
    b = agents_by_id[edge.agent_b]
    if edge.kind == "parent-child":
        parent_role = "mother" if a.sex == "female" else "father"
        return [(b.id, a.id, parent_role), (a.id, b.id, "child")]
    if edge.kind == "spouse":
        return [(a.id, b.id, "spouse"), (b.id, a.id, "spouse")]
    if edge.kind in ("sibling", "friend"):
        role_of_b = "sister" if b.sex == "female" else "brother"
        role_of_a = "sister" if a.sex == "female" else "brother"
        return [(a.id, b.id, role_of_b), (b.id, a.id, role_of_a)]
    raise ConfigurationError(f"unknown edge kind {edge.kind!r}")


POPULATION_FORMAT = "incarsim-population"
POPULATION_FORMAT_VERSION = 1

_AGENT_COLUMNS = (
    "id",
    "sex",
    "birth_year",
    "death_year",
    "x",
    "y",
    "mother_id",
    "father_id",
    "age_first_birth",
    "planned_children",
    "realized_children",
    "incarceration_spells",
)


def population_to_dict(population: Population) -> dict:
    agents = [
        [
            a.id,
            a.sex,
            a.birth_year,
            a.death_year,
            a.x,
            a.y,
            a.mother_id,
            a.father_id,
            a.age_first_birth,
            a.planned_children,
            a.realized_children,
            [list(spell) for spell in a.incarceration_spells],
        ]
        for a in population.agents
    ]
    return {
        "format": POPULATION_FORMAT,
        "version": POPULATION_FORMAT_VERSION,
        "metadata": {
            "burn_in_years": population.burn_in_years,
            "horizon_years": population.horizon_years,
            "generation_seed": population.generation_seed,
            "parameter_hash": population.parameter_hash,
            "stats": population.stats.as_dict(),
        },
        "agent_columns": list(_AGENT_COLUMNS),
        "agents": agents,
        "edges": [[e.agent_a, e.agent_b, e.kind] for e in population.edges],
    }


def population_from_dict(payload: dict) -> Population:
    if payload.get("format") != POPULATION_FORMAT:
        raise ConfigurationError(
            f"not a population file: format={payload.get('format')!r}"
        )
    if payload.get("version") != POPULATION_FORMAT_VERSION:
        raise ConfigurationError(
            f"unsupported population format version {payload.get('version')!r}"
        )
    if payload.get("agent_columns") != list(_AGENT_COLUMNS):
        raise ConfigurationError("population file has unexpected agent columns")
    meta = payload["metadata"]
    agents = [
        Agent(
            id=row[0],
            sex=row[1],
            birth_year=row[2],
            death_year=row[3],
            x=row[4],
            y=row[5],
            mother_id=row[6],
            father_id=row[7],
            age_first_birth=row[8],
            planned_children=row[9],
            realized_children=row[10],
            incarceration_spells=[tuple(spell) for spell in row[11]],
        )
        for row in payload["agents"]
    ]
    edges = [RelationEdge(row[0], row[1], row[2]) for row in payload["edges"]]
    stats_dict = dict(meta["stats"])
    stats = GenerationStats(**stats_dict)
    return Population(
        agents=agents,
        edges=edges,
        burn_in_years=meta["burn_in_years"],
        horizon_years=meta["horizon_years"],
        generation_seed=meta["generation_seed"],
        stats=stats,
        parameter_hash=meta["parameter_hash"],
    )


def save_population(population: Population, path) -> None:
    """Write a gzip-compressed JSON population file.

    The JSON is canonical (sorted keys, no whitespace) and the gzip header
    carries no timestamp, so saving the same population twice produces
    byte-identical files.
    """
    payload = population_to_dict(population)
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as handle:
        # filename="" keeps the gzip header free of the output path so the
        # bytes depend only on the population.
        with gzip.GzipFile(filename="", fileobj=handle, mode="wb", mtime=0) as zipped:
            zipped.write(text.encode("utf-8"))


def load_population(path) -> Population:
    with gzip.open(path, "rt", encoding="utf-8") as handle:
        payload = json.load(handle)
    return population_from_dict(payload)


def write_edge_csv(population: Population, path) -> None:
    """Directed edge-list export for graph tools.

    Two rows per undirected edge, one per direction: the role column names
    the susceptible's relation to the inmate. Parent-to-child rows carry the
    static role ``child``; the engine resolves the adult gate by age at
    transmission time.
    """
    agents_by_id = population.agents_by_id()
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["inmate_id", "susceptible_id", "kind", "role"])
        for edge in population.edges:
            for inmate_id, susceptible_id, role in directed_roles(edge, agents_by_id):
                writer.writerow([inmate_id, susceptible_id, edge.kind, role])
