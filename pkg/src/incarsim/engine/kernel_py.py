"""Pure-numpy monthly kernel.

One call advances a replicate by one month through the fixed phase order:
demographics, releases, edge contagion, spontaneous infections. The compiled
kernel implements the same pass; both consume random numbers in an identical
order (attempt uniforms in edge order, then sentence uniforms in ascending
agent order, then the spontaneous blocks), so traces are bit-identical
across backends.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConsistencyError

BACKEND_NAME = "python"

SUSCEPTIBLE = 0
INCARCERATED = 1
DEAD = 2
UNBORN = 3

EVENT_SEED = 0
EVENT_EDGE = 1
EVENT_SPONTANEOUS = 2
EVENT_RELEASE = 3
EVENT_DEATH = 4
EVENT_BIRTH = 5


def sentences_from_uniforms(u, sentence_cdf, floor, support_max):
    idx = np.searchsorted(sentence_cdf, u, side="right")
    return np.clip(idx, floor, support_max).astype(np.int64)


def month_pass(
    month,
    status,
    remaining,
    birth_month,
    death_month,
    edge_src,
    edge_target,
    edge_prob,
    edge_activation,
    eligibility_month,
    sentence_cdf,
    sentence_floor,
    sentence_support_max,
    spontaneous_prob,
    contagion_enabled,
    rng,
    events,
):
    """Advance one month in place; returns (alive, incarcerated) counts."""
    # Phase 1: demographics. Deaths remove agents regardless of status (no
    # release is logged for agents who die in prison); births add
    # susceptibles.
    dying = np.flatnonzero((death_month == month) & (status != UNBORN) & (status != DEAD))
    for agent in dying:
        events.append((month, int(agent), EVENT_DEATH, 0, -1))
    status[dying] = DEAD
    born = np.flatnonzero(birth_month == month)
    for agent in born:
        events.append((month, int(agent), EVENT_BIRTH, 0, -1))
    status[born] = SUSCEPTIBLE

    # Phase 2: releases. Agents whose counter reaches zero return to the
    # susceptible pool but cannot be reinfected until next month.
    incarcerated = status == INCARCERATED
    remaining[incarcerated] -= 1
    released = incarcerated & (remaining == 0)
    released_idx = np.flatnonzero(released)
    for agent in released_idx:
        events.append((month, int(agent), EVENT_RELEASE, 0, -1))
    status[released_idx] = SUSCEPTIBLE

    # Phase 3: edge contagion. The attempt set is fixed at phase start, one
    # independent Bernoulli per (infectious inmate, susceptible neighbor)
    # pair in edge order; the first success in that order is the source.
    if contagion_enabled and edge_src.size:
        infectious = status == INCARCERATED
        attempts = np.flatnonzero(
            infectious[edge_src]
            & (status[edge_target] == SUSCEPTIBLE)
            & ~released[edge_target]
            & (month >= edge_activation)
        )
        if attempts.size:
            u = rng.random(attempts.size)
            successes = attempts[u < edge_prob[attempts]]
            if successes.size:
                newly, first = np.unique(edge_target[successes], return_index=True)
                sources = edge_src[successes[first]]
                sentences = sentences_from_uniforms(
                    rng.random(newly.size),
                    sentence_cdf,
                    sentence_floor,
                    sentence_support_max,
                )
                status[newly] = INCARCERATED
                # The counter includes the infection month itself: the agent
                # transmits during exactly sentence months starting next
                # month and is released the month after the last one.
                remaining[newly] = sentences + 1
                for agent, source, sentence in zip(newly, sources, sentences):
                    events.append(
                        (month, int(agent), EVENT_EDGE, int(sentence), int(source))
                    )

    # Phase 4: spontaneous infections among the remaining eligible
    # susceptibles.
    if spontaneous_prob > 0.0:
        targets = np.flatnonzero(
            (status == SUSCEPTIBLE) & ~released & (month >= eligibility_month)
        )
        if targets.size:
            u = rng.random(targets.size)
            hits = targets[u < spontaneous_prob]
            if hits.size:
                sentences = sentences_from_uniforms(
                    rng.random(hits.size),
                    sentence_cdf,
                    sentence_floor,
                    sentence_support_max,
                )
                status[hits] = INCARCERATED
                remaining[hits] = sentences + 1
                for agent, sentence in zip(hits, sentences):
                    events.append(
                        (month, int(agent), EVENT_SPONTANEOUS, int(sentence), -1)
                    )

    # Phase 5: record. Conservation and counter sanity are checked every
    # month; a violation aborts the replicate.
    n_incarcerated = int(np.count_nonzero(status == INCARCERATED))
    n_alive = int(np.count_nonzero(status == SUSCEPTIBLE)) + n_incarcerated
    if np.any(remaining[status == INCARCERATED] < 1):
        raise ConsistencyError(f"month {month}: incarcerated agent with spent counter")
    return n_alive, n_incarcerated
