# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled monthly kernel.

Mirrors ``kernel_py.month_pass`` phase for phase and consumes the replicate
RNG in the same order (attempt uniforms in edge order, then sentence uniforms
in ascending agent order, then the spontaneous blocks), so traces are
bit-identical across backends. Uniforms are pulled one at a time through the
bit generator's ``next_double`` slot, which is exactly how
``Generator.random`` fills a block.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t

from ..errors import ConsistencyError

cnp.import_array()

BACKEND_NAME = "cython"

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

cdef cnp.int8_t ST_SUSCEPTIBLE = 0
cdef cnp.int8_t ST_INCARCERATED = 1
cdef cnp.int8_t ST_DEAD = 2
cdef cnp.int8_t ST_UNBORN = 3

cdef int EV_EDGE = 1
cdef int EV_SPONTANEOUS = 2
cdef int EV_RELEASE = 3
cdef int EV_DEATH = 4
cdef int EV_BIRTH = 5


cdef inline long _upper_bound(const double[::1] cdf, double u) noexcept nogil:
    # First index with cdf[idx] > u; matches searchsorted(side="right").
    cdef Py_ssize_t lo = 0
    cdef Py_ssize_t hi = cdf.shape[0]
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    return <long>lo


cdef inline long _draw_sentence(
    bitgen_t *bg,
    const double[::1] cdf,
    long floor,
    long support_max,
) noexcept nogil:
    cdef double u = bg.next_double(bg.state)
    cdef long idx = _upper_bound(cdf, u)
    if idx < floor:
        idx = floor
    if idx > support_max:
        idx = support_max
    return idx


def month_pass(
    long month,
    cnp.int8_t[::1] status,
    cnp.int32_t[::1] remaining,
    const cnp.int64_t[::1] birth_month,
    const cnp.int64_t[::1] death_month,
    const cnp.int64_t[::1] edge_src,
    const cnp.int64_t[::1] edge_target,
    const double[::1] edge_prob,
    const cnp.int64_t[::1] edge_activation,
    const cnp.int64_t[::1] eligibility_month,
    const double[::1] sentence_cdf,
    long sentence_floor,
    long sentence_support_max,
    double spontaneous_prob,
    bint contagion_enabled,
    object rng,
    list events,
):
    """Advance one month in place; returns (alive, incarcerated) counts."""
    cdef object capsule = rng.bit_generator.capsule
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")
    if bg == NULL:
        raise RuntimeError("invalid BitGenerator capsule")

    cdef Py_ssize_t n_agents = status.shape[0]
    cdef Py_ssize_t n_edges = edge_src.shape[0]
    cdef Py_ssize_t i, k, e, t
    cdef long sentence
    cdef double u

    cdef cnp.uint8_t[::1] released_flag = np.zeros(n_agents, dtype=np.uint8)

    # Phase 1: demographics. Deaths remove agents regardless of status (no
    # release is logged for agents who die in prison); births add
    # susceptibles.
    for i in range(n_agents):
        if death_month[i] == month and status[i] != ST_UNBORN and status[i] != ST_DEAD:
            events.append((month, i, EV_DEATH, 0, -1))
            status[i] = ST_DEAD
    for i in range(n_agents):
        if birth_month[i] == month:
            events.append((month, i, EV_BIRTH, 0, -1))
            status[i] = ST_SUSCEPTIBLE

    # Phase 2: releases. Agents whose counter reaches zero return to the
    # susceptible pool but cannot be reinfected until next month.
    for i in range(n_agents):
        if status[i] == ST_INCARCERATED:
            remaining[i] -= 1
            if remaining[i] == 0:
                events.append((month, i, EV_RELEASE, 0, -1))
                status[i] = ST_SUSCEPTIBLE
                released_flag[i] = 1

    # Phase 3: edge contagion. The attempt set is fixed at phase start, one
    # independent Bernoulli per (infectious inmate, susceptible neighbor)
    # pair in edge order; the first success in that order is the source.
    cdef cnp.int64_t[::1] att_buf
    cdef cnp.int64_t[::1] succ_buf
    cdef cnp.uint8_t[::1] newly_flag
    cdef cnp.int64_t[::1] src_of
    cdef Py_ssize_t n_att, n_succ, n_new, applied
    if contagion_enabled and n_edges > 0:
        att_buf = np.empty(n_edges, dtype=np.int64)
        n_att = 0
        for e in range(n_edges):
            if (
                status[edge_src[e]] == ST_INCARCERATED
                and status[edge_target[e]] == ST_SUSCEPTIBLE
                and released_flag[edge_target[e]] == 0
                and month >= edge_activation[e]
            ):
                att_buf[n_att] = e
                n_att += 1
        if n_att > 0:
            succ_buf = np.empty(n_att, dtype=np.int64)
            n_succ = 0
            for k in range(n_att):
                e = att_buf[k]
                u = bg.next_double(bg.state)
                if u < edge_prob[e]:
                    succ_buf[n_succ] = e
                    n_succ += 1
            if n_succ > 0:
                newly_flag = np.zeros(n_agents, dtype=np.uint8)
                src_of = np.empty(n_agents, dtype=np.int64)
                n_new = 0
                for k in range(n_succ):
                    e = succ_buf[k]
                    t = edge_target[e]
                    if newly_flag[t] == 0:
                        newly_flag[t] = 1
                        src_of[t] = edge_src[e]
                        n_new += 1
                # Sentence uniforms are consumed in ascending agent order.
                applied = 0
                for t in range(n_agents):
                    if newly_flag[t]:
                        sentence = _draw_sentence(
                            bg, sentence_cdf, sentence_floor, sentence_support_max
                        )
                        status[t] = ST_INCARCERATED
                        # The counter includes the infection month itself:
                        # the agent transmits during exactly sentence months
                        # starting next month and is released the month after
                        # the last one.
                        remaining[t] = <cnp.int32_t>(sentence + 1)
                        events.append((month, t, EV_EDGE, sentence, src_of[t]))
                        applied += 1
                        if applied == n_new:
                            break

    # Phase 4: spontaneous infections among the remaining eligible
    # susceptibles.
    cdef cnp.int64_t[::1] hit_buf
    cdef Py_ssize_t n_hit
    if spontaneous_prob > 0.0:
        hit_buf = np.empty(n_agents, dtype=np.int64)
        n_hit = 0
        for t in range(n_agents):
            if (
                status[t] == ST_SUSCEPTIBLE
                and released_flag[t] == 0
                and month >= eligibility_month[t]
            ):
                u = bg.next_double(bg.state)
                if u < spontaneous_prob:
                    hit_buf[n_hit] = t
                    n_hit += 1
        for k in range(n_hit):
            t = hit_buf[k]
            sentence = _draw_sentence(
                bg, sentence_cdf, sentence_floor, sentence_support_max
            )
            status[t] = ST_INCARCERATED
            remaining[t] = <cnp.int32_t>(sentence + 1)
            events.append((month, t, EV_SPONTANEOUS, sentence, -1))

    # Phase 5: record. Conservation and counter sanity are checked every
    # month; a violation aborts the replicate.
    cdef long n_incarcerated = 0
    cdef long n_susceptible = 0
    cdef bint spent = False
    for i in range(n_agents):
        if status[i] == ST_INCARCERATED:
            n_incarcerated += 1
            if remaining[i] < 1:
                spent = True
        elif status[i] == ST_SUSCEPTIBLE:
            n_susceptible += 1
    if spent:
        raise ConsistencyError(f"month {month}: incarcerated agent with spent counter")
    return n_susceptible + n_incarcerated, n_incarcerated
