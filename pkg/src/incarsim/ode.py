"""Mean-field SIS analysis of the incarceration contagion.

Ignoring births, deaths, and network structure, the fraction incarcerated
I(t) follows dI/dt = p I (1 - I) - I / s with transmission rate p (mean
transmissions per infected person per month) and mean sentence s months.
The endemic steady state is 1 - 1/(ps) when ps > 1 and 0 otherwise, so
s_c = 1/p is the critical sentence length separating extinction from
persistence. The rate p is estimated from simulation event logs as the
pooled ratio of edge-sourced infections to incarcerated person-months, so
network saturation is folded into the rate rather than modelled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine.core import EVENT_EDGE, EVENT_SEED, EVENT_SPONTANEOUS
from .errors import CalibrationError, ConfigurationError

__all__ = [
    "OdeParams",
    "steady_state_prevalence",
    "critical_sentence",
    "exposure_summary",
    "calibrate_mean_rate",
    "ode_report",
]


@dataclass(frozen=True)
class OdeParams:
    """Mean-field parameter pair: transmission rate and mean sentence."""

    p: float
    s: float

    def __post_init__(self):
        if not self.p >= 0:
            raise ConfigurationError(f"transmission rate p must be >= 0, got {self.p}")
        if not self.s >= 0:
            raise ConfigurationError(f"mean sentence s must be >= 0, got {self.s}")

    @property
    def reproduction_number(self) -> float:
        return self.p * self.s

    def steady_state(self) -> float:
        return steady_state_prevalence(self.p, self.s)


def steady_state_prevalence(p: float, s: float) -> float:
    """Endemic prevalence of the mean-field SIS model: 0 below threshold,
    1 - 1/(ps) above it."""
    params = OdeParams(p=p, s=s)
    ps = params.reproduction_number
    if ps <= 1.0:
        return 0.0
    return 1.0 - 1.0 / ps


def critical_sentence(p: float) -> float:
    """Critical infectious duration s_c = 1/p months."""
    if not p > 0:
        raise ConfigurationError(
            f"critical sentence undefined for transmission rate {p}"
        )
    return 1.0 / p


@dataclass(frozen=True)
class ExposureSummary:
    """Pooled infection counts and exposure from an ensemble's event logs."""

    edge_infections: int
    seed_infections: int
    spontaneous_infections: int
    person_months: int

    @property
    def rate(self) -> float:
        if self.person_months <= 0:
            raise CalibrationError(
                "no incarcerated person-months in the supplied traces"
            )
        return self.edge_infections / self.person_months


def exposure_summary(traces) -> ExposureSummary:
    """Count infections by cause and incarcerated person-months of exposure.

    An agent incarcerated at the end of month m is exposed (can transmit)
    during month m+1 unless released or dead by then, so the exposure during
    month m is the end-of-month count minus that month's new infections:
    newcomers have not transmitted yet, while everyone released or dead at
    month m was removed before transmission.
    """
    edge = seed = spontaneous = 0
    person_months = 0
    for trace in traces:
        codes = trace.events["code"]
        months = trace.events["month"]
        edge += int(np.count_nonzero(codes == EVENT_EDGE))
        seed += int(np.count_nonzero(codes == EVENT_SEED))
        spontaneous += int(np.count_nonzero(codes == EVENT_SPONTANEOUS))
        duration = trace.counts.shape[0] - 1
        infection_mask = (codes == EVENT_EDGE) | (codes == EVENT_SPONTANEOUS)
        new_per_month = np.bincount(
            months[infection_mask], minlength=duration + 1
        )
        person_months += int(
            (trace.counts[1:, 1] - new_per_month[1:]).sum()
        )
    return ExposureSummary(
        edge_infections=edge,
        seed_infections=seed,
        spontaneous_infections=spontaneous,
        person_months=person_months,
    )


def calibrate_mean_rate(traces) -> float:
    """Population-wide mean transmission rate p from ensemble event logs.

    p = edge-sourced infections / incarcerated person-months, pooled over
    the traces; seed and spontaneous infections are excluded from the
    numerator but their carriers count as exposure.
    """
    return exposure_summary(traces).rate


def ode_report(traces_by_label: dict, sentence_means: dict) -> dict:
    """Per-scenario and pooled rates with thresholds and steady states.

    ``traces_by_label`` maps scenario labels to trace lists;
    ``sentence_means`` maps the same labels to mean sentence months. The
    pooled rate drives one critical sentence and a steady state per
    scenario mean.
    """
    missing = set(traces_by_label) - set(sentence_means)
    if missing:
        raise ConfigurationError(
            f"no sentence mean supplied for scenario(s): {sorted(missing)}"
        )
    per_scenario = {}
    pooled_traces = []
    for label, traces in traces_by_label.items():
        traces = list(traces)
        pooled_traces.extend(traces)
        summary = exposure_summary(traces)
        per_scenario[label] = {
            "p": summary.rate,
            "edge_infections": summary.edge_infections,
            "person_months": summary.person_months,
        }
    pooled = exposure_summary(pooled_traces)
    p = pooled.rate
    report = {
        "pooled_p": p,
        "critical_sentence": critical_sentence(p) if p > 0 else float("inf"),
        "per_scenario": per_scenario,
        "steady_states": {
            label: steady_state_prevalence(p, sentence_means[label])
            for label in traces_by_label
        },
        "sentence_means": dict(sentence_means),
    }
    return report
