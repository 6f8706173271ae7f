"""Ensemble statistics and reports computed from immutable replicate traces.

Everything here is a pure function of event logs, counts series, and the
population arrays: prevalence summaries with normal-approximation
confidence intervals, per-month Welch t-test log p-values between two
ensembles, recidivism breakdowns from (release, reinfection) pairs, joins
against external yearly observations, and CSV export of each artifact.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .engine.arrays import transmission_matrix
from .engine.core import (
    EVENT_DEATH,
    EVENT_RELEASE,
    INFECTION_CODES,
    Scenario,
    _kernel_inputs,
    ensure_arrays,
)
from .engine.kernel_py import INCARCERATED, SUSCEPTIBLE
from .errors import ConfigurationError

__all__ = [
    "PrevalenceSummary",
    "RecidivismReport",
    "summarize_ensemble",
    "prevalence_matrix",
    "log_pvalue_series",
    "recidivism_report",
    "next_month_infection_hazard",
    "overlay_external_series",
    "export_plot_csv",
    "DEFAULT_AGE_BANDS",
]

Z_95 = 1.959963984540054

# Age at release in completed years: [lower, upper) with None for open ends.
DEFAULT_AGE_BANDS = (
    ("<25", None, 25),
    ("25-34", 25, 35),
    ("35-44", 35, 45),
    ("45-54", 45, 55),
    ("55+", 55, None),
)

SPELL_BINS = ("1", "2", "3", "4+")


@dataclass(frozen=True)
class PrevalenceSummary:
    """Per-month ensemble mean prevalence with spread across replicates."""

    label: str
    months: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_replicates: int

    def __post_init__(self):
        for name in ("mean", "se", "ci_low", "ci_high"):
            values = getattr(self, name)
            if values.shape != self.months.shape:
                raise ConfigurationError(f"{name} misaligned with months")

    def at_month(self, month: int) -> float:
        index = np.searchsorted(self.months, month)
        if index >= self.months.size or self.months[index] != month:
            raise ConfigurationError(f"month {month} not covered by summary")
        return float(self.mean[index])


def prevalence_matrix(traces) -> np.ndarray:
    """(replicate, month) prevalence array; durations must agree."""
    traces = list(traces)
    if len(traces) < 2:
        raise ConfigurationError(
            f"need at least 2 traces to summarize, got {len(traces)}"
        )
    durations = {trace.duration_months for trace in traces}
    if len(durations) != 1:
        raise ConfigurationError(
            f"traces have mismatched durations: {sorted(durations)}"
        )
    return np.vstack([trace.prevalence() for trace in traces])


def summarize_ensemble(traces, label: str = "") -> PrevalenceSummary:
    """Mean, standard error, and 95% normal CI per month across replicates.

    The CI is mean +/- 1.96 se with bounds clipped into [0, 1], since a
    prevalence cannot leave the unit interval.
    """
    matrix = prevalence_matrix(traces)
    n = matrix.shape[0]
    mean = matrix.mean(axis=0)
    se = matrix.std(axis=0, ddof=1) / np.sqrt(n)
    half = Z_95 * se
    return PrevalenceSummary(
        label=label,
        months=np.arange(matrix.shape[1], dtype=np.int64),
        mean=mean,
        se=se,
        ci_low=np.clip(mean - half, 0.0, 1.0),
        ci_high=np.clip(mean + half, 0.0, 1.0),
        n_replicates=n,
    )


def log_pvalue_series(traces_a, traces_b) -> np.ndarray:
    """Per-month natural-log p-values of Welch's unequal-variance t-test.

    Both ensembles are compared month by month on replicate prevalences.
    Degenerate months where both samples have zero variance give log p = 0
    (p = 1) when the means agree and -inf when they differ.
    """
    a = prevalence_matrix(traces_a)
    b = prevalence_matrix(traces_b)
    if a.shape[1] != b.shape[1]:
        raise ConfigurationError(
            f"ensembles cover different durations: {a.shape[1] - 1} vs "
            f"{b.shape[1] - 1} months"
        )
    na, nb = a.shape[0], b.shape[0]
    mean_a, mean_b = a.mean(axis=0), b.mean(axis=0)
    # A column of identical values has exactly zero variance; computing it
    # through the mean would leave rounding noise and turn the degenerate
    # case into an enormous t statistic.
    constant_a = np.all(a == a[0], axis=0)
    constant_b = np.all(b == b[0], axis=0)
    var_a = np.where(constant_a, 0.0, a.var(axis=0, ddof=1))
    var_b = np.where(constant_b, 0.0, b.var(axis=0, ddof=1))

    log_p = np.zeros(a.shape[1])
    sq = var_a / na + var_b / nb
    degenerate = sq == 0.0
    log_p[degenerate & (a[0] != b[0])] = -np.inf

    regular = ~degenerate
    if np.any(regular):
        t_stat = (mean_a[regular] - mean_b[regular]) / np.sqrt(sq[regular])
        df_num = sq[regular] ** 2
        df_den = (var_a[regular] / na) ** 2 / (na - 1) + (
            var_b[regular] / nb
        ) ** 2 / (nb - 1)
        df = df_num / df_den
        log_p[regular] = np.log(2.0) + stats.t.logsf(np.abs(t_stat), df)
    return log_p


# ---------------------------------------------------------------------------
# Recidivism


@dataclass(frozen=True)
class RecidivismReport:
    """Release outcomes pooled over an ensemble's event logs.

    Every release is classified exactly once. Releases without a full
    alive, observed window of follow-up (the agent dies or the trace ends
    within ``window_months``) are censored and enter no denominator, no
    matter what happened first; the rest are returned (reinfected within
    the window) or survived. Rates are returned / (returned + survived).
    ``return_time_counts[m]`` counts returns m months after release,
    1 <= m <= window.
    """

    window_months: int
    n_releases: int
    n_censored: int
    rate_by_prior_spells: dict
    counts_by_prior_spells: dict
    rate_by_age_band: dict
    counts_by_age_band: dict
    return_time_counts: dict
    empty: bool = False

    @property
    def return_time_distribution(self) -> dict:
        total = sum(self.return_time_counts.values())
        if total == 0:
            return {}
        return {
            month: count / total
            for month, count in sorted(self.return_time_counts.items())
        }


def _spell_bins(max_spell_bin: int) -> tuple:
    return tuple(str(k) for k in range(1, max_spell_bin)) + (f"{max_spell_bin}+",)


def _spell_bin(prior_spells: int, bins: tuple) -> str:
    return bins[min(max(prior_spells, 1), len(bins)) - 1]


def _age_band(age_years: int, bands) -> str | None:
    for label, low, high in bands:
        if (low is None or age_years >= low) and (high is None or age_years < high):
            return label
    return None


def recidivism_report(
    population,
    traces,
    window_months: int = 36,
    age_bands=DEFAULT_AGE_BANDS,
    max_spell_bin: int = 4,
) -> RecidivismReport:
    """Recidivism breakdowns from pooled (release, next infection) pairs.

    The population supplies birth months for age at release; everything
    else comes from the event logs. A release only enters a denominator
    when the agent stays observable and alive for the full window.
    Prior-spell bins run 1 .. max_spell_bin-1 plus an open top bin;
    raising max_spell_bin un-lumps the tail for consecutive-jump
    comparisons.
    """
    if window_months < 1:
        raise ConfigurationError(f"window_months must be >= 1, got {window_months}")
    if max_spell_bin < 2:
        raise ConfigurationError(f"max_spell_bin must be >= 2, got {max_spell_bin}")
    arrays = ensure_arrays(population)
    spell_bins = _spell_bins(max_spell_bin)
    returned = {key: 0 for key in spell_bins}
    at_risk = {key: 0 for key in spell_bins}
    age_returned = {label: 0 for label, _, _ in age_bands}
    age_at_risk = {label: 0 for label, _, _ in age_bands}
    return_times = {}
    n_releases = 0
    n_censored = 0

    for trace in traces:
        months = trace.events["month"]
        agents = trace.events["agent"]
        codes = trace.events["code"]
        duration = trace.duration_months
        relevant = np.isin(codes, INFECTION_CODES + (EVENT_RELEASE, EVENT_DEATH))
        order = np.argsort(months[relevant], kind="stable")
        ev_month = months[relevant][order]
        ev_agent = agents[relevant][order]
        ev_code = codes[relevant][order]

        # Per-agent chronological event streams.
        streams = {}
        for month, agent, code in zip(
            ev_month.tolist(), ev_agent.tolist(), ev_code.tolist()
        ):
            streams.setdefault(agent, []).append((month, code))

        for agent, stream in streams.items():
            spells = 0
            death_month = duration + 1 + window_months
            for month, code in stream:
                if code == EVENT_DEATH:
                    death_month = month
            for index, (month, code) in enumerate(stream):
                if code in INFECTION_CODES:
                    spells += 1
                    continue
                if code != EVENT_RELEASE:
                    continue
                n_releases += 1
                next_infection = None
                for later_month, later_code in stream[index + 1 :]:
                    if later_code in INFECTION_CODES:
                        next_infection = later_month
                        break
                observable = (
                    month + window_months <= duration
                    and death_month > month + window_months
                )
                if not observable:
                    n_censored += 1
                    continue
                came_back = (
                    next_infection is not None
                    and next_infection - month <= window_months
                )
                spell_key = _spell_bin(spells, spell_bins)
                age_years = (month - int(arrays.birth_month[agent])) // 12
                age_key = _age_band(age_years, age_bands)
                at_risk[spell_key] += 1
                if age_key is not None:
                    age_at_risk[age_key] += 1
                if came_back:
                    returned[spell_key] += 1
                    if age_key is not None:
                        age_returned[age_key] += 1
                    delay = next_infection - month
                    return_times[delay] = return_times.get(delay, 0) + 1

    rate_by_spells = {
        key: returned[key] / at_risk[key] for key in spell_bins if at_risk[key] > 0
    }
    rate_by_age = {
        label: age_returned[label] / age_at_risk[label]
        for label, _, _ in age_bands
        if age_at_risk[label] > 0
    }
    return RecidivismReport(
        window_months=window_months,
        n_releases=n_releases,
        n_censored=n_censored,
        rate_by_prior_spells=rate_by_spells,
        counts_by_prior_spells={
            key: (returned[key], at_risk[key]) for key in spell_bins
        },
        rate_by_age_band=rate_by_age,
        counts_by_age_band={
            label: (age_returned[label], age_at_risk[label])
            for label, _, _ in age_bands
        },
        return_time_counts=dict(sorted(return_times.items())),
        empty=n_releases == 0,
    )


def next_month_infection_hazard(
    population, scenario: Scenario, status: np.ndarray, month: int
) -> np.ndarray:
    """Model-implied probability each agent is infected next month.

    A pure function of the current status array and the scenario: the
    complement-product of active incident edge probabilities, combined
    with the spontaneous rate for age-eligible susceptibles. Incarceration
    history does not enter, which is the engine's memorylessness property.
    """
    arrays = ensure_arrays(population)
    inputs = _kernel_inputs(arrays, scenario)
    survival = np.ones(arrays.n_agents)
    if scenario.contagion_enabled and inputs["edge_src"].size:
        src = inputs["edge_src"]
        dst = inputs["edge_target"]
        active = (
            (status[src] == INCARCERATED)
            & (status[dst] == SUSCEPTIBLE)
            & (month >= inputs["edge_activation"])
        )
        np.multiply.at(survival, dst[active], 1.0 - inputs["edge_prob"][active])
    if scenario.spontaneous_monthly_prob > 0.0:
        eligible = (status == SUSCEPTIBLE) & (month >= inputs["eligibility_month"])
        survival[eligible] *= 1.0 - scenario.spontaneous_monthly_prob
    hazard = 1.0 - survival
    hazard[status != SUSCEPTIBLE] = 0.0
    return hazard


# ---------------------------------------------------------------------------
# External overlays


def overlay_external_series(summaries, external_csv, start_year: int = 0) -> list:
    """Join simulated yearly prevalences with external (year, group) rows.

    ``summaries`` is one PrevalenceSummary or a dict keyed by group label.
    Simulated values are the ensemble means at months 12k; calendar year
    ``start_year + k`` maps to month 12k. External rows outside the
    simulated range or naming an unknown group are skipped with a warning;
    structurally bad rows raise. Returns one row dict per (group, year)
    with observed and residual set where external data exists.
    """
    if isinstance(summaries, PrevalenceSummary):
        label = summaries.label or "simulation"
        summaries = {label: summaries}
    if not summaries:
        raise ConfigurationError("no summaries supplied")

    observed = {}
    path = Path(external_csv)
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        header = set(reader.fieldnames or ())
        required = {"year", "group", "prevalence"}
        if not required <= header:
            raise ConfigurationError(
                f"{path}: external CSV needs columns {sorted(required)}, "
                f"found {sorted(header)}"
            )
        for row_number, row in enumerate(reader, start=2):
            try:
                year = int(row["year"])
                value = float(row["prevalence"])
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(
                    f"{path}: bad row {row_number}: {exc}"
                ) from None
            group = (row["group"] or "").strip()
            if group not in summaries:
                warnings.warn(
                    f"{path}: row {row_number}: unknown group {group!r}, skipped"
                )
                continue
            summary = summaries[group]
            offset = year - start_year
            last_year = int(summary.months[-1]) // 12
            if offset < 0 or offset > last_year:
                warnings.warn(
                    f"{path}: row {row_number}: year {year} outside simulated "
                    f"range, skipped"
                )
                continue
            observed[(group, year)] = value

    rows = []
    for group in sorted(summaries):
        summary = summaries[group]
        last_year = int(summary.months[-1]) // 12
        for k in range(last_year + 1):
            simulated = summary.at_month(12 * k)
            key = (group, start_year + k)
            row = {
                "year": start_year + k,
                "group": group,
                "simulated": simulated,
                "observed": observed.get(key),
                "residual": None,
            }
            if row["observed"] is not None:
                row["residual"] = abs(simulated - row["observed"])
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# CSV export


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format(value) for value in row])


def export_plot_csv(artifact, path) -> None:
    """Write an analysis artifact as a documented-schema CSV.

    Schemas by artifact type:
      PrevalenceSummary / list of them:
          label,month,mean,se,ci_low,ci_high
      log p-value array (np.ndarray):
          month,log_p
      RecidivismReport:
          section,key,numerator,denominator,value
          (sections: meta, prior_spells, age_band, return_time)
      overlay rows (list of dicts from overlay_external_series):
          year,group,simulated,observed,residual
    Floats are written with full round-trip precision.
    """
    if isinstance(artifact, PrevalenceSummary):
        artifact = [artifact]
    if isinstance(artifact, list) and artifact and isinstance(artifact[0], PrevalenceSummary):
        rows = []
        for summary in artifact:
            for i, month in enumerate(summary.months):
                rows.append(
                    (
                        summary.label,
                        int(month),
                        summary.mean[i],
                        summary.se[i],
                        summary.ci_low[i],
                        summary.ci_high[i],
                    )
                )
        _write_rows(path, ("label", "month", "mean", "se", "ci_low", "ci_high"), rows)
        return
    if isinstance(artifact, np.ndarray):
        rows = [(month, value) for month, value in enumerate(artifact)]
        _write_rows(path, ("month", "log_p"), rows)
        return
    if isinstance(artifact, RecidivismReport):
        rows = [
            ("meta", "window_months", None, None, artifact.window_months),
            ("meta", "n_releases", None, None, artifact.n_releases),
            ("meta", "n_censored", None, None, artifact.n_censored),
            ("meta", "empty", None, None, int(artifact.empty)),
        ]
        for key, (numerator, denominator) in artifact.counts_by_prior_spells.items():
            rate = artifact.rate_by_prior_spells.get(key)
            rows.append(("prior_spells", key, numerator, denominator, rate))
        for label, (numerator, denominator) in artifact.counts_by_age_band.items():
            rate = artifact.rate_by_age_band.get(label)
            rows.append(("age_band", label, numerator, denominator, rate))
        total = sum(artifact.return_time_counts.values())
        for month, count in artifact.return_time_counts.items():
            rows.append(("return_time", month, count, total, count / total))
        _write_rows(path, ("section", "key", "numerator", "denominator", "value"), rows)
        return
    if isinstance(artifact, list) and (
        not artifact or isinstance(artifact[0], dict)
    ):
        header = ("year", "group", "simulated", "observed", "residual")
        rows = [tuple(row[name] for name in header) for row in artifact]
        _write_rows(path, header, rows)
        return
    raise ConfigurationError(
        f"no CSV schema for artifact of type {type(artifact).__name__}"
    )
