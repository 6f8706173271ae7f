"""Ensemble statistics: summaries, log p-values, recidivism, exports."""

import csv
import warnings

import numpy as np
import pytest
from scipy import stats

from incarsim.analytics import (
    DEFAULT_AGE_BANDS,
    PrevalenceSummary,
    export_plot_csv,
    log_pvalue_series,
    next_month_infection_hazard,
    overlay_external_series,
    prevalence_matrix,
    recidivism_report,
    summarize_ensemble,
)
from incarsim.engine import INCARCERATED, Scenario, ensure_arrays
from incarsim.engine.core import (
    EVENT_DEATH,
    EVENT_EDGE,
    EVENT_RELEASE,
    EVENT_SEED,
    EVENT_SPONTANEOUS,
)
from incarsim.errors import ConfigurationError
from incarsim.popgen import RelationEdge

from conftest import FakeTrace, adult, make_population


def constant_trace(prevalences, alive=100):
    counts = [[alive, int(round(p * alive))] for p in prevalences]
    return FakeTrace(counts, [])


class TestSummarize:
    def test_toy_mean_and_se(self):
        traces = [constant_trace([p, p], alive=10) for p in (0.1, 0.2, 0.3)]
        summary = summarize_ensemble(traces, label="toy")
        assert summary.mean[0] == pytest.approx(0.2)
        assert summary.se[0] == pytest.approx(0.1 / np.sqrt(3), abs=1e-10)
        assert summary.se[0] == pytest.approx(0.0577, abs=1e-4)
        assert summary.label == "toy"
        assert summary.n_replicates == 3

    def test_identical_traces_have_zero_width_ci(self):
        traces = [constant_trace([0.25] * 5) for _ in range(4)]
        summary = summarize_ensemble(traces)
        assert np.all(summary.mean == 0.25)
        assert np.all(summary.se == 0.0)
        assert np.all(summary.ci_low == 0.25)
        assert np.all(summary.ci_high == 0.25)

    def test_ci_brackets_mean_and_stays_in_unit_interval(self):
        traces = [
            constant_trace([0.0, 0.9]),
            constant_trace([0.02, 0.1]),
            constant_trace([0.0, 0.95]),
        ]
        summary = summarize_ensemble(traces)
        assert np.all(summary.ci_low <= summary.mean)
        assert np.all(summary.mean <= summary.ci_high)
        assert np.all(summary.ci_low >= 0.0)
        assert np.all(summary.ci_high <= 1.0)

    def test_permutation_invariance(self):
        traces = [
            constant_trace(np.linspace(0.01 * i, 0.05 * i, 7)) for i in range(1, 6)
        ]
        forward = summarize_ensemble(traces)
        backward = summarize_ensemble(traces[::-1])
        # Permutation-invariant as a statistic; summation order may move
        # the floating-point result by an ulp.
        assert np.allclose(forward.mean, backward.mean, rtol=1e-14, atol=0)
        assert np.allclose(forward.se, backward.se, rtol=1e-12, atol=1e-16)

    def test_input_validation(self):
        with pytest.raises(ConfigurationError):
            summarize_ensemble([constant_trace([0.1])])
        with pytest.raises(ConfigurationError):
            prevalence_matrix(
                [constant_trace([0.1, 0.1]), constant_trace([0.1, 0.1, 0.1])]
            )

    def test_at_month_accessor(self):
        summary = summarize_ensemble(
            [constant_trace([0.1, 0.2]), constant_trace([0.3, 0.4])]
        )
        assert summary.at_month(1) == pytest.approx(0.3)
        with pytest.raises(ConfigurationError):
            summary.at_month(7)


class TestLogPValues:
    def test_ensemble_against_itself_is_nonsignificant(self):
        rng = np.random.default_rng(0)
        traces = [
            constant_trace(0.2 + 0.01 * rng.standard_normal(6), alive=10_000)
            for _ in range(8)
        ]
        log_p = log_pvalue_series(traces, traces)
        assert np.allclose(log_p, 0.0, atol=1e-12)

    def test_degenerate_months(self):
        same = [constant_trace([0.1, 0.2]) for _ in range(3)]
        other = [constant_trace([0.1, 0.5]) for _ in range(3)]
        log_p = log_pvalue_series(same, other)
        assert log_p[0] == 0.0
        assert log_p[1] == -np.inf

    def test_matches_scipy_welch_oracle(self):
        rng = np.random.default_rng(42)
        a_values = 0.10 + 0.02 * rng.standard_normal((6, 4))
        b_values = 0.13 + 0.03 * rng.standard_normal((9, 4))
        traces_a = [constant_trace(row, alive=1_000_000) for row in a_values]
        traces_b = [constant_trace(row, alive=1_000_000) for row in b_values]
        a = prevalence_matrix(traces_a)
        b = prevalence_matrix(traces_b)
        log_p = log_pvalue_series(traces_a, traces_b)
        for month in range(a.shape[1]):
            expected = stats.ttest_ind(
                a[:, month], b[:, month], equal_var=False
            ).pvalue
            assert log_p[month] == pytest.approx(np.log(expected), rel=1e-9)

    def test_disjoint_support_grows_with_sample_size(self):
        rng = np.random.default_rng(1)

        def build(n, center):
            return [
                constant_trace(center + 0.005 * rng.standard_normal(3), alive=10_000)
                for _ in range(n)
            ]

        small = log_pvalue_series(build(5, 0.1), build(5, 0.3))
        large = log_pvalue_series(build(40, 0.1), build(40, 0.3))
        assert np.all(small < np.log(0.001))
        assert np.all(large < small)

    def test_mismatched_durations_rejected(self):
        with pytest.raises(ConfigurationError):
            log_pvalue_series(
                [constant_trace([0.1, 0.2])] * 2, [constant_trace([0.1])] * 2
            )


def release_log_population(n_agents=6, birth_year=100):
    agents = [adult(i, birth_year=birth_year) for i in range(n_agents)]
    return make_population(agents, [])


class TestRecidivism:
    def test_definition_trace(self):
        # Released at month 10, reinfected at month 20: one return counted
        # at 10 months since release.
        population = release_log_population()
        rows = [
            (0, 0, EVENT_SEED, 9, -1),
            (10, 0, EVENT_RELEASE, 0, -1),
            (20, 0, EVENT_EDGE, 5, 3),
        ]
        trace = FakeTrace([[6, 1]] * 101, rows)
        report = recidivism_report(population, [trace])
        assert not report.empty
        assert report.n_releases == 2 - 1  # the second spell never ends
        assert report.rate_by_prior_spells == {"1": 1.0}
        assert report.return_time_counts == {10: 1}
        assert report.return_time_distribution == {10: 1.0}

    def test_never_reinfected_counts_as_zero_rate(self):
        population = release_log_population()
        rows = [
            (0, 0, EVENT_SEED, 9, -1),
            (10, 0, EVENT_RELEASE, 0, -1),
        ]
        trace = FakeTrace([[6, 1]] * 101, rows)
        report = recidivism_report(population, [trace])
        assert report.rate_by_prior_spells == {"1": 0.0}
        assert report.return_time_counts == {}

    def test_censoring_by_trace_end_and_death(self):
        population = release_log_population()
        # Release at month 80 of a 100-month trace: only 20 months of
        # follow-up, censored even though it returned at +5.
        early_return = [
            (0, 0, EVENT_SEED, 9, -1),
            (80, 0, EVENT_RELEASE, 0, -1),
            (85, 0, EVENT_EDGE, 5, 1),
        ]
        # Release at month 10 but dead at month 30: censored.
        dies = [
            (0, 1, EVENT_SEED, 9, -1),
            (10, 1, EVENT_RELEASE, 0, -1),
            (30, 1, EVENT_DEATH, 0, -1),
        ]
        trace = FakeTrace([[6, 1]] * 101, early_return + dies)
        report = recidivism_report(population, [trace])
        assert report.n_releases == 2
        assert report.n_censored == 2
        assert report.rate_by_prior_spells == {}
        assert report.return_time_counts == {}
        # Every release classified exactly once.
        at_risk = sum(d for _, d in report.counts_by_prior_spells.values())
        assert report.n_releases == report.n_censored + at_risk

    def test_window_boundary(self):
        population = release_log_population()
        on_boundary = [
            (0, 0, EVENT_SEED, 9, -1),
            (10, 0, EVENT_RELEASE, 0, -1),
            (46, 0, EVENT_EDGE, 5, 1),
        ]
        past_boundary = [
            (0, 1, EVENT_SEED, 9, -1),
            (10, 1, EVENT_RELEASE, 0, -1),
            (47, 1, EVENT_EDGE, 5, 2),
        ]
        trace = FakeTrace([[6, 2]] * 101, on_boundary + past_boundary)
        report = recidivism_report(population, [trace], window_months=36)
        assert report.counts_by_prior_spells["1"] == (1, 2)
        assert report.return_time_counts == {36: 1}

    def test_spell_bins_accumulate(self):
        population = release_log_population()
        rows = []
        month = 0
        agent = 0
        rows.append((0, agent, EVENT_SEED, 9, -1))
        # Five spells: releases end spells 1..5, classified 1,2,3,4+,4+.
        release_months = []
        for spell in range(5):
            month += 10
            rows.append((month, agent, EVENT_RELEASE, 0, -1))
            release_months.append(month)
            month += 2
            if spell < 4:
                rows.append((month, agent, EVENT_SPONTANEOUS, 5, -1))
        trace = FakeTrace([[6, 1]] * 201, rows)
        report = recidivism_report(population, [trace])
        counts = report.counts_by_prior_spells
        assert counts["1"] == (1, 1)
        assert counts["2"] == (1, 1)
        assert counts["3"] == (1, 1)
        assert counts["4+"] == (1, 2)
        assert report.rate_by_prior_spells["4+"] == 0.5

        # A wider top bin un-lumps the tail; a narrower one aggregates it.
        wide = recidivism_report(population, [trace], max_spell_bin=5)
        assert tuple(wide.counts_by_prior_spells) == ("1", "2", "3", "4", "5+")
        assert wide.counts_by_prior_spells["4"] == (1, 1)
        assert wide.counts_by_prior_spells["5+"] == (0, 1)
        narrow = recidivism_report(population, [trace], max_spell_bin=2)
        assert tuple(narrow.counts_by_prior_spells) == ("1", "2+")
        assert narrow.counts_by_prior_spells["2+"] == (3, 4)
        with pytest.raises(ConfigurationError, match="max_spell_bin"):
            recidivism_report(population, [trace], max_spell_bin=1)

    def test_age_bands(self):
        # Two agents released at month 10: one aged 20, one aged 60.
        agents = [adult(0, birth_year=133), adult(1, birth_year=90, death_year=199)]
        population = make_population(agents, [])
        arrays = ensure_arrays(population)
        rows = []
        for agent in (0, 1):
            rows.append((0, agent, EVENT_SEED, 9, -1))
            rows.append((10, agent, EVENT_RELEASE, 0, -1))
        trace = FakeTrace([[2, 0]] * 101, rows)
        report = recidivism_report(population, [trace])
        young_age = (10 - int(arrays.birth_month[0])) // 12
        old_age = (10 - int(arrays.birth_month[1])) // 12
        assert young_age < 25 and old_age >= 55
        assert report.counts_by_age_band["<25"] == (0, 1)
        assert report.counts_by_age_band["55+"] == (0, 1)

    def test_empty_report_flagged(self):
        population = release_log_population()
        trace = FakeTrace([[6, 0]] * 5, [])
        report = recidivism_report(population, [trace])
        assert report.empty
        assert report.n_releases == 0
        with pytest.raises(ConfigurationError):
            recidivism_report(population, [trace], window_months=0)

    def test_pooling_across_traces(self):
        population = release_log_population()
        returning = FakeTrace(
            [[6, 1]] * 101,
            [
                (0, 0, EVENT_SEED, 9, -1),
                (10, 0, EVENT_RELEASE, 0, -1),
                (20, 0, EVENT_EDGE, 5, 3),
            ],
        )
        surviving = FakeTrace(
            [[6, 1]] * 101,
            [
                (0, 0, EVENT_SEED, 9, -1),
                (10, 0, EVENT_RELEASE, 0, -1),
            ],
        )
        report = recidivism_report(population, [returning, surviving])
        assert report.counts_by_prior_spells["1"] == (1, 2)
        assert report.rate_by_prior_spells["1"] == 0.5


class TestHazard:
    def test_edge_and_spontaneous_composition(self, white_dist, table):
        inmate = adult(0, sex="male")
        brother = adult(1, sex="male")
        sister = adult(2, sex="female")
        population = make_population(
            [inmate, brother, sister],
            [RelationEdge(0, 1, "sibling"), RelationEdge(0, 2, "sibling")],
        )
        scenario = Scenario(
            label="w",
            sentence_dist=white_dist,
            transmission=table,
            spontaneous_monthly_prob=0.002,
            allow_mixed_drivers=True,
        )
        arrays = ensure_arrays(population)
        status = np.zeros(arrays.n_agents, dtype=np.int8)
        status[0] = INCARCERATED
        hazard = next_month_infection_hazard(population, scenario, status, month=1)
        p_brother = table.cells[("brother", "male")]
        p_sister = table.cells[("sister", "male")]
        assert hazard[0] == 0.0
        assert hazard[1] == pytest.approx(1 - (1 - p_brother) * (1 - 0.002))
        assert hazard[2] == pytest.approx(1 - (1 - p_sister) * (1 - 0.002))

    def test_depends_only_on_current_state(self, white_dist, table):
        population = make_population(
            [adult(0), adult(1)], [RelationEdge(0, 1, "sibling")]
        )
        scenario = Scenario(label="w", sentence_dist=white_dist, transmission=table)
        status = np.zeros(2, dtype=np.int8)
        status[0] = INCARCERATED
        # The same status array must give the same hazards regardless of
        # any incarceration history bookkeeping on the population object.
        before = next_month_infection_hazard(population, scenario, status, month=1)
        population.agents[1].incarceration_spells = [(1, 12), (40, 6)]
        after = next_month_infection_hazard(population, scenario, status, month=1)
        assert np.array_equal(before, after)


def summary_pair():
    black = summarize_ensemble(
        [constant_trace(np.linspace(0.01, 0.03, 25)) for _ in range(3)],
        label="black",
    )
    white = summarize_ensemble(
        [constant_trace(np.linspace(0.01, 0.02, 25)) for _ in range(3)],
        label="white",
    )
    return {"black": black, "white": white}


class TestOverlay:
    def test_join_and_residuals(self, tmp_path):
        summaries = summary_pair()
        csv_path = tmp_path / "external.csv"
        csv_path.write_text(
            "year,group,prevalence\n"
            "1987,black,0.05\n"
            "1986,white,0.01\n"
        )
        rows = overlay_external_series(summaries, csv_path, start_year=1986)
        assert len(rows) == 6  # 3 years (0, 1, 2) x 2 groups
        by_key = {(row["group"], row["year"]): row for row in rows}
        joined = by_key[("black", 1987)]
        assert joined["observed"] == 0.05
        assert joined["residual"] == pytest.approx(
            abs(summaries["black"].at_month(12) - 0.05)
        )
        assert by_key[("white", 1988)]["observed"] is None

    def test_empty_file_is_passthrough(self, tmp_path):
        summaries = summary_pair()
        csv_path = tmp_path / "external.csv"
        csv_path.write_text("year,group,prevalence\n")
        rows = overlay_external_series(summaries, csv_path)
        assert len(rows) == 6
        assert all(row["observed"] is None for row in rows)

    def test_bad_rows(self, tmp_path):
        summaries = summary_pair()
        misdated = tmp_path / "misdated.csv"
        misdated.write_text(
            "year,group,prevalence\n1980,black,0.05\n1999,black,0.05\n"
            "1987,martian,0.05\n"
        )
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rows = overlay_external_series(summaries, misdated, start_year=1986)
        assert len(caught) == 3
        assert all(row["observed"] is None for row in rows)

        malformed = tmp_path / "malformed.csv"
        malformed.write_text("year,group,prevalence\n1987,black,not-a-number\n")
        with pytest.raises(ConfigurationError, match="row 2"):
            overlay_external_series(summaries, malformed, start_year=1986)

        missing = tmp_path / "missing.csv"
        missing.write_text("year,value\n1987,0.05\n")
        with pytest.raises(ConfigurationError, match="columns"):
            overlay_external_series(summaries, missing, start_year=1986)

    def test_single_summary_accepted(self, tmp_path):
        summary = summary_pair()["black"]
        csv_path = tmp_path / "external.csv"
        csv_path.write_text("year,group,prevalence\n1,black,0.02\n")
        rows = overlay_external_series(summary, csv_path)
        assert {row["group"] for row in rows} == {"black"}
        assert rows[1]["observed"] == 0.02


class TestExport:
    def read_rows(self, path):
        with open(path, newline="") as handle:
            return list(csv.reader(handle))

    def test_prevalence_round_trip_and_row_count(self, tmp_path):
        summaries = list(summary_pair().values())
        path = tmp_path / "prevalence.csv"
        export_plot_csv(summaries, path)
        rows = self.read_rows(path)
        assert rows[0] == ["label", "month", "mean", "se", "ci_low", "ci_high"]
        assert len(rows) - 1 == 2 * summaries[0].months.size
        for summary in summaries:
            data = [row for row in rows[1:] if row[0] == summary.label]
            months = np.array([int(row[1]) for row in data])
            means = np.array([float(row[2]) for row in data])
            ses = np.array([float(row[3]) for row in data])
            assert np.array_equal(months, summary.months)
            assert np.array_equal(means, summary.mean)
            assert np.array_equal(ses, summary.se)

    def test_logp_round_trip(self, tmp_path):
        series = np.array([0.0, -5.5, -np.inf, -123.456])
        path = tmp_path / "logp.csv"
        export_plot_csv(series, path)
        rows = self.read_rows(path)
        assert rows[0] == ["month", "log_p"]
        values = np.array([float(row[1]) for row in rows[1:]])
        assert np.array_equal(values, series)

    def test_recidivism_schema(self, tmp_path):
        population = release_log_population()
        rows = [
            (0, 0, EVENT_SEED, 9, -1),
            (10, 0, EVENT_RELEASE, 0, -1),
            (20, 0, EVENT_EDGE, 5, 3),
        ]
        report = recidivism_report(population, [FakeTrace([[6, 1]] * 101, rows)])
        path = tmp_path / "recidivism.csv"
        export_plot_csv(report, path)
        table_rows = self.read_rows(path)
        assert table_rows[0] == ["section", "key", "numerator", "denominator", "value"]
        sections = {row[0] for row in table_rows[1:]}
        assert sections == {"meta", "prior_spells", "age_band", "return_time"}
        spells_row = next(
            row for row in table_rows if row[0] == "prior_spells" and row[1] == "1"
        )
        assert float(spells_row[4]) == 1.0
        return_row = next(row for row in table_rows if row[0] == "return_time")
        assert return_row[1] == "10"

    def test_overlay_export(self, tmp_path):
        summaries = summary_pair()
        external = tmp_path / "external.csv"
        external.write_text("year,group,prevalence\n1,black,0.02\n")
        rows = overlay_external_series(summaries, external)
        path = tmp_path / "overlay.csv"
        export_plot_csv(rows, path)
        table_rows = self.read_rows(path)
        assert table_rows[0] == ["year", "group", "simulated", "observed", "residual"]
        assert len(table_rows) - 1 == len(rows)
        blank = [row for row in table_rows[1:] if row[3] == ""]
        assert len(blank) == len(rows) - 1

    def test_unknown_artifact_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            export_plot_csv({"not": "supported"}, tmp_path / "x.csv")
