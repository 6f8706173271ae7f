"""Transmission probability math: derivation, round trips, marginals, lookup."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from incarsim import transmission as tr
from incarsim.errors import ConfigurationError, ConsistencyError
from incarsim.sentencing import fit_negative_binomial

# Expected monthly table at 3 decimals, derived from the shipped survey table
# at the 14-month calibration sentence.
REFERENCE_MONTHLY_3DP = {
    ("mother", "female"): 0.001,
    ("mother", "male"): 0.003,
    ("father", "female"): 0.011,
    ("father", "male"): 0.011,
    ("sister", "female"): 0.008,
    ("sister", "male"): 0.004,
    ("brother", "female"): 0.033,
    ("brother", "male"): 0.030,
    ("spouse", "female"): 0.004,
    ("spouse", "male"): 0.001,
    ("adult_child", "female"): 0.017,
    ("adult_child", "male"): 0.006,
}

# Sentence-averaged probabilities frozen from the closed-form oracle
# E[1-(1-p)^max(X,1)] = 1 - PGF_X(1-p) + p * q**r with X ~ NB(r, q),
# computed independently of the summation implementation.
CLOSED_FORM_MARGINALS = {
    ("white", 0.001): 0.013819840057,
    ("white", 0.0301951): 0.302847579125,
    ("white", 0.1): 0.603265757259,
    ("black", 0.001): 0.016729116202,
    ("black", 0.0301951): 0.344263355226,
    ("black", 0.1): 0.645345145598,
}


@pytest.fixture(scope="module")
def survey():
    return tr.default_survey_table()


@pytest.fixture(scope="module")
def table(survey):
    return tr.derive_transmission_table(survey, 14)


@pytest.fixture(scope="module")
def white_dist():
    return fit_negative_binomial(14, 10, label="white")


@pytest.fixture(scope="module")
def black_dist():
    return fit_negative_binomial(17, 12, label="black")


def test_derive_monthly_prob_reference_value():
    assert tr.derive_monthly_prob(0.377, 14) == pytest.approx(0.033235766661, abs=1e-9)
    assert round(tr.derive_monthly_prob(0.377, 14), 3) == 0.033


def test_derive_monthly_prob_trivial_cases():
    for s in (1, 14, 360):
        assert tr.derive_monthly_prob(0.0, s) == 0.0
    for p in (0.0, 0.3, 0.92):
        assert tr.derive_monthly_prob(p, 1) == pytest.approx(p, abs=1e-12)


def test_derive_monthly_prob_domain_errors():
    with pytest.raises(ValueError):
        tr.derive_monthly_prob(1.0, 14)
    with pytest.raises(ValueError):
        tr.derive_monthly_prob(-0.1, 14)
    with pytest.raises(ValueError):
        tr.derive_monthly_prob(0.3, 0)


def test_prob_over_sentence_values():
    assert tr.prob_over_sentence(0.1, 1) == pytest.approx(0.1, abs=1e-12)
    assert tr.prob_over_sentence(0.1, 24) == pytest.approx(0.920233556923, abs=1e-9)
    assert tr.prob_over_sentence(0.5, 0) == 0.0
    assert tr.prob_over_sentence(1.0, 3) == 1.0
    assert tr.prob_over_sentence(1.0, 0) == 0.0
    with pytest.raises(ValueError):
        tr.prob_over_sentence(1.2, 3)
    with pytest.raises(ValueError):
        tr.prob_over_sentence(0.1, -1)


def test_round_trip_identity_on_survey_cells(survey):
    for value in survey.cells.values():
        monthly = tr.derive_monthly_prob(value, 14)
        assert tr.prob_over_sentence(monthly, 14) == pytest.approx(value, abs=1e-12)


@given(
    p_sentence=st.floats(min_value=0.0, max_value=0.999),
    s=st.integers(min_value=1, max_value=120),
)
def test_round_trip_identity_property(p_sentence, s):
    monthly = tr.derive_monthly_prob(p_sentence, s)
    assert tr.prob_over_sentence(monthly, s) == pytest.approx(p_sentence, abs=1e-9)


@given(
    p_monthly=st.floats(min_value=1e-6, max_value=0.999),
    s=st.integers(min_value=0, max_value=400),
)
def test_prob_over_sentence_increasing_in_s(p_monthly, s):
    shorter = tr.prob_over_sentence(p_monthly, s)
    longer = tr.prob_over_sentence(p_monthly, s + 1)
    if longer < 1.0 - 1e-12:
        # Strict growth holds until the complement saturates in float64.
        assert longer > shorter
    else:
        assert longer >= shorter


def test_monthly_table_matches_reference(table):
    for (role, sex), expected in REFERENCE_MONTHLY_3DP.items():
        assert round(table.value(role, sex), 3) == pytest.approx(expected, abs=1e-12)


def test_marginal_exact_matches_closed_form(white_dist, black_dist):
    dists = {"white": white_dist, "black": black_dist}
    for (label, p), expected in CLOSED_FORM_MARGINALS.items():
        got = tr.marginal_transmission_prob_exact(p, dists[label])
        assert got == pytest.approx(expected, abs=1e-9)


def test_marginal_reference_cells(table, white_dist, black_dist):
    p = table.value("brother", "male")
    assert tr.marginal_transmission_prob_exact(p, white_dist) == pytest.approx(
        0.303, abs=0.01
    )
    assert tr.marginal_transmission_prob_exact(p, black_dist) == pytest.approx(
        0.347, abs=0.01
    )


def test_marginal_dominance_black_over_white(table, white_dist, black_dist):
    for (role, sex), p in table.cells.items():
        black = tr.marginal_transmission_prob_exact(p, black_dist)
        white = tr.marginal_transmission_prob_exact(p, white_dist)
        assert black > white, (role, sex)


def test_marginal_monte_carlo_consistency(table, white_dist):
    p = table.value("brother", "male")
    rng = np.random.default_rng(20260814)
    estimate = tr.marginal_transmission_prob(p, white_dist, 100_000, rng)
    exact = tr.marginal_transmission_prob_exact(p, white_dist)
    # 3 standard errors with per-draw variance bounded by 1/4.
    assert abs(estimate - exact) < 3 * np.sqrt(0.25 / 100_000)


def test_marginal_zero_probability(white_dist):
    rng = np.random.default_rng(1)
    assert tr.marginal_transmission_prob_exact(0.0, white_dist) == 0.0
    assert tr.marginal_transmission_prob(0.0, white_dist, 10_000, rng) == 0.0


def test_marginal_validates_sample_count(white_dist):
    rng = np.random.default_rng(1)
    with pytest.raises(ValueError):
        tr.marginal_transmission_prob(0.1, white_dist, 9_999, rng)


def test_lookup_edge_prob_direct_roles(table):
    got = tr.lookup_edge_prob(table, "brother", "female")
    assert round(got, 3) == 0.033
    got = tr.lookup_edge_prob(table, "mother", "male")
    assert got == table.value("mother", "male")


def test_lookup_edge_prob_friend_resolution(table):
    got = tr.lookup_edge_prob(table, "friend", "male", susceptible_sex="male")
    assert round(got, 3) == 0.030
    got = tr.lookup_edge_prob(table, "friend", "male", susceptible_sex="female")
    assert got == table.value("sister", "male")
    with pytest.raises(ConsistencyError):
        tr.lookup_edge_prob(table, "friend", "male")


def test_lookup_edge_prob_child_age_gate(table):
    minor = tr.lookup_edge_prob(
        table, "child", "female", susceptible_age_months=120
    )
    assert minor == 0.0
    adult = tr.lookup_edge_prob(
        table, "child", "female", susceptible_age_months=216
    )
    assert adult == table.value("adult_child", "female")
    with pytest.raises(ConsistencyError):
        tr.lookup_edge_prob(table, "child", "female")


def test_lookup_edge_prob_rejects_unknown(table):
    with pytest.raises(ConsistencyError):
        tr.lookup_edge_prob(table, "cousin", "male")
    with pytest.raises(ConsistencyError):
        tr.lookup_edge_prob(table, "brother", "other")


def test_survey_table_requires_all_cells():
    cells = {(role, sex): 0.1 for role in tr.SURVEY_ROLES for sex in tr.SEXES}
    del cells[("spouse", "male")]
    with pytest.raises(ConfigurationError):
        tr.SurveyTable(cells=cells)


def test_survey_table_rejects_out_of_range():
    cells = {(role, sex): 0.1 for role in tr.SURVEY_ROLES for sex in tr.SEXES}
    cells[("mother", "female")] = 1.5
    with pytest.raises(ConfigurationError):
        tr.SurveyTable(cells=cells)


def test_load_survey_table_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("role,female,male\nmother,0.1,0.1\n")
    with pytest.raises(ConfigurationError):
        tr.load_survey_table(path)


def test_load_survey_table_rejects_unknown_role(tmp_path):
    path = tmp_path / "bad.csv"
    rows = ["role,women,men"]
    rows += [f"{role},0.1,0.1" for role in tr.SURVEY_ROLES]
    rows.append("cousin,0.1,0.1")
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(ConfigurationError):
        tr.load_survey_table(path)


def test_write_monthly_table_csv(tmp_path, table):
    path = tmp_path / "monthly.csv"
    tr.write_monthly_table_csv(table, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "role,women,men"
    seen = {}
    for line in lines[1:]:
        role, women, men = line.split(",")
        seen[(role, "female")] = float(women)
        seen[(role, "male")] = float(men)
    assert seen == pytest.approx(REFERENCE_MONTHLY_3DP)
