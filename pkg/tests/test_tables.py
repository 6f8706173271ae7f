"""Demographic table loading, validation, and lifespan distributions."""

import numpy as np
import pytest

from incarsim.errors import ConfigurationError
from incarsim.tables import (
    MAX_AGE,
    DemographicTables,
    load_demographic_tables,
    load_distribution,
    load_life_table,
    tilt_to_mean,
)


def make_tables(life_female=None, life_male=None, **kwargs):
    """Tables with valid defaults and optional overrides for one test."""
    if life_female is None:
        life_female = np.full(MAX_AGE, 0.01)
    if life_male is None:
        life_male = life_female
    defaults = {
        "life_table_female": np.asarray(life_female, dtype=float),
        "life_table_male": np.asarray(life_male, dtype=float),
        "fertility_dist": np.array([0.0, 0.0, 0.93, 0.07]),
        "friend_count_dist": np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    }
    defaults.update(kwargs)
    return DemographicTables(**defaults)


@pytest.fixture(scope="module")
def default_tables():
    return load_demographic_tables()


class TestDefaultTables:
    def test_loads_and_validates(self, default_tables):
        assert default_tables.life_table_female.shape == (MAX_AGE,)
        assert default_tables.life_table_male.shape == (MAX_AGE,)
        assert default_tables.fertility_dist.sum() == pytest.approx(1.0, abs=1e-9)
        assert default_tables.friend_count_dist.sum() == pytest.approx(1.0, abs=1e-9)

    def test_fertility_mean_is_target(self, default_tables):
        mean = np.arange(default_tables.fertility_dist.size) @ default_tables.fertility_dist
        assert mean == pytest.approx(2.07, abs=1e-6)

    def test_friend_count_support_is_0_to_5(self, default_tables):
        assert default_tables.friend_count_dist.shape == (6,)

    def test_life_expectancies_are_plausible(self, default_tables):
        female = default_tables.lifespan_expectation("female")
        male = default_tables.lifespan_expectation("male")
        assert 78.0 < female < 84.0
        assert 73.0 < male < 79.0
        assert female > male

    def test_scalar_parameters(self, default_tables):
        assert default_tables.age_first_birth_offset_mean == 10.6
        assert default_tables.child_gap_mean == 4.5
        assert default_tables.partner_age_gap_range == (0, 9)


class TestLifespanPmf:
    def test_pmf_sums_to_one(self, default_tables):
        for sex in ("female", "male"):
            assert default_tables.lifespan_pmf(sex).sum() == pytest.approx(1.0, abs=1e-12)

    def test_certain_death_at_age_zero(self):
        hazard = np.zeros(MAX_AGE)
        hazard[0] = 1.0
        tables = make_tables(life_female=hazard)
        pmf = tables.lifespan_pmf("female")
        assert pmf[0] == 1.0
        assert pmf[1:].sum() == 0.0

    def test_zero_hazard_forces_cap_at_120(self):
        tables = make_tables(life_female=np.zeros(MAX_AGE))
        pmf = tables.lifespan_pmf("female")
        assert pmf[MAX_AGE] == 1.0
        assert tables.lifespan_expectation("female") == MAX_AGE

    def test_expectation_matches_hand_computation(self):
        # Constant hazard h: P(die at age a) = (1-h)^a * h below the cap.
        h = 0.25
        tables = make_tables(life_female=np.full(MAX_AGE, h))
        pmf = tables.lifespan_pmf("female")
        ages = np.arange(MAX_AGE)
        expected = (1 - h) ** ages * h
        np.testing.assert_allclose(pmf[:MAX_AGE], expected, rtol=1e-12)
        assert pmf[MAX_AGE] == pytest.approx((1 - h) ** MAX_AGE, rel=1e-12)


class TestValidation:
    def test_wrong_life_table_shape(self):
        with pytest.raises(ConfigurationError):
            make_tables(life_female=np.full(50, 0.01))

    def test_hazard_outside_unit_interval(self):
        bad = np.full(MAX_AGE, 0.01)
        bad[3] = 1.5
        with pytest.raises(ConfigurationError):
            make_tables(life_female=bad)

    def test_distribution_must_sum_to_one(self):
        with pytest.raises(ConfigurationError):
            make_tables(friend_count_dist=np.array([0.5, 0.4]))

    def test_empty_distribution_rejected(self):
        with pytest.raises(ConfigurationError):
            make_tables(fertility_dist=np.array([]))

    def test_fertility_mean_must_match_target(self):
        with pytest.raises(ConfigurationError):
            make_tables(fertility_dist=np.array([0.5, 0.5]))

    def test_fertility_mean_target_is_configurable(self):
        tables = make_tables(
            fertility_dist=np.array([0.5, 0.5]), fertility_target_mean=0.5
        )
        assert tables.fertility_target_mean == 0.5

    def test_partner_gap_must_be_ordered_integers(self):
        with pytest.raises(ConfigurationError):
            make_tables(partner_age_gap_range=(9, 0))


class TestTiltToMean:
    def test_hits_target_exactly(self):
        base = np.array([0.2, 0.2, 0.2, 0.2, 0.2])
        tilted = tilt_to_mean(base, 2.5)
        assert np.arange(5) @ tilted == pytest.approx(2.5, abs=1e-12)
        assert tilted.sum() == pytest.approx(1.0, abs=1e-12)

    def test_identity_when_already_on_target(self):
        base = np.array([0.5, 0.5])
        np.testing.assert_allclose(tilt_to_mean(base, 0.5), base, atol=1e-12)

    def test_target_outside_support_rejected(self):
        with pytest.raises(ConfigurationError):
            tilt_to_mean(np.array([0.5, 0.5]), 1.5)


class TestCsvLoading:
    def test_life_table_requires_full_age_range(self, tmp_path):
        path = tmp_path / "life_table.csv"
        path.write_text("age,female,male\n0,0.01,0.01\n1,0.01,0.01\n")
        with pytest.raises(ConfigurationError):
            load_life_table(path)

    def test_life_table_wrong_columns(self, tmp_path):
        path = tmp_path / "life_table.csv"
        path.write_text("age,f,m\n0,0.01,0.01\n")
        with pytest.raises(ConfigurationError):
            load_life_table(path)

    def test_distribution_support_must_be_contiguous(self, tmp_path):
        path = tmp_path / "fertility.csv"
        path.write_text("children,probability\n0,0.5\n2,0.5\n")
        with pytest.raises(ConfigurationError):
            load_distribution(path, "children")

    def test_non_numeric_cell_rejected(self, tmp_path):
        path = tmp_path / "fertility.csv"
        path.write_text("children,probability\n0,half\n")
        with pytest.raises(ConfigurationError):
            load_distribution(path, "children")

    def test_empty_table_rejected(self, tmp_path):
        path = tmp_path / "fertility.csv"
        path.write_text("children,probability\n")
        with pytest.raises(ConfigurationError):
            load_distribution(path, "children")

    def test_load_from_directory_matches_package_data(self, tmp_path, default_tables):
        import shutil
        from importlib.resources import as_file, files

        root = files("incarsim.data")
        for name in ("life_table.csv", "fertility.csv", "friend_counts.csv"):
            with as_file(root / name) as src:
                shutil.copy(src, tmp_path / name)
        tables = load_demographic_tables(tmp_path)
        np.testing.assert_array_equal(
            tables.life_table_female, default_tables.life_table_female
        )
        np.testing.assert_array_equal(
            tables.fertility_dist, default_tables.fertility_dist
        )
