"""Tests for the rate-explanation layer: encoding, correlations, regression."""

import numpy as np
import pytest
import scipy.stats

from faceaudit.cohort import AttributeProfile
from faceaudit.errors import DataError, RankDeficiencyError, SchemaError
from faceaudit.explain import (
    EncodingConfig,
    build_design,
    explanatory_report,
    response_vector,
    run_correlations,
    run_regression,
)
from faceaudit.calibration import OperatingPoint
from faceaudit.metrics import IndividualRates
from faceaudit.schema import default_schema
from faceaudit.stats import DesignMatrix

SCHEMA = default_schema()

EXPECTED_COLUMNS = (
    "intercept",
    "gender=woman",
    "ethnicity=black",
    "ethnicity=caucasian",
    "age",
    "mustache",
    "beard",
    "sideburns",
    "eye_makeup",
    "lip_makeup",
    "head_wear",
    "glasses",
    "roll",
    "yaw",
    "pitch",
    "forehead_occluded",
    "eyes_occluded",
    "mouth_occluded",
    "exposure",
    "blur",
    "smile",
    "noise",
)


def random_profiles(n, seed=0):
    """Complete-case profiles with values drawn inside each variable's range."""
    rng = np.random.default_rng(seed)
    profiles = []
    for i in range(n):
        values = {}
        for var in SCHEMA.variables:
            if var.kind == "categorical":
                values[var.name] = float(rng.integers(len(var.levels)))
            elif var.kind == "boolean":
                values[var.name] = float(rng.integers(2))
            else:
                lo, hi = var.bounds()
                values[var.name] = float(rng.uniform(lo, hi))
        profiles.append(AttributeProfile(f"id{i:03d}", values, {}))
    return profiles


def rates_for(profiles, fn, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for p in profiles:
        base = fn(p.values)
        out.append(
            IndividualRates(
                p.identity_id,
                far=float(np.clip(base + rng.normal(0, 0.01), 0, 1)),
                frr=float(rng.uniform(0, 1)),
                n_genuine=6,
                n_impostor=50,
            )
        )
    return out


class TestBuildDesign:
    def test_column_count_and_order(self):
        design, incomplete = build_design(random_profiles(30), SCHEMA)
        assert incomplete == ()
        assert design.matrix.shape == (30, 22)
        assert len(design.column_names) == 22
        assert design.column_names[0] == "intercept"
        # protected variables lead, in schema protected order
        assert design.column_names[1:5] == (
            "gender=woman",
            "ethnicity=black",
            "ethnicity=caucasian",
            "age",
        )
        assert set(design.column_names) == set(EXPECTED_COLUMNS)

    def test_intercept_is_ones(self):
        design, _ = build_design(random_profiles(25), SCHEMA)
        np.testing.assert_array_equal(design.matrix[:, 0], np.ones(25))

    def test_dummy_encoding(self):
        profiles = random_profiles(30)
        design, _ = build_design(profiles, SCHEMA)
        j = design.column_names.index("ethnicity=black")
        raw = np.array([p.values["ethnicity"] for p in profiles])
        np.testing.assert_array_equal(design.matrix[:, j], (raw == 1.0).astype(float))
        # asian is the reference: both dummies zero
        k = design.column_names.index("ethnicity=caucasian")
        asian_rows = raw == 0.0
        assert not design.matrix[asian_rows, j].any()
        assert not design.matrix[asian_rows, k].any()

    def test_reference_level_override(self):
        config = EncodingConfig(reference_levels={"gender": "woman"})
        design, _ = build_design(random_profiles(30), SCHEMA, config)
        assert "gender=man" in design.column_names
        assert "gender=woman" not in design.column_names

    def test_unknown_reference_rejected(self):
        config = EncodingConfig(reference_levels={"gender": "other"})
        with pytest.raises(SchemaError):
            build_design(random_profiles(30), SCHEMA, config)

    def test_incomplete_profiles_dropped(self):
        profiles = random_profiles(30)
        gappy = AttributeProfile("gap01", dict(list(profiles[0].values.items())[:5]), {})
        design, incomplete = build_design(profiles + [gappy], SCHEMA)
        assert incomplete == ("gap01",)
        assert design.n_rows == 30
        assert "gap01" not in design.row_ids

    def test_too_few_complete_cases_rejected(self):
        with pytest.raises(DataError):
            build_design(random_profiles(20), SCHEMA)  # 22 columns need >= 23 rows

    def test_standardize_scales_continuous_only(self):
        config = EncodingConfig(standardize=True)
        design, _ = build_design(random_profiles(40), SCHEMA, config)
        age = design.matrix[:, design.column_names.index("age")]
        assert abs(age.mean()) < 1e-10
        assert age.std() == pytest.approx(1.0)
        dummy = design.matrix[:, design.column_names.index("gender=woman")]
        assert set(np.unique(dummy)) <= {0.0, 1.0}
        flag = design.matrix[:, design.column_names.index("eyes_occluded")]
        assert set(np.unique(flag)) <= {0.0, 1.0}

    def test_row_ids_track_profiles(self):
        profiles = random_profiles(25)
        design, _ = build_design(profiles, SCHEMA)
        assert design.row_ids == tuple(p.identity_id for p in profiles)


class TestResponseVector:
    def test_alignment(self):
        profiles = random_profiles(25)
        design, _ = build_design(profiles, SCHEMA)
        rates = rates_for(profiles, lambda v: 0.5)
        y = response_vector(design, rates, "far")
        by_id = {r.identity_id: r.far for r in rates}
        np.testing.assert_array_equal(y, [by_id[i] for i in design.row_ids])

    def test_missing_rate_rejected(self):
        profiles = random_profiles(25)
        design, _ = build_design(profiles, SCHEMA)
        rates = rates_for(profiles[:-1], lambda v: 0.5)
        with pytest.raises(DataError):
            response_vector(design, rates, "far")

    def test_bad_metric_rejected(self):
        profiles = random_profiles(25)
        design, _ = build_design(profiles, SCHEMA)
        with pytest.raises(DataError):
            response_vector(design, rates_for(profiles, lambda v: 0.5), "precision")


class TestRunCorrelations:
    def test_matches_reference_pearson(self):
        profiles = random_profiles(40, seed=3)
        design, _ = build_design(profiles, SCHEMA)
        rng = np.random.default_rng(5)
        y = rng.uniform(size=40)
        report = run_correlations(design, y)
        assert not report.constant_response
        for entry in report.entries:
            col = design.matrix[:, design.column_names.index(entry.column)]
            want_r, want_p = scipy.stats.pearsonr(col, y)
            assert entry.r == pytest.approx(want_r, abs=1e-10)
            assert entry.p_value == pytest.approx(want_p, abs=1e-10)
            assert entry.n == 40

    def test_skips_intercept(self):
        profiles = random_profiles(30)
        design, _ = build_design(profiles, SCHEMA)
        report = run_correlations(design, np.random.default_rng(0).uniform(size=30))
        assert all(e.column != "intercept" for e in report.entries)

    def test_constant_column_skipped(self):
        profiles = []
        for i, p in enumerate(random_profiles(30)):
            values = dict(p.values)
            values["blur"] = 0.5  # constant across the cohort
            profiles.append(AttributeProfile(p.identity_id, values, {}))
        design, _ = build_design(profiles, SCHEMA)
        report = run_correlations(design, np.random.default_rng(0).uniform(size=30))
        assert "blur" in report.skipped
        assert all(e.column != "blur" for e in report.entries)

    def test_constant_response_flagged(self):
        design, _ = build_design(random_profiles(30), SCHEMA)
        report = run_correlations(design, np.full(30, 0.25))
        assert report.constant_response
        assert report.entries == ()
        assert len(report.skipped) == 21

    def test_entry_lookup(self):
        design, _ = build_design(random_profiles(30), SCHEMA)
        report = run_correlations(design, np.random.default_rng(1).uniform(size=30))
        assert report.entry("blur").column == "blur"
        with pytest.raises(KeyError):
            report.entry("nonexistent")

    def test_length_mismatch_rejected(self):
        design, _ = build_design(random_profiles(30), SCHEMA)
        with pytest.raises(DataError):
            run_correlations(design, np.zeros(31))


class TestRunRegression:
    def test_planted_coefficients_recovered(self):
        profiles = random_profiles(200, seed=7)
        design, _ = build_design(profiles, SCHEMA)
        j_blur = design.column_names.index("blur")
        j_yaw = design.column_names.index("yaw")
        y = 0.1 + 0.6 * design.matrix[:, j_blur] + 0.002 * design.matrix[:, j_yaw]
        fit, dropped = run_regression(design, y)
        assert dropped == ()
        assert fit.coefficient("blur") == pytest.approx(0.6, abs=1e-8)
        assert fit.coefficient("yaw") == pytest.approx(0.002, abs=1e-8)
        assert fit.coefficient("intercept") == pytest.approx(0.1, abs=1e-8)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-10)

    def test_constant_columns_dropped_not_fatal(self):
        profiles = []
        for p in random_profiles(60):
            values = dict(p.values)
            values["smile"] = 0.0
            profiles.append(AttributeProfile(p.identity_id, values, {}))
        design, _ = build_design(profiles, SCHEMA)
        y = np.random.default_rng(2).uniform(size=60)
        fit, dropped = run_regression(design, y)
        assert dropped == ("smile",)
        assert "smile" not in fit.column_names
        assert len(fit.column_names) == 21

    def test_collinear_columns_still_raise(self):
        # two perfectly collinear continuous columns cannot be separated
        profiles = []
        for p in random_profiles(60):
            values = dict(p.values)
            values["noise"] = values["blur"]
            profiles.append(AttributeProfile(p.identity_id, values, {}))
        design, _ = build_design(profiles, SCHEMA)
        y = np.random.default_rng(3).uniform(size=60)
        with pytest.raises(RankDeficiencyError):
            run_regression(design, y)

    def test_matches_reference_implementation(self):
        profiles = random_profiles(100, seed=11)
        design, _ = build_design(profiles, SCHEMA)
        rng = np.random.default_rng(13)
        y = rng.uniform(size=100)
        fit, _ = run_regression(design, y)
        want, *_ = np.linalg.lstsq(design.matrix, y, rcond=None)
        np.testing.assert_allclose(fit.coefficients, want, atol=1e-10)


class TestExplanatoryReport:
    def test_end_to_end_recovers_planted_effect(self):
        profiles = random_profiles(120, seed=17)
        rates = rates_for(profiles, lambda v: 0.05 + 0.4 * v["blur"], seed=19)
        op = OperatingPoint(tau=0.4, far=0.05, frr=0.1, policy="eer")
        report = explanatory_report(profiles, rates, SCHEMA, "far", op)
        assert report.metric == "far"
        assert report.n_cases == 120
        assert report.operating_point is op
        blur_r = report.correlations.entry("blur")
        assert blur_r.r > 0.5
        assert blur_r.p_value < 0.01
        assert report.regression is not None
        assert report.regression.coefficient("blur") == pytest.approx(0.4, abs=0.05)
        assert report.regression.p_value("blur") < 0.01

    def test_only_rated_profiles_enter(self):
        profiles = random_profiles(40)
        rates = rates_for(profiles[:30], lambda v: 0.3)
        op = OperatingPoint(tau=0.4, far=0.05, frr=0.1, policy="eer")
        report = explanatory_report(profiles, rates, SCHEMA, "frr", op)
        assert report.n_cases == 30

    def test_constant_response_skips_regression(self):
        profiles = random_profiles(40)
        rates = [
            IndividualRates(p.identity_id, far=0.0, frr=0.0, n_genuine=6, n_impostor=50)
            for p in profiles
        ]
        op = OperatingPoint(tau=0.4, far=0.0, frr=0.0, policy="far@0.001")
        report = explanatory_report(profiles, rates, SCHEMA, "far", op)
        assert report.correlations.constant_response
        assert report.regression is None

    def test_incomplete_identities_surface(self):
        profiles = random_profiles(40)
        gappy = AttributeProfile("gap", {"blur": 0.2}, {})
        rates = rates_for(profiles, lambda v: 0.3) + [
            IndividualRates("gap", 0.1, 0.1, 6, 50)
        ]
        op = OperatingPoint(tau=0.4, far=0.05, frr=0.1, policy="eer")
        report = explanatory_report(profiles + [gappy], rates, SCHEMA, "far", op)
        assert report.incomplete_identities == ("gap",)

    def test_bad_metric_rejected(self):
        op = OperatingPoint(tau=0.4, far=0.05, frr=0.1, policy="eer")
        with pytest.raises(DataError):
            explanatory_report([], [], SCHEMA, "tpr", op)
