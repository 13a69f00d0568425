import pytest
import numpy as np

from src.core.exceptions import (
    CalibrationError,
    DomainError,
    NumericRangeError,
    OrderingError,
)
from src.services.mechanism import (
    PoissonMechanismParams,
    StatRange,
    calibrate,
    kernel_lemma_check,
    release,
    release_many,
    sufficient_conditions,
    verify_guarantee,
)
from src.services.neyman import curve, poisson_pair
from src.services.tofcurve import blackwell_compare, is_symmetric


class TestCalibration:
    """Calibration of N1 and N2."""

    def test_tight_example(self, tight_params):
        """On g in {0, 1} the intensities are exactly the baseline rates."""
        assert tight_params.n1 == pytest.approx(np.log(3.0))
        assert tight_params.w_hg == pytest.approx(2.0)
        assert tight_params.intensity(0.0) == pytest.approx(1.0)
        assert tight_params.intensity(1.0) == pytest.approx(3.0)

    def test_rescaled_statistic(self):
        """Doubling g and w_g leaves the released intensities unchanged."""
        params = calibrate(1.0, 3.0, StatRange(0.0, 2.0, 2.0))
        assert params.intensity(0.0) == pytest.approx(1.0)
        assert params.intensity(2.0) == pytest.approx(3.0)

    def test_unbounded_range_needs_w_hg(self):
        """Without a bounded range w_hg must be supplied."""
        stat_range = StatRange(-np.inf, np.inf, 1.0)
        with pytest.raises(CalibrationError):
            calibrate(1.0, 3.0, stat_range)
        params = calibrate(1.0, 3.0, stat_range, w_hg=2.0)
        assert params.n2 == pytest.approx(1.0)

    def test_ordering(self):
        """mu1 must be below mu2."""
        with pytest.raises(OrderingError):
            calibrate(3.0, 1.0, StatRange(0.0, 1.0, 1.0))

    def test_nonpositive_mu1(self):
        """mu1 must be positive."""
        with pytest.raises(DomainError):
            calibrate(0.0, 1.0, StatRange(0.0, 1.0, 1.0))

    def test_sensitivity_wider_than_range(self):
        """w_g cannot exceed the width of a bounded range."""
        with pytest.raises(DomainError):
            StatRange(0.0, 1.0, 2.0)

    def test_intensity_overflow(self, tight_params):
        """Huge statistic values overflow the intensity."""
        with pytest.raises(NumericRangeError):
            tight_params.intensity(1000.0)

    def test_params_from_dict_rejects_nonpositive(self, tight_params):
        """Stored parameters need positive N1 and N2."""
        data = {**tight_params.to_dict(), "N2": 0.0}
        with pytest.raises(DomainError):
            PoissonMechanismParams.from_dict(data)


class TestRelease:
    """Seeded releases."""

    def test_deterministic(self, tight_params):
        """Equal seeds give equal releases."""
        assert release(tight_params, 1.0, 5) == release(tight_params, 1.0, 5)

    def test_many(self, tight_params):
        """Batch releases are nonnegative integers."""
        draws = release_many(tight_params, 0.0, 3, 1000)
        assert draws.shape == (1000,)
        assert draws.dtype == np.int64
        assert draws.min() >= 0
        assert abs(draws.mean() - 1.0) < 0.2

    def test_empirical_mean(self, tight_params):
        """The mean of many releases at intensity 3 is close to 3."""
        draws = release_many(tight_params, 1.0, 2024, 100000)
        assert abs(draws.mean() - 3.0) < 0.035


class TestSufficientConditions:
    """Ordering, gap and ratio conditions."""

    def test_baseline_holds(self):
        """The baseline pair satisfies its own conditions."""
        assert sufficient_conditions(1.0, 3.0, 1.0, 3.0)["holds"]

    def test_gap_too_large(self):
        """A wider gap than the baseline fails."""
        result = sufficient_conditions(1.0, 4.0, 1.0, 3.0)
        assert not result["gap"] and not result["holds"]

    def test_opposite_ordering(self):
        """Reversed ordering fails."""
        result = sufficient_conditions(2.0, 1.0, 1.0, 3.0)
        assert not result["similar_ordering"]

    def test_equal_rates(self):
        """Equal rates always satisfy the conditions."""
        assert sufficient_conditions(2.0, 2.0, 1.0, 3.0)["holds"]


class TestVerifyGuarantee:
    """Domination of neighbour release curves."""

    def test_tight_example(self, tight_params):
        """Both directions of the tight pair meet the guarantee with zero slack."""
        report = verify_guarantee(tight_params, [(0.0, 1.0), (1.0, 0.0)])
        assert report["min_slack"] >= -1e-8
        assert report["min_slack"] <= 1e-8
        assert report["rows"]["status"].tolist() == ["ok", "ok"]
        assert report["rows"]["direction"].tolist() == ["forward", "reverse"]

    def test_symmetric_guarantee(self, tight_params):
        """The reported symmetric guarantee is symmetric."""
        report = verify_guarantee(tight_params, [(0.0, 0.0)])
        assert is_symmetric(report["symmetric_guarantee"])

    def test_exhaustive_grid(self):
        """Every neighbour pair on {0, ..., 5} meets the guarantee."""
        params = calibrate(1.0, 3.0, StatRange(0.0, 5.0, 1.0))
        pairs = [(g, g + d) for g in range(6) for d in (-1, 0, 1) if 0 <= g + d <= 5]
        report = verify_guarantee(params, pairs)
        assert report["min_slack"] >= -1e-8
        assert set(report["rows"]["status"]) == {"ok"}

    def test_gap_wider_than_sensitivity(self, tight_params):
        """Pairs further apart than w_g are not neighbours."""
        with pytest.raises(DomainError):
            verify_guarantee(tight_params, [(0.0, 2.0)])

    def test_direction_matters(self):
        """T(Poisson(2), Poisson(4)) and its reverse are not comparable."""
        forward = curve(poisson_pair(2.0, 4.0))
        reverse = curve(poisson_pair(4.0, 2.0))
        assert blackwell_compare(forward, reverse)["relation"] == "incomparable"


class TestKernelLemma:
    """Thinning and superposition orderings."""

    def test_orderings_hold(self):
        """All applicable orderings hold and kernels match the Poisson laws."""
        report = kernel_lemma_check(1.0, 3.0, 0.5, 1.0)
        assert report["min_slack"] >= -1e-8
        assert report["tv_thinning"] < 1e-9
        assert report["tv_superposition"] < 1e-9

    def test_remove_skipped_when_rate_vanishes(self):
        """Removing lam >= a rate is not applicable."""
        rows = kernel_lemma_check(1.0, 3.0, 0.5, 1.0)["rows"]
        remove = [r for r in rows if r["ordering"] == "remove"][0]
        assert remove["min_slack"] is None

    def test_remove_applies(self):
        """Removing a smaller rate is checked."""
        rows = kernel_lemma_check(2.0, 3.0, 0.5, 1.0)["rows"]
        remove = [r for r in rows if r["ordering"] == "remove"][0]
        assert remove["rates"] == [1.0, 2.0]
        assert remove["min_slack"] >= -1e-8

    def test_identity_kernels(self):
        """c = 1 and lam = 0 give equality."""
        report = kernel_lemma_check(1.0, 3.0, 1.0, 0.0)
        assert abs(report["min_slack"]) <= 1e-8
        assert report["tv_thinning"] < 1e-10

    def test_invalid_thinning(self):
        """c must lie in (0, 1]."""
        with pytest.raises(DomainError):
            kernel_lemma_check(1.0, 3.0, 1.5, 1.0)
