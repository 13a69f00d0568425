import pytest
import numpy as np
from scipy import stats

from src.core.exceptions import ContiguityError, DomainError
from src.services.dist import (
    DiscreteDist,
    Kernel,
    ShiftFamily,
    apply_kernel,
    bernoulli,
    point_mass,
)
from src.services.neyman import (
    batch_curves,
    bernoulli_pair,
    binomial_pair,
    curve,
    curve_from_llr,
    discrete_pair,
    gaussian_pair,
    gaussian_tilt_normalizer,
    llr,
    llr_identity_check,
    moment_functionals,
    poisson_pair,
    realize_pair,
    recover_llr_mean,
    shift_pair,
)
from src.services.tofcurve import (
    GAUSSIAN,
    eps_delta_curve,
    evaluate,
    gaussian_curve,
    sup_distance,
)


class TestPairs:
    """Experiment pair builders."""

    def test_misaligned_labels_rejected(self):
        """align=False requires identical label sets."""
        with pytest.raises(DomainError):
            discrete_pair(bernoulli(0.5), point_mass(0.0), align=False)

    def test_alignment_fills_zeros(self):
        """Aligned pairs share the union of labels."""
        pair = discrete_pair(point_mass(0.0), bernoulli(0.5))
        assert pair.labels.tolist() == [0.0, 1.0]
        assert pair.P.masses.tolist() == [1.0, 0.0]

    def test_unnormalized_rejected(self):
        """P and Q must carry unit mass."""
        half = DiscreteDist.from_atoms([0.0], [0.5])
        with pytest.raises(DomainError):
            discrete_pair(half, point_mass(0.0))

    def test_negative_gaussian_shift(self):
        """Gaussian pairs need mu >= 0."""
        with pytest.raises(DomainError):
            gaussian_pair(-0.5)

    def test_swapped(self):
        """Swapping exchanges P and Q."""
        pair = bernoulli_pair(0.2, 0.6)
        assert pair.swapped().P is pair.Q


class TestCurve:
    """Exact Neyman-Pearson curves."""

    def test_bernoulli_breakpoint(self):
        """Ber(0.2) vs Ber(0.6): rejecting on 1 gives (0.2, 0.4)."""
        f = curve(bernoulli_pair(0.2, 0.6))
        assert f(0.2) == pytest.approx(0.4)
        assert f(0.1) == pytest.approx(0.7)

    def test_poisson_threshold_point(self):
        """Rejecting N >= 2 under Poisson(1) vs Poisson(3) is a breakpoint."""
        f = curve(poisson_pair(1.0, 3.0))
        alpha = stats.poisson.sf(1, 1.0)
        assert f(alpha) == pytest.approx(stats.poisson.cdf(1, 3.0), abs=1e-10)
        assert f(0.0) == pytest.approx(1.0, abs=1e-12)

    def test_identical_laws(self, grid):
        """T(P, P) = 1 - alpha."""
        f = curve(binomial_pair(10, 0.3, 0.3))
        assert evaluate(f, grid) == pytest.approx(1.0 - grid, abs=1e-12)

    def test_disjoint_laws(self):
        """Mutually singular laws are perfectly distinguishable."""
        f = curve(discrete_pair(point_mass(0.0), point_mass(1.0)))
        assert f(0.0) == 0.0
        assert f(0.5) == 0.0

    def test_gaussian_is_symbolic(self):
        """Gaussian pairs give the closed form G_mu."""
        f = curve(gaussian_pair(1.5))
        assert f.form == GAUSSIAN and f.mu == 1.5

    def test_laplace_shift_value(self):
        """Laplace shift by 1 at alpha = 1/2 is F(-1) = e^-1 / 2."""
        f = curve(shift_pair(ShiftFamily("laplace"), 1.0))
        assert f(0.5) == pytest.approx(0.5 * np.exp(-1.0), abs=1e-12)

    def test_certificate_on_random_pairs(self, random_pair_factory, grid):
        """Every constructed curve is nonincreasing and below the diagonal."""
        for _ in range(20):
            values = evaluate(curve(random_pair_factory()), grid)
            assert np.all(np.diff(values) <= 1e-12)
            assert np.all(values <= 1.0 - grid + 1e-12)

    def test_relabelling_leaves_curve_unchanged(self, random_pair_factory):
        """Renaming the outcomes by a bijection does not move the curve."""
        relabel = Kernel.partition({0.0: 7.0, 1.0: -2.0, 2.0: 3.5, 3.0: 0.0})
        for _ in range(20):
            pair = random_pair_factory(4)
            renamed = discrete_pair(apply_kernel(relabel, pair.P), apply_kernel(relabel, pair.Q))
            assert renamed.labels.tolist() == [-2.0, 0.0, 3.5, 7.0]
            assert sup_distance(curve(renamed), curve(pair)) <= 1e-12

    def test_batch_preserves_order(self):
        """Batch curves come back in input order."""
        pairs = [bernoulli_pair(0.2, 0.6), bernoulli_pair(0.5, 0.5)]
        curves = batch_curves(pairs)
        assert curves[0](0.2) == pytest.approx(0.4)
        assert curves[1](0.2) == pytest.approx(0.8)


class TestLLR:
    """Log-likelihood-ratio laws."""

    def test_poisson_llr_atoms(self):
        """log(q/p) at n is n log 3 - 2 for Poisson(1) vs Poisson(3)."""
        law = llr(poisson_pair(1.0, 3.0))
        expected = np.arange(3) * np.log(3.0) - 2.0
        assert law.values[:3] == pytest.approx(expected, abs=1e-12)
        assert law.tilt_normalizer == pytest.approx(1.0, abs=1e-10)

    def test_law_under_alternative(self):
        """Under Q the LLR mean is KL(Q || P) = 3 log 3 - 2."""
        law = llr(poisson_pair(1.0, 3.0))
        assert law.under_alternative().mean() == pytest.approx(3.0 * np.log(3.0) - 2.0, abs=1e-6)

    def test_escaping_mass(self):
        """Q-mass on P-null labels breaks contiguity in strict mode."""
        pair = discrete_pair(bernoulli(0.0), bernoulli(0.5))
        with pytest.raises(ContiguityError) as info:
            llr(pair)
        assert info.value.escaping_mass == pytest.approx(0.5)

    def test_non_strict_keeps_escaping_mass(self):
        """Non-strict mode moves escaping mass to the +inf atom."""
        law = llr(discrete_pair(bernoulli(0.0), bernoulli(0.5)), strict=False)
        assert law.plus_inf_mass == pytest.approx(0.5)
        assert curve_from_llr(law)(0.0) == pytest.approx(0.5)

    @pytest.mark.parametrize(
        "pair",
        [
            poisson_pair(1.0, 3.0),
            poisson_pair(2.0, 4.0),
            bernoulli_pair(0.1, 0.7),
            binomial_pair(8, 0.4, 0.6),
        ],
    )
    def test_identity_check(self, pair):
        """T(P, Q) equals the curve of the LLR law and its tilt."""
        assert llr_identity_check(pair) <= 1e-8

    def test_gaussian_llr_mean(self):
        """LLR of N(0,1) vs N(1,1) has mean -1/2 under P."""
        law = llr(gaussian_pair(1.0))
        assert law.mean() == pytest.approx(-0.5, abs=1e-3)

    @pytest.mark.parametrize("mu", [0.5, 1.0])
    def test_gaussian_llr_is_normal(self, mu):
        """The LLR cells of N(0,1) vs N(mu,1) sit within Levy distance 1e-3 of N(-mu^2/2, mu^2)."""
        law = llr(gaussian_pair(mu))
        normal = stats.norm(-(mu**2) / 2.0, mu)
        x = np.linspace(-(mu**2) / 2.0 - 10.0 * mu, mu**2 / 2.0 + 10.0 * mu, 20001)
        x = np.sort(np.concatenate((x, law.values)))
        cumulative = np.concatenate(([0.0], np.cumsum(law.masses)))

        def cdf(points):
            return law.minus_inf_mass + cumulative[np.searchsorted(law.values, points, "right")]

        eps = 1e-3
        assert np.all(cdf(x) <= normal.cdf(x + eps) + eps)
        assert np.all(normal.cdf(x) <= cdf(x + eps) + eps)

    def test_tilt_normalizer_resolution(self):
        """E[e^X] = 1 for X ~ N(-k, 2k) and not otherwise."""
        for k in (0.125, 0.5, 2.0):
            assert gaussian_tilt_normalizer(k, 2.0 * k) == pytest.approx(1.0, abs=1e-12)
        assert gaussian_tilt_normalizer(0.5, 2.0) != pytest.approx(1.0)


class TestMoments:
    """Moment functionals of trade-off curves."""

    def test_gaussian_moments(self):
        """G_1: kl = 1/2 and kappa_2 = mu^2 + mu^4 / 4."""
        m = moment_functionals(gaussian_curve(1.0))
        assert m.kl == pytest.approx(0.5, abs=1e-7)
        assert m.kappa2 == pytest.approx(1.25, abs=1e-7)

    def test_piecewise_kl_is_divergence(self):
        """kl of a discrete curve is KL(P || Q)."""
        m = moment_functionals(curve(bernoulli_pair(0.2, 0.6)))
        expected = 0.8 * np.log(0.8 / 0.4) + 0.2 * np.log(0.2 / 0.6)
        assert m.kl == pytest.approx(expected, abs=1e-12)

    def test_flat_segment_is_infinite(self):
        """A flat segment makes the functionals nonintegrable."""
        m = moment_functionals(eps_delta_curve(1.0, 0.1))
        assert m.kl_infinite and m.kappa_infinite

    def test_recover_llr_mean(self):
        """n copies of G_(1/sqrt n) recover the limit mean -1/2."""
        n = 100
        assert recover_llr_mean(gaussian_curve(1.0 / np.sqrt(n)), n) == pytest.approx(
            -0.5, abs=1e-6
        )


class TestRealize:
    """Finite pairs realizing a given curve."""

    def test_realized_curve_matches(self):
        """The realized pair reproduces a curve with a drop at zero."""
        f = eps_delta_curve(1.0, 0.1)
        assert sup_distance(curve(realize_pair(f)), f) < 1e-12

    def test_discrete_source_reused(self):
        """Curves built from a discrete pair realize to that pair."""
        pair = bernoulli_pair(0.2, 0.6)
        assert realize_pair(curve(pair)) is pair
