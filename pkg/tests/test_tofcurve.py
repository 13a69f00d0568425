import pytest
import numpy as np
from scipy import stats

from src.core.exceptions import ContractError, CurveError, DomainError
from src.services.neyman import curve, poisson_pair
from src.services.tofcurve import (
    alpha_grid,
    blackwell_compare,
    eps_delta_curve,
    evaluate,
    from_bayes_risk,
    gaussian_curve,
    identity_curve,
    inverse,
    is_symmetric,
    levy_distance,
    lower_convex_hull,
    piecewise_curve,
    sup_distance,
    symmetrize,
    to_bayes_risk,
    to_eps_delta,
    to_piecewise,
)


@pytest.fixture
def skewed():
    """Asymmetric piecewise curve through (0, 1), (0.2, 0.3), (1, 0)."""
    return piecewise_curve([0.0, 0.2, 1.0], [1.0, 0.3, 0.0])


@pytest.fixture
def quadratic():
    """f(x) = (1 - x)^2 sampled on a 1e-4 grid."""
    g = alpha_grid(1e-4)
    return piecewise_curve(g, (1.0 - g) ** 2)


@pytest.fixture(scope="module")
def poisson_curve():
    """T(Poisson(1), Poisson(3))."""
    return curve(poisson_pair(1.0, 3.0))


def envelope_of_min(f, g):
    """Lower convex envelope of min(f, g) sampled on a 1e-4 grid plus both breakpoint sets."""
    grid = alpha_grid(1e-4, np.concatenate((f.alphas, g.alphas)))
    lower = np.minimum(evaluate(f, grid), evaluate(g, grid))
    return piecewise_curve(*lower_convex_hull(grid, lower))


class TestConstruction:
    """Curve forms and the trade-off certificate."""

    def test_identity(self, grid):
        """I(alpha) = 1 - alpha."""
        assert evaluate(identity_curve(), grid) == pytest.approx(1.0 - grid)

    def test_gaussian_value(self):
        """G_1(0.5) = Phi(-1)."""
        assert gaussian_curve(1.0)(0.5) == pytest.approx(stats.norm.cdf(-1.0), abs=1e-12)

    def test_eps_delta_breakpoints(self):
        """f_(eps, delta) starts at 1 - delta and meets the diagonal at its kink."""
        f = eps_delta_curve(1.0, 0.1)
        kink = 0.9 / (1.0 + np.e)
        assert f(0.0) == pytest.approx(0.9)
        assert f(kink) == pytest.approx(kink)
        assert f(0.95) == 0.0

    def test_rejects_non_convex(self):
        """Points above a chord fail the certificate."""
        with pytest.raises(CurveError):
            piecewise_curve([0.0, 0.5, 1.0], [0.8, 0.5, 0.0])

    def test_rejects_above_diagonal(self):
        """beta may not exceed 1 - alpha."""
        with pytest.raises(CurveError):
            piecewise_curve([0.0, 0.5, 1.0], [1.0, 0.6, 0.0])

    def test_negative_mu(self):
        """Gaussian curves need mu >= 0."""
        with pytest.raises(DomainError):
            gaussian_curve(-1.0)

    def test_evaluate_outside_unit_interval(self):
        """alpha outside [0, 1] is a domain error."""
        with pytest.raises(DomainError):
            evaluate(identity_curve(), 1.5)

    def test_to_piecewise_eps_delta_is_exact(self, grid):
        """(eps, delta) curves convert without approximation."""
        f = eps_delta_curve(0.5, 0.05)
        assert evaluate(to_piecewise(f), grid) == pytest.approx(evaluate(f, grid), abs=1e-15)

    def test_alpha_grid_bounds(self):
        """The grid is sorted and spans [0, 1]."""
        g = alpha_grid(1e-2)
        assert g[0] == 0.0 and g[-1] == 1.0
        assert np.all(np.diff(g) > 0)

    def test_lower_convex_hull_drops_interior_points(self):
        """Points above the hull are removed."""
        a, b = lower_convex_hull(np.array([0.0, 0.5, 1.0]), np.array([1.0, 0.9, 0.0]))
        assert a.tolist() == [0.0, 1.0]
        assert b.tolist() == [1.0, 0.0]


class TestInverseAndSymmetry:
    """Generalized inverse and symmetrization."""

    def test_inverse_swaps_axes(self, skewed):
        """The inverse passes through the mirrored breakpoint."""
        assert inverse(skewed)(0.3) == pytest.approx(0.2)

    def test_double_inverse(self, skewed, grid):
        """Inverting twice returns the curve."""
        assert sup_distance(inverse(inverse(skewed)), skewed) < 1e-12

    def test_inverse_with_drop_at_zero(self):
        """A curve with f(0) < 1 gets a flat zero tail in its inverse."""
        f = piecewise_curve([0.0, 0.5, 1.0], [0.5, 0.0, 0.0])
        finv = inverse(f)
        assert finv(0.0) == pytest.approx(0.5)
        assert finv(0.75) == 0.0

    def test_closed_forms_are_self_inverse(self):
        """Gaussian and (eps, delta) curves are their own inverses."""
        g = gaussian_curve(1.0)
        assert inverse(g) is g

    def test_symmetrize_result(self, skewed, grid):
        """min(f, f^-1)** is symmetric and below both f and f^-1."""
        sym = symmetrize(skewed)
        assert is_symmetric(sym)
        floor = np.minimum(evaluate(skewed, grid), evaluate(inverse(skewed), grid))
        assert np.all(evaluate(sym, grid) <= floor + 1e-12)

    def test_symmetrize_keeps_symmetric_curve(self):
        """Symmetric curves come back unchanged."""
        f = eps_delta_curve(1.0, 0.0)
        assert symmetrize(f) is f

    def test_inverse_of_poisson_curve(self, poisson_curve):
        """The inverse of T(P(1), P(3)) is T(P(3), P(1))."""
        assert sup_distance(inverse(poisson_curve), curve(poisson_pair(3.0, 1.0))) <= 1e-9

    def test_symmetrize_quadratic(self, quadratic):
        """(1 - x)^2 has x_bar = 1/2 past f(x_bar) = 1/4, bridged with slope -1 on [1/4, 1/2]."""
        sym = symmetrize(quadratic)
        assert sym.metadata["x_bar"] == pytest.approx(0.5, abs=1e-12)
        assert sym(0.5) == pytest.approx(0.25, abs=1e-12)
        bridge = np.linspace(0.25, 0.5, 26)
        assert evaluate(sym, bridge) == pytest.approx(0.75 - bridge, abs=1e-9)
        assert is_symmetric(sym)

    def test_symmetrize_quadratic_keeps_outer_pieces(self, quadratic):
        """Past x_bar the result is f itself, before f(x_bar) it is f^-1."""
        sym = symmetrize(quadratic)
        right = quadratic.alphas[quadratic.alphas > 0.5]
        assert evaluate(sym, right) == pytest.approx((1.0 - right) ** 2, abs=1e-9)
        left = np.linspace(0.0, 0.25, 51)
        assert evaluate(sym, left) == pytest.approx(evaluate(inverse(quadratic), left), abs=1e-9)

    @pytest.mark.parametrize("name", ["skewed", "quadratic", "poisson_curve"])
    def test_symmetrize_is_idempotent(self, name, request):
        """Symmetrizing twice changes nothing."""
        sym = symmetrize(request.getfixturevalue(name))
        assert sup_distance(symmetrize(sym), sym) <= 1e-9

    def test_symmetrize_poisson_matches_envelope(self, poisson_curve):
        """min(f, f^-1)** of the Poisson curve is the convex envelope of the pointwise min."""
        sym = symmetrize(poisson_curve)
        oracle = envelope_of_min(poisson_curve, inverse(poisson_curve))
        assert sup_distance(sym, oracle) <= 1e-6
        assert is_symmetric(sym)


class TestComparisonAndDistances:
    """Blackwell order, sup distance and Levy distance."""

    def test_gaussian_order(self):
        """G_1 lies above G_2."""
        result = blackwell_compare(gaussian_curve(1.0), gaussian_curve(2.0))
        assert result["relation"] == "f_above"
        assert result["f_dominates_g"]

    def test_self_comparison(self, skewed):
        """A curve equals itself."""
        assert blackwell_compare(skewed, skewed)["relation"] == "equal"

    def test_incomparable_pair(self, skewed):
        """An asymmetric curve and its inverse cross."""
        assert blackwell_compare(skewed, inverse(skewed))["relation"] == "incomparable"

    def test_levy_bounds(self):
        """0 <= Levy distance <= sup distance, zero for equal curves."""
        f, g = gaussian_curve(1.0), gaussian_curve(1.5)
        assert levy_distance(f, f) == 0.0
        assert 0.0 < levy_distance(f, g) <= sup_distance(f, g) + 1e-12

    def test_levy_below_sup_on_random_pairs(self, random_pair_factory):
        """Levy distance never exceeds sup distance on 100 random piecewise pairs."""
        for _ in range(100):
            f, g = curve(random_pair_factory()), curve(random_pair_factory())
            assert 0.0 <= levy_distance(f, g) <= sup_distance(f, g) + 1e-12

    def test_sup_distance_grows_with_mu_gap(self):
        """G_1 is closer to G_1.1 than to G_2."""
        g1 = gaussian_curve(1.0)
        assert sup_distance(g1, gaussian_curve(1.1)) < sup_distance(g1, gaussian_curve(2.0))


class TestDualities:
    """Bayes-risk and (eps, delta) dual descriptions."""

    def test_identity_bayes_risk(self):
        """Identical hypotheses: b(lambda) = min(lambda, 1 - lambda)."""
        risk = to_bayes_risk(identity_curve())
        assert risk.risks == pytest.approx(np.minimum(risk.lambdas, 1.0 - risk.lambdas))

    def test_gaussian_bayes_risk_at_half(self):
        """b(1/2) of G_1 is Phi(-1/2)."""
        risk = to_bayes_risk(gaussian_curve(1.0), np.array([0.5]))
        assert risk.risks[0] == pytest.approx(0.3085375, abs=1e-7)

    @pytest.mark.parametrize(
        "f", [gaussian_curve(1.0), eps_delta_curve(1.0, 0.1), curve(poisson_pair(1.0, 3.0))]
    )
    def test_bayes_risk_concave_and_bounded(self, f):
        """b is concave and never above min(lambda, 1 - lambda)."""
        lambdas = np.linspace(0.0, 1.0, 1001)
        risks = to_bayes_risk(f, lambdas).risks
        assert np.all(np.diff(risks, 2) <= 1e-12)
        assert np.all(risks <= np.minimum(lambdas, 1.0 - lambdas) + 1e-12)

    def test_bayes_risk_round_trip_piecewise(self, grid):
        """Recovering a piecewise curve from its Bayes risk is exact on the grid."""
        f = eps_delta_curve(1.0, 0.1)
        recovered = from_bayes_risk(to_bayes_risk(f))
        assert np.max(np.abs(evaluate(recovered, grid) - evaluate(f, grid))) < 1e-8

    def test_bayes_risk_round_trip_gaussian(self):
        """Recovering G_1 from its Bayes risk stays within grid resolution."""
        f = gaussian_curve(1.0)
        assert sup_distance(from_bayes_risk(to_bayes_risk(f)), f) < 1e-3

    def test_eps_delta_of_eps_delta_curve(self):
        """f_(1, 0.1) implies delta(1) = 0.1."""
        assert to_eps_delta(eps_delta_curve(1.0, 0.1), 1.0) == pytest.approx(0.1, abs=1e-12)

    def test_gaussian_delta_at_zero(self):
        """delta(0) of G_1 is its total variation 2 Phi(1/2) - 1."""
        expected = 2.0 * stats.norm.cdf(0.5) - 1.0
        assert to_eps_delta(gaussian_curve(1.0), 0.0) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize(
        "f", [gaussian_curve(1.0), eps_delta_curve(1.0, 0.1), eps_delta_curve(0.3, 0.0)]
    )
    def test_delta_decreases_in_epsilon(self, f):
        """delta(epsilon) is nonincreasing over epsilon = 0, 0.5, ..., 5."""
        deltas = to_eps_delta(f, np.arange(0.0, 5.01, 0.5))
        assert np.all(np.diff(deltas) <= 1e-15)

    def test_eps_delta_curve_value(self):
        """f_(ln 2, 0)(1/4) = 1 - 2 / 4."""
        assert eps_delta_curve(np.log(2.0), 0.0)(0.25) == pytest.approx(0.5, abs=1e-15)

    def test_eps_delta_rejects_asymmetric(self, skewed):
        """Asymmetric curves must be symmetrized first."""
        with pytest.raises(ContractError):
            to_eps_delta(skewed, 1.0)

    def test_eps_delta_rejects_negative_epsilon(self):
        """epsilon < 0 is a domain error."""
        with pytest.raises(DomainError):
            to_eps_delta(identity_curve(), -0.1)
