import math
from itertools import product

import numpy as np
import pytest
from scipy import integrate

from conftest import fig1_coupling
from wfdual.errors import ConvergenceError, NumericError, OracleMisuseError
from wfdual.kfun import (
    DirichletOracle,
    I_quadrature,
    I_series,
    MonteCarloOracle,
    SingleLocusOracle,
    TwoLocusOracle,
    auto_oracle,
    k_dirichlet,
    k_monte_carlo,
    k_recursion_residual,
    k_single_locus,
    k_two_locus,
    log_I_quadrature,
    log_I_series,
    make_oracle,
)
from wfdual.model import ModelParams
from wfdual.specfun import SeriesControl


class TestDirichletOracle:
    def test_spec_values(self, neutral_single):
        assert k_dirichlet(neutral_single, [1, 0]) == pytest.approx(0.5, rel=1e-14)
        assert k_dirichlet(neutral_single, [2, 0]) == pytest.approx(1.0 / 3.0, rel=1e-14)

    def test_normalization(self, neutral_single):
        assert DirichletOracle(neutral_single).k([0, 0]) == 1.0

    def test_factorizes_across_loci(self):
        p2 = ModelParams.make((2, 3), [[0.5, 0.7], [0.3, 0.4, 0.9]])
        p_a = ModelParams.make((2,), [[0.5, 0.7]])
        p_b = ModelParams.make((3,), [[0.3, 0.4, 0.9]])
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = rng.integers(0, 4, 5)
            left = k_dirichlet(p2, n)
            right = k_dirichlet(p_a, n[:2]) * k_dirichlet(p_b, n[2:])
            assert left == pytest.approx(right, rel=1e-14)

    def test_misuse(self, single_sel, fig1_right):
        with pytest.raises(OracleMisuseError):
            DirichletOracle(single_sel)
        with pytest.raises(OracleMisuseError):
            DirichletOracle(fig1_right)


class TestSingleLocusOracle:
    def test_reduces_to_dirichlet_without_selection(self, neutral_single):
        oracle = SingleLocusOracle(neutral_single)
        for n in ([1, 0], [2, 0], [3, 2]):
            assert oracle.k(n) == pytest.approx(k_dirichlet(neutral_single, n), rel=1e-12)

    def test_constant_h_cancels(self):
        base = ModelParams.make((2,), [[0.5, 0.5]])
        for c in (0.5, 1.7):
            shifted = ModelParams.make((2,), [[0.5, 0.5]], h=[c, c])
            for n in ([1, 0], [2, 1]):
                assert k_single_locus(shifted, n) == pytest.approx(
                    k_dirichlet(base, n), rel=1e-12
                )

    def test_against_defining_integral(self, single_sel):
        # 1-D adaptive quadrature of the exponentially tilted Beta integral
        def integrand(x, n1, n2):
            return x ** (n1 + 1.0 - 1.0) * (1 - x) ** (n2 + 1.0 - 1.0) * math.exp(2 * (1.0 * x))

        Z, _ = integrate.quad(lambda x: integrand(x, 0, 0), 0, 1, epsabs=1e-13, epsrel=1e-13)
        num, _ = integrate.quad(lambda x: integrand(x, 1, 0), 0, 1, epsabs=1e-13, epsrel=1e-13)
        assert k_single_locus(single_sel, [1, 0]) == pytest.approx(num / Z, rel=1e-10)

    def test_misuse(self, fig1_right):
        with pytest.raises(OracleMisuseError):
            SingleLocusOracle(fig1_right)


class TestISeries:
    def test_no_coupling_is_product_of_betas(self):
        assert I_series(1.0, 1.0, 1.0, 1.0, 0.0, 0.0) == pytest.approx(1.0, rel=1e-14)

    def test_matches_quadrature_uniform(self):
        got = I_series(1.0, 1.0, 1.0, 1.0, 2.0, 2.0)
        want = I_quadrature(1.0, 1.0, 1.0, 1.0, 2.0, 2.0)
        assert got == pytest.approx(want, rel=1e-8)

    def test_matches_quadrature_fig1(self):
        got = I_series(1.6, 1.6, 1.6, 1.6, 2.0, 2.0)
        want = I_quadrature(1.6, 1.6, 1.6, 1.6, 2.0, 2.0)
        assert got == pytest.approx(want, rel=1e-8)

    def test_j2_zero_branch(self):
        got = I_series(1.4, 2.2, 0.9, 1.1, 1.5, 0.0)
        want = I_quadrature(1.4, 2.2, 0.9, 1.1, 1.5, 0.0)
        assert got == pytest.approx(want, rel=1e-10)

    def test_convergence_error(self):
        with pytest.raises(ConvergenceError):
            I_series(1.0, 1.0, 1.0, 1.0, 2.0, 2.0, SeriesControl(rel_tol=1e-14, max_terms=5))

    def test_domain(self):
        with pytest.raises(OracleMisuseError):
            I_series(-1.0, 1.0, 1.0, 1.0, 0.0, 0.0)


class TestIQuadrature:
    def test_separable_case(self):
        from wfdual.specfun import beta

        got = I_quadrature(1.3, 2.1, 0.7, 1.9, 0.0, 0.0)
        assert got == pytest.approx(beta(1.3, 2.1) * beta(0.7, 1.9), rel=1e-12)

    def test_block_swap_symmetry(self):
        a = (1.3, 2.1, 0.7, 1.9)
        assert I_quadrature(*a, 2.0, 2.0) == pytest.approx(
            I_quadrature(a[2], a[3], a[0], a[1], 2.0, 2.0), rel=1e-12
        )

    def test_label_swap_symmetry(self):
        # x -> 1-x, y -> 1-y exchanges (a1,a2), (b1,b2) and (J1,J2)
        got = I_quadrature(1.3, 2.1, 0.7, 1.9, 2.0, 0.5)
        want = I_quadrature(2.1, 1.3, 1.9, 0.7, 0.5, 2.0)
        assert got == pytest.approx(want, rel=1e-12)


class TestTwoLocusOracle:
    def test_normalization(self, fig1_right):
        assert TwoLocusOracle(fig1_right).k([0, 0, 0, 0]) == 1.0

    def test_reduces_to_dirichlet(self, fig1_left):
        oracle = TwoLocusOracle(fig1_left)
        for n in ([1, 0, 0, 0], [2, 1, 0, 3], [1, 1, 1, 1]):
            assert oracle.k(n) == pytest.approx(k_dirichlet(fig1_left, n), rel=1e-10)

    def test_series_vs_quadrature_paths(self, fig1_right):
        oracle = TwoLocusOracle(fig1_right)
        n = np.array([1, 0, 1, 0])
        assert oracle.log_k(n) == pytest.approx(oracle.log_k_quadrature(n), abs=1e-8)
        assert k_two_locus(fig1_right, n, cross_check=True) > 0

    def test_cross_check_failure_raises(self, fig1_right, monkeypatch):
        monkeypatch.setattr(
            TwoLocusOracle, "log_k_quadrature", lambda self, n, rel_tol=1e-12: -0.5
        )
        with pytest.raises(NumericError):
            k_two_locus(fig1_right, [1, 0, 1, 0], cross_check=True)

    def test_misuse(self, single_sel):
        with pytest.raises(OracleMisuseError):
            TwoLocusOracle(single_sel)
        p = ModelParams.make((2, 2), [[0.5, 0.5], [0.5, 0.5]], h=[1, 0, 0, 0],
                             J=fig1_coupling())
        with pytest.raises(OracleMisuseError):
            TwoLocusOracle(p)
        full = np.zeros((4, 4))
        full[:2, 2:] = [[1.0, 0.5], [0.5, 1.0]]
        full[2:, :2] = full[:2, 2:].T
        with pytest.raises(OracleMisuseError):
            TwoLocusOracle(ModelParams.make((2, 2), [[0.5, 0.5], [0.5, 0.5]], J=full))


class TestMonteCarloOracle:
    def test_trivial_state(self, neutral_single):
        est, se = k_monte_carlo(neutral_single, [0, 0])
        assert est == 1.0 and se == 0.0

    def test_matches_dirichlet(self, neutral_single):
        est, se = k_monte_carlo(neutral_single, [2, 1], count=8000, burn_in=2000, seed=11)
        want = k_dirichlet(neutral_single, [2, 1])
        assert abs(est - want) < 3 * se

    def test_matches_two_locus(self, fig1_right):
        est, se = k_monte_carlo(fig1_right, [1, 0, 1, 0], count=8000, burn_in=2000, seed=12)
        want = k_two_locus(fig1_right, [1, 0, 1, 0])
        assert abs(est - want) < 3 * se

    def test_misuse(self):
        p = ModelParams.make((2,), [np.array([[0.0, 1.0], [0.5, 0.0]])])
        with pytest.raises(OracleMisuseError):
            MonteCarloOracle(p)


class TestOracleProperties:
    def test_monotone_in_n(self, fig1_right, single_sel):
        for params, oracle in (
            (fig1_right, TwoLocusOracle(fig1_right)),
            (single_sel, SingleLocusOracle(single_sel)),
        ):
            rng = np.random.default_rng(13)
            for _ in range(10):
                n = rng.integers(0, 3, params.M)
                base = oracle.k(n)
                for i in range(params.M):
                    e = np.zeros(params.M, dtype=int)
                    e[i] = 1
                    assert oracle.k(n + e) < base

    def test_ratio_matches_log_difference(self, single_sel):
        oracle = SingleLocusOracle(single_sel)
        n1, n2 = np.array([3, 1]), np.array([1, 2])
        direct = oracle.k(n1) / oracle.k(n2)
        assert oracle.ratio(n1, n2) == pytest.approx(direct, rel=1e-12)

    def test_oracles_agree_on_overlap(self, neutral_single, fig1_left):
        # single locus, h = 0: Dirichlet vs Kummer form
        d, s = DirichletOracle(neutral_single), SingleLocusOracle(neutral_single)
        # two loci, J = 0: Dirichlet vs series
        d2, t2 = DirichletOracle(fig1_left), TwoLocusOracle(fig1_left)
        rng = np.random.default_rng(14)
        for _ in range(10):
            n = rng.integers(0, 4, 2)
            assert d.k(n) == pytest.approx(s.k(n), rel=1e-8)
            n4 = rng.integers(0, 4, 4)
            assert d2.k(n4) == pytest.approx(t2.k(n4), rel=1e-8)

    def test_factory(self, neutral_single, fig1_right, single_sel):
        assert isinstance(make_oracle(neutral_single, "dirichlet"), DirichletOracle)
        assert isinstance(make_oracle(single_sel, "single"), SingleLocusOracle)
        assert isinstance(make_oracle(fig1_right, "two-locus"), TwoLocusOracle)
        assert isinstance(make_oracle(fig1_right, "mc"), MonteCarloOracle)
        with pytest.raises(OracleMisuseError):
            make_oracle(fig1_right, "nope")
        assert isinstance(auto_oracle(neutral_single), DirichletOracle)
        assert isinstance(auto_oracle(single_sel), SingleLocusOracle)
        assert isinstance(auto_oracle(fig1_right), TwoLocusOracle)


class TestRecursionResidual:
    def test_single_locus_closed_form(self, single_sel):
        oracle = SingleLocusOracle(single_sel)
        assert k_recursion_residual(single_sel, [2, 1], oracle) < 1e-8

    def test_two_locus_series(self, fig1_right):
        oracle = TwoLocusOracle(fig1_right)
        assert k_recursion_residual(fig1_right, [1, 1, 1, 0], oracle) < 1e-6

    def test_perturbation_detected(self, single_sel):
        class Perturbed(SingleLocusOracle):
            def _log_k(self, n):
                value = super()._log_k(n)
                if tuple(n) == (1, 1):
                    value += math.log(1.01)
                return value

        oracle = Perturbed(single_sel)
        assert k_recursion_residual(single_sel, [2, 1], oracle) > 1e-3

    def test_rejects_origin(self, single_sel):
        with pytest.raises(OracleMisuseError):
            k_recursion_residual(single_sel, [0, 0], SingleLocusOracle(single_sel))
