import json

import numpy as np
import pytest

from conftest import fig1_coupling, random_simplex
from wfdual.errors import ParameterError
from wfdual.model import (
    ModelParams,
    diffusion_d,
    drift_mu,
    generator_on_monomial,
    generator_on_monomial_batch,
    grad_V,
    interaction_g,
    monomial,
    potential_V,
    tilde_h,
    validate_dual_state,
    validate_frequency_state,
)


class TestModelParamsValidation:
    def test_rejects_asymmetric_J(self):
        J = np.zeros((4, 4))
        J[0, 2] = 1.0  # missing transpose entry
        with pytest.raises(ParameterError):
            ModelParams.make((2, 2), [[0.5, 0.5], [0.5, 0.5]], J=J)

    def test_rejects_nonzero_diagonal_block(self):
        J = np.zeros((4, 4))
        J[0, 1] = J[1, 0] = 1.0
        with pytest.raises(ParameterError):
            ModelParams.make((2, 2), [[0.5, 0.5], [0.5, 0.5]], J=J)

    def test_rejects_negative_h_and_J(self):
        with pytest.raises(ParameterError):
            ModelParams.make((2,), [[0.5, 0.5]], h=[-0.1, 0.0])
        J = fig1_coupling(-1.0, 0.0)
        with pytest.raises(ParameterError):
            ModelParams.make((2, 2), [[0.5, 0.5], [0.5, 0.5]], J=J)

    def test_rejects_single_allele_locus(self):
        with pytest.raises(ParameterError):
            ModelParams.make((1,), [[0.5]])

    def test_theta_p_normalization(self):
        p = ModelParams.from_theta_P((2,), [1.0], [[[0.0, 1.0], [1.0, 0.0]]])
        np.testing.assert_allclose(p.mutation[0], [[0.0, 0.5], [0.5, 0.0]])
        with pytest.raises(ParameterError):
            ModelParams.from_theta_P((2,), [1.0], [[[0.2, 0.9], [1.0, 0.0]]])

    def test_parent_independent_detection(self):
        p = ModelParams.make((2,), [[0.4, 0.6]])
        assert p.parent_independent
        np.testing.assert_allclose(p.mutation_vector(0), [0.4, 0.6])
        q = ModelParams.make((2,), [np.array([[0.0, 1.0], [0.0, 0.0]])])
        assert not q.parent_independent

    def test_json_roundtrip_forms(self):
        doc = {
            "loci": [2, 2],
            "mutation": [{"u": [0.8, 0.8]}, {"theta": 3.2, "P": [[0.5, 0.5], [0.5, 0.5]]}],
            "h": [0, 0, 0, 0],
            "J": [{"l": 1, "r": 2, "matrix": [[2, 0], [0, 2]]}],
        }
        p = ModelParams.from_json(json.dumps(doc))
        np.testing.assert_allclose(p.mutation[1], [[0.8, 0.8], [0.8, 0.8]])
        assert p.J[0, 2] == 2.0 and p.J[2, 0] == 2.0
        with pytest.raises(ParameterError):
            ModelParams.from_json({"loci": [2]})
        with pytest.raises(ParameterError):
            ModelParams.from_json({"loci": [2, 2], "mutation": [{"u": [1, 1]}, {"u": [1, 1]}],
                                   "J": [{"l": 1, "r": 1, "matrix": [[0, 0], [0, 0]]}]})


class TestStateValidation:
    def test_frequency_state(self, fig1_right):
        validate_frequency_state(fig1_right, [0.5, 0.5, 0.3, 0.7])
        with pytest.raises(ParameterError):
            validate_frequency_state(fig1_right, [0.6, 0.5, 0.3, 0.7])
        with pytest.raises(ParameterError):
            validate_frequency_state(fig1_right, [0.5, 0.5, 0.3])
        with pytest.raises(ParameterError):
            validate_frequency_state(fig1_right, [1.2, -0.2, 0.3, 0.7])

    def test_dual_state(self, fig1_right):
        n = validate_dual_state(fig1_right, [1, 0, 2, 0])
        assert n.dtype == np.int64
        with pytest.raises(ParameterError):
            validate_dual_state(fig1_right, [1, -1, 0, 0])
        with pytest.raises(ParameterError):
            validate_dual_state(fig1_right, [0.5, 0.5, 0, 0])


class TestPotential:
    def test_zero_parameters(self):
        p = ModelParams.make((2, 2), [[0.5, 0.5], [0.5, 0.5]])
        assert potential_V(p, [0.3, 0.7, 0.9, 0.1]) == 0.0

    def test_single_cross_entry(self):
        J = np.zeros((4, 4))
        J[0, 2] = J[2, 0] = 1.0
        p = ModelParams.make((2, 2), [[0.5, 0.5], [0.5, 0.5]], J=J)
        assert potential_V(p, [1.0, 0.0, 1.0, 0.0]) == pytest.approx(1.0, abs=1e-15)

    def test_fig1_center(self, fig1_right):
        assert potential_V(fig1_right, [0.5, 0.5, 0.5, 0.5]) == pytest.approx(1.0, abs=1e-15)


class TestGradV:
    def test_no_coupling_returns_h(self):
        p = ModelParams.make((2,), [[0.5, 0.5]], h=[1.3, 0.2])
        np.testing.assert_allclose(grad_V(p, [0.4, 0.6]), [1.3, 0.2])

    def test_single_product(self, fig1_right):
        g = grad_V(fig1_right, [0.5, 0.5, 1.0, 0.0])
        np.testing.assert_allclose(g[:2], [2.0, 0.0])

    def test_finite_differences(self, fig1_right):
        rng = np.random.default_rng(4)
        x = random_simplex(rng, fig1_right.alleles)
        g = grad_V(fig1_right, x)
        h = 1e-5
        for i in range(4):
            e = np.zeros(4)
            e[i] = h
            # off-simplex evaluation of the quadratic form itself
            up = (x + e) @ fig1_right.h + 0.5 * (x + e) @ fig1_right.J @ (x + e)
            dn = (x - e) @ fig1_right.h + 0.5 * (x - e) @ fig1_right.J @ (x - e)
            assert (up - dn) / (2 * h) == pytest.approx(g[i], rel=1e-6, abs=1e-9)


class TestDriftMu:
    def test_symmetric_fixed_point(self):
        p = ModelParams.make((2,), [[0.5, 0.5]])
        np.testing.assert_allclose(drift_mu(p, [0.5, 0.5]), [0.0, 0.0], atol=1e-15)

    def test_boundary_pull(self):
        p = ModelParams.make((2,), [[0.5, 0.5]])
        np.testing.assert_allclose(drift_mu(p, [1.0, 0.0]), [-0.5, 0.5])

    def test_parent_dependent(self):
        p = ModelParams.make((2,), [np.array([[0.0, 1.0], [0.0, 0.0]])])
        np.testing.assert_allclose(drift_mu(p, [0.5, 0.5]), [-0.5, 0.5])


class TestTildeH:
    def test_no_coupling(self):
        p = ModelParams.make((2,), [[0.5, 0.5]], h=[0.7, 0.1])
        np.testing.assert_allclose(tilde_h(p, [0.2, 0.8], 0), [0.7, 0.1])

    def test_fig1_uniform_other_locus(self, fig1_right):
        np.testing.assert_allclose(tilde_h(fig1_right, [0.5, 0.5, 0.5, 0.5], 0), [1.0, 1.0])

    def test_fig1_vertex_other_locus(self, fig1_right):
        np.testing.assert_allclose(tilde_h(fig1_right, [0.5, 0.5, 1.0, 0.0], 0), [2.0, 0.0])


class TestInteractionG:
    def test_constant_tilde_h_gives_zero(self, fig1_right):
        g = interaction_g(fig1_right, [0.5, 0.5, 0.5, 0.5])
        np.testing.assert_allclose(g[:2], [0.0, 0.0], atol=1e-15)

    def test_direct_value(self, fig1_right):
        # locus-1 block at x=(.5,.5) with tilde h = (2,0): d(.5,.5) @ (2,0) = (.5,-.5)
        g = interaction_g(fig1_right, [0.5, 0.5, 1.0, 0.0])
        np.testing.assert_allclose(g[:2], [0.5, -0.5])

    def test_matches_D_grad_V(self, fig1_right):
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = random_simplex(rng, fig1_right.alleles)
            gv = grad_V(fig1_right, x)
            expected = np.concatenate([
                diffusion_d(fig1_right, x, l) @ gv[fig1_right.block(l)]
                for l in range(2)
            ])
            np.testing.assert_allclose(interaction_g(fig1_right, x), expected, rtol=1e-12, atol=1e-15)


class TestDiffusionD:
    def test_half_half(self, neutral_single):
        np.testing.assert_allclose(
            diffusion_d(neutral_single, [0.5, 0.5], 0), [[0.25, -0.25], [-0.25, 0.25]]
        )

    def test_vertex_degenerate(self, neutral_single):
        np.testing.assert_allclose(diffusion_d(neutral_single, [1.0, 0.0], 0), np.zeros((2, 2)))

    def test_row_sums_and_psd(self):
        p = ModelParams.make((4,), [[0.3, 0.5, 0.2, 0.4]])
        rng = np.random.default_rng(6)
        for _ in range(1000):
            x = random_simplex(rng, p.alleles, low=0.0)
            d = diffusion_d(p, x, 0)
            np.testing.assert_allclose(d, d.T, atol=1e-15)
            np.testing.assert_allclose(d.sum(axis=1), 0.0, atol=1e-14)
            assert np.linalg.eigvalsh(d).min() >= -1e-12


class TestSimplexPreservingDrift:
    def test_mu_and_g_sum_to_zero_per_locus(self, fig1_right):
        rng = np.random.default_rng(7)
        for _ in range(200):
            x = random_simplex(rng, fig1_right.alleles)
            mu = drift_mu(fig1_right, x)
            g = interaction_g(fig1_right, x)
            for l in range(2):
                b = fig1_right.block(l)
                assert abs(mu[b].sum()) < 1e-13
                assert abs(g[b].sum()) < 1e-13


def _section4_generator(u, h, x, n):
    """Independent transcription of the one-locus two-allele expansion."""
    def j(i):
        return 1 - i

    m = x[0] ** n[0] * x[1] ** n[1]
    total = 0.0
    for i in (0, 1):
        total += (u[i] * x[j(i)] - u[j(i)] * x[i]) * n[i] / x[i] * m
        total += x[i] * (h[i] - h[i] * x[i] - h[j(i)] * x[j(i)]) * n[i] / x[i] * m
        total += 0.5 * x[i] * (1 - x[i]) * n[i] * (n[i] - 1) / x[i] ** 2 * m
    total += -x[0] * x[1] * n[0] * n[1] / (x[0] * x[1]) * m
    return total


class TestGeneratorOnMonomial:
    def test_annihilates_constants(self, fig1_right):
        assert generator_on_monomial(fig1_right, [0.5, 0.5, 0.5, 0.5], [0, 0, 0, 0]) == 0.0

    def test_single_locus_expansion(self):
        p = ModelParams.make((2,), [[0.5, 0.5]], h=[1.0, 0.3])
        x = np.array([0.3, 0.7])
        n = np.array([2, 1])
        got = generator_on_monomial(p, x, n)
        want = _section4_generator([0.5, 0.5], [1.0, 0.3], x, n)
        assert got == pytest.approx(want, rel=1e-12)

    def test_finite_difference_oracle(self, fig1_right):
        # second-order finite differences of the monomial under the exact
        # drift/diffusion coefficients
        rng = np.random.default_rng(8)
        x = random_simplex(rng, fig1_right.alleles, low=0.2)
        n = np.array([2, 1, 0, 1])
        h = 1e-4

        def mono(y):
            return float(np.prod(y ** n))

        mu = drift_mu(fig1_right, x) + interaction_g(fig1_right, x)
        total = 0.0
        for l in range(2):
            b = fig1_right.block(l)
            d = diffusion_d(fig1_right, x, l)
            idx = range(b.start, b.stop)
            for ii, i in enumerate(idx):
                ei = np.zeros(4)
                ei[i] = h
                total += mu[i] * (mono(x + ei) - mono(x - ei)) / (2 * h)
                total += 0.5 * d[ii, ii] * (mono(x + ei) - 2 * mono(x) + mono(x - ei)) / h**2
                for jj, j in enumerate(idx):
                    if jj == ii:
                        continue
                    ej = np.zeros(4)
                    ej[j] = h
                    mixed = (
                        mono(x + ei + ej) - mono(x + ei - ej) - mono(x - ei + ej) + mono(x - ei - ej)
                    ) / (4 * h**2)
                    total += 0.5 * d[ii, jj] * mixed
        got = generator_on_monomial(fig1_right, x, n)
        assert got == pytest.approx(total, rel=1e-5)

    def test_boundary_factor_vanishing(self, neutral_single):
        # x1 = 0 with n1 >= 1: terms with surviving zero factors vanish
        val = generator_on_monomial(neutral_single, [0.0, 1.0], [1, 0])
        # L x1 at (0,1) = mu_1 = u1*x2 - u2*x1 = 0.5
        assert val == pytest.approx(0.5, abs=1e-15)

    def test_batch_matches_pointwise(self, fig1_right):
        rng = np.random.default_rng(9)
        X = np.stack([random_simplex(rng, fig1_right.alleles, low=0.1) for _ in range(40)])
        n = np.array([1, 2, 0, 3])
        batch = generator_on_monomial_batch(fig1_right, X, n)
        point = np.array([generator_on_monomial(fig1_right, x, n) for x in X])
        np.testing.assert_allclose(batch, point, rtol=1e-11)


class TestMonomial:
    def test_zero_to_the_zero(self):
        assert monomial([0.0, 1.0], [0, 2]) == 1.0
        assert monomial([0.0, 1.0], [1, 0]) == 0.0
