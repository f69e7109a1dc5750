import numpy as np
import pytest

from colliderreg import (
    ColliderKernel,
    GaussianKernel,
    RngStream,
    fit_projected_kernel,
    general_projected_kernel_eval,
    gram,
    kernel_eval,
    median_sqdist,
    min_eigenvalue,
    projected_kernel_eval,
)
from colliderreg.cme import fit_cme


def make_collider_kernel(theta1=1.5, theta2=0.8, d1=2, d2=2):
    return ColliderKernel(GaussianKernel(theta1), GaussianKernel(theta2), d1, d2)


@pytest.fixture(scope="module")
def fitted_projection():
    rng = RngStream(12)
    kern = make_collider_kernel()
    anchors = rng.standard_normal((60, 4))
    cme = fit_cme(anchors, anchors[:, 2:], kern.cond_kernel, 1e-2, x_kernel=kern)
    return kern, cme, fit_projected_kernel(kern, cme)


class TestBaseKernels:
    def test_gaussian_unit_distance(self):
        k = GaussianKernel(1.0)
        assert kernel_eval(k, np.array([0.0, 0.0]), np.array([1.0, 0.0])) == pytest.approx(np.exp(-1.0))

    def test_collider_diagonal_is_two(self):
        k = make_collider_kernel()
        x = np.array([0.3, -0.2, 1.0, 0.4])
        assert kernel_eval(k, x, x) == pytest.approx(2.0)
        assert k.diag_value == 2.0

    def test_gram_psd(self):
        rng = RngStream(13)
        k = make_collider_kernel()
        pts = rng.standard_normal((20, 4))
        g = gram(k, pts, pts)
        assert min_eigenvalue(0.5 * (g + g.T)) >= -1e-10 * np.trace(g)

    def test_product_factorization_exact(self):
        rng = RngStream(14)
        k = make_collider_kernel()
        a = rng.standard_normal((7, 4))
        b = rng.standard_normal((5, 4))
        got = gram(k, a, b)
        manual = (gram(k.child_kernel, a[:, :2], b[:, :2]) + 1.0) * gram(k.cond_kernel, a[:, 2:], b[:, 2:])
        np.testing.assert_array_equal(got, manual)

    def test_symmetry(self):
        rng = RngStream(15)
        k = make_collider_kernel()
        for _ in range(20):
            a, b = rng.standard_normal(4), rng.standard_normal(4)
            assert abs(kernel_eval(k, a, b) - kernel_eval(k, b, a)) <= 1e-12

    def test_dimension_mismatch(self):
        k = make_collider_kernel()
        with pytest.raises(ValueError):
            gram(k, np.zeros((3, 5)), np.zeros((3, 5)))

    def test_nonpositive_lengthscale(self):
        with pytest.raises(ValueError, match="positive"):
            GaussianKernel(0.0)

    def test_gram_tiling_matches_direct(self):
        # Point counts beyond one column tile exercise the blocked path.
        rng = RngStream(16)
        k = GaussianKernel(2.0)
        a = rng.standard_normal((10, 3))
        b = rng.standard_normal((600, 3))
        g = gram(k, a, b)
        direct = np.exp(-((a[:, None, :] - b[None, :, :]) ** 2).sum(-1) / 2.0)
        np.testing.assert_allclose(g, direct, atol=1e-12)

    def test_median_sqdist(self):
        pts = np.array([[0.0], [1.0], [3.0]])
        # pairwise squared distances: 1, 9, 4 -> median 4
        assert median_sqdist(pts) == pytest.approx(4.0)


class TestProjectedKernel:
    def test_large_gamma_degenerates_to_base(self):
        rng = RngStream(17)
        kern = make_collider_kernel()
        anchors = rng.standard_normal((40, 4))
        cme = fit_cme(anchors, anchors[:, 2:], kern.cond_kernel, 1e12, x_kernel=kern)
        pk = fit_projected_kernel(kern, cme)
        pts = rng.standard_normal((10, 4))
        np.testing.assert_allclose(pk.gram(pts, pts), kern.gram(pts, pts), atol=1e-9)

    def test_four_term_expansion_oracle(self, fitted_projection):
        # <k_x - mu_x, k_x' - mu_x'> assembled term by term through the
        # embedding, instead of the fused Gram path.
        from colliderreg.cme import cme_embed_eval

        kern, cme, pk = fitted_projection
        rng = RngStream(18)
        anchors1 = cme.anchors_x[:, :2]
        r_anchor = kern.offset_gram(anchors1, anchors1)
        for _ in range(10):
            x = rng.standard_normal(4)
            xp = rng.standard_normal(4)
            ell = kernel_eval(kern.cond_kernel, x[2:], xp[2:])
            mu_x_at_xp = cme_embed_eval(cme, x[2:], xp)
            mu_xp_at_x = cme_embed_eval(cme, xp[2:], x)
            ax = cme.weights(x[2:])[:, 0]
            axp = cme.weights(xp[2:])[:, 0]
            mu_mu = float(ax @ r_anchor @ axp) * ell
            want = kernel_eval(kern, x, xp) - mu_x_at_xp - mu_xp_at_x + mu_mu
            got = projected_kernel_eval(pk, x, xp)
            assert got == pytest.approx(want, abs=1e-10)

    def test_gram_psd_with_plus_sign(self, fitted_projection):
        _, _, pk = fitted_projection
        rng = RngStream(19)
        pts = rng.standard_normal((40, 4))
        g = pk.gram(pts, pts)
        g = 0.5 * (g + g.T)
        assert min_eigenvalue(g) >= -1e-6 * np.trace(g) / 40

    def test_minus_sign_variant_is_indefinite(self, fitted_projection):
        # Pin the failure mode of flipping the final expansion term's sign.
        kern, cme, _ = fitted_projection
        neg = fit_projected_kernel(kern, cme, mu_term_sign=-1.0)
        rng = RngStream(19)
        pts = rng.standard_normal((40, 4))
        g = neg.gram(pts, pts)
        g = 0.5 * (g + g.T)
        assert min_eigenvalue(g) < -1e-6 * np.trace(g) / 40

    def test_symmetry(self, fitted_projection):
        _, _, pk = fitted_projection
        rng = RngStream(20)
        for _ in range(10):
            x, xp = rng.standard_normal(4), rng.standard_normal(4)
            assert abs(pk.eval(x, xp) - pk.eval(xp, x)) <= 1e-12

    def test_tiny_cond_lengthscale_off_anchor(self):
        # With a vanishing conditioning lengthscale the embedding weights die
        # off-anchor and the projected kernel reverts to the base kernel.
        rng = RngStream(21)
        kern = ColliderKernel(GaussianKernel(1.5), GaussianKernel(1e-4), 2, 2)
        anchors = rng.standard_normal((30, 4))
        cme = fit_cme(anchors, anchors[:, 2:], kern.cond_kernel, 1e-3, x_kernel=kern)
        pk = fit_projected_kernel(kern, cme)
        pts = rng.standard_normal((8, 4)) + 5.0  # far from every anchor
        np.testing.assert_allclose(pk.gram(pts, pts), kern.gram(pts, pts), atol=1e-8)

    def test_requires_factored_embedding(self, fitted_projection):
        kern, cme, _ = fitted_projection
        generic = fit_cme(cme.anchors_x, cme.anchors_z, kern.cond_kernel, 1e-2, mode="generic", x_kernel=kern)
        with pytest.raises(ValueError, match="factored"):
            fit_projected_kernel(kern, generic)


class TestGeneralProjectedKernel:
    def test_zero_width_parent_block_reduces(self, fitted_projection):
        kern, cme, pk = fitted_projection
        rng = RngStream(22)
        x, xp = rng.standard_normal(4), rng.standard_normal(4)
        assert general_projected_kernel_eval(pk, x, xp) == projected_kernel_eval(pk, x, xp)

    def test_joint_conditioning_block(self):
        # Conditioning on (x2, x3): the second factor runs over 3 columns.
        rng = RngStream(23)
        kern = ColliderKernel(GaussianKernel(1.0), GaussianKernel(1.2), 2, 3)
        anchors = rng.standard_normal((50, 5))
        cme = fit_cme(anchors, anchors[:, 2:], kern.cond_kernel, 1e-2, x_kernel=kern)
        pk = fit_projected_kernel(kern, cme)
        pts = rng.standard_normal((40, 5))
        g = pk.gram(pts, pts)
        g = 0.5 * (g + g.T)
        assert min_eigenvalue(g) >= -1e-6 * np.trace(g) / 40
        x, xp = rng.standard_normal(5), rng.standard_normal(5)
        assert abs(general_projected_kernel_eval(pk, x, xp) - general_projected_kernel_eval(pk, xp, x)) <= 1e-12
