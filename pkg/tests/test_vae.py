import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flowvae.classifiers import VaeObjective
from flowvae.errors import DimensionError
from flowvae.nn import grad_check
from flowvae.presets import PRESETS
from flowvae.rng import RngStream
from flowvae.vae import (
    build_vae,
    build_vae_for_preset,
    decode,
    encode,
    kl_loss,
    kl_per_row,
    reconstruction_loss,
    reconstruction_scores,
    sample_latent,
    vae_forward,
)

finite = st.floats(-5, 5, allow_nan=False)


def kl_by_quadrature(mu, logvar):
    """KL(N(mu, s^2) || N(0, 1)) by integrating p log(p/q) on a fine grid."""
    s = math.exp(0.5 * logvar)
    x = np.linspace(mu - 12 * s, mu + 12 * s, 200_001)
    logp = -0.5 * ((x - mu) / s) ** 2 - math.log(s) - 0.5 * math.log(2 * math.pi)
    logq = -0.5 * x ** 2 - 0.5 * math.log(2 * math.pi)
    return float(np.trapezoid(np.exp(logp) * (logp - logq), x))


class TestKl:
    def test_zero_at_prior(self):
        assert kl_loss(np.zeros((1, 1)), np.zeros((1, 1))) == 0.0

    def test_unit_mean(self):
        assert abs(kl_loss(np.array([[1.0]]), np.array([[0.0]])) - 0.5) < 1e-12

    def test_log_four_variance(self):
        assert abs(kl_loss(np.array([[0.0]]), np.array([[math.log(4.0)]])) - (1.5 - math.log(2.0))) < 1e-12

    @pytest.mark.parametrize("mu, logvar", [(0.7, -0.4), (-1.5, 1.1), (2.0, 0.0)])
    def test_matches_quadrature(self, mu, logvar):
        got = kl_loss(np.array([[mu]]), np.array([[logvar]]))
        assert got == pytest.approx(kl_by_quadrature(mu, logvar), abs=1e-7)

    def test_sums_dims_and_averages_batch(self):
        mu = np.array([[1.0, 0.0], [0.0, 0.0]])
        lv = np.zeros((2, 2))
        np.testing.assert_allclose(kl_per_row(mu, lv), [0.5, 0.0])
        assert kl_loss(mu, lv) == pytest.approx(0.25)

    @given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (3, 4), elements=finite))
    def test_non_negative(self, mu, logvar):
        assert kl_loss(mu, logvar) >= -1e-12


class TestReconstruction:
    def test_zero_on_equality(self):
        x = RngStream(0).normal((3, 5))
        assert reconstruction_loss(x, x) == 0.0

    def test_value(self):
        assert reconstruction_loss(np.array([[0.0, 0.0]]), np.array([[1.0, 3.0]])) == pytest.approx(5.0)

    @given(arrays(np.float64, (2, 3), elements=finite), arrays(np.float64, (2, 3), elements=finite))
    def test_symmetric(self, a, b):
        assert reconstruction_loss(a, b) == reconstruction_loss(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            reconstruction_loss(np.zeros((2, 3)), np.zeros((2, 4)))


class TestSampling:
    def test_reparameterization(self):
        s = sample_latent(np.array([[1.0, -1.0]]), np.array([[0.0, math.log(9.0)]]), eps=np.array([[2.0, 1.0]]))
        np.testing.assert_allclose(s.z, [[3.0, 2.0]])

    def test_seeded_draws_repeat(self):
        mu, lv = np.zeros((2, 3)), np.zeros((2, 3))
        a = sample_latent(mu, lv, RngStream(4)).z
        np.testing.assert_array_equal(a, sample_latent(mu, lv, RngStream(4)).z)

    def test_large_negative_logvar_collapses_to_mean(self):
        s = sample_latent(np.array([[0.5]]), np.array([[-200.0]]), eps=np.array([[3.0]]))
        assert s.z[0, 0] == 0.5


class TestArchitecture:
    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_decode_encode_preserves_width(self, name):
        preset = PRESETS[name]
        n = 76 if preset.feature_set == "all76" else 40
        vae = build_vae_for_preset(n, preset, RngStream(0))
        x = RngStream(1).normal((3, n))
        mu, _ = encode(x, vae)
        assert decode(mu, vae).shape == (3, n)

    @pytest.mark.parametrize("n, ks, strides, latent", [
        (76, (5, 5, 5), (2, 1, 1), 30), (40, (5, 5, 5), (1, 1, 1), 28), (40, (7, 7, 7), (2, 2, 1), 4),
    ])
    def test_latent_size(self, n, ks, strides, latent):
        assert build_vae(n, "conv", ks, strides, rng=RngStream(0)).latent_dim == latent

    def test_dense_shares_latent_size(self):
        assert build_vae(76, "dense", (5, 5, 5), (2, 1, 1), rng=RngStream(0)).latent_dim == 30

    def test_encoder_width_checked(self):
        vae = build_vae(40, "conv", (5, 5, 5), (1, 1, 1), rng=RngStream(0))
        with pytest.raises(DimensionError):
            encode(np.zeros((2, 41)), vae)

    def test_decoder_removable(self):
        vae = build_vae(40, "conv", (5, 5, 5), (1, 1, 1), rng=RngStream(0))
        enc_only = vae.without_decoder()
        x = RngStream(2).normal((2, 40))
        np.testing.assert_array_equal(encode(x, enc_only)[0], encode(x, vae)[0])
        with pytest.raises(DimensionError):
            decode(np.zeros((1, 28)), enc_only)

    def test_unknown_layer_type(self):
        with pytest.raises(ValueError):
            build_vae(40, "lstm", (5, 5, 5), (1, 1, 1))


class TestForward:
    def test_deterministic_given_seed(self):
        vae = build_vae(20, "conv", (3, 3, 3), (2, 1, 1), rng=RngStream(0))
        x = RngStream(1).normal((4, 20))
        a = vae_forward(x, vae, RngStream(9))
        b = vae_forward(x, vae, RngStream(9))
        np.testing.assert_array_equal(a.x_hat, b.x_hat)
        assert a.kl == b.kl and a.rloss == b.rloss

    def test_inference_does_not_mutate(self):
        vae = build_vae(20, "conv", (3, 3, 3), (2, 1, 1), rng=RngStream(0))
        before = vae.checksum()
        reconstruction_scores(RngStream(1).normal((10, 20)), vae)
        assert vae.checksum() == before

    def test_scores_decode_the_mean(self):
        vae = build_vae(12, "dense", (3, 3, 3), (1, 1, 1), rng=RngStream(3))
        x = RngStream(4).normal((5, 12))
        mu, _ = encode(x, vae)
        expected = np.mean((decode(mu, vae) - x) ** 2, axis=1)
        np.testing.assert_allclose(reconstruction_scores(x, vae, batch_size=2), expected)

    def test_checksum_sees_buffers(self):
        vae = build_vae(12, "dense", (3, 3, 3), (1, 1, 1), rng=RngStream(3))
        before = vae.checksum()
        encode(RngStream(5).normal((4, 12)), vae, training=True)
        assert vae.checksum() != before


class TestVaeGradients:
    @pytest.mark.parametrize("layer_type", ["conv", "dense"])
    @pytest.mark.parametrize("seed", range(3))
    def test_rloss_plus_kl(self, layer_type, seed):
        r = RngStream(seed)
        vae = build_vae(12, layer_type, (3, 3, 3), (2, 1, 1), filters=2, rng=r.fork(0))
        x = r.fork(1).normal((6, 12))
        obj = VaeObjective(vae, 1.0, eps=r.fork(2).normal((6, vae.latent_dim)))
        report = grad_check(obj, x)
        assert report.passed, str(report)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 1000))
    def test_kl_gradient_wrt_latent(self, seed):
        r = RngStream(seed)
        mu, lv = r.normal((3, 2)), r.normal((3, 2))
        g_mu = mu / 3
        g_lv = 0.5 * (np.exp(lv) - 1.0) / 3
        h = 1e-6
        for arr, g in ((mu, g_mu), (lv, g_lv)):
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + h
                up = kl_loss(mu, lv)
                arr[idx] = old - h
                down = kl_loss(mu, lv)
                arr[idx] = old
                assert (up - down) / (2 * h) == pytest.approx(g[idx], abs=1e-7)
