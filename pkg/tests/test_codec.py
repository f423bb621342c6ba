import numpy as np
import pytest

from fpinv.codec import ToyCodec, build_codec, calibrate_quant_step


def identity_codec(dim=4, quant_step=0.0):
    eye = np.eye(dim)
    return ToyCodec(
        latent_dim=dim, pixel_dim=dim,
        decode_matrix=eye.copy(), encode_matrix=eye.copy(),
        quant_step=quant_step,
    )


class TestDecodeEncode:
    def test_decode_zero_is_zero(self):
        codec = build_codec(4, 16, rng_seed=0, quant_step=0.1)
        np.testing.assert_array_equal(codec.decode(np.zeros(4)), np.zeros(16))

    def test_identity_codec_round_trips_exactly(self, rng):
        codec = identity_codec()
        z = rng.standard_normal(4)
        np.testing.assert_array_equal(codec.decode(z), z)
        np.testing.assert_array_equal(codec.round_trip(z), z)

    def test_decode_norm_bounded_by_singular_values(self, rng):
        codec = build_codec(4, 16, rng_seed=3, quant_step=0.1)
        s = np.linalg.svd(codec.decode_matrix, compute_uv=False)
        for _ in range(50):
            z = rng.standard_normal(4)
            norm = np.linalg.norm(codec.decode(z))
            assert s[-1] * np.linalg.norm(z) - 1e-12 <= norm <= s[0] * np.linalg.norm(z) + 1e-12

    def test_round_trip_error_is_pure_quantization(self, rng):
        """The least-squares solve is exact on decoded pixels, so the
        round-trip error is at most half a grid step per coordinate."""
        codec = build_codec(5, 12, rng_seed=9, quant_step=0.37)
        for _ in range(50):
            z = rng.standard_normal(5) * 3.0
            err = codec.round_trip(z) - z
            assert np.max(np.abs(err)) <= 0.5 * codec.quant_step + 1e-12

    def test_zero_quant_step_round_trips_to_solver_precision(self, rng):
        codec = build_codec(4, 16, rng_seed=5, quant_step=0.0)
        z = rng.standard_normal(4)
        np.testing.assert_allclose(codec.round_trip(z), z, atol=1e-10)

    def test_dimension_checks(self):
        codec = build_codec(4, 16, rng_seed=0, quant_step=0.1)
        with pytest.raises(ValueError):
            codec.decode(np.zeros(5))
        with pytest.raises(ValueError):
            codec.encode(np.zeros(4))


class TestConstruction:
    def test_determinism_per_seed(self):
        a = build_codec(4, 16, rng_seed=7, quant_step=0.2)
        b = build_codec(4, 16, rng_seed=7, quant_step=0.2)
        np.testing.assert_array_equal(a.decode_matrix, b.decode_matrix)
        np.testing.assert_array_equal(a.encode_matrix, b.encode_matrix)
        c = build_codec(4, 16, rng_seed=8, quant_step=0.2)
        assert not np.array_equal(a.decode_matrix, c.decode_matrix)

    def test_requires_exactly_one_loss_setting(self):
        with pytest.raises(ValueError):
            build_codec(4, 16, rng_seed=0)
        with pytest.raises(ValueError):
            build_codec(4, 16, rng_seed=0, quant_step=0.1, target_error_fraction=0.05)

    def test_rejects_rank_deficient_map(self):
        mat = np.zeros((6, 3))
        mat[:, 0] = 1.0
        mat[:, 1] = 2.0
        mat[:, 2] = 1.0  # columns are linearly dependent after scaling
        mat[0, 2] = 1.0
        mat[:, 2] = mat[:, 0]
        with pytest.raises(ValueError):
            ToyCodec(
                latent_dim=3, pixel_dim=6,
                decode_matrix=mat, encode_matrix=np.zeros((3, 6)),
                quant_step=0.1,
            )

    def test_rejects_pixel_dim_below_latent_dim(self):
        with pytest.raises(ValueError):
            build_codec(8, 4, rng_seed=0, quant_step=0.1)

    def test_rejects_negative_quant_step(self):
        with pytest.raises(ValueError):
            build_codec(4, 16, rng_seed=0, quant_step=-0.1)


class TestCalibration:
    def test_hits_target_fraction(self, rng):
        samples = rng.standard_normal((400, 4)) * 1.7 + np.array([2.0, 0, 0, 0])
        target = 0.05
        q = calibrate_quant_step(samples, target)
        quantized = np.round(samples / q) * q
        achieved = np.mean(np.linalg.norm(quantized - samples, axis=1))
        mean_norm = np.mean(np.linalg.norm(samples, axis=1))
        assert achieved / mean_norm == pytest.approx(target, rel=0.02)
        # an order of magnitude below the latent scale, but nonzero
        assert 0.0 < achieved < 0.2 * mean_norm

    def test_calibrated_build(self, rng):
        samples = rng.standard_normal((200, 4)) * 2.0
        codec = build_codec(
            4, 16, rng_seed=1, target_error_fraction=0.05, calibration_samples=samples
        )
        errors = [np.linalg.norm(codec.round_trip(z) - z) for z in samples]
        mean_norm = np.mean(np.linalg.norm(samples, axis=1))
        assert np.mean(errors) == pytest.approx(0.05 * mean_norm, rel=0.05)

    def test_requires_samples(self):
        with pytest.raises(ValueError):
            build_codec(4, 16, rng_seed=0, target_error_fraction=0.05)

    def test_rejects_bad_fraction(self, rng):
        with pytest.raises(ValueError):
            calibrate_quant_step(rng.standard_normal((10, 2)), 0.0)
