"""Average pooling and its exact expression as a Tucker-format layer."""

import numpy as np
import pytest

from tenreg.gap import GapSpec, gap_as_tucker_trl, gap_fc_as_tucker_trl, gap_forward
from tenreg.trl import dense_weight, forward


class TestGapSpec:
    def test_default_channel_is_last(self):
        spec = GapSpec((4, 5, 6))
        assert spec.channel_mode == 2
        assert spec.channel_dim == 6

    def test_explicit_channel(self):
        spec = GapSpec((4, 5, 6), channel_mode=0)
        assert spec.channel_dim == 4

    def test_validation(self):
        with pytest.raises(ValueError):
            GapSpec(())
        with pytest.raises(ValueError):
            GapSpec((4, 0))
        with pytest.raises(ValueError):
            GapSpec((4, 5), channel_mode=2)


class TestGapForward:
    def test_mean_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 4, 5))
        out = gap_forward(GapSpec((3, 4, 5)), x)
        ref = np.array([x[:, :, c].mean() for c in range(5)])
        np.testing.assert_allclose(out, ref, rtol=1e-14)

    def test_channel_mode_in_middle(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((3, 4, 5))
        out = gap_forward(GapSpec((3, 4, 5), channel_mode=1), x)
        ref = np.array([x[:, c, :].mean() for c in range(4)])
        np.testing.assert_allclose(out, ref, rtol=1e-14)

    def test_nothing_to_pool(self):
        x = np.array([1.0, 2.0, 3.0])
        out = gap_forward(GapSpec((3,)), x)
        assert np.array_equal(out, x)
        assert out is not x

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            gap_forward(GapSpec((3, 4)), np.zeros((4, 3)))

    def test_scale_equivariance(self):
        rng = np.random.default_rng(2)
        spec = GapSpec((4, 6))
        x = rng.standard_normal((4, 6))
        np.testing.assert_allclose(
            gap_forward(spec, 3.5 * x), 3.5 * gap_forward(spec, x), rtol=1e-13
        )

    def test_invariant_to_shuffling_pooled_axis(self):
        rng = np.random.default_rng(3)
        spec = GapSpec((5, 4, 3))
        x = rng.standard_normal((5, 4, 3))
        perm = rng.permutation(5)
        np.testing.assert_allclose(
            gap_forward(spec, x[perm]), gap_forward(spec, x), rtol=1e-13
        )


class TestTuckerEquivalence:
    @pytest.mark.parametrize(
        "dims", [(6, 3), (4, 5, 6), (3, 4, 2, 5), (2, 3, 2, 2, 4)]
    )
    def test_orders_two_to_five(self, dims):
        spec = GapSpec(dims)
        layer = gap_as_tucker_trl(spec)
        rng = np.random.default_rng(10)
        for _ in range(20):
            x = rng.standard_normal(dims)
            diff = np.abs(forward(layer, x) - gap_forward(spec, x)).max()
            assert diff < 1e-12

    def test_non_default_channel_mode(self):
        spec = GapSpec((4, 6, 3), channel_mode=1)
        layer = gap_as_tucker_trl(spec)
        rng = np.random.default_rng(11)
        for _ in range(10):
            x = rng.standard_normal((4, 6, 3))
            diff = np.abs(forward(layer, x) - gap_forward(spec, x)).max()
            assert diff < 1e-12

    def test_constructed_structure(self):
        spec = GapSpec((4, 5, 6))
        layer = gap_as_tucker_trl(spec)
        assert layer.format == "tucker"
        # one rank per pooled mode, channel_dim on the channel/output slots
        assert layer.rank_spec.values == (1, 1, 6, 6)
        assert not layer.bias.any()

    def test_dense_weight_entries(self):
        # W[i, j, c, o] = delta(c, o) / (pooled size)
        spec = GapSpec((3, 4, 2))
        w = dense_weight(gap_as_tucker_trl(spec))
        assert w.shape == (3, 4, 2, 2)
        for c in range(2):
            for o in range(2):
                want = (1.0 / 12.0) if c == o else 0.0
                np.testing.assert_allclose(w[:, :, c, o], want, atol=1e-15)


class TestFcComposition:
    def test_matches_two_stage_map(self):
        rng = np.random.default_rng(20)
        spec = GapSpec((5, 4, 8))
        fc_w = rng.standard_normal((8, 10))
        fc_b = rng.standard_normal(10)
        layer = gap_fc_as_tucker_trl(spec, fc_w, fc_b)
        for _ in range(20):
            x = rng.standard_normal((5, 4, 8))
            direct = fc_w.T @ gap_forward(spec, x) + fc_b
            diff = np.abs(forward(layer, x) - direct).max()
            assert diff < 1e-12

    def test_bias_carried_over(self):
        rng = np.random.default_rng(21)
        spec = GapSpec((3, 6))
        fc_b = rng.standard_normal(2)
        # 6 channels into 2 classes: the channel factor is overcomplete
        with pytest.warns(UserWarning):
            layer = gap_fc_as_tucker_trl(spec, rng.standard_normal((6, 2)), fc_b)
        assert np.array_equal(layer.bias, fc_b)

    def test_fc_shape_validation(self):
        spec = GapSpec((3, 6))
        with pytest.raises(ValueError):
            gap_fc_as_tucker_trl(spec, np.zeros((5, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            gap_fc_as_tucker_trl(spec, np.zeros((6, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            gap_fc_as_tucker_trl(spec, np.zeros(6), np.zeros(1))

    def test_channel_heavy_head_warns_but_works(self):
        # more channels than classes puts an overcomplete factor on the
        # output mode (rank = channels, dim = classes); still exact
        rng = np.random.default_rng(22)
        spec = GapSpec((4, 7))
        fc_w = rng.standard_normal((7, 3))
        fc_b = rng.standard_normal(3)
        with pytest.warns(UserWarning):
            layer = gap_fc_as_tucker_trl(spec, fc_w, fc_b)
        x = rng.standard_normal((4, 7))
        direct = fc_w.T @ gap_forward(spec, x) + fc_b
        assert np.abs(forward(layer, x) - direct).max() < 1e-12
