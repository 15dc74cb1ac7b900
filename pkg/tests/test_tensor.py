"""Forward oracles, hand-derived gradients, and gradient properties for the tape."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adapterqa import tensor as tz
from adapterqa.errors import ContractError
from adapterqa.tensor import Tensor
from helpers import max_graph_grad_error


def leaf(values):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


class TestForwardOracles:
    def test_matmul_hand_product(self):
        out = tz.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]),
                        Tensor([[5.0, 6.0], [7.0, 8.0]]))
        assert np.array_equal(out.numpy(), [[19.0, 22.0], [43.0, 50.0]])

    def test_matmul_rejects_inner_mismatch(self):
        with pytest.raises(ContractError):
            tz.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_matmul_rejects_non_2d(self):
        with pytest.raises(ContractError):
            tz.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))

    def test_softmax_reference_values(self):
        out = tz.softmax(Tensor([1.0, 2.0, 3.0])).numpy()
        np.testing.assert_allclose(out, [0.0900, 0.2447, 0.6652], atol=1e-4)

    def test_softmax_saturates_on_extreme_gap(self):
        out = tz.softmax(Tensor([1000.0, 0.0])).numpy()
        assert out[0] == 1.0
        assert out[1] == 0.0

    def test_softmax_splits_ties_evenly(self):
        out = tz.softmax(Tensor([0.0, 0.0])).numpy()
        np.testing.assert_array_equal(out, [0.5, 0.5])

    @given(st.lists(st.floats(min_value=-1e3, max_value=1e3),
                    min_size=1, max_size=16))
    def test_softmax_sums_to_one(self, row):
        out = tz.softmax(Tensor(np.array(row, dtype=np.float64))).numpy()
        assert abs(out.sum() - 1.0) <= 1e-12

    def test_softmax_rows_normalized_independently(self):
        out = tz.softmax(Tensor([[0.0, 0.0], [1000.0, 0.0]])).numpy()
        np.testing.assert_array_equal(out, [[0.5, 0.5], [1.0, 0.0]])

    def test_log_softmax_matches_log_of_softmax(self):
        x = Tensor([[0.3, -1.2, 2.0], [5.0, 5.0, -5.0]])
        np.testing.assert_allclose(tz.log_softmax(x).numpy(),
                                   np.log(tz.softmax(x).numpy()), atol=1e-12)

    def test_layer_norm_constant_row_maps_to_zero(self):
        out = tz.layer_norm(Tensor([5.0, 5.0, 5.0]),
                            Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.numpy(), [0.0, 0.0, 0.0])

    def test_layer_norm_two_point_row(self):
        out = tz.layer_norm(Tensor([1.0, 3.0]),
                            Tensor(np.ones(2)), Tensor(np.zeros(2)))
        np.testing.assert_allclose(out.numpy(), [-1.0, 1.0], atol=1e-6)

    def test_layer_norm_zero_gain_returns_bias(self):
        bias = np.array([0.5, -0.25, 7.0])
        out = tz.layer_norm(Tensor([[1.0, 2.0, 3.0], [9.0, -4.0, 0.0]]),
                            Tensor(np.zeros(3)), Tensor(bias))
        np.testing.assert_array_equal(out.numpy(), np.tile(bias, (2, 1)))

    def test_layer_norm_rejects_mismatched_affine(self):
        with pytest.raises(ContractError):
            tz.layer_norm(Tensor(np.ones((2, 4))),
                          Tensor(np.ones(3)), Tensor(np.zeros(3)))

    def test_gelu_fixed_points(self):
        out = tz.gelu(Tensor([0.0, 10.0, -10.0])).numpy()
        assert out[0] == 0.0
        np.testing.assert_allclose(out[1], 10.0, atol=1e-6)
        np.testing.assert_allclose(out[2], 0.0, atol=1e-6)

    def test_division_by_scalar(self):
        out = leaf([2.0, 4.0]) / 2.0
        np.testing.assert_array_equal(out.numpy(), [1.0, 2.0])

    def test_division_by_tensor_rejected(self):
        with pytest.raises(ContractError):
            leaf([1.0]) / leaf([2.0])

    def test_transpose_requires_2d(self):
        with pytest.raises(ContractError):
            tz.transpose(Tensor(np.ones(3)))

    def test_item_requires_single_element(self):
        with pytest.raises(ContractError):
            Tensor([1.0, 2.0]).item()

    def test_concat_joins_along_axis(self):
        out = tz.concat([Tensor(np.ones((2, 2))), Tensor(np.zeros((2, 1)))],
                        axis=-1)
        assert out.shape == (2, 3)
        np.testing.assert_array_equal(out.numpy()[:, 2], [0.0, 0.0])

    def test_validate_finite_flags_nan(self):
        with pytest.raises(ContractError):
            Tensor([1.0, np.nan]).validate_finite("probe")


class TestBackwardOracles:
    def test_sum_of_squares_gradient(self):
        x = leaf([1.0, 2.0, 3.0])
        (x * x).sum().backward()
        np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])

    def test_matmul_gradients(self):
        x = leaf([[1.0, 2.0], [3.0, 4.0]])
        w = leaf(np.ones((2, 2)))
        tz.matmul(x, w).sum().backward()
        # d/dw sum(x@w) broadcasts the column sums of x across w's columns.
        np.testing.assert_array_equal(w.grad, [[4.0, 4.0], [6.0, 6.0]])
        np.testing.assert_array_equal(x.grad, [[2.0, 2.0], [2.0, 2.0]])

    def test_leaf_used_twice_accumulates(self):
        x = leaf([1.0, 5.0])
        (x + x).sum().backward()
        np.testing.assert_array_equal(x.grad, [2.0, 2.0])

    def test_backward_rejects_non_scalar(self):
        with pytest.raises(ContractError):
            (leaf([1.0, 2.0]) * 2.0).backward()

    def test_getitem_scatters_with_duplicates(self):
        x = leaf([10.0, 20.0, 30.0])
        x[np.array([0, 0, 2])].sum().backward()
        np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0])

    def test_concat_routes_gradient_to_sources(self):
        a, b = leaf(np.ones((2, 2))), leaf(np.ones((2, 3)))
        out = tz.concat([a, b], axis=-1)
        (out * Tensor(np.arange(10.0).reshape(2, 5))).sum().backward()
        np.testing.assert_array_equal(a.grad, [[0.0, 1.0], [5.0, 6.0]])
        np.testing.assert_array_equal(b.grad, [[2.0, 3.0, 4.0], [7.0, 8.0, 9.0]])

    def test_embedding_gradient_is_sparse(self):
        table = leaf(np.ones((5, 3)))
        tz.embedding(table, [1, 1, 4]).sum().backward()
        expected = np.zeros((5, 3))
        expected[1] = 2.0
        expected[4] = 1.0
        np.testing.assert_array_equal(table.grad, expected)

    def test_broadcast_add_reduces_gradient(self):
        row = leaf([1.0, 2.0, 3.0])
        full = leaf(np.zeros((4, 3)))
        (full + row).sum().backward()
        np.testing.assert_array_equal(row.grad, [4.0, 4.0, 4.0])
        np.testing.assert_array_equal(full.grad, np.ones((4, 3)))

    def test_mean_gradient_is_uniform(self):
        x = leaf(np.arange(6.0).reshape(2, 3))
        x.mean().backward()
        np.testing.assert_allclose(x.grad, np.full((2, 3), 1.0 / 6.0))

    def test_reshape_roundtrip_gradient(self):
        x = leaf(np.arange(6.0).reshape(2, 3))
        (x.reshape(3, 2) * 2.0).sum().backward()
        np.testing.assert_array_equal(x.grad, np.full((2, 3), 2.0))

    def test_transpose_gradient(self):
        x = leaf([[1.0, 2.0], [3.0, 4.0]])
        (x.T * Tensor([[1.0, 0.0], [0.0, 0.0]])).sum().backward()
        np.testing.assert_array_equal(x.grad, [[1.0, 0.0], [0.0, 0.0]])

    def test_no_grad_suppresses_taping(self):
        x = leaf([1.0, 2.0])
        with tz.no_grad():
            y = (x * x).sum()
        assert not y.requires_grad
        y.backward()
        assert x.grad is None

    def test_no_grad_restores_on_exit(self):
        x = leaf([1.0])
        with tz.no_grad():
            pass
        assert (x * x).sum().requires_grad


class TestGradientProperties:
    @pytest.mark.parametrize("seed", range(5))
    def test_random_composition_matches_finite_differences(self, seed):
        assert max_graph_grad_error(seed, h=1e-4) < 1e-4

    def test_softmax_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x0 = rng.normal(size=(3, 4))
        w = rng.normal(size=(3, 4))

        def run(arr):
            t = Tensor(arr, requires_grad=True)
            return (tz.softmax(t) * Tensor(w)).sum(), t

        loss, t = run(x0)
        loss.backward()
        h = 1e-6
        fd = np.zeros_like(x0)
        for i in np.ndindex(x0.shape):
            probe = x0.copy()
            probe[i] += h
            hi, _ = run(probe)
            probe[i] -= 2 * h
            lo, _ = run(probe)
            fd[i] = (hi.item() - lo.item()) / (2 * h)
        np.testing.assert_allclose(t.grad, fd, atol=1e-8)
