# ctxnmt/tests/unit/test_numerics.py

import numpy as np
import pytest

from ctxnmt.internal import numerics as nx
from ctxnmt.internal.errors import ConfigError, ContractError, DimensionError, NumericError
from ctxnmt.internal.numerics import (
    INIT_SCALE,
    ParameterStore,
    Tensor,
    backward,
    check_gradients,
    clip_gradients,
    relative_error,
    sgd_adam_step,
)


@pytest.fixture
def store64():
    return ParameterStore(seed=3, precision=64)


# ============================== test Tensor basics ==============================

def test_tensor_data_is_read_only():
    t = Tensor(np.arange(4.0))
    with pytest.raises(ValueError):
        t.data[0] = 10.0


def test_integer_input_is_promoted_to_float():
    assert Tensor([1, 2, 3]).dtype.kind == "f"


def test_constants_carry_store_dtype():
    assert ParameterStore(precision=32).zeros((2,)).dtype == np.float32
    assert ParameterStore(precision=64).zeros((2,)).dtype == np.float64


def test_unknown_precision_is_config_error():
    with pytest.raises(ConfigError):
        ParameterStore(precision=16)


# ============================== test forward ops ==============================

def test_matmul_matches_integer_oracle_exactly():
    """Integer-valued floats make every product and sum exact."""
    a = Tensor(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    b = Tensor(np.array([[1.0, 0.0], [2.0, -1.0], [0.0, 3.0]]))
    out = nx.matmul(a, b).data
    expected = np.array([[1 * 1 + 2 * 2 + 3 * 0, 1 * 0 + 2 * -1 + 3 * 3],
                         [4 * 1 + 5 * 2 + 6 * 0, 4 * 0 + 5 * -1 + 6 * 3]], dtype=float)
    assert np.array_equal(out, expected)


def test_matmul_batches_over_leading_axes():
    a = Tensor(np.ones((2, 3, 4)))
    b = Tensor(np.ones((4, 5)))
    assert nx.matmul(a, b).shape == (2, 3, 5)


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError) as err:
        nx.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    assert "(2, 3)" in str(err.value) and "(4, 2)" in str(err.value)


def test_add_rejects_non_broadcastable_shapes():
    with pytest.raises(DimensionError):
        nx.add(Tensor(np.ones(3)), Tensor(np.ones(4)))


@pytest.mark.parametrize("x", [-30.0, -1.0, 0.0, 2.5, 30.0])
def test_sigmoid_stays_in_unit_interval(x):
    y = nx.sigmoid(Tensor(np.array([x]))).item()
    assert 0.0 <= y <= 1.0


def test_sigmoid_of_zero_is_exactly_half():
    assert nx.sigmoid(Tensor(np.zeros(3))).data.tolist() == [0.5, 0.5, 0.5]


def test_softmax_rows_are_distributions():
    rng = np.random.default_rng(0)
    p = nx.softmax(Tensor(rng.normal(size=(4, 7)))).data
    assert np.all(p > 0)
    assert np.allclose(p.sum(axis=1), 1.0)


def test_log_softmax_agrees_with_log_of_softmax():
    x = Tensor(np.array([[1.0, 2.0, 3.0]]))
    assert np.allclose(nx.log_softmax(x).data, np.log(nx.softmax(x).data))


def test_take_out_of_range_is_contract_error():
    with pytest.raises(ContractError):
        nx.take(Tensor(np.ones((3, 2))), [0, 3])


def test_pick_selects_one_entry_per_row():
    a = Tensor(np.arange(6.0).reshape(2, 3))
    assert nx.pick(a, [2, 0]).data.tolist() == [2.0, 3.0]


def test_narrow_outside_axis_is_dimension_error():
    with pytest.raises(DimensionError):
        nx.narrow(Tensor(np.ones((4, 2))), 0, 3, 2)


def test_nan_in_forward_raises_numeric_error_naming_op():
    with pytest.raises(NumericError) as err:
        nx.add(Tensor(np.array([np.nan])), 1.0)
    assert "add" in str(err.value)


# ============================== test ParameterStore ==============================

def test_uniform_init_range_and_determinism():
    a, b = ParameterStore(seed=7), ParameterStore(seed=7)
    for s in (a, b):
        s.add("W", (20, 30))
    assert np.array_equal(a.value("W"), b.value("W")), "same seed must give identical init"
    assert np.all(np.abs(a.value("W")) <= INIT_SCALE)


def test_orthogonal_init_for_square_recurrent_matrices(store64):
    store64.add("U", (6, 6), init="orthogonal")
    U = store64.value("U")
    assert np.allclose(U.T @ U, np.eye(6), atol=1e-12)


def test_duplicate_parameter_name_is_contract_error(store64):
    store64.add("W", (2, 2))
    with pytest.raises(ContractError):
        store64.add("W", (2, 2))


def test_param_returns_one_leaf_per_pass(store64):
    store64.add("W", (2, 2))
    assert store64.param("W") is store64.param("W")


def test_no_grad_records_nothing(store64):
    store64.add("W", (2, 2))
    with store64.no_grad():
        nx.sum(nx.tanh(store64.param("W")))
    assert len(store64.tape) == 0
    assert store64.tape.enabled is True, "no_grad must restore recording"


def test_snapshot_restore_round_trip(store64):
    store64.add("W", (3,))
    saved = store64.snapshot()
    store64.set_value("W", np.ones(3))
    store64.restore(saved)
    assert np.array_equal(store64.value("W"), saved["W"])


def test_set_value_shape_mismatch(store64):
    store64.add("W", (3,))
    with pytest.raises(DimensionError):
        store64.set_value("W", np.ones(4))


# ============================== test backward ==============================

def test_backward_of_quadratic(store64):
    store64.add("w", (3,))
    store64.set_value("w", [1.0, -2.0, 0.5])
    w = store64.param("w")
    backward(nx.sum(w * w), store64)
    assert np.allclose(store64.grad("w"), [2.0, -4.0, 1.0])
    assert len(store64.tape) == 0, "tape is released after backward"


def test_backward_through_broadcast_add(store64):
    store64.add("b", (3,))
    x = store64.constant(np.ones((4, 3)))
    backward(nx.sum(x + store64.param("b")), store64)
    assert np.array_equal(store64.grad("b"), np.full(3, 4.0)), "bias gradient sums over the batch"


def test_take_backward_accumulates_repeated_rows(store64):
    store64.add("E", (4, 2))
    backward(nx.sum(nx.take(store64.param("E"), [1, 1, 3])), store64)
    assert store64.grad("E").tolist() == [[0, 0], [2, 2], [0, 0], [1, 1]]


def test_gradients_accumulate_until_zero_grad(store64):
    store64.add("w", (1,))
    for _ in range(2):
        backward(nx.sum(store64.param("w") * 3.0), store64)
    assert store64.grad("w")[0] == pytest.approx(6.0)
    store64.zero_grad()
    assert store64.grad("w")[0] == 0.0


def test_backward_needs_scalar(store64):
    store64.add("w", (2,))
    with pytest.raises(ContractError):
        backward(nx.tanh(store64.param("w")), store64)


def test_backward_rejects_foreign_tape(store64):
    other = ParameterStore(precision=64)
    other.add("w", (1,))
    with pytest.raises(ContractError):
        backward(nx.sum(other.param("w")), store64)


# ============================== test optimizer ==============================

def test_clip_gradients_rescales_to_threshold(store64):
    store64.add("w", (2,))
    store64.entries["w"].grad[...] = [3.0, 4.0]
    norm = clip_gradients(store64, 1.0)
    assert norm == pytest.approx(5.0), "returns the pre-clip norm"
    assert store64.global_grad_norm() == pytest.approx(1.0)


def test_clip_gradients_leaves_small_gradients(store64):
    store64.add("w", (2,))
    store64.entries["w"].grad[...] = [0.3, 0.4]
    clip_gradients(store64, 1.0)
    assert store64.grad("w").tolist() == pytest.approx([0.3, 0.4])


def test_first_adam_step_moves_by_lr_against_gradient_sign(store64):
    store64.add("w", (2,))
    store64.set_value("w", [0.0, 0.0])
    store64.entries["w"].grad[...] = [0.5, -0.2]
    sgd_adam_step(store64, lr=0.01, clip_norm=10.0)
    assert store64.value("w").tolist() == pytest.approx([-0.01, 0.01], rel=1e-5)
    assert np.all(store64.grad("w") == 0.0), "step zeroes gradients"


@pytest.mark.parametrize("lr, clip", [(0.0, 1.0), (0.1, 0.0), (-1.0, 1.0)])
def test_optimizer_rejects_non_positive_settings(store64, lr, clip):
    store64.add("w", (1,))
    with pytest.raises(ConfigError):
        sgd_adam_step(store64, lr=lr, clip_norm=clip)


# ============================== test gradient checking ==============================

def test_relative_error_floor():
    assert relative_error(0.0, 1e-6) == pytest.approx(1e-3), "tiny values are compared against the 1e-3 floor"
    assert relative_error(2.0, 1.0) == pytest.approx(0.5)


def test_tiny_gradients_are_held_to_an_absolute_tolerance():
    tol = 1e-6
    assert relative_error(2e-4, 2e-4 + 0.5e-9) <= tol
    assert relative_error(2e-4, 2e-4 + 2e-9) > tol
    assert relative_error(0.0, 2e-9) == pytest.approx(2e-9 / nx.REL_ERROR_FLOOR)


def test_check_gradients_passes_on_composite_function(store64):
    store64.add("W", (3, 4))
    store64.add("v", (4,))
    x = store64.constant(np.array([[0.3, -0.1, 0.8]]))

    def loss():
        h = nx.tanh(nx.matmul(x, store64.param("W")) + store64.param("v"))
        return nx.neg(nx.sum(nx.log_softmax(nx.sigmoid(h) * 3.0)))

    report = check_gradients(loss, store64)
    assert report.passed(1e-6), f"max relative error {report.max_error} at {report.worst}"
    assert report.checked == {"W": 12, "v": 4}


def test_check_gradients_samples_entries(store64):
    store64.add("W", (10, 10))
    report = check_gradients(lambda: nx.sum(nx.tanh(store64.param("W"))), store64, max_entries=5)
    assert report.checked["W"] == 5


def test_check_gradients_requires_64_bit():
    store = ParameterStore(precision=32)
    store.add("w", (1,))
    with pytest.raises(ContractError):
        check_gradients(lambda: nx.sum(store.param("w")), store)
