import numpy as np
import pytest

from ergnn.autodiff import (
    AdamState, Tape, Tensor, adam_step, cross_entropy, dropout, gradient_check, linear, mse,
    relu, softmax_rows, sum_all,
)
from ergnn.errors import ShapeError


def test_vector_becomes_column():
    assert Tensor([1.0, 2.0, 3.0]).shape == (3, 1)
    assert Tensor(2.0).shape == (1, 1)


def test_linear_weight_gradient(rng):
    x = Tensor(rng.standard_normal((5, 3)))
    w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
    b = Tensor(np.zeros((1, 2)), requires_grad=True)
    with Tape() as tape:
        out = sum_all(linear(x, w, b))
    tape.backward(out)
    np.testing.assert_allclose(w.grad, np.tile(x.data.sum(axis=0)[:, None], (1, 2)))
    np.testing.assert_allclose(b.grad, [[5.0, 5.0]])


def test_gradients_accumulate_over_reuse():
    a = Tensor([[2.0]], requires_grad=True)
    with Tape() as tape:
        out = a * a + a
    tape.backward(out)
    assert a.grad[0, 0] == pytest.approx(5.0)


def test_no_tape_no_record():
    a = Tensor([[1.0]], requires_grad=True)
    out = a + a
    assert out.requires_grad
    assert out.data[0, 0] == 2.0


def test_linear_shape_errors():
    with pytest.raises(ShapeError):
        linear(np.ones((4, 3)), np.ones((2, 2)), np.ones((1, 2)))
    with pytest.raises(ShapeError):
        linear(np.ones((4, 2)), np.ones((2, 2)), np.ones((4, 2)))


def test_cross_entropy_uniform_logits():
    loss = cross_entropy(np.zeros((4, 3)), np.array([0, 1, 2, 0]))
    assert loss.item() == pytest.approx(np.log(3))


def test_cross_entropy_mask_and_errors():
    logits = np.array([[10.0, 0.0], [0.0, 10.0]])
    labels = np.array([0, 0])
    assert cross_entropy(logits, labels, mask=[0]).item() < 1e-3
    with pytest.raises(ValueError):
        cross_entropy(logits, labels, mask=np.zeros(2, dtype=bool))
    with pytest.raises(ValueError):
        cross_entropy(np.array([[np.nan, 0.0]]), np.array([0]))


def test_mse_shape_error():
    with pytest.raises(ShapeError):
        mse(np.ones((3, 2)), np.ones((3, 1)))


def test_softmax_rows_sum_to_one(rng):
    s = softmax_rows(rng.standard_normal((6, 4)) * 50)
    np.testing.assert_allclose(s.data.sum(axis=1), 1.0)


def test_dropout_is_seeded_and_scaled():
    x = np.ones((200, 5))
    a = dropout(x, 0.5, seed=[3, 1], training=True).data
    b = dropout(x, 0.5, seed=[3, 1], training=True).data
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 2.0}
    np.testing.assert_array_equal(dropout(x, 0.5, seed=0, training=False).data, x)
    with pytest.raises(ValueError):
        dropout(x, 1.0, seed=0, training=True)


def test_soft_target_receives_gradient(rng):
    logits = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
    target_logits = Tensor(rng.standard_normal((5, 3)), requires_grad=True)

    def fn():
        return cross_entropy(logits, softmax_rows(target_logits))

    report = gradient_check(fn, {'logits': logits, 'target': target_logits})
    assert max(report.values()) <= 1.0
    assert np.abs(target_logits.grad).max() > 0


def test_gradient_check_composite(rng):
    x = Tensor(rng.standard_normal((6, 3)))
    w1 = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b1 = Tensor(rng.standard_normal((1, 4)), requires_grad=True)
    w2 = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    b2 = Tensor(np.zeros((1, 2)), requires_grad=True)
    y = rng.standard_normal((6, 2))

    def fn():
        h = relu(linear(x, w1, b1))
        return mse(linear(h, w2, b2), y) + 0.5 * sum_all(h * h)

    report = gradient_check(fn, {'w1': w1, 'b1': b1, 'w2': w2, 'b2': b2})
    assert all(v <= 1.0 for v in report.values()), report


def test_gradient_check_detects_wrong_gradient():
    a = Tensor([[1.5]], requires_grad=True)

    def fn():
        # detach hides the second factor from the tape
        return a * a.detach()

    report = gradient_check(fn, {'a': a})
    assert report['a'] > 1.0


def test_adam_first_step_moves_by_lr():
    p = Tensor([[1.0, -1.0]], requires_grad=True)
    p.grad = np.array([[0.3, -7.0]])
    adam_step({'p': p}, AdamState(lr=0.1))
    np.testing.assert_allclose(p.data, [[0.9, -0.9]], atol=1e-6)


def test_adam_missing_gradient_is_zero():
    p = Tensor([[1.0]], requires_grad=True)
    _, state = adam_step({'p': p}, AdamState(lr=0.1))
    assert p.data[0, 0] == 1.0
    assert state.t == 1


def test_adam_decoupled_weight_decay():
    p = Tensor([[2.0]], requires_grad=True)
    adam_step({'p': p}, AdamState(lr=0.1, weight_decay=0.5))
    assert p.data[0, 0] == pytest.approx(2.0 * (1 - 0.05))


def test_adam_minimizes_quadratic():
    p = Tensor([[3.0, -2.0]], requires_grad=True)
    state = AdamState(lr=0.1)
    for _ in range(500):
        p.zero_grad()
        with Tape() as tape:
            loss = sum_all(p * p)
        tape.backward(loss)
        adam_step({'p': p}, state)
    assert np.abs(p.data).max() < 1e-2


def test_dropout_is_unbiased(rng):
    x = 1.0 + rng.random((4, 3))
    total = np.zeros_like(x)
    draws = 10000
    for s in range(draws):
        total += dropout(x, 0.5, seed=[s], training=True).data
    ratio = total / draws / x
    assert abs(ratio.mean() - 1.0) < 0.02
    np.testing.assert_allclose(ratio, 1.0, rtol=0.05)


def test_softmax_ignores_row_shifts(rng):
    x = rng.standard_normal((5, 4))
    shift = rng.standard_normal(5) * 100
    a = softmax_rows(x).data
    b = softmax_rows(x + shift[:, None]).data
    np.testing.assert_allclose(b, a, atol=1e-12)
    np.testing.assert_array_equal(np.argmax(b, axis=1), np.argmax(x, axis=1))


def test_softmax_of_zero_row_is_uniform():
    np.testing.assert_allclose(softmax_rows(np.zeros((2, 4))).data, 0.25)


def test_cross_entropy_against_own_softmax_is_entropy(rng):
    logits = rng.standard_normal((6, 3))
    s = softmax_rows(logits).data
    entropy = -(s * np.log(s)).sum(axis=1).mean()
    assert cross_entropy(logits, s).item() == pytest.approx(entropy, rel=1e-10)


def test_cross_entropy_gradient_closed_form(rng):
    logits = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
    labels = np.array([2, 0, 1, 1, 0])
    rows = np.array([0, 2, 3])
    with Tape() as tape:
        value = cross_entropy(logits, labels, mask=rows)
    tape.backward(value)
    s = softmax_rows(logits.data).data
    expected = np.zeros((5, 3))
    expected[rows] = (s[rows] - np.eye(3)[labels[rows]]) / rows.size
    np.testing.assert_allclose(logits.grad, expected, atol=1e-12)


@pytest.mark.parametrize("labels", [[-1], [2]])
def test_cross_entropy_label_out_of_range(labels):
    with pytest.raises(ValueError, match="labels must lie in"):
        cross_entropy(np.array([[0.0, 5.0]]), np.array(labels))
