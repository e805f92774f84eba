"""Gradient-engine tests.

The oracle for every gradient is central finite differences computed here in
the test, independent of the package's own checker, which is itself tested
separately (including a corrupted-rule negative control).
"""

import math

import numpy as np
import pytest

from cogdiag import diffcore as dc
from cogdiag.errors import GraphError, GraphShapeError, NonFiniteError


def numeric_grads(root, params, h=1e-5):
    """Independent central-difference oracle over every entry of params."""
    out = {}
    for p in params:
        g = np.zeros_like(p.value)
        for flat in range(p.value.size):
            orig = p.value.flat[flat]
            p.value.flat[flat] = orig + h
            f_plus = float(dc.evaluate(root).flat[0])
            p.value.flat[flat] = orig - h
            f_minus = float(dc.evaluate(root).flat[0])
            p.value.flat[flat] = orig
            g.flat[flat] = (f_plus - f_minus) / (2.0 * h)
        out[p.name] = g
    return out


def analytic_grads(root, params):
    dc.evaluate(root)
    for p in params:
        p.zero_grad()
    dc.backward(root)
    return {p.name: p.grad.copy() for p in params}


def assert_grads_close(root, params, rel_tol=1e-3):
    ana = analytic_grads(root, params)
    num = numeric_grads(root, params)
    for name in ana:
        a, n = ana[name], num[name]
        scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        rel = np.abs(a - n) / scale
        assert rel.max() <= rel_tol, f"{name}: max rel err {rel.max()}"


def rand_param(rng, name, shape, scale=1.0, constrained=False):
    return dc.ParamTensor(name, scale * rng.standard_normal(shape), constrained=constrained)


def sum_to_scalar(node, rows, cols):
    left = dc.constant(np.ones((1, rows)))
    right = dc.constant(np.ones((cols, 1)))
    return dc.matmul(left, dc.matmul(node, right))


# ---------------------------------------------------------------- forward


def test_sigmoid_at_zero():
    z = dc.constant([[0.0]])
    assert dc.evaluate(dc.sigmoid(z))[0, 0] == 0.5


def test_sigmoid_range_strict_for_extreme_inputs():
    z = dc.constant([[-1000.0, -40.0, 0.0, 40.0, 1000.0]])
    out = dc.evaluate(dc.sigmoid(z))
    assert np.all(out > 0.0)
    assert np.all(out < 1.0)
    assert np.all(np.diff(out[0]) >= 0.0)


def test_matmul_identity():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 4))
    out = dc.evaluate(dc.matmul(dc.constant(np.eye(3)), dc.constant(a)))
    np.testing.assert_array_equal(out, a)


def test_bce_loss_at_half_is_ln2():
    y = dc.constant([[0.5]])
    loss = dc.evaluate(dc.bce_loss(y, [[1.0]], reduction="mean"))
    assert loss[0, 0] == pytest.approx(math.log(2.0), abs=1e-12)
    assert loss.shape == (1, 1)


def test_bce_sum_vs_mean():
    y = dc.constant([[0.5], [0.5]])
    t = [[1.0], [0.0]]
    mean = dc.evaluate(dc.bce_loss(y, t, "mean"))[0, 0]
    total = dc.evaluate(dc.bce_loss(y, t, "sum"))[0, 0]
    assert total == pytest.approx(2.0 * mean)


def test_concat_rows_stacks():
    a = dc.constant([[1.0, 2.0]])
    b = dc.constant([[3.0, 4.0], [5.0, 6.0]])
    out = dc.evaluate(dc.concat_rows(a, b))
    np.testing.assert_array_equal(out, [[1, 2], [3, 4], [5, 6]])


def test_mask_zeroes_entries():
    x = dc.constant([[1.0, 2.0, 3.0]])
    out = dc.evaluate(dc.mask(x, [[1.0, 0.0, 1.0]]))
    np.testing.assert_array_equal(out, [[1.0, 0.0, 3.0]])


@pytest.mark.parametrize("build, opname", [
    (lambda: dc.matmul(dc.constant(np.ones((2, 3))), dc.constant(np.ones((4, 2)))), "matmul"),
    (lambda: dc.add_bias(dc.constant(np.ones((2, 3))), dc.constant(np.ones((1, 4)))), "add_bias"),
    (lambda: dc.elementwise_mul(dc.constant(np.ones((2, 3))), dc.constant(np.ones((4, 5)))),
     "elementwise_mul"),
    (lambda: dc.subtract(dc.constant(np.ones((2, 3))), dc.constant(np.ones((3, 2)))), "subtract"),
    (lambda: dc.concat_rows(dc.constant(np.ones((2, 3))), dc.constant(np.ones((2, 4)))),
     "concat_rows"),
    (lambda: dc.bce_loss(dc.constant(np.full((2, 1), 0.5)), np.full((3, 1), 1.0)), "bce_loss"),
])
def test_shape_errors_name_the_op(build, opname):
    with pytest.raises(GraphShapeError, match=opname):
        dc.evaluate(build())


def test_backward_requires_scalar_root():
    x = dc.constant(np.ones((2, 2)))
    node = dc.sigmoid(x)
    dc.evaluate(node)
    with pytest.raises(GraphError, match="scalar"):
        dc.backward(node)


# ---------------------------------------------------------------- gradients


def test_sigmoid_grad_at_zero_is_quarter():
    p = dc.ParamTensor("z", [[0.0]])
    root = sum_to_scalar(dc.sigmoid(dc.param_leaf(p)), 1, 1)
    dc.evaluate(root)
    p.zero_grad()
    dc.backward(root)
    assert p.grad[0, 0] == pytest.approx(0.25, abs=1e-15)


def test_bce_grad_at_half_label_one_is_minus_two():
    p = dc.ParamTensor("y", [[0.5]])
    root = dc.bce_loss(dc.param_leaf(p), [[1.0]], reduction="sum")
    dc.evaluate(root)
    p.zero_grad()
    dc.backward(root)
    assert p.grad[0, 0] == pytest.approx(-2.0, abs=1e-12)


def test_shared_node_gradients_sum():
    # f(x) = sum(x * x), df/dx = 2x through two uses of the same node
    p = dc.ParamTensor("x", [[1.5, -2.0]])
    leaf = dc.param_leaf(p)
    root = sum_to_scalar(dc.elementwise_mul(leaf, leaf), 1, 2)
    dc.evaluate(root)
    p.zero_grad()
    dc.backward(root)
    np.testing.assert_allclose(p.grad, 2.0 * p.value, rtol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_matmul_grad(seed):
    rng = np.random.default_rng(seed)
    a = rand_param(rng, "a", (3, 4))
    b = rand_param(rng, "b", (4, 2))
    root = sum_to_scalar(dc.matmul(dc.param_leaf(a), dc.param_leaf(b)), 3, 2)
    assert_grads_close(root, [a, b])


@pytest.mark.parametrize("seed", range(5))
def test_add_bias_grad(seed):
    rng = np.random.default_rng(seed)
    x = rand_param(rng, "x", (4, 3))
    b = rand_param(rng, "b", (1, 3))
    root = sum_to_scalar(dc.add_bias(dc.param_leaf(x), dc.param_leaf(b)), 4, 3)
    assert_grads_close(root, [x, b])


@pytest.mark.parametrize("seed", range(5))
def test_sigmoid_grad(seed):
    rng = np.random.default_rng(seed)
    x = rand_param(rng, "x", (3, 3), scale=2.0)
    root = sum_to_scalar(dc.sigmoid(dc.param_leaf(x)), 3, 3)
    assert_grads_close(root, [x])


@pytest.mark.parametrize("seed", range(5))
def test_elementwise_mul_grad_with_broadcast(seed):
    rng = np.random.default_rng(seed)
    a = rand_param(rng, "a", (4, 3))
    b = rand_param(rng, "b", (4, 1))
    root = sum_to_scalar(dc.elementwise_mul(dc.param_leaf(a), dc.param_leaf(b)), 4, 3)
    assert_grads_close(root, [a, b])


@pytest.mark.parametrize("seed", range(5))
def test_subtract_grad_with_broadcast(seed):
    rng = np.random.default_rng(seed)
    a = rand_param(rng, "a", (3, 4))
    b = rand_param(rng, "b", (1, 4))
    root = sum_to_scalar(dc.subtract(dc.param_leaf(a), dc.param_leaf(b)), 3, 4)
    assert_grads_close(root, [a, b])


@pytest.mark.parametrize("seed", range(5))
def test_mask_grad(seed):
    rng = np.random.default_rng(seed)
    x = rand_param(rng, "x", (4, 5))
    m = (rng.random((4, 5)) < 0.5).astype(float)
    root = sum_to_scalar(dc.mask(dc.param_leaf(x), m), 4, 5)
    assert_grads_close(root, [x])
    # masked entries get exactly zero gradient
    assert np.all(x.grad[m == 0.0] == 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_concat_rows_grad(seed):
    rng = np.random.default_rng(seed)
    a = rand_param(rng, "a", (2, 3))
    b = rand_param(rng, "b", (4, 3))
    root = sum_to_scalar(dc.concat_rows(dc.param_leaf(a), dc.param_leaf(b)), 6, 3)
    assert_grads_close(root, [a, b])


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("reduction", ["mean", "sum"])
def test_bce_grad(seed, reduction):
    rng = np.random.default_rng(seed)
    # logits kept moderate so predictions stay away from the clamp band
    z = rand_param(rng, "z", (6, 1), scale=2.0)
    targets = (rng.random((6, 1)) < 0.5).astype(float)
    root = dc.bce_loss(dc.sigmoid(dc.param_leaf(z)), targets, reduction)
    assert_grads_close(root, [z])


@pytest.mark.parametrize("seed", range(3))
def test_composed_graph_grad(seed):
    # two sigmoid layers with bias, mask, subtract and a bce head
    rng = np.random.default_rng(seed)
    x = dc.constant(rng.standard_normal((5, 4)))
    w1 = rand_param(rng, "w1", (4, 3))
    b1 = rand_param(rng, "b1", (1, 3))
    w2 = rand_param(rng, "w2", (3, 1))
    b2 = rand_param(rng, "b2", (1, 1))
    h = dc.sigmoid(dc.add_bias(dc.matmul(x, dc.param_leaf(w1)), dc.param_leaf(b1)))
    h = dc.mask(h, (rng.random((5, 3)) < 0.7).astype(float))
    y = dc.sigmoid(dc.add_bias(dc.matmul(h, dc.param_leaf(w2)), dc.param_leaf(b2)))
    targets = (rng.random((5, 1)) < 0.5).astype(float)
    root = dc.bce_loss(y, targets)
    assert_grads_close(root, [w1, b1, w2, b2])


def test_node_grad_shape_matches_value_shape():
    rng = np.random.default_rng(1)
    a = rand_param(rng, "a", (2, 3))
    node = dc.sigmoid(dc.param_leaf(a))
    root = sum_to_scalar(node, 2, 3)
    dc.evaluate(root)
    a.zero_grad()
    dc.backward(root)
    assert node.grad.shape == node.value.shape


# ---------------------------------------------------------------- checker


def test_finite_difference_check_passes_on_clean_graph():
    rng = np.random.default_rng(7)
    z = rand_param(rng, "z", (5, 2))
    w = rand_param(rng, "w", (2, 1))
    y = dc.sigmoid(dc.matmul(dc.sigmoid(dc.param_leaf(z)), dc.param_leaf(w)))
    root = dc.bce_loss(y, (rng.random((5, 1)) < 0.5).astype(float))
    report = dc.finite_difference_check(root, [z, w], label="two-layer")
    assert report.passed
    assert report.max_rel_err <= 1e-3
    assert report.failures() == []


def test_finite_difference_check_linear_graph_near_exact():
    rng = np.random.default_rng(3)
    a = rand_param(rng, "a", (3, 3))
    root = sum_to_scalar(dc.param_leaf(a), 3, 3)
    report = dc.finite_difference_check(root, [a], label="linear")
    assert report.max_rel_err < 1e-9


def test_finite_difference_check_flags_corrupted_rule(monkeypatch):
    def wrong_sigmoid_vjp(node, g):
        node.inputs[0].grad += g  # drops the s(1-s) factor

    monkeypatch.setitem(dc._BACKWARD, "sigmoid", wrong_sigmoid_vjp)
    rng = np.random.default_rng(11)
    z = rand_param(rng, "z", (4, 2))
    y = dc.sigmoid(dc.matmul(dc.param_leaf(z), dc.constant(np.ones((2, 1)))))
    root = dc.bce_loss(y, (rng.random((4, 1)) < 0.5).astype(float))
    report = dc.finite_difference_check(root, [z], label="corrupted")
    assert not report.passed
    assert any(e.param == "z" for e in report.failures())


# ---------------------------------------------------------------- optimizer


def test_adam_first_step_moves_by_lr():
    p = dc.ParamTensor("p", [[0.3]])
    dc.adam_step(p, [[1.0]], lr=0.001)
    assert p.value[0, 0] == pytest.approx(0.3 - 0.001, abs=1e-9)
    assert p.steps == 1


def test_adam_zero_grad_fresh_state_leaves_param_unchanged():
    p = dc.ParamTensor("p", [[0.7, -0.2]])
    before = p.value.copy()
    dc.adam_step(p, np.zeros((1, 2)))
    np.testing.assert_array_equal(p.value, before)


def test_adam_projection_floor_hits_exact_zero():
    p = dc.ParamTensor("p", [[0.0005]], constrained=True)
    dc.adam_step(p, [[100.0]], lr=0.002)
    assert p.value[0, 0] == 0.0


def test_adam_rejects_nonfinite_grad():
    p = dc.ParamTensor("p", [[0.1]])
    with pytest.raises(NonFiniteError, match="p"):
        dc.adam_step(p, [[float("nan")]])


def test_constrained_param_nonnegative_after_random_steps():
    rng = np.random.default_rng(5)
    p = dc.ParamTensor("w", rng.standard_normal((6, 4)), constrained=True)
    p.value = dc.project_nonnegative(p.value)
    for _ in range(50):
        dc.adam_step(p, rng.standard_normal((6, 4)) * 10.0)
        assert p.value.min() >= 0.0


def test_project_nonnegative_examples():
    out = dc.project_nonnegative(np.array([[-0.3, 0.5]]))
    np.testing.assert_array_equal(out, [[0.0, 0.5]])
    clean = np.array([[0.0, 1.0], [2.0, 3.0]])
    np.testing.assert_array_equal(dc.project_nonnegative(clean), clean)


# ---------------------------------------------------------------- init


def test_xavier_std_for_unit_fans_is_one():
    vals = [dc.xavier_normal_init(1, 1, s)[0, 0] for s in range(2000)]
    assert np.std(vals) == pytest.approx(1.0, rel=0.05)


def test_xavier_same_seed_identical():
    a = dc.xavier_normal_init(5, 7, 42)
    b = dc.xavier_normal_init(5, 7, 42)
    np.testing.assert_array_equal(a, b)


def test_xavier_empirical_std():
    m = dc.xavier_normal_init(100, 100, 0)
    # fan_in = fan_out = 100 gives std sqrt(2/200) = 0.1
    assert m.std() == pytest.approx(0.1, rel=0.05)


def test_deterministic_update_sequence():
    def run():
        rng = np.random.default_rng(9)
        p = dc.ParamTensor("p", dc.xavier_normal_init(4, 3, 1), constrained=True)
        p.value = dc.project_nonnegative(p.value)
        for _ in range(20):
            dc.adam_step(p, rng.standard_normal((4, 3)))
        return p.value

    np.testing.assert_array_equal(run(), run())
