"""Dense-matrix reverse-mode differentiation core.

A deliberately small engine: eight ops over 64-bit float matrices, enough to
express every model in this package. Values are numpy arrays but gradients
are derived here, not delegated to any autodiff library, so the optimizer
and the non-negativity projection that enforces trait monotonicity stay
fully inspectable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GraphError, GraphShapeError, NonFiniteError

BCE_CLAMP = 1e-7

# Largest double below 1. Sigmoid outputs are clipped into
# [_SIG_FLOOR, _SIG_CEIL] so the open-interval range contract holds even for
# inputs large enough that exp underflows.
_SIG_CEIL = float(np.nextafter(1.0, 0.0))
_SIG_FLOOR = 1e-300


def sigmoid_values(z):
    """Overflow-safe logistic function on raw arrays, strictly inside (0,1)."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.clip(out, _SIG_FLOOR, _SIG_CEIL)


class ParamTensor:
    """A trainable matrix with its gradient and Adam state.

    constrained=True marks parameters that must stay non-negative; the
    optimizer projects them after every step.
    """

    __slots__ = ("name", "value", "constrained", "grad", "m", "v", "steps")

    def __init__(self, name: str, values, constrained: bool = False):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 2:
            raise GraphError(f"param {name!r} must be 2-D, got shape {arr.shape}")
        self.name = name
        self.value = arr
        self.constrained = bool(constrained)
        self.grad = np.zeros_like(arr)
        self.m = np.zeros_like(arr)
        self.v = np.zeros_like(arr)
        self.steps = 0

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        flag = ", constrained" if self.constrained else ""
        return f"ParamTensor({self.name!r}, shape={self.value.shape}{flag})"


class Node:
    """One vertex of the computation graph."""

    __slots__ = ("op", "inputs", "value", "grad", "payload")

    def __init__(self, op: str, inputs=(), payload=None):
        self.op = op
        self.inputs = tuple(inputs)
        self.value = None
        self.grad = None
        self.payload = payload


def constant(values) -> Node:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise GraphShapeError(f"constant: need a 2-D array, got shape {arr.shape}")
    return Node("const", payload=arr)


def param_leaf(param: ParamTensor) -> Node:
    return Node("param", payload=param)


def matmul(a: Node, b: Node) -> Node:
    return Node("matmul", (a, b))


def add_bias(x: Node, bias: Node) -> Node:
    return Node("add_bias", (x, bias))


def sigmoid(x: Node) -> Node:
    return Node("sigmoid", (x,))


def elementwise_mul(a: Node, b: Node) -> Node:
    return Node("elementwise_mul", (a, b))


def subtract(a: Node, b: Node) -> Node:
    return Node("subtract", (a, b))


def mask(x: Node, mask_values) -> Node:
    arr = np.asarray(mask_values, dtype=np.float64)
    return Node("mask", (x,), payload=arr)


def concat_rows(*parts: Node) -> Node:
    if not parts:
        raise GraphError("concat_rows: need at least one input")
    return Node("concat_rows", parts)


def bce_loss(y: Node, targets, reduction: str = "mean") -> Node:
    if reduction not in ("mean", "sum"):
        raise GraphError(f"bce_loss: unknown reduction {reduction!r}")
    arr = np.asarray(targets, dtype=np.float64)
    return Node("bce_loss", (y,), payload=(arr, reduction))


def _broadcast_check(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise GraphShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _fw_const(node):
    node.value = node.payload


def _fw_param(node):
    node.value = node.payload.value


def _fw_matmul(node):
    a, b = node.inputs[0].value, node.inputs[1].value
    if a.shape[1] != b.shape[0]:
        raise GraphShapeError(f"matmul: inner dims differ, {a.shape} x {b.shape}")
    node.value = a @ b


def _fw_add_bias(node):
    x, b = node.inputs[0].value, node.inputs[1].value
    if b.shape != (1, x.shape[1]):
        raise GraphShapeError(f"add_bias: bias {b.shape} does not fit columns of {x.shape}")
    node.value = x + b


def _fw_sigmoid(node):
    node.value = sigmoid_values(node.inputs[0].value)


def _fw_elementwise_mul(node):
    a, b = node.inputs[0].value, node.inputs[1].value
    _broadcast_check("elementwise_mul", a, b)
    node.value = a * b


def _fw_subtract(node):
    a, b = node.inputs[0].value, node.inputs[1].value
    _broadcast_check("subtract", a, b)
    node.value = a - b


def _fw_mask(node):
    x = node.inputs[0].value
    m = node.payload
    shape = _broadcast_check("mask", x, m)
    if shape != x.shape:
        raise GraphShapeError(f"mask: mask {m.shape} may not widen input {x.shape}")
    node.value = x * m


def _fw_concat_rows(node):
    widths = {inp.value.shape[1] for inp in node.inputs}
    if len(widths) != 1:
        raise GraphShapeError(f"concat_rows: column counts differ: {sorted(widths)}")
    node.value = np.concatenate([inp.value for inp in node.inputs], axis=0)


def _fw_bce_loss(node):
    y = node.inputs[0].value
    targets, reduction = node.payload
    if y.shape != targets.shape:
        raise GraphShapeError(f"bce_loss: predictions {y.shape} vs targets {targets.shape}")
    yc = np.clip(y, BCE_CLAMP, 1.0 - BCE_CLAMP)
    total = -np.sum(targets * np.log(yc) + (1.0 - targets) * np.log1p(-yc))
    if reduction == "mean":
        total = total / y.size
    node.value = np.array([[total]])


_FORWARD = {
    "const": _fw_const,
    "param": _fw_param,
    "matmul": _fw_matmul,
    "add_bias": _fw_add_bias,
    "sigmoid": _fw_sigmoid,
    "elementwise_mul": _fw_elementwise_mul,
    "subtract": _fw_subtract,
    "mask": _fw_mask,
    "concat_rows": _fw_concat_rows,
    "bce_loss": _fw_bce_loss,
}


def _topo_order(root: Node) -> list[Node]:
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for inp in node.inputs:
            stack.append((inp, False))
    return order


def evaluate(root: Node) -> np.ndarray:
    """Forward pass: each reachable node computed exactly once."""
    for node in _topo_order(root):
        fw = _FORWARD.get(node.op)
        if fw is None:
            raise GraphError(f"unknown op {node.op!r}")
        fw(node)
    return root.value


def _unbroadcast(g, shape):
    # Gradients of broadcast operands collapse back by summing the
    # broadcast axes; all values here are 2-D.
    if g.shape == shape:
        return g
    out = g
    for ax in range(out.ndim):
        if shape[ax] == 1 and out.shape[ax] != 1:
            out = out.sum(axis=ax, keepdims=True)
    return out


def _bw_matmul(node, g):
    a, b = node.inputs
    a.grad += g @ b.value.T
    b.grad += a.value.T @ g


def _bw_add_bias(node, g):
    x, b = node.inputs
    x.grad += g
    b.grad += g.sum(axis=0, keepdims=True)


def _bw_sigmoid(node, g):
    s = node.value
    node.inputs[0].grad += g * s * (1.0 - s)


def _bw_elementwise_mul(node, g):
    a, b = node.inputs
    a.grad += _unbroadcast(g * b.value, a.value.shape)
    b.grad += _unbroadcast(g * a.value, b.value.shape)


def _bw_subtract(node, g):
    a, b = node.inputs
    a.grad += _unbroadcast(g, a.value.shape)
    b.grad -= _unbroadcast(g, b.value.shape)


def _bw_mask(node, g):
    x = node.inputs[0]
    x.grad += _unbroadcast(g * node.payload, x.value.shape)


def _bw_concat_rows(node, g):
    offset = 0
    for inp in node.inputs:
        rows = inp.value.shape[0]
        inp.grad += g[offset:offset + rows]
        offset += rows


def _bw_bce_loss(node, g):
    y = node.inputs[0]
    targets, reduction = node.payload
    yc = np.clip(y.value, BCE_CLAMP, 1.0 - BCE_CLAMP)
    scale = g[0, 0] / (y.value.size if reduction == "mean" else 1)
    y.grad += scale * (yc - targets) / (yc * (1.0 - yc))


_BACKWARD = {
    "const": None,
    "param": None,
    "matmul": _bw_matmul,
    "add_bias": _bw_add_bias,
    "sigmoid": _bw_sigmoid,
    "elementwise_mul": _bw_elementwise_mul,
    "subtract": _bw_subtract,
    "mask": _bw_mask,
    "concat_rows": _bw_concat_rows,
    "bce_loss": _bw_bce_loss,
}


def backward(root: Node) -> None:
    """Reverse pass from a scalar root; accumulates into ParamTensor.grad.

    Node gradients of shared subgraphs sum across uses. Call evaluate first;
    parameter gradients add to whatever is already stored, so training zeroes
    them per batch.
    """
    if root.value is None:
        raise GraphError("backward before evaluate")
    if root.value.size != 1:
        raise GraphError(f"backward root must be scalar, got shape {root.value.shape}")
    order = _topo_order(root)
    for node in order:
        node.grad = np.zeros_like(node.value)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        bw = _BACKWARD.get(node.op, None)
        if bw is not None:
            bw(node, node.grad)
        elif node.op == "param":
            node.payload.grad += node.grad


def xavier_normal_init(rows: int, cols: int, seed) -> np.ndarray:
    """Normal(0, 2/(fan_in+fan_out)) draw; seed may be an int or a Generator."""
    if rows < 1 or cols < 1:
        raise GraphError(f"xavier_normal_init: invalid shape ({rows}, {cols})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    std = float(np.sqrt(2.0 / (rows + cols)))
    return rng.normal(0.0, std, size=(rows, cols))


def project_nonnegative(matrix: np.ndarray) -> np.ndarray:
    return np.maximum(matrix, 0.0)


def adam_step(param: ParamTensor, grad, lr=0.002, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update, then the non-negativity projection for
    constrained parameters."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != param.value.shape:
        raise GraphShapeError(
            f"adam_step: grad {grad.shape} vs param {param.name!r} {param.value.shape}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError(f"non-finite gradient for param {param.name!r}")
    param.steps += 1
    t = param.steps
    param.m *= beta1
    param.m += (1.0 - beta1) * grad
    param.v *= beta2
    param.v += (1.0 - beta2) * grad * grad
    m_hat = param.m / (1.0 - beta1 ** t)
    v_hat = param.v / (1.0 - beta2 ** t)
    param.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    if param.constrained:
        param.value = project_nonnegative(param.value)


@dataclass
class FdEntry:
    param: str
    index: int
    analytic: float
    numeric: float
    rel_err: float


@dataclass
class FdReport:
    """Result of comparing analytic gradients against central differences."""

    label: str
    h: float
    tolerance: float
    entries: list = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max((e.rel_err for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return all(e.rel_err <= self.tolerance for e in self.entries)

    def failures(self) -> list:
        return [e for e in self.entries if e.rel_err > self.tolerance]


def finite_difference_check(root: Node, params, h=1e-5, tolerance=1e-3,
                            samples_per_param=5, seed=0, label="graph") -> FdReport:
    """Check every given ParamTensor's gradient against (f(p+h)-f(p-h))/2h.

    Samples up to samples_per_param entries per tensor. Relative error uses
    max(|analytic|, |numeric|, 1e-8) as the scale.
    """
    evaluate(root)
    for p in params:
        p.zero_grad()
    backward(root)
    analytic = {p.name: p.grad.copy() for p in params}

    rng = np.random.default_rng(seed)
    report = FdReport(label=label, h=h, tolerance=tolerance)
    for p in params:
        size = p.value.size
        if size <= samples_per_param:
            picks = np.arange(size)
        else:
            picks = np.sort(rng.choice(size, size=samples_per_param, replace=False))
        for flat in picks:
            original = p.value.flat[flat]
            p.value.flat[flat] = original + h
            f_plus = float(evaluate(root).flat[0])
            p.value.flat[flat] = original - h
            f_minus = float(evaluate(root).flat[0])
            p.value.flat[flat] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic[p.name].flat[flat])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            report.entries.append(FdEntry(p.name, int(flat), a, numeric, rel))
    evaluate(root)
    return report
