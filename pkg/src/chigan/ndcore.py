"""Minimal tape-based reverse-mode autodiff over dense float64 arrays.

The op catalog is closed: it covers exactly what a tanh MLP and the
chi-squared adversarial objective need. Tensors are 0-, 1- or 2-D and only
the bias op broadcasts (over the batch dimension).

Typical use::

    tape = Tape()
    w = tape.param(np.ones((3, 1)))
    x = tape.constant(batch)
    loss = mean(square(matmul(x, w)))
    grads = backward(tape, loss)
    grads[w]  # -> ndarray shaped like w
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import _kernels as K

OPS = (
    "matmul",
    "add_bias",
    "tanh",
    "softplus",
    "square",
    "scale",
    "mean",
    "sum",
    "add",
    "mul",
)


class NdError(Exception):
    """Base class for tape errors."""


class ShapeError(NdError, ValueError):
    def __init__(self, op: str, *shapes: tuple[int, ...]):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {', '.join(str(s) for s in shapes)}")


class NonFiniteError(NdError, FloatingPointError):
    def __init__(self, op: str, node: int):
        self.op = op
        self.node = node
        super().__init__(f"{op} (node {node}) produced a non-finite value")


class Tensor:
    """Immutable value recorded on a tape."""

    __slots__ = ("value", "tape", "node", "is_param", "__weakref__")

    def __init__(self, value: np.ndarray, tape: "Tape", node: int, is_param: bool = False):
        value.flags.writeable = False
        self.value = value
        self.tape = tape
        self.node = node
        self.is_param = is_param

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        kind = "param" if self.is_param else "tensor"
        return f"<{kind} node={self.node} shape={self.shape}>"


class Tape:
    """Ordered record of primitive applications.

    Node ids are assigned in creation order, so every input id is smaller
    than the id of the node consuming it.
    """

    def __init__(self) -> None:
        self.values: list[np.ndarray] = []
        self.requires: list[bool] = []
        # (op, input ids, output id, saved)
        self.records: list[tuple[str, tuple[int, ...], int, object]] = []
        self.params: list[Tensor] = []

    def __len__(self) -> int:
        return len(self.values)

    def _new(self, value: np.ndarray, requires: bool, is_param: bool = False) -> Tensor:
        node = len(self.values)
        self.values.append(value)
        self.requires.append(requires)
        t = Tensor(value, self, node, is_param)
        if is_param:
            self.params.append(t)
        return t

    def _leaf(self, value, is_param: bool) -> Tensor:
        arr = np.array(value, dtype=np.float64)
        if arr.ndim > 2:
            raise ShapeError("leaf", arr.shape)
        if not K.all_finite(arr):
            raise NonFiniteError("leaf", len(self.values))
        return self._new(arr, is_param, is_param)

    def constant(self, value) -> Tensor:
        return self._leaf(value, False)

    def param(self, value) -> Tensor:
        return self._leaf(value, True)

    def record(self, op: str, inputs: Sequence[Tensor], out: np.ndarray, saved=None) -> Tensor:
        for t in inputs:
            if t.tape is not self:
                raise NdError(f"{op}: input {t!r} belongs to a different tape")
        out = np.asarray(out)
        node = len(self.values)
        if not K.all_finite(out):
            raise NonFiniteError(op, node)
        requires = any(self.requires[t.node] for t in inputs)
        t = self._new(out, requires)
        self.records.append((op, tuple(i.node for i in inputs), node, saved))
        return t


def _tape_of(*xs: Tensor) -> Tape:
    tape = xs[0].tape
    for x in xs[1:]:
        if x.tape is not tape:
            raise NdError("inputs belong to different tapes")
    return tape


# --- forward primitives ----------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return _tape_of(a, b).record("matmul", (a, b), a.value @ b.value)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x + b`` with ``b`` (n,) broadcast over the rows of ``x`` (m, n)."""
    if x.value.ndim != 2 or b.value.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError("add_bias", x.shape, b.shape)
    return _tape_of(x, b).record("add_bias", (x, b), x.value + b.value)


def tanh(x: Tensor) -> Tensor:
    return x.tape.record("tanh", (x,), np.tanh(x.value))


def softplus(x: Tensor) -> Tensor:
    """Overflow-stable ``log(1 + exp(x))``."""
    return x.tape.record("softplus", (x,), K.softplus(x.value))


def square(x: Tensor) -> Tensor:
    return x.tape.record("square", (x,), x.value * x.value)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return x.tape.record("scale", (x,), c * x.value, c)


def mean(x: Tensor) -> Tensor:
    if x.value.size == 0:
        raise ShapeError("mean", x.shape)
    return x.tape.record("mean", (x,), np.asarray(x.value.mean()))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - part of the op catalog
    return x.tape.record("sum", (x,), np.asarray(x.value.sum()))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("add", a.shape, b.shape)
    return _tape_of(a, b).record("add", (a, b), a.value + b.value)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("mul", a.shape, b.shape)
    return _tape_of(a, b).record("mul", (a, b), a.value * b.value)


_FORWARD: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add_bias": add_bias,
    "tanh": tanh,
    "softplus": softplus,
    "square": square,
    "scale": scale,
    "mean": mean,
    "sum": sum,
    "add": add,
    "mul": mul,
}


def forward_primitive(op: str, *inputs, **kwargs) -> Tensor:
    """Apply catalog op ``op`` by name (``scale`` takes the factor as 2nd arg)."""
    try:
        fn = _FORWARD[op]
    except KeyError:
        raise NdError(f"unknown op {op!r}; catalog is {OPS}") from None
    return fn(*inputs, **kwargs)


# --- backward rules ----------------------------------------------------------
# Each rule maps (upstream grad, input values, output value, saved, needs) to a
# tuple of input grads aligned with the inputs; entries whose ``needs`` flag is
# False may be None.


def _bw_matmul(g, ins, out, saved, needs):
    a, b = ins
    return (g @ b.T if needs[0] else None), (a.T @ g if needs[1] else None)


def _bw_add_bias(g, ins, out, saved, needs):
    return g, (g.sum(axis=0) if needs[1] else None)


def _bw_tanh(g, ins, out, saved, needs):
    return (K.tanh_backward(out, g),)


def _bw_softplus(g, ins, out, saved, needs):
    return (K.softplus_backward(ins[0], g),)


def _bw_square(g, ins, out, saved, needs):
    return (2.0 * ins[0] * g,)


def _bw_scale(g, ins, out, saved, needs):
    return (saved * g,)


def _bw_mean(g, ins, out, saved, needs):
    x = ins[0]
    return (np.full(x.shape, float(g) / x.size),)


def _bw_sum(g, ins, out, saved, needs):
    return (np.full(ins[0].shape, float(g)),)


def _bw_add(g, ins, out, saved, needs):
    return g, g


def _bw_mul(g, ins, out, saved, needs):
    a, b = ins
    return (g * b if needs[0] else None), (g * a if needs[1] else None)


BACKWARD_RULES: dict[str, Callable] = {
    "matmul": _bw_matmul,
    "add_bias": _bw_add_bias,
    "tanh": _bw_tanh,
    "softplus": _bw_softplus,
    "square": _bw_square,
    "scale": _bw_scale,
    "mean": _bw_mean,
    "sum": _bw_sum,
    "add": _bw_add,
    "mul": _bw_mul,
}


def backward(tape: Tape, output: Tensor) -> dict[Tensor, np.ndarray]:
    """Gradients of scalar ``output`` with respect to every parameter leaf.

    Parameters that do not influence ``output`` get a zero gradient.
    """
    if output.tape is not tape:
        raise NdError("output belongs to a different tape")
    if output.value.size != 1 or output.value.ndim > 1:
        raise NdError(f"backward needs a scalar output, got shape {output.shape}")

    grads: list[np.ndarray | None] = [None] * len(tape.values)
    grads[output.node] = np.ones_like(output.value)
    values = tape.values
    requires = tape.requires
    for op, ins, out, saved in reversed(tape.records):
        g = grads[out]
        if g is None or not requires[out]:
            continue
        needs = tuple(requires[i] for i in ins)
        in_grads = BACKWARD_RULES[op](g, [values[i] for i in ins], values[out], saved, needs)
        for i, need, gi in zip(ins, needs, in_grads):
            if not need:
                continue
            if grads[i] is None:
                grads[i] = gi
            else:
                grads[i] = grads[i] + gi
    return {
        p: (grads[p.node] if grads[p.node] is not None else np.zeros_like(p.value))
        for p in tape.params
    }


def grad_check(
    f: Callable[[Tape, list[Tensor]], Tensor],
    params: Sequence[np.ndarray],
    h: float = 1e-5,
) -> float:
    """Max relative error of tape gradients against central differences.

    ``f(tape, param_tensors)`` must build a scalar on ``tape``. The error per
    entry is ``|analytic - fd| / max(1, |analytic|)``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    params = [np.array(p, dtype=np.float64) for p in params]
    for p in params:
        if not np.all(np.isfinite(p)):
            raise ValueError("parameters must be finite")

    tape = Tape()
    ts = [tape.param(p) for p in params]
    grads = backward(tape, f(tape, ts))
    analytic = [grads[t] for t in ts]

    def value_at(ps: list[np.ndarray]) -> float:
        t = Tape()
        try:
            v = float(f(t, [t.param(p) for p in ps]).value)
        except NonFiniteError as exc:
            raise NonFiniteError("grad_check", exc.node) from exc
        if not np.isfinite(v):
            raise NonFiniteError("grad_check", -1)
        return v

    worst = 0.0
    for k, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            plus = [q.copy() for q in params]
            minus = [q.copy() for q in params]
            plus[k][idx] += h
            minus[k][idx] -= h
            fd = (value_at(plus) - value_at(minus)) / (2.0 * h)
            a = float(analytic[k][idx])
            worst = max(worst, abs(a - fd) / max(1.0, abs(a)))
    return worst
