"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations are recorded only while a ``ComputationRecord`` is active on the
current thread and at least one input requires gradients. Outside a record
every op is a plain numpy evaluation, which is what evaluation code relies on.
"""

import threading
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]
GradFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an operation."""


class DomainError(ValueError):
    """Raised when an input lies outside an operation's mathematical domain."""


class Tensor:
    """Immutable float64 array with an optional gradient buffer."""

    __array_priority__ = 100.0

    def __init__(self, data: Any, requires_grad: bool = False) -> None:
        array = np.array(data, dtype=np.float64)
        if any(dim <= 0 for dim in array.shape):
            raise ShapeError(f"tensor dimensions must be positive, got {array.shape}")
        array.flags.writeable = False
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._node: Optional["Node"] = None

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool) -> "Tensor":
        # op outputs are fresh arrays and are stored uncopied
        out = cls.__new__(cls)
        array = np.asarray(array, dtype=np.float64)
        array.flags.writeable = False
        out.data = array
        out.requires_grad = requires_grad
        out.grad = None
        out._node = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        """Writable copy of the values."""
        return np.array(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return subtract(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return subtract(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return multiply(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return multiply(other, self)

    def __truediv__(self, other: float) -> "Tensor":
        if not isinstance(other, (int, float)):
            raise TypeError("only division by a python scalar is supported")
        return scale(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __rmatmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(other, self)

    def __getitem__(self, index: Any) -> "Tensor":
        return slice_(self, index)


@dataclass
class Node:
    """One recorded primitive application."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    grad_fn: GradFn
    forward_fn: Callable[..., np.ndarray]


class ComputationRecord:
    """Ordered tape of primitive ops; active while used as a context manager."""

    _local = threading.local()

    def __init__(self) -> None:
        self.nodes: List[Node] = []

    def __enter__(self) -> "ComputationRecord":
        self._stack().append(self)
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        stack = self._stack()
        if stack and stack[-1] is self:
            stack.pop()

    @classmethod
    def _stack(cls) -> List["ComputationRecord"]:
        if not hasattr(cls._local, "stack"):
            cls._local.stack = []
        stack: List["ComputationRecord"] = cls._local.stack
        return stack

    @classmethod
    def active(cls) -> Optional["ComputationRecord"]:
        stack = cls._stack()
        return stack[-1] if stack else None

    def __len__(self) -> int:
        return len(self.nodes)

    def replay(self) -> List[np.ndarray]:
        """Re-run every recorded forward from the recorded leaves.

        Returns:
            Recomputed output of each node, in record order
        """
        values: Dict[int, np.ndarray] = {}
        outputs = []
        for node in self.nodes:
            args = [values.get(id(t), t.data) for t in node.inputs]
            result = np.asarray(node.forward_fn(*args), dtype=np.float64)
            values[id(node.output)] = result
            outputs.append(result)
        return outputs


def as_tensor(value: ArrayLike) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _apply(
    op: str,
    forward_fn: Callable[..., np.ndarray],
    make_grad_fn: Callable[..., GradFn],
    *inputs: Tensor,
) -> Tensor:
    arrays = [t.data for t in inputs]
    out_data = forward_fn(*arrays)
    record = ComputationRecord.active()
    track = record is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(out_data, requires_grad=track)
    if track and record is not None:
        node = Node(op, tuple(inputs), out, make_grad_fn(*arrays, out.data), forward_fn)
        out._node = node
        record.nodes.append(node)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}")


# ---------------------------------------------------------------- binary ops


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _check_broadcast("add", ta, tb)

    def grads(x: np.ndarray, y: np.ndarray, out: np.ndarray) -> GradFn:
        return lambda g: (_unbroadcast(g, x.shape), _unbroadcast(g, y.shape))

    return _apply("add", np.add, grads, ta, tb)


def subtract(a: ArrayLike, b: ArrayLike) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _check_broadcast("subtract", ta, tb)

    def grads(x: np.ndarray, y: np.ndarray, out: np.ndarray) -> GradFn:
        return lambda g: (_unbroadcast(g, x.shape), _unbroadcast(-g, y.shape))

    return _apply("subtract", np.subtract, grads, ta, tb)


def multiply(a: ArrayLike, b: ArrayLike) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _check_broadcast("multiply", ta, tb)

    def grads(x: np.ndarray, y: np.ndarray, out: np.ndarray) -> GradFn:
        return lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape))

    return _apply("multiply", np.multiply, grads, ta, tb)


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    if ta.ndim == 0 or tb.ndim == 0:
        raise ShapeError(f"matmul: scalar operand, shapes {ta.shape} and {tb.shape}")
    inner_a = ta.shape[-1]
    inner_b = tb.shape[0] if tb.ndim == 1 else tb.shape[-2]
    if inner_a != inner_b:
        raise ShapeError(f"matmul: cannot multiply shapes {ta.shape} and {tb.shape}")
    try:
        np.broadcast_shapes(ta.shape[:-2], tb.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions of {ta.shape} and {tb.shape} differ")

    def grads(x: np.ndarray, y: np.ndarray, out: np.ndarray) -> GradFn:
        def grad_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            if x.ndim == 1 and y.ndim == 1:
                return g * y, g * x
            x2 = x[None, :] if x.ndim == 1 else x
            y2 = y[:, None] if y.ndim == 1 else y
            g2 = g
            if x.ndim == 1:
                g2 = np.expand_dims(g2, -2)
            if y.ndim == 1:
                g2 = np.expand_dims(g2, -1)
            gx = g2 @ np.swapaxes(y2, -1, -2)
            gy = np.swapaxes(x2, -1, -2) @ g2
            if x.ndim == 1:
                gx = np.squeeze(gx, -2)
            if y.ndim == 1:
                gy = np.squeeze(gy, -1)
            return _unbroadcast(gx, x.shape), _unbroadcast(gy, y.shape)

        return grad_fn

    return _apply("matmul", np.matmul, grads, ta, tb)


# ----------------------------------------------------------------- unary ops


def scale(a: ArrayLike, factor: float) -> Tensor:
    ta = as_tensor(a)
    c = float(factor)

    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        return lambda g: (g * c,)

    return _apply("scale", lambda x: x * c, grads, ta)


def square(a: ArrayLike) -> Tensor:
    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        return lambda g: (2.0 * x * g,)

    return _apply("square", np.square, grads, as_tensor(a))


def sigmoid(a: ArrayLike) -> Tensor:
    def forward(x: np.ndarray) -> np.ndarray:
        # tanh form never overflows and is exact at 0
        return 0.5 * (1.0 + np.tanh(0.5 * x))

    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        return lambda g: (g * out * (1.0 - out),)

    return _apply("sigmoid", forward, grads, as_tensor(a))


def tanh(a: ArrayLike) -> Tensor:
    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        return lambda g: (g * (1.0 - out * out),)

    return _apply("tanh", np.tanh, grads, as_tensor(a))


def exp(a: ArrayLike) -> Tensor:
    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        return lambda g: (g * out,)

    return _apply("exp", np.exp, grads, as_tensor(a))


def log(a: ArrayLike) -> Tensor:
    ta = as_tensor(a)
    if np.any(ta.data <= 0.0):
        raise DomainError(
            f"log: requires strictly positive input, min value {ta.data.min()!r}"
        )

    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        return lambda g: (g / x,)

    return _apply("log", np.log, grads, ta)


def abs_(a: ArrayLike) -> Tensor:
    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        return lambda g: (g * np.sign(x),)

    return _apply("abs", np.abs, grads, as_tensor(a))


def clip(a: ArrayLike, low: float, high: float) -> Tensor:
    if low > high:
        raise ValueError(f"clip: low {low} exceeds high {high}")

    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        inside = (x >= low) & (x <= high)
        return lambda g: (g * inside,)

    return _apply("clip", lambda x: np.clip(x, low, high), grads, as_tensor(a))


def softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    def forward(x: np.ndarray) -> np.ndarray:
        shifted = np.exp(x - x.max(axis=axis, keepdims=True))
        return shifted / shifted.sum(axis=axis, keepdims=True)

    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        return lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _apply("softmax", forward, grads, as_tensor(a))


# ---------------------------------------------------------------- reductions


def _normalize_axes(axis: Union[None, int, Sequence[int]], ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(sorted(ax % ndim for ax in axes))


def sum_(a: ArrayLike, axis: Union[None, int, Sequence[int]] = None, keepdims: bool = False) -> Tensor:
    ta = as_tensor(a)
    axes = _normalize_axes(axis, ta.ndim)

    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
            if not keepdims:
                g = np.expand_dims(g, axes)
            return (np.broadcast_to(g, x.shape).copy(),)

        return grad_fn

    return _apply("sum", lambda x: np.sum(x, axis=axes, keepdims=keepdims), grads, ta)


def mean(a: ArrayLike, axis: Union[None, int, Sequence[int]] = None, keepdims: bool = False) -> Tensor:
    ta = as_tensor(a)
    axes = _normalize_axes(axis, ta.ndim)
    count = int(np.prod([ta.shape[ax] for ax in axes])) if axes else 1

    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
            if not keepdims:
                g = np.expand_dims(g, axes)
            return (np.broadcast_to(g / count, x.shape).copy(),)

        return grad_fn

    return _apply("mean", lambda x: np.mean(x, axis=axes, keepdims=keepdims), grads, ta)


# ---------------------------------------------------------------- structural


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    ta = as_tensor(a)
    target = tuple(shape)
    try:
        np.empty(ta.shape).reshape(target)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {ta.shape} into {target}")

    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        return lambda g: (g.reshape(x.shape),)

    return _apply("reshape", lambda x: x.reshape(target), grads, ta)


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    ta = as_tensor(a)
    perm = tuple(range(ta.ndim))[::-1] if axes is None else tuple(axes)
    if sorted(perm) != list(range(ta.ndim)):
        raise ShapeError(f"transpose: axes {perm} do not permute shape {ta.shape}")
    inverse = tuple(np.argsort(perm))

    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        return lambda g: (np.transpose(g, inverse),)

    return _apply("transpose", lambda x: np.transpose(x, perm), grads, ta)


def slice_(a: ArrayLike, index: Any) -> Tensor:
    """Basic (non-fancy) indexing: ints, slices, Ellipsis, None."""
    ta = as_tensor(a)
    try:
        probe = ta.data[index]
    except IndexError as exc:
        raise ShapeError(f"slice: index {index!r} invalid for shape {ta.shape}: {exc}")
    if probe.size == 0:
        raise ShapeError(f"slice: index {index!r} selects nothing from shape {ta.shape}")

    def grads(x: np.ndarray, out: np.ndarray) -> GradFn:
        def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
            full = np.zeros_like(x)
            full[index] = g
            return (full,)

        return grad_fn

    return _apply("slice", lambda x: np.array(x[index]), grads, ta)


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("concat: needs at least one tensor")
    ndim = parts[0].ndim
    ax = axis % ndim
    for t in parts[1:]:
        if t.ndim != ndim or any(
            t.shape[i] != parts[0].shape[i] for i in range(ndim) if i != ax
        ):
            raise ShapeError(
                f"concat: shapes {parts[0].shape} and {t.shape} differ off axis {axis}"
            )
    bounds = np.cumsum([t.shape[ax] for t in parts])[:-1]

    def grads(*arrays: np.ndarray) -> GradFn:
        return lambda g: tuple(np.split(g, bounds, axis=ax))

    return _apply("concat", lambda *xs: np.concatenate(xs, axis=ax), grads, *parts)


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("stack: needs at least one tensor")
    for t in parts[1:]:
        if t.shape != parts[0].shape:
            raise ShapeError(f"stack: shapes {parts[0].shape} and {t.shape} differ")
    ax = axis % (parts[0].ndim + 1)

    def grads(*arrays: np.ndarray) -> GradFn:
        return lambda g: tuple(np.moveaxis(g, ax, 0))

    return _apply("stack", lambda *xs: np.stack(xs, axis=ax), grads, *parts)


# ------------------------------------------------------------------ backward


def backward(record: ComputationRecord, output: Tensor) -> Dict[Tensor, np.ndarray]:
    """Propagate d(output)/d(.) through the record into requires_grad leaves.

    Gradients are added to each leaf's ``grad`` buffer (call ``zero_grad`` to
    reset it between passes).

    Returns:
        Mapping from every reached leaf to the gradient of this pass alone
    """
    if output.size != 1:
        raise ShapeError(f"backward: output must be scalar, got shape {output.shape}")
    if not output.requires_grad:
        return {}

    pending: Dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    tensors: Dict[int, Tensor] = {id(output): output}
    for node in reversed(record.nodes):
        g = pending.pop(id(node.output), None)
        if g is None:
            continue
        for inp, grad in zip(node.inputs, node.grad_fn(g)):
            if grad is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in pending:
                pending[key] = pending[key] + grad
            else:
                pending[key] = np.array(grad, dtype=np.float64)
                tensors[key] = inp

    leaves: Dict[Tensor, np.ndarray] = {}
    for key, grad in pending.items():
        leaf = tensors[key]
        grad = grad.reshape(leaf.shape)
        leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad
        leaves[leaf] = grad
    return leaves
