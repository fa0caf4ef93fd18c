"""Dense float64 tensors and the tape that records primitive ops for reverse mode.

Every primitive appends one node to the thread-local active tape; backward()
replays the record in exact reverse execution order, which is always a valid
topological order. Tensors are immutable values from the engine's point of
view: ops allocate fresh outputs and never write into their inputs.
"""

from __future__ import annotations

import threading

import numpy as np


class AutodiffError(Exception):
    """Tape misuse or malformed primitive inputs (shape mismatch, non-finite)."""


_state = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = [Tape()]
        _state.tapes = stack
    return stack


def active_tape() -> "Tape":
    """The innermost tape; primitives record onto this one."""
    return _tape_stack()[-1]


def reset_tape() -> None:
    """Drop all recorded ops on the active tape and re-arm backward()."""
    active_tape().reset()


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Context manager: primitives inside do not record onto the tape."""

    def __enter__(self) -> "no_grad":
        self._prev = grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc) -> bool:
        _state.grad_enabled = self._prev
        return False


def set_debug(enabled: bool) -> None:
    """Toggle NaN/Inf sentinels checked after every primitive (slow)."""
    _state.debug = bool(enabled)


def debug_enabled() -> bool:
    return getattr(_state, "debug", False)


class _Node:
    __slots__ = ("output", "inputs", "backward_fn", "name")

    def __init__(self, output, inputs, backward_fn, name):
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.name = name


class Tape:
    """Ordered record of executed primitive ops.

    A tape can be consumed by backward() exactly once; reset() re-arms it
    and discards the record. Use as a context manager to scope recording:

        with Tape():
            loss = model(x)
            backward(loss)
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._consumed = False

    def __len__(self) -> int:
        return len(self._nodes)

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> bool:
        stack = _tape_stack()
        if stack[-1] is not self:
            raise AutodiffError("tape context exited out of order")
        stack.pop()
        return False

    def record(self, output: "Tensor", inputs: tuple, backward_fn, name: str) -> None:
        self._nodes.append(_Node(output, inputs, backward_fn, name))

    def reset(self) -> None:
        self._nodes.clear()
        self._consumed = False


class Tensor:
    """N-dimensional float64 array with an optional same-shape gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise AutodiffError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Copy of the value with no grad requirement and no tape history."""
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar delegates to the primitive ops module.

    def __add__(self, other):
        from . import ops

        return ops.add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, _wrap(other))

    def __rsub__(self, other):
        from . import ops

        return ops.sub(_wrap(other), self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, _wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops

        return ops.div(self, _wrap(other))

    def __rtruediv__(self, other):
        from . import ops

        return ops.div(_wrap(other), self)

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __pow__(self, p):
        from . import ops

        return ops.pow_scalar(self, p)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, _wrap(other))

    def reshape(self, *shape):
        from . import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def backward(self) -> None:
        backward(self)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad leaf reachable from a scalar loss.

    Walks the active tape in exact reverse execution order. A second call
    without reset_tape() (or a fresh Tape context) is rejected.
    """
    tape = active_tape()
    if loss.data.size != 1:
        raise AutodiffError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not tape._nodes:
        raise AutodiffError("backward() on an empty tape")
    if tape._consumed:
        raise AutodiffError(
            "backward() called twice on the same tape; call reset_tape() first"
        )
    tape._consumed = True

    # Accumulated output gradients keyed by tensor identity. Each primitive
    # output is produced by exactly one node, so its entry is popped when the
    # producing node is visited; what remains at the end belongs to leaves.
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    if loss.requires_grad:
        leaves[id(loss)] = loss

    for node in reversed(tape._nodes):
        g_out = grads.pop(id(node.output), None)
        if g_out is None:
            continue  # not on any path from the loss
        in_grads = node.backward_fn(g_out)
        for tensor, g in zip(node.inputs, in_grads):
            if g is None or not tensor.requires_grad:
                continue
            if g.shape != tensor.data.shape:
                raise AutodiffError(
                    f"{node.name}: backward produced grad of shape {g.shape} "
                    f"for input of shape {tensor.data.shape}"
                )
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
            leaves[key] = tensor

    for key, g in grads.items():
        tensor = leaves[key]
        tensor.grad = g if tensor.grad is None else tensor.grad + g
