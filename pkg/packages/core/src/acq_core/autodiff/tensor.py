"""
Tensor + tape: dense float32 values with reverse-mode autodiff.

每个由 op 产生、且某个输入需要梯度的 Tensor 持有一个 TapeNode。
TapeNode 记录 op 名、输入引用和 backward 规则；seq 为全局单调递增插入序号，
backward 严格按插入序号逆序访问节点（拓扑序的逆序）。
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, Optional, Sequence, Tuple

import numpy as np

_grad_state = threading.local()
_seq_counter = itertools.count()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording in the current thread."""
    prev = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = prev


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass(eq=False)
class TapeNode:
    op: str
    inputs: Tuple["Tensor", ...]
    backward: BackwardFn
    seq: int


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast dimensions so ``grad`` matches ``shape``."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for dim, extent in enumerate(shape):
        if extent == 1 and grad.shape[dim] != 1:
            grad = grad.sum(axis=dim, keepdims=True)
    return grad


class Tensor:
    """Dense N-d float32 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "node", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.asarray(data, dtype=np.float32)
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.node: Optional[TapeNode] = None
        self.name = name

    # ── basic accessors ──

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # ── operators (dispatch to ops) ──

    def __add__(self, other):
        from acq_core.autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from acq_core.autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from acq_core.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from acq_core.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from acq_core.autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from acq_core.autodiff import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from acq_core.autodiff import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from acq_core.autodiff import ops
        return ops.div(other, self)

    def __neg__(self):
        from acq_core.autodiff import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from acq_core.autodiff import ops
        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        from acq_core.autodiff import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from acq_core.autodiff import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from acq_core.autodiff import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    # ── reverse mode ──

    def backward(self) -> None:
        """
        Populate ``grad`` of every requires_grad leaf with d(self)/d(leaf).

        Repeated calls without zero_grad accumulate.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar root, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("backward() called on a tensor that does not require grad")

        seed = np.ones(self.shape, dtype=np.float64)
        if self.node is None:
            _accumulate_leaf(self, seed)
            return

        # collect every non-leaf reachable from the root
        reachable: Dict[int, Tensor] = {}
        stack = [self]
        while stack:
            t = stack.pop()
            if id(t) in reachable:
                continue
            reachable[id(t)] = t
            for inp in t.node.inputs:
                if inp.requires_grad and inp.node is not None and id(inp) not in reachable:
                    stack.append(inp)

        order = sorted(reachable.values(), key=lambda t: t.node.seq, reverse=True)
        grads: Dict[int, np.ndarray] = {id(self): seed}
        leaf_grads: Dict[int, Tuple[Tensor, np.ndarray]] = {}

        for t in order:
            g = grads.pop(id(t), None)
            if g is None:
                continue
            in_grads = t.node.backward(g)
            for inp, ig in zip(t.node.inputs, in_grads):
                if ig is None or not inp.requires_grad:
                    continue
                ig = unbroadcast(np.asarray(ig, dtype=np.float64), inp.shape)
                if inp.is_leaf:
                    prev = leaf_grads.get(id(inp))
                    leaf_grads[id(inp)] = (inp, ig if prev is None else prev[1] + ig)
                else:
                    prev_g = grads.get(id(inp))
                    grads[id(inp)] = ig if prev_g is None else prev_g + ig

        for leaf, g in leaf_grads.values():
            _accumulate_leaf(leaf, g)


def _accumulate_leaf(leaf: Tensor, g: np.ndarray) -> None:
    g32 = g.astype(np.float32)
    leaf.grad = g32 if leaf.grad is None else (leaf.grad + g32).astype(np.float32)


def make_result(
    op: str,
    out: np.ndarray,
    inputs: Sequence[Tensor],
    backward: BackwardFn,
) -> Tensor:
    """
    Wrap a forward value as a Tensor and record a TapeNode when needed.

    Non-finite output from finite inputs is an error, never silent.
    """
    out = np.asarray(out)
    if out.dtype != np.float32:
        out = out.astype(np.float32)
    if not np.isfinite(out).all():
        if all(np.isfinite(i.data).all() for i in inputs):
            raise FloatingPointError(f"{op}: produced non-finite values from finite inputs")
    result = Tensor.__new__(Tensor)
    result.data = out
    result.grad = None
    result.requires_grad = False
    result.node = None
    result.name = ""
    if is_grad_enabled() and any(i.requires_grad for i in inputs):
        result.requires_grad = True
        result.node = TapeNode(op, tuple(inputs), backward, next(_seq_counter))
    return result
