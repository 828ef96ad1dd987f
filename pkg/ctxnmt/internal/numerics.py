# internal/numerics.py

# dense tensors over numpy, a dynamic reverse-mode tape, the parameter store and Adam

from __future__ import annotations
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from .errors import ConfigError, ContractError, DimensionError, NumericError

DTYPES = {32: np.float32, 64: np.float64}
INIT_SCALE = 0.08  # uniform init range [-0.08, 0.08]
BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8
# denominator floor for gradient-check relative error: when both gradients are
# below it the check is absolute, |analytic - numeric| <= REL_ERROR_FLOOR * tol
# (1e-9 at tol 1e-6)
REL_ERROR_FLOOR = 1e-3

Number = Union[int, float]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tape:
    """Op nodes of one forward pass, in creation (= topological) order."""

    def __init__(self) -> None:
        self.nodes: List["Tensor"] = []
        self.enabled = True

    def record(self, node: "Tensor") -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes = []

    def __len__(self) -> int:
        return len(self.nodes)


class Tensor:
    """
    Immutable dense array plus the bookkeeping reverse mode needs.
    `grad` is only filled in during backward().
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "tape", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "const",
                 tape: Optional[Tape] = None, dtype=None) -> None:
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        arr = arr.view()
        arr.flags.writeable = False  # values never change once produced
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.op = op
        self.tape = tape
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return np.array(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)


# --------------------------------- node construction ---------------------------------

def _lift(x, like: Optional[Tensor] = None) -> Tensor:
    """Wrap python numbers / arrays as constants with the dtype of `like`."""
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _pair(a, b) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _lift(b, a)
    b = _lift(b)
    return _lift(a, b), b


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite value produced by {op} (shape {data.shape})")
    tape = None
    for p in parents:
        if p.requires_grad and p.tape is not None and p.tape.enabled:
            tape = p.tape
            break
    out = Tensor(data, requires_grad=tape is not None, op=op, tape=tape)
    if tape is not None:
        out._parents = tuple(parents)
        out._backward = backward
        tape.record(out)
    return out


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast(op: str, a: Tensor, b: Tensor, fn) -> np.ndarray:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None
    return fn(a.data, b.data)


# --------------------------------- elementwise ---------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    data = _broadcast("add", a, b, np.add)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _make(data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    data = _broadcast("sub", a, b, np.subtract)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _make(data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    """Element-wise (Hadamard) product with numpy broadcasting."""
    a, b = _pair(a, b)
    data = _broadcast("mul", a, b, np.multiply)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return _make(data, (a, b), backward, "mul")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - y * y),)
    return _make(y, (a,), backward, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    y = special.expit(a.data)

    def backward(g):
        return (g * y * (1.0 - y),)
    return _make(y, (a,), backward, "sigmoid")


# --------------------------------- linear algebra ---------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    a [..., m, k] @ b [k, n] -> [..., m, n]. Leading axes of `a` act as a batch;
    the weight side is always a matrix.
    """
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    data = a.data @ b.data

    def backward(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb
    return _make(data, (a, b), backward, "matmul")


# --------------------------------- reductions / normalizers ---------------------------------

def sum(a: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    data = np.sum(a.data, axis=axis)

    def backward(g):
        if axis is None:
            return (np.full(a.shape, g, dtype=a.dtype),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape),)
    return _make(np.asarray(data), (a,), backward, "sum")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    y = special.softmax(a.data, axis=axis)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)
    return _make(y, (a,), backward, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    y = special.log_softmax(a.data, axis=axis)

    def backward(g):
        return (g - np.exp(y) * np.sum(g, axis=axis, keepdims=True),)
    return _make(y, (a,), backward, "log_softmax")


# --------------------------------- shape plumbing ---------------------------------

def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise ContractError("concat of an empty list")
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: incompatible shapes {[p.shape for p in parts]}") from None
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))
    return _make(data, tuple(parts), backward, "concat")


def stack(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not parts:
        raise ContractError("stack of an empty list")
    try:
        data = np.stack([p.data for p in parts], axis=axis)
    except ValueError:
        raise DimensionError(f"stack: incompatible shapes {[p.shape for p in parts]}") from None

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))
    return _make(data, tuple(parts), backward, "stack")


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}") from None
    return _make(data, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along `axis`."""
    if start < 0 or length < 1 or start + length > a.shape[axis]:
        raise DimensionError(f"narrow: [{start}, {start + length}) outside axis {axis} of {a.shape}")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[index] = g
        return (full,)
    return _make(a.data[index], (a,), backward, "narrow")


def take(weight: Tensor, ids) -> Tensor:
    """Row lookup (embedding): weight [V, d], ids int array -> [*ids.shape, d]."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise ContractError(f"take: ids outside [0, {weight.shape[0]})")

    def backward(g):
        full = np.zeros(weight.shape, dtype=g.dtype)
        np.add.at(full, ids, g)
        return (full,)
    return _make(weight.data[ids], (weight,), backward, "take")


def pick(a: Tensor, ids) -> Tensor:
    """a [B, V], ids [B] -> a[b, ids[b]] of shape [B]."""
    ids = np.asarray(ids, dtype=np.int64)
    if a.ndim != 2 or ids.shape != (a.shape[0],):
        raise DimensionError(f"pick: ids of shape {ids.shape} do not index rows of {a.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= a.shape[1]):
        raise ContractError(f"pick: ids outside [0, {a.shape[1]})")
    rows = np.arange(a.shape[0])

    def backward(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[rows, ids] = g
        return (full,)
    return _make(a.data[rows, ids], (a,), backward, "pick")


# --------------------------------- parameter store ---------------------------------

@dataclass
class Parameter:
    value: np.ndarray
    grad: np.ndarray
    m: np.ndarray  # Adam first moment
    v: np.ndarray  # Adam second moment


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


class ParameterStore:
    """
    Named learnable tensors (insertion ordered) with gradient accumulators,
    optimizer moments and the tape of the forward pass in flight.
    """

    def __init__(self, seed: int = 0, precision: int = 32) -> None:
        if precision not in DTYPES:
            raise ConfigError(f"precision must be 32 or 64, got {precision}")
        self.rng_seed = seed
        self.precision = precision
        self.dtype = DTYPES[precision]
        self.rng = np.random.default_rng(seed)
        self.entries: "OrderedDict[str, Parameter]" = OrderedDict()
        self.tape = Tape()
        self.adam_steps = 0
        self._leaves: Dict[str, Tensor] = {}

    # ---- registration ----
    def add(self, name: str, shape: Tuple[int, ...], init: str = "uniform") -> None:
        if name in self.entries:
            raise ContractError(f"duplicate parameter name {name!r}")
        if any(n < 1 for n in shape):
            raise DimensionError(f"parameter {name!r}: extents must be positive, got {shape}")
        if init == "orthogonal" and len(shape) == 2 and shape[0] == shape[1]:
            value = _orthogonal(self.rng, shape[0])
        elif init == "zeros":
            value = np.zeros(shape)
        else:
            value = self.rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
        value = np.ascontiguousarray(value, dtype=self.dtype)
        zeros = lambda: np.zeros(shape, dtype=self.dtype)  # noqa: E731
        self.entries[name] = Parameter(value=value, grad=zeros(), m=zeros(), v=zeros())

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def items(self):
        return self.entries.items()

    def value(self, name: str) -> np.ndarray:
        return self.entries[name].value

    def grad(self, name: str) -> np.ndarray:
        return self.entries[name].grad

    def set_value(self, name: str, array) -> None:
        entry = self.entries[name]
        array = np.asarray(array, dtype=self.dtype)
        if array.shape != entry.value.shape:
            raise DimensionError(f"set_value({name!r}): shape {array.shape} != {entry.value.shape}")
        entry.value[...] = array

    def n_weights(self) -> int:
        return int(np.sum([p.value.size for p in self.entries.values()]))

    # ---- graph access ----
    def param(self, name: str) -> Tensor:
        """Leaf tensor for `name`; one shared leaf per forward pass."""
        if name not in self.entries:
            raise ContractError(f"unknown parameter {name!r}")
        if not self.tape.enabled:
            return Tensor(self.entries[name].value, op=f"param:{name}")
        leaf = self._leaves.get(name)
        if leaf is None:
            leaf = Tensor(self.entries[name].value, requires_grad=True, op=f"param:{name}", tape=self.tape)
            self._leaves[name] = leaf
        return leaf

    def constant(self, array) -> Tensor:
        return Tensor(np.asarray(array, dtype=self.dtype))

    def zeros(self, shape: Tuple[int, ...]) -> Tensor:
        return Tensor(np.zeros(shape, dtype=self.dtype))

    def full(self, shape: Tuple[int, ...], fill: float) -> Tensor:
        return Tensor(np.full(shape, fill, dtype=self.dtype))

    @contextmanager
    def no_grad(self):
        """Inference mode: nothing is recorded on the tape."""
        previous = self.tape.enabled
        self.tape.enabled = False
        try:
            yield self
        finally:
            self.tape.enabled = previous

    def reset_tape(self) -> None:
        self.tape.clear()
        self._leaves = {}

    # ---- gradients / values ----
    def zero_grad(self) -> None:
        for entry in self.entries.values():
            entry.grad.fill(0)

    def global_grad_norm(self) -> float:
        return float(np.sqrt(np.sum([np.sum(np.square(p.grad, dtype=np.float64)) for p in self.entries.values()])))

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: entry.value.copy() for name, entry in self.entries.items()}

    def restore(self, snapshot: Dict[str, np.ndarray]) -> None:
        for name, array in snapshot.items():
            self.set_value(name, array)


# --------------------------------- reverse sweep ---------------------------------

def backward(loss: Tensor, store: ParameterStore) -> None:
    """
    Populate store gradients with d(loss)/d(parameter). Gradients accumulate
    across calls until store.zero_grad(); the tape is freed afterwards.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.tape is None or loss.tape is not store.tape:
        raise ContractError("loss was not recorded on this store's tape")
    try:
        loss.grad = np.ones_like(loss.data)
        nodes = store.tape.nodes
        for index in range(len(nodes) - 1, -1, -1):
            node = nodes[index]
            if node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if not np.all(np.isfinite(g)):
                    raise NumericError(f"non-finite gradient leaving node {index} ({node.op})")
                parent.grad = g if parent.grad is None else parent.grad + g
        for name, leaf in store._leaves.items():
            if leaf.grad is not None:
                store.entries[name].grad += leaf.grad
    finally:
        store.reset_tape()


# --------------------------------- optimizer ---------------------------------

def clip_gradients(store: ParameterStore, clip_norm: float) -> float:
    """Rescale all gradients so their global L2 norm is <= clip_norm. Returns the pre-clip norm."""
    if clip_norm <= 0:
        raise ConfigError(f"clip_norm must be positive, got {clip_norm}")
    norm = store.global_grad_norm()
    if norm > clip_norm:
        scale = clip_norm / norm
        for entry in store.entries.values():
            entry.grad *= scale
    return norm


def sgd_adam_step(store: ParameterStore, lr: float, clip_norm: float) -> float:
    """Clip, apply one Adam update to every parameter, zero the gradients. Returns the pre-clip norm."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    norm = clip_gradients(store, clip_norm)
    store.adam_steps += 1
    t = store.adam_steps
    correct1 = 1.0 - BETA1 ** t
    correct2 = 1.0 - BETA2 ** t
    for entry in store.entries.values():
        g = entry.grad
        entry.m[...] = BETA1 * entry.m + (1.0 - BETA1) * g
        entry.v[...] = BETA2 * entry.v + (1.0 - BETA2) * g * g
        m_hat = entry.m / correct1
        v_hat = entry.v / correct2
        entry.value -= (lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)).astype(store.dtype)
    store.zero_grad()
    return norm


# --------------------------------- gradient checking ---------------------------------

@dataclass
class GradCheckReport:
    errors: Dict[str, float] = field(default_factory=dict)  # parameter -> worst relative error
    checked: Dict[str, int] = field(default_factory=dict)   # parameter -> entries checked

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def worst(self) -> Optional[str]:
        if not self.errors:
            return None
        return max(self.errors, key=self.errors.get)

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_error <= tol


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_ERROR_FLOOR)


def check_gradients(loss_fn: Callable[[], Tensor], store: ParameterStore, eps: float = 1e-5,
                    max_entries: Optional[int] = None, seed: int = 0) -> GradCheckReport:
    """
    Compare backward() against central finite differences for every parameter
    (all entries, or a seeded sample of `max_entries` per parameter).
    """
    if store.dtype != np.float64:
        raise ContractError("gradient checking needs a 64-bit store (precision = 64)")
    store.zero_grad()
    backward(loss_fn(), store)
    analytic = {name: entry.grad.copy() for name, entry in store.items()}
    store.zero_grad()

    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    with store.no_grad():
        for name, entry in store.items():
            flat = entry.value.reshape(-1)  # view into the live parameter
            grad_flat = analytic[name].reshape(-1)
            if max_entries is not None and flat.size > max_entries:
                indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
            else:
                indices = np.arange(flat.size)
            worst = 0.0
            for i in indices:
                original = flat[i]
                flat[i] = original + eps
                plus = loss_fn().item()
                flat[i] = original - eps
                minus = loss_fn().item()
                flat[i] = original
                numeric = (plus - minus) / (2.0 * eps)
                worst = max(worst, relative_error(float(grad_flat[i]), numeric))
            report.errors[name] = worst
            report.checked[name] = int(len(indices))
    return report
