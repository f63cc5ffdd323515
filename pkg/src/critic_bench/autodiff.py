"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Backward rules are themselves written with differentiable ops, so a gradient
computed with ``create_graph=True`` is an ordinary node of the graph and can
be differentiated again. That is what the gradient penalty needs.

Example::

    x = Tensor([3.0], requires_grad=True)
    y = (x * x).sum()
    (dx,) = grad(y, [x])          # dx.data == [6.0]
"""

from __future__ import annotations

import itertools
import threading
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Graph",
    "ShapeError",
    "DomainError",
    "GraphStateError",
    "grad",
    "no_grad",
    "forward",
    "backward",
    "gradient_check",
    "matmul",
    "add",
    "mul",
    "neg",
    "leaky_relu",
    "tanh",
    "softplus",
    "sigmoid",
    "log",
    "exp",
    "square",
    "sqrt",
    "reciprocal",
    "sum",
    "mean",
    "l2_norm",
    "lerp",
]

LEAKY_SLOPE = 0.2
NORM_FLOOR = 1e-30


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class GraphStateError(RuntimeError):
    pass


_ids = itertools.count()
_state = threading.local()


def _recording() -> bool:
    return getattr(_state, "record", True)


class no_grad:
    """Context manager that stops ops from recording parents."""

    def __init__(self, enabled: bool = False):
        self.enabled = enabled

    def __enter__(self):
        self._prev = _recording()
        _state.record = self.enabled
        return self

    def __exit__(self, *exc):
        _state.record = self._prev
        return False


class Tensor:
    __slots__ = ("data", "requires_grad", "op", "id", "name", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.op = "leaf"
        self.id = next(_ids)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        label = self.name or f"#{self.id}"
        return f"Tensor({label}, op={self.op}, shape={self.shape})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None):
        return sum(self, axis)

    def mean(self):
        return mean(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _label(t: Tensor) -> str:
    return t.name or f"#{t.id}"


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.op = op
    out.id = next(_ids)
    out.name = None
    if _recording() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
    return out


def _check_finite(data: np.ndarray, op: str, inputs: Sequence[Tensor]) -> None:
    if not np.all(np.isfinite(data)):
        names = ", ".join(_label(t) for t in inputs)
        raise DomainError(f"{op} on node(s) {names} produced non-finite values")


def _broadcast_ok(a: tuple, b: tuple) -> bool:
    if a == b or a == () or b == ():
        return True
    if len(a) == 2 and len(b) == 1:
        return b[0] == a[1]
    if len(b) == 2 and len(a) == 1:
        return a[0] == b[1]
    if len(a) == 2 and len(b) == 2 and a[0] == b[0]:
        return a[1] == 1 or b[1] == 1
    return False


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(
            f"{op}: cannot combine node {_label(a)} {a.shape} with node {_label(b)} {b.shape}"
        )


# structural ops, used by backward rules


def sum_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Sum ``x`` down to ``shape`` (inverse of numpy broadcasting)."""
    shape = tuple(shape)
    if x.shape == shape:
        return x
    data = x.data
    lead = data.ndim - len(shape)
    if lead:
        data = data.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and data.shape[i] != 1)
    if axes:
        data = data.sum(axis=axes, keepdims=True)
    in_shape = x.shape
    return _make(np.asarray(data), (x,), lambda g, out: (expand(g, in_shape),), "sum_to")


def expand(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    in_shape = x.shape
    data = np.broadcast_to(x.data, shape).copy()
    return _make(data, (x,), lambda g, out: (sum_to(g, in_shape),), "expand")


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    in_shape = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g, out: (reshape(g, in_shape),), "reshape")


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose: node {_label(x)} has shape {x.shape}, expected 2-D")
    return _make(x.data.T.copy(), (x,), lambda g, out: (transpose(g),), "transpose")


# arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(
        a.data + b.data, (a, b), lambda g, out: (sum_to(g, sa), sum_to(g, sb)), "add"
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("mul", a, b)
    sa, sb = a.shape, b.shape
    return _make(
        a.data * b.data,
        (a, b),
        lambda g, out: (sum_to(mul(g, b), sa), sum_to(mul(g, a), sb)),
        "mul",
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g, out: (neg(g),), "neg")


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: node {_label(a)} {a.shape} incompatible with node {_label(b)} {b.shape}"
        )
    return _make(
        a.data @ b.data,
        (a, b),
        lambda g, out: (matmul(g, transpose(b)), matmul(transpose(a), g)),
        "matmul",
    )


# elementwise nonlinearities


def leaky_relu(x, slope: float = LEAKY_SLOPE) -> Tensor:
    x = _as_tensor(x)
    mask = np.where(x.data > 0, 1.0, slope)
    return _make(x.data * mask, (x,), lambda g, out: (mul(g, Tensor(mask)),), "leaky_relu")


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    return _make(
        np.tanh(x.data), (x,), lambda g, out: (mul(g, add(1.0, neg(square(out)))),), "tanh"
    )


def _sigmoid_np(v: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    return _make(
        _sigmoid_np(x.data),
        (x,),
        lambda g, out: (mul(g, mul(out, add(1.0, neg(out)))),),
        "sigmoid",
    )


def softplus(x) -> Tensor:
    x = _as_tensor(x)
    data = np.logaddexp(0.0, x.data)
    return _make(data, (x,), lambda g, out: (mul(g, sigmoid(x)),), "softplus")


def log(x) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data <= 0):
        raise DomainError(f"log of non-positive value at node {_label(x)}")
    return _make(np.log(x.data), (x,), lambda g, out: (mul(g, reciprocal(x)),), "log")


def exp(x) -> Tensor:
    x = _as_tensor(x)
    data = np.exp(x.data)
    _check_finite(data, "exp", (x,))
    return _make(data, (x,), lambda g, out: (mul(g, out),), "exp")


def reciprocal(x) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data == 0):
        raise DomainError(f"reciprocal of zero at node {_label(x)}")
    return _make(
        1.0 / x.data, (x,), lambda g, out: (neg(mul(g, square(out))),), "reciprocal"
    )


def square(x) -> Tensor:
    x = _as_tensor(x)
    return _make(x.data * x.data, (x,), lambda g, out: (mul(g, mul(x, 2.0)),), "square")


def sqrt(x) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data < 0):
        raise DomainError(f"sqrt of negative value at node {_label(x)}")
    return _make(
        np.sqrt(x.data), (x,), lambda g, out: (mul(g, mul(reciprocal(out), 0.5)),), "sqrt"
    )


# reductions


def sum(x, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    x = _as_tensor(x)
    if axis is None:
        return sum_to(x, ()) if x.shape != () else x
    if x.ndim != 2 or axis not in (0, 1, -1):
        raise ShapeError(f"sum: unsupported axis {axis} for node {_label(x)} {x.shape}")
    if axis == 0:
        return sum_to(x, (x.shape[1],))
    return reshape(sum_to(x, (x.shape[0], 1)), (x.shape[0],))


def mean(x) -> Tensor:
    x = _as_tensor(x)
    return mul(sum(x), 1.0 / x.size)


def l2_norm(x) -> Tensor:
    """Euclidean norm of every row of a (batch, features) tensor."""
    x = _as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"l2_norm: node {_label(x)} must be (batch, features), got {x.shape}")
    # the tiny offset keeps d/dx finite (and zero) at an exactly-zero row
    return sqrt(add(sum(square(x), axis=1), NORM_FLOOR))


def lerp(a, u, v) -> Tensor:
    """a*u + (1-a)*v with ``a`` a constant weight (scalar or (batch, 1))."""
    a = _as_tensor(a)
    return add(mul(a, u), mul(add(1.0, neg(a)), v))


# gradient computation


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for p in node._parents:
            if p.id not in seen:
                stack.append((p, False))
    return order


def grad(
    output: Tensor, inputs: Sequence[Tensor], create_graph: bool = False
) -> list[Tensor]:
    """d(output)/d(input) for each input; zeros for inputs the output ignores."""
    if output.size != 1:
        raise ShapeError(f"grad: output node {_label(output)} is not scalar {output.shape}")
    grads: dict[int, Tensor] = {output.id: Tensor(np.ones_like(output.data))}
    keep = {t.id for t in inputs}
    with no_grad(enabled=create_graph):
        for node in reversed(_topo_order(output)):
            g = grads.get(node.id) if node.id in keep else grads.pop(node.id, None)
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g, node)):
                if not parent.requires_grad:
                    continue
                prev = grads.get(parent.id)
                grads[parent.id] = pg if prev is None else add(prev, pg)
    out = []
    for t in inputs:
        g = grads.get(t.id)
        out.append(Tensor(np.zeros_like(t.data)) if g is None else g)
    return out


class Graph:
    """A define-by-run computation over named inputs.

    ``build`` receives one keyword ``Tensor`` per input name and returns the
    output node. ``forward`` re-runs it on fresh leaves each call.
    """

    def __init__(self, build: Callable[..., Tensor], inputs: Iterable[str], create_graph: bool = False):
        self.build = build
        self.inputs = tuple(inputs)
        self.create_graph = create_graph
        self.leaves: dict[str, Tensor] = {}
        self.output: Tensor | None = None
        self.nodes: list[Tensor] = []

    def forward(self, bindings: Mapping[str, object]) -> Tensor:
        missing = [n for n in self.inputs if n not in bindings]
        if missing:
            raise GraphStateError(f"unbound inputs: {missing}")
        self.leaves = {
            n: Tensor(np.array(bindings[n], dtype=np.float64), requires_grad=True, name=n)
            for n in self.inputs
        }
        out = self.build(**self.leaves)
        self.output = out
        self.nodes = _topo_order(out)
        return out

    def backward(self) -> dict[str, np.ndarray]:
        if self.output is None:
            raise GraphStateError("backward() called before forward()")
        names = list(self.leaves)
        gs = grad(self.output, [self.leaves[n] for n in names])
        return {n: g.data for n, g in zip(names, gs)}


def forward(graph: Graph, bindings: Mapping[str, object]) -> Tensor:
    return graph.forward(bindings)


def backward(graph: Graph) -> dict[str, np.ndarray]:
    return graph.backward()


def gradient_check(graph: Graph, bindings: Mapping[str, object], eps: float = 1e-5) -> float:
    """Max relative error between backward() and central finite differences."""
    if not 0 < eps <= 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2], got {eps}")
    base = {n: np.array(v, dtype=np.float64) for n, v in bindings.items()}
    graph.forward(base)
    analytic = graph.backward()
    worst = 0.0
    # no no_grad() here: a build that differentiates internally (gradient
    # penalty) needs its inner graph recorded even on constant leaves
    for name in graph.inputs:
        x = base[name]
        flat = x.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = graph.build(**{k: Tensor(v) for k, v in base.items()}).item()
            flat[i] = orig - eps
            lo = graph.build(**{k: Tensor(v) for k, v in base.items()}).item()
            flat[i] = orig
            num = (hi - lo) / (2 * eps)
            ana = float(analytic[name].reshape(-1)[i])
            denom = max(abs(ana), abs(num), 1e-8)
            worst = max(worst, abs(ana - num) / denom)
    return worst
