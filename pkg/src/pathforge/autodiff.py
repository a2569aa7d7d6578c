"""Reverse-mode automatic differentiation on dense float64 arrays.

A Tensor wraps a numpy array and remembers how it was produced. Running
backward() on a scalar loss walks the tape in reverse topological order,
calling each node's vector-Jacobian product and accumulating gradients
into every tensor that requires them. Gradients add up across backward
calls until explicitly cleared, so a training step is

    zero_grads(params); loss.backward(); optimizer.step()

The op set is deliberately small: what the recommender stack and the
policy-gradient losses need, nothing speculative. The one non-obvious
primitive is graph_attention, a fused multi-head attention aggregation
over an edge list; doing it compositionally would cost dozens of tape
nodes per layer and dominates runtime otherwise.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested op."""


class AutodiffUsageError(RuntimeError):
    """Tape misuse: backward on a non-scalar, gradient of a detached node, etc."""


_grad_enabled = True


class no_grad:
    """Context manager that suspends taping; ops inside produce plain tensors."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "info")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.info: dict | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A view of the same values that contributes zero gradient upstream."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.data.ndim != 0 and self.data.size != 1:
            raise AutodiffUsageError(
                f"backward() needs a scalar loss, got shape {self.data.shape}"
            )
        if not self.requires_grad:
            raise AutodiffUsageError("backward() on a tensor that is not on the tape")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        # Iterative DFS postorder; losses over long collect phases nest deep.
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad = node.grad + g
            if node._vjp is None:
                continue
            parent_grads = node._vjp(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        tag = "grad" if self.requires_grad else "const"
        return f"Tensor({tag}, shape={self.data.shape})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# elementwise and linear-algebra primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    """a + b; b may also be a 1-D row vector broadcast over a's rows (bias)."""
    if a.data.shape == b.data.shape:
        return _node(a.data + b.data, (a, b), lambda g: (g, g))
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        return _node(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0)))
    raise ShapeError(f"add: {a.data.shape} vs {b.data.shape}")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product of same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: {a.data.shape} vs {b.data.shape}")
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: {a.data.shape} @ {b.data.shape}")
    return _node(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.data.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def tsum(a: Tensor) -> Tensor:
    return _node(
        np.asarray(a.data.sum()),
        (a,),
        lambda g: (np.broadcast_to(g, a.data.shape).copy(),),
    )


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    return _node(
        np.asarray(a.data.mean()),
        (a,),
        lambda g: (np.broadcast_to(g / n, a.data.shape).copy(),),
    )


def add_n(terms: Sequence[Tensor]) -> Tensor:
    """Sum of same-shape tensors in a single tape node (loss accumulation)."""
    if not terms:
        raise AutodiffUsageError("add_n of an empty sequence")
    shape = terms[0].data.shape
    for t in terms:
        if t.data.shape != shape:
            raise ShapeError(f"add_n: {t.data.shape} vs {shape}")
    total = terms[0].data.copy()
    for t in terms[1:]:
        total += t.data
    return _node(total, tuple(terms), lambda g: tuple(g for _ in terms))


def sum_rows(a: Tensor) -> Tensor:
    """Row sums of a 2-D tensor -> 1-D."""
    if a.data.ndim != 2:
        raise ShapeError(f"sum_rows expects 2-D, got {a.data.shape}")
    return _node(
        a.data.sum(axis=1),
        (a,),
        lambda g: (np.broadcast_to(g[:, None], a.data.shape).copy(),),
    )


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    if not parts:
        raise AutodiffUsageError("concat of an empty sequence")
    for t in parts:
        if t.data.ndim != 1:
            raise ShapeError(f"concat expects 1-D parts, got {t.data.shape}")
    sizes = [t.data.size for t in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return _node(np.concatenate([t.data for t in parts]), tuple(parts), vjp)


def stack_scalars(parts: Sequence[Tensor]) -> Tensor:
    """Stack 0-d tensors into a 1-D tensor."""
    if not parts:
        raise AutodiffUsageError("stack_scalars of an empty sequence")
    for t in parts:
        if t.data.ndim != 0:
            raise ShapeError(f"stack_scalars expects 0-d parts, got {t.data.shape}")

    def vjp(g):
        return tuple(np.asarray(g[i]) for i in range(len(parts)))

    return _node(np.array([t.data for t in parts]), tuple(parts), vjp)


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _node(y, (a,), lambda g: (g * y,))


def elu(a: Tensor) -> Tensor:
    y = np.where(a.data > 0, a.data, np.expm1(a.data))
    # For x <= 0 the local slope is exp(x) = y + 1.
    return _node(y, (a,), lambda g: (g * np.where(a.data > 0, 1.0, y + 1.0),))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    y = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)
    return _node(y, (a,), lambda g: (g * inside,))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"minimum: {a.data.shape} vs {b.data.shape}")
    take_a = a.data <= b.data  # ties route the subgradient to a
    return _node(
        np.where(take_a, a.data, b.data),
        (a, b),
        lambda g: (g * take_a, g * ~take_a),
    )


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _node(y, (a,), vjp)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    ls = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def vjp(g):
        return (g - np.exp(ls) * g.sum(axis=axis, keepdims=True),)

    return _node(ls, (a,), vjp)


def pick(a: Tensor, index: int) -> Tensor:
    """Scalar entry of a 1-D tensor."""
    if a.data.ndim != 1:
        raise ShapeError(f"pick expects 1-D, got {a.data.shape}")
    index = int(index)

    def vjp(g):
        out = np.zeros_like(a.data)
        out[index] = g
        return (out,)

    return _node(np.asarray(a.data[index]), (a,), vjp)


def take(a: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Batched entries a[rows, cols] -> 1-D tensor (cross-entropy gathers)."""
    if a.data.ndim != 2:
        raise ShapeError(f"take expects 2-D, got {a.data.shape}")
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, (rows, cols), g)
        return (out,)

    return _node(a.data[rows, cols], (a,), vjp)


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx], (a,), vjp)


# ---------------------------------------------------------------------------
# fused multi-head attention over an edge list


class _Segments:
    """Stable sort of an index vector plus reduceat boundaries, so that
    scatter-adds become contiguous segment reductions."""

    __slots__ = ("order", "starts", "ids", "seg_of_edge")

    def __init__(self, idx: np.ndarray):
        self.order = np.argsort(idx, kind="stable")
        sorted_idx = idx[self.order]
        if sorted_idx.size:
            self.starts = np.flatnonzero(
                np.r_[True, sorted_idx[1:] != sorted_idx[:-1]]
            )
        else:
            self.starts = np.zeros(0, dtype=np.intp)
        self.ids = sorted_idx[self.starts]
        counts = np.diff(np.r_[self.starts, sorted_idx.size])
        self.seg_of_edge = np.repeat(np.arange(len(self.starts)), counts)

    def reduce_add(self, per_edge: np.ndarray, n_rows: int) -> np.ndarray:
        """Sum per-edge values into their target rows; absent rows are zero."""
        out = np.zeros((n_rows,) + per_edge.shape[1:])
        if per_edge.shape[0]:
            out[self.ids] = np.add.reduceat(per_edge[self.order], self.starts, axis=0)
        return out


def graph_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    src: np.ndarray,
    dst: np.ndarray,
    n_dst: int,
    heads: int,
    kind: str = "dot",
) -> Tensor:
    """Attention-weighted aggregation of v[src] into n_dst destination rows.

    q has one row per destination node, k and v one per source node. Scores
    are per-head scaled dot products (or an additive tanh variant), softmaxed
    within each destination's in-edge group. Destinations with no in-edges
    get a zero row. The per-edge attention weights land in out.info["alpha"]
    with shape (n_edges, heads).
    """
    n = q.data.shape[1]
    if n % heads != 0:
        raise ShapeError(f"width {n} not divisible by {heads} heads")
    if k.data.shape[1] != n or v.data.shape[1] != n:
        raise ShapeError("q, k, v widths differ")
    dh = n // heads
    inv_sqrt = 1.0 / np.sqrt(dh)
    src = np.asarray(src, dtype=np.intp)
    dst = np.asarray(dst, dtype=np.intp)
    n_src = k.data.shape[0]

    qh = q.data.reshape(-1, heads, dh)
    kh = k.data.reshape(n_src, heads, dh)
    vh = v.data.reshape(n_src, heads, dh)
    qe = qh[dst]
    ke = kh[src]

    if kind == "dot":
        scores = (qe * ke).sum(axis=2) * inv_sqrt
        tanh_e = None
    elif kind == "additive":
        tanh_e = np.tanh(qe + ke)
        scores = tanh_e.sum(axis=2) * inv_sqrt
    else:
        raise ValueError(f"unknown attention kind {kind!r}")

    # Segment softmax over each destination's in-edges, max-shifted per
    # head. Scatter work runs as contiguous reduceat segments over edges
    # sorted by endpoint (np.add.at is an order of magnitude slower here).
    by_dst = _Segments(dst)
    by_src = _Segments(src)
    if scores.shape[0]:
        scores_s = scores[by_dst.order]
        seg_max = np.maximum.reduceat(scores_s, by_dst.starts, axis=0)
        z_s = np.exp(scores_s - seg_max[by_dst.seg_of_edge])
        seg_sum = np.add.reduceat(z_s, by_dst.starts, axis=0)
        alpha_s = z_s / seg_sum[by_dst.seg_of_edge]
        alpha = np.empty_like(alpha_s)
        alpha[by_dst.order] = alpha_s
    else:
        alpha = np.zeros((0, heads))
    out = by_dst.reduce_add(alpha[:, :, None] * vh[src], n_dst)

    def vjp(g):
        gh = g.reshape(n_dst, heads, dh)
        ge = gh[dst]
        dvh = by_src.reduce_add(alpha[:, :, None] * ge, n_src)
        dalpha = (ge * vh[src]).sum(axis=2)
        # Softmax backward within each destination segment.
        seg = by_dst.reduce_add(alpha * dalpha, n_dst)
        dscores = alpha * (dalpha - seg[dst])
        if kind == "dot":
            dqe = dscores[:, :, None] * ke * inv_sqrt
            dke = dscores[:, :, None] * qe * inv_sqrt
        else:
            common = dscores[:, :, None] * (1.0 - tanh_e**2) * inv_sqrt
            dqe = common
            dke = common
        dqh = by_dst.reduce_add(dqe, qh.shape[0])
        dkh = by_src.reduce_add(dke, n_src)
        return (
            dqh.reshape(q.data.shape),
            dkh.reshape(k.data.shape),
            dvh.reshape(v.data.shape),
        )

    node = _node(out.reshape(n_dst, n), (q, k, v), vjp)
    node.info = {"alpha": alpha}
    return node
