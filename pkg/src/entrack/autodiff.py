"""Reverse-mode automatic differentiation on a recording tape.

Small, float64-only kernel: enough primitives to express the token/entity/
location LSTMs, the CRF dynamic programs, and the softmax location scorer,
with exact gradients of scalar losses. A :class:`Tape` is single-writer and
confined to one thread; independent tapes may run in parallel.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tape",
    "Tensor",
    "add",
    "backward",
    "concat",
    "gather",
    "get_row",
    "log_sum_exp",
    "lstm_cell",
    "matmul",
    "mean_pool",
    "mul",
    "narrow",
    "pack",
    "pick",
    "scale",
    "sigmoid",
    "softmax",
    "stack_rows",
    "sub",
    "sum_all",
    "tanh",
    "transpose",
]

# Opt-in forward-value validation (used by the test suite; off in training
# loops for speed). Non-finite values on valid inputs indicate a kernel bug.
CHECK_FINITE = False


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


def _shape_err(op: str, *shapes: tuple) -> ShapeError:
    return ShapeError(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


class Tensor:
    """Dense float64 array, optionally recorded on a tape.

    Leaf tensors (parameters, constants) have no tape; tensors produced by
    operations belong to exactly one tape. ``grad`` is populated by
    :func:`backward` and is ``None`` until then.
    """

    __slots__ = ("data", "grad", "_parents", "_bwd", "_tape")

    def __init__(self, data, parents: tuple = (), bwd: Callable | None = None, tape: "Tape | None" = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._bwd = bwd
        self._tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, leaf={self._tape is None})"


class Tape:
    """Ordered record of operations; backward visits nodes in reverse order."""

    _tls = threading.local()

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._leaves: list[Tensor] = []
        self._leaf_ids: set[int] = set()

    def __enter__(self) -> "Tape":
        stack = getattr(Tape._tls, "stack", None)
        if stack is None:
            stack = Tape._tls.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._tls.stack.pop()

    @classmethod
    def current(cls) -> "Tape":
        stack = getattr(cls._tls, "stack", None)
        if not stack:
            raise RuntimeError("no active Tape; wrap the computation in `with Tape():`")
        return stack[-1]

    def _watch(self, leaf: Tensor) -> None:
        if id(leaf) not in self._leaf_ids:
            self._leaf_ids.add(id(leaf))
            self._leaves.append(leaf)

    def __len__(self) -> int:
        return len(self._nodes)


def _record(data: np.ndarray, parents: tuple[Tensor, ...], bwd: Callable) -> Tensor:
    tape = Tape.current()
    for p in parents:
        if p._tape is None:
            tape._watch(p)
        elif p._tape is not tape:
            raise RuntimeError("operand belongs to a different tape")
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite forward value")
    out = Tensor(data, parents, bwd, tape)
    tape._nodes.append(out)
    return out


def _acc(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Run the reverse pass from a scalar loss.

    Returns a table mapping ``id(leaf)`` to the accumulated gradient for
    every leaf tensor the tape touched (leaves never reached by the loss get
    a zero gradient). Gradients are also left on each tensor's ``.grad``.
    """
    if loss.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise RuntimeError("backward: loss is a leaf, nothing to differentiate")
    for t in tape._nodes:
        t.grad = None
    for t in tape._leaves:
        t.grad = None
    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(tape._nodes):
        if node.grad is not None and node._bwd is not None:
            node._bwd(node.grad)
    table: dict[int, np.ndarray] = {}
    for leaf in tape._leaves:
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
        table[id(leaf)] = leaf.grad
    return table


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product: (m,n)@(n,p), (m,n)@(n,), (n,)@(n,p), (n,)@(n,)."""
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise _shape_err("matmul", a.shape, b.shape)
    if a.shape[-1] != b.shape[0]:
        raise _shape_err("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def bwd(g: np.ndarray) -> None:
        if a.ndim == 2 and b.ndim == 2:
            _acc(a, g @ bd.T)
            _acc(b, ad.T @ g)
        elif a.ndim == 2 and b.ndim == 1:
            _acc(a, np.outer(g, bd))
            _acc(b, ad.T @ g)
        elif a.ndim == 1 and b.ndim == 2:
            _acc(a, bd @ g)
            _acc(b, np.outer(ad, g))
        else:
            _acc(a, g * bd)
            _acc(b, g * ad)

    return _record(ad @ bd, (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also matrix + row-vector and anything + scalar."""
    if a.shape == b.shape:
        def bwd(g):
            _acc(a, g)
            _acc(b, g)
    elif a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        def bwd(g):
            _acc(a, g)
            _acc(b, g.sum(axis=0))
    elif b.shape == ():
        def bwd(g):
            _acc(a, g)
            _acc(b, np.sum(g))
    else:
        raise _shape_err("add", a.shape, b.shape)
    return _record(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.shape != b.shape:
        raise _shape_err("mul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def bwd(g):
        _acc(a, g * bd)
        _acc(b, g * ad)

    return _record(ad * bd, (a, b), bwd)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def bwd(g):
        _acc(x, g * c)

    return _record(x.data * c, (x,), bwd)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis (vectors end-to-end, matrices by column)."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat: empty part list")
    nd = parts[0].ndim
    if any(p.ndim != nd for p in parts) or nd not in (1, 2):
        raise _shape_err("concat", *(p.shape for p in parts))
    widths = [p.shape[-1] for p in parts]
    offs = np.cumsum([0] + widths)

    def bwd(g):
        for p, lo, hi in zip(parts, offs[:-1], offs[1:]):
            _acc(p, g[..., lo:hi])

    return _record(np.concatenate([p.data for p in parts], axis=-1), tuple(parts), bwd)


def narrow(x: Tensor, lo: int, hi: int) -> Tensor:
    """Slice [lo:hi) along the last axis."""
    if not (0 <= lo < hi <= x.shape[-1]):
        raise _shape_err(f"narrow[{lo}:{hi}]", x.shape)

    def bwd(g):
        full = np.zeros_like(x.data)
        full[..., lo:hi] = g
        _acc(x, full)

    return _record(x.data[..., lo:hi].copy(), (x,), bwd)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise _shape_err("transpose", x.shape)

    def bwd(g):
        _acc(x, g.T)

    return _record(x.data.T.copy(), (x,), bwd)


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack equal-length vectors into a matrix, one per row."""
    rows = list(rows)
    if not rows or any(r.ndim != 1 or r.shape != rows[0].shape for r in rows):
        raise _shape_err("stack_rows", *(r.shape for r in rows))

    def bwd(g):
        for i, r in enumerate(rows):
            _acc(r, g[i])

    return _record(np.stack([r.data for r in rows]), tuple(rows), bwd)


def pack(scalars: Sequence[Tensor]) -> Tensor:
    """Pack scalar tensors into a vector."""
    scalars = list(scalars)
    if not scalars or any(s.shape != () for s in scalars):
        raise _shape_err("pack", *(s.shape for s in scalars))

    def bwd(g):
        for i, s in enumerate(scalars):
            _acc(s, g[i])

    return _record(np.array([s.data for s in scalars]), tuple(scalars), bwd)


def get_row(m: Tensor, i: int) -> Tensor:
    if m.ndim != 2 or not (0 <= i < m.shape[0]):
        raise _shape_err(f"get_row[{i}]", m.shape)

    def bwd(g):
        full = np.zeros_like(m.data)
        full[i] = g
        _acc(m, full)

    return _record(m.data[i].copy(), (m,), bwd)


def mean_pool(m: Tensor, rows: Sequence[int]) -> Tensor:
    """Mean of the selected rows of a matrix."""
    rows = list(rows)
    if m.ndim != 2 or not rows or any(not 0 <= r < m.shape[0] for r in rows):
        raise _shape_err(f"mean_pool(rows={rows})", m.shape)
    idx = np.asarray(rows, dtype=np.intp)
    inv = 1.0 / len(rows)

    def bwd(g):
        full = np.zeros_like(m.data)
        np.add.at(full, idx, g * inv)
        _acc(m, full)

    return _record(m.data[idx].mean(axis=0), (m,), bwd)


def gather(x: Tensor, idx: Iterable[int]) -> Tensor:
    """Gather elements by flat index into a vector."""
    flat_idx = np.asarray(list(idx), dtype=np.intp)
    if flat_idx.size and (flat_idx.min() < 0 or flat_idx.max() >= x.data.size):
        raise _shape_err(f"gather(idx={flat_idx})", x.shape)

    def bwd(g):
        full = np.zeros(x.data.size)
        np.add.at(full, flat_idx, g)
        _acc(x, full.reshape(x.shape))

    return _record(x.data.ravel()[flat_idx], (x,), bwd)


def pick(x: Tensor, index: int | tuple[int, ...]) -> Tensor:
    """Select one element as a scalar tensor."""
    flat = int(np.ravel_multi_index(index, x.shape)) if isinstance(index, tuple) else int(index)
    if not 0 <= flat < x.data.size:
        raise _shape_err(f"pick({index})", x.shape)

    def bwd(g):
        full = np.zeros(x.data.size)
        full[flat] = g
        _acc(x, full.reshape(x.shape))

    return _record(np.float64(x.data.ravel()[flat]), (x,), bwd)


def sum_all(x: Tensor) -> Tensor:
    def bwd(g):
        _acc(x, np.full_like(x.data, g))

    return _record(np.sum(x.data), (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bwd(g):
        _acc(x, g * (1.0 - y * y))

    return _record(y, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid_np(x.data)

    def bwd(g):
        _acc(x, g * y * (1.0 - y))

    return _record(y, (x,), bwd)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # Stable in both tails: never exponentiates a large positive argument.
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_sum_exp(x: Tensor, axis: int | None = None) -> Tensor:
    """Stable log-sum-exp; vector -> scalar, or matrix + axis -> vector."""
    if x.ndim == 1 and axis is None:
        m = np.max(x.data)
        y = m + np.log(np.sum(np.exp(x.data - m)))
        soft = np.exp(x.data - y)

        def bwd(g):
            _acc(x, g * soft)

        return _record(np.float64(y), (x,), bwd)
    if x.ndim == 2 and axis in (0, 1):
        m = np.max(x.data, axis=axis, keepdims=True)
        y = (m + np.log(np.sum(np.exp(x.data - m), axis=axis, keepdims=True))).squeeze(axis)
        soft = np.exp(x.data - np.expand_dims(y, axis))

        def bwd(g):
            _acc(x, np.expand_dims(g, axis) * soft)

        return _record(y, (x,), bwd)
    raise _shape_err(f"log_sum_exp(axis={axis})", x.shape)


def softmax(x: Tensor) -> Tensor:
    """Softmax over a vector, max-shifted for stability."""
    if x.ndim != 1:
        raise _shape_err("softmax", x.shape)
    z = x.data - np.max(x.data)
    e = np.exp(z)
    y = e / e.sum()

    def bwd(g):
        _acc(x, y * (g - np.dot(g, y)))

    return _record(y, (x,), bwd)


# ---------------------------------------------------------------------------
# LSTM cell
# ---------------------------------------------------------------------------

def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, w: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step with the standard gate equations.

    ``w`` has shape (input+hidden, 4*hidden) with gate blocks ordered
    [input, forget, cell, output]; ``b`` has shape (4*hidden,). Inputs are
    vectors, or matrices with one independent sequence per row.
    """
    hidden = h_prev.shape[-1]
    if w.shape != (x.shape[-1] + hidden, 4 * hidden) or b.shape != (4 * hidden,):
        raise _shape_err("lstm_cell", x.shape, h_prev.shape, w.shape, b.shape)
    z = add(matmul(concat([x, h_prev]), w), b)
    i = sigmoid(narrow(z, 0, hidden))
    f = sigmoid(narrow(z, hidden, 2 * hidden))
    g = tanh(narrow(z, 2 * hidden, 3 * hidden))
    o = sigmoid(narrow(z, 3 * hidden, 4 * hidden))
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


def lstm_run(xs: Sequence[Tensor], w: Tensor, b: Tensor, hidden: int, reverse: bool = False) -> list[Tensor]:
    """Run an LSTM over a sequence, returning the hidden state at each step."""
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    lead = xs[0].shape[:-1]
    h = Tensor(np.zeros(lead + (hidden,)))
    c = Tensor(np.zeros(lead + (hidden,)))
    out: list[Tensor | None] = [None] * len(xs)
    for t in order:
        h, c = lstm_cell(xs[t], h, c, w, b)
        out[t] = h
    return out  # type: ignore[return-value]
