"""Minimal reverse-mode autodiff on float64 numpy arrays.

Just enough machinery for the models in this package: dense linear maps,
a GRU cell, embedding lookups with scatter-add backward, and a masked
softmax cross-entropy. Operations record themselves on a Tape; the
backward pass replays the records in reverse order and accumulates
gradients additively at fan-out.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class NonFiniteError(RuntimeError):
    """A value that must stay finite became NaN or Inf."""


class Tensor:
    """A numpy array plus an accumulated gradient slot."""

    __slots__ = ("value", "grad", "name")

    def __init__(self, value, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.value.shape})"


class Tape:
    """Records operations so gradients can be replayed in reverse.

    Recording order is a topological order of the graph, so iterating
    the records backwards visits every node after all of its consumers.
    """

    def __init__(self):
        self._records: list[tuple[tuple[Tensor, ...], Tensor, Callable]] = []

    def __len__(self):
        return len(self._records)

    def record(self, inputs: tuple[Tensor, ...], out: Tensor,
               backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
        self._records.append((inputs, out, backward))
        return out

    def backward(self, out: Tensor) -> None:
        """Seed d(out)/d(out) = 1 and accumulate gradients into every input."""
        out.grad = np.ones_like(out.value)
        for inputs, node, bwd in reversed(self._records):
            if node.grad is None:
                continue
            for tensor, g in zip(inputs, bwd(node.grad)):
                if g is not None:
                    tensor.accumulate(g)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitive ops


def constant(value) -> Tensor:
    return Tensor(value)


def matmul(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value @ b.value)
    av, bv = a.value, b.value

    def bwd(g):
        return g @ bv.T, av.T @ g

    return tape.record((a, b), out, bwd)


def add(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value + b.value)
    ash, bsh = a.value.shape, b.value.shape

    def bwd(g):
        return _unbroadcast(g, ash), _unbroadcast(g, bsh)

    return tape.record((a, b), out, bwd)


def sub(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value - b.value)
    ash, bsh = a.value.shape, b.value.shape

    def bwd(g):
        return _unbroadcast(g, ash), _unbroadcast(-g, bsh)

    return tape.record((a, b), out, bwd)


def mul(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value * b.value)
    av, bv = a.value, b.value

    def bwd(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return tape.record((a, b), out, bwd)


def scale(tape: Tape, a: Tensor, c: float) -> Tensor:
    out = Tensor(a.value * c)

    def bwd(g):
        return (g * c,)

    return tape.record((a,), out, bwd)


def sigmoid(tape: Tape, a: Tensor) -> Tensor:
    # stable in both tails
    v = a.value
    s = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                 np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    out = Tensor(s)

    def bwd(g):
        return (g * s * (1.0 - s),)

    return tape.record((a,), out, bwd)


def tanh(tape: Tape, a: Tensor) -> Tensor:
    t = np.tanh(a.value)
    out = Tensor(t)

    def bwd(g):
        return (g * (1.0 - t * t),)

    return tape.record((a,), out, bwd)


def concat(tape: Tape, parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors along axis 1."""
    out = Tensor(np.concatenate([p.value for p in parts], axis=1))
    widths = [p.value.shape[1] for p in parts]

    def bwd(g):
        grads, off = [], 0
        for w in widths:
            grads.append(g[:, off:off + w])
            off += w
        return grads

    return tape.record(tuple(parts), out, bwd)


def embedding(tape: Tape, table: Tensor, indices: np.ndarray) -> Tensor:
    """Row lookup; backward scatter-adds into the looked-up rows only."""
    idx = np.asarray(indices)
    rows = table.value.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= rows):
        bad = sorted(set(int(i) for i in idx[(idx < 0) | (idx >= rows)]))
        raise IndexError(f"embedding indices out of range [0, {rows}): {bad}")
    out = Tensor(table.value[idx])

    def bwd(g):
        gt = np.zeros_like(table.value)
        np.add.at(gt, idx, g)
        return (gt,)

    return tape.record((table,), out, bwd)


def dropout(tape: Tape, a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only during training (identity when rate == 0)."""
    if rate <= 0.0:
        return a
    keep = 1.0 - rate
    mask = (rng.random(a.value.shape) < keep) / keep
    out = Tensor(a.value * mask)

    def bwd(g):
        return (g * mask,)

    return tape.record((a,), out, bwd)


def linear(tape: Tape, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """scores = x @ w + b with x (B, n), w (n, m), b (m,)."""
    if x.value.shape[-1] != w.value.shape[0]:
        raise ValueError(f"linear: x has {x.value.shape[-1]} features, w expects {w.value.shape[0]}")
    return add(tape, matmul(tape, x, w), b)


def masked_softmax_xent(tape: Tape, scores: Tensor, targets: np.ndarray,
                        masked: np.ndarray | None = None,
                        reduction: str = "mean") -> Tensor:
    """Cross-entropy -log softmax(scores)[target] per row, masked rows excluded.

    `masked` marks rows that contribute 0 to both the loss and the gradient.
    reduction "mean" divides by the number of unmasked rows only (0 if none);
    "sum" returns the plain sum over unmasked rows.
    """
    v = scores.value
    n_rows, n_items = v.shape
    if n_items < 2:
        raise ValueError("need at least 2 items to score")
    tgt = np.asarray(targets)
    if tgt.min() < 0 or tgt.max() >= n_items:
        raise IndexError("target index out of range")
    valid = np.ones(n_rows, dtype=bool) if masked is None else ~np.asarray(masked, dtype=bool)
    count = int(valid.sum())

    shifted = v - v.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    nll = logz - shifted[np.arange(n_rows), tgt]
    total = float(nll[valid].sum())
    denom = max(count, 1) if reduction == "mean" else 1
    out = Tensor(total / denom)

    def bwd(g):
        probs = np.exp(shifted - logz[:, None])
        probs[np.arange(n_rows), tgt] -= 1.0
        probs[~valid] = 0.0
        return (probs * (g / denom),)

    return tape.record((scores,), out, bwd)


# ---------------------------------------------------------------------------
# GRU cell


@dataclass
class GRUWeights:
    """One GRU cell: r = σ(x·w_r + h·u_r + b_r), z likewise,
    c = tanh(x·w_c + (r∘h)·u_c + b_c), h' = (1−z)∘h + z∘c.

    The update gate z gates the candidate; this convention is fixed so
    that checkpoints are unambiguous.
    """

    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_c: Tensor
    u_c: Tensor
    b_c: Tensor

    def tensors(self) -> list[Tensor]:
        return [self.w_r, self.u_r, self.b_r, self.w_z, self.u_z, self.b_z,
                self.w_c, self.u_c, self.b_c]


def gru_cell(tape: Tape, x: Tensor, h_prev: Tensor, w: GRUWeights,
             update_mask: Tensor | None = None) -> Tensor:
    """One GRU step on a batch; x (B, n), h_prev (B, h) -> (B, h).

    With `update_mask` (B, 1) of 0/1 values, rows with 0 keep h_prev
    unchanged (and receive no gradient through this step's candidate).
    """
    if x.value.shape[1] != w.w_r.value.shape[0]:
        raise ValueError(f"gru_cell: input width {x.value.shape[1]} != {w.w_r.value.shape[0]}")
    if h_prev.value.shape[1] != w.u_r.value.shape[0]:
        raise ValueError("gru_cell: hidden width mismatch")
    r = sigmoid(tape, add(tape, add(tape, matmul(tape, x, w.w_r), matmul(tape, h_prev, w.u_r)), w.b_r))
    z = sigmoid(tape, add(tape, add(tape, matmul(tape, x, w.w_z), matmul(tape, h_prev, w.u_z)), w.b_z))
    rh = mul(tape, r, h_prev)
    c = tanh(tape, add(tape, add(tape, matmul(tape, x, w.w_c), matmul(tape, rh, w.u_c)), w.b_c))
    # h' = h + z*(c - h)  ==  (1-z)*h + z*c
    h_new = add(tape, h_prev, mul(tape, z, sub(tape, c, h_prev)))
    if update_mask is not None:
        h_new = add(tape, h_prev, mul(tape, update_mask, sub(tape, h_new, h_prev)))
    return h_new


def gru_cell_np(x: np.ndarray, h_prev: np.ndarray, w: GRUWeights) -> np.ndarray:
    """Tape-free GRU step for inference; same formula as gru_cell."""
    r = _sigmoid_np(x @ w.w_r.value + h_prev @ w.u_r.value + w.b_r.value)
    z = _sigmoid_np(x @ w.w_z.value + h_prev @ w.u_z.value + w.b_z.value)
    c = np.tanh(x @ w.w_c.value + (r * h_prev) @ w.u_c.value + w.b_c.value)
    return (1.0 - z) * h_prev + z * c


def _sigmoid_np(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# ---------------------------------------------------------------------------
# gradient checking

def fd_gradient(f: Callable[[], float], arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f() w.r.t. every entry of arr.

    Perturbs arr in place and restores it; f must re-read arr each call.
    """
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = arr[i]
        arr[i] = orig + eps
        fp = f()
        arr[i] = orig - eps
        fm = f()
        arr[i] = orig
        g[i] = (fp - fm) / (2.0 * eps)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a-b| / max(1, |a|, |b|), elementwise then reduced."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {name}")
