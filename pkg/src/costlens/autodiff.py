"""Reverse-mode differentiation over dense float64 vectors and matrices.

Computations are recorded define-by-run on a :class:`Tape`; a tape is built
per forward pass and discarded afterwards. The backward pass walks the tape
in reverse recorded order (a valid reverse topological order) exactly once.

Supported primitives are deliberately few: enough to express small MLPs,
bottom-up message passing, masking, and the scalar losses used for training
and mask optimization. No broadcasting beyond what is documented per op.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, NumericalError

__all__ = [
    "Tensor",
    "Tape",
    "GradientMap",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "absolute",
    "mean_rows",
    "concat",
    "scale_rows",
    "AdamState",
    "adam_step",
]


def _as_f64(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim not in (1, 2):
        raise DimensionError(f"tensors are 1-D or 2-D, got ndim={arr.ndim}")
    return arr


@dataclass
class _Node:
    op: str
    parents: tuple[int, ...]
    value: np.ndarray
    ctx: tuple
    needs_grad: bool


class Tensor:
    """Handle to a value recorded on a tape.

    `data` is a dense float64 array; `shape` mirrors `data.shape`.
    """

    __slots__ = ("data", "tape", "index", "requires_grad")

    def __init__(self, data: np.ndarray, tape: "Tape", index: int, requires_grad: bool):
        self.data = data
        self.tape = tape
        self.index = index
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.tape._nodes[self.index].op!r})"


class Tape:
    """Ordered record of primitive operations forming one computation."""

    def __init__(self):
        self._nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, op: str, parents: tuple[Tensor, ...], value: np.ndarray, ctx: tuple = ()) -> Tensor:
        for p in parents:
            if p.tape is not self:
                raise ContractError("operands recorded on different tapes")
        needs = any(self._nodes[p.index].needs_grad for p in parents)
        self._nodes.append(_Node(op, tuple(p.index for p in parents), value, ctx, needs))
        return Tensor(value, self, len(self._nodes) - 1, needs)

    def leaf(self, data, requires_grad: bool = True) -> Tensor:
        arr = _as_f64(data)
        self._nodes.append(_Node("leaf", (), arr, (), requires_grad))
        return Tensor(arr, self, len(self._nodes) - 1, requires_grad)

    def constant(self, data) -> Tensor:
        return self.leaf(data, requires_grad=False)


class GradientMap:
    """Per-leaf gradients produced by :func:`backward`."""

    def __init__(self, tape: Tape, grads: list):
        self._tape = tape
        self._grads = grads

    def __getitem__(self, t: Tensor) -> np.ndarray:
        if t.tape is not self._tape:
            raise ContractError("tensor belongs to a different tape")
        g = self._grads[t.index]
        if g is None:
            return np.zeros_like(t.data)
        return g


# ---------------------------------------------------------------------------
# Forward primitives
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    return a.tape._record("matmul", (a, b), a.data @ b.data)


def add(a: Tensor, b: Tensor) -> Tensor:
    # Same shape, or b a single row broadcast over a's rows (bias add).
    if a.shape == b.shape:
        bias_row = False
    elif a.data.ndim == 2 and b.data.ndim == 2 and b.shape == (1, a.shape[1]):
        bias_row = True
    else:
        raise DimensionError(f"add: {a.shape} + {b.shape}")
    return a.tape._record("add", (a, b), a.data + b.data, (bias_row,))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"sub: {a.shape} - {b.shape}")
    return a.tape._record("sub", (a, b), a.data - b.data)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mul: {a.shape} * {b.shape}")
    return a.tape._record("mul", (a, b), a.data * b.data)


def relu(x: Tensor) -> Tensor:
    return x.tape._record("relu", (x,), np.maximum(x.data, 0.0))


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))
    return x.tape._record("sigmoid", (x,), out)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    if not np.all(np.isfinite(out)):
        raise NumericalError("exp overflow")
    return x.tape._record("exp", (x,), out)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise NumericalError("log of non-positive value")
    return x.tape._record("log", (x,), np.log(x.data))


def absolute(x: Tensor) -> Tensor:
    return x.tape._record("abs", (x,), np.abs(x.data))


def mean_rows(x: Tensor) -> Tensor:
    """Mean over rows: [n, d] -> [1, d]. A 1-D [n] input yields shape [1, 1]."""
    data = x.data if x.data.ndim == 2 else x.data.reshape(-1, 1)
    out = data.mean(axis=0, keepdims=True)
    return x.tape._record("mean_rows", (x,), out)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise DimensionError("concat of zero tensors")
    if axis not in (0, 1):
        raise DimensionError(f"concat axis must be 0 or 1, got {axis}")
    datas = [p.data for p in parts]
    if any(d.ndim != 2 for d in datas):
        raise DimensionError("concat expects 2-D tensors")
    other = 1 - axis
    if len({d.shape[other] for d in datas}) != 1:
        raise DimensionError("concat: mismatched shapes " + str([d.shape for d in datas]))
    sizes = tuple(d.shape[axis] for d in datas)
    return parts[0].tape._record("concat", tuple(parts), np.concatenate(datas, axis=axis), (axis, sizes))


def scale_rows(x: Tensor, factors: Tensor) -> Tensor:
    """Multiply each row of `x` by the matching entry of `factors`.

    This primitive implements mask application: factor 0 zeroes a row
    (hidden state nulled) while the row keeps its place in the graph.
    """
    if x.data.ndim != 2:
        raise DimensionError(f"scale_rows expects a matrix, got {x.shape}")
    f = factors.data.reshape(-1)
    if f.shape[0] != x.shape[0]:
        raise DimensionError(f"scale_rows: {x.shape[0]} rows vs {f.shape[0]} factors")
    return x.tape._record("scale_rows", (x, factors), x.data * f[:, None])


# ---------------------------------------------------------------------------
# Backward
# ---------------------------------------------------------------------------


def backward(tape: Tape, output: Tensor, mode: str = "standard") -> GradientMap:
    """Reverse-mode gradients of the scalar `output` w.r.t. every leaf.

    `mode="guided"` swaps the rectifier backward rule: negative upstream
    gradients are clamped to zero before the rectifier's own gating is
    applied. All other primitives are untouched.
    """
    if output.tape is not tape:
        raise ContractError("output recorded on a different tape")
    if output.data.size != 1:
        raise ContractError(f"backward output must be scalar, got shape {output.shape}")
    if mode not in ("standard", "guided"):
        raise ContractError(f"unknown backward mode {mode!r}")
    guided = mode == "guided"

    nodes = tape._nodes
    grads: list = [None] * len(nodes)
    grads[output.index] = np.ones_like(output.data)

    def acc(parent_idx: int, contrib: np.ndarray) -> None:
        if not nodes[parent_idx].needs_grad:
            return
        cur = grads[parent_idx]
        # Never accumulate in place: a first contribution may alias the
        # consumer's own gradient buffer.
        grads[parent_idx] = contrib if cur is None else cur + contrib

    for i in range(output.index, -1, -1):
        node = nodes[i]
        g = grads[i]
        if g is None or node.op == "leaf" or not node.needs_grad:
            continue
        if guided and node.op == "relu":
            g = np.maximum(g, 0.0)

        op = node.op
        if op == "matmul":
            ia, ib = node.parents
            if nodes[ia].needs_grad:
                acc(ia, g @ nodes[ib].value.T)
            if nodes[ib].needs_grad:
                acc(ib, nodes[ia].value.T @ g)
        elif op == "add":
            ia, ib = node.parents
            acc(ia, g)
            acc(ib, g.sum(axis=0, keepdims=True) if node.ctx[0] else g)
        elif op == "sub":
            ia, ib = node.parents
            acc(ia, g)
            acc(ib, -g)
        elif op == "mul":
            ia, ib = node.parents
            acc(ia, g * nodes[ib].value)
            acc(ib, g * nodes[ia].value)
        elif op == "relu":
            # Subgradient at exactly 0 is defined as 0.
            acc(node.parents[0], g * (nodes[node.parents[0]].value > 0.0))
        elif op == "sigmoid":
            s = node.value
            acc(node.parents[0], g * s * (1.0 - s))
        elif op == "exp":
            acc(node.parents[0], g * node.value)
        elif op == "log":
            acc(node.parents[0], g / nodes[node.parents[0]].value)
        elif op == "abs":
            acc(node.parents[0], g * np.sign(nodes[node.parents[0]].value))
        elif op == "mean_rows":
            parent = nodes[node.parents[0]]
            n = parent.value.shape[0]
            spread = np.broadcast_to(g / n, (n, g.shape[1])).copy()
            acc(node.parents[0], spread if parent.value.ndim == 2 else spread.reshape(parent.value.shape))
        elif op == "concat":
            axis, sizes = node.ctx
            offset = 0
            for pi, size in zip(node.parents, sizes):
                if axis == 0:
                    acc(pi, g[offset : offset + size, :].copy())
                else:
                    acc(pi, g[:, offset : offset + size].copy())
                offset += size
        elif op == "scale_rows":
            ix, ifac = node.parents
            f = nodes[ifac].value.reshape(-1)
            acc(ix, g * f[:, None])
            if nodes[ifac].needs_grad:
                acc(ifac, (g * nodes[ix].value).sum(axis=1).reshape(nodes[ifac].value.shape))
        else:  # pragma: no cover
            raise ContractError(f"no backward rule for op {op!r}")
        grads[i] = None  # interior gradient fully consumed

    return GradientMap(tape, grads)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment estimates, one pair per parameter array."""

    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState | None,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One Adam update, applied to `params` in place. Returns the new state."""
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} params vs {len(grads)} grads")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionError(f"param shape {p.shape} vs grad shape {g.shape}")
    if state is None:
        state = AdamState(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])
    state.step += 1
    t = state.step
    bias1 = 1.0 - beta1**t
    bias2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
    return state
