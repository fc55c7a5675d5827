"""Reverse-mode automatic differentiation on a flat tape.

Node values are float64 scalars or 1-D float64 arrays (a "particle axis").
Binary elementwise primitives broadcast scalar against vector; the adjoint
of a scalar input is summed over the broadcast axis. Two structural
primitives, ``seg_sum`` and ``seg_repeat``, reduce/expand between a packed
vector of equal-length contiguous segments and one value per segment; they
are what lets a batch of independent particle systems share one tape.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Value = float | np.ndarray

# Opcodes. Inputs of every node have smaller ids, so a single reverse sweep
# over the node list is a valid reverse-topological order.
_CONST = 0
_ADD = 1
_SUB = 2
_MUL = 3
_DIV = 4
_NEG = 5
_EXP = 6
_LN = 7
_TANH = 8
_SQRT = 9
_ABS = 10
_SQUARE = 11
_SUM = 12
_SEG_SUM = 13
_SEG_REPEAT = 14
_PERMUTE = 15
_NARROW = 16
_CONCAT = 17
_TILE = 18

_OP_NAMES = {
    "const": _CONST, "add": _ADD, "sub": _SUB, "mul": _MUL, "div": _DIV,
    "neg": _NEG, "exp": _EXP, "ln": _LN, "tanh": _TANH, "sqrt": _SQRT,
    "abs": _ABS, "square": _SQUARE, "sum": _SUM,
}


class DomainError(ValueError):
    """Raised when ln/sqrt is applied to a non-positive value."""


class TapeError(RuntimeError):
    """Tape contract violation (foreign Var, reused tape, non-scalar root)."""


class Var:
    """Handle to one tape node: the node id plus its forward value."""

    __slots__ = ("tape", "id", "value")

    def __init__(self, tape: "Tape", node_id: int, value: Value):
        self.tape = tape
        self.id = node_id
        self.value = value

    # Operator sugar; plain numbers are wrapped as constants.
    def __add__(self, other):
        return self.tape.add(self, self.tape.lift(other))

    def __radd__(self, other):
        return self.tape.add(self.tape.lift(other), self)

    def __sub__(self, other):
        return self.tape.sub(self, self.tape.lift(other))

    def __rsub__(self, other):
        return self.tape.sub(self.tape.lift(other), self)

    def __mul__(self, other):
        return self.tape.mul(self, self.tape.lift(other))

    def __rmul__(self, other):
        return self.tape.mul(self.tape.lift(other), self)

    def __truediv__(self, other):
        return self.tape.div(self, self.tape.lift(other))

    def __rtruediv__(self, other):
        return self.tape.div(self.tape.lift(other), self)

    def __neg__(self):
        return self.tape.neg(self)

    def __repr__(self):
        return f"Var(id={self.id}, value={self.value!r})"


class Gradient:
    """Adjoints of the requested leaves: map node id -> d(root)/d(leaf).

    Every requested leaf has an entry; leaves the root does not depend on
    get adjoint 0 (scalar) or a zero array (vector leaf).
    """

    __slots__ = ("adjoints",)

    def __init__(self, adjoints: dict[int, Value]):
        self.adjoints = adjoints

    def wrt(self, leaf: Var) -> Value:
        return self.adjoints[leaf.id]


def _as_value(x) -> Value:
    if isinstance(x, (float, int)):
        return float(x)
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        return float(arr)
    if arr.ndim != 1:
        raise ValueError(f"tape values must be scalars or 1-D arrays, got shape {arr.shape}")
    return arr


class Tape:
    """Append-only record of primitive operations.

    Single-writer; one backward pass per instance (a second call raises).
    """

    __slots__ = ("_ops", "_args", "_vals", "_spent")

    def __init__(self):
        self._ops: list[int] = []
        self._args: list[tuple] = []
        self._vals: list[Value] = []
        self._spent = False

    def __len__(self) -> int:
        return len(self._ops)

    def _push(self, op: int, args: tuple, value: Value) -> Var:
        node_id = len(self._ops)
        self._ops.append(op)
        self._args.append(args)
        self._vals.append(value)
        return Var(self, node_id, value)

    def _own(self, v: Var) -> None:
        if v.tape is not self:
            raise TapeError("Var belongs to a different tape")

    # -- leaves -----------------------------------------------------------

    def leaf(self, value) -> Var:
        """Input node: a differentiation target or detached data."""
        return self._push(_CONST, (), _as_value(value))

    # Detached data and differentiation targets are mechanically identical;
    # the distinction is which nodes are passed to backward() as leaves.
    const = leaf

    def lift(self, x) -> Var:
        """Return x unchanged if it is a Var on this tape, else const(x)."""
        if isinstance(x, Var):
            self._own(x)
            return x
        return self._push(_CONST, (), _as_value(x))

    # -- elementwise primitives -------------------------------------------

    def add(self, a: Var, b: Var) -> Var:
        self._own(a)
        self._own(b)
        return self._push(_ADD, (a.id, b.id), a.value + b.value)

    def sub(self, a: Var, b: Var) -> Var:
        self._own(a)
        self._own(b)
        return self._push(_SUB, (a.id, b.id), a.value - b.value)

    def mul(self, a: Var, b: Var) -> Var:
        self._own(a)
        self._own(b)
        return self._push(_MUL, (a.id, b.id), a.value * b.value)

    def div(self, a: Var, b: Var) -> Var:
        self._own(a)
        self._own(b)
        return self._push(_DIV, (a.id, b.id), a.value / b.value)

    def neg(self, a: Var) -> Var:
        self._own(a)
        return self._push(_NEG, (a.id,), -a.value)

    def exp(self, a: Var) -> Var:
        self._own(a)
        v = np.exp(a.value) if isinstance(a.value, np.ndarray) else float(np.exp(a.value))
        return self._push(_EXP, (a.id,), v)

    def ln(self, a: Var) -> Var:
        self._own(a)
        if np.any(np.asarray(a.value) <= 0.0):
            raise DomainError("ln of non-positive value")
        v = np.log(a.value) if isinstance(a.value, np.ndarray) else float(np.log(a.value))
        return self._push(_LN, (a.id,), v)

    def tanh(self, a: Var) -> Var:
        self._own(a)
        v = np.tanh(a.value) if isinstance(a.value, np.ndarray) else float(np.tanh(a.value))
        return self._push(_TANH, (a.id,), v)

    def sqrt(self, a: Var) -> Var:
        self._own(a)
        if np.any(np.asarray(a.value) <= 0.0):
            raise DomainError("sqrt of non-positive value")
        v = np.sqrt(a.value) if isinstance(a.value, np.ndarray) else float(np.sqrt(a.value))
        return self._push(_SQRT, (a.id,), v)

    def abs(self, a: Var) -> Var:
        self._own(a)
        v = np.abs(a.value) if isinstance(a.value, np.ndarray) else abs(a.value)
        return self._push(_ABS, (a.id,), v)

    def square(self, a: Var) -> Var:
        self._own(a)
        return self._push(_SQUARE, (a.id,), a.value * a.value)

    # -- reductions / structural ops --------------------------------------

    def sum(self, a: Var) -> Var:
        """Full reduction of a vector (or scalar identity) to a scalar."""
        self._own(a)
        v = float(np.sum(a.value)) if isinstance(a.value, np.ndarray) else a.value
        return self._push(_SUM, (a.id,), v)

    def seg_sum(self, a: Var, n_segments: int) -> Var:
        """Per-segment sums of a packed vector of n_segments equal blocks."""
        self._own(a)
        v = a.value
        if not isinstance(v, np.ndarray) or len(v) % n_segments != 0:
            raise ValueError("seg_sum needs a vector divisible into n_segments")
        seg_len = len(v) // n_segments
        return self._push(_SEG_SUM, (a.id, n_segments, seg_len), v.reshape(n_segments, seg_len).sum(axis=1))

    def seg_repeat(self, a: Var, reps: int) -> Var:
        """Expand one value per segment back to a packed vector.

        A scalar input counts as one segment and expands to ``reps`` copies.
        """
        self._own(a)
        n_seg = len(a.value) if isinstance(a.value, np.ndarray) else 1
        return self._push(_SEG_REPEAT, (a.id, n_seg, reps), np.repeat(a.value, reps))

    def permute(self, a: Var, perm: np.ndarray) -> Var:
        """Reorder a vector by a permutation of its indices."""
        self._own(a)
        if not isinstance(a.value, np.ndarray) or len(perm) != len(a.value):
            raise ValueError("permute needs a full index permutation")
        return self._push(_PERMUTE, (a.id, perm), a.value[perm])

    def narrow(self, a: Var, start: int, length: int) -> Var:
        """Contiguous sub-vector a[start:start+length]."""
        self._own(a)
        if not isinstance(a.value, np.ndarray) or start < 0 or start + length > len(a.value):
            raise ValueError("narrow bounds out of range")
        return self._push(_NARROW, (a.id, start, length, len(a.value)),
                          a.value[start:start + length].copy())

    def concat(self, parts: Sequence[Var]) -> Var:
        """Concatenate vectors; the adjoint splits back by the same offsets."""
        sizes = []
        for p in parts:
            self._own(p)
            if not isinstance(p.value, np.ndarray):
                raise ValueError("concat needs vector inputs")
            sizes.append(len(p.value))
        value = np.concatenate([p.value for p in parts]) if parts else np.empty(0)
        return self._push(_CONCAT, (tuple(p.id for p in parts), tuple(sizes)), value)

    def tile(self, a: Var, reps: int) -> Var:
        """Repeat a whole vector ``reps`` times (adjoint sums the copies)."""
        self._own(a)
        if not isinstance(a.value, np.ndarray):
            raise ValueError("tile needs a vector input")
        return self._push(_TILE, (a.id, len(a.value), reps), np.tile(a.value, reps))

    # -- generic recording surface ----------------------------------------

    def record(self, op: str, inputs: Sequence[Var]) -> Var:
        """Record a named primitive; dispatches to the typed methods."""
        code = _OP_NAMES.get(op)
        if code is None:
            raise ValueError(f"unknown primitive {op!r}")
        if code == _CONST:
            raise ValueError("record const values via tape.const(value)")
        fns = {
            _ADD: self.add, _SUB: self.sub, _MUL: self.mul, _DIV: self.div,
            _NEG: self.neg, _EXP: self.exp, _LN: self.ln, _TANH: self.tanh,
            _SQRT: self.sqrt, _ABS: self.abs, _SQUARE: self.square, _SUM: self.sum,
        }
        return fns[code](*inputs)

    # -- reverse sweep ------------------------------------------------------

    def backward(self, root: Var, leaves: Sequence[Var]) -> Gradient:
        """Reverse-accumulate d(root)/d(leaf) for every requested leaf."""
        if self._spent:
            raise TapeError("tape already consumed by a backward pass")
        self._spent = True
        self._own(root)
        if not isinstance(root.value, float):
            raise TapeError("backward root must be a scalar node")
        for lf in leaves:
            self._own(lf)
        leaf_ids = {lf.id for lf in leaves}

        ops = self._ops
        args = self._args
        vals = self._vals
        adj: list = [None] * (root.id + 1)
        adj[root.id] = 1.0
        collected: dict[int, Value] = {}

        def acc(j: int, contrib) -> None:
            if type(vals[j]) is float and type(contrib) is not float:
                contrib = float(contrib.sum())
            cur = adj[j]
            adj[j] = contrib if cur is None else cur + contrib

        for i in range(root.id, -1, -1):
            a = adj[i]
            adj[i] = None
            if a is None:
                continue
            op = ops[i]
            if op == _CONST:
                if i in leaf_ids:
                    collected[i] = a
                continue
            arg = args[i]
            if op == _MUL:
                ia, ib = arg
                acc(ia, a * vals[ib])
                acc(ib, a * vals[ia])
            elif op == _ADD:
                ia, ib = arg
                acc(ia, a)
                acc(ib, a)
            elif op == _SUB:
                ia, ib = arg
                acc(ia, a)
                acc(ib, -a)
            elif op == _TANH:
                out = vals[i]
                acc(arg[0], a * (1.0 - out * out))
            elif op == _EXP:
                acc(arg[0], a * vals[i])
            elif op == _DIV:
                ia, ib = arg
                acc(ia, a / vals[ib])
                acc(ib, -a * vals[i] / vals[ib])
            elif op == _NEG:
                acc(arg[0], -a)
            elif op == _SQUARE:
                acc(arg[0], 2.0 * a * vals[arg[0]])
            elif op == _LN:
                acc(arg[0], a / vals[arg[0]])
            elif op == _SQRT:
                acc(arg[0], a * 0.5 / vals[i])
            elif op == _ABS:
                va = vals[arg[0]]
                if type(va) is float:
                    # Subgradient 0 exactly at 0.
                    acc(arg[0], a if va > 0.0 else (-a if va < 0.0 else 0.0))
                else:
                    acc(arg[0], a * np.sign(va))
            elif op == _SUM:
                # Scalar adjoint broadcasts over the summed vector.
                acc(arg[0], a)
            elif op == _SEG_SUM:
                ia, n_seg, seg_len = arg
                acc(ia, a if type(a) is float else np.repeat(a, seg_len))
            elif op == _SEG_REPEAT:
                ia, n_seg, reps = arg
                if type(a) is float:
                    acc(ia, a * reps)
                else:
                    acc(ia, a.reshape(n_seg, reps).sum(axis=1))
            elif op == _PERMUTE:
                ia, perm = arg
                if type(a) is float:
                    acc(ia, a)  # uniform adjoint is permutation-invariant
                else:
                    contrib = np.empty(len(perm))
                    contrib[perm] = a
                    acc(ia, contrib)
            elif op == _NARROW:
                ia, start, length, n_full = arg
                contrib = np.zeros(n_full)
                contrib[start:start + length] = a
                acc(ia, contrib)
            elif op == _CONCAT:
                ids, sizes = arg
                off = 0
                for j, size in zip(ids, sizes):
                    acc(j, a if type(a) is float else a[off:off + size])
                    off += size
            elif op == _TILE:
                ia, size, reps = arg
                if type(a) is float:
                    acc(ia, a * reps)
                else:
                    acc(ia, a.reshape(reps, size).sum(axis=0))
            else:  # pragma: no cover - exhaustive opcode list
                raise AssertionError(f"unhandled opcode {op}")

        out: dict[int, Value] = {}
        for lf in leaves:
            g = collected.get(lf.id)
            if g is None:
                g = 0.0 if type(lf.value) is float else np.zeros_like(lf.value)
            elif type(lf.value) is not float and type(g) is float:
                g = np.full(lf.value.shape, g)
            out[lf.id] = g
        return Gradient(out)


def finite_diff_check(
    build: Callable[[np.ndarray], tuple[Tape, Var, Sequence[Var]]],
    point: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Compare reverse-mode gradients against central finite differences.

    ``build(point)`` must construct a fresh tape, evaluate the scalar of
    interest at ``point`` and return ``(tape, root, leaves)``; the leaves'
    flattened sizes must cover the coordinates of ``point`` in order.
    Returns max_k |analytic_k - fd_k| / max(1, |analytic_k|).
    """
    point = np.asarray(point, dtype=np.float64)
    tape, root, leaves = build(point)
    grad = tape.backward(root, leaves)
    analytic = np.concatenate([np.atleast_1d(grad.wrt(lf)) for lf in leaves])
    if len(analytic) != len(point):
        raise ValueError("leaf sizes must cover the point coordinates")

    worst = 0.0
    for k in range(len(point)):
        hi = point.copy()
        hi[k] += step
        lo = point.copy()
        lo[k] -= step
        f_hi = build(hi)[1].value
        f_lo = build(lo)[1].value
        fd = (f_hi - f_lo) / (2.0 * step)
        err = abs(analytic[k] - fd) / max(1.0, abs(analytic[k]))
        if err > worst:
            worst = err
    return worst
