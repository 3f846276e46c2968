"""Dense float32 kernel with hand-written forward/backward passes.

Values are float32 everywhere; matrix products and loss reductions
accumulate in float64 and round to float32 exactly once on the way out.
That policy keeps repeated single-threaded runs bit-identical and makes
weight merge/unmerge arithmetic reproducible.

There is no general autodiff tape. The synthesizer needs a small, fixed
set of ops, so each op records a `Node` carrying its own backward closure;
`backward()` replays the recorded graph in reverse topological order.
Gradients accumulate only on `Param`s whose `trainable` flag is set --
frozen parameters keep an exactly-zero grad buffer.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NumericError, ShapeError, StateError

F32 = np.float32
F64 = np.float64


class Param:
    """A weight tensor with a gradient buffer and a trainable flag."""

    __slots__ = ("value", "grad", "trainable")

    def __init__(self, value, trainable: bool = True):
        self.value = np.ascontiguousarray(value, dtype=F32)
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable

    @property
    def shape(self):
        return self.value.shape

    def numel(self) -> int:
        return int(self.value.size)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        flag = "" if self.trainable else ", frozen"
        return f"Param(shape={tuple(self.shape)}{flag})"


class Node:
    """One recorded value in a forward graph.

    `value` is the forward result (float32 array, or a python float for
    scalar losses). `backprop(grad)` pushes `grad` into the node's parents
    and into any attached Param.
    """

    __slots__ = ("value", "grad", "parents", "backprop")

    def __init__(self, value, parents=(), backprop: Callable | None = None):
        self.value = value
        self.grad = None
        self.parents: tuple = parents
        self.backprop = backprop

    @property
    def shape(self):
        return np.shape(self.value)


def constant(value) -> Node:
    """Wrap an array as a leaf that receives no gradient."""
    return Node(np.ascontiguousarray(value, dtype=F32))


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _param_leaf(p: Param) -> Node:
    def bp(g):
        if p.trainable:
            p.grad += np.asarray(g, dtype=F32)

    return Node(p.value, (), bp)


def _accum(node: Node, g) -> None:
    node.grad = g if node.grad is None else node.grad + g


def _mm64(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a.astype(F64) @ b.astype(F64)


def backward(loss: Node, grad=None) -> None:
    """Accumulate d(loss)/d(param) onto every trainable Param in the graph.

    `grad` seeds the output gradient (defaults to 1.0 for scalars, ones for
    arrays). Raises StateError when `loss` has no recorded computation.
    """
    if loss.backprop is None and not loss.parents:
        raise StateError("backward called without a recorded forward pass")

    topo: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    if grad is None:
        grad = 1.0 if np.isscalar(loss.value) else np.ones_like(loss.value)
    loss.grad = grad
    for node in reversed(topo):
        if node.grad is not None and node.backprop is not None:
            node.backprop(node.grad)


# ---------------------------------------------------------------------------
# array-level primitive
# ---------------------------------------------------------------------------


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product, f64 accumulation, result rounded to f32."""
    a = np.asarray(a, dtype=F32)
    b = np.asarray(b, dtype=F32)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return _mm64(a, b).astype(F32)


# ---------------------------------------------------------------------------
# recorded ops
# ---------------------------------------------------------------------------


def linear(x, W: Param, b: Param) -> Node:
    """h = x @ W.T + b, row-wise. x: [T, in], W: [out, in], b: [out]."""
    xn = _as_node(x)
    xv = xn.value
    if xv.ndim != 2 or xv.shape[1] != W.shape[1]:
        raise ShapeError(f"linear shape mismatch: x {xv.shape} vs W {W.shape}")
    if b.shape != (W.shape[0],):
        raise ShapeError(f"linear bias shape {b.shape} vs W {W.shape}")
    wleaf = _param_leaf(W)
    bleaf = _param_leaf(b)
    y = (_mm64(xv, W.value.T) + b.value.astype(F64)).astype(F32)

    def bp(g):
        _accum(xn, _mm64(g, W.value).astype(F32))
        if W.trainable:
            wleaf.backprop(_mm64(g.T, xv).astype(F32))
        if b.trainable:
            bleaf.backprop(g.astype(F64).sum(axis=0).astype(F32))

    return Node(y, (xn, wleaf, bleaf), bp)


def matmul_nt(x, A: Param) -> Node:
    """x @ A.T with gradient flow into both x and A (no bias)."""
    xn = _as_node(x)
    xv = xn.value
    if xv.shape[1] != A.shape[1]:
        raise ShapeError(f"matmul_nt shape mismatch: x {xv.shape} vs A {A.shape}")
    aleaf = _param_leaf(A)
    y = _mm64(xv, A.value.T).astype(F32)

    def bp(g):
        _accum(xn, _mm64(g, A.value).astype(F32))
        if A.trainable:
            aleaf.backprop(_mm64(g.T, xv).astype(F32))

    return Node(y, (xn, aleaf), bp)


def im2col(x, k: int) -> Node:
    """Unfold [T, in] into [T, in*k] windows with same-length zero padding.

    Column order is channel-major: entry (c*k + j) is channel c at tap j,
    matching the row-major flattening of an [out, in, k] kernel.
    """
    if k % 2 != 1:
        raise ConfigError(f"kernel size must be odd, got {k}")
    xn = _as_node(x)
    xv = xn.value
    T, cin = xv.shape
    pad = (k - 1) // 2
    xp = np.zeros((T + 2 * pad, cin), dtype=F32)
    xp[pad:pad + T] = xv
    cols = np.stack([xp[j:j + T] for j in range(k)], axis=2)  # [T, in, k]
    cols = np.ascontiguousarray(cols.reshape(T, cin * k))

    def bp(g):
        g3 = g.reshape(T, cin, k)
        gxp = np.zeros((T + 2 * pad, cin), dtype=F32)
        for j in range(k):
            gxp[j:j + T] += g3[:, :, j]
        _accum(xn, gxp[pad:pad + T])

    return Node(cols, (xn,), bp)


def flat_affine(cols, K: Param, b: Param) -> Node:
    """cols @ flat(K).T + b where flat(K) views K as [out, -1]."""
    cn = _as_node(cols)
    cv = cn.value
    kflat = K.value.reshape(K.shape[0], -1)
    if cv.shape[1] != kflat.shape[1]:
        raise ShapeError(f"flat_affine shape mismatch: cols {cv.shape} vs kernel {K.shape}")
    if b.shape != (K.shape[0],):
        raise ShapeError(f"flat_affine bias shape {b.shape} vs kernel {K.shape}")
    kleaf = _param_leaf(K)
    bleaf = _param_leaf(b)
    y = (_mm64(cv, kflat.T) + b.value.astype(F64)).astype(F32)

    def bp(g):
        _accum(cn, _mm64(g, kflat).astype(F32))
        if K.trainable:
            kleaf.backprop(_mm64(g.T, cv).astype(F32).reshape(K.shape))
        if b.trainable:
            bleaf.backprop(g.astype(F64).sum(axis=0).astype(F32))

    return Node(y, (cn, kleaf, bleaf), bp)


def conv1d(x, K: Param, b: Param) -> Node:
    """Same-length 1-D cross-correlation over the time axis.

    x: [T, in], K: [out, in, k] with odd k, b: [out] -> [T, out].
    """
    if K.value.ndim != 3:
        raise ShapeError(f"conv kernel must be [out, in, k], got {K.shape}")
    xn = _as_node(x)
    if xn.value.shape[1] != K.shape[1]:
        raise ShapeError(f"conv1d shape mismatch: x {xn.value.shape} vs K {K.shape}")
    return flat_affine(im2col(xn, K.shape[2]), K, b)


def embedding(E: Param, ids: np.ndarray) -> Node:
    """Row lookup: [T] int ids -> [T, d]."""
    ids = np.asarray(ids, dtype=np.int64)
    eleaf = _param_leaf(E)
    y = E.value[ids].copy()

    def bp(g):
        if E.trainable:
            ge = np.zeros_like(E.value)
            np.add.at(ge, ids, np.asarray(g, dtype=F32))
            eleaf.backprop(ge)

    return Node(y, (eleaf,), bp)


def relu(x) -> Node:
    xn = _as_node(x)
    y = np.maximum(xn.value, F32(0.0))

    def bp(g):
        _accum(xn, g * (xn.value > 0))

    return Node(y, (xn,), bp)


def tanh(x) -> Node:
    xn = _as_node(x)
    y = np.tanh(xn.value)

    def bp(g):
        _accum(xn, g * (1.0 - y * y))

    return Node(y, (xn,), bp)


def softplus(x) -> Node:
    xn = _as_node(x)
    y = np.logaddexp(F32(0.0), xn.value)

    def bp(g):
        # d softplus / dx = sigmoid(x) = (1 + tanh(x/2)) / 2, overflow-free
        sig = 0.5 * (1.0 + np.tanh(0.5 * xn.value))
        _accum(xn, (g * sig).astype(F32))

    return Node(y, (xn,), bp)


def exp(x) -> Node:
    xn = _as_node(x)
    y = np.exp(xn.value)

    def bp(g):
        _accum(xn, g * y)

    return Node(y, (xn,), bp)


def log(x) -> Node:
    xn = _as_node(x)
    y = np.log(xn.value)

    def bp(g):
        _accum(xn, (g / xn.value).astype(F32))

    return Node(y, (xn,), bp)


def clamp(x, lo: float, hi: float) -> Node:
    """Hard clip; gradient passes only strictly inside (lo, hi)."""
    xn = _as_node(x)
    y = np.clip(xn.value, F32(lo), F32(hi))
    mask = (xn.value > lo) & (xn.value < hi)

    def bp(g):
        _accum(xn, g * mask)

    return Node(y, (xn,), bp)


def add(a, b) -> Node:
    an, bn = _as_node(a), _as_node(b)
    if an.value.shape != bn.value.shape:
        raise ShapeError(f"add shape mismatch: {an.value.shape} vs {bn.value.shape}")
    y = an.value + bn.value

    def bp(g):
        _accum(an, g)
        _accum(bn, g)

    return Node(y, (an, bn), bp)


def mul(a, b) -> Node:
    an, bn = _as_node(a), _as_node(b)
    if an.value.shape != bn.value.shape:
        raise ShapeError(f"mul shape mismatch: {an.value.shape} vs {bn.value.shape}")
    y = an.value * bn.value

    def bp(g):
        _accum(an, g * bn.value)
        _accum(bn, g * an.value)

    return Node(y, (an, bn), bp)


def scale(x, c: float) -> Node:
    xn = _as_node(x)
    c32 = F32(c)
    y = xn.value * c32

    def bp(g):
        _accum(xn, g * c32)

    return Node(y, (xn,), bp)


def reshape(x, shape) -> Node:
    xn = _as_node(x)
    y = xn.value.reshape(shape)

    def bp(g):
        _accum(xn, np.asarray(g).reshape(xn.value.shape))

    return Node(y, (xn,), bp)


def cols_slice(x, lo: int, hi: int) -> Node:
    """Column slice [:, lo:hi] with scatter-back gradient."""
    xn = _as_node(x)
    y = np.ascontiguousarray(xn.value[:, lo:hi])

    def bp(g):
        gx = np.zeros_like(xn.value)
        gx[:, lo:hi] = g
        _accum(xn, gx)

    return Node(y, (xn,), bp)


def concat_cols(a, b) -> Node:
    an, bn = _as_node(a), _as_node(b)
    na = an.value.shape[1]
    y = np.concatenate([an.value, bn.value], axis=1)

    def bp(g):
        _accum(an, np.ascontiguousarray(g[:, :na]))
        _accum(bn, np.ascontiguousarray(g[:, na:]))

    return Node(y, (an, bn), bp)


def repeat_rows(x, counts: np.ndarray) -> Node:
    """Row t repeated counts[t] times, order preserved. counts: ints >= 1."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size and counts.min() < 1:
        raise StateError(f"repeat counts must be >= 1, got min {counts.min()}")
    xn = _as_node(x)
    if counts.shape != (xn.value.shape[0],):
        raise ShapeError(f"repeat_rows counts {counts.shape} vs rows {xn.value.shape}")
    y = np.repeat(xn.value, counts, axis=0)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    def bp(g):
        _accum(xn, np.add.reduceat(np.asarray(g, dtype=F32), starts, axis=0))

    return Node(y, (xn,), bp)


def mse(pred, target) -> Node:
    """Mean squared difference as a float64 scalar node."""
    pn = _as_node(pred)
    tv = np.asarray(target, dtype=F32)
    if pn.value.shape != tv.shape:
        raise ShapeError(f"mse shape mismatch: {pn.value.shape} vs {tv.shape}")
    diff = pn.value.astype(F64) - tv.astype(F64)
    n = max(diff.size, 1)
    val = float(np.sum(diff * diff) / n)

    def bp(g):
        _accum(pn, ((2.0 / n) * g * diff).astype(F32))

    return Node(val, (pn,), bp)


def scalar_sum(terms: Sequence[Node], weights: Sequence[float] | None = None) -> Node:
    """Weighted sum of scalar nodes (used for loss composition)."""
    ws = [1.0] * len(terms) if weights is None else [float(w) for w in weights]
    val = float(sum(w * t.value for t, w in zip(terms, ws)))

    def bp(g):
        for t, w in zip(terms, ws):
            _accum(t, g * w)

    return Node(val, tuple(terms), bp)


# ---------------------------------------------------------------------------
# gradient oracle
# ---------------------------------------------------------------------------


def finite_diff_grad(f: Callable[[Param], float], p: Param, eps: float = 1e-3) -> np.ndarray:
    """Central-difference gradient of a scalar function, per coordinate.

    Perturbations are written into p.value in place (and restored), so `f`
    sees exactly the float32 weights the model would. Differences use the
    achieved float32 step, evaluated in float64.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    flat = p.value.reshape(-1)
    out = np.zeros(flat.size, dtype=F64)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = F32(float(orig) + eps)
        hi_x = float(flat[i])
        hi = float(f(p))
        flat[i] = F32(float(orig) - eps)
        lo_x = float(flat[i])
        lo = float(f(p))
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError(f"non-finite objective at coordinate {i}")
        out[i] = (hi - lo) / (hi_x - lo_x)
    return out.reshape(p.value.shape).astype(F32)


# contract-facing aliases
linear_forward = linear
conv1d_forward = conv1d
mse_loss = mse
