"""Forward primitives with recorded backward closures.

Every op takes the tape as its first argument; pass ``g=None`` for a pure
forward evaluation (used by finite differencing and scoring).  Elementwise
binary ops accept equal shapes or a scalar on either side; no general
broadcasting.

Convolution uses the cross-correlation convention (no kernel flip), matching
mainstream CNN practice.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Graph, Tensor


def _rec(g: Graph | None, out: Tensor, inputs, backward_fn, op: str = "") -> Tensor:
    if g is not None:
        g.record(out, inputs, backward_fn, op)
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _binary_shapes(a: Tensor, b: Tensor):
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"elementwise op on shapes {a.shape} and {b.shape}")


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    # scalar operand in an elementwise op collects the summed gradient
    if shape == () and grad.shape != ():
        return np.asarray(grad.sum())
    return grad


def add(g, a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b)
    out = Tensor(a.data + b.data)
    return _rec(g, out, (a, b),
                lambda go: (_reduce_to(go, a.shape), _reduce_to(go, b.shape)))


def sub(g, a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b)
    out = Tensor(a.data - b.data)
    return _rec(g, out, (a, b),
                lambda go: (_reduce_to(go, a.shape), _reduce_to(-go, b.shape)))


def mul(g, a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b)
    out = Tensor(a.data * b.data)
    return _rec(g, out, (a, b),
                lambda go: (_reduce_to(go * b.data, a.shape),
                            _reduce_to(go * a.data, b.shape)))


def div(g, a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b)
    out = Tensor(a.data / b.data)
    return _rec(g, out, (a, b),
                lambda go: (_reduce_to(go / b.data, a.shape),
                            _reduce_to(-go * a.data / (b.data * b.data), b.shape)))


def neg(g, a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(-a.data)
    return _rec(g, out, (a,), lambda go: (-go,))


def relu(g, a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0  # subgradient 0 at the kink
    out = Tensor(np.where(mask, a.data, 0.0))
    return _rec(g, out, (a,), lambda go: (go * mask,), op="relu")


def sigmoid(g, a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(s)
    return _rec(g, out, (a,), lambda go: (go * s * (1.0 - s),))


def log(g, a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.log(a.data))
    return _rec(g, out, (a,), lambda go: (go / a.data,))


def sqrt(g, a) -> Tensor:
    a = _as_tensor(a)
    r = np.sqrt(a.data)
    out = Tensor(r)
    return _rec(g, out, (a,), lambda go: (go / (2.0 * r),))


def absolute(g, a) -> Tensor:
    a = _as_tensor(a)
    sign = np.sign(a.data)  # subgradient 0 at 0
    out = Tensor(np.abs(a.data))
    return _rec(g, out, (a,), lambda go: (go * sign,), op="abs")


def clamp(g, a, lo: float, hi: float) -> Tensor:
    a = _as_tensor(a)
    inside = (a.data > lo) & (a.data < hi)
    out = Tensor(np.clip(a.data, lo, hi))
    return _rec(g, out, (a,), lambda go: (go * inside,), op="clamp")


def tsum(g, a) -> Tensor:
    """Sum of all elements, returning a scalar tensor."""
    a = _as_tensor(a)
    out = Tensor(a.data.sum())
    return _rec(g, out, (a,), lambda go: (np.full(a.shape, float(go)),))


def reshape(g, a, shape) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    return _rec(g, out, (a,), lambda go: (go.reshape(a.shape),))


def stack(g, scalars) -> Tensor:
    """Stack scalar tensors into a 1-D vector."""
    ts = [_as_tensor(s) for s in scalars]
    for t in ts:
        if t.shape != ():
            raise ShapeError(f"stack expects scalars, got shape {t.shape}")
    out = Tensor(np.array([t.data for t in ts]))
    return _rec(g, out, tuple(ts), lambda go: tuple(np.asarray(go[i]) for i in range(len(ts))))


def linear(g, x, w, b) -> Tensor:
    """Affine map w @ x + b for a flat input vector."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.data.ndim != 1 or w.data.ndim != 2:
        raise ShapeError(f"linear expects 1-D input and 2-D weight, got {x.shape}, {w.shape}")
    if w.shape[1] != x.shape[0] or b.shape != (w.shape[0],):
        raise ShapeError(f"linear shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    out = Tensor(w.data @ x.data + b.data)

    def backward(go):
        return (w.data.T @ go, np.outer(go, x.data), go)

    return _rec(g, out, (x, w, b), backward)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    c = xp.shape[0]
    cols = np.empty((c, kh, kw, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(c * kh * kw, ho * wo)


def _col2im(cols: np.ndarray, c: int, hp: int, wp: int,
            kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    xp = np.zeros((c, hp, wp))
    cols = cols.reshape(c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, i, j]
    return xp


def conv2d(g, x, kernels, bias, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation over a CHW input; zero padding."""
    x, kernels, bias = _as_tensor(x), _as_tensor(kernels), _as_tensor(bias)
    if x.data.ndim != 3 or kernels.data.ndim != 4:
        raise ShapeError(f"conv2d expects CHW input and OIHW kernels, got {x.shape}, {kernels.shape}")
    cin, h, w = x.shape
    cout, kcin, kh, kw = kernels.shape
    if kcin != cin:
        raise ShapeError(f"kernel C_in {kcin} != input C_in {cin}")
    if bias.shape != (cout,):
        raise ShapeError(f"bias shape {bias.shape} != ({cout},)")
    hp, wp = h + 2 * pad, w + 2 * pad
    if kh > hp or kw > wp:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    kmat = kernels.data.reshape(cout, -1)
    out = Tensor((kmat @ cols).reshape(cout, ho, wo) + bias.data[:, None, None])

    def backward(go):
        gmat = go.reshape(cout, -1)
        dk = (gmat @ cols.T).reshape(kernels.shape)
        db = gmat.sum(axis=1)
        dxp = _col2im(kmat.T @ gmat, cin, hp, wp, kh, kw, stride, ho, wo)
        dx = dxp[:, pad:pad + h, pad:pad + w] if pad else dxp
        return (dx, dk, db)

    return _rec(g, out, (x, kernels, bias), backward)


def maxpool2(g, x) -> Tensor:
    """2x2 max pooling with stride 2; spatial extents must be even."""
    x = _as_tensor(x)
    if x.data.ndim != 3:
        raise ShapeError(f"maxpool2 expects CHW input, got {x.shape}")
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 requires even spatial extents, got {h}x{w}")
    win = x.data.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = Tensor(np.take_along_axis(win, idx[..., None], axis=-1)[..., 0])

    def backward(go):
        dwin = np.zeros_like(win)
        np.put_along_axis(dwin, idx[..., None], go[..., None], axis=-1)
        dx = dwin.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w)
        return (dx,)

    return _rec(g, out, (x,), backward, op="maxpool2")


_PRIMITIVES = {"relu": relu, "maxpool2": maxpool2, "linear": linear, "sigmoid": sigmoid}


def primitive_forward(kind: str, x, params=None, g=None) -> Tensor:
    """Dispatch a named forward primitive; ``params`` is (weight, bias) for linear."""
    if kind not in _PRIMITIVES:
        raise ShapeError(f"unknown primitive kind {kind!r}")
    if kind == "linear":
        if params is None:
            raise ShapeError("linear primitive requires (weight, bias) params")
        return linear(g, x, params[0], params[1])
    return _PRIMITIVES[kind](g, x)
