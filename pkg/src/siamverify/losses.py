"""Pair losses: contrastive over cosine distance, score regression, BCE.

All three accept either plain arrays (evaluation) or tape tensors plus a
graph (training); the same arithmetic serves both paths.  ``d`` is a
*distance*, d = 1 - cosine similarity, so matched pairs are pulled toward
d = 0 and mismatched pairs pushed beyond the margin.

Class balancing multiplies each pair's term by an inverse-frequency weight;
the weights apply uniformly to all enabled components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ConfigError, DomainError, ShapeError
from .tensor import Graph, Tensor

_NORM_EPS = 1e-12
_D_TOL = 1e-9  # slack for floating-point drift of d just outside [0, 1]


@dataclass
class LossConfig:
    margin: float = 0.5
    enable_lr: bool = True
    enable_lbce: bool = True
    w_pos: float = 1.0
    w_neg: float = 1.0
    bce_clamp_eps: float = 1e-7

    def __post_init__(self):
        if not (0.0 < self.margin <= 1.0):
            raise ConfigError(f"margin {self.margin} outside (0, 1]")
        if self.w_pos <= 0 or self.w_neg <= 0:
            raise ConfigError("class weights must be positive")


@dataclass
class LossBreakdown:
    l_c: float
    l_r: float
    l_bce: float
    l_total: float
    d: np.ndarray
    p: np.ndarray
    total_node: Tensor | None = None  # scalar tape tensor when built on a graph


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def cosine_similarity(a, b, g: Graph | None = None) -> Tensor:
    """<a,b> / (|a||b|); 0 by convention when either norm is ~0."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape or a.data.ndim != 1:
        raise ShapeError(f"cosine_similarity over shapes {a.shape}, {b.shape}")
    if np.linalg.norm(a.data) < _NORM_EPS or np.linalg.norm(b.data) < _NORM_EPS:
        return Tensor(0.0)  # degenerate: no gradient flows
    dot = ops.tsum(g, ops.mul(g, a, b))
    na = ops.sqrt(g, ops.tsum(g, ops.mul(g, a, a)))
    nb = ops.sqrt(g, ops.tsum(g, ops.mul(g, b, b)))
    return ops.div(g, dot, ops.mul(g, na, nb))


def cosine_distance(a, b, g: Graph | None = None) -> Tensor:
    return ops.sub(g, Tensor(1.0), cosine_similarity(a, b, g))


def _check_batch(d: Tensor, y: np.ndarray):
    if d.data.ndim != 1 or d.data.size == 0:
        raise ConfigError(f"batch must be a nonempty vector, got shape {d.shape}")
    if y.shape != d.shape:
        raise ShapeError(f"labels shape {y.shape} != batch shape {d.shape}")


def _weights(y: np.ndarray, cfg: LossConfig) -> Tensor:
    return Tensor(np.where(y == 1, cfg.w_pos, cfg.w_neg))


def contrastive_loss(d, y, cfg: LossConfig, g: Graph | None = None) -> Tensor:
    """(1/2B) sum w_i [ y_i d_i^2 + (1-y_i) max(margin - d_i, 0)^2 ]."""
    d = _as_tensor(d)
    y = np.asarray(y, dtype=np.float64)
    _check_batch(d, y)
    if np.any(d.data < -_D_TOL) or np.any(d.data > 1.0 + _D_TOL):
        raise DomainError(f"distance outside [0,1]: {d.data}")
    b = d.data.size
    hinge = ops.relu(g, ops.sub(g, Tensor(cfg.margin), d))
    terms = ops.add(g,
                    ops.mul(g, Tensor(y), ops.mul(g, d, d)),
                    ops.mul(g, Tensor(1.0 - y), ops.mul(g, hinge, hinge)))
    return ops.div(g, ops.tsum(g, ops.mul(g, _weights(y, cfg), terms)), Tensor(2.0 * b))


def mse_loss(p, y, cfg: LossConfig, g: Graph | None = None) -> Tensor:
    """Class-weighted batch mean of (y_i - p_i)^2."""
    p = _as_tensor(p)
    y = np.asarray(y, dtype=np.float64)
    _check_batch(p, y)
    diff = ops.sub(g, Tensor(y), p)
    sq = ops.mul(g, diff, diff)
    return ops.div(g, ops.tsum(g, ops.mul(g, _weights(y, cfg), sq)), Tensor(float(p.data.size)))


def bce_loss(p, y, cfg: LossConfig, g: Graph | None = None) -> Tensor:
    """Class-weighted batch mean of -[y ln p + (1-y) ln(1-p)], p clamped."""
    p = _as_tensor(p)
    y = np.asarray(y, dtype=np.float64)
    _check_batch(p, y)
    eps = cfg.bce_clamp_eps
    pc = ops.clamp(g, p, eps, 1.0 - eps)
    ll = ops.add(g,
                 ops.mul(g, Tensor(y), ops.log(g, pc)),
                 ops.mul(g, Tensor(1.0 - y), ops.log(g, ops.sub(g, Tensor(1.0), pc))))
    total = ops.neg(g, ops.tsum(g, ops.mul(g, _weights(y, cfg), ll)))
    return ops.div(g, total, Tensor(float(p.data.size)))


def class_weights(n_pos: int, n_neg: int) -> tuple[float, float]:
    """Inverse-frequency weights normalized so the dataset-mean weight is 1."""
    if n_pos <= 0 or n_neg <= 0:
        raise ConfigError(f"class_weights needs both classes, got {n_pos} pos / {n_neg} neg")
    total = n_pos + n_neg
    return total / (2.0 * n_pos), total / (2.0 * n_neg)


def total_loss(d, p, y, cfg: LossConfig, g: Graph | None = None) -> LossBreakdown:
    """Sum of enabled components; disabled ones report 0 and are excluded."""
    d = _as_tensor(d)
    p = _as_tensor(p)
    y = np.asarray(y, dtype=np.float64)
    if d.shape != p.shape or d.shape != y.shape:
        raise ShapeError(f"misaligned batch vectors: d {d.shape}, p {p.shape}, y {y.shape}")
    lc = contrastive_loss(d, y, cfg, g)
    total = lc
    lr_val = lbce_val = 0.0
    if cfg.enable_lr:
        lr = mse_loss(p, y, cfg, g)
        lr_val = lr.item()
        total = ops.add(g, total, lr)
    if cfg.enable_lbce:
        lbce = bce_loss(p, y, cfg, g)
        lbce_val = lbce.item()
        total = ops.add(g, total, lbce)
    return LossBreakdown(l_c=lc.item(), l_r=lr_val, l_bce=lbce_val,
                         l_total=total.item(), d=d.data.copy(), p=p.data.copy(),
                         total_node=total)
