"""Central-difference validation of recorded gradients.

A central difference only estimates the derivative when both evaluation
points lie in the same smooth cell of the loss; stepping across a ReLU kink,
a pooling argmax flip, or an abs sign change produces a meaningless value.
``grad_check`` therefore records the activation pattern of every non-smooth
primitive ("kink signature") at each evaluation and skips coordinates whose
+/-eps stencil changes the pattern.  With random inputs such coordinates are
rare; the skipped count is reported via ``GradCheckResult``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .tensor import Graph, Tensor


def kink_margin(graph: Graph) -> float:
    """Distance from the recorded forward pass to its nearest non-smooth point.

    Exact zeros from jointly-clipped ReLUs are locally constant and ignored;
    only genuinely contested kinks count.
    """
    margin = np.inf
    for _, inputs, _, op in graph.nodes:
        if op == "relu":
            x = np.abs(inputs[0].data)
            if x.size:
                margin = min(margin, float(np.min(x)))
        elif op == "abs":
            x = np.abs(inputs[0].data)
            x = x[x > 0]
            if x.size:
                margin = min(margin, float(np.min(x)))
        elif op == "maxpool2":
            x = inputs[0].data
            c, h, w = x.shape
            win = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(-1, 4)
            top2 = np.sort(win, axis=1)[:, -2:]
            gaps = (top2[:, 1] - top2[:, 0])[top2[:, 0] > 0]
            if gaps.size:
                margin = min(margin, float(np.min(gaps)))
    return margin


def _kink_signature(graph: Graph) -> list[np.ndarray]:
    sig = []
    for out, inputs, _, op in graph.nodes:
        if op == "relu":
            sig.append(inputs[0].data > 0)
        elif op == "abs":
            sig.append(np.sign(inputs[0].data))
        elif op == "clamp":
            sig.append(np.equal(inputs[0].data, out.data))
        elif op == "maxpool2":
            x = inputs[0].data
            c, h, w = x.shape
            win = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(-1, 4)
            sig.append(win.argmax(axis=1))
    return sig


def _same_signature(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


@dataclass
class GradCheckResult:
    max_relative_error: float
    checked: int
    skipped: int  # coordinates whose FD stencil straddled a kink


def grad_check(loss_fn, params, eps: float = 1e-5,
               max_coords_per_tensor: int | None = None, seed: int = 0,
               full_result: bool = False):
    """Compare analytic gradients against central differences.

    ``loss_fn(graph_or_None)`` must evaluate the scalar loss from the current
    parameter values, recording on the graph when one is given.  Returns the
    worst relative error over all checked coordinates (0 for an empty
    parameter list), or a ``GradCheckResult`` when ``full_result`` is set.
    ``max_coords_per_tensor`` deterministically subsamples coordinates of
    large tensors; by default every coordinate is checked.
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ConfigError(f"eps {eps} outside [1e-7, 1e-3]")
    params = list(params)
    if not params:
        return GradCheckResult(0.0, 0, 0) if full_result else 0.0

    for p in params:
        p.grad = None
    graph = Graph()
    out = loss_fn(graph)
    if out.shape != ():
        raise ConfigError(f"loss_fn must return a scalar, got shape {out.shape}")
    graph.backward(out)
    base_sig = _kink_signature(graph)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    def evaluate() -> tuple[float, list[np.ndarray]]:
        g = Graph()
        value = float(loss_fn(g).data)
        return value, _kink_signature(g)

    rng = np.random.default_rng(seed)
    worst = 0.0
    checked = skipped = 0
    for p, an in zip(params, analytic):
        n = p.data.size
        if max_coords_per_tensor is not None and n > max_coords_per_tensor:
            coords = rng.choice(n, size=max_coords_per_tensor, replace=False)
        else:
            coords = range(n)
        flat = p.data.reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus, sig_plus = evaluate()
            flat[i] = orig - eps
            f_minus, sig_minus = evaluate()
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(f"non-finite loss at perturbed coordinate {i}")
            if not (_same_signature(sig_plus, base_sig)
                    and _same_signature(sig_minus, base_sig)):
                skipped += 1
                continue
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = an.reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, rel)
            checked += 1
    if full_result:
        return GradCheckResult(worst, checked, skipped)
    return worst
