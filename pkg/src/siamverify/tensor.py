"""Dense float64 tensors and the recording tape for reverse-mode gradients.

A ``Graph`` records every primitive application during a forward pass.
``Graph.backward`` walks the tape in exact reverse order and accumulates
gradients into the ``grad`` slot of every tensor it reaches.  Tensors that a
node never touches keep ``grad=None``.
"""

from __future__ import annotations

import numpy as np

from .errors import StateError


class Tensor:
    """n-dimensional float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data, grad=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None if grad is None else np.asarray(grad, dtype=np.float64)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), None if self.grad is None else self.grad.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Graph:
    """Tape of primitive applications, topologically ordered by construction."""

    def __init__(self):
        self._nodes = []  # (output, inputs tuple, backward closure, op kind)

    def record(self, output: Tensor, inputs, backward_fn, op: str = ""):
        """Append a node; ``backward_fn(grad_out) -> per-input grads (or None)``."""
        self._nodes.append((output, tuple(inputs), backward_fn, op))

    @property
    def nodes(self):
        return tuple(self._nodes)

    def __len__(self):
        return len(self._nodes)

    def backward(self, output: Tensor, seed: float = 1.0):
        """Populate grad slots for everything reachable from ``output``.

        ``output`` must be the result of a recorded forward pass; the usual
        call seeds a scalar loss with 1.
        """
        if not self._nodes:
            raise StateError("backward called before any forward pass was recorded")
        produced = {id(out) for out, _, _, _ in self._nodes}
        if id(output) not in produced:
            raise StateError("backward target was not produced by this graph")

        grads = {id(output): np.full(output.data.shape, seed, dtype=np.float64)}
        tensors = {id(output): output}
        for out, inputs, backward_fn, _ in reversed(self._nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            out.grad = g if out.grad is None else out.grad + g
            for tin, gin in zip(inputs, backward_fn(g)):
                if gin is None:
                    continue
                key = id(tin)
                tensors[key] = tin
                if key in grads:
                    grads[key] = grads[key] + gin
                else:
                    grads[key] = gin
        # leaves: never popped above
        for key, g in grads.items():
            t = tensors[key]
            t.grad = g if t.grad is None else t.grad + g
