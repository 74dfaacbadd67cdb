"""Reverse-mode automatic differentiation over per-sentence tapes.

Tensors are 2-D float64 numpy arrays; row vectors have shape (1, k). Each
forward primitive records a node on the tape; ``backward`` replays the tape
in reverse, summing contributions for parameters that occur several times.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    EmptyInputList,
    NonFiniteLoss,
    NotScalarLoss,
    ShapeMismatch,
)


def as_tensor(value) -> np.ndarray:
    """Coerce to a 2-D float64 array, treating 1-D input as a row vector."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeMismatch(f"expected 2-D tensor, got shape {arr.shape}")
    return arr


class Node:
    """One recorded value. Leaf nodes are parameters (``param_key`` set) or
    constants; interior nodes carry a vector-Jacobian product closure."""

    __slots__ = ("value", "index", "parents", "vjp", "param_key")

    def __init__(self, value, index, parents=(), vjp=None, param_key=None):
        self.value = value
        self.index = index
        self.parents = parents
        self.vjp = vjp
        self.param_key = param_key


class Tape:
    """Append-only record of one forward computation, in topological order."""

    def __init__(self):
        self.nodes: list[Node] = []

    def _record(self, value, parents=(), vjp=None, param_key=None) -> Node:
        node = Node(value, len(self.nodes), parents, vjp, param_key)
        self.nodes.append(node)
        return node

    def constant(self, value) -> Node:
        return self._record(as_tensor(value))

    def parameter(self, value, key) -> Node:
        return self._record(as_tensor(value), param_key=key)


def concat(inputs: list[Node], tape: Tape) -> Node:
    """Concatenate row vectors in argument order."""
    if not inputs:
        raise EmptyInputList("concat needs at least one input")
    for node in inputs:
        if node.value.shape[0] != 1:
            raise ShapeMismatch(f"concat expects row vectors, got {node.value.shape}")
    widths = [node.value.shape[1] for node in inputs]
    value = np.concatenate([node.value for node in inputs], axis=1)
    bounds = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(widths)))

    return tape._record(value, tuple(inputs), vjp)


def affine(w: Node, b: Node, x: Node, tape: Tape) -> Node:
    """y = x @ w.T + b for w of shape (out, in), b (1, out), x (1, in)."""
    out_dim, in_dim = w.value.shape
    if x.value.shape != (1, in_dim):
        raise ShapeMismatch(f"x {x.value.shape} does not match w {w.value.shape}")
    if b.value.shape != (1, out_dim):
        raise ShapeMismatch(f"b {b.value.shape} does not match w {w.value.shape}")
    value = x.value @ w.value.T + b.value

    def vjp(g):
        return (g.T @ x.value, g, g @ w.value)

    return tape._record(value, (w, b, x), vjp)


def relu(x: Node, tape: Tape) -> Node:
    """Elementwise max(0, x); subgradient at 0 is 0."""
    mask = x.value > 0.0
    value = np.where(mask, x.value, 0.0)

    def vjp(g):
        return (np.where(mask, g, 0.0),)

    return tape._record(value, (x,), vjp)


def mse(pred: Node, target: Node, tape: Tape) -> Node:
    """Per-coordinate mean squared error between two equal-length vectors."""
    if pred.value.shape != target.value.shape:
        raise ShapeMismatch(
            f"pred {pred.value.shape} vs target {target.value.shape}"
        )
    diff = pred.value - target.value
    k = diff.size
    value = np.array([[float(np.mean(diff * diff))]])

    def vjp(g):
        scaled = (2.0 / k) * diff * g[0, 0]
        return (scaled, -scaled)

    return tape._record(value, (pred, target), vjp)


def backward(tape: Tape, loss: Node) -> dict:
    """Reverse accumulation from a scalar loss.

    Returns a map from parameter key to gradient. Every parameter recorded
    on the tape appears in the map; parameters the loss does not depend on
    get zero gradients.
    """
    if loss.value.shape != (1, 1):
        raise NotScalarLoss(f"loss has shape {loss.value.shape}")
    grads: list = [None] * (loss.index + 1)
    grads[loss.index] = np.ones((1, 1))
    for node in reversed(tape.nodes[: loss.index + 1]):
        g = grads[node.index]
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if grads[parent.index] is None:
                grads[parent.index] = pg
            else:
                grads[parent.index] = grads[parent.index] + pg
    param_grads: dict = {}
    for node in tape.nodes:
        if node.param_key is None:
            continue
        g = grads[node.index] if node.index < len(grads) else None
        if g is None:
            g = np.zeros_like(node.value)
        prev = param_grads.get(node.param_key)
        param_grads[node.param_key] = g if prev is None else prev + g
    return param_grads


def grad_check(build, params: dict, epsilon: float = 1e-4) -> float:
    """Compare tape gradients against central finite differences.

    ``build(tape, nodes)`` must construct the loss from ``nodes``, a map
    from parameter name to tape node mirroring ``params``. Returns the
    maximum relative error |a - n| / max(1e-8, |a| + |n|) over all entries.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")

    def loss_value(values: dict) -> float:
        tape = Tape()
        nodes = {name: tape.constant(v) for name, v in values.items()}
        out = build(tape, nodes)
        return float(out.value[0, 0])

    tape = Tape()
    nodes = {name: tape.parameter(v, name) for name, v in params.items()}
    loss = build(tape, nodes)
    if not np.isfinite(loss.value).all():
        raise NonFiniteLoss("loss is not finite at the evaluation point")
    analytic = backward(tape, loss)

    worst = 0.0
    for name, value in params.items():
        base = as_tensor(value)
        a_grad = analytic[name]
        for idx in np.ndindex(base.shape):
            bumped = {k: as_tensor(v).copy() for k, v in params.items()}
            bumped[name][idx] = base[idx] + epsilon
            up = loss_value(bumped)
            bumped[name][idx] = base[idx] - epsilon
            down = loss_value(bumped)
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NonFiniteLoss(f"loss not finite while perturbing {name}{idx}")
            numeric = (up - down) / (2.0 * epsilon)
            a = float(a_grad[idx])
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            if err > worst:
                worst = err
    return worst
