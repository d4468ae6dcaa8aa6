"""Graph wrapper: bind named inputs, evaluate, differentiate, check gradients.

A Graph owns a builder function mapping a dict of named input Tensors to a
single output Tensor. Re-evaluating rebuilds the tape, so eval stays pure and
finite-difference probing can just mutate an input's data and call eval again.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, backward as tape_backward, topo_order


class GraphError(ValueError):
    pass


class Graph:
    def __init__(self, build_fn, check_finite: bool = True):
        self.build_fn = build_fn
        self.check_finite = check_finite
        self.inputs: dict[str, Tensor] | None = None
        self.output: Tensor | None = None

    def eval(self, inputs: dict[str, Tensor]) -> Tensor:
        for name, t in inputs.items():
            if not isinstance(t, Tensor):
                raise GraphError(f"input {name!r} is not a Tensor")
        try:
            out = self.build_fn(inputs)
        except KeyError as exc:
            raise GraphError(f"unbound input: {exc}") from exc
        if not isinstance(out, Tensor):
            raise GraphError("graph builder must return a Tensor")
        if self.check_finite:
            for node in topo_order(out):
                if not np.all(np.isfinite(node.data)):
                    raise GraphError("non-finite intermediate value in graph")
        self.inputs = inputs
        self.output = out
        return out

    def backward(self, seed=None) -> dict[str, np.ndarray]:
        if self.output is None:
            raise GraphError("backward before forward")
        for t in self.inputs.values():
            t.zero_grad()
        tape_backward(self.output, seed)
        return {
            name: t.grad
            for name, t in self.inputs.items()
            if t.requires_grad and t.grad is not None
        }


@dataclass
class GradCheckReport:
    per_leaf: dict[str, float] = field(default_factory=dict)
    tolerance: float = 0.0

    @property
    def max_rel_err(self) -> float:
        return max(self.per_leaf.values()) if self.per_leaf else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def __str__(self):
        worst = ", ".join(f"{k}={v:.3e}" for k, v in sorted(self.per_leaf.items(), key=lambda kv: -kv[1])[:4])
        return f"grad_check(max={self.max_rel_err:.3e}, tol={self.tolerance:.1e}, {worst})"


def grad_check(
    graph: Graph,
    inputs: dict[str, Tensor],
    tolerance: float = 1e-5,
    step: float = 1e-5,
    max_coords_per_leaf: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare tape gradients against central finite differences.

    Error metric per coordinate is |analytic - numeric| / max(1, |numeric|).
    By default every coordinate of every differentiable leaf is probed;
    `max_coords_per_leaf` subsamples for big graphs.
    """
    for name, t in inputs.items():
        if t.data.size == 0:
            raise GraphError(f"empty tensor: {name!r}")
    out = graph.eval(inputs)
    if out.data.size != 1:
        raise GraphError(f"grad_check needs a scalar output, got shape {out.data.shape}")
    analytic = graph.backward()

    report = GradCheckReport(tolerance=tolerance)
    for name, t in inputs.items():
        if not t.requires_grad:
            continue
        flat = t.data.reshape(-1)
        n = flat.size
        if max_coords_per_leaf is not None and n > max_coords_per_leaf:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords_per_leaf, replace=False)
        else:
            coords = range(n)
        a_flat = analytic[name].reshape(-1)
        worst = 0.0
        for k in coords:
            orig = flat[k]
            flat[k] = orig + step
            f_plus = float(graph.eval(inputs).data)
            flat[k] = orig - step
            f_minus = float(graph.eval(inputs).data)
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            rel = abs(a_flat[k] - numeric) / max(1.0, abs(numeric))
            if rel > worst:
                worst = rel
        report.per_leaf[name] = worst
    graph.eval(inputs)  # restore unperturbed activations
    return report
