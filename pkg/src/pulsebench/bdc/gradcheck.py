"""Central finite-difference check of the model gradient.

The loss is piecewise smooth: it has kinks wherever a rectifier input
crosses zero. A central difference straddling a kink measures a chord, not
the derivative. Autograd returns the derivative of the linear piece that
contains ``theta``, identified by the rectifier on/off pattern, so for each
coordinate the check uses the first difference whose probe points all keep
that pattern: central at ``h``, then second-order one-sided at ``h`` (forward,
then backward), then the same at ``h/10`` and so on.
"""
from __future__ import annotations

from collections.abc import Callable
from contextlib import contextmanager
from dataclasses import dataclass, field

import torch

from . import model as _model
from .model import ModelParams, grad


@contextmanager
def _record_relu(patterns: list[torch.Tensor]):
    original = _model.relu

    def recording(x):
        patterns.append((x > 0).detach().reshape(-1))
        return original(x)

    _model.relu = recording
    try:
        yield
    finally:
        _model.relu = original


def _evaluate(loss_fn: Callable[[], torch.Tensor]) -> tuple[float, torch.Tensor]:
    pats: list[torch.Tensor] = []
    with _record_relu(pats):
        value = loss_fn().item()
    return value, (torch.cat(pats) if pats else torch.zeros(0, dtype=torch.bool))


def _difference(flat, i, old, step, loss_fn, base_value, base_pattern) -> float | None:
    """First pattern-preserving difference quotient at ``step``, or None."""
    probes = {}

    def f(k):
        if k not in probes:
            flat[i] = old + k * step
            probes[k] = _evaluate(loss_fn)
            flat[i] = old
        value, pattern = probes[k]
        return value if torch.equal(pattern, base_pattern) else None

    up, down = f(1), f(-1)
    if up is not None and down is not None:
        return (up - down) / (2 * step)
    for sign, near in ((1, up), (-1, down)):
        far = f(2 * sign) if near is not None else None
        if far is not None:
            return sign * (-3 * base_value + 4 * near - far) / (2 * step)
    return None


@dataclass
class GradCheckResult:
    worst_rel_error: float
    worst_param: str
    n_coords: int
    n_reduced_step: int  # coordinates whose step had to shrink to avoid kinks
    errors: dict[str, float] = field(default_factory=dict)  # worst per tensor


def finite_difference_check(params: ModelParams, loss_fn: Callable[[], torch.Tensor], h: float = 1e-4,
                            min_h: float = 1e-7, floor: float = 1e-6) -> GradCheckResult:
    """Compare autograd against central differences for every coordinate.

    Relative error is ``|a - fd| / max(|a|, |fd|, floor)``. ``params`` should
    be float64; they are perturbed in place and restored.
    """
    analytic = grad(params, loss_fn())
    base_value, base_pattern = _evaluate(loss_fn)
    worst, worst_name, n, reduced = 0.0, "", 0, 0
    errors: dict[str, float] = {}
    with torch.no_grad():
        for name, t in params.items():
            flat = t.view(-1)
            ga = analytic[name].reshape(-1)
            errors[name] = 0.0
            for i in range(flat.numel()):
                old = flat[i].item()
                step = h
                fd = _difference(flat, i, old, step, loss_fn, base_value, base_pattern)
                while fd is None and step / 10 >= min_h:
                    step /= 10
                    fd = _difference(flat, i, old, step, loss_fn, base_value, base_pattern)
                if fd is None:  # kinks on both sides closer than min_h
                    flat[i] = old + step
                    up, _ = _evaluate(loss_fn)
                    flat[i] = old - step
                    down, _ = _evaluate(loss_fn)
                    flat[i] = old
                    fd = (up - down) / (2 * step)
                reduced += step != h
                a = ga[i].item()
                err = abs(a - fd) / max(abs(a), abs(fd), floor)
                n += 1
                errors[name] = max(errors[name], err)
                if err > worst:
                    worst, worst_name = err, name
    return GradCheckResult(worst, worst_name, n, reduced, errors)
