"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autograd import Tensor, backward


class HarnessError(RuntimeError):
    pass


@dataclass
class GradCheckReport:
    max_rel_err: float
    tol: float
    per_tensor: dict = field(default_factory=dict)
    kinks: int = 0  # probes re-measured at ``kink_step``

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def _rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def grad_check(
    f: Callable[[], Tensor],
    inputs: Tensor | Sequence[Tensor],
    step: float = 1e-5,
    tol: float = 1e-4,
    max_coords: int | None = None,
    directions: int = 0,
    rng: np.random.Generator | None = None,
    floor: float = 1e-8,
    kink_step: float | None = None,
) -> GradCheckReport:
    """Compare backprop gradients of ``f()`` against central differences.

    ``f`` takes no arguments and closes over ``inputs``; it is re-run with
    each input perturbed in place.  The error for one tensor is the largest
    absolute discrepancy divided by the larger of the two gradient maxima
    (never below ``floor``).  With ``max_coords`` only a random subset of
    coordinates is probed; ``directions`` adds random unit-direction
    derivative probes that touch every coordinate at once.  ``floor`` should
    sit well above the finite-difference noise (about eps·|f|/step) when
    some tensors have exactly zero gradient.

    Piecewise-linear ops (relu, maxpool) put kinks everywhere in a large
    network, and a probe that straddles one measures an average of two
    slopes.  With ``kink_step`` set, a probe that fails at ``step`` is
    re-measured once at that smaller step (counted in ``kinks``).  A wrong
    backward pass disagrees at every step size and still fails.
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    rng = rng or np.random.default_rng(0)

    first = f()
    again = f()
    if first.size != 1:
        raise HarnessError(f"f must be scalar-valued, got shape {first.shape}")
    if not np.array_equal(first.data, again.data):
        raise HarnessError("f is not deterministic: two evaluations differ")

    for t in inputs:
        if not t.data.flags.c_contiguous:
            t.data = np.ascontiguousarray(t.data)
        t.grad = None
    loss = f()
    backward(loss)
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in inputs]

    def value() -> float:
        return float(f().data)

    def central(t: Tensor, delta: np.ndarray, h: float) -> float:
        base = t.data.copy()
        t.data[...] = base + h * delta
        up = value()
        t.data[...] = base - h * delta
        down = value()
        t.data[...] = base
        return (up - down) / (2 * h)

    def probe(t: Tensor, delta: np.ndarray, exact: float, scale: float) -> float:
        """Directional difference along ``delta``; ``scale`` is the error denominator."""
        fd = central(t, delta, step)
        if kink_step is None or abs(fd - exact) < tol * max(scale, abs(fd)):
            return fd
        report.kinks += 1
        return central(t, delta, kink_step)

    report = GradCheckReport(0.0, tol)
    for k, (t, a) in enumerate(zip(inputs, analytic)):
        flat_a = a.reshape(-1)
        n = flat_a.size
        coords = np.arange(n)
        if max_coords is not None and n > max_coords:
            coords = np.sort(rng.choice(n, size=max_coords, replace=False))
        scale = max(np.abs(flat_a[coords]).max(initial=0.0), floor)
        num = np.empty(len(coords))
        for m, c in enumerate(coords):
            e = np.zeros(n)
            e[c] = 1.0
            num[m] = probe(t, e.reshape(t.shape), float(flat_a[c]), scale)
        err = _rel_err(flat_a[coords], num, floor)
        for _ in range(directions):
            v = rng.standard_normal(t.shape)
            v /= np.linalg.norm(v)  # the probe moves the tensor by exactly ``step``
            exact = float((a * v).sum())
            fd = probe(t, v, exact, max(abs(exact), floor))
            err = max(err, _rel_err(np.array([exact]), np.array([fd]), floor))
        key = t.name or f"input{k}"
        if key in report.per_tensor:
            key = f"{key}#{k}"
        report.per_tensor[key] = err
        report.max_rel_err = max(report.max_rel_err, err)
    for t in inputs:
        t.grad = None
    return report
