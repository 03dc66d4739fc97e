"""
Central finite-difference gradient checks.

Perturbations are applied to the float32 buffers in place; the denominator
uses the perturbation actually realized in float32, not the nominal step.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from acq_core.autodiff.tensor import Tensor, no_grad


def numerical_gradient(fn: Callable[[], Tensor], x: Tensor, step: float = 1e-3) -> np.ndarray:
    """d fn() / d x by central differences; fn must return a scalar Tensor."""
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.data.reshape(-1)
    out = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            plus = np.float32(orig + step)
            minus = np.float32(orig - step)
            flat[i] = plus
            f_plus = float(fn().data.astype(np.float64).sum())
            flat[i] = minus
            f_minus = float(fn().data.astype(np.float64).sum())
            flat[i] = orig
            out[i] = (f_plus - f_minus) / (float(plus) - float(minus))
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(np.asarray(analytic, dtype=np.float64) - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(diff / scale)


def gradient_check(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    step: float = 1e-3,
    tol: float = 1e-3,
) -> float:
    """
    Compare reverse-mode gradients of ``fn`` with finite differences.

    Returns the worst relative error; raises AssertionError above ``tol``.
    """
    for t in inputs:
        t.zero_grad()
    root = fn()
    root.backward()
    worst = 0.0
    for idx, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros(t.shape, dtype=np.float32)
        numeric = numerical_gradient(fn, t, step)
        err = relative_error(analytic, numeric)
        if err > tol:
            raise AssertionError(f"gradient mismatch on input {idx} {t.name or t.shape}: relative error {err:.3e}")
        worst = max(worst, err)
    return worst
