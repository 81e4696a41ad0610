"""Quantized clip-floor-shift (QCFS) activation.

The forward map is

    qcfs(y) = lam * clip(floor(y * steps / lam + 1/2) / steps, 0, 1)

so outputs live on the finite grid {0, lam/steps, ..., lam}.  The shift of
1/2 makes the quantizer a rounding one, which is what lets a converted
spiking layer with initial potential theta/2 reproduce it exactly.

The backward pass is a straight-through estimator against the clip
surrogate lam * clip(y / lam, 0, 1): the floor is treated as identity and
the gradient gate is 0 <= y / lam <= 1.  This keeps the gradient equal to
the surrogate's derivative everywhere off the quantization boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


def _check_params(lam, steps) -> None:
    if not np.all(np.asarray(lam) > 0):
        raise ParameterError(f"activation threshold must be positive, got {lam}")
    if int(steps) < 1 or int(steps) != steps:
        raise ParameterError(f"quantization steps must be a positive integer, got {steps}")


def qcfs(y, lam: float, steps: int):
    """Apply the quantized clip-floor-shift activation elementwise.

    Accepts scalars or arrays; returns the same shape.  Output values are
    exactly of the form k * lam / steps with integer k in [0, steps].
    """
    _check_params(lam, steps)
    y = np.asarray(y, dtype=np.float64)
    z = np.floor(y * steps / lam + 0.5)
    return lam * np.clip(z / steps, 0.0, 1.0)


def qcfs_backward(y, lam: float, steps: int, upstream):
    """Straight-through gradients of qcfs w.r.t. input and threshold.

    Returns ``(grad_y, grad_lam)`` where ``grad_y`` has the shape of ``y``
    and ``grad_lam`` is the scalar sum over all elements.  The pass-through
    gate is 0 <= y <= lam; the threshold gradient is the quantized output
    over lam minus the gated pass-through term y / lam.
    """
    _check_params(lam, steps)
    y = np.asarray(y, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    gate = ((y >= 0.0) & (y <= lam)).astype(np.float64)
    grad_y = upstream * gate
    out_over_lam = qcfs(y, lam, steps) / lam
    grad_lam = float(np.sum(upstream * (out_over_lam - (y / lam) * gate)))
    return grad_y, grad_lam


@dataclass(frozen=True)
class QcfsActivation:
    """Activation parameters: quantization step count and threshold."""

    steps: int
    threshold: float

    def __post_init__(self):
        _check_params(self.threshold, self.steps)

    def __call__(self, y):
        return qcfs(y, self.threshold, self.steps)

    @property
    def levels(self) -> np.ndarray:
        """The full output grid {0, threshold/steps, ..., threshold}."""
        return self.threshold * np.arange(self.steps + 1) / self.steps
