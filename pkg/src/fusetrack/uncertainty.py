"""Visibility probability to measurement covariance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseMap:
    """Variance range (px^2) spanned by the visibility remap."""

    sigma2_min: float = 0.25
    sigma2_max: float = 64.0

    def __post_init__(self):
        if not 0.0 < self.sigma2_min < self.sigma2_max:
            raise ValueError(
                f"need 0 < sigma2_min < sigma2_max, got {self.sigma2_min}, {self.sigma2_max}"
            )


@dataclass(frozen=True)
class VisibilityReport:
    p_occ: float
    p_vis: float

    def __post_init__(self):
        if not (0.0 <= self.p_vis <= 1.0 and 0.0 <= self.p_occ <= 1.0):
            raise ValueError(f"probabilities must lie in [0, 1]: {self}")
        if abs(self.p_occ + self.p_vis - 1.0) > 1e-9:
            raise ValueError(f"p_occ + p_vis must equal 1: {self}")

    @classmethod
    def from_p_vis(cls, p_vis: float) -> VisibilityReport:
        p_vis = float(p_vis)
        return cls(1.0 - p_vis, p_vis)


def variance(p_vis: float, m: NoiseMap) -> float:
    """Parabolic remap ``s_min + (s_max - s_min) * (1 - p)^2``.

    The vertex sits at ``p_vis = 1`` so a confidently visible point gets the
    variance floor and a surely occluded one gets the ceiling.
    """
    if not 0.0 <= p_vis <= 1.0:
        raise ValueError(f"p_vis must lie in [0, 1], got {p_vis}")
    q = 1.0 - p_vis
    return m.sigma2_min + (m.sigma2_max - m.sigma2_min) * q * q


def variance_grad(p_vis: float, m: NoiseMap) -> float:
    """Derivative of :func:`variance` with respect to ``p_vis``."""
    return -2.0 * (m.sigma2_max - m.sigma2_min) * (1.0 - p_vis)


def remap(v: VisibilityReport, m: NoiseMap) -> np.ndarray:
    """Isotropic 2x2 measurement covariance for a visibility report."""
    return variance(v.p_vis, m) * np.eye(2)
