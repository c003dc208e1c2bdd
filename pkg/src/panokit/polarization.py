"""Stokes parameters and DoLP/AoLP maps from four-angle captures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvariantViolation


@dataclass(frozen=True)
class PolarizationCapture:
    """Intensity images behind linear polarizers at 0, 45, 90 and 135 degrees."""

    i0: np.ndarray
    i45: np.ndarray
    i90: np.ndarray
    i135: np.ndarray

    def __post_init__(self):
        arrays = {}
        shape = None
        for name in ("i0", "i45", "i90", "i135"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim != 2:
                raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
            if shape is None:
                shape = a.shape
            elif a.shape != shape:
                raise DimensionMismatch(
                    f"{name} has shape {a.shape}, expected {shape}")
            if not np.all(np.isfinite(a)):
                raise InvariantViolation(f"{name} contains non-finite intensity")
            if np.any(a < 0):
                raise InvariantViolation(f"{name} contains negative intensity")
            arrays[name] = a
        for name, a in arrays.items():
            object.__setattr__(self, name, a)


@dataclass(frozen=True)
class StokesImage:
    """Linear Stokes components; S3 (circular) is out of scope.

    consistency_violations counts pixels where |S1| > S0 or |S2| > S0,
    which cannot happen for physical intensities but can for synthetic or
    noisy inputs; they are counted rather than rejected.
    """

    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    consistency_violations: int = 0


@dataclass(frozen=True)
class PolarizationMaps:
    """dolp in [0,1]; aolp in radians, (-pi/2, pi/2]; invalid pixels are 0
    with the mask bit cleared."""

    dolp: np.ndarray
    aolp: np.ndarray
    valid: np.ndarray
    clamp_violations: int = 0


def stokes_from_capture(cap: PolarizationCapture) -> StokesImage:
    """S0 = I0 + I90, S1 = I0 - I90, S2 = I45 - I135, elementwise."""
    s0 = cap.i0 + cap.i90
    s1 = cap.i0 - cap.i90
    s2 = cap.i45 - cap.i135
    violations = int(np.sum((np.abs(s1) > s0) | (np.abs(s2) > s0)))
    return StokesImage(s0=s0, s1=s1, s2=s2,
                       consistency_violations=violations)


def polarization_maps(S: StokesImage, epsilon: float | None = None) -> PolarizationMaps:
    """DoLP = sqrt(S1^2 + S2^2)/S0 clamped to [0,1]; AoLP = atan2(S2, S1)/2.

    Pixels with S0 <= epsilon are masked invalid (0 in both maps). epsilon
    defaults to 1e-6 of the brightest S0 so dark pixels don't blow up the
    division. Pre-clamp DoLP > 1 occurrences are counted.
    """
    s0 = np.asarray(S.s0, dtype=float)
    s1 = np.asarray(S.s1, dtype=float)
    s2 = np.asarray(S.s2, dtype=float)
    if s1.shape != s0.shape or s2.shape != s0.shape:
        raise DimensionMismatch("Stokes components must share one shape")
    if epsilon is None:
        epsilon = 1e-6 * float(np.max(s0)) if s0.size and np.max(s0) > 0 else 0.0
    if epsilon < 0:
        raise InvariantViolation("epsilon must be non-negative")

    valid = s0 > epsilon
    s0_safe = np.where(valid, s0, 1.0)
    raw = np.sqrt(s1 ** 2 + s2 ** 2) / s0_safe
    clamp_violations = int(np.sum(valid & (raw > 1.0)))
    dolp = np.where(valid, np.clip(raw, 0.0, 1.0), 0.0)
    aolp = np.where(valid, 0.5 * np.arctan2(s2, s1), 0.0)
    return PolarizationMaps(dolp=dolp, aolp=aolp, valid=valid,
                            clamp_violations=clamp_violations)
