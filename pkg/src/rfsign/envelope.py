"""Percentile micro-Doppler envelopes and the absolute distance vector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter

from .rfrep import Spectrogram

__all__ = ["EnvelopePair", "DistanceVector", "extract_envelopes", "abs_distance"]


@dataclass(frozen=True, eq=False)
class EnvelopePair:
    upper: np.ndarray  # Hz per time bin
    lower: np.ndarray
    times_s: np.ndarray

    def __post_init__(self):
        if not (len(self.upper) == len(self.lower) == len(self.times_s)):
            raise ValueError("envelope arrays must have equal length")
        if np.any(np.asarray(self.upper) < np.asarray(self.lower)):
            raise ValueError("upper envelope below lower envelope")

    def __len__(self):
        return len(self.upper)


@dataclass(frozen=True, eq=False)
class DistanceVector:
    values: np.ndarray
    normalized: bool = False
    step_s: float = 0.2

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if np.any(values < 0):
            raise ValueError("distance values must be non-negative")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    def normalize(self) -> "DistanceVector":
        if self.normalized:
            return self
        top = self.values.max() if len(self.values) else 0.0
        values = self.values / top if top > 0 else self.values.copy()
        return DistanceVector(values, True, self.step_s)


def extract_envelopes(
    spec: Spectrogram, p_low: float = 0.025, p_high: float = 0.975, smooth: bool = True
) -> EnvelopePair:
    """Upper/lower envelopes from the cumulative Doppler distribution of each column.

    The lower (upper) envelope is the first Doppler bin, scanning from the most
    negative frequency, at which the cumulative fraction of column power reaches
    ``p_low`` (``p_high``). All-zero columns give 0 Hz for both. ``smooth``
    applies a 3-bin median along time.
    """
    if not 0 < p_low < p_high < 1:
        raise ValueError(f"need 0 < p_low < p_high < 1, got {p_low}, {p_high}")
    power = np.asarray(spec.power, dtype=float)
    freqs = spec.doppler_axis_hz
    total = power.sum(axis=0)
    silent = total <= 0
    frac = power.cumsum(axis=0) / np.where(silent, 1.0, total)
    tol = 1e-12
    lower = freqs[np.argmax(frac >= p_low - tol, axis=0)]
    upper = freqs[np.argmax(frac >= p_high - tol, axis=0)]
    lower = np.where(silent, 0.0, lower)
    upper = np.where(silent, 0.0, upper)
    if smooth and len(upper) >= 3:
        upper = median_filter(upper, size=3, mode="nearest")
        lower = median_filter(lower, size=3, mode="nearest")
    return EnvelopePair(upper.astype(float), lower.astype(float), np.asarray(spec.times_s, dtype=float))


def abs_distance(env: EnvelopePair, normalize: bool = True, step_s: float | None = None) -> DistanceVector:
    """``|upper - lower|`` per time bin, optionally divided by its maximum."""
    if step_s is None:
        t = env.times_s
        step_s = float(t[1] - t[0]) if len(t) > 1 else 0.2
    dv = DistanceVector(np.abs(np.asarray(env.upper) - np.asarray(env.lower)), False, step_s)
    return dv.normalize() if normalize else dv
