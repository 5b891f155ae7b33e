"""Motion segmentation of distance-vector streams into motion-detected
intervals (MDIs): variable-window STA/LTA plus fixed-window STA/LTA and
power-burst-curve baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envelope import DistanceVector

__all__ = [
    "StaLtaConfig",
    "MDI",
    "sta_lta",
    "sta_lta_series",
    "detect_intervals_vw",
    "detect_intervals_fixed",
    "detect_intervals_pbc",
    "intervals_to_mask",
    "mask_to_intervals",
    "segmentation_accuracy",
]

LTA_FLOOR = 1e-9


@dataclass(frozen=True)
class StaLtaConfig:
    t1_steps: int = 2
    t2_steps: int = 10
    sigma1: float = 0.06
    sigma2: float = 2.0
    sigma3: float = 0.03

    def __post_init__(self):
        if not (1 <= self.t1_steps < self.t2_steps):
            raise ValueError("need 1 <= t1_steps < t2_steps")
        if min(self.sigma1, self.sigma2, self.sigma3) <= 0:
            raise ValueError("thresholds must be positive")
        if not self.sigma3 < self.sigma1:
            raise ValueError("sigma3 must be below sigma1")

    @classmethod
    def from_seconds(cls, t1_s: float, t2_s: float, step_s: float, **thresholds) -> "StaLtaConfig":
        return cls(max(1, round(t1_s / step_s)), max(2, round(t2_s / step_s)), **thresholds)


@dataclass(frozen=True)
class MDI:
    """Inclusive step range ``[start_step, end_step]``."""

    start_step: int
    end_step: int
    start_s: float
    end_s: float
    label: str | None = None

    def __post_init__(self):
        if self.end_step < self.start_step or self.start_step < 0:
            raise ValueError(f"invalid MDI step range [{self.start_step}, {self.end_step}]")

    @classmethod
    def from_steps(cls, start: int, end: int, step_s: float, label: str | None = None) -> "MDI":
        return cls(int(start), int(end), start * step_s, (end + 1) * step_s, label)

    @property
    def n_steps(self) -> int:
        return self.end_step - self.start_step + 1

    def overlap(self, other: "MDI") -> int:
        return max(0, min(self.end_step, other.end_step) - max(self.start_step, other.start_step) + 1)

    def to_dict(self) -> dict:
        d = {
            "start_step": self.start_step,
            "end_step": self.end_step,
            "start_s": self.start_s,
            "end_s": self.end_s,
        }
        if self.label is not None:
            d["label"] = self.label
        return d

    @classmethod
    def from_dict(cls, d: dict, step_s: float = 0.2) -> "MDI":
        if "start_step" in d:
            start, end = int(d["start_step"]), int(d["end_step"])
        else:
            start = int(round(d["start_s"] / step_s))
            end = int(round(d["end_s"] / step_s)) - 1
        return cls(start, end, start * step_s, (end + 1) * step_s, d.get("label"))


def _values(v) -> tuple[np.ndarray, float]:
    if isinstance(v, DistanceVector):
        return v.normalize().values, v.step_s
    arr = np.asarray(v, dtype=float)
    top = arr.max() if arr.size else 0.0
    return (arr / top if top > 0 else arr), 0.2


def sta_lta_series(values: np.ndarray, cfg: StaLtaConfig) -> tuple[np.ndarray, np.ndarray]:
    """STA and LTA for every step.

    STA(t) averages the leading window (t, t+T1], LTA(t) the lagging window
    (t-T2, t]; windows are clipped at the stream ends and averaged over the
    samples they still contain (an empty leading window gives 0).
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    c = np.concatenate([[0.0], np.cumsum(x)])
    t = np.arange(n)
    hi = np.minimum(t + cfg.t1_steps, n - 1)
    count = hi - t
    sta = np.where(count > 0, (c[hi + 1] - c[t + 1]) / np.maximum(count, 1), 0.0)
    lo = np.maximum(t - cfg.t2_steps + 1, 0)
    lta = (c[t + 1] - c[lo]) / (t - lo + 1)
    return sta, lta


def sta_lta(v, t: int, cfg: StaLtaConfig) -> tuple[float, float]:
    values = v.values if isinstance(v, DistanceVector) else np.asarray(v, dtype=float)
    if not 0 <= t < values.size:
        raise IndexError(f"step {t} outside a stream of {values.size} steps")
    sta, lta = sta_lta_series(values, cfg)
    return float(sta[t]), float(lta[t])


def _ratio(sta: np.ndarray, lta: np.ndarray, sigma1: float) -> np.ndarray:
    tiny = lta < LTA_FLOOR
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(tiny, 0.0, sta / np.where(tiny, 1.0, lta))
    return np.where(tiny & (sta > sigma1), np.inf, r)


def _onsets(values: np.ndarray, cfg: StaLtaConfig):
    sta, lta = sta_lta_series(values, cfg)
    ratio = _ratio(sta, lta, cfg.sigma1)
    start = (sta > cfg.sigma1) & (ratio > cfg.sigma2)
    stop = (sta < cfg.sigma3) & (ratio < cfg.sigma2)
    return start, stop


def _first_active(values: np.ndarray, t: int, cfg: StaLtaConfig) -> int:
    """First step of the leading window (t, t+T1] that rises above sigma3."""
    window = values[t + 1 : t + 1 + cfg.t1_steps]
    above = np.flatnonzero(window > cfg.sigma3)
    return t + 1 + (int(above[0]) if above.size else 0)


def intervals_to_mask(mdis, n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for m in mdis:
        mask[m.start_step : m.end_step + 1] = True
    return mask


def mask_to_intervals(mask, step_s: float = 0.2) -> list[MDI]:
    m = np.asarray(mask, dtype=bool).astype(np.int8)
    edges = np.diff(np.concatenate([[0], m, [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return [MDI.from_steps(s, e, step_s) for s, e in zip(starts, ends)]


def detect_intervals_vw(v, cfg: StaLtaConfig, min_steps: int = 2, step_s: float | None = None):
    """Variable-window STA/LTA segmentation.

    A motion starts after step t when STA(t) > sigma1 and STA/LTA > sigma2, and
    ends at step t when STA(t) < sigma3 and STA/LTA < sigma2. Intervals shorter
    than ``min_steps`` are dropped. Returns ``(mdis, mask)``.
    """
    values, dv_step = _values(v)
    step_s = dv_step if step_s is None else step_s
    n = values.size
    start_ok, stop_ok = _onsets(values, cfg)
    mdis = []
    open_at = None
    for t in range(n):
        if open_at is None:
            if start_ok[t] and t + 1 < n:
                open_at = _first_active(values, t, cfg)
        elif t >= open_at and stop_ok[t]:
            mdis.append((open_at, t))
            open_at = None
    if open_at is not None:
        mdis.append((open_at, n - 1))
    out = [MDI.from_steps(s, e, step_s) for s, e in mdis if e - s + 1 >= min_steps]
    return out, intervals_to_mask(out, n)


def detect_intervals_fixed(v, window_s: float, cfg: StaLtaConfig, step_s: float | None = None) -> list[MDI]:
    """Fixed-window STA/LTA baseline: each onset opens an MDI of ``window_s``;
    onsets inside an open window are ignored."""
    values, dv_step = _values(v)
    step_s = dv_step if step_s is None else step_s
    n = values.size
    width = int(round(window_s / step_s))
    if width < 1:
        raise ValueError("window shorter than one step")
    if width > n:
        raise ValueError(f"window of {width} steps is longer than the {n}-step stream")
    start_ok, _ = _onsets(values, cfg)
    out = []
    t = 0
    while t < n:
        if start_ok[t] and t + 1 < n:
            s = _first_active(values, t, cfg)
            e = min(s + width - 1, n - 1)
            out.append(MDI.from_steps(s, e, step_s))
            t = e + 1
        else:
            t += 1
    return out


def detect_intervals_pbc(v, threshold: float, step_s: float | None = None) -> list[MDI]:
    """Power-burst-curve baseline: maximal runs with ``v > threshold``."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    values, dv_step = _values(v)
    return mask_to_intervals(values > threshold, dv_step if step_s is None else step_s)


def segmentation_accuracy(mask, truth) -> float:
    a = np.asarray(mask, dtype=bool)
    b = np.asarray(truth, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask length {a.size} != truth length {b.size}")
    if a.size == 0:
        return 1.0
    return float(np.mean(a == b))
