"""Decoding of per-step class score streams: CTC best path, mode-over-MDI
classification, the multi-task loss combination, cumulative-score trigger
detection and its FRR/FAR evaluation, plus a DTW template scorer that
produces score streams without a trained network."""

from __future__ import annotations

import math

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _dp
from .motiondetect import MDI

__all__ = [
    "BLANK",
    "ScoreStream",
    "TriggerConfig",
    "TriggerEvent",
    "DetectionReport",
    "best_path_decode",
    "classify_mdi",
    "mtl_total_loss",
    "csa_trigger_single",
    "csa_trigger_double",
    "evaluate_detection",
    "dtw_template_scorer",
    "gamma_sweep",
]

BLANK = "blank"


@dataclass(frozen=True, eq=False)
class ScoreStream:
    probs: np.ndarray  # [step, class]
    labels: tuple
    blank: str = BLANK
    step_duration_s: float = 0.2

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        labels = tuple(self.labels)
        if p.ndim != 2 or p.shape[1] != len(labels):
            raise ValueError(f"probability matrix {p.shape} does not match {len(labels)} labels")
        if len(set(labels)) != len(labels):
            raise ValueError("class labels must be unique")
        if self.blank not in labels:
            raise ValueError(f"blank label {self.blank!r} missing from labels")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1) > 1e-6):
            raise ValueError("each row must be a probability distribution")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "labels", labels)

    @property
    def blank_index(self) -> int:
        return self.labels.index(self.blank)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def __len__(self):
        return self.probs.shape[0]

    def argmax_labels(self) -> list[str]:
        return [self.labels[i] for i in np.argmax(self.probs, axis=1)]


@dataclass(frozen=True)
class TriggerConfig:
    trigger_class: str
    gamma: float = 0.5
    gamma_low: float = 0.25
    dwell_fraction: float = 0.5

    def __post_init__(self):
        if not 0 < self.gamma_low < self.gamma < 1:
            raise ValueError(f"need 0 < gamma_low < gamma < 1, got {self.gamma_low}, {self.gamma}")
        if not 0 < self.dwell_fraction <= 1:
            raise ValueError("dwell_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class TriggerEvent:
    mdi: MDI
    fire_step: int
    accumulated_score: float
    mechanism: str  # "high_threshold" or "dwell"

    def to_dict(self) -> dict:
        return {
            "mdi": self.mdi.to_dict(),
            "fire_step": self.fire_step,
            "accumulated_score": self.accumulated_score,
            "mechanism": self.mechanism,
        }


@dataclass(frozen=True)
class DetectionReport:
    n_total: int
    n_detected: int
    n_false: int
    frr: float = field(init=False)
    far: float = field(init=False)
    detection_rate: float = field(init=False)

    def __post_init__(self):
        if self.n_total <= 0:
            raise ValueError("no trigger-class intervals to evaluate (n_t = 0)")
        if not 0 <= self.n_detected <= self.n_total or self.n_false < 0:
            raise ValueError("inconsistent detection counts")
        frr = (self.n_total - self.n_detected) / self.n_total
        far = self.n_false / self.n_total
        object.__setattr__(self, "frr", frr)
        object.__setattr__(self, "far", far)
        object.__setattr__(self, "detection_rate", 1 - frr - far)

    def to_dict(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_detected": self.n_detected,
            "n_false": self.n_false,
            "frr": self.frr,
            "far": self.far,
            "detection_rate": self.detection_rate,
        }


def best_path_decode(stream: ScoreStream) -> list[str]:
    """Per-step argmax, merge adjacent repeats, drop blanks."""
    path = np.argmax(stream.probs, axis=1)
    blank = stream.blank_index
    out = []
    prev = None
    for k in path:
        if k != prev and k != blank:
            out.append(stream.labels[k])
        prev = k
    return out


def _check_mdi(stream: ScoreStream, mdi: MDI):
    if mdi.start_step < 0 or mdi.end_step >= len(stream):
        raise IndexError(
            f"MDI [{mdi.start_step}, {mdi.end_step}] outside a {len(stream)}-step stream"
        )


def classify_mdi(stream: ScoreStream, mdi: MDI) -> str | None:
    """Most frequent non-blank argmax label over the MDI's steps.

    Ties go to the label that reached the winning count first. Returns ``None``
    when every step is blank.
    """
    _check_mdi(stream, mdi)
    path = np.argmax(stream.probs[mdi.start_step : mdi.end_step + 1], axis=1)
    blank = stream.blank_index
    counts: dict[int, int] = {}
    reached: dict[tuple[int, int], int] = {}
    for i, k in enumerate(path):
        if k == blank:
            continue
        counts[k] = counts.get(k, 0) + 1
        reached[(k, counts[k])] = i
    if not counts:
        return None
    top = max(counts.values())
    winner = min((k for k, n in counts.items() if n == top), key=lambda k: reached[(k, top)])
    return stream.labels[winner]


def mtl_total_loss(
    l_ctc: float, lambda_ctc: float, task_losses: Sequence[float], lambdas: Sequence[float]
) -> float:
    """Weighted sum ``lambda_ctc * L_ctc + sum_i lambda_i * L_i``.

    The products are summed with :func:`math.fsum`, so the result does not
    depend on the order of the auxiliary tasks.
    """
    if len(task_losses) != len(lambdas):
        raise ValueError(f"{len(task_losses)} task losses but {len(lambdas)} weights")
    if lambda_ctc < 0 or any(w < 0 for w in lambdas):
        raise ValueError("loss weights must be non-negative")
    return math.fsum([lambda_ctc * l_ctc, *(w * x for w, x in zip(lambdas, task_losses))])


def _accumulate(stream: ScoreStream, mdi: MDI, trigger_class: str) -> np.ndarray:
    _check_mdi(stream, mdi)
    col = stream.index(trigger_class)
    return np.cumsum(stream.probs[mdi.start_step : mdi.end_step + 1, col])


def csa_trigger_single(stream: ScoreStream, mdi: MDI, cfg: TriggerConfig) -> TriggerEvent | None:
    """Fire at the first step where the accumulated trigger score exceeds ``w * gamma``."""
    s = _accumulate(stream, mdi, cfg.trigger_class)
    threshold = mdi.n_steps * cfg.gamma
    hits = np.flatnonzero(s > threshold)
    if hits.size == 0:
        return None
    i = int(hits[0])
    return TriggerEvent(mdi, mdi.start_step + i, float(s[i]), "high_threshold")


def csa_trigger_double(stream: ScoreStream, mdi: MDI, cfg: TriggerConfig) -> TriggerEvent | None:
    """Single-threshold rule plus a dwell rule on the lower threshold ``w * gamma_low``.

    The dwell rule fires once the accumulated score has been above the low
    threshold for ``dwell_fraction`` of the MDI, counted in steps and including
    the crossing step.
    """
    s = _accumulate(stream, mdi, cfg.trigger_class)
    w = mdi.n_steps
    high, low = w * cfg.gamma, w * cfg.gamma_low
    need = cfg.dwell_fraction * w
    dwell = 0
    for i, value in enumerate(s):
        if value > high:
            return TriggerEvent(mdi, mdi.start_step + i, float(value), "high_threshold")
        dwell = dwell + 1 if value > low else 0
        if dwell >= need - 1e-9:
            return TriggerEvent(mdi, mdi.start_step + i, float(value), "dwell")
    return None


def evaluate_detection(
    events: Sequence[TriggerEvent], truth: Sequence[MDI], trigger_class: str
) -> DetectionReport:
    """Count detected trigger intervals and false events against labelled truth.

    Each event is attributed to the truth interval it overlaps most; events
    overlapping no truth interval count as false.
    """
    n_total = sum(1 for m in truth if m.label == trigger_class)
    if n_total == 0:
        raise ValueError(f"truth holds no {trigger_class!r} intervals (n_t = 0)")
    detected = set()
    n_false = 0
    for ev in events:
        best, best_ov = None, 0
        for j, m in enumerate(truth):
            ov = m.overlap(ev.mdi)
            if ov > best_ov:
                best, best_ov = j, ov
        if best is not None and truth[best].label == trigger_class:
            detected.add(best)
        else:
            n_false += 1
    return DetectionReport(n_total, len(detected), n_false)


def gamma_sweep(
    streams_and_mdis: Sequence[tuple[ScoreStream, Sequence[MDI], Sequence[MDI]]],
    trigger_class: str,
    gammas: Sequence[float],
    gamma_low_ratio: float = 0.5,
    dwell_fraction: float = 0.5,
) -> list[dict]:
    """FRR/FAR/detection rate of both detectors for each confidence factor.

    Each corpus entry is ``(stream, detected_mdis, labelled_truth)``. The low
    threshold tracks the sweep as ``gamma_low = gamma_low_ratio * gamma``.
    """
    rows = []
    for g in gammas:
        cfg = TriggerConfig(trigger_class, g, g * gamma_low_ratio, dwell_fraction)
        single, double = [], []
        truth_all = []
        offset = 0
        for stream, mdis, truth in streams_and_mdis:
            # shift each recording onto a shared step axis so truth stays disjoint
            shift = lambda m: MDI(m.start_step + offset, m.end_step + offset, m.start_s, m.end_s, m.label)
            for m in mdis:
                e1 = csa_trigger_single(stream, m, cfg)
                e2 = csa_trigger_double(stream, m, cfg)
                if e1:
                    single.append(TriggerEvent(shift(e1.mdi), e1.fire_step + offset, e1.accumulated_score, e1.mechanism))
                if e2:
                    double.append(TriggerEvent(shift(e2.mdi), e2.fire_step + offset, e2.accumulated_score, e2.mechanism))
            truth_all.extend(shift(m) for m in truth)
            offset += len(stream)
        r1 = evaluate_detection(single, truth_all, trigger_class)
        r2 = evaluate_detection(double, truth_all, trigger_class)
        rows.append(
            {
                "gamma": g,
                "gamma_low": g * gamma_low_ratio,
                "single": r1,
                "double": r2,
                "single_fired": {(e.mdi.start_step, e.mdi.end_step) for e in single},
                "double_fired": {(e.mdi.start_step, e.mdi.end_step) for e in double},
            }
        )
    return rows


def dtw_template_scorer(
    features: np.ndarray,
    templates: Mapping[str, Sequence[np.ndarray]],
    temperature: float = 0.05,
    context_steps: int = 5,
    energy: np.ndarray | None = None,
    energy_floor: float = 0.05,
    blank_floor: float = 0.9,
    blank: str = BLANK,
    step_duration_s: float = 0.2,
) -> ScoreStream:
    """Per-step class probabilities from DTW matching against class exemplars.

    For each step the trailing run of active steps (at most ``context_steps``)
    is aligned to every exemplar with open-ended subsequence DTW; the per-class
    distance is the best exemplar's mean per-step cost and probabilities are
    ``softmax(-distance / temperature)``. Steps whose ``energy`` is below
    ``energy_floor`` put ``blank_floor`` of their mass on the blank class.
    """
    classes = [c for c in templates if c != blank]
    if not classes or any(len(templates[c]) == 0 for c in classes):
        raise ValueError("every class needs at least one template")
    x = np.ascontiguousarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    energy = np.ones(n) if energy is None else np.asarray(energy, dtype=float)
    quiet = energy < energy_floor
    refs = {
        c: [np.ascontiguousarray(np.atleast_2d(np.asarray(t, dtype=float).reshape(len(t), -1))) for t in templates[c]]
        for c in classes
    }
    probs = np.zeros((n, len(classes) + 1))
    run = 0
    for t in range(n):
        run = 0 if quiet[t] else run + 1
        k = max(1, min(run, context_steps))
        query = x[t - k + 1 : t + 1]
        dist = np.array(
            [min(_dp.subsequence_dtw(query, r) for r in refs[c]) / k for c in classes]
        )
        z = -(dist - dist.min()) / temperature
        p = np.exp(z)
        p /= p.sum()
        b = blank_floor if quiet[t] else 0.0
        probs[t, 0] = b
        probs[t, 1:] = (1 - b) * p
    return ScoreStream(probs, (blank, *classes), blank, step_duration_s)
