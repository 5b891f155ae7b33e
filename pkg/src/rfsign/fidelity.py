"""Replicability scoring of candidate trigger signs with DTW and the discrete
Fréchet distance between micro-Doppler envelopes."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from itertools import product
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _dp
from .envelope import EnvelopePair

__all__ = [
    "Curve",
    "FidelityRow",
    "FidelityTable",
    "dtw_distance",
    "dfd",
    "score_signs",
    "table_from_distances",
    "select_top_k",
    "DEFAULT_EPS",
]

DEFAULT_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class Curve:
    """Ordered (time, frequency) points."""

    t: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).ravel()
        f = np.asarray(self.f, dtype=float).ravel()
        if t.size == 0:
            raise ValueError("curve must not be empty")
        if t.shape != f.shape:
            raise ValueError("curve time and value arrays differ in length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("curve time stamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "f", f)

    @classmethod
    def from_values(cls, values, dt: float = 1.0) -> "Curve":
        values = np.asarray(values, dtype=float).ravel()
        return cls(np.arange(values.size) * dt, values)

    def __len__(self):
        return self.t.size

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.t, self.f])


def _as_curve(x) -> Curve:
    if isinstance(x, Curve):
        return x
    return Curve.from_values(x)


def dtw_distance(a, b) -> float:
    """DTW cost with local cost ``|f_a - f_b|`` and steps (1,0), (0,1), (1,1),
    anchored at both ends. Plain sequences are accepted as values."""
    a, b = _as_curve(a), _as_curve(b)
    cost = np.abs(a.f[:, None] - b.f[None, :])
    return float(_dp.dtw_from_cost(cost))


def dfd(a, b, scale: tuple[float, float] = (1.0, 1.0)) -> float:
    """Discrete Fréchet distance between two curves in the (t, f) plane.

    Each axis is divided by the matching entry of ``scale`` before the
    Euclidean ground distance is taken.
    """
    a, b = _as_curve(a), _as_curve(b)
    s = np.asarray(scale, dtype=float)
    pa, pb = a.points / s, b.points / s
    dist = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=-1))
    return float(_dp.dfd_from_dist(dist))


@dataclass(frozen=True)
class FidelityRow:
    sign: str
    dtw: float
    dfd: float
    dtw_norm: float
    dfd_norm: float
    s_dtw: float
    s_dfd: float
    score: float


@dataclass(frozen=True)
class FidelityTable:
    rows: dict

    def __getitem__(self, sign: str) -> FidelityRow:
        return self.rows[sign]

    def __len__(self):
        return len(self.rows)

    @property
    def signs(self) -> list[str]:
        return list(self.rows)

    def to_csv(self, order: Sequence[str] | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sign", "dtw", "dfd", "dtw_norm", "dfd_norm", "s_dtw", "s_dfd", "score"])
        for sign in order or self.rows:
            r = self.rows[sign]
            w.writerow([r.sign] + [repr(float(x)) for x in (r.dtw, r.dfd, r.dtw_norm, r.dfd_norm, r.s_dtw, r.s_dfd, r.score)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"schema_version": 1, "signs": [asdict(r) for r in self.rows.values()]}, indent=2
        )


def _components(item) -> list[Curve]:
    if isinstance(item, EnvelopePair):
        return [Curve(item.times_s, item.upper), Curve(item.times_s, item.lower)]
    if isinstance(item, (tuple, list)) and item and all(isinstance(c, Curve) for c in item):
        return list(item)
    return [_as_curve(item)]


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def table_from_distances(
    raw_dtw: Mapping[str, float], raw_dfd: Mapping[str, float], eps: float = DEFAULT_EPS
) -> FidelityTable:
    """Min-max rescale per-sign distances and invert them into fidelity scores."""
    signs = list(raw_dtw)
    if len(signs) < 2:
        raise ValueError("fidelity normalisation needs at least two signs")
    if set(signs) != set(raw_dfd):
        raise ValueError("DTW and DFD tables cover different signs")
    d_dtw = np.array([raw_dtw[s] for s in signs], dtype=float)
    d_dfd = np.array([raw_dfd[s] for s in signs], dtype=float)
    n_dtw, n_dfd = _minmax(d_dtw), _minmax(d_dfd)
    s_dtw = 1.0 / np.maximum(n_dtw, eps)
    s_dfd = 1.0 / np.maximum(n_dfd, eps)
    rows = {
        s: FidelityRow(s, d_dtw[i], d_dfd[i], n_dtw[i], n_dfd[i], s_dtw[i], s_dfd[i], (s_dtw[i] + s_dfd[i]) / 2)
        for i, s in enumerate(signs)
    }
    return FidelityTable(rows)


def score_signs(
    per_sign_curve_pairs: Mapping[str, tuple[Iterable, Iterable]], eps: float = DEFAULT_EPS
) -> FidelityTable:
    """Score each sign by how closely imitation recordings follow native ones.

    Every value is ``(native_items, imitation_items)``; an item is a
    :class:`Curve`, an :class:`EnvelopePair` (upper and lower envelopes scored
    separately and averaged) or a list of curves. Distances are averaged over all
    native x imitation pairs. DFD uses a (t, f) metric standardised by the
    per-axis spread of every point in the data set.
    """
    if len(per_sign_curve_pairs) < 2:
        raise ValueError("fidelity normalisation needs at least two signs")
    groups = {}
    for sign, (native, imitation) in per_sign_curve_pairs.items():
        nat = [_components(x) for x in native]
        imi = [_components(x) for x in imitation]
        if not nat or not imi:
            raise ValueError(f"sign {sign!r} needs at least one curve per group")
        groups[sign] = (nat, imi)

    all_points = np.vstack(
        [c.points for nat, imi in groups.values() for item in nat + imi for c in item]
    )
    spread = all_points.std(axis=0)
    scale = tuple(float(s) if s > 0 else 1.0 for s in spread)

    raw_dtw, raw_dfd = {}, {}
    for sign, (nat, imi) in groups.items():
        dtws, dfds = [], []
        for x, y in product(nat, imi):
            if len(x) != len(y):
                raise ValueError(f"sign {sign!r}: items have different component counts")
            dtws.append(np.mean([dtw_distance(cx, cy) for cx, cy in zip(x, y)]))
            dfds.append(np.mean([dfd(cx, cy, scale) for cx, cy in zip(x, y)]))
        raw_dtw[sign] = float(np.mean(dtws))
        raw_dfd[sign] = float(np.mean(dfds))
    return table_from_distances(raw_dtw, raw_dfd, eps)


def select_top_k(table: FidelityTable, k: int) -> list[str]:
    """Signs ordered by combined score (highest first), ties broken by name."""
    if not 1 <= k <= len(table):
        raise ValueError(f"k must lie in [1, {len(table)}], got {k}")
    ranked = sorted(table.rows.values(), key=lambda r: (-r.score, r.sign))
    return [r.sign for r in ranked[:k]]
