"""Staged processing of one recording, from I/Q cube to score stream.

The stages follow the processing diagram: range-Doppler video, CFAR range
gating, micro-Doppler spectrogram, envelopes and distance vector, and (for
multi-channel virtual arrays) MUSIC range-angle video sharpened by optical
flow. The helpers at the bottom turn step spectrograms into feature rows for
the template scorer and evaluate labelled sequence corpora.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import PipelineConfig
from .datacube import IQCube, bpm_demux
from .envelope import DistanceVector, EnvelopePair, abs_distance, extract_envelopes
from .motiondetect import (
    MDI,
    detect_intervals_fixed,
    detect_intervals_pbc,
    detect_intervals_vw,
)
from .rfrep import (
    RAFrame,
    RDFrame,
    Spectrogram,
    default_angle_grid,
    detected_range_bins,
    enhance_ra,
    horn_schunck_flow,
    micro_doppler_spectrogram,
    music_range_angle,
    rd_video,
)
from .seqdecode import BLANK, ScoreStream, classify_mdi, dtw_template_scorer
from .synth import GroundTruth

__all__ = [
    "ProcessResult",
    "prepare_cube",
    "process_cube",
    "step_features",
    "detect",
    "truth_mdis",
    "build_templates",
    "score_recording",
    "match_segments",
]


@dataclass(frozen=True, eq=False)
class ProcessResult:
    cube: IQCube
    rd_frames: list[RDFrame]
    range_bins: list[int]
    cfar_hit: bool
    spectrogram: Spectrogram
    step_spectrogram: Spectrogram
    envelopes: EnvelopePair
    distance: DistanceVector
    ra_frames: list[RAFrame] = field(default_factory=list)
    enhanced_ra: list[RAFrame] = field(default_factory=list)


def prepare_cube(cube: IQCube) -> IQCube:
    """Demultiplex BPM recordings into the virtual array; other cubes pass through."""
    if cube.config.bpm_enabled and cube.channel_kind == "physical":
        return bpm_demux(cube)
    return cube


def _samples(seconds: float, rate: float, limit: int) -> int:
    return int(min(max(1, round(seconds * rate)), limit))


def process_cube(cube: IQCube, cfg: PipelineConfig | None = None, with_ra: bool = True) -> ProcessResult:
    """Run every representation stage on ``cube``.

    When CFAR finds no range bin (for instance an all-zero cube) the
    spectrogram falls back to all range bins so later stages still see a
    stream of the right length; ``cfar_hit`` records which case occurred.
    """
    cfg = cfg or PipelineConfig()
    cube = prepare_cube(cube)
    frames = rd_video(cube, channel=0)
    bins = detected_range_bins(frames, cfg.cfar.guard, cfg.cfar.train, cfg.cfar.pfa, cfg.cfar.min_frames)
    hit = bool(bins)
    if not hit:
        bins = list(range(cube.n_fast))
    rate = cube.slow_time_rate
    window = _samples(cfg.stft.window_s, rate, cube.n_slow)
    hop = _samples(cfg.stft.hop_s, rate, cube.n_slow)
    step = _samples(cfg.stft.step_s, rate, cube.n_slow)
    spec = micro_doppler_spectrogram(cube, bins, window, hop, 0, cfg.stft.combine)
    step_spec = micro_doppler_spectrogram(cube, bins, step, step, 0, cfg.stft.combine)
    env = extract_envelopes(step_spec, cfg.envelope.p_low, cfg.envelope.p_high, cfg.envelope.smooth)
    dv = abs_distance(env, normalize=False, step_s=step / rate)

    ra, enhanced = [], []
    if with_ra and cube.channel_kind == "virtual" and cube.n_chan > cfg.music.n_sources:
        grid = default_angle_grid(cfg.music.step_deg, cfg.music.limit_deg)
        ra = [
            music_range_angle(cube, k, cfg.music.n_sources, grid, cfg.music.loading, scale_by_power=True)
            for k in range(cube.n_cpi)
        ]
        for prev, nxt in zip(ra[:-1], ra[1:]):
            flow = horn_schunck_flow(prev, nxt, cfg.flow.alpha, cfg.flow.iters)
            enhanced.append(enhance_ra(nxt, flow))
    return ProcessResult(cube, frames, bins, hit, spec, step_spec, env, dv, ra, enhanced)


def step_features(
    step_spec: Spectrogram, n_bands: int = 16, band_limit_hz: float = 640.0, dc_bins: int = 2
) -> np.ndarray:
    """Per-step Doppler band profile used by the template scorer.

    Power outside ``dc_bins`` of zero Doppler is pooled into ``n_bands`` equal
    bands spanning ``+-band_limit_hz`` (bins beyond the limit join the outer
    bands). Each band is expressed in decades above the recording's median band
    power, clipped at zero, and the whole matrix is divided by its maximum.
    Returns ``[step, band]``.
    """
    power = np.asarray(step_spec.power, dtype=float)
    freqs = step_spec.doppler_axis_hz
    edges = np.linspace(-band_limit_hz, band_limit_hz, n_bands + 1)
    band = np.clip(np.digitize(freqs, edges) - 1, 0, n_bands - 1)
    keep = np.abs(freqs) > dc_bins * step_spec.doppler_bin_hz
    pooled = np.zeros((n_bands, power.shape[1]))
    np.add.at(pooled, band[keep], power[keep])
    floor = np.median(pooled)
    if floor <= 0:
        return np.zeros(pooled.T.shape)
    level = np.clip(np.log10(np.maximum(pooled, floor * 1e-30) / floor), 0, None)
    top = level.max()
    return (level / top if top > 0 else level).T


def detect(dv: DistanceVector, cfg: PipelineConfig, detector: str = "vw") -> list[MDI]:
    """Segment a distance vector with the chosen detector."""
    m = cfg.motion
    if detector == "vw":
        mdis, _ = detect_intervals_vw(dv, m.build(), m.min_steps)
        return mdis
    if detector == "fixed":
        return detect_intervals_fixed(dv, m.fixed_window_s, m.build())
    if detector == "pbc":
        return detect_intervals_pbc(dv, m.pbc_threshold)
    raise ValueError(f"unknown detector {detector!r}; choose vw, fixed or pbc")


def truth_mdis(gt: GroundTruth) -> list[MDI]:
    """Labelled ground-truth segments as MDIs on the step grid."""
    out = []
    for s in gt.segments:
        start = int(round(s.start_s / gt.step_s))
        end = max(start, int(round(s.end_s / gt.step_s)) - 1)
        out.append(MDI.from_steps(start, end, gt.step_s, s.label))
    return out


def build_templates(
    recordings: Sequence[tuple[np.ndarray, Sequence[MDI]]], max_per_class: int = 8
) -> dict[str, list[np.ndarray]]:
    """Exemplar feature runs per class from labelled recordings.

    Recordings are visited in order and each class keeps its first
    ``max_per_class`` exemplars.
    """
    templates: dict[str, list[np.ndarray]] = {}
    for features, segments in recordings:
        for m in segments:
            if m.label is None or m.label == BLANK:
                continue
            bucket = templates.setdefault(m.label, [])
            if len(bucket) < max_per_class:
                bucket.append(np.asarray(features[m.start_step : m.end_step + 1], dtype=float))
    return templates


def score_recording(
    features: np.ndarray, dv: DistanceVector, templates, cfg: PipelineConfig
) -> ScoreStream:
    """Template-scorer stream, using the normalised distance vector as step energy."""
    s = cfg.scorer
    energy = dv.normalize().values
    n = min(len(features), len(energy))
    return dtw_template_scorer(
        features[:n],
        templates,
        temperature=s.temperature,
        context_steps=s.context_steps,
        energy=energy[:n],
        energy_floor=s.energy_floor,
        blank_floor=s.blank_floor,
        step_duration_s=dv.step_s,
    )


def match_segments(
    stream: ScoreStream, detected: Sequence[MDI], truth: Sequence[MDI]
) -> list[tuple[str, str | None]]:
    """``(true_label, predicted_label)`` for every truth segment.

    Each truth segment is classified through the detected MDI that overlaps it
    most; a segment no detection touches is predicted ``None``.
    """
    pairs = []
    for t in truth:
        best = max(detected, key=lambda m: m.overlap(t), default=None)
        if best is None or best.overlap(t) == 0:
            pairs.append((t.label, None))
        else:
            pairs.append((t.label, classify_mdi(stream, best)))
    return pairs

