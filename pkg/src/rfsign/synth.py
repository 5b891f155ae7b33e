"""Point-scatterer FMCW scene simulator with exact ground truth.

Scatterers follow closed-form trajectories built from velocity segments
(constant offset plus a sinusoid). Positive radial velocity means the scatterer
is closing on the radar and produces a positive Doppler shift.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datacube import SPEED_OF_LIGHT, IQCube, RadarConfig, phase_from_angle

__all__ = [
    "STEP_S",
    "VelocitySegment",
    "Trajectory",
    "Scatterer",
    "Scene",
    "Segment",
    "GroundTruth",
    "SimulationError",
    "simulate",
    "motion_mask",
    "SignMotion",
    "SIGN_LIBRARY",
    "SEQUENCE_SIGNS",
    "CLASS_ATTRIBUTES",
    "ACTIVITY_LABELS",
    "make_sequence_scene",
    "sequence_radar_config",
    "scene_to_dict",
    "scene_from_dict",
    "load_scene",
    "save_scene",
]

#: Time-step duration of ground-truth masks and classifier steps (seconds).
STEP_S = 0.2


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class VelocitySegment:
    """Radial velocity ``offset + amplitude * sin(2 pi freq tau + phase)`` on [start, end)."""

    start_s: float
    end_s: float
    offset_mps: float = 0.0
    amplitude_mps: float = 0.0
    freq_hz: float = 0.0
    phase_rad: float = 0.0

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise ValueError(f"velocity segment must have end > start, got {self}")

    def velocity(self, t: np.ndarray) -> np.ndarray:
        tau = t - self.start_s
        inside = (tau >= 0) & (t < self.end_s)
        v = self.offset_mps + self.amplitude_mps * np.sin(
            2 * np.pi * self.freq_hz * tau + self.phase_rad
        )
        return np.where(inside, v, 0.0)

    def displacement(self, t: np.ndarray) -> np.ndarray:
        """Closing distance travelled since ``start_s`` (clipped to the segment)."""
        tau = np.clip(t - self.start_s, 0.0, self.end_s - self.start_s)
        d = self.offset_mps * tau
        if self.freq_hz == 0:
            return d + self.amplitude_mps * math.sin(self.phase_rad) * tau
        w = 2 * np.pi * self.freq_hz
        return d - self.amplitude_mps / w * (np.cos(w * tau + self.phase_rad) - math.cos(self.phase_rad))


@dataclass(frozen=True)
class Trajectory:
    range_m: float
    angle_rad: float = 0.0
    segments: tuple[VelocitySegment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not abs(self.angle_rad) < math.pi / 2:
            raise ValueError(f"angle must lie in (-pi/2, pi/2), got {self.angle_rad}")

    def range_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        r = np.full(t.shape, float(self.range_m))
        for seg in self.segments:
            r -= seg.displacement(t)
        return r

    def velocity_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        v = np.zeros(t.shape)
        for seg in self.segments:
            v += seg.velocity(t)
        return v

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.range_at(t), self.velocity_at(t), np.full(t.shape, self.angle_rad)


@dataclass(frozen=True)
class Scatterer:
    trajectory: Trajectory
    amplitude: float = 1.0
    active: tuple[float, float] = (0.0, math.inf)
    name: str = ""

    def moving_intervals(self) -> list[tuple[float, float]]:
        t0, t1 = self.active
        out = []
        for seg in self.trajectory.segments:
            lo, hi = max(t0, seg.start_s), min(t1, seg.end_s)
            if hi > lo and (seg.offset_mps != 0 or seg.amplitude_mps != 0):
                out.append((lo, hi))
        return out


@dataclass(frozen=True)
class Segment:
    label: str
    start_s: float
    end_s: float
    attrs: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class Scene:
    scatterers: tuple[Scatterer, ...] = ()
    clutter: tuple[Scatterer, ...] = ()
    noise_power: float = 0.0
    duration_s: float = 1.0
    seed: int = 0
    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        object.__setattr__(self, "clutter", tuple(self.clutter))
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.duration_s > 0:
            raise ValueError("scene duration must be > 0")
        if self.noise_power < 0:
            raise ValueError("noise power must be >= 0")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        for c in self.clutter:
            if c.trajectory.segments:
                raise ValueError("clutter scatterers must be static")


@dataclass
class GroundTruth:
    mask: np.ndarray
    segments: list[Segment]
    cpi_times_s: np.ndarray
    # [cpi, scatterer, (range_m, velocity_mps, angle_rad)]
    per_cpi: np.ndarray
    step_s: float = STEP_S

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "step_s": self.step_s,
            "mask": [int(x) for x in self.mask],
            "segments": [
                {"label": s.label, "start_s": s.start_s, "end_s": s.end_s, "attrs": s.attrs}
                for s in self.segments
            ],
            "cpi_times_s": self.cpi_times_s.tolist(),
            "per_cpi": self.per_cpi.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GroundTruth":
        return cls(
            mask=np.asarray(doc["mask"], dtype=bool),
            segments=[
                Segment(s["label"], float(s["start_s"]), float(s["end_s"]), dict(s.get("attrs", {})))
                for s in doc["segments"]
            ],
            cpi_times_s=np.asarray(doc.get("cpi_times_s", []), dtype=float),
            per_cpi=np.asarray(doc.get("per_cpi", []), dtype=float),
            step_s=float(doc.get("step_s", STEP_S)),
        )


def motion_mask(scene: Scene, step_s: float = STEP_S) -> np.ndarray:
    """Per-step motion mask: a step is motion when moving scatterers cover at
    least half of it."""
    n_steps = math.ceil(round(scene.duration_s / step_s, 9))
    edges = np.arange(n_steps + 1) * step_s
    covered = np.zeros(n_steps)
    intervals = sorted(iv for s in scene.scatterers for iv in s.moving_intervals())
    merged: list[list[float]] = []
    for lo, hi in intervals:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    for lo, hi in merged:
        covered += np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0, None)
    return covered >= 0.5 * step_s - 1e-9


def _check_scatterer(s: Scatterer, index: int, config: RadarConfig, t: np.ndarray, duration: float):
    t0, t1 = s.active
    inside = (t >= t0) & (t < t1)
    if not inside.any():
        return
    r, v, _ = s.trajectory(t[inside])
    label = s.name or f"#{index}"
    if r.min() <= 0 or r.max() >= config.max_range_m:
        raise SimulationError(
            f"scatterer {label} range [{r.min():.3f}, {r.max():.3f}] m outside the "
            f"unambiguous interval (0, {config.max_range_m:.3f}) m"
        )
    vmax = config.max_velocity_mps("physical")
    if np.abs(v).max() >= vmax:
        raise SimulationError(
            f"scatterer {label} radial speed {np.abs(v).max():.3f} m/s exceeds the "
            f"unambiguous {vmax:.3f} m/s"
        )


def _channel_gains(config: RadarConfig, angle: float, n_chirps: int) -> np.ndarray:
    """Per-chirp, per-physical-channel complex gain of a scatterer at ``angle``."""
    omega = phase_from_angle(config, angle)
    rx = np.exp(1j * omega * np.arange(config.n_rx))
    if not config.bpm_enabled:
        return np.broadcast_to(rx, (n_chirps, config.n_rx))
    tx2 = np.exp(1j * omega * config.n_rx)
    sign = np.where(np.arange(n_chirps) % 2 == 0, 1.0, -1.0)
    return rx[None, :] * (1.0 + sign[:, None] * tx2)


def _noise_block(seed: int, block: int, shape: tuple, power: float) -> np.ndarray:
    # counter-based stream per CPI block: independent of generation order
    gen = np.random.Generator(np.random.Philox(key=seed, counter=block << 192))
    z = gen.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * math.sqrt(power / 2)


def simulate(scene: Scene, config: RadarConfig) -> tuple[IQCube, GroundTruth]:
    """Synthesize the physical-channel I/Q cube for ``scene``.

    Each chirp uses the stop-and-hop approximation: the scatterer range is
    frozen at the chirp start, giving a beat tone at ``2 R gamma / c`` and a
    carrier phase of ``4 pi (R0 - R) / lambda``.
    """
    n_chirps = int(round(scene.duration_s * config.prf_hz))
    if config.bpm_enabled and n_chirps % 2:
        n_chirps -= 1
    if n_chirps < 1:
        raise SimulationError("scene shorter than one chirp")
    n_fast, n_chan = config.samples_per_pulse, config.n_physical
    t = np.arange(n_chirps) / config.prf_hz
    tau = np.arange(n_fast) / config.sample_rate
    data = np.zeros((n_fast, n_chirps, n_chan), dtype=np.complex128)

    everything = list(scene.scatterers) + list(scene.clutter)
    for i, s in enumerate(everything):
        _check_scatterer(s, i, config, t, scene.duration_s)
    for s in everything:
        t0, t1 = s.active
        on = (t >= t0) & (t < t1)
        if not on.any() or s.amplitude == 0:
            continue
        idx = np.flatnonzero(on)
        r = s.trajectory.range_at(t[idx])
        fb = config.beat_frequency(r)
        carrier = 4 * np.pi * (s.trajectory.range_m - r) / config.wavelength
        slow = s.amplitude * np.exp(1j * carrier)
        fast = np.exp(2j * np.pi * np.outer(tau, fb))
        gains = _channel_gains(config, s.trajectory.angle_rad, n_chirps)[idx]
        data[:, idx, :] += (fast * slow[None, :])[:, :, None] * gains[None, :, :]

    if scene.noise_power > 0:
        block = config.pulses_per_cpi
        for b, k0 in enumerate(range(0, n_chirps, block)):
            k1 = min(k0 + block, n_chirps)
            data[:, k0:k1, :] += _noise_block(
                int(scene.seed), b, (n_fast, k1 - k0, n_chan), scene.noise_power
            )

    cube = IQCube(config, data, "physical")
    n_cpi = n_chirps // config.pulses_per_cpi
    centers = (np.arange(n_cpi) + 0.5) * config.cpi_seconds
    per_cpi = np.zeros((n_cpi, len(scene.scatterers), 3))
    for j, s in enumerate(scene.scatterers):
        r, v, a = s.trajectory(centers)
        per_cpi[:, j] = np.stack([r, v, a], axis=-1)
    truth = GroundTruth(
        mask=motion_mask(scene),
        segments=list(scene.segments),
        cpi_times_s=centers,
        per_cpi=per_cpi,
    )
    return cube, truth


# --------------------------------------------------------------------------
# Table-I style sequences


@dataclass(frozen=True)
class SignMotion:
    """Kinematics of one synthetic sign burst.

    The hand's radial velocity is ``bias * sin(pi tau / D) + amplitude * sin(2 pi n tau / D)``
    for ``n`` strokes over duration ``D``; it starts and ends at rest.
    """

    duration_s: float
    n_strokes: int
    amplitude_mps: float
    bias_mps: float = 0.0


# Synthetic kinematics; chosen so each sign has a distinct speed/bias/stroke signature.
SIGN_LIBRARY: dict[str, SignMotion] = {
    "tired": SignMotion(1.2, 1, 0.30, -0.25),
    "book": SignMotion(1.4, 2, 0.55, 0.0),
    "sleep": SignMotion(1.6, 1, 0.20, 0.35),
    "evening": SignMotion(1.2, 2, 0.25, 0.0),
    "ready": SignMotion(1.4, 3, 0.70, 0.20),
    "hot": SignMotion(1.0, 1, 0.60, -0.30),
    "month": SignMotion(1.6, 4, 0.35, 0.0),
    "cook": SignMotion(1.4, 2, 0.80, -0.20),
    "again": SignMotion(1.2, 1, 0.45, 0.30),
    "summon": SignMotion(1.6, 1, 0.70, 0.40),
    "maybe": SignMotion(1.4, 3, 0.25, 0.0),
    "night": SignMotion(1.2, 1, 0.40, -0.45),
    "something": SignMotion(1.8, 2, 0.35, 0.30),
    "teacher": SignMotion(1.6, 3, 0.90, 0.0),
    "teach": SignMotion(1.2, 2, 0.65, 0.30),
}

SEQUENCE_SIGNS: dict[int, tuple[str, str, str]] = {
    1: ("tired", "book", "sleep"),
    2: ("evening", "ready", "hot"),
    3: ("month", "cook", "again"),
    4: ("summon", "maybe", "night"),
    5: ("something", "teacher", "teach"),
}

ACTIVITY_LABELS = ("walk", "sit", "stand")

# Synthetic per-class attributes for the five auxiliary tasks.
CLASS_ATTRIBUTES: dict[str, dict] = {
    "walk": {"handedness": "none", "major_location": "none", "movement_type": "gross", "activity_or_sign": "activity", "n_strokes": 0},
    "sit": {"handedness": "none", "major_location": "none", "movement_type": "gross", "activity_or_sign": "activity", "n_strokes": 0},
    "stand": {"handedness": "none", "major_location": "none", "movement_type": "gross", "activity_or_sign": "activity", "n_strokes": 0},
}
for _i, (_name, _m) in enumerate(SIGN_LIBRARY.items()):
    CLASS_ATTRIBUTES[_name] = {
        "handedness": "two" if _i % 3 == 0 else "one",
        "major_location": ("head", "body", "neutral", "hand")[_i % 4],
        "movement_type": "straight" if _m.bias_mps else "back_and_forth",
        "activity_or_sign": "sign",
        "n_strokes": _m.n_strokes,
    }


def sequence_radar_config() -> RadarConfig:
    """Reduced single-channel configuration used for the long mixed-motion streams."""
    return RadarConfig(
        carrier_hz=77e9,
        bandwidth_hz=1e9,
        prf_hz=3.2e3,
        samples_per_pulse=32,
        pulses_per_cpi=128,
        n_tx=1,
        n_rx=1,
        bpm_enabled=False,
    )


def _q(x: float) -> float:
    """Snap a time to the step grid."""
    return round(round(x / STEP_S) * STEP_S, 6)


def make_sequence_scene(
    kind: int,
    sign_motion_params: dict[str, SignMotion] | None = None,
    seed: int = 0,
    snr_db: float = 20.0,
    jitter: float = 0.08,
) -> Scene:
    """Walk, sit, three sign bursts, stand (with still gaps), as in the five
    recorded sequence types.

    Walk/sit/stand kinematics are drawn from the same distributions for every
    ``kind``; only the three sign bursts differ. ``seed`` fixes the kinematic
    jitter and the simulator noise.
    """
    if kind not in SEQUENCE_SIGNS:
        raise ValueError(f"sequence kind must be one of {sorted(SEQUENCE_SIGNS)}, got {kind!r}")
    params = dict(SIGN_LIBRARY)
    if sign_motion_params:
        params.update(sign_motion_params)
    rng = np.random.default_rng([int(seed), 0x5EC])

    def jit(x: float) -> float:
        return x * (1 + jitter * rng.uniform(-1, 1))

    body_amp = 1.0
    noise_power = body_amp**2 / 10 ** (snr_db / 10)
    t = _q(1.0 + rng.uniform(0, 0.4))
    segments: list[Segment] = []

    # walking toward the radar
    walk_d = _q(jit(3.0))
    walk_v = jit(0.65)
    start_r = 1.6 + walk_v * walk_d
    gait_f = jit(1.8)
    body_segs = [VelocitySegment(t, t + walk_d, offset_mps=walk_v)]
    limbs = [
        Scatterer(
            Trajectory(start_r + 0.05, 0.05, (VelocitySegment(t, t + walk_d, walk_v, jit(0.55), gait_f, ph),)),
            amplitude=0.45,
            active=(t, t + walk_d),
            name=f"limb{i}",
        )
        for i, ph in enumerate((0.0, math.pi))
    ]
    segments.append(Segment("walk", t, t + walk_d, {"n_strokes": 0}))
    t = _q(t + walk_d + 2.2 + rng.uniform(0, 0.4))

    sit_d = _q(jit(1.2))
    body_segs.append(VelocitySegment(t, t + sit_d, amplitude_mps=-jit(0.35), freq_hz=0.5 / sit_d))
    segments.append(Segment("sit", t, t + sit_d, {"n_strokes": 0}))
    t = _q(t + sit_d + 2.2 + rng.uniform(0, 0.4))

    hands = []
    for sign in SEQUENCE_SIGNS[kind]:
        m = params[sign]
        d = _q(jit(m.duration_s))
        hand_segs = (
            VelocitySegment(t, t + d, amplitude_mps=jit(m.amplitude_mps), freq_hz=m.n_strokes / d),
        )
        if m.bias_mps:
            hand_segs += (VelocitySegment(t, t + d, amplitude_mps=jit(m.bias_mps), freq_hz=0.5 / d),)
        hands.append(
            Scatterer(Trajectory(1.35, 0.1, hand_segs), amplitude=jit(0.6), active=(t, t + d), name=sign)
        )
        segments.append(Segment(sign, t, t + d, {"n_strokes": m.n_strokes}))
        t = _q(t + d + 2.2 + rng.uniform(0, 0.4))

    stand_d = _q(jit(1.2))
    body_segs.append(VelocitySegment(t, t + stand_d, amplitude_mps=jit(0.35), freq_hz=0.5 / stand_d))
    segments.append(Segment("stand", t, t + stand_d, {"n_strokes": 0}))
    duration = _q(t + stand_d + 1.4)

    body = Scatterer(Trajectory(start_r, 0.0, tuple(body_segs)), amplitude=body_amp, name="body")
    clutter = (
        Scatterer(Trajectory(2.7, -0.3), amplitude=0.5, name="wall"),
        Scatterer(Trajectory(3.9, 0.4), amplitude=0.4, name="cabinet"),
    )
    return Scene(
        scatterers=(body, *limbs, *hands),
        clutter=clutter,
        noise_power=noise_power,
        duration_s=duration,
        seed=int(seed),
        segments=tuple(segments),
    )


# --------------------------------------------------------------------------
# JSON scene files


def _seg_to_dict(s: VelocitySegment) -> dict:
    return {
        "start_s": s.start_s,
        "end_s": s.end_s,
        "offset_mps": s.offset_mps,
        "amplitude_mps": s.amplitude_mps,
        "freq_hz": s.freq_hz,
        "phase_rad": s.phase_rad,
    }


def _scatterer_to_dict(s: Scatterer) -> dict:
    t0, t1 = s.active
    return {
        "name": s.name,
        "amplitude": s.amplitude,
        "active": [t0, None if math.isinf(t1) else t1],
        "trajectory": {
            "range_m": s.trajectory.range_m,
            "angle_rad": s.trajectory.angle_rad,
            "angle_deg": math.degrees(s.trajectory.angle_rad),
            "segments": [_seg_to_dict(g) for g in s.trajectory.segments],
        },
    }


def _scatterer_from_dict(doc: dict) -> Scatterer:
    traj = doc["trajectory"]
    if "angle_rad" in traj:
        angle = float(traj["angle_rad"])
    else:
        angle = math.radians(float(traj.get("angle_deg", 0.0)))
    segs = tuple(
        VelocitySegment(
            float(g["start_s"]),
            float(g["end_s"]),
            float(g.get("offset_mps", 0.0)),
            float(g.get("amplitude_mps", 0.0)),
            float(g.get("freq_hz", 0.0)),
            float(g.get("phase_rad", 0.0)),
        )
        for g in traj.get("segments", [])
    )
    active = doc.get("active", [0.0, None])
    t1 = math.inf if active[1] is None else float(active[1])
    return Scatterer(
        Trajectory(float(traj["range_m"]), angle, segs),
        amplitude=float(doc.get("amplitude", 1.0)),
        active=(float(active[0]), t1),
        name=str(doc.get("name", "")),
    )


def scene_to_dict(scene: Scene) -> dict:
    return {
        "schema_version": 1,
        "duration_s": scene.duration_s,
        "noise_power": scene.noise_power,
        "seed": scene.seed,
        "scatterers": [_scatterer_to_dict(s) for s in scene.scatterers],
        "clutter": [_scatterer_to_dict(s) for s in scene.clutter],
        "segments": [
            {"label": s.label, "start_s": s.start_s, "end_s": s.end_s, "attrs": s.attrs}
            for s in scene.segments
        ],
    }


def scene_from_dict(doc: dict) -> Scene:
    if "sequence" in doc:
        seq = doc["sequence"]
        return make_sequence_scene(
            int(seq["kind"]),
            seed=int(seq.get("seed", doc.get("seed", 0))),
            snr_db=float(seq.get("snr_db", 20.0)),
        )
    return Scene(
        scatterers=tuple(_scatterer_from_dict(s) for s in doc.get("scatterers", [])),
        clutter=tuple(_scatterer_from_dict(s) for s in doc.get("clutter", [])),
        noise_power=float(doc.get("noise_power", 0.0)),
        duration_s=float(doc["duration_s"]),
        seed=int(doc.get("seed", 0)),
        segments=tuple(
            Segment(s["label"], float(s["start_s"]), float(s["end_s"]), dict(s.get("attrs", {})))
            for s in doc.get("segments", [])
        ),
    )


def load_scene(path) -> Scene:
    return scene_from_dict(json.loads(Path(path).read_text()))


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2))
