"""Radar acquisition configuration, I/Q data cubes, the RFC1 cube file format
and BPM virtual-array demultiplexing."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

__all__ = [
    "SPEED_OF_LIGHT",
    "RadarConfig",
    "IQCube",
    "CubeFormatError",
    "load_cube",
    "save_cube",
    "bpm_mux",
    "bpm_demux",
    "angular_resolution",
    "angle_from_phase",
    "phase_from_angle",
]

MAGIC = b"RSSCUBE1"
_HEADER = struct.Struct("<4I8dB")
HEADER_SIZE = len(MAGIC) + _HEADER.size

ChannelKind = Literal["physical", "virtual"]


class CubeFormatError(ValueError):
    """Raised when a cube file does not conform to the RFC1 layout."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class RadarConfig:
    """FMCW acquisition parameters.

    The chirp is assumed to occupy the whole pulse repetition interval, so the
    chirp rate is ``bandwidth_hz * prf_hz`` and the fast-time sample rate is
    ``samples_per_pulse * prf_hz``. ``element_spacing_m`` defaults to half a
    wavelength.
    """

    carrier_hz: float = 77e9
    bandwidth_hz: float = 4e9
    prf_hz: float = 6.4e3
    samples_per_pulse: int = 256
    pulses_per_cpi: int = 256
    n_tx: int = 2
    n_rx: int = 4
    element_spacing_m: float | None = None
    bpm_enabled: bool = True

    def __post_init__(self):
        for name in ("carrier_hz", "bandwidth_hz", "prf_hz", "element_spacing_m"):
            value = getattr(self, name)
            if name == "element_spacing_m" and value is None:
                object.__setattr__(self, name, self.wavelength / 2)
                continue
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("samples_per_pulse", "pulses_per_cpi", "n_tx", "n_rx"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        object.__setattr__(self, "bpm_enabled", bool(self.bpm_enabled))
        if self.bpm_enabled and self.n_tx != 2:
            raise ValueError("BPM needs exactly two transmitters")
        if self.bpm_enabled and self.pulses_per_cpi % 2:
            raise ValueError("pulses_per_cpi must be even when BPM is enabled")

    @classmethod
    def from_cpi(cls, cpi_seconds: float, **kwargs) -> "RadarConfig":
        """Build a config whose pulse count per CPI is derived from its duration."""
        prf = kwargs.get("prf_hz", cls.prf_hz)
        pulses = prf * cpi_seconds
        if abs(pulses - round(pulses)) > 1e-6 * max(1.0, pulses):
            raise ValueError(
                f"prf_hz * cpi_seconds = {pulses} is not a whole number of pulses"
            )
        return cls(pulses_per_cpi=int(round(pulses)), **kwargs)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def chirp_rate(self) -> float:
        """Chirp slope in Hz/s."""
        return self.bandwidth_hz * self.prf_hz

    @property
    def sample_rate(self) -> float:
        return self.samples_per_pulse * self.prf_hz

    @property
    def cpi_seconds(self) -> float:
        return self.pulses_per_cpi / self.prf_hz

    @property
    def range_bin_m(self) -> float:
        # c * (fs / N) / (2 gamma), which reduces to c / (2 B)
        return SPEED_OF_LIGHT * (self.sample_rate / self.samples_per_pulse) / (
            2 * self.chirp_rate
        )

    @property
    def max_range_m(self) -> float:
        return self.range_bin_m * self.samples_per_pulse

    @property
    def n_virtual(self) -> int:
        """Number of array elements available for angle processing."""
        return self.n_tx * self.n_rx if self.bpm_enabled else self.n_rx

    @property
    def n_physical(self) -> int:
        return self.n_rx

    def slow_time_rate(self, channel_kind: ChannelKind = "physical") -> float:
        """Slow-time sampling rate of a cube of the given channel kind."""
        if channel_kind == "virtual" and self.bpm_enabled:
            return self.prf_hz / 2
        return self.prf_hz

    def max_doppler_hz(self, channel_kind: ChannelKind = "physical") -> float:
        return self.slow_time_rate(channel_kind) / 2

    def max_velocity_mps(self, channel_kind: ChannelKind = "physical") -> float:
        return SPEED_OF_LIGHT * self.max_doppler_hz(channel_kind) / (2 * self.carrier_hz)

    def beat_frequency(self, range_m):
        return 2 * np.asarray(range_m) * self.chirp_rate / SPEED_OF_LIGHT

    def doppler_frequency(self, velocity_mps):
        return 2 * np.asarray(velocity_mps) * self.carrier_hz / SPEED_OF_LIGHT

    def as_tuple(self) -> tuple:
        return (
            self.carrier_hz,
            self.bandwidth_hz,
            self.prf_hz,
            float(self.samples_per_pulse),
            float(self.pulses_per_cpi),
            float(self.n_tx),
            float(self.n_rx),
            self.element_spacing_m,
        )


@dataclass(frozen=True, eq=False)
class IQCube:
    """Complex radar data cube indexed ``[fast_time, slow_time, channel]``."""

    config: RadarConfig
    data: np.ndarray
    channel_kind: ChannelKind = "physical"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.iscomplexobj(data):
            data = data.astype(np.complex128)
        if data.ndim != 3:
            raise ValueError(f"cube data must be 3-D, got shape {data.shape}")
        if self.channel_kind not in ("physical", "virtual"):
            raise ValueError(f"unknown channel kind {self.channel_kind!r}")
        cfg = self.config
        if data.shape[0] != cfg.samples_per_pulse:
            raise ValueError(
                f"fast-time length {data.shape[0]} != samples_per_pulse {cfg.samples_per_pulse}"
            )
        expected = cfg.n_virtual if self.channel_kind == "virtual" else cfg.n_physical
        if data.shape[2] != expected:
            raise ValueError(
                f"{self.channel_kind} cube needs {expected} channels, got {data.shape[2]}"
            )
        if cfg.bpm_enabled and self.channel_kind == "physical" and data.shape[1] % 2:
            raise ValueError("BPM physical cube needs an even number of chirps")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def n_fast(self) -> int:
        return self.data.shape[0]

    @property
    def n_slow(self) -> int:
        return self.data.shape[1]

    @property
    def n_chan(self) -> int:
        return self.data.shape[2]

    @property
    def slow_time_rate(self) -> float:
        return self.config.slow_time_rate(self.channel_kind)

    @property
    def cpi_length(self) -> int:
        """Slow-time samples per CPI for this cube."""
        if self.channel_kind == "virtual" and self.config.bpm_enabled:
            return self.config.pulses_per_cpi // 2
        return self.config.pulses_per_cpi

    @property
    def n_cpi(self) -> int:
        return self.n_slow // self.cpi_length

    @property
    def duration_s(self) -> float:
        return self.n_slow / self.slow_time_rate

    def __eq__(self, other):
        if not isinstance(other, IQCube):
            return NotImplemented
        return (
            self.config == other.config
            and self.channel_kind == other.channel_kind
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )


def save_cube(cube: IQCube, path) -> None:
    """Write ``cube`` in RFC1 layout (interleaved little-endian float32 I/Q)."""
    cfg = cube.config
    header = MAGIC + _HEADER.pack(
        cube.n_fast,
        cube.n_slow,
        cube.n_chan,
        0 if cube.channel_kind == "physical" else 1,
        *cfg.as_tuple(),
        1 if cfg.bpm_enabled else 0,
    )
    # fast-time fastest, channel slowest == Fortran order on [fast, slow, chan]
    payload = np.asarray(cube.data, dtype="<c8").ravel(order="F").tobytes()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    tmp.replace(path)


def load_cube(path) -> IQCube:
    """Read an RFC1 cube file; raises :class:`CubeFormatError` on malformed input."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) or raw[: len(MAGIC)] != MAGIC:
        raise CubeFormatError("missing RSSCUBE1 magic", 0)
    if len(raw) < HEADER_SIZE:
        raise CubeFormatError("truncated header", len(raw))
    fields = _HEADER.unpack_from(raw, len(MAGIC))
    n_fast, n_slow, n_chan, kind = fields[:4]
    numeric = fields[4:12]
    bpm = fields[12]
    if kind not in (0, 1):
        raise CubeFormatError(f"invalid channel kind {kind}", len(MAGIC) + 12)
    if bpm not in (0, 1):
        raise CubeFormatError(f"invalid bpm flag {bpm}", HEADER_SIZE - 1)
    try:
        cfg = RadarConfig(
            carrier_hz=numeric[0],
            bandwidth_hz=numeric[1],
            prf_hz=numeric[2],
            samples_per_pulse=numeric[3],
            pulses_per_cpi=numeric[4],
            n_tx=numeric[5],
            n_rx=numeric[6],
            element_spacing_m=numeric[7],
            bpm_enabled=bool(bpm),
        )
    except ValueError as exc:
        raise CubeFormatError(f"invalid radar config: {exc}", len(MAGIC) + 16) from exc
    n_values = n_fast * n_slow * n_chan
    expected = HEADER_SIZE + 8 * n_values
    if len(raw) < expected:
        raise CubeFormatError(
            f"truncated payload: expected {8 * n_values} bytes, found {len(raw) - HEADER_SIZE}",
            len(raw),
        )
    if len(raw) > expected:
        raise CubeFormatError("trailing bytes after payload", expected)
    data = np.frombuffer(raw, dtype="<c8", count=n_values, offset=HEADER_SIZE)
    data = data.reshape((n_fast, n_slow, n_chan), order="F").astype(np.complex64)
    try:
        return IQCube(cfg, data, "physical" if kind == 0 else "virtual")
    except ValueError as exc:
        raise CubeFormatError(f"dimension mismatch: {exc}", len(MAGIC)) from exc


def bpm_mux(tx1: np.ndarray, tx2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Form the BPM chirp pair ``(C_a, C_b) = (C1 + C2, C1 - C2)``."""
    return tx1 + tx2, tx1 - tx2


def bpm_demux(cube: IQCube) -> IQCube:
    """Separate the two BPM transmitters into an ``n_tx * n_rx`` virtual array.

    Even chirps are ``C_a`` and odd chirps ``C_b``. Virtual channels are ordered
    TX1 x (RX1..RXn) followed by TX2 x (RX1..RXn).
    """
    if cube.channel_kind != "physical":
        raise ValueError("cube is already virtual")
    if not cube.config.bpm_enabled:
        raise ValueError("cube was not acquired in BPM mode")
    if cube.n_slow % 2:
        raise ValueError("BPM demux needs an even number of chirps")
    ca = cube.data[:, 0::2, :]
    cb = cube.data[:, 1::2, :]
    c1 = (ca + cb) / 2
    c2 = (ca - cb) / 2
    return IQCube(cube.config, np.concatenate([c1, c2], axis=2), "virtual", dict(cube.meta))


def angular_resolution(config: RadarConfig, theta: float, n_channels: int | None = None) -> float:
    """Angular resolution ``lambda / (M d cos theta)`` in radians.

    ``n_channels`` defaults to the virtual channel count of ``config``.
    """
    m = config.n_virtual if n_channels is None else n_channels
    cos = math.cos(theta)
    if abs(theta) >= math.pi / 2 or cos <= 1e-12:
        raise ValueError(f"angular resolution undefined at theta={theta!r}")
    return config.wavelength / (m * config.element_spacing_m * cos)


def phase_from_angle(config: RadarConfig, theta):
    """Inter-element phase difference for a plane wave arriving from ``theta``."""
    return 2 * np.pi * config.element_spacing_m * np.sin(theta) / config.wavelength


def angle_from_phase(config: RadarConfig, omega: float) -> float:
    arg = config.wavelength * omega / (2 * math.pi * config.element_spacing_m)
    if not -1.0 <= arg <= 1.0:
        raise ValueError(
            f"phase {omega!r} rad is ambiguous for spacing {config.element_spacing_m!r} m"
        )
    return math.asin(arg)


def with_config(cube: IQCube, **changes) -> IQCube:
    return IQCube(replace(cube.config, **changes), cube.data, cube.channel_kind, dict(cube.meta))
