"""RF data representations: range-Doppler frames, CA-CFAR range gating,
micro-Doppler spectrograms, MUSIC range-angle maps and Horn-Schunck enhancement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

from .datacube import IQCube, angular_resolution

__all__ = [
    "RDFrame",
    "Spectrogram",
    "RAFrame",
    "CFARMask",
    "range_fft",
    "range_doppler_map",
    "rd_video",
    "cfar_alpha",
    "ca_cfar",
    "detected_range_bins",
    "micro_doppler_spectrogram",
    "default_angle_grid",
    "steering_matrix",
    "music_range_angle",
    "ra_video",
    "horn_schunck_flow",
    "enhance_ra",
    "to_db",
    "music_peak_angle",
    "half_resolution",
]


def to_db(power: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Presentation-only conversion of a power grid to dB."""
    return 10 * np.log10(np.maximum(power, floor))


@dataclass(frozen=True, eq=False)
class RDFrame:
    magnitude: np.ndarray  # [range_bin, doppler_bin], linear, Doppler fftshifted
    range_bin_m: float
    doppler_bin_hz: float
    timestamp_s: float = 0.0

    @property
    def n_range(self) -> int:
        return self.magnitude.shape[0]

    @property
    def n_doppler(self) -> int:
        return self.magnitude.shape[1]

    @property
    def doppler_axis_hz(self) -> np.ndarray:
        return (np.arange(self.n_doppler) - self.n_doppler // 2) * self.doppler_bin_hz

    @property
    def range_axis_m(self) -> np.ndarray:
        return np.arange(self.n_range) * self.range_bin_m

    def peak(self) -> tuple[int, int]:
        """(range_bin, doppler_bin) of the strongest cell."""
        r, d = np.unravel_index(np.argmax(self.magnitude), self.magnitude.shape)
        return int(r), int(d)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    power: np.ndarray  # [doppler_bin, time_bin], |STFT|^2, zero-centred
    window_s: float
    hop_s: float
    doppler_bin_hz: float
    times_s: np.ndarray

    @property
    def n_doppler(self) -> int:
        return self.power.shape[0]

    @property
    def n_time(self) -> int:
        return self.power.shape[1]

    @property
    def doppler_axis_hz(self) -> np.ndarray:
        return (np.arange(self.n_doppler) - self.n_doppler // 2) * self.doppler_bin_hz


@dataclass(frozen=True, eq=False)
class RAFrame:
    magnitude: np.ndarray  # [range_bin, angle_bin]
    angles_rad: np.ndarray
    range_bin_m: float = 0.0
    timestamp_s: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.angles_rad, dtype=float)
        if a.ndim != 1 or a.size != self.magnitude.shape[1]:
            raise ValueError("angle grid does not match the frame's angle axis")
        if np.any(np.diff(a) <= 0) or np.any(np.abs(a) >= np.pi / 2):
            raise ValueError("angle grid must be strictly increasing inside (-pi/2, pi/2)")


@dataclass(frozen=True, eq=False)
class CFARMask:
    mask: np.ndarray
    detected_range_bins: frozenset = field(default_factory=frozenset)


def range_fft(cube: IQCube) -> np.ndarray:
    """Unitary FFT over fast time; returns ``[range_bin, slow_time, channel]``."""
    return np.fft.fft(cube.data, axis=0, norm="ortho")


def _check_channel(cube: IQCube, channel: int):
    if not 0 <= channel < cube.n_chan:
        raise IndexError(f"channel {channel} out of range for {cube.n_chan} channels")


def range_doppler_map(cube: IQCube, cpi_index: int, channel: int = 0) -> RDFrame:
    """Magnitude of the 2-D FFT of one CPI's fast/slow-time matrix."""
    _check_channel(cube, channel)
    n = cube.cpi_length
    if not 0 <= cpi_index < cube.n_cpi:
        raise IndexError(f"CPI {cpi_index} out of range (cube holds {cube.n_cpi})")
    block = cube.data[:, cpi_index * n : (cpi_index + 1) * n, channel]
    spec = np.fft.fftshift(np.fft.fft2(block, norm="ortho"), axes=1)
    rate = cube.slow_time_rate
    return RDFrame(
        np.abs(spec),
        range_bin_m=cube.config.range_bin_m,
        doppler_bin_hz=rate / n,
        timestamp_s=cpi_index * n / rate,
    )


def rd_video(cube: IQCube, channel: int = 0) -> list[RDFrame]:
    """One range-Doppler frame per non-overlapping CPI; a partial CPI is dropped."""
    _check_channel(cube, channel)
    n, n_cpi = cube.cpi_length, cube.n_cpi
    if n_cpi < 1:
        raise ValueError(f"cube has {cube.n_slow} chirps, fewer than one CPI ({n})")
    blocks = cube.data[:, : n_cpi * n, channel].reshape(cube.n_fast, n_cpi, n)
    spec = np.abs(np.fft.fftshift(np.fft.fft2(blocks, axes=(0, 2), norm="ortho"), axes=2))
    rate = cube.slow_time_rate
    return [
        RDFrame(spec[:, k, :], cube.config.range_bin_m, rate / n, k * n / rate)
        for k in range(n_cpi)
    ]


def cfar_alpha(n_train: int, pfa: float) -> float:
    """Square-law CA-CFAR threshold multiplier."""
    return n_train * (pfa ** (-1.0 / n_train) - 1.0)


def _box_sums(x: np.ndarray, half: int) -> np.ndarray:
    """Sum over the (2*half+1)^2 box centred on each interior cell."""
    s = np.zeros((x.shape[0] + 1, x.shape[1] + 1))
    s[1:, 1:] = x.cumsum(0).cumsum(1)
    k = 2 * half + 1
    return s[k:, k:] - s[:-k, k:] - s[k:, :-k] + s[:-k, :-k]


def ca_cfar(frame: RDFrame | np.ndarray, guard: int = 2, train: int = 4, pfa: float = 1e-3) -> CFARMask:
    """2-D cell-averaging CFAR on the power of a range-Doppler frame.

    The training ring has ``train`` cells beyond ``guard`` guard cells on every
    side. Cells whose window leaves the grid are never detected.
    """
    if guard < 1 or train < 1:
        raise ValueError("guard and train must be >= 1")
    if not 0 < pfa < 1:
        raise ValueError("pfa must lie in (0, 1)")
    mag = frame.magnitude if isinstance(frame, RDFrame) else np.asarray(frame, dtype=float)
    power = mag.astype(float) ** 2
    outer = guard + train
    if 2 * outer + 1 > min(power.shape):
        raise ValueError(
            f"CFAR window of {2 * outer + 1} cells exceeds the {power.shape} grid"
        )
    n_train = (2 * outer + 1) ** 2 - (2 * guard + 1) ** 2
    big = _box_sums(power, outer)
    small = _box_sums(power, guard)[train:-train or None, train:-train or None]
    noise = (big - small) / n_train
    mask = np.zeros(power.shape, dtype=bool)
    inner = power[outer:-outer, outer:-outer]
    mask[outer:-outer, outer:-outer] = inner > cfar_alpha(n_train, pfa) * noise
    return CFARMask(mask, frozenset(int(r) for r in np.flatnonzero(mask.any(axis=1))))


def detected_range_bins(
    frames: list[RDFrame], guard: int = 2, train: int = 4, pfa: float = 1e-3, min_frames: int = 1
) -> list[int]:
    """Range bins detected by CA-CFAR in at least ``min_frames`` frames."""
    counts: dict[int, int] = {}
    for frame in frames:
        for r in ca_cfar(frame, guard, train, pfa).detected_range_bins:
            counts[r] = counts.get(r, 0) + 1
    return sorted(r for r, n in counts.items() if n >= min_frames)


def micro_doppler_spectrogram(
    cube: IQCube, range_bins, window: int, hop: int, channel: int = 0, combine: str = "power"
) -> Spectrogram:
    """Spectrogram of the slow-time signals of the selected range bins.

    ``combine="power"`` sums the per-bin spectrograms; ``"coherent"`` sums the
    range-bin signals first, which lets static returns at different ranges
    cancel at zero Doppler. A periodic Hann window is used and the Doppler axis
    is zero-centred.
    """
    _check_channel(cube, channel)
    bins = sorted(set(int(b) for b in range_bins))
    if not bins:
        raise ValueError("range_bins must not be empty")
    if bins[0] < 0 or bins[-1] >= cube.n_fast:
        raise IndexError("range bin outside the cube")
    if window < 1 or hop < 1:
        raise ValueError("window and hop must be >= 1")
    if window > cube.n_slow:
        raise ValueError(f"window {window} longer than the {cube.n_slow}-sample stream")
    if combine not in ("power", "coherent"):
        raise ValueError(f"unknown combine mode {combine!r}")
    profile = np.fft.fft(cube.data[:, :, channel], axis=0, norm="ortho")[bins, :]
    if combine == "coherent":
        profile = profile.sum(axis=0, keepdims=True)
    frames = np.lib.stride_tricks.sliding_window_view(profile, window, axis=1)[:, ::hop]
    spec = np.fft.fftshift(np.fft.fft(frames * get_window("hann", window), axis=2), axes=2)
    power = (np.abs(spec) ** 2).sum(axis=0)
    rate = cube.slow_time_rate
    starts = np.arange(power.shape[0]) * hop
    return Spectrogram(
        power=power.T,
        window_s=window / rate,
        hop_s=hop / rate,
        doppler_bin_hz=rate / window,
        times_s=(starts + window / 2) / rate,
    )


def default_angle_grid(step_deg: float = 0.5, limit_deg: float = 80.0) -> np.ndarray:
    n = int(round(2 * limit_deg / step_deg)) + 1
    return np.deg2rad(np.linspace(-limit_deg, limit_deg, n))


def steering_matrix(cube: IQCube, angles: np.ndarray) -> np.ndarray:
    """``[channel, angle]`` ULA steering vectors for the cube's element spacing."""
    cfg = cube.config
    m = np.arange(cube.n_chan)[:, None]
    return np.exp(1j * m * 2 * np.pi * cfg.element_spacing_m * np.sin(angles)[None, :] / cfg.wavelength)


def music_range_angle(
    cube: IQCube,
    cpi_index: int,
    n_sources: int = 1,
    angle_grid=None,
    loading: float = 1e-6,
    scale_by_power: bool = False,
) -> RAFrame:
    """MUSIC pseudo-spectrum for every range bin of one CPI.

    The spatial covariance of each range bin is averaged over the CPI's
    slow-time snapshots and diagonally loaded with ``loading * trace / M``.
    With ``scale_by_power`` each row is max-normalised and weighted by the
    range bin's mean power, which is the form used for display and
    optical-flow enhancement.
    """
    if cube.channel_kind != "virtual":
        raise ValueError("MUSIC needs a virtual-array cube (run bpm_demux first)")
    m = cube.n_chan
    if not 1 <= n_sources < m:
        raise ValueError(f"n_sources must be in [1, {m - 1}], got {n_sources}")
    if not 0 <= cpi_index < cube.n_cpi:
        raise IndexError(f"CPI {cpi_index} out of range (cube holds {cube.n_cpi})")
    angles = default_angle_grid() if angle_grid is None else np.asarray(angle_grid, dtype=float)
    n = cube.cpi_length
    x = np.fft.fft(cube.data[:, cpi_index * n : (cpi_index + 1) * n, :], axis=0, norm="ortho")
    cov = np.einsum("rlm,rln->rmn", x, x.conj()) / n
    if not np.all(np.isfinite(cov)):
        raise FloatingPointError("spatial covariance is not finite")
    trace = np.real(np.trace(cov, axis1=1, axis2=2))
    cov = cov + (loading * trace / m)[:, None, None] * np.eye(m)
    _, vecs = np.linalg.eigh(cov)
    noise = vecs[:, :, : m - n_sources]
    a = steering_matrix(cube, angles)
    proj = np.einsum("rmk,ma->rka", noise.conj(), a)
    denom = np.sum(np.abs(proj) ** 2, axis=1)
    pseudo = 1.0 / np.maximum(denom, np.finfo(float).tiny)
    if scale_by_power:
        pseudo = pseudo / pseudo.max(axis=1, keepdims=True) * (trace / m)[:, None]
    rate = cube.slow_time_rate
    return RAFrame(pseudo, angles, cube.config.range_bin_m, cpi_index * n / rate)


def ra_video(cube: IQCube, n_sources: int = 1, angle_grid=None, scale_by_power: bool = True) -> list[RAFrame]:
    return [
        music_range_angle(cube, k, n_sources, angle_grid, scale_by_power=scale_by_power)
        for k in range(cube.n_cpi)
    ]


_HS_AVG = np.array([[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]])


def _hs_gradients(a: np.ndarray, b: np.ndarray):
    # first differences averaged over the 2x2x2 cube, replicated at the far edges
    pa = np.pad(a, ((0, 1), (0, 1)), mode="edge")
    pb = np.pad(b, ((0, 1), (0, 1)), mode="edge")

    def d_col(p):
        return (p[:-1, 1:] - p[:-1, :-1]) + (p[1:, 1:] - p[1:, :-1])

    def d_row(p):
        return (p[1:, :-1] - p[:-1, :-1]) + (p[1:, 1:] - p[:-1, 1:])

    def total(p):
        return p[:-1, :-1] + p[:-1, 1:] + p[1:, :-1] + p[1:, 1:]

    ex = 0.25 * (d_col(pa) + d_col(pb))
    ey = 0.25 * (d_row(pa) + d_row(pb))
    et = 0.25 * (total(pb) - total(pa))
    return ex, ey, et


def _neighbour_average(u: np.ndarray) -> np.ndarray:
    p = np.pad(u, 1, mode="edge")
    out = np.zeros_like(u)
    for di in range(3):
        for dj in range(3):
            w = _HS_AVG[di, dj]
            if w:
                out += w * p[di : di + u.shape[0], dj : dj + u.shape[1]]
    return out


def horn_schunck_flow(prev, next, alpha: float = 1.0, iters: int = 100) -> np.ndarray:
    """Per-pixel Horn-Schunck flow magnitude between two frames.

    Both frames are scaled by their joint maximum so ``alpha`` is independent
    of the frames' units. Accepts :class:`RAFrame` or plain arrays.
    """
    a = np.asarray(getattr(prev, "magnitude", prev), dtype=float)
    b = np.asarray(getattr(next, "magnitude", next), dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if alpha <= 0 or iters < 1:
        raise ValueError("alpha must be > 0 and iters >= 1")
    scale = max(np.abs(a).max(), np.abs(b).max())
    if scale > 0:
        a, b = a / scale, b / scale
    ex, ey, et = _hs_gradients(a, b)
    denom = alpha**2 + ex**2 + ey**2
    u = np.zeros_like(a)
    v = np.zeros_like(a)
    for _ in range(iters):
        ub, vb = _neighbour_average(u), _neighbour_average(v)
        common = (ex * ub + ey * vb + et) / denom
        u = ub - ex * common
        v = vb - ey * common
    return np.hypot(u, v)


def enhance_ra(frame: RAFrame, flow: np.ndarray) -> RAFrame:
    """Element-wise product of a range-angle frame with a flow-magnitude grid."""
    flow = np.asarray(flow, dtype=float)
    if flow.shape != frame.magnitude.shape:
        raise ValueError(f"flow shape {flow.shape} != frame shape {frame.magnitude.shape}")
    return RAFrame(frame.magnitude * flow, frame.angles_rad, frame.range_bin_m, frame.timestamp_s)


def music_peak_angle(frame: RAFrame, range_bin: int) -> float:
    return float(frame.angles_rad[int(np.argmax(frame.magnitude[range_bin]))])


def half_resolution(cube: IQCube, theta: float) -> float:
    """Half of the array's angular resolution at ``theta``."""
    return angular_resolution(cube.config, theta, cube.n_chan) / 2
