"""Single serialisable document holding every tunable pipeline constant.

The document is YAML. Loading rejects unknown keys and checks each section's
invariants by building the matching module object.
"""

from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, field, fields

import yaml

from .datacube import RadarConfig
from .motiondetect import StaLtaConfig
from .seqdecode import TriggerConfig

__all__ = [
    "ConfigError",
    "RadarSection",
    "CfarSection",
    "StftSection",
    "MusicSection",
    "FlowSection",
    "EnvelopeSection",
    "MotionSection",
    "ScorerSection",
    "TriggerSection",
    "FidelitySection",
    "PipelineConfig",
    "load_config",
    "dump_config",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed or invalid configuration document."""


@dataclass(frozen=True)
class RadarSection:
    """Acquisition parameters used by ``simulate`` when a scene names none."""

    carrier_hz: float = 77e9
    bandwidth_hz: float = 1e9
    prf_hz: float = 3.2e3
    samples_per_pulse: int = 32
    pulses_per_cpi: int = 128
    n_tx: int = 1
    n_rx: int = 1
    element_spacing_m: float | None = None
    bpm_enabled: bool = False

    def build(self) -> RadarConfig:
        return RadarConfig(**asdict(self))


@dataclass(frozen=True)
class CfarSection:
    guard: int = 1
    train: int = 3
    pfa: float = 1e-6
    min_frames: int = 1

    def validate(self):
        if self.guard < 1 or self.train < 1:
            raise ValueError("CFAR guard and train must be at least 1")
        if not 0 < self.pfa < 1:
            raise ValueError("CFAR pfa must lie in (0, 1)")
        if self.min_frames < 1:
            raise ValueError("min_frames must be at least 1")


@dataclass(frozen=True)
class StftSection:
    """Display spectrogram window and hop in seconds. The analysis spectrogram
    always uses non-overlapping windows of one time step."""

    window_s: float = 0.2
    hop_s: float = 0.1
    step_s: float = 0.2
    combine: str = "power"

    def validate(self):
        if min(self.window_s, self.hop_s, self.step_s) <= 0:
            raise ValueError("STFT window, hop and step must be positive")
        if self.combine not in ("power", "coherent"):
            raise ValueError(f"unknown range-bin combination {self.combine!r}")


@dataclass(frozen=True)
class MusicSection:
    n_sources: int = 1
    loading: float = 1e-6
    step_deg: float = 0.5
    limit_deg: float = 80.0

    def validate(self):
        if self.n_sources < 1:
            raise ValueError("n_sources must be at least 1")
        if self.loading < 0:
            raise ValueError("diagonal loading must be non-negative")
        if not (self.step_deg > 0 and 0 < self.limit_deg < 90):
            raise ValueError("angle grid must lie inside (-90, 90) degrees")


@dataclass(frozen=True)
class FlowSection:
    alpha: float = 1.0
    iters: int = 100

    def validate(self):
        if self.alpha <= 0 or self.iters < 1:
            raise ValueError("Horn-Schunck needs alpha > 0 and iters >= 1")


@dataclass(frozen=True)
class EnvelopeSection:
    p_low: float = 0.025
    p_high: float = 0.975
    smooth: bool = False

    def validate(self):
        if not 0 < self.p_low < self.p_high < 1:
            raise ValueError("need 0 < p_low < p_high < 1")


@dataclass(frozen=True)
class MotionSection:
    t1_steps: int = 2
    t2_steps: int = 10
    sigma1: float = 0.06
    sigma2: float = 2.0
    sigma3: float = 0.03
    min_steps: int = 2
    fixed_window_s: float = 1.2
    pbc_threshold: float = 0.06

    def build(self) -> StaLtaConfig:
        return StaLtaConfig(self.t1_steps, self.t2_steps, self.sigma1, self.sigma2, self.sigma3)

    def validate(self):
        self.build()
        if self.min_steps < 1:
            raise ValueError("min_steps must be at least 1")
        if self.fixed_window_s <= 0 or self.pbc_threshold <= 0:
            raise ValueError("fixed window and PBC threshold must be positive")


@dataclass(frozen=True)
class ScorerSection:
    n_bands: int = 16
    band_limit_hz: float = 640.0
    dc_bins: int = 2
    max_templates: int = 8
    temperature: float = 0.05
    context_steps: int = 5
    energy_floor: float = 0.03
    blank_floor: float = 0.9

    def validate(self):
        if self.n_bands < 1 or self.context_steps < 1 or self.max_templates < 1:
            raise ValueError("n_bands, context_steps and max_templates must be at least 1")
        if self.band_limit_hz <= 0 or self.dc_bins < 0:
            raise ValueError("band_limit_hz must be positive and dc_bins non-negative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.5 < self.blank_floor < 1:
            raise ValueError("blank_floor must lie in (0.5, 1)")


@dataclass(frozen=True)
class TriggerSection:
    trigger_class: str = "teacher"
    gamma: float = 0.5
    gamma_low: float = 0.25
    dwell_fraction: float = 0.5

    def build(self) -> TriggerConfig:
        return TriggerConfig(self.trigger_class, self.gamma, self.gamma_low, self.dwell_fraction)

    def validate(self):
        self.build()


@dataclass(frozen=True)
class FidelitySection:
    eps: float = 1e-6
    k: int = 15

    def validate(self):
        if self.eps <= 0 or self.k < 1:
            raise ValueError("eps must be positive and k at least 1")


@dataclass(frozen=True)
class PipelineConfig:
    radar: RadarSection = field(default_factory=RadarSection)
    cfar: CfarSection = field(default_factory=CfarSection)
    stft: StftSection = field(default_factory=StftSection)
    music: MusicSection = field(default_factory=MusicSection)
    flow: FlowSection = field(default_factory=FlowSection)
    envelope: EnvelopeSection = field(default_factory=EnvelopeSection)
    motion: MotionSection = field(default_factory=MotionSection)
    scorer: ScorerSection = field(default_factory=ScorerSection)
    trigger: TriggerSection = field(default_factory=TriggerSection)
    fidelity: FidelitySection = field(default_factory=FidelitySection)

    def validate(self) -> "PipelineConfig":
        for f in fields(self):
            section = getattr(self, f.name)
            try:
                if hasattr(section, "validate"):
                    section.validate()
                else:
                    section.build()
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{f.name}: {exc}") from exc
        return self

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **asdict(self)}

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a mapping")
        doc = dict(doc)
        version = doc.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}")
        known = {f.name: f for f in fields(cls)}
        unknown = set(doc) - set(known)
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
        sections = {}
        for name, value in doc.items():
            section_cls = known[name].default_factory
            sections[name] = _section_from_dict(name, section_cls, value)
        return cls(**sections).validate()


def _section_from_dict(name: str, section_cls, value):
    if value is None:
        return section_cls()
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    allowed = {f.name: f for f in dataclasses.fields(section_cls)}
    unknown = set(value) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(sorted(unknown))}")
    defaults = section_cls()
    for key, v in value.items():
        default = getattr(defaults, key)
        if default is None:
            continue
        expected = type(default)
        if expected is float and isinstance(v, int) and not isinstance(v, bool):
            continue
        if not isinstance(v, expected) or (expected is not bool and isinstance(v, bool)):
            raise ConfigError(f"{name}.{key} must be {expected.__name__}, got {type(v).__name__}")
    try:
        return section_cls(**value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def load_config(path=None) -> PipelineConfig:
    """Read a YAML configuration; ``None`` gives the defaults."""
    if path is None:
        return PipelineConfig().validate()
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return PipelineConfig.from_dict(doc or {})


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
