"""Radar sign-stream processing: FMCW representations, motion segmentation,
sign fidelity scoring and trigger detection, with a point-scatterer simulator."""

from .datacube import IQCube, RadarConfig, bpm_demux, load_cube, save_cube
from .config import PipelineConfig, load_config
from .synth import Scene, make_sequence_scene, sequence_radar_config, simulate

__version__ = "0.1.0"

__all__ = [
    "IQCube",
    "RadarConfig",
    "bpm_demux",
    "load_cube",
    "save_cube",
    "PipelineConfig",
    "load_config",
    "Scene",
    "make_sequence_scene",
    "sequence_radar_config",
    "simulate",
]
