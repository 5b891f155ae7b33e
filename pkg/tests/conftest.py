import math

import numpy as np
import pytest
from hypothesis import settings

from rfsign.datacube import RadarConfig
from rfsign.synth import Scatterer, Scene, Trajectory, VelocitySegment

# compiled kernels make first calls slow, so wall-clock deadlines are meaningless
settings.register_profile("rfsign", deadline=None)
settings.load_profile("rfsign")


@pytest.fixture
def radar77_config():
    return RadarConfig()


@pytest.fixture
def small_bpm_config():
    """77 GHz BPM waveform with fewer samples so simulations stay fast."""
    return RadarConfig(samples_per_pulse=64, pulses_per_cpi=64)


def point_scene(range_m, velocity, angle_deg=0.0, duration=0.04, noise_power=0.0, seed=0, amplitude=1.0):
    segs = (VelocitySegment(0.0, duration + 1.0, offset_mps=velocity),) if velocity else ()
    s = Scatterer(Trajectory(range_m, math.radians(angle_deg), segs), amplitude=amplitude)
    return Scene(scatterers=(s,), noise_power=noise_power, duration_s=duration, seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def sequence_run():
    """One simulated kind-3 sequence pushed through the processing stages."""
    from rfsign.pipeline import process_cube
    from rfsign.synth import make_sequence_scene, sequence_radar_config, simulate

    scene = make_sequence_scene(3, seed=11)
    cube, truth = simulate(scene, sequence_radar_config())
    return scene, truth, process_cube(cube)


# --- acceptance report ---------------------------------------------------------

N_CRITERIA = 9
_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    """Record the outcome of one acceptance criterion for the closing summary."""
    results = request.config.stash[_ACCEPTANCE]

    def record(number: int, ok: bool, detail: str):
        results[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in results:
            ok, detail = results[n]
            terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        else:
            terminalreporter.write_line(f"criterion {n}: FAIL (not run to completion in this session)")
