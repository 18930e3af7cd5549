"""Virtual earthworm neuromuscular testbed.

Simulates burst sinusoidal stimulation of the giant fibers, a four-pair
recording array and body kinematics, then analyses the result the same way
a bench recording would be analysed.
"""

__version__ = "0.1.0"

from .stimgen import StimulusParams, generate_waveform, pulse_charge  # noqa: E402
from .wormsim import FiberParams, WormModel, evoke_spikes  # noqa: E402
from .arraysim import ArrayGeometry, NoiseModel, synthesize_recording  # noqa: E402
from .dsp import FilterSpec, detect_spikes, estimate_velocity  # noqa: E402
from .sdfit import SDFit, SDPoint, fit, predict_threshold  # noqa: E402
from .looper import build_sd_map, find_threshold, grid_sweep, optimize_min_charge  # noqa: E402
from .motionkin import MotionTrace, htm_ttm_correlation, vector_lengths  # noqa: E402

__all__ = [
    "ArrayGeometry", "FiberParams", "FilterSpec", "MotionTrace", "NoiseModel", "SDFit", "SDPoint",
    "StimulusParams", "WormModel", "build_sd_map", "detect_spikes", "estimate_velocity", "evoke_spikes",
    "find_threshold", "fit", "generate_waveform", "grid_sweep", "htm_ttm_correlation", "optimize_min_charge",
    "predict_threshold", "pulse_charge", "synthesize_recording", "vector_lengths",
]
