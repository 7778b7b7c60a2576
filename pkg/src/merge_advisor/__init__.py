"""On-ramp merging speed guidance and trajectory denoising.

Modules: ``roadmodel`` (geometry), ``idm`` (car following), ``wavelet``
(denoising), ``guidance`` (per-step speed advice), ``sim`` (microsimulation),
``trajio`` (trajectory files and noise), ``experiments`` (paired sweeps).
"""

from .experiments import SweepSpec, fuel_saving, run_sweep
from .guidance import GuidanceCommand, MergeCriteria, Road, VehicleState
from .idm import IdmParams
from .roadmodel import RampGeometry, RampSegment
from .sim import CollisionError, ScenarioConfig, SimResult, run_scenario
from .wavelet import WaveletBasis, WaveletPipelineConfig

__version__ = "0.1.0"

__all__ = [
    "CollisionError", "GuidanceCommand", "IdmParams", "MergeCriteria", "RampGeometry",
    "RampSegment", "Road", "ScenarioConfig", "SimResult", "SweepSpec", "VehicleState",
    "WaveletBasis", "WaveletPipelineConfig", "fuel_saving", "run_scenario", "run_sweep",
]
