"""driftdem: time-resolved estimation of drifting detector-error-model rates.

Estimates the per-edge error probabilities of a quantum-error-correction
detector error model directly from syndrome data, tracking their drift in
time with sliding-window, iterative sliding-window, and relative
overlapping-window estimators. A bit-packed Pauli-frame simulator supplies
ground truth and an exact matching decoder quantifies the logical-error
impact of the estimated models.
"""

from .noise import (
    DriftProfile,
    LocationChannel,
    NoiseAssignment,
    SineComponent,
    depolarize_probabilities,
    sample_rate,
    sine_profile,
    static_profile,
    uniform_assignment,
)
from .code_models import (
    CodeLayout,
    EdgeClass,
    build_repetition,
    build_rotated_surface_x,
    derive_edge_classes,
    ground_truth_edge_series,
)
from .sim import DetectionData, read_detections, run_memory, write_detections
from .dem import (
    DemGrid,
    TimeVaryingDem,
    edge_weight,
    ground_truth_dem,
    instantiate,
    load_dem,
    save_dem,
    slice_dem,
    static_collapse,
)
from .estimator import (
    EstimatedSeries,
    SpectralResponse,
    boundary_probability,
    bulk_probability,
    correct_single_frequency,
    dem_from_estimates,
    dft,
    dirichlet_gain,
    dirichlet_phase,
    dirichlet_response,
    optimal_window,
    sliding_series,
    window_counts,
    window_sigma,
)
from .iterative import FourierModel, WindowSchedule, cutoff_index, decompose, fit_window, reconstruct
from .relative import relative_estimate, savitzky_golay
from .decoder import DecodeReport, logical_error_rate, mwpm_decode, pairwise_distances, relative_delta

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
