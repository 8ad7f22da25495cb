"""Online moving object detection with a correntropy-weighted low-rank
background and a Laplacian scale mixture foreground."""

from .config import ConfigError, SolverConfig, Variant
from .pipeline import FrameResult, SequenceSummary, Tracker, extract_mask, process_frame, process_sequence
from .solver_core import DegenerateSystemError, InvalidInputError

__all__ = [
    "ConfigError", "SolverConfig", "Variant", "FrameResult", "SequenceSummary", "Tracker",
    "extract_mask", "process_frame", "process_sequence", "DegenerateSystemError", "InvalidInputError",
]
__version__ = "0.1.0"
