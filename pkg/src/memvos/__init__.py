"""Memory-based semi-supervised video object segmentation at desk scale."""
from .numerics import ContractError
from .pixel_memory import MemoryBank, MemoryConfig, MemoryFrame, route_hyperparams
from .pipeline import Model, ModelConfig, VideoTask, run_video, run_video_with_tta
from .result import SegmentationResult

__all__ = [
    "ContractError",
    "MemoryBank",
    "MemoryConfig",
    "MemoryFrame",
    "Model",
    "ModelConfig",
    "SegmentationResult",
    "VideoTask",
    "route_hyperparams",
    "run_video",
    "run_video_with_tta",
]

__version__ = "0.1.0"
