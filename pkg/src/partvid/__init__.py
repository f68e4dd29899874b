"""Video portrait segmentation via per-part cross-frame attention."""

from .config import AugmentConfig, GlcmConfig, TrainConfig
from .dataio import ClipDescriptor, SamplePair, scan_dataset
from .engine import Trainer, evaluate_model, infer_clip, load_checkpoint, save_checkpoint
from .losses import LossReport
from .metrics import BenchmarkReport, FrameScore, contour_f, glcm_entropy, jaccard
from .network import PortraitSegNet, build_model

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "BenchmarkReport",
    "ClipDescriptor",
    "FrameScore",
    "GlcmConfig",
    "LossReport",
    "PortraitSegNet",
    "SamplePair",
    "TrainConfig",
    "Trainer",
    "build_model",
    "contour_f",
    "evaluate_model",
    "glcm_entropy",
    "infer_clip",
    "jaccard",
    "load_checkpoint",
    "save_checkpoint",
    "scan_dataset",
    "__version__",
]
