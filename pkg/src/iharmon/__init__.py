"""Region-guided image harmonization: match a pasted foreground to a
user-chosen reference region of the background."""

from .imaging import ColorTransform, EmptyRegionError
from .inference import BlendRatios, HarmonizeRequest, HarmonizeResult, harmonize
from .losses import LossReport, LossWeights
from .model import ModelBundle, ModelConfig, load_bundle, save_bundle
from .weights import ArchiveError, WeightArchive

__version__ = "0.1.0"

__all__ = [
    "ArchiveError",
    "BlendRatios",
    "ColorTransform",
    "EmptyRegionError",
    "HarmonizeRequest",
    "HarmonizeResult",
    "LossReport",
    "LossWeights",
    "ModelBundle",
    "ModelConfig",
    "WeightArchive",
    "harmonize",
    "load_bundle",
    "save_bundle",
    "__version__",
]
