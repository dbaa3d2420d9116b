"""Lane marking detection with a dilated encoder-decoder network."""
from .graph import build_lmd, forward, param_count, receptive_field
from .pipeline import PostprocessConfig, postprocess
from .weights import WeightStore, load, random_init, save

__all__ = [
    "build_lmd",
    "forward",
    "param_count",
    "receptive_field",
    "PostprocessConfig",
    "postprocess",
    "WeightStore",
    "load",
    "random_init",
    "save",
]
__version__ = "0.1.0"
