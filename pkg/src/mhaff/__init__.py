"""Multi-head attentional fusion of radiomics and CNN slice features
for lung-nodule subtype classification, with a synthetic phantom
generator for end-to-end verification.
"""

from .config import Config, parse_config
from .errors import MhaffError
from .fusion_model import ModelConfig, forward, init_params, predict
from .metrics import MetricsReport, compute_metrics
from .screening import sis_select
from .train_eval import TrainSettings, evaluate, train

__all__ = [
    "Config",
    "MetricsReport",
    "MhaffError",
    "ModelConfig",
    "TrainSettings",
    "compute_metrics",
    "evaluate",
    "forward",
    "init_params",
    "parse_config",
    "predict",
    "sis_select",
    "train",
]

__version__ = "0.1.0"
