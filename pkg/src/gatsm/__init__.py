"""Generalized additive models for multivariate time series.

Time-shared neural basis feature functions feed a masked additive attention
module; every prediction splits exactly into per-step, per-feature terms.
"""
from .autograd import Tensor, backward, matmul, softmax_masked
from .datasets import Dataset, FeatureSpec, Sample, SeriesSchema, gen_seasonal, gen_tumor, \
    load_series, split, write_series
from .gradcheck import grad_check
from .interpret import (build_report, global_curve, local_time_dependent,
                        local_time_independent, time_step_importance)
from .model import GATSM, ModelConfig, build_variant
from .persistence import load, save
from .preprocessing import Preprocessor, fit_preprocessor
from .training import AdamW, TrainConfig, evaluate, train

__version__ = "0.1.0"
