"""Adaptive multi-strategy coreset selection with a linear probe model."""

from .controller import ControllerConfig, ControllerState
from .dataset import Dataset, SplitSpec, load_binary, load_csv, split_pool_val, stratified_sample
from .selection import (RunConfig, SelectionRun, baseline_kcenter, baseline_random, baseline_uncertainty,
                        run_method, run_mode)
from .streaming import run_streaming

__version__ = "0.1.0"
