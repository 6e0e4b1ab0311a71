"""Random forests with an unrestricted bootstrap rate."""

from .data import Dataset, load_bundled, preprocess, load_csv, stratified_two_fold
from .forest import ForestConfig, RandomForest, bootstrap_sample, fit_forest, named_configs
from .tree import TreeConfig

__version__ = "0.1.0"

__all__ = ["Dataset", "ForestConfig", "RandomForest", "TreeConfig", "bootstrap_sample", "fit_forest",
           "load_bundled", "load_csv", "named_configs", "preprocess", "stratified_two_fold"]
