"""Active multiple-instance learning with a distributionally robust bag likelihood."""

__version__ = "0.1.0"

from .active import ALConfig, ALCurve, TrainConfig, run_al, train_passive
from .bags import Bag, MilDataset, QueryLedger, remove_labeled_negative
from .datasets import SynthConfig, generate, read_dataset, write_dataset
from .dro import DroConfig, RobustWeights, chi2_robust_weights, kl_robust_weights, robust_weights
from .estimator import DRBLMILClassifier
from .metrics import average_precision, bag_pool_map
from .sampling import SamplerConfig, entropy_select, f_entropy, pf_select, random_select
from .validation import ConfigError, DegenerateBagError

__all__ = [
    "ALConfig", "ALCurve", "Bag", "ConfigError", "DRBLMILClassifier", "DegenerateBagError",
    "DroConfig", "MilDataset", "QueryLedger", "RobustWeights", "SamplerConfig", "SynthConfig",
    "TrainConfig", "average_precision", "bag_pool_map", "chi2_robust_weights", "entropy_select",
    "f_entropy", "generate", "kl_robust_weights", "pf_select", "random_select", "read_dataset",
    "remove_labeled_negative", "robust_weights", "run_al", "train_passive", "write_dataset",
]
