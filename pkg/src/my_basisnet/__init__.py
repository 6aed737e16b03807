from .accounting import MetricsReport, bench_inference, compare, count_layer
from .compress import (
    CompressionPlan,
    apply_plan,
    load_plan,
    plan_by_accuracy,
    plan_by_energy,
    plan_by_speedup,
    save_plan,
)
from .config import OrthoConfig, TrainConfig
from .datasets import Dataset, DatasetSource, load_dataset, synthetic_shapes
from .ledger import RunLedger, RunRecord
from .nn import BasisConv, Conv, Network, evaluate, reference_network, train
from .serialization import load_model, save_model
from .sft import ortho_loss, ortho_loss_grad, spectral_finetune
from .spectral import EigenBasis, FilterBank, SpectralWeights, eigen_decompose, energy_ratio, reconstruct

__all__ = [
    "MetricsReport",
    "bench_inference",
    "compare",
    "count_layer",
    "CompressionPlan",
    "apply_plan",
    "load_plan",
    "plan_by_accuracy",
    "plan_by_energy",
    "plan_by_speedup",
    "save_plan",
    "OrthoConfig",
    "TrainConfig",
    "Dataset",
    "DatasetSource",
    "load_dataset",
    "synthetic_shapes",
    "RunLedger",
    "RunRecord",
    "BasisConv",
    "Conv",
    "Network",
    "evaluate",
    "reference_network",
    "train",
    "load_model",
    "save_model",
    "ortho_loss",
    "ortho_loss_grad",
    "spectral_finetune",
    "EigenBasis",
    "FilterBank",
    "SpectralWeights",
    "eigen_decompose",
    "energy_ratio",
    "reconstruct",
]
