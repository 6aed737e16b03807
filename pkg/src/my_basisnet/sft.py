"""Spectral Fine Tuning: joint training of basis filters and spectral weights under an orthogonality penalty,
plus the plain spatial fine tuning it is measured against.

For the Q basis filters f_i of a layer the penalty is

    J_f = alpha/Q * sum_i (1 - f_i.f_i)^2 + 2(1 - alpha)/(Q(Q-1)) * sum_{i<j} (f_i.f_j)^2

with the pairwise term taken as 0 when Q = 1. It is a soft penalty added to
the cross-entropy; the basis is never re-orthonormalized during training.
"""

import logging

import numpy as np

from .config import OrthoConfig, TrainConfig
from .errors import PlanError
from .nn import BasisConv, Conv, Network, TrainReport, train
from .spectral import EigenBasis, orthogonality_residual
from .tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)


def _flat(basis: EigenBasis | Tensor) -> Tensor:
    if isinstance(basis, EigenBasis):
        basis = basis.basis
    basis = as_tensor(basis)
    return basis.reshape(basis.shape[0], -1)


def ortho_loss(basis: EigenBasis | Tensor, alpha: float) -> float:
    """J_f of a basis [Q, L, D, D] (or an EigenBasis); 0 exactly when the basis is orthonormal."""
    flat = _flat(basis)
    rank = flat.shape[0]
    gram = flat @ flat.T
    loss = alpha / rank * float(np.sum((1.0 - np.diag(gram)) ** 2))
    if rank > 1:
        pairs = float(np.sum(np.triu(gram, 1) ** 2))
        loss += 2.0 * (1.0 - alpha) / (rank * (rank - 1)) * pairs
    return loss


def ortho_loss_grad(basis: EigenBasis | Tensor, alpha: float) -> Tensor:
    """dJ_f/df_i = -(4 alpha/Q)(1 - f_i.f_i) f_i + 4(1 - alpha)/(Q(Q-1)) sum_{j!=i} (f_i.f_j) f_j

    Returns:
        Tensor: Gradient with the shape of the basis filters.
    """
    flat = _flat(basis)
    rank = flat.shape[0]
    gram = flat @ flat.T
    norms = np.diag(gram)
    grad = -(4.0 * alpha / rank) * (1.0 - norms)[:, np.newaxis] * flat
    if rank > 1:
        off_diagonal = gram - np.diag(norms)
        grad += 4.0 * (1.0 - alpha) / (rank * (rank - 1)) * (off_diagonal @ flat)
    shape = basis.basis.shape if isinstance(basis, EigenBasis) else np.shape(basis)
    return grad.reshape(shape)


def max_orthogonality_residual(network: Network) -> float:
    """Largest ||F^T F - I||_max over the BasisConv layers of a network."""
    return max(
        (
            orthogonality_residual(layer.params["basis"])
            for layer in network.layers
            if isinstance(layer, BasisConv)
        ),
        default=0.0,
    )


class OrthoPenalty:
    """Training penalty weight * sum over BasisConv layers of J_f, with its gradient added to each basis."""

    def __init__(self, alpha: float = 0.5, weight: float = 1.0):
        self.alpha = alpha
        self.weight = weight

    def __call__(self, network: Network) -> float:
        total = 0.0
        if self.weight == 0:
            return total
        for layer in network.layers:
            if not isinstance(layer, BasisConv):
                continue
            basis = layer.params["basis"]
            total += ortho_loss(basis, self.alpha)
            if "basis" not in layer.frozen:
                layer.grads["basis"] = layer.grads["basis"] + self.weight * ortho_loss_grad(
                    basis, self.alpha
                )
        return self.weight * total

    def __str__(self):
        return f"OrthoPenalty(alpha={self.alpha}, weight={self.weight})"


def spectral_finetune(
    network: Network,
    dataset,
    train_config: TrainConfig,
    ortho_config: OrthoConfig | None = None,
) -> TrainReport:
    """Jointly fine-tune every BasisConv layer (basis, weights, bias) and Dense layer of a compressed network.

    The loss is cross-entropy + ortho_config.weight * sum_layers J_f. Remaining
    spatial Conv layers are held fixed. With ``freeze_basis`` only the spectral
    weights and biases move.

    Args:
        network (Network): Compressed network (mutated).
        dataset: Training data.
        train_config (TrainConfig): SGD hyperparameters.
        ortho_config (OrthoConfig | None, optional): Penalty settings. Defaults to
            OrthoConfig(alpha=train_config.ortho_alpha, weight=train_config.ortho_weight).

    Raises:
        PlanError: If the network has no BasisConv layer.
        DivergenceError: If the loss becomes NaN.

    Returns:
        TrainReport: Per-epoch loss, accuracy, penalty and max orthogonality residual.
    """
    if ortho_config is None:
        ortho_config = OrthoConfig(train_config.ortho_alpha, train_config.ortho_weight)
    if not any(isinstance(layer, BasisConv) for layer in network.layers):
        raise PlanError("spectral_finetune needs at least one BasisConv layer.")
    previous = [set(layer.frozen) for layer in network.layers]
    for layer in network.layers:
        if isinstance(layer, Conv):
            layer.frozen = set(layer.param_names)
        elif isinstance(layer, BasisConv) and ortho_config.freeze_basis:
            layer.frozen = layer.frozen | {"basis"}

    def record_residual(epoch: int, report: TrainReport) -> None:
        report.ortho_residuals.append(max_orthogonality_residual(network))
        logger.info("epoch %d orthogonality residual %.3e", epoch, report.ortho_residuals[-1])

    try:
        return train(
            network,
            dataset,
            train_config,
            penalty=OrthoPenalty(ortho_config.alpha, ortho_config.weight),
            on_epoch=record_residual,
        )
    finally:
        for layer, frozen in zip(network.layers, previous):
            layer.frozen = frozen


def spatial_finetune(network: Network, dataset, train_config: TrainConfig) -> TrainReport:
    """Conventional fine tuning: every layer trains on the cross-entropy alone, no penalty.

    On an uncompressed network this tunes the original spatial filters, giving
    the loss curve that spectral_finetune is compared against.

    Raises:
        PlanError: If the network has no Conv layer.
        DivergenceError: If the loss becomes NaN.
    """
    if not any(isinstance(layer, Conv) for layer in network.layers):
        raise PlanError("spatial_finetune needs at least one Conv layer.")
    previous = [set(layer.frozen) for layer in network.layers]
    for layer in network.layers:
        layer.frozen = set()
    try:
        return train(network, dataset, train_config)
    finally:
        for layer, frozen in zip(network.layers, previous):
            layer.frozen = frozen
