"""Layers, sequential networks and the SGD training loop."""

import copy
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Protocol

import numpy as np

from . import asserter
from .config import TrainConfig
from .errors import DataError, DimensionError, DivergenceError, RankError
from .tensor import Tensor, as_tensor, conv2d_backward, conv2d_forward, matmul, output_extent

logger = logging.getLogger(__name__)


class LayerKind(str, Enum):
    CONV = "Conv"
    BASIS_CONV = "BasisConv"
    DENSE = "Dense"
    RELU = "ReLU"
    MAX_POOL = "MaxPool"
    FLATTEN = "Flatten"


_REQUIRED_HYPERPARAMS = {
    LayerKind.CONV: ("in_channels", "out_channels", "kernel", "stride", "pad"),
    LayerKind.BASIS_CONV: ("in_channels", "out_channels", "rank", "kernel", "stride", "pad"),
    LayerKind.DENSE: ("in_features", "out_features"),
    LayerKind.RELU: (),
    LayerKind.MAX_POOL: ("size",),
    LayerKind.FLATTEN: (),
}


@dataclass(frozen=True)
class LayerSpec:
    """Kind and integer hyperparameters of one layer (P, D, stride, pad, Q where applicable)."""

    kind: LayerKind
    hyperparams: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        expected = _REQUIRED_HYPERPARAMS[self.kind]
        missing = [name for name in expected if name not in self.hyperparams]
        if missing:
            raise ValueError(f"{self.kind.value} spec is missing hyperparams {missing}.")
        hp = self.hyperparams
        if self.kind in (LayerKind.CONV, LayerKind.BASIS_CONV):
            asserter.positive_int(
                f"{self.kind.value}: ",
                in_channels=hp["in_channels"],
                out_channels=hp["out_channels"],
                kernel=hp["kernel"],
                stride=hp["stride"],
            )
            asserter.non_negative_int(f"{self.kind.value}: ", pad=hp["pad"])
        if self.kind == LayerKind.BASIS_CONV:
            full = min(hp["out_channels"], hp["in_channels"] * hp["kernel"] ** 2)
            if not 1 <= hp["rank"] <= full:
                raise RankError(f"BasisConv rank Q={hp['rank']} outside [1, {full}].")
        if self.kind == LayerKind.DENSE:
            asserter.positive_int(
                "Dense: ", in_features=hp["in_features"], out_features=hp["out_features"]
            )
        if self.kind == LayerKind.MAX_POOL:
            asserter.positive_int("MaxPool: ", size=hp["size"])

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "hyperparams": dict(self.hyperparams)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LayerSpec":
        return cls(
            LayerKind(data["kind"]),
            {k: int(v) for k, v in data.get("hyperparams", {}).items()},
        )


class Layer:
    """Base layer. Parameters live in ``params``; ``backward`` fills ``grads`` with the same keys."""

    kind: LayerKind
    param_names: tuple[str, ...] = ()

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.grads: dict[str, Tensor] = {}
        self.frozen: set[str] = set()
        self._input: Tensor | None = None

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind, self._hyperparams())

    def validate(self) -> None:
        """Raise if the hyperparameters violate the LayerSpec invariants."""
        LayerSpec(self.kind, self._hyperparams())

    def _hyperparams(self) -> dict[str, int]:
        return {}

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(input_shape)

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def backward(self, grad: Tensor) -> Tensor:
        raise NotImplementedError

    def _require_forward(self) -> Tensor:
        assert self._input is not None, "forward() must be called before backward()"
        return self._input

    def __repr__(self) -> str:
        hp = ", ".join(f"{k}={v}" for k, v in self._hyperparams().items())
        return f"<{self.kind.value}({hp})>"


def _he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    return rng.normal(0.0, 1.0, size=shape) * np.sqrt(2.0 / fan_in)


class Conv(Layer):
    """Spatial convolution with P filters of shape [L, D, D] and a bias per filter."""

    kind = LayerKind.CONV
    param_names = ("weight", "bias")

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        pad: int = 0,
        rng: np.random.Generator | None = None,
        weight: Tensor | None = None,
        bias: Tensor | None = None,
    ):
        super().__init__()
        self.stride = stride
        self.pad = pad
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.validate()
        shape = (out_channels, in_channels, kernel, kernel)
        if weight is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weight = _he_normal(rng, shape, in_channels * kernel * kernel)
        weight = as_tensor(weight).copy()
        if weight.shape != shape:
            raise DimensionError(f"Conv weight has shape {weight.shape}, expected {shape}.", axis="weight")
        self.params["weight"] = weight
        self.params["bias"] = np.zeros(out_channels) if bias is None else as_tensor(bias).copy()

    def _hyperparams(self) -> dict[str, int]:
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "stride": self.stride,
            "pad": self.pad,
        }

    def output_shape(self, input_shape):
        channels, height, width = input_shape
        asserter.same_extent("Conv: ", channels=(channels, self.in_channels))
        return (
            self.out_channels,
            output_extent(height, self.kernel, self.stride, self.pad),
            output_extent(width, self.kernel, self.stride, self.pad),
        )

    def forward(self, x):
        self._input = x
        return conv2d_forward(x, self.params["weight"], self.params["bias"], self.stride, self.pad)

    def backward(self, grad):
        grad_input, grad_weight, grad_bias = conv2d_backward(
            self._require_forward(), self.params["weight"], grad, self.stride, self.pad
        )
        self.grads = {"weight": grad_weight, "bias": grad_bias}
        return grad_input


class BasisConv(Layer):
    """Two-stage replacement of a Conv layer.

    Stage one convolves the input with Q shared basis filters [Q, L, D, D] into
    Q planes z_i. Stage two mixes them with the spectral weights [P, Q] as a
    1x1 convolution and adds the original bias [P].
    """

    kind = LayerKind.BASIS_CONV
    param_names = ("basis", "weights", "bias")

    def __init__(
        self,
        basis: Tensor,
        weights: Tensor,
        bias: Tensor,
        stride: int = 1,
        pad: int = 0,
    ):
        super().__init__()
        basis = as_tensor(basis).copy()
        weights = as_tensor(weights).copy()
        bias = as_tensor(bias).copy()
        asserter.ndim("basis", basis, (4,))
        asserter.ndim("weights", weights, (2,))
        asserter.same_extent(
            "BasisConv: ",
            rank=(weights.shape[1], basis.shape[0]),
            bias=(bias.shape[0], weights.shape[0]),
            kernel=(basis.shape[3], basis.shape[2]),
        )
        self.stride = stride
        self.pad = pad
        self.params = {"basis": basis, "weights": weights, "bias": bias}
        self.validate()
        self._planes: Tensor | None = None

    @property
    def rank(self) -> int:
        return self.params["basis"].shape[0]

    @property
    def in_channels(self) -> int:
        return self.params["basis"].shape[1]

    @property
    def kernel(self) -> int:
        return self.params["basis"].shape[2]

    @property
    def out_channels(self) -> int:
        return self.params["weights"].shape[0]

    def _hyperparams(self):
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "rank": self.rank,
            "kernel": self.kernel,
            "stride": self.stride,
            "pad": self.pad,
        }

    def output_shape(self, input_shape):
        channels, height, width = input_shape
        asserter.same_extent("BasisConv: ", channels=(channels, self.in_channels))
        return (
            self.out_channels,
            output_extent(height, self.kernel, self.stride, self.pad),
            output_extent(width, self.kernel, self.stride, self.pad),
        )

    def forward(self, x):
        self._input = x
        self._planes = conv2d_forward(x, self.params["basis"], None, self.stride, self.pad)
        return _mix_planes(self, self._planes)

    def backward(self, grad):
        x = self._require_forward()
        grad_input, grad_basis, grad_weights, grad_bias = _basisconv_grads(
            self, x, self._planes, grad
        )
        self.grads = {"basis": grad_basis, "weights": grad_weights, "bias": grad_bias}
        return grad_input


def _mix_planes(layer: BasisConv, planes: Tensor) -> Tensor:
    weights = layer.params["weights"]
    return conv2d_forward(planes, weights[:, :, np.newaxis, np.newaxis], layer.params["bias"], 1, 0)


def _basisconv_grads(layer: BasisConv, x: Tensor, planes: Tensor, grad_out: Tensor):
    weights = layer.params["weights"][:, :, np.newaxis, np.newaxis]
    grad_planes, grad_weights, grad_bias = conv2d_backward(planes, weights, grad_out, 1, 0)
    grad_input, grad_basis, _ = conv2d_backward(
        x, layer.params["basis"], grad_planes, layer.stride, layer.pad
    )
    return grad_input, grad_basis, grad_weights[:, :, 0, 0], grad_bias


def basisconv_forward(layer: BasisConv, input: Tensor) -> Tensor:
    """Compute the Q planes z_i = input * f_i once, then output[k] = sum_i w_k(i) z_i + bias[k].

    Raises:
        DimensionError: If the input channels do not match the basis filters.
    """
    planes = conv2d_forward(input, layer.params["basis"], None, layer.stride, layer.pad)
    return _mix_planes(layer, planes)


def basisconv_backward(
    layer: BasisConv, input: Tensor, grad_out: Tensor
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Exact gradients of basisconv_forward.

    Returns:
        tuple: (grad_input, grad_basis [Q,L,D,D], grad_weights [P,Q], grad_bias [P]).
    """
    planes = conv2d_forward(input, layer.params["basis"], None, layer.stride, layer.pad)
    return _basisconv_grads(layer, as_tensor(input), planes, grad_out)


class Dense(Layer):
    kind = LayerKind.DENSE
    param_names = ("weight", "bias")

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator | None = None,
        weight: Tensor | None = None,
        bias: Tensor | None = None,
    ):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.validate()
        if weight is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weight = _he_normal(rng, (in_features, out_features), in_features)
        self.params["weight"] = as_tensor(weight).copy()
        asserter.same_extent(
            "Dense weight: ",
            in_features=(self.params["weight"].shape[0], in_features),
            out_features=(self.params["weight"].shape[-1], out_features),
        )
        self.params["bias"] = np.zeros(out_features) if bias is None else as_tensor(bias).copy()

    def _hyperparams(self):
        return {"in_features": self.in_features, "out_features": self.out_features}

    def output_shape(self, input_shape):
        asserter.same_extent("Dense: ", in_features=(int(np.prod(input_shape)), self.in_features))
        return (self.out_features,)

    def forward(self, x):
        self._input = x
        return matmul(x, self.params["weight"]) + self.params["bias"]

    def backward(self, grad):
        x = self._require_forward()
        self.grads = {"weight": x.T @ grad, "bias": grad.sum(axis=0)}
        return grad @ self.params["weight"].T


class ReLU(Layer):
    kind = LayerKind.RELU

    def forward(self, x):
        self._input = x
        return np.maximum(x, 0.0)

    def backward(self, grad):
        return grad * (self._require_forward() > 0)


class MaxPool(Layer):
    """Non-overlapping max pooling (window = stride = size); ties go to the first position."""

    kind = LayerKind.MAX_POOL

    def __init__(self, size: int = 2):
        super().__init__()
        self.size = size
        self.validate()
        self._argmax: Tensor | None = None

    def _hyperparams(self):
        return {"size": self.size}

    def output_shape(self, input_shape):
        channels, height, width = input_shape
        if height < self.size or width < self.size:
            raise DimensionError(
                f"MaxPool window {self.size} larger than input {height}x{width}.", axis="height"
            )
        return (channels, height // self.size, width // self.size)

    def _windows(self, x: Tensor) -> Tensor:
        n, channels, height, width = x.shape
        k = self.size
        out_h, out_w = height // k, width // k
        cropped = x[:, :, : out_h * k, : out_w * k]
        return (
            cropped.reshape(n, channels, out_h, k, out_w, k)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, channels, out_h, out_w, k * k)
        )

    def forward(self, x):
        self._input = x
        windows = self._windows(x)
        self._argmax = windows.argmax(axis=-1)
        return np.take_along_axis(windows, self._argmax[..., np.newaxis], axis=-1)[..., 0]

    def backward(self, grad):
        x = self._require_forward()
        n, channels, height, width = x.shape
        k = self.size
        out_h, out_w = grad.shape[2], grad.shape[3]
        windows = np.zeros((n, channels, out_h, out_w, k * k))
        np.put_along_axis(windows, self._argmax[..., np.newaxis], grad[..., np.newaxis], axis=-1)
        grad_input = np.zeros_like(x)
        grad_input[:, :, : out_h * k, : out_w * k] = (
            windows.reshape(n, channels, out_h, out_w, k, k)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, channels, out_h * k, out_w * k)
        )
        return grad_input


class Flatten(Layer):
    kind = LayerKind.FLATTEN

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x):
        self._input = x
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._require_forward().shape)


def layer_from_spec(
    spec: LayerSpec,
    params: dict[str, Tensor] | None = None,
    rng: np.random.Generator | None = None,
) -> Layer:
    """Build a layer from its spec, with given parameters or a fresh initialization."""
    hp = spec.hyperparams
    params = params or {}
    if spec.kind == LayerKind.CONV:
        return Conv(
            hp["in_channels"], hp["out_channels"], hp["kernel"], hp["stride"], hp["pad"],
            rng=rng, weight=params.get("weight"), bias=params.get("bias"),
        )
    if spec.kind == LayerKind.BASIS_CONV:
        if not params:
            rng = rng if rng is not None else np.random.default_rng(0)
            shape = (hp["rank"], hp["in_channels"], hp["kernel"], hp["kernel"])
            flat, _ = np.linalg.qr(rng.normal(size=(int(np.prod(shape[1:])), shape[0])))
            params = {
                "basis": flat.T.reshape(shape),
                "weights": _he_normal(rng, (hp["out_channels"], hp["rank"]), hp["rank"]),
                "bias": np.zeros(hp["out_channels"]),
            }
        return BasisConv(params["basis"], params["weights"], params["bias"], hp["stride"], hp["pad"])
    if spec.kind == LayerKind.DENSE:
        return Dense(
            hp["in_features"], hp["out_features"], rng=rng,
            weight=params.get("weight"), bias=params.get("bias"),
        )
    if spec.kind == LayerKind.RELU:
        return ReLU()
    if spec.kind == LayerKind.MAX_POOL:
        return MaxPool(hp["size"])
    return Flatten()


class Network:
    """A sequential stack of layers with a fixed [C, H, W] input shape."""

    def __init__(self, input_shape: tuple[int, int, int], layers: list[Layer]):
        asserter.list_of(layers, Layer, title="Network layers: ")
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers = layers
        self.shapes = self._propagate_shapes()

    def _propagate_shapes(self) -> list[tuple[int, ...]]:
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        return shapes

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1]

    @property
    def specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.layers]

    def input_shape_of(self, index: int) -> tuple[int, ...]:
        return self.shapes[index]

    def replace(self, index: int, layer: Layer) -> None:
        """Swap the layer at index, checking that the output shape is unchanged."""
        before = self.layers[index].output_shape(self.shapes[index])
        after = layer.output_shape(self.shapes[index])
        asserter.same_extent(f"replace layer {index}: ", output=(after, before))
        self.layers[index] = layer

    def forward(self, x: Tensor) -> Tensor:
        """Run a batch [N, C, H, W] (or one sample [C, H, W]) through every layer."""
        x = as_tensor(x)
        single = x.ndim == 3
        if single:
            x = x[np.newaxis]
        axes = zip(("channels", "height", "width"), x.shape[1:], self.input_shape)
        asserter.same_extent(
            "Network input: ", **{axis: (found, expected) for axis, found, expected in axes}
        )
        for layer in self.layers:
            x = layer.forward(x)
        return x[0] if single else x

    def backward(self, grad: Tensor) -> Tensor:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self) -> list[tuple[int, str, Tensor]]:
        """(layer index, parameter name, array) for every stored trainable scalar block."""
        return [
            (i, name, layer.params[name])
            for i, layer in enumerate(self.layers)
            for name in layer.param_names
        ]

    def num_parameters(self) -> int:
        return sum(array.size for _, _, array in self.parameters())

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def __repr__(self) -> str:
        return f"<Network input={self.input_shape} layers={self.layers}>"


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> tuple[float, Tensor]:
    """Mean cross-entropy of softmax(logits) and its gradient w.r.t. the logits (log-sum-exp fused).

    Args:
        logits (Tensor): [N, K].
        labels (np.ndarray): [N] integer class labels.

    Returns:
        tuple[float, Tensor]: (loss, grad [N, K]).
    """
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(logits.shape[0])
    loss = float(-log_probs[rows, labels].mean())
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    return loss, grad / logits.shape[0]


class Penalty(Protocol):
    """Extra loss term: returns its value and adds its gradient into the layers' ``grads``."""

    def __call__(self, network: Network) -> float: ...


@dataclass
class TrainReport:
    """Per-epoch statistics of a training run."""

    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)
    penalties: list[float] = field(default_factory=list)
    ortho_residuals: list[float] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        return self.accuracies[-1]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    def to_dict(self) -> dict[str, list[float]]:
        return {
            "losses": self.losses,
            "accuracies": self.accuracies,
            "penalties": self.penalties,
            "ortho_residuals": self.ortho_residuals,
        }


def _check_dataset(network: Network, dataset) -> None:
    if len(dataset) == 0:
        raise DataError("The dataset is empty.")
    asserter.same_extent(
        "Network output vs dataset: ", classes=(network.output_shape[0], dataset.num_classes)
    )


def train(
    network: Network,
    dataset,
    config: TrainConfig,
    penalty: Penalty | None = None,
    on_epoch: Callable[[int, TrainReport], None] | None = None,
) -> TrainReport:
    """Train a network in place with mini-batch SGD and momentum.

    Shuffling draws from ``numpy.random.default_rng(config.seed)``, so runs with
    equal seeds produce bit-identical parameters. Accuracy is counted on the fly
    over each epoch's batches.

    Args:
        network (Network): The network to optimize (mutated).
        dataset: Object with ``images`` [N,C,H,W], ``labels`` [N], ``num_classes`` and ``len()``.
        config (TrainConfig): Hyperparameters.
        penalty (Penalty | None, optional): Extra loss term added to the cross-entropy. Defaults to None.
        on_epoch (Callable | None, optional): Called after each epoch with (epoch, report). Defaults to None.

    Raises:
        DataError: If the dataset is empty.
        DimensionError: If the network output size differs from the class count.
        DivergenceError: If the loss becomes NaN or infinite.

    Returns:
        TrainReport: Per-epoch mean loss (task + penalty) and accuracy.
    """
    _check_dataset(network, dataset)
    rng = np.random.default_rng(config.seed)
    velocity = {
        (i, name): np.zeros_like(array) for i, name, array in network.parameters()
    }
    report = TrainReport()
    count = len(dataset)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(count)
        loss_sum = 0.0
        penalty_sum = 0.0
        correct = 0
        for batch, start in enumerate(range(0, count, config.batch_size)):
            idx = order[start : start + config.batch_size]
            labels = dataset.labels[idx]
            logits = network.forward(dataset.images[idx])
            loss, grad = softmax_cross_entropy(logits, labels)
            network.backward(grad)
            extra = penalty(network) if penalty is not None else 0.0
            total = loss + extra
            if not np.isfinite(total):
                raise DivergenceError(epoch, batch, total)
            _sgd_step(network, velocity, config.learning_rate, config.momentum)
            loss_sum += total * len(idx)
            penalty_sum += extra * len(idx)
            correct += int((logits.argmax(axis=1) == labels).sum())
        report.losses.append(loss_sum / count)
        report.penalties.append(penalty_sum / count)
        report.accuracies.append(correct / count)
        logger.info(
            "epoch %d/%d loss=%.6f accuracy=%.4f",
            epoch, config.epochs, report.losses[-1], report.accuracies[-1],
        )
        if on_epoch is not None:
            on_epoch(epoch, report)
    return report


def _sgd_step(network: Network, velocity: dict, learning_rate: float, momentum: float) -> None:
    for i, layer in enumerate(network.layers):
        for name in layer.param_names:
            if name in layer.frozen:
                continue
            v = velocity[(i, name)]
            v *= momentum
            v -= learning_rate * layer.grads[name]
            layer.params[name] += v


def predict(network: Network, images: Tensor, batch_size: int = 256) -> np.ndarray:
    """Argmax class per sample; ties go to the lowest class index."""
    labels = [
        network.forward(images[start : start + batch_size]).argmax(axis=1)
        for start in range(0, len(images), batch_size)
    ]
    return np.concatenate(labels)


def evaluate(network: Network, dataset, batch_size: int = 256) -> float:
    """Fraction of samples whose argmax prediction equals the label.

    Raises:
        DataError: If the dataset is empty.
    """
    _check_dataset(network, dataset)
    return float((predict(network, dataset.images, batch_size) == dataset.labels).mean())


def reference_network(name: str, seed: int = 0) -> Network:
    """Build one of the bundled sequential networks.

    Args:
        name (str): ``"mnist"`` (three 3x3 conv blocks on 1x28x28, 10 classes) or
            ``"synthetic"`` (two conv blocks on 1x16x16, 4 classes).
        seed (int, optional): Initialization seed. Defaults to 0.

    Raises:
        ValueError: If the name is unknown.
    """
    rng = np.random.default_rng(seed)
    if name == "mnist":
        return Network(
            (1, 28, 28),
            [
                Conv(1, 16, 3, 1, 1, rng=rng), ReLU(), MaxPool(2),
                Conv(16, 32, 3, 1, 1, rng=rng), ReLU(), MaxPool(2),
                Conv(32, 64, 3, 1, 1, rng=rng), ReLU(), MaxPool(2),
                Flatten(), Dense(64 * 3 * 3, 10, rng=rng),
            ],
        )
    if name == "synthetic":
        return Network(
            (1, 16, 16),
            [
                Conv(1, 8, 3, 1, 1, rng=rng), ReLU(), MaxPool(2),
                Conv(8, 16, 3, 1, 1, rng=rng), ReLU(), MaxPool(2),
                Flatten(), Dense(16 * 4 * 4, 4, rng=rng),
            ],
        )
    raise ValueError(f"Unknown reference network '{name}', expected 'mnist' or 'synthetic'.")
