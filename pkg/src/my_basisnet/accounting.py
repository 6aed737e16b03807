"""MACs, parameter and filter counting for original and compressed networks.

One MAC is one multiply-accumulate. Reports call MACs "FLOPs" under the ``mac``
convention; ``2xmac`` doubles them for comparison with sources that count a
multiply and an add separately. Pooling and activation work is not counted.
"""

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import asserter
from .errors import DimensionError, UnsupportedLayerError
from .nn import BasisConv, Conv, Dense, Flatten, Layer, MaxPool, Network, ReLU

FLOPS_CONVENTIONS = {"mac": 1, "2xmac": 2}


@dataclass(frozen=True)
class LayerCount:
    macs: int
    params: int
    filters: int


def conv_counts(planes: int, channels: int, kernel: int, out_h: int, out_w: int) -> LayerCount:
    """Spatial conv: macs = H'W'PLD^2, params = PLD^2 + P, filters = P."""
    taps = channels * kernel * kernel
    return LayerCount(out_h * out_w * planes * taps, planes * taps + planes, planes)


def basis_conv_counts(
    planes: int, rank: int, channels: int, kernel: int, out_h: int, out_w: int
) -> LayerCount:
    """BasisConv: macs = H'W'QLD^2 + H'W'PQ, params = QLD^2 + PQ + P, filters = Q."""
    taps = channels * kernel * kernel
    return LayerCount(
        out_h * out_w * rank * taps + out_h * out_w * planes * rank,
        rank * taps + planes * rank + planes,
        rank,
    )


def count_layer(layer: Layer, input_shape: tuple[int, ...]) -> LayerCount:
    """Count MACs, trainable parameters and filters of one layer for a given input shape.

    Args:
        layer (Layer): The layer.
        input_shape (tuple[int, ...]): Per-sample input shape, [C, H, W] or [features].

    Raises:
        UnsupportedLayerError: If the layer kind is unknown.

    Returns:
        LayerCount: (macs, params, filters). The 1x1 stage of a BasisConv counts in macs and params only.
    """
    if isinstance(layer, Conv):
        _, out_h, out_w = layer.output_shape(input_shape)
        return conv_counts(layer.out_channels, layer.in_channels, layer.kernel, out_h, out_w)
    if isinstance(layer, BasisConv):
        _, out_h, out_w = layer.output_shape(input_shape)
        return basis_conv_counts(
            layer.out_channels, layer.rank, layer.in_channels, layer.kernel, out_h, out_w
        )
    if isinstance(layer, Dense):
        layer.output_shape(input_shape)
        weights = layer.in_features * layer.out_features
        return LayerCount(weights, weights + layer.out_features, 0)
    if isinstance(layer, (ReLU, MaxPool, Flatten)):
        return LayerCount(0, 0, 0)
    raise UnsupportedLayerError(f"Cannot count layer of type {type(layer).__name__}.")


def count_network(network: Network) -> list[LayerCount]:
    return [
        count_layer(layer, network.input_shape_of(i))
        for i, layer in enumerate(network.layers)
    ]


def _reduction(before: float, after: float) -> float:
    if before == 0:
        return 0.0
    return 100.0 * (1.0 - after / before)


@dataclass
class LayerMetrics:
    index: int
    kind_before: str
    kind_after: str
    macs_before: int
    macs_after: int
    params_before: int
    params_after: int
    filters_before: int
    filters_after: int


@dataclass
class MetricsReport:
    """Per-layer and total counts of two networks with derived reductions."""

    layers: list[LayerMetrics] = field(default_factory=list)
    accuracy_before: float | None = None
    accuracy_after: float | None = None

    def _total(self, name: str) -> int:
        return sum(getattr(layer, name) for layer in self.layers)

    @property
    def macs_before(self) -> int:
        return self._total("macs_before")

    @property
    def macs_after(self) -> int:
        return self._total("macs_after")

    @property
    def params_before(self) -> int:
        return self._total("params_before")

    @property
    def params_after(self) -> int:
        return self._total("params_after")

    @property
    def filters_before(self) -> int:
        return self._total("filters_before")

    @property
    def filters_after(self) -> int:
        return self._total("filters_after")

    @property
    def flops_reduction_pct(self) -> float:
        return _reduction(self.macs_before, self.macs_after)

    @property
    def params_reduction_pct(self) -> float:
        return _reduction(self.params_before, self.params_after)

    @property
    def filters_reduction_pct(self) -> float:
        return _reduction(self.filters_before, self.filters_after)

    @property
    def speedup_ratio(self) -> float:
        """macs_before / macs_after"""
        if self.macs_after == 0:
            return float("inf")
        return self.macs_before / self.macs_after

    def to_dict(self, convention: str = "mac") -> dict:
        """Report as a JSON-ready dict; FLOPs fields are MACs times the convention factor.

        Raises:
            ValueError: If the convention is unknown.
        """
        factor = _factor(convention)
        layers = []
        for layer in self.layers:
            entry = asdict(layer)
            entry["flops_before"] = layer.macs_before * factor
            entry["flops_after"] = layer.macs_after * factor
            layers.append(entry)
        data = {
            "flops_convention": convention,
            "layers": layers,
            "totals": {
                "macs_before": self.macs_before,
                "macs_after": self.macs_after,
                "flops_before": self.macs_before * factor,
                "flops_after": self.macs_after * factor,
                "params_before": self.params_before,
                "params_after": self.params_after,
                "filters_before": self.filters_before,
                "filters_after": self.filters_after,
                "flops_reduction_pct": self.flops_reduction_pct,
                "params_reduction_pct": self.params_reduction_pct,
                "filters_reduction_pct": self.filters_reduction_pct,
                "speedup_ratio": self.speedup_ratio,
            },
            "accuracy_before": self.accuracy_before,
            "accuracy_after": self.accuracy_after,
        }
        if self.accuracy_before is not None and self.accuracy_after is not None:
            data["accuracy_drop"] = self.accuracy_before - self.accuracy_after
        return data

    def to_json(self, convention: str = "mac") -> str:
        return json.dumps(self.to_dict(convention), indent=2, sort_keys=True)

    def to_table(self, convention: str = "mac") -> str:
        """Aligned plain-text table in the layout of a FLOPs / Params / # of Filters / Accuracy comparison."""
        factor = _factor(convention)
        unit = "1 FLOP = 1 MAC" if factor == 1 else "1 FLOP = 2 x MAC"
        header = (
            f"{'Layer':<6}{'Kind':<22}{'FLOPs':>12}{'FLOPs*':>12}{'down%':>8}"
            f"{'Params':>10}{'Params*':>10}{'down%':>8}{'Filters':>9}{'Filters*':>9}{'down%':>8}"
        )
        lines = [
            f"FLOPs convention: {convention} ({unit}); * = compressed network",
            header,
            "-" * len(header),
        ]
        for layer in self.layers:
            if layer.macs_before == 0 and layer.params_before == 0 and layer.macs_after == 0:
                continue
            kind = (
                layer.kind_before
                if layer.kind_before == layer.kind_after
                else f"{layer.kind_before}->{layer.kind_after}"
            )
            lines.append(
                f"{layer.index:<6}{kind:<22}"
                f"{layer.macs_before * factor:>12}{layer.macs_after * factor:>12}"
                f"{_reduction(layer.macs_before, layer.macs_after):>8.2f}"
                f"{layer.params_before:>10}{layer.params_after:>10}"
                f"{_reduction(layer.params_before, layer.params_after):>8.2f}"
                f"{layer.filters_before:>9}{layer.filters_after:>9}"
                f"{_reduction(layer.filters_before, layer.filters_after):>8.2f}"
            )
        lines.append("-" * len(header))
        lines.append(
            f"{'Total':<28}{self.macs_before * factor:>12}{self.macs_after * factor:>12}"
            f"{self.flops_reduction_pct:>8.2f}"
            f"{self.params_before:>10}{self.params_after:>10}{self.params_reduction_pct:>8.2f}"
            f"{self.filters_before:>9}{self.filters_after:>9}{self.filters_reduction_pct:>8.2f}"
        )
        lines.append(f"Speedup ratio: {self.speedup_ratio:.3f}x")
        if self.accuracy_before is not None and self.accuracy_after is not None:
            lines.append(
                f"Accuracy: {100 * self.accuracy_before:.2f}% -> {100 * self.accuracy_after:.2f}% "
                f"(drop {100 * (self.accuracy_before - self.accuracy_after):.2f} points)"
            )
        return "\n".join(lines)


def _factor(convention: str) -> int:
    if convention not in FLOPS_CONVENTIONS:
        raise ValueError(
            f"Unknown FLOPs convention '{convention}', expected one of {sorted(FLOPS_CONVENTIONS)}."
        )
    return FLOPS_CONVENTIONS[convention]


def compare(
    network_a: Network,
    network_b: Network,
    input_shape: tuple[int, int, int] | None = None,
    accuracies: tuple[float, float] | None = None,
) -> MetricsReport:
    """Count both networks layer by layer.

    Args:
        network_a (Network): Reference (original) network.
        network_b (Network): Compared (compressed) network, layer-aligned with network_a.
        input_shape (tuple | None, optional): Input shape both must accept. Defaults to network_a's.
        accuracies (tuple[float, float] | None, optional): (accuracy_a, accuracy_b). Defaults to None.

    Raises:
        DimensionError: If either network rejects the input shape or the layer counts differ.

    Returns:
        MetricsReport: Full report with speedup_ratio = total MACs a / total MACs b.
    """
    shape = tuple(input_shape or network_a.input_shape)
    for name, network in (("network_a", network_a), ("network_b", network_b)):
        if network.input_shape != shape:
            raise DimensionError(
                f"{name} expects input {network.input_shape}, got {shape}.", axis="input"
            )
    if len(network_a.layers) != len(network_b.layers):
        raise DimensionError(
            f"Networks have {len(network_a.layers)} and {len(network_b.layers)} layers.",
            axis="layers",
        )
    counts_a = count_network(network_a)
    counts_b = count_network(network_b)
    report = MetricsReport()
    for i, (layer_a, layer_b) in enumerate(zip(network_a.layers, network_b.layers)):
        report.layers.append(
            LayerMetrics(
                index=i,
                kind_before=layer_a.kind.value,
                kind_after=layer_b.kind.value,
                macs_before=counts_a[i].macs,
                macs_after=counts_b[i].macs,
                params_before=counts_a[i].params,
                params_after=counts_b[i].params,
                filters_before=counts_a[i].filters,
                filters_after=counts_b[i].filters,
            )
        )
    if accuracies is not None:
        report.accuracy_before, report.accuracy_after = accuracies
    return report


@dataclass(frozen=True)
class BenchResult:
    mean_ms: float
    p50_ms: float
    p95_ms: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def bench_inference(
    network: Network,
    input_shape: tuple[int, int, int] | None = None,
    repetitions: int = 10,
    seed: int = 0,
    warmup: int = 1,
) -> BenchResult:
    """Wall-clock statistics of single-sample forward passes on a fixed random input.

    BLAS is pinned to one thread for the duration of the measurement; warmup
    runs are excluded from the statistics.

    Raises:
        ValueError: If repetitions < 3 or warmup < 1.
    """
    if repetitions < 3:
        raise ValueError(f"repetitions={repetitions} should be at least 3.")
    asserter.positive_int("bench_inference: ", warmup=warmup)
    shape = tuple(input_shape or network.input_shape)
    x = np.random.default_rng(seed).standard_normal((1, *shape))
    timings = []
    with threadpool_limits(limits=1):
        for _ in range(warmup):
            network.forward(x)
        for _ in range(repetitions):
            start = time.perf_counter()
            network.forward(x)
            timings.append((time.perf_counter() - start) * 1000.0)
    return BenchResult(
        mean_ms=float(np.mean(timings)),
        p50_ms=float(np.percentile(timings, 50)),
        p95_ms=float(np.percentile(timings, 95)),
    )
