"""Per-layer rank selection and substitution of Conv layers by BasisConv layers."""

import json
import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterator

from . import asserter, spectral
from .accounting import basis_conv_counts, conv_counts, count_network
from .errors import DataError, EmptyPlanError, PlanError
from .nn import BasisConv, Conv, Layer, Network, evaluate
from .spectral import EigenBasis, FilterBank, SpectralWeights
from .utils import atomic_write

logger = logging.getLogger(__name__)

ACCURACY_SLACK = 1e-12


class PolicyKind(str, Enum):
    ENERGY = "energy"
    ACCURACY = "accuracy"
    SPEEDUP = "speedup"


@dataclass(frozen=True)
class Policy:
    """Global rank policy: EnergyThreshold(t_min), AccuracyGuided(max_drop) or SpeedupTarget(ratio)."""

    kind: PolicyKind
    value: float

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "value": self.value}


@dataclass
class PlanEntry:
    """Decision for one Conv layer. Counts are predictions for one input sample."""

    layer_index: int
    planes: int
    channels: int
    kernel: int
    chosen_q: int
    energy_t: float
    params_before: int
    params_after: int
    macs_before: int
    macs_after: int
    skip: bool
    accuracy_drop: float | None = None

    @property
    def full_rank(self) -> int:
        return min(self.planes, self.channels * self.kernel**2)


@dataclass
class CompressionPlan:
    entries: list[PlanEntry]
    policy: Policy
    threshold: float | None = None

    @property
    def compressed(self) -> list[PlanEntry]:
        return [entry for entry in self.entries if not entry.skip]

    def to_dict(self) -> dict[str, Any]:
        return {
            "policy": self.policy.to_dict(),
            "threshold": self.threshold,
            "entries": [asdict(entry) for entry in self.entries],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CompressionPlan":
        policy = data["policy"]
        return cls(
            entries=[PlanEntry(**entry) for entry in data["entries"]],
            policy=Policy(PolicyKind(policy["kind"]), float(policy["value"])),
            threshold=data.get("threshold"),
        )

    def describe(self) -> str:
        lines = [f"Policy: {self.policy.kind.value}={self.policy.value}"]
        if self.threshold is not None:
            lines[0] += f" (energy threshold {self.threshold:.6f})"
        for e in self.entries:
            status = "skip" if e.skip else "compress"
            drop = "" if e.accuracy_drop is None else f" drop={e.accuracy_drop:.4f}"
            lines.append(
                f"  layer {e.layer_index}: P={e.planes} L={e.channels} D={e.kernel} "
                f"Q={e.chosen_q}/{e.full_rank} t={e.energy_t:.4f} "
                f"params {e.params_before}->{e.params_after} "
                f"macs {e.macs_before}->{e.macs_after} [{status}]{drop}"
            )
        return "\n".join(lines)


def filter_bank(layer: Conv) -> FilterBank:
    return FilterBank(layer.params["weight"], layer.params["bias"])


def _energy(eigenvalues, rank: int) -> float:
    # an all-zero filter bank keeps all of its (zero) energy at every rank
    if not max(eigenvalues) > 0:
        return 1.0
    return spectral.energy_ratio(eigenvalues, rank)


def _conv_layers(network: Network) -> list[tuple[int, Conv]]:
    layers = [(i, layer) for i, layer in enumerate(network.layers) if isinstance(layer, Conv)]
    if not layers:
        raise EmptyPlanError("The network has no Conv layer to compress.")
    return layers


def _entry(
    network: Network, index: int, layer: Conv, eigenvalues, rank: int
) -> PlanEntry:
    _, out_h, out_w = layer.output_shape(network.input_shape_of(index))
    before = conv_counts(layer.out_channels, layer.in_channels, layer.kernel, out_h, out_w)
    after = basis_conv_counts(
        layer.out_channels, rank, layer.in_channels, layer.kernel, out_h, out_w
    )
    skip = after.params >= before.params
    return PlanEntry(
        layer_index=index,
        planes=layer.out_channels,
        channels=layer.in_channels,
        kernel=layer.kernel,
        chosen_q=rank,
        energy_t=_energy(eigenvalues, rank),
        params_before=before.params,
        params_after=after.params,
        macs_before=before.macs,
        macs_after=after.macs,
        skip=skip,
    )


def _smallest_rank(eigenvalues, t_min: float) -> int:
    for rank in range(1, len(eigenvalues) + 1):
        if _energy(eigenvalues, rank) >= t_min:
            return rank
    return len(eigenvalues)


def _energy_plan(
    network: Network,
    spectra: list[tuple[int, Conv, Any]],
    t_min: float,
    policy: Policy,
) -> CompressionPlan:
    entries = []
    for index, layer, eigenvalues in spectra:
        entry = _entry(network, index, layer, eigenvalues, _smallest_rank(eigenvalues, t_min))
        logger.info(
            "layer %d: Q=%d/%d t=%.4f %s",
            index, entry.chosen_q, entry.full_rank, entry.energy_t,
            "skip" if entry.skip else "compress",
        )
        entries.append(entry)
    return CompressionPlan(entries, policy, threshold=t_min)


def _spectra(network: Network) -> list[tuple[int, Conv, Any]]:
    return [
        (index, layer, spectral.spectrum(filter_bank(layer)))
        for index, layer in _conv_layers(network)
    ]


def plan_by_energy(network: Network, t_min: float) -> CompressionPlan:
    """Choose per layer the smallest Q whose energy ratio reaches t_min.

    Layers whose BasisConv form would not hold fewer parameters, i.e.
    Q >= P*L*D^2 / (L*D^2 + P), are marked skip.
    A layer whose filters are all zero has no energy to rank; it gets Q=1
    with energy 1.0 (its rank-1 BasisConv is exact).

    Args:
        network (Network): Network with at least one Conv layer.
        t_min (float): Energy threshold in (0, 1].

    Raises:
        EmptyPlanError: If the network has no Conv layer.

    Returns:
        CompressionPlan: One entry per Conv layer.
    """
    asserter.in_range("t_min", t_min, 0.0, 1.0, low_inclusive=False)
    return _energy_plan(
        network, _spectra(network), t_min, Policy(PolicyKind.ENERGY, float(t_min))
    )


def plan_by_speedup(network: Network, target: float) -> CompressionPlan:
    """Largest single energy threshold whose plan reaches ``speedup >= target`` on the whole network.

    Raises:
        EmptyPlanError: If the network has no Conv layer.
        PlanError: If even one basis filter per layer cannot reach the target.
    """
    asserter.in_range("target", target, 0.0, float("inf"), low_inclusive=False)
    spectra = _spectra(network)
    policy = Policy(PolicyKind.SPEEDUP, float(target))
    total_before = sum(count.macs for count in count_network(network))
    candidates = sorted(
        {
            _energy(eigenvalues, rank)
            for _, _, eigenvalues in spectra
            for rank in range(1, len(eigenvalues) + 1)
        }
    )

    def speedup(t_min: float) -> tuple[float, CompressionPlan]:
        plan = _energy_plan(network, spectra, t_min, policy)
        saved = sum(e.macs_before - e.macs_after for e in plan.compressed)
        return total_before / (total_before - saved), plan

    reached, plan = speedup(candidates[0])
    if reached < target:
        raise PlanError(
            f"Speedup {target}x is out of reach; the smallest plan gives {reached:.3f}x."
        )
    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        reached_mid, plan_mid = speedup(candidates[mid])
        if reached_mid >= target:
            lo, plan = mid, plan_mid
        else:
            hi = mid - 1
    return plan


def _basis_layer(layer: Conv, basis: EigenBasis, weights: SpectralWeights, rank: int) -> BasisConv:
    basis, weights = spectral.truncate(basis, weights, rank)
    return BasisConv(basis.basis, weights.W, layer.params["bias"], layer.stride, layer.pad)


@contextmanager
def _substituted(network: Network, index: int, layer: Layer) -> Iterator[Network]:
    original = network.layers[index]
    network.replace(index, layer)
    try:
        yield network
    finally:
        network.layers[index] = original


def plan_by_accuracy(network: Network, calib_set, max_drop: float) -> CompressionPlan:
    """Per layer, the smallest Q whose substitution loses at most max_drop accuracy on calib_set.

    Layers are searched independently (all others keep their original filters)
    by binary search over Q, assuming accuracy grows with Q. The result is
    re-evaluated and Q is raised until the drop holds, so non-monotone layers
    still end within the constraint (full rank is always accepted).

    Args:
        network (Network): Network with at least one Conv layer (borrowed, restored on return).
        calib_set: Calibration dataset.
        max_drop (float): Allowed absolute accuracy loss, e.g. 0.03.

    Raises:
        DataError: If calib_set is empty.
        EmptyPlanError: If the network has no Conv layer.

    Returns:
        CompressionPlan: Entries carry the measured accuracy_drop.
    """
    if len(calib_set) == 0:
        raise DataError("The calibration set is empty.")
    asserter.in_range("max_drop", max_drop, 0.0, 1.0)
    baseline = evaluate(network, calib_set)
    entries = []
    for index, layer in _conv_layers(network):
        basis, weights = spectral.decompose(filter_bank(layer))
        full = basis.rank
        measured: dict[int, float] = {}

        def drop_at(rank: int) -> float:
            if rank not in measured:
                with _substituted(network, index, _basis_layer(layer, basis, weights, rank)):
                    measured[rank] = baseline - evaluate(network, calib_set)
            return measured[rank]

        lo, hi = 1, full
        while lo < hi:
            mid = (lo + hi) // 2
            if drop_at(mid) <= max_drop + ACCURACY_SLACK:
                hi = mid
            else:
                lo = mid + 1
        rank = lo
        while rank < full and drop_at(rank) > max_drop + ACCURACY_SLACK:
            rank += 1
        entry = _entry(network, index, layer, basis.eigenvalues, rank)
        entry.accuracy_drop = drop_at(rank)
        logger.info(
            "layer %d: Q=%d/%d drop=%.4f %s",
            index, rank, full, entry.accuracy_drop, "skip" if entry.skip else "compress",
        )
        entries.append(entry)
    return CompressionPlan(entries, Policy(PolicyKind.ACCURACY, float(max_drop)))


def _check_entry(network: Network, entry: PlanEntry) -> Conv:
    if not 0 <= entry.layer_index < len(network.layers):
        raise PlanError(
            f"Plan entry for layer {entry.layer_index} but the network has {len(network.layers)} layers."
        )
    layer = network.layers[entry.layer_index]
    if not isinstance(layer, Conv):
        raise PlanError(f"Layer {entry.layer_index} is {layer.kind.value}, not Conv.")
    found = (layer.out_channels, layer.in_channels, layer.kernel)
    planned = (entry.planes, entry.channels, entry.kernel)
    if found != planned:
        raise PlanError(
            f"Layer {entry.layer_index} has (P, L, D)={found} but the plan says {planned}."
        )
    if not 1 <= entry.chosen_q <= entry.full_rank:
        raise PlanError(
            f"Layer {entry.layer_index}: Q={entry.chosen_q} outside [1, {entry.full_rank}]."
        )
    return layer


def apply_plan(network: Network, plan: CompressionPlan, force: bool = False) -> Network:
    """Return a copy of the network with each planned Conv layer replaced by an eigen-initialized BasisConv.

    Args:
        network (Network): The original network (not modified).
        plan (CompressionPlan): Plan built for this network.
        force (bool, optional): Also substitute entries marked skip. Defaults to False.

    Raises:
        PlanError: If an entry does not match the network.

    Returns:
        Network: The compressed network, with the original input and output shapes.
    """
    layers = [_check_entry(network, entry) for entry in plan.entries]
    compressed = network.copy()
    for entry, layer in zip(plan.entries, layers):
        if entry.skip and not force:
            continue
        basis, weights = spectral.eigen_decompose(filter_bank(layer), entry.chosen_q)
        compressed.replace(
            entry.layer_index,
            BasisConv(basis.basis, weights.W, layer.params["bias"], layer.stride, layer.pad),
        )
    return compressed


def save_plan(plan: CompressionPlan, path: str | Path) -> None:
    """Write the plan as indented JSON text (atomic)."""
    text = json.dumps(plan.to_dict(), indent=2, sort_keys=True) + "\n"
    atomic_write(path, text.encode("utf-8"))


def load_plan(path: str | Path) -> CompressionPlan:
    """Read a plan written by save_plan.

    Raises:
        PlanError: If the file is not a valid plan.
    """
    try:
        return CompressionPlan.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise PlanError(f"{path}: invalid plan file ({e}).") from e
