"""Training and orthogonality configuration."""

from dataclasses import asdict, dataclass

from . import asserter


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the SGD-with-momentum loop.

    Attributes:
        learning_rate (float): Step size, must be positive (0 is accepted to freeze parameters).
        momentum (float): Momentum coefficient in [0, 1).
        batch_size (int): Samples per step.
        epochs (int): Passes over the dataset.
        seed (int): Seed of the shuffling generator.
        ortho_alpha (float): Mixing parameter of the orthogonality penalty, in (0, 1).
        ortho_weight (float): Multiplier on the summed orthogonality penalty.
    """

    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 1
    seed: int = 0
    ortho_alpha: float = 0.5
    ortho_weight: float = 1.0

    def __post_init__(self):
        asserter.in_range("learning_rate", self.learning_rate, 0.0, float("inf"))
        asserter.in_range("momentum", self.momentum, 0.0, 1.0, high_inclusive=False)
        asserter.positive_int("TrainConfig: ", batch_size=self.batch_size, epochs=self.epochs)
        asserter.non_negative_int("TrainConfig: ", seed=self.seed)
        asserter.in_range(
            "ortho_alpha", self.ortho_alpha, 0.0, 1.0, False, False
        )
        asserter.in_range("ortho_weight", self.ortho_weight, 0.0, float("inf"))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class OrthoConfig:
    """Orthogonality penalty used during Spectral Fine Tuning.

    Attributes:
        alpha (float): Balance between the unit-norm and the pairwise term, in (0, 1).
        weight (float): Multiplier on the sum of per-layer penalties.
        freeze_basis (bool): Keep basis filters at their eigen initialization and tune the spectral weights only.
    """

    alpha: float = 0.5
    weight: float = 1.0
    freeze_basis: bool = False

    def __post_init__(self):
        asserter.in_range("alpha", self.alpha, 0.0, 1.0, False, False)
        asserter.in_range("weight", self.weight, 0.0, float("inf"))

    def to_dict(self) -> dict:
        return asdict(self)
