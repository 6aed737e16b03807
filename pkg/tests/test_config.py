import dataclasses

import pytest

from src.my_basisnet.config import OrthoConfig, TrainConfig


class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig()
        assert config.learning_rate == 0.01
        assert config.momentum == 0.9
        assert config.to_dict()["batch_size"] == 32

    def test_frozen(self):
        with pytest.raises(dataclasses.FrozenInstanceError):
            TrainConfig().epochs = 5

    def test_zero_learning_rate_allowed(self):
        assert TrainConfig(learning_rate=0.0).learning_rate == 0.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"learning_rate": -0.1},
            {"momentum": 1.0},
            {"batch_size": 0},
            {"epochs": 0},
            {"seed": -1},
            {"ortho_alpha": 0.0},
            {"ortho_alpha": 1.0},
            {"ortho_weight": -1.0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestOrthoConfig:
    def test_defaults(self):
        assert OrthoConfig().to_dict() == {"alpha": 0.5, "weight": 1.0, "freeze_basis": False}

    @pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
    def test_alpha_open_interval(self, alpha):
        with pytest.raises(ValueError, match="alpha"):
            OrthoConfig(alpha=alpha)

    def test_weight_non_negative(self):
        with pytest.raises(ValueError, match="weight"):
            OrthoConfig(weight=-0.5)
