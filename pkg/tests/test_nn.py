import numpy as np
import pytest

from src.my_basisnet.config import TrainConfig
from src.my_basisnet.datasets import Dataset, synthetic_shapes
from src.my_basisnet.errors import DataError, DimensionError, DivergenceError, RankError
from src.my_basisnet.nn import (
    BasisConv,
    Conv,
    Dense,
    Flatten,
    LayerKind,
    LayerSpec,
    MaxPool,
    Network,
    ReLU,
    basisconv_backward,
    basisconv_forward,
    evaluate,
    layer_from_spec,
    reference_network,
    softmax_cross_entropy,
    train,
)
from src.my_basisnet.spectral import FilterBank, eigen_decompose
from src.my_basisnet.tensor import conv2d_forward


def numeric_grad(f, array, step=1e-5):
    grad = np.zeros_like(array)
    for idx in np.ndindex(array.shape):
        saved = array[idx]
        array[idx] = saved + step
        plus = f()
        array[idx] = saved - step
        minus = f()
        array[idx] = saved
        grad[idx] = (plus - minus) / (2 * step)
    return grad


def tiny_network(seed=0):
    rng = np.random.default_rng(seed)
    return Network(
        (1, 6, 6),
        [Conv(1, 2, 3, 1, 1, rng=rng), ReLU(), MaxPool(2), Flatten(), Dense(18, 3, rng=rng)],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def basis_layer(rng):
    weight = rng.normal(size=(3, 2, 3, 3))
    bias = rng.normal(size=3)
    basis, weights = eigen_decompose(FilterBank(weight, bias), 2)
    return BasisConv(basis.basis, weights.W, bias, stride=1, pad=1)


class TestLayerSpec:
    def test_round_trip_dict(self):
        spec = LayerSpec(LayerKind.CONV, {"in_channels": 1, "out_channels": 4, "kernel": 3, "stride": 1, "pad": 1})
        assert LayerSpec.from_dict(spec.to_dict()) == spec

    def test_missing_hyperparams(self):
        with pytest.raises(ValueError, match="missing hyperparams"):
            LayerSpec(LayerKind.DENSE, {"in_features": 3})

    def test_conv_needs_positive_planes(self):
        with pytest.raises(ValueError, match="positive integers"):
            LayerSpec("Conv", {"in_channels": 1, "out_channels": 0, "kernel": 3, "stride": 1, "pad": 0})

    @pytest.mark.parametrize("rank", [0, 5])
    def test_basisconv_rank_range(self, rank):
        # min(P=4, L*D^2=9) = 4
        with pytest.raises(RankError):
            LayerSpec(
                LayerKind.BASIS_CONV,
                {"in_channels": 1, "out_channels": 4, "rank": rank, "kernel": 3, "stride": 1, "pad": 0},
            )

    def test_layer_from_spec_builds_orthonormal_basis(self):
        spec = LayerSpec(
            LayerKind.BASIS_CONV,
            {"in_channels": 2, "out_channels": 6, "rank": 3, "kernel": 3, "stride": 1, "pad": 1},
        )
        layer = layer_from_spec(spec, rng=np.random.default_rng(0))
        flat = layer.params["basis"].reshape(3, -1)
        np.testing.assert_allclose(flat @ flat.T, np.eye(3), atol=1e-10)
        assert layer.spec == spec


class TestBasisConv:
    def test_full_rank_matches_conv_on_100_inputs(self, rng):
        weight = rng.normal(size=(5, 2, 3, 3))
        bias = rng.normal(size=5)
        basis, weights = eigen_decompose(FilterBank(weight, bias), 5)
        layer = BasisConv(basis.basis, weights.W, bias, 1, 1)
        x = rng.normal(size=(100, 2, 7, 7))
        expected = conv2d_forward(x, weight, bias, 1, 1)
        assert np.abs(basisconv_forward(layer, x) - expected).max() <= 1e-8
        assert np.abs(layer.forward(x) - expected).max() <= 1e-8

    def test_zero_weights_give_bias(self, rng):
        bias = np.array([1.5, -2.0])
        layer = BasisConv(rng.normal(size=(1, 1, 3, 3)), np.zeros((2, 1)), bias)
        out = basisconv_forward(layer, rng.normal(size=(1, 5, 5)))
        assert np.all(out[0] == 1.5) and np.all(out[1] == -2.0)

    def test_two_step_oracle(self, rng):
        f = rng.normal(size=(1, 2, 3, 3))
        f /= np.linalg.norm(f)
        w = np.array([[2.0], [-0.5]])
        bias = np.array([0.1, 0.2])
        layer = BasisConv(f, w, bias)
        x = rng.normal(size=(2, 6, 6))
        z = conv2d_forward(x, f)[0]
        out = basisconv_forward(layer, x)
        np.testing.assert_allclose(out[0], 2.0 * z + 0.1, atol=1e-12)
        np.testing.assert_allclose(out[1], -0.5 * z + 0.2, atol=1e-12)

    def test_channel_mismatch(self, basis_layer, rng):
        with pytest.raises(DimensionError) as err:
            basisconv_forward(basis_layer, rng.normal(size=(3, 5, 5)))
        assert err.value.axis == "channels"

    def test_mismatched_rank_rejected(self, rng):
        with pytest.raises(DimensionError) as err:
            BasisConv(rng.normal(size=(2, 1, 3, 3)), rng.normal(size=(4, 3)), np.zeros(4))
        assert err.value.axis == "rank"

    def test_zero_upstream_gradient(self, basis_layer, rng):
        grads = basisconv_backward(basis_layer, rng.normal(size=(2, 5, 5)), np.zeros((3, 5, 5)))
        assert all(not g.any() for g in grads)

    def test_gradients_match_central_differences(self, basis_layer, rng):
        x = rng.normal(size=(2, 5, 5))
        upstream = rng.normal(size=(3, 5, 5))

        def loss():
            return float(np.sum(basisconv_forward(basis_layer, x) * upstream))

        gi, gbasis, gweights, gbias = basisconv_backward(basis_layer, x, upstream)
        np.testing.assert_allclose(gi, numeric_grad(loss, x), rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(
            gbasis, numeric_grad(loss, basis_layer.params["basis"]), rtol=1e-5, atol=1e-8
        )
        np.testing.assert_allclose(
            gweights, numeric_grad(loss, basis_layer.params["weights"]), rtol=1e-5, atol=1e-8
        )
        np.testing.assert_allclose(
            gbias, numeric_grad(loss, basis_layer.params["bias"]), rtol=1e-5, atol=1e-8
        )

    def test_randomized_gradients(self, rng):
        for _ in range(80):
            channels = int(rng.integers(1, 4))
            kernel = int(rng.choice([1, 2, 3]))
            planes = int(rng.integers(1, 5))
            rank = int(rng.integers(1, min(planes, channels * kernel**2) + 1))
            stride = int(rng.integers(1, 3))
            pad = int(rng.integers(0, 2))
            size = int(rng.integers(kernel, kernel + 4))
            layer = BasisConv(
                rng.normal(size=(rank, channels, kernel, kernel)),
                rng.normal(size=(planes, rank)),
                rng.normal(size=planes),
                stride=stride,
                pad=pad,
            )
            x = rng.normal(size=(channels, size, size))
            upstream = rng.normal(size=basisconv_forward(layer, x).shape)

            def loss():
                return float(np.sum(basisconv_forward(layer, x) * upstream))

            grads = basisconv_backward(layer, x, upstream)
            targets = [x, layer.params["basis"], layer.params["weights"], layer.params["bias"]]
            for grad, target in zip(grads, targets):
                np.testing.assert_allclose(grad, numeric_grad(loss, target), rtol=1e-5, atol=1e-8)

    def test_weight_gradient_oracle(self, basis_layer, rng):
        x = rng.normal(size=(2, 5, 5))
        grad_out = rng.normal(size=(3, 5, 5))
        z = conv2d_forward(x, basis_layer.params["basis"], None, 1, 1)
        expected = np.einsum("khw,ihw->ki", grad_out, z)
        _, _, gweights, _ = basisconv_backward(basis_layer, x, grad_out)
        np.testing.assert_allclose(gweights, expected, atol=1e-10)

    def test_layer_backward_fills_grads(self, basis_layer, rng):
        x = rng.normal(size=(4, 2, 5, 5))
        out = basis_layer.forward(x)
        basis_layer.backward(np.ones_like(out))
        assert set(basis_layer.grads) == {"basis", "weights", "bias"}
        np.testing.assert_allclose(basis_layer.grads["bias"], np.full(3, 4 * 25.0))


class TestNetwork:
    def test_gradients_of_every_layer(self):
        network = tiny_network()
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 1, 6, 6))
        labels = np.array([0, 2, 1, 2])

        def loss():
            return softmax_cross_entropy(network.forward(x), labels)[0]

        _, grad = softmax_cross_entropy(network.forward(x), labels)
        grad_input = network.backward(grad)
        for layer in (network.layers[0], network.layers[4]):
            for name in layer.param_names:
                np.testing.assert_allclose(
                    layer.grads[name], numeric_grad(loss, layer.params[name]), rtol=1e-5, atol=1e-7
                )
        np.testing.assert_allclose(grad_input, numeric_grad(loss, x), rtol=1e-5, atol=1e-7)

    def test_shapes(self):
        network = reference_network("mnist")
        assert network.output_shape == (10,)
        assert network.shapes[3] == (16, 14, 14)
        assert network.forward(np.zeros((1, 28, 28))).shape == (10,)
        assert reference_network("synthetic").output_shape == (4,)

    def test_unknown_reference_network(self):
        with pytest.raises(ValueError, match="Unknown reference network"):
            reference_network("vgg")

    def test_input_mismatch(self):
        with pytest.raises(DimensionError) as err:
            tiny_network().forward(np.zeros((2, 1, 5, 6)))
        assert err.value.axis == "height"

    def test_replace_checks_output_shape(self):
        network = tiny_network()
        with pytest.raises(DimensionError):
            network.replace(0, Conv(1, 3, 3, 1, 1))

    def test_layers_must_be_layers(self):
        with pytest.raises(TypeError):
            Network((1, 4, 4), [Flatten(), "relu"])

    def test_parameter_enumeration(self):
        network = tiny_network()
        assert network.num_parameters() == (2 * 9 + 2) + (18 * 3 + 3)
        assert [(i, name) for i, name, _ in network.parameters()] == [
            (0, "weight"), (0, "bias"), (4, "weight"), (4, "bias")
        ]


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        loss, grad = softmax_cross_entropy(np.zeros((2, 4)), np.array([0, 3]))
        assert loss == pytest.approx(np.log(4))
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)

    def test_stable_for_large_logits(self):
        loss, _ = softmax_cross_entropy(np.array([[1000.0, 0.0]]), np.array([0]))
        assert np.isfinite(loss) and loss == pytest.approx(0.0)


class TestTrain:
    def test_zero_learning_rate_keeps_parameters(self):
        network = tiny_network()
        before = [p.copy() for _, _, p in network.parameters()]
        data = Dataset(np.random.default_rng(0).normal(size=(20, 1, 6, 6)), np.arange(20) % 3, 3)
        train(network, data, TrainConfig(learning_rate=0.0, epochs=3, batch_size=8))
        for old, (_, _, new) in zip(before, network.parameters()):
            np.testing.assert_array_equal(old, new)

    def test_overfits_one_sample(self):
        rng = np.random.default_rng(11)
        network = Network(
            (1, 4, 4),
            [Conv(1, 2, 3, 1, 1, rng=rng), ReLU(), Flatten(), Dense(32, 3, rng=rng)],
        )
        data = Dataset(rng.normal(size=(1, 1, 4, 4)), [1], 3)
        report = train(
            network, data, TrainConfig(learning_rate=0.05, momentum=0.0, batch_size=1, epochs=200)
        )
        assert report.losses[-1] < 0.01
        assert report.losses[-1] < report.losses[0]
        assert np.all(np.diff(report.losses[100:]) <= 1e-12)

    def test_deterministic_under_seed(self):
        data = synthetic_shapes(64, seed=1)
        params = []
        for _ in range(2):
            network = reference_network("synthetic", seed=5)
            train(network, data, TrainConfig(epochs=2, batch_size=16, seed=9))
            params.append([p.copy() for _, _, p in network.parameters()])
        for a, b in zip(*params):
            np.testing.assert_array_equal(a, b)

    def test_report_fields(self):
        report = train(
            reference_network("synthetic"), synthetic_shapes(32), TrainConfig(epochs=2, batch_size=16)
        )
        assert len(report.losses) == len(report.accuracies) == len(report.penalties) == 2
        assert report.penalties == [0.0, 0.0]
        assert 0.0 <= report.final_accuracy <= 1.0

    def test_nan_loss_raises_divergence(self):
        images = np.full((4, 1, 6, 6), np.nan)
        with pytest.raises(DivergenceError) as err:
            train(tiny_network(), Dataset(images, [0, 1, 2, 0], 3), TrainConfig(batch_size=2))
        assert err.value.epoch == 1 and err.value.batch == 0

    def test_empty_dataset(self):
        with pytest.raises(DataError):
            train(tiny_network(), Dataset(np.zeros((0, 1, 6, 6)), [], 3), TrainConfig())

    def test_class_count_mismatch(self):
        with pytest.raises(DimensionError) as err:
            train(tiny_network(), Dataset(np.zeros((2, 1, 6, 6)), [0, 1], 5), TrainConfig())
        assert err.value.axis == "classes"

    def test_penalty_is_added(self):
        calls = []

        def penalty(network):
            calls.append(network)
            return 0.25

        report = train(
            tiny_network(),
            Dataset(np.zeros((4, 1, 6, 6)), [0, 1, 2, 0], 3),
            TrainConfig(learning_rate=0.0, batch_size=2),
            penalty=penalty,
        )
        assert len(calls) == 2
        assert report.penalties == [0.25]


class TestEvaluate:
    def test_constant_logits_pick_class_zero(self):
        network = Network((1, 2, 2), [Flatten(), Dense(4, 3, weight=np.zeros((4, 3)))])
        labels = np.array([0, 1, 2, 0, 0, 1, 2, 2])
        data = Dataset(np.ones((8, 1, 2, 2)), labels, 3)
        assert evaluate(network, data) == pytest.approx(3 / 8)

    def test_perfect_oracle(self):
        labels = np.array([0, 1, 2, 1])
        images = np.zeros((4, 1, 1, 3))
        images[np.arange(4), 0, 0, labels] = 1.0
        network = Network((1, 1, 3), [Flatten(), Dense(3, 3, weight=np.eye(3))])
        assert evaluate(network, Dataset(images, labels, 3)) == 1.0

    def test_matches_frozen_training_accuracy(self):
        data = synthetic_shapes(48, seed=2)
        network = reference_network("synthetic", seed=1)
        report = train(network, data, TrainConfig(learning_rate=0.0, batch_size=16))
        assert evaluate(network, data) == pytest.approx(report.final_accuracy)

    def test_empty(self):
        with pytest.raises(DataError):
            evaluate(tiny_network(), Dataset(np.zeros((0, 1, 6, 6)), [], 3))
