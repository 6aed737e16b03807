import json

import numpy as np
import pytest

from src.my_basisnet.compress import apply_plan, plan_by_energy
from src.my_basisnet.errors import (
    MalformedHeaderError,
    ModelFileError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from src.my_basisnet.nn import BasisConv, Flatten, Network, reference_network
from src.my_basisnet.serialization import (
    MAGIC,
    dumps,
    load_model,
    loads,
    read_header,
    save_model,
)


def split(data):
    """(header dict, payload bytes) of container bytes."""
    length = int.from_bytes(data[8:16], "little")
    return json.loads(data[16 : 16 + length]), data[16 + length :]


def assemble(header, payload):
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + len(text).to_bytes(8, "little") + text + payload


@pytest.fixture
def compressed():
    network = reference_network("synthetic", seed=2)
    return apply_plan(network, plan_by_energy(network, 0.8), force=True)


@pytest.fixture
def model_bytes(compressed):
    return dumps(compressed)


class TestRoundTrip:
    def test_parameters_within_float32_precision(self, compressed, tmp_path):
        path = tmp_path / "model.bin"
        save_model(compressed, path)
        loaded = load_model(path)
        assert loaded.input_shape == compressed.input_shape
        assert [layer.spec for layer in loaded.layers] == [layer.spec for layer in compressed.layers]
        for (i, name, a), (j, other, b) in zip(compressed.parameters(), loaded.parameters()):
            assert (i, name) == (j, other)
            assert b.dtype == np.float64
            np.testing.assert_allclose(b, a, rtol=1e-6, atol=1e-7)

    def test_outputs_agree(self, compressed, model_bytes):
        loaded = loads(model_bytes)
        x = np.random.default_rng(0).normal(size=(4, 1, 16, 16))
        np.testing.assert_allclose(loaded.forward(x), compressed.forward(x), rtol=1e-5, atol=1e-5)

    def test_bytes_are_deterministic(self, compressed, model_bytes, tmp_path):
        assert dumps(compressed) == model_bytes
        path = tmp_path / "model.bin"
        save_model(loads(model_bytes), path)
        assert path.read_bytes() == model_bytes

    def test_plain_network(self):
        network = reference_network("mnist", seed=0)
        loaded = loads(dumps(network))
        assert loaded.num_parameters() == network.num_parameters()

    def test_file_size(self, compressed, model_bytes):
        header, payload = split(model_bytes)
        assert len(payload) == 4 * compressed.num_parameters()
        assert sum(t["nbytes"] for t in header["tensors"]) == len(payload)


class TestHeader:
    def test_fields(self, compressed, tmp_path):
        path = tmp_path / "model.bin"
        save_model(compressed, path)
        header = read_header(path)
        assert header["format_version"] == 1
        assert header["input_shape"] == [1, 16, 16]
        assert [layer["kind"] for layer in header["layers"]][:3] == ["BasisConv", "ReLU", "MaxPool"]

    def test_basis_conv_has_three_tensors(self, compressed, model_bytes):
        header, _ = split(model_bytes)
        first = [t for t in header["tensors"] if t["layer"] == 0]
        assert [t["name"] for t in first] == ["basis", "weights", "bias"]
        layer = compressed.layers[0]
        assert isinstance(layer, BasisConv)
        assert first[0]["shape"] == [layer.rank, 1, 3, 3]
        assert first[1]["shape"] == [8, layer.rank]
        assert first[2]["shape"] == [8]

    def test_offsets_are_contiguous(self, model_bytes):
        header, _ = split(model_bytes)
        offset = 0
        for tensor in header["tensors"]:
            assert tensor["offset"] == offset
            offset += tensor["nbytes"]

    def test_header_keys_sorted(self, model_bytes):
        length = int.from_bytes(model_bytes[8:16], "little")
        text = model_bytes[16 : 16 + length].decode()
        assert text.startswith('{"format_version":1,"input_shape"')


class TestCorruptFiles:
    def test_truncated_by_one_byte(self, model_bytes):
        with pytest.raises(TruncatedPayloadError) as err:
            loads(model_bytes[:-1])
        assert err.value.offset == len(model_bytes) - 1

    def test_trailing_bytes(self, model_bytes):
        with pytest.raises(MalformedHeaderError, match="trailing"):
            loads(model_bytes + b"\x00")

    def test_bad_magic(self, model_bytes):
        with pytest.raises(MalformedHeaderError) as err:
            loads(b"NOTMODEL" + model_bytes[8:])
        assert err.value.offset == 0

    def test_empty_file(self):
        with pytest.raises(MalformedHeaderError):
            loads(b"")

    def test_header_length_past_end(self):
        with pytest.raises(MalformedHeaderError) as err:
            loads(MAGIC + (1000).to_bytes(8, "little") + b"{}")
        assert err.value.offset == 8

    def test_corrupt_json(self):
        with pytest.raises(MalformedHeaderError) as err:
            loads(MAGIC + (4).to_bytes(8, "little") + b"{bad")
        assert err.value.offset == 17

    def test_version_mismatch(self, model_bytes):
        header, payload = split(model_bytes)
        header["format_version"] = 2
        with pytest.raises(VersionMismatchError) as err:
            loads(assemble(header, payload))
        assert err.value.offset == 16
        assert isinstance(err.value, ModelFileError)

    def test_manifest_gap(self, model_bytes):
        header, payload = split(model_bytes)
        header["tensors"][1]["offset"] += 4
        with pytest.raises(MalformedHeaderError, match="starts at"):
            loads(assemble(header, payload))

    def test_manifest_size_disagrees_with_shape(self, model_bytes):
        header, payload = split(model_bytes)
        header["tensors"][0]["nbytes"] -= 4
        with pytest.raises(MalformedHeaderError):
            loads(assemble(header, payload))

    def test_tensor_for_unknown_layer(self):
        network = Network((1, 2, 2), [Flatten()])
        header, payload = split(dumps(network))
        header["tensors"] = [{"layer": 5, "name": "weight", "shape": [1], "offset": 0, "nbytes": 4}]
        with pytest.raises(MalformedHeaderError, match="valid network"):
            loads(assemble(header, payload + b"\x00\x00\x80\x3f"))

    def test_missing_tensor(self, model_bytes):
        header, payload = split(model_bytes)
        dropped = header["tensors"].pop()
        with pytest.raises(MalformedHeaderError):
            loads(assemble(header, payload[: -dropped["nbytes"]]))

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_model(tmp_path / "absent.bin")

    def test_path_in_message(self, model_bytes, tmp_path):
        path = tmp_path / "broken.bin"
        path.write_bytes(model_bytes[:-1])
        with pytest.raises(TruncatedPayloadError, match="broken.bin"):
            load_model(path)
