"""Model container: JSON header plus a raw little-endian float32 payload.

Layout::

    b"BASISNET"                 8 bytes magic
    header length               uint64, little-endian
    header                      UTF-8 JSON, keys sorted
    payload                     float32 LE tensors in manifest order

The header holds ``format_version``, ``input_shape``, the layer specs in order
and a ``tensors`` manifest of ``{layer, name, shape, offset, nbytes}`` entries
whose offsets are relative to the start of the payload.
"""

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    BasisNetError,
    MalformedHeaderError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .nn import LayerSpec, Network, layer_from_spec
from .utils import atomic_write

logger = logging.getLogger(__name__)

MAGIC = b"BASISNET"
FORMAT_VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f4")
_PREAMBLE = len(MAGIC) + 8


def build_header(network: Network) -> dict[str, Any]:
    """Header document for a network; tensors are listed layer by layer in parameter order."""
    tensors = []
    offset = 0
    for index, name, array in network.parameters():
        nbytes = array.size * PAYLOAD_DTYPE.itemsize
        tensors.append(
            {
                "layer": index,
                "name": name,
                "shape": list(array.shape),
                "offset": offset,
                "nbytes": nbytes,
            }
        )
        offset += nbytes
    return {
        "format_version": FORMAT_VERSION,
        "input_shape": list(network.input_shape),
        "layers": [spec.to_dict() for spec in network.specs],
        "tensors": tensors,
    }


def dumps(network: Network) -> bytes:
    """Encode a network into container bytes (deterministic for equal parameters)."""
    header = json.dumps(build_header(network), sort_keys=True, separators=(",", ":")).encode()
    payload = b"".join(
        np.ascontiguousarray(array, dtype=PAYLOAD_DTYPE).tobytes()
        for _, _, array in network.parameters()
    )
    return MAGIC + len(header).to_bytes(8, "little") + header + payload


def save_model(network: Network, path: str | Path) -> None:
    """Write a network to path (temp file then rename).

    Args:
        network (Network): The network to store.
        path (str | Path): Destination file.
    """
    data = dumps(network)
    atomic_write(path, data)
    logger.info("saved %d layers (%d bytes) to %s", len(network.layers), len(data), path)


def _parse_header(data: bytes, path: str | None) -> tuple[dict[str, Any], int]:
    if len(data) < _PREAMBLE or data[: len(MAGIC)] != MAGIC:
        raise MalformedHeaderError("Not a model file: bad magic or preamble.", 0, path)
    length = int.from_bytes(data[len(MAGIC) : _PREAMBLE], "little")
    end = _PREAMBLE + length
    if end > len(data):
        raise MalformedHeaderError(
            f"Header declares {length} bytes but the file ends first.", len(MAGIC), path
        )
    try:
        header = json.loads(data[_PREAMBLE:end].decode("utf-8"))
    except UnicodeDecodeError as e:
        raise MalformedHeaderError(f"Header is not UTF-8: {e.reason}.", _PREAMBLE + e.start, path)
    except json.JSONDecodeError as e:
        raise MalformedHeaderError(f"Header is not JSON: {e.msg}.", _PREAMBLE + e.pos, path)
    if not isinstance(header, dict):
        raise MalformedHeaderError("Header must be a JSON object.", _PREAMBLE, path)
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"format_version {version!r} is not supported (expected {FORMAT_VERSION}).",
            _PREAMBLE,
            path,
        )
    missing = [key for key in ("input_shape", "layers", "tensors") if key not in header]
    if missing:
        raise MalformedHeaderError(f"Header is missing {missing}.", _PREAMBLE, path)
    return header, end


def _manifest(tensors: Any, path: str | None) -> tuple[list[dict[str, Any]], int]:
    """Normalized manifest entries and the payload size they add up to."""
    if not isinstance(tensors, list):
        raise MalformedHeaderError("Manifest must be a list.", _PREAMBLE, path)
    entries = []
    expected = 0
    for i, tensor in enumerate(tensors):
        try:
            entry = {
                "layer": int(tensor["layer"]),
                "name": str(tensor["name"]),
                "shape": [int(s) for s in tensor["shape"]],
                "offset": int(tensor["offset"]),
                "nbytes": int(tensor["nbytes"]),
            }
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedHeaderError(f"Manifest entry {i} is invalid ({e}).", _PREAMBLE, path)
        if entry["offset"] != expected:
            raise MalformedHeaderError(
                f"Manifest entry {i} starts at {entry['offset']}, expected {expected}.",
                _PREAMBLE,
                path,
            )
        size = int(np.prod(entry["shape"])) * PAYLOAD_DTYPE.itemsize
        if entry["nbytes"] != size or size <= 0:
            raise MalformedHeaderError(
                f"Manifest entry {i} has {entry['nbytes']} bytes for shape {entry['shape']}.",
                _PREAMBLE,
                path,
            )
        expected += size
        entries.append(entry)
    return entries, expected


def loads(data: bytes, path: str | None = None) -> Network:
    """Decode container bytes into a float64 network.

    Raises:
        MalformedHeaderError: If the preamble, header or manifest is invalid.
        VersionMismatchError: If format_version is not 1.
        TruncatedPayloadError: If the payload is shorter than the manifest declares.
    """
    header, start = _parse_header(data, path)
    tensors, size = _manifest(header["tensors"], path)
    available = len(data) - start
    if available < size:
        raise TruncatedPayloadError(
            f"Payload holds {available} of {size} bytes.", len(data), path
        )
    if available > size:
        raise MalformedHeaderError(
            f"{available - size} trailing bytes after the payload.", start + size, path
        )
    params: dict[int, dict[str, np.ndarray]] = {}
    for tensor in tensors:
        begin = start + tensor["offset"]
        count = tensor["nbytes"] // PAYLOAD_DTYPE.itemsize
        array = np.frombuffer(data, dtype=PAYLOAD_DTYPE, count=count, offset=begin)
        params.setdefault(tensor["layer"], {})[tensor["name"]] = array.astype(np.float64).reshape(
            tensor["shape"]
        )
    try:
        layers = []
        for index, raw in enumerate(header["layers"]):
            layer = layer_from_spec(LayerSpec.from_dict(raw), params.pop(index, {}))
            if layer.spec.to_dict() != LayerSpec.from_dict(raw).to_dict():
                raise ValueError(f"layer {index} does not match its spec")
            layers.append(layer)
        if params:
            raise ValueError(f"tensors reference unknown layers {sorted(params)}")
        network = Network(tuple(header["input_shape"]), layers)
    except (BasisNetError, ValueError, KeyError, TypeError, AttributeError) as e:
        raise MalformedHeaderError(f"Header does not describe a valid network: {e}", _PREAMBLE, path)
    stored = {(i, name) for i, name, _ in network.parameters()}
    listed = {(t["layer"], t["name"]) for t in tensors}
    if stored != listed or len(listed) != len(tensors):
        raise MalformedHeaderError(
            f"Manifest tensors {sorted(listed ^ stored)} do not match the layers.", _PREAMBLE, path
        )
    return network


def load_model(path: str | Path) -> Network:
    """Read a network written by save_model.

    Args:
        path (str | Path): Model file.

    Raises:
        MalformedHeaderError: If the preamble, header or manifest is invalid.
        VersionMismatchError: If format_version is not 1.
        TruncatedPayloadError: If the payload is shorter than the manifest declares.
        OSError: If the file cannot be read.

    Returns:
        Network: Parameters widened back to float64.
    """
    return loads(Path(path).read_bytes(), str(path))


def read_header(path: str | Path) -> dict[str, Any]:
    """Return the parsed JSON header of a model file without decoding the payload."""
    data = Path(path).read_bytes()
    return _parse_header(data, str(path))[0]
