"""Dataset ingestion: MNIST-style IDX files, CIFAR-10 binary batches, npz tensor files and generated shapes."""

import gzip
import io
import logging
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import asserter
from .errors import DataError, FormatError
from .tensor import Tensor
from .utils import atomic_write

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MNIST_MEAN = (0.1307,)
MNIST_SCALE = (0.3081,)
CIFAR10_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR10_SCALE = (0.2470, 0.2435, 0.2616)
CIFAR10_SHAPE = (3, 32, 32)
CIFAR10_RECORD = 1 + 3 * 32 * 32
SOURCE_KINDS = ("idx", "cifar", "npz", "synthetic")


@dataclass
class Dataset:
    """Normalized images [N, C, H, W] with integer labels in [0, num_classes).

    ``mean`` and ``scale`` record the per-channel normalization applied to the
    raw [0, 1] pixel values: x = (raw - mean) / scale.
    """

    images: Tensor
    labels: np.ndarray
    num_classes: int
    mean: tuple[float, ...] = (0.0,)
    scale: tuple[float, ...] = (1.0,)
    name: str = ""

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        asserter.ndim("images", self.images, (4,))
        asserter.positive_int("Dataset: ", num_classes=self.num_classes)
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels."
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"Labels must lie in [0, {self.num_classes}).")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def sample_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def head(self, limit: int | None) -> "Dataset":
        """The first ``limit`` samples, in file order (all of them when None)."""
        if limit is None:
            return self
        asserter.non_negative_int("Dataset.head: ", limit=limit)
        return Dataset(
            self.images[:limit], self.labels[:limit], self.num_classes, self.mean, self.scale, self.name
        )


@dataclass(frozen=True)
class DatasetSource:
    """Where a dataset comes from.

    Attributes:
        kind (str): ``idx``, ``cifar``, ``npz`` or ``synthetic``.
        images (str | None): IDX image file, CIFAR batch file or npz file.
        labels (str | None): IDX label file (``idx`` only).
        count (int): Sample count for ``synthetic``.
        seed (int): Generator seed for ``synthetic``.
    """

    kind: str = "synthetic"
    images: str | None = None
    labels: str | None = None
    count: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"Unknown dataset kind '{self.kind}', expected one of {SOURCE_KINDS}.")
        required = {"idx": ("images", "labels"), "cifar": ("images",), "npz": ("images",)}
        missing = [name for name in required.get(self.kind, ()) if getattr(self, name) is None]
        if missing:
            raise ValueError(f"A '{self.kind}' dataset needs {missing}.")
        asserter.positive_int("DatasetSource: ", count=self.count)


def _read_bytes(path: str | Path) -> bytes:
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".gz":
        try:
            data = gzip.decompress(data)
        except (EOFError, gzip.BadGzipFile) as e:
            raise FormatError(f"{path}: corrupt gzip stream ({e}).") from e
    return data


def read_idx(path: str | Path, magic: int) -> np.ndarray:
    """Read an IDX file of unsigned bytes.

    Raises:
        FormatError: If the magic number differs or the body does not match the declared dimensions.
    """
    data = _read_bytes(path)
    if len(data) < 4:
        raise FormatError(f"{path}: too short for an IDX header.")
    found = int.from_bytes(data[:4], "big")
    if found != magic:
        raise FormatError(f"{path}: magic number 0x{found:08x}, expected 0x{magic:08x}.")
    ndim = data[3]
    header = 4 + 4 * ndim
    if len(data) < header:
        raise FormatError(f"{path}: header declares {ndim} dimensions but the file ends first.")
    dims = tuple(int(d) for d in np.frombuffer(data, dtype=">u4", count=ndim, offset=4))
    expected = int(np.prod(dims))
    if len(data) - header != expected:
        raise FormatError(
            f"{path}: dimensions {dims} need {expected} bytes, found {len(data) - header}."
        )
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def _normalize(raw: np.ndarray, mean: tuple[float, ...], scale: tuple[float, ...]) -> Tensor:
    x = raw.astype(np.float64) / 255.0
    shape = (1, len(mean), 1, 1)
    return (x - np.reshape(mean, shape)) / np.reshape(scale, shape)


def _load_idx(source: DatasetSource, limit: int | None) -> Dataset:
    images = read_idx(source.images, IDX_IMAGES_MAGIC)
    labels = read_idx(source.labels, IDX_LABELS_MAGIC)
    if images.ndim != 3 or labels.ndim != 1:
        raise FormatError(
            f"Expected [N, rows, cols] images and [N] labels, got {images.shape} and {labels.shape}."
        )
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels.")
    images, labels = images[:limit], labels[:limit]
    return Dataset(
        _normalize(images[:, np.newaxis], MNIST_MEAN, MNIST_SCALE),
        labels,
        num_classes=10,
        mean=MNIST_MEAN,
        scale=MNIST_SCALE,
        name=Path(source.images).name,
    )


def _load_cifar(source: DatasetSource, limit: int | None) -> Dataset:
    data = _read_bytes(source.images)
    if len(data) == 0 or len(data) % CIFAR10_RECORD:
        raise FormatError(
            f"{source.images}: {len(data)} bytes is not a whole number of {CIFAR10_RECORD}-byte records."
        )
    records = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR10_RECORD)[:limit]
    labels = records[:, 0]
    if labels.size and labels.max() >= 10:
        raise FormatError(f"{source.images}: label {labels.max()} outside [0, 10).")
    images = records[:, 1:].reshape(-1, *CIFAR10_SHAPE)
    return Dataset(
        _normalize(images, CIFAR10_MEAN, CIFAR10_SCALE),
        labels,
        num_classes=10,
        mean=CIFAR10_MEAN,
        scale=CIFAR10_SCALE,
        name=Path(source.images).name,
    )


def _load_npz(source: DatasetSource, limit: int | None) -> Dataset:
    try:
        with np.load(source.images, allow_pickle=False) as archive:
            images = archive["images"][:limit]
            labels = archive["labels"][:limit]
            num_classes = int(archive["num_classes"]) if "num_classes" in archive.files else None
            mean = tuple(archive["mean"].tolist()) if "mean" in archive.files else (0.0,)
            scale = tuple(archive["scale"].tolist()) if "scale" in archive.files else (1.0,)
    except KeyError as e:
        raise FormatError(f"{source.images}: missing array {e}.") from e
    except (ValueError, EOFError, zipfile.BadZipFile) as e:
        raise FormatError(f"{source.images}: not an npz archive ({e}).") from e
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 1
    return Dataset(images, labels, num_classes, mean, scale, Path(source.images).name)


def load_dataset(source: DatasetSource, limit: int | None = None) -> Dataset:
    """Load a dataset into memory as normalized float64 tensors, in file order.

    Args:
        source (DatasetSource): Files (or generator settings) to read.
        limit (int | None, optional): Keep only the first ``limit`` samples. Defaults to None.

    Raises:
        FormatError: On a magic-number, record-size or image/label count mismatch.
        DataError: If labels fall outside [0, num_classes).
        OSError: If a file cannot be read.

    Returns:
        Dataset: The loaded samples.
    """
    if limit is not None:
        asserter.non_negative_int("load_dataset: ", limit=limit)
    if source.kind == "idx":
        dataset = _load_idx(source, limit)
    elif source.kind == "cifar":
        dataset = _load_cifar(source, limit)
    elif source.kind == "npz":
        dataset = _load_npz(source, limit)
    else:
        dataset = synthetic_shapes(source.count, source.seed).head(limit)
    logger.info("loaded %d samples of shape %s from %s", len(dataset), dataset.sample_shape, source.kind)
    return dataset


SHAPE_CLASSES = ("horizontal bar", "vertical bar", "square outline", "disk")
_SYNTHETIC_SIZE = 16


def _draw(kind: int, rng: np.random.Generator) -> Tensor:
    size = _SYNTHETIC_SIZE
    image = np.zeros((size, size))
    row, col = rng.integers(3, size - 3, size=2)
    intensity = rng.uniform(0.7, 1.0)
    if kind == 0:
        half = int(rng.integers(4, 7))
        image[row : row + 2, max(col - half, 0) : col + half] = intensity
    elif kind == 1:
        half = int(rng.integers(4, 7))
        image[max(row - half, 0) : row + half, col : col + 2] = intensity
    elif kind == 2:
        half = int(rng.integers(2, 4))
        top, bottom = max(row - half, 0), min(row + half, size - 1)
        left, right = max(col - half, 0), min(col + half, size - 1)
        image[top, left : right + 1] = intensity
        image[bottom, left : right + 1] = intensity
        image[top : bottom + 1, left] = intensity
        image[top : bottom + 1, right] = intensity
    else:
        radius = rng.uniform(2.0, 3.5)
        rows, cols = np.mgrid[:size, :size]
        image[(rows - row) ** 2 + (cols - col) ** 2 <= radius**2] = intensity
    return image + rng.normal(0.0, 0.05, size=image.shape)


def synthetic_shapes(count: int, seed: int = 0) -> Dataset:
    """Generate ``count`` 1x16x16 images of four shape classes (bars, square outlines, disks) with noise.

    Classes are balanced and shuffled; equal seeds give identical datasets.
    """
    asserter.positive_int("synthetic_shapes: ", count=count)
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(count) % len(SHAPE_CLASSES))
    images = np.stack([_draw(int(label), rng) for label in labels])[:, np.newaxis]
    return Dataset(images, labels, len(SHAPE_CLASSES), name=f"synthetic-{count}-{seed}")


def save_npz(dataset: Dataset, path: str | Path) -> None:
    """Store a dataset as an npz tensor file readable by ``load_dataset`` (kind ``npz``)."""
    buffer = io.BytesIO()
    np.savez(
        buffer,
        images=dataset.images,
        labels=dataset.labels,
        num_classes=np.array(dataset.num_classes),
        mean=np.array(dataset.mean),
        scale=np.array(dataset.scale),
    )
    atomic_write(path, buffer.getvalue())
