"""Dense float64 tensors and the numeric kernels everything else is built on.

A Tensor is a row-major ``numpy.ndarray`` of ``float64``; image tensors are
channel-first ``[C, H, W]`` or batched ``[N, C, H, W]``. The convolution is a
cross-correlation (no kernel flip) computed through im2col + GEMM.
"""

from contextlib import contextmanager
from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import ArrayLike, NDArray

from . import asserter
from .errors import DimensionError

Tensor = NDArray[np.float64]


class MacCounter:
    """Multiply-accumulate counter fed by the forward kernels."""

    def __init__(self):
        self.count = 0

    def add(self, macs: int) -> None:
        self.count += int(macs)

    def reset(self) -> None:
        self.count = 0


_COUNTER = MacCounter()


@contextmanager
def mac_counter() -> Iterator[MacCounter]:
    """Count the MACs executed by conv2d_forward and matmul inside the block.

    Yields:
        MacCounter: counter whose ``count`` holds the MACs of the block so far.
    """
    global _COUNTER
    previous = _COUNTER
    _COUNTER = MacCounter()
    try:
        yield _COUNTER
    finally:
        previous.add(_COUNTER.count)
        _COUNTER = previous


def as_tensor(data: ArrayLike) -> Tensor:
    """Return data as a contiguous float64 array (no copy when already one)."""
    return np.ascontiguousarray(data, dtype=np.float64)


def output_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    """floor((size + 2*pad - kernel) / stride) + 1"""
    return (size + 2 * pad - kernel) // stride + 1


def _batched(input: Tensor) -> tuple[Tensor, bool]:
    asserter.ndim("input", input, (3, 4))
    if input.ndim == 3:
        return input[np.newaxis], True
    return input, False


def _check_conv(x: Tensor, filters: Tensor, stride: int, pad: int) -> None:
    asserter.ndim("filters", filters, (4,))
    asserter.positive_int("conv2d: ", stride=stride)
    asserter.non_negative_int("conv2d: ", pad=pad)
    _, channels, height, width = x.shape
    _, filter_channels, d_h, d_w = filters.shape
    asserter.same_extent("conv2d: ", channels=(filter_channels, channels), kernel=(d_w, d_h))
    if d_h > height + 2 * pad:
        raise DimensionError(
            f"Kernel {d_h} larger than padded height {height + 2 * pad}.", axis="height"
        )
    if d_w > width + 2 * pad:
        raise DimensionError(
            f"Kernel {d_w} larger than padded width {width + 2 * pad}.", axis="width"
        )


def im2col(x: Tensor, kernel: int, stride: int, pad: int) -> Tensor:
    """Unfold sliding windows of a batched input into rows.

    Args:
        x (Tensor): Input of shape [N, C, H, W].
        kernel (int): Window size D.
        stride (int): Window step.
        pad (int): Zero padding on every side.

    Returns:
        Tensor: Matrix [N*H'*W', C*D*D]; rows ordered (n, h', w'), columns (c, m, n).
    """
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    n = x.shape[0]
    channels = x.shape[1]
    windows = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[
        :, :, ::stride, ::stride
    ]
    out_h, out_w = windows.shape[2], windows.shape[3]
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(
        n * out_h * out_w, channels * kernel * kernel
    )


def col2im(
    cols: Tensor, input_shape: tuple[int, ...], kernel: int, stride: int, pad: int
) -> Tensor:
    """Scatter-add window rows back to an input-shaped array (adjoint of im2col)."""
    n, channels, height, width = input_shape
    out_h = output_extent(height, kernel, stride, pad)
    out_w = output_extent(width, kernel, stride, pad)
    patches = cols.reshape(n, out_h, out_w, channels, kernel, kernel)
    padded = np.zeros((n, channels, height + 2 * pad, width + 2 * pad))
    h_stop = stride * (out_h - 1) + 1
    w_stop = stride * (out_w - 1) + 1
    for i in range(kernel):
        for j in range(kernel):
            padded[:, :, i : i + h_stop : stride, j : j + w_stop : stride] += patches[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    if pad:
        return padded[:, :, pad:-pad, pad:-pad]
    return padded


def conv2d_forward(
    input: Tensor,
    filters: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    pad: int = 0,
) -> Tensor:
    """Cross-correlate an input with a bank of 3D filters and add a bias per output plane.

    Args:
        input (Tensor): [C, H, W] or [N, C, H, W].
        filters (Tensor): [P, C, D, D].
        bias (Tensor | None, optional): [P]. Defaults to zeros.
        stride (int, optional): Defaults to 1.
        pad (int, optional): Zero padding. Defaults to 0.

    Raises:
        DimensionError: If channels, kernel or bias extents disagree, naming the axis.

    Returns:
        Tensor: [P, H', W'] (or [N, P, H', W'] for batched input).
    """
    x, single = _batched(as_tensor(input))
    filters = as_tensor(filters)
    _check_conv(x, filters, stride, pad)
    count, _, height, width = x.shape
    planes, channels, kernel, _ = filters.shape
    if bias is None:
        bias = np.zeros(planes)
    bias = as_tensor(bias)
    asserter.same_extent("conv2d: ", bias=(bias.shape[0] if bias.ndim == 1 else -1, planes))
    out_h = output_extent(height, kernel, stride, pad)
    out_w = output_extent(width, kernel, stride, pad)
    cols = im2col(x, kernel, stride, pad)
    out = cols @ filters.reshape(planes, -1).T + bias
    _COUNTER.add(count * out_h * out_w * planes * channels * kernel * kernel)
    out = np.ascontiguousarray(out.reshape(count, out_h, out_w, planes).transpose(0, 3, 1, 2))
    return out[0] if single else out


def conv2d_backward(
    input: Tensor,
    filters: Tensor,
    grad_out: Tensor,
    stride: int = 1,
    pad: int = 0,
) -> tuple[Tensor, Tensor, Tensor]:
    """Exact gradients of conv2d_forward.

    Args:
        input (Tensor): Forward input, [C, H, W] or [N, C, H, W].
        filters (Tensor): [P, C, D, D].
        grad_out (Tensor): Upstream gradient with the forward output's shape.
        stride (int, optional): Defaults to 1.
        pad (int, optional): Defaults to 0.

    Raises:
        DimensionError: If grad_out does not have the forward output's shape.

    Returns:
        tuple[Tensor, Tensor, Tensor]: (grad_input, grad_filters, grad_bias).
    """
    x, single = _batched(as_tensor(input))
    filters = as_tensor(filters)
    _check_conv(x, filters, stride, pad)
    grad = as_tensor(grad_out)
    if single:
        asserter.ndim("grad_out", grad, (3,))
        grad = grad[np.newaxis]
    asserter.ndim("grad_out", grad, (4,))
    count, _, height, width = x.shape
    planes, _, kernel, _ = filters.shape
    asserter.same_extent(
        "conv2d_backward: ",
        batch=(grad.shape[0], count),
        planes=(grad.shape[1], planes),
        height=(grad.shape[2], output_extent(height, kernel, stride, pad)),
        width=(grad.shape[3], output_extent(width, kernel, stride, pad)),
    )
    cols = im2col(x, kernel, stride, pad)
    grad_rows = grad.transpose(0, 2, 3, 1).reshape(-1, planes)
    grad_filters = (grad_rows.T @ cols).reshape(filters.shape)
    grad_bias = grad_rows.sum(axis=0)
    grad_cols = grad_rows @ filters.reshape(planes, -1)
    grad_input = col2im(grad_cols, x.shape, kernel, stride, pad)
    if single:
        grad_input = grad_input[0]
    return np.ascontiguousarray(grad_input), grad_filters, grad_bias


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of [M, K] and [K, N].

    Raises:
        DimensionError: If the inner dimensions differ.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    asserter.ndim("a", a, (2,))
    asserter.ndim("b", b, (2,))
    asserter.same_extent("matmul: ", inner=(b.shape[0], a.shape[1]))
    _COUNTER.add(a.shape[0] * a.shape[1] * b.shape[1])
    return a @ b
