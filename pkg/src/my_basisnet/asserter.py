"""Methods to assert shapes, ranges and types of arguments before running numeric operations."""

from typing import Any, Iterable

import numpy as np

from .errors import DimensionError


def positive_int(title: str = "", **values: Any) -> None:
    """Assert that every keyword value is an integer greater than zero.

    Args:
        title (str, optional): Title for the error message. Defaults to "".
        **values: Named values to check.

    Raises:
        ValueError: If any of the values is not a positive integer.
    """
    errors = []
    for name, value in values.items():
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            errors.append(f"{name}={value!r} (not an int)")
        elif value < 1:
            errors.append(f"{name}={value}")
    if errors:
        raise ValueError(f"{title}The values {errors} should be positive integers.")


def non_negative_int(title: str = "", **values: Any) -> None:
    """Assert that every keyword value is an integer greater or equal to zero.

    Raises:
        ValueError: If any of the values is negative or not an integer.
    """
    errors = []
    for name, value in values.items():
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            errors.append(f"{name}={value!r} (not an int)")
        elif value < 0:
            errors.append(f"{name}={value}")
    if errors:
        raise ValueError(
            f"{title}The values {errors} should be non-negative integers."
        )


def in_range(
    name: str,
    value: float,
    low: float,
    high: float,
    low_inclusive: bool = True,
    high_inclusive: bool = True,
) -> None:
    """Assert that a real value lies in an interval.

    Args:
        name (str): Name of the value for the error message.
        value (float): The value to check.
        low (float): Lower bound.
        high (float): Upper bound.
        low_inclusive (bool, optional): Whether low itself is allowed. Defaults to True.
        high_inclusive (bool, optional): Whether high itself is allowed. Defaults to True.

    Raises:
        ValueError: If the value is NaN or outside the interval.
    """
    ok_low = value >= low if low_inclusive else value > low
    ok_high = value <= high if high_inclusive else value < high
    if not (ok_low and ok_high) or value != value:
        left = "[" if low_inclusive else "("
        right = "]" if high_inclusive else ")"
        raise ValueError(f"{name}={value} should be in {left}{low}, {high}{right}.")


def ndim(name: str, array: np.ndarray, allowed: Iterable[int]) -> None:
    """Assert the number of axes of an array.

    Raises:
        DimensionError: If array.ndim is not one of the allowed values.
    """
    allowed = tuple(allowed)
    if array.ndim not in allowed:
        raise DimensionError(
            f"{name} should have {' or '.join(map(str, allowed))} axes, got shape {array.shape}.",
            axis="ndim",
        )


def same_extent(title: str = "", **pairs: tuple[int, int]) -> None:
    """Assert that pairs of extents agree, reporting the first offending axis.

    Args:
        title (str, optional): Title for the error message. Defaults to "".
        **pairs: axis name -> (found, expected).

    Raises:
        DimensionError: If any pair differs. The error carries the first offending axis.
    """
    errors = [
        (axis, found, expected)
        for axis, (found, expected) in pairs.items()
        if found != expected
    ]
    if errors:
        detail = ", ".join(f"{a}: got {f}, expected {e}" for a, f, e in errors)
        raise DimensionError(f"{title}Extent mismatch ({detail}).", axis=errors[0][0])


def finite(name: str, array: np.ndarray) -> None:
    """Assert that an array has only finite entries.

    Raises:
        ValueError: If any entry is NaN or infinite.
    """
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains NaN or infinite entries.")


def list_of(data: list[Any], type_: Any, title: str = "") -> None:
    """Assert that the provided data is a list of items of the specified type.

    Args:
        data (list[Any]): The data to validate.
        type_ (Any): The expected type of the items in the list.
        title (str, optional): Title for the error message. Defaults to "".

    Raises:
        TypeError: If the provided data is not a list or if the items are not of the specified type.
    """
    if not isinstance(data, list):
        raise TypeError(f"{title}The provided data should be a list.")
    errors = [
        f"{i} - ({type(item).__name__})"
        for i, item in enumerate(data)
        if not isinstance(item, type_)
    ]
    if errors:
        raise TypeError(
            f"{title}The following items {errors} are not a list of type {type_.__name__}."
        )
