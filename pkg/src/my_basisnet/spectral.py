"""Eigen decomposition of a layer's filter bank into orthonormal basis filters and spectral weights.

Filters h_k of shape [L, D, D] are vectorized in (l, m, n) order with n fastest
(the native row-major order), giving the columns of A = [h_1 ... h_P]. The
basis filters f_i are the top eigenvectors of A A^T and the spectral weights
are w_k = F^T h_k.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import asserter
from .errors import DegenerateSpectrumError, NumericError, RankError
from .tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

JACOBI_TOLERANCE = 1e-12
JACOBI_MAX_SWEEPS = 100
CLAMP_RELATIVE = 1e-12


@dataclass
class FilterBank:
    """The P filters h_k [P, L, D, D] of one conv layer and their biases [P]."""

    filters: Tensor
    bias: Tensor

    def __post_init__(self):
        self.filters = as_tensor(self.filters)
        self.bias = as_tensor(self.bias)
        asserter.ndim("filters", self.filters, (4,))
        asserter.ndim("bias", self.bias, (1,))
        asserter.same_extent(
            "FilterBank: ",
            bias=(self.bias.shape[0], self.filters.shape[0]),
            kernel=(self.filters.shape[3], self.filters.shape[2]),
        )
        asserter.finite("filters", self.filters)

    @property
    def count(self) -> int:
        return self.filters.shape[0]

    @property
    def channels(self) -> int:
        return self.filters.shape[1]

    @property
    def kernel(self) -> int:
        return self.filters.shape[2]

    @property
    def full_rank(self) -> int:
        """min(P, L*D^2)"""
        return min(self.count, self.channels * self.kernel**2)


@dataclass
class EigenBasis:
    """Q basis filters f_i [Q, L, D, D] with eigenvalues sorted descending."""

    basis: Tensor
    eigenvalues: Tensor

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    @property
    def matrix(self) -> Tensor:
        """F = [f_1 ... f_Q] of shape [L*D^2, Q]."""
        return self.basis.reshape(self.rank, -1).T


@dataclass
class SpectralWeights:
    """W [P, Q]; row k holds w_k, the coordinates of h_k in the basis."""

    W: Tensor

    @property
    def rank(self) -> int:
        return self.W.shape[1]


def build_filter_matrix(bank: FilterBank) -> Tensor:
    """A = [h_1 ... h_P] of shape [L*D^2, P]; column k is h_k vectorized in (l, m, n) order."""
    return np.ascontiguousarray(bank.filters.reshape(bank.count, -1).T)


def devectorize(matrix: Tensor, channels: int, kernel: int) -> Tensor:
    """Inverse of build_filter_matrix: columns [L*D^2, P] back to filters [P, L, D, D]."""
    matrix = as_tensor(matrix)
    asserter.same_extent("devectorize: ", rows=(matrix.shape[0], channels * kernel * kernel))
    return np.ascontiguousarray(matrix.T.reshape(matrix.shape[1], channels, kernel, kernel))


def jacobi_eigh(
    matrix: Tensor,
    tolerance: float = JACOBI_TOLERANCE,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
) -> tuple[Tensor, Tensor]:
    """Eigenpairs of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps visit every (p, q) pair with p < q in row order. Iteration stops when
    the off-diagonal Frobenius norm is at most ``tolerance`` times the norm of
    the matrix.

    Args:
        matrix (Tensor): Symmetric [n, n] matrix.
        tolerance (float, optional): Relative off-diagonal tolerance. Defaults to 1e-12.
        max_sweeps (int, optional): Sweep limit. Defaults to 100.

    Raises:
        DimensionError: If the matrix is not square.
        NumericError: If the off-diagonal norm is still above tolerance after max_sweeps.

    Returns:
        tuple[Tensor, Tensor]: (eigenvalues [n] unsorted, eigenvectors as columns [n, n]).
    """
    a = np.array(matrix, dtype=np.float64)
    asserter.ndim("matrix", a, (2,))
    asserter.same_extent("jacobi_eigh: ", columns=(a.shape[1], a.shape[0]))
    n = a.shape[0]
    v = np.eye(n)
    scale = float(np.linalg.norm(a))
    if n == 1 or scale == 0.0:
        return np.diag(a).copy(), v
    threshold = tolerance * scale
    skip = threshold / n
    for sweep in range(max_sweeps + 1):
        off = float(np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2)))
        if off <= threshold:
            logger.debug("jacobi converged after %d sweeps (n=%d)", sweep, n)
            return np.diag(a).copy(), v
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                a[:, p] = c * col_p - s * a[:, q]
                a[:, q] = s * col_p + c * a[:, q]
                row_p = a[p, :].copy()
                a[p, :] = c * row_p - s * a[q, :]
                a[q, :] = s * row_p + c * a[q, :]
                a[p, q] = a[q, p] = 0.0
                vec_p = v[:, p].copy()
                v[:, p] = c * vec_p - s * v[:, q]
                v[:, q] = s * vec_p + c * v[:, q]
    raise NumericError(
        f"Jacobi eigensolver did not converge in {max_sweeps} sweeps "
        f"(off-diagonal {off:.3e} > {threshold:.3e})."
    )


def _orient(vectors: Tensor) -> Tensor:
    """Flip each column so its largest-magnitude entry is positive (ties to lowest index)."""
    pivots = np.abs(vectors).argmax(axis=0)
    signs = np.where(vectors[pivots, np.arange(vectors.shape[1])] < 0, -1.0, 1.0)
    return vectors * signs


def _complete(columns: Tensor, dimension: int, missing: int) -> Tensor:
    """Append ``missing`` orthonormal columns, drawn from the standard basis by largest residual."""
    basis = columns
    for _ in range(missing):
        # squared residual norm of e_j is 1 - |row j of basis|^2
        pick = int((1.0 - np.sum(basis**2, axis=1)).argmax())
        vector = np.zeros(dimension)
        vector[pick] = 1.0
        for _ in range(2):
            vector -= basis @ (basis.T @ vector)
        basis = np.column_stack([basis, vector / np.linalg.norm(vector)])
    return basis


def decompose(bank: FilterBank) -> tuple[EigenBasis, SpectralWeights]:
    """Full eigen decomposition of a filter bank (all min(P, L*D^2) eigenpairs).

    When P < L*D^2 the smaller Gram matrix A^T A is decomposed and eigenvectors are
    mapped back through f_i = A v_i / sqrt(lambda_i). Pairs with lambda_i at or below
    1e-12 * lambda_max are clamped to zero and their basis vectors are completed
    deterministically to an orthonormal set.

    Raises:
        NumericError: If the eigensolver does not converge.

    Returns:
        tuple[EigenBasis, SpectralWeights]: basis [full, L, D, D] and weights [P, full].
    """
    a = build_filter_matrix(bank)
    dimension, count = a.shape
    full = bank.full_rank
    small_side = count < dimension
    gram = a.T @ a if small_side else a @ a.T
    values, vectors = jacobi_eigh(gram)
    order = np.argsort(-values, kind="stable")[:full]
    values = values[order]
    vectors = vectors[:, order]
    top = values[0] if values.size else 0.0
    kept = values > max(CLAMP_RELATIVE * top, 0.0)
    values = np.where(kept, values, 0.0)
    if small_side:
        retained = int(kept.sum())
        mapped = a @ vectors[:, :retained] / np.sqrt(values[:retained])
        if retained:
            q_factor, r_factor = np.linalg.qr(mapped)
            mapped = q_factor * np.where(np.diag(r_factor) < 0, -1.0, 1.0)
        columns = _complete(mapped, dimension, full - retained)
    else:
        columns = vectors
    columns = _orient(columns)
    basis = devectorize(columns, bank.channels, bank.kernel)
    weights = a.T @ columns
    return EigenBasis(basis, values), SpectralWeights(np.ascontiguousarray(weights))


def truncate(
    basis: EigenBasis, weights: SpectralWeights, rank: int
) -> tuple[EigenBasis, SpectralWeights]:
    """Keep the top ``rank`` eigenpairs of a decomposition.

    Raises:
        RankError: If rank is outside [1, basis.rank].
    """
    if not 1 <= rank <= basis.rank:
        raise RankError(f"Q={rank} outside [1, {basis.rank}].")
    return (
        EigenBasis(basis.basis[:rank].copy(), basis.eigenvalues[:rank].copy()),
        SpectralWeights(np.ascontiguousarray(weights.W[:, :rank])),
    )


def eigen_decompose(bank: FilterBank, rank: int) -> tuple[EigenBasis, SpectralWeights]:
    """Top-Q eigen basis of A A^T and the weights W = (F^T A)^T.

    Args:
        bank (FilterBank): The filters of one layer.
        rank (int): Q, in [1, min(P, L*D^2)].

    Raises:
        RankError: If Q is out of range.
        NumericError: If the eigensolver does not converge.

    Returns:
        tuple[EigenBasis, SpectralWeights]: basis [Q, L, D, D] with descending eigenvalues, weights [P, Q].
    """
    if isinstance(rank, bool) or not 1 <= rank <= bank.full_rank:
        raise RankError(f"Q={rank} outside [1, {bank.full_rank}].")
    return truncate(*decompose(bank), rank)


def spectrum(bank: FilterBank) -> Tensor:
    """All min(P, L*D^2) eigenvalues of the filter Gram matrix, descending, small ones clamped to 0."""
    return decompose(bank)[0].eigenvalues


def energy_ratio(eigenvalues_full: Tensor, rank: int) -> float:
    """t = sum of the top-Q eigenvalues / sum of all eigenvalues.

    Eigenvalues below 1e-12 * lambda_max (including small negatives) count as zero.

    Raises:
        RankError: If Q is outside [1, len(eigenvalues_full)].
        DegenerateSpectrumError: If the spectrum is all zero.
    """
    values = as_tensor(eigenvalues_full)
    asserter.ndim("eigenvalues_full", values, (1,))
    if not 1 <= rank <= values.shape[0]:
        raise RankError(f"Q={rank} outside [1, {values.shape[0]}].")
    top = values.max()
    if not top > 0:
        raise DegenerateSpectrumError("All eigenvalues are zero; the energy ratio is undefined.")
    values = np.where(values < CLAMP_RELATIVE * top, 0.0, values)
    cumulative = np.cumsum(values)
    return float(cumulative[rank - 1] / cumulative[-1])


def reconstruct(
    basis: EigenBasis, weights: SpectralWeights, bias: Tensor | None = None
) -> FilterBank:
    """Filters h_k = sum_i W[k, i] f_i; the bias is passed through (zeros when omitted).

    Raises:
        RankError: If the basis and the weights disagree on Q.
    """
    if weights.rank != basis.rank:
        raise RankError(f"Weights have Q={weights.rank} but the basis has Q={basis.rank}.")
    filters = devectorize(basis.matrix @ weights.W.T, basis.basis.shape[1], basis.basis.shape[2])
    if bias is None:
        bias = np.zeros(filters.shape[0])
    return FilterBank(filters, bias)


def orthogonality_residual(basis: Tensor) -> float:
    """max |F^T F - I| for basis filters [Q, L, D, D]."""
    flat = as_tensor(basis).reshape(basis.shape[0], -1)
    return float(np.abs(flat @ flat.T - np.eye(flat.shape[0])).max())
