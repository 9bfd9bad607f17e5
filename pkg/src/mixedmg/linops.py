"""High-precision sparse SPD linear algebra: norms, spectra, structural constants.

Everything here runs in the float64 carrier.  Spectral quantities use dense
symmetric eigensolves (problems are desk scale, n up to a few thousand), so
no estimation error enters the bound validation.  Decompositions are cached
on the matrix object because energy norms and operator norms are evaluated
thousands of times per experiment sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sparse

from .precision import PrecisionFormat, PrecisionTooLowError

_EPS = float(np.finfo(np.float64).eps)


class SpdError(ValueError):
    """The matrix is not symmetric positive definite (or numerically fails it)."""


class SparseSpd:
    """A sparse symmetric positive definite matrix with cached spectral data.

    Symmetry is checked entrywise at construction and positive definiteness
    is verified by a Cholesky factorization of the dense form.  Instances
    are immutable after construction and safe to share across threads.
    """

    def __init__(self, matrix, *, validate: bool = True):
        if sparse.issparse(matrix):
            M = sparse.csr_array(matrix).astype(np.float64)
        else:
            M = sparse.csr_array(np.asarray(matrix, dtype=np.float64))
        M.sort_indices()
        if M.shape[0] != M.shape[1]:
            raise SpdError(f"matrix must be square, got {M.shape}")
        self._matrix = M
        if validate:
            self._check_symmetric()
            self.cholesky  # noqa: B018  -- fails fast on non-PD input

    def _check_symmetric(self):
        gap = sparse.csr_array(self._matrix - self._matrix.T)
        scale = float(np.abs(self._matrix.data).max(initial=0.0))
        if gap.nnz and float(np.abs(gap.data).max()) > 8 * _EPS * max(scale, 1.0):
            raise SpdError("matrix is not symmetric")

    @property
    def matrix(self) -> sparse.csr_array:
        return self._matrix

    @property
    def n(self) -> int:
        return self._matrix.shape[0]

    @cached_property
    def m_row(self) -> int:
        """Maximum number of stored nonzeros in any row."""
        return int(np.diff(self._matrix.indptr).max(initial=0))

    @cached_property
    def dense(self) -> np.ndarray:
        return self._matrix.toarray()

    @cached_property
    def cholesky(self):
        try:
            return scipy.linalg.cho_factor(self.dense, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise SpdError(f"Cholesky factorization failed: {exc}") from exc

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Ascending eigenvalues and orthonormal eigenvectors."""
        w, v = np.linalg.eigh(self.dense)
        return w, v

    @cached_property
    def sqrt_dense(self) -> np.ndarray:
        w, v = self.eigh
        if w[0] <= 0:
            raise SpdError(f"smallest eigenvalue {w[0]} is not positive")
        return (v * np.sqrt(w)) @ v.T

    @cached_property
    def inv_sqrt_dense(self) -> np.ndarray:
        w, v = self.eigh
        if w[0] <= 0:
            raise SpdError(f"smallest eigenvalue {w[0]} is not positive")
        return (v / np.sqrt(w)) @ v.T

    @cached_property
    def _row_sum_bound(self) -> float:
        # max absolute row sum, a cheap upper bound on the spectral norm
        return float(np.abs(self.dense).sum(axis=1).max(initial=0.0))

    def diagonal(self) -> np.ndarray:
        return self._matrix.diagonal()

    def apply(self, w: np.ndarray) -> np.ndarray:
        return self._matrix @ w


@dataclass(frozen=True)
class OperatorConstants:
    """Structural constants of a sparse operator used by the error model.

    ``m`` is the maximum number of stored nonzeros per row; the model
    inflates it to ``m + 1`` through :func:`mdot_plus`.  ``eta_abs`` is the
    spectral norm of the entrywise absolute value of the operator.
    """

    m: int
    eta_abs: float


def energy_norm(w, A: SparseSpd) -> float:
    """The A-weighted norm ``sqrt(w' A w)`` evaluated in the carrier."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape[0] != A.n:
        raise ValueError(f"dimension mismatch: {w.shape[0]} vs {A.n}")
    q = float(w @ A.apply(w))
    if q < 0:
        tol = 64 * _EPS * A._row_sum_bound * float(w @ w)
        if q < -tol:
            raise SpdError(f"negative quadratic form {q}; matrix not SPD")
        q = 0.0
    return float(np.sqrt(q))


def spectral_norm(K) -> float:
    """Largest eigenvalue magnitude of a symmetric matrix (dense eigensolve)."""
    if isinstance(K, SparseSpd):
        w, _ = K.eigh
        return float(np.abs(w).max())
    dense = K.toarray() if sparse.issparse(K) else np.asarray(K, dtype=np.float64)
    if dense.shape[0] != dense.shape[1]:
        raise ValueError("spectral_norm requires a square matrix")
    return float(np.abs(np.linalg.eigvalsh(dense)).max())


def abs_matrix_norm(K) -> float:
    """Spectral norm of the entrywise absolute value (rectangular allowed)."""
    dense = K.dense if isinstance(K, SparseSpd) else (
        K.toarray() if sparse.issparse(K) else np.asarray(K, dtype=np.float64)
    )
    return float(np.linalg.norm(np.abs(dense), 2))


def condition_number(A: SparseSpd) -> float:
    """Two-norm condition number from the cached dense eigendecomposition."""
    w, _ = A.eigh
    if w[0] <= 0:
        raise SpdError(f"smallest eigenvalue {w[0]} is not positive")
    return float(w[-1] / w[0])


def mdot_plus_eps(m: int, eps: float) -> float:
    """The inflation factor ``(m + 1) / (1 - (m + 1) * eps)``."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    if (m + 1) * eps >= 1.0:
        raise PrecisionTooLowError(
            f"(m + 1) * u = {(m + 1) * eps} >= 1; inflation factor undefined"
        )
    return (m + 1) / (1.0 - (m + 1) * eps)


def mdot_plus(m: int, fmt: PrecisionFormat) -> float:
    """:func:`mdot_plus_eps` at the unit roundoff of ``fmt``."""
    return mdot_plus_eps(m, fmt.unit_roundoff)


def solve_spd(A: SparseSpd, b) -> np.ndarray:
    """Direct Cholesky solve in the carrier; the 'exact' solve proxy."""
    b = np.asarray(b, dtype=np.float64)
    return scipy.linalg.cho_solve(A.cholesky, b)


def energy_operator_norm(K, A: SparseSpd) -> float:
    """Operator norm of a dense square ``K`` in the A-energy inner product.

    Evaluates ``norm(A^(1/2) K A^(-1/2))`` with the cached matrix square
    roots; this equals the energy norm of ``K`` as a linear map.
    """
    K = np.asarray(K, dtype=np.float64)
    return float(np.linalg.norm(A.sqrt_dense @ K @ A.inv_sqrt_dense, 2))


def read_matrix_market(path) -> SparseSpd:
    """Import a real symmetric Matrix Market coordinate file as :class:`SparseSpd`."""
    M = scipy.io.mmread(path)
    return SparseSpd(M)


def write_matrix_market(path, K, comment: str = ""):
    """Write a sparse matrix in Matrix Market coordinate format."""
    M = K.matrix if isinstance(K, SparseSpd) else K
    scipy.io.mmwrite(path, sparse.coo_matrix(M), comment=comment)
