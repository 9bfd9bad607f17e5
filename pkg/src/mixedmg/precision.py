"""Software-emulated reduced-precision vector kernels with certified error bounds.

Every kernel evaluates each scalar operation exactly in the float64 carrier
and then rounds the result once to the target significand width
(round-to-nearest, ties to even).  This realises the standard model
``fl(a op b) = (a op b)(1 + d)`` with ``|d| <= u`` for unit roundoff
``u = 2**-significand_bits``, which is what the a-priori bounds returned by
the kernels assume.

Matrix kernels accumulate each row sequentially left to right over the
stored nonzeros, with the right-hand side subtracted last, so the error
accounting matches the ``(m + 1)``-term inflation factor
``(m + 1) * u / (1 - (m + 1) * u)`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

#: Significand bits of the float64 carrier (including the implicit bit).
CARRIER_BITS = 53


class PrecisionTooLowError(ArithmeticError):
    """The inflation factor (m + 1) * u / (1 - (m + 1) * u) is undefined."""


class PrecisionUnachievableError(ArithmeticError):
    """No emulated format inside the carrier meets the requested roundoff."""


@dataclass(frozen=True)
class PrecisionFormat:
    """An emulated binary floating-point format.

    ``significand_bits`` counts stored significand bits including the
    implicit leading bit, so the unit roundoff is ``2**-significand_bits``.
    The exponent range is unbounded up to the carrier's own limits; there
    are no subnormals and no stochastic rounding.
    """

    significand_bits: int

    def __post_init__(self):
        if not 2 <= int(self.significand_bits) <= CARRIER_BITS:
            raise ValueError(
                f"significand_bits must be in [2, {CARRIER_BITS}], "
                f"got {self.significand_bits}"
            )

    @property
    def unit_roundoff(self) -> float:
        return 2.0 ** -self.significand_bits


#: The carrier itself as a format; rounding to it is the identity.
CARRIER = PrecisionFormat(CARRIER_BITS)


@dataclass(frozen=True, eq=False)
class RoundedResult:
    """A kernel result together with its a-priori Euclidean error bound.

    Whenever the exact result is recomputed by a high-precision oracle,
    ``norm(value - exact) <= a_priori_bound`` holds.
    """

    value: np.ndarray
    a_priori_bound: float


def _round_array(x: np.ndarray, bits: int) -> np.ndarray:
    """Round every entry of ``x`` to ``bits`` significand bits, ties to even."""
    if bits >= CARRIER_BITS:
        return np.array(x, dtype=np.float64, copy=True)
    m, e = np.frexp(np.asarray(x, dtype=np.float64))
    # m * 2**bits lies in [2**(bits-1), 2**bits): np.rint is exact there and
    # breaks ties to even; scaling by powers of two is exact.  Overflow to
    # inf is tolerated here and signaled by the range check at the call site.
    with np.errstate(over="ignore"):
        return np.ldexp(np.rint(np.ldexp(m, bits)), e - bits)


def _as_finite_vector(w, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError(f"{name} must be finite")
    return w


def _check_carrier_range(value: np.ndarray):
    if not np.all(np.isfinite(value)):
        raise OverflowError("result overflows the float64 carrier")


def round_scalar(x: float, fmt: PrecisionFormat) -> float:
    """Round a finite scalar to ``fmt`` (round-to-nearest, ties to even)."""
    if not np.isfinite(x):
        raise ValueError("x must be finite")
    out = float(_round_array(np.float64(x), fmt.significand_bits))
    _check_carrier_range(np.float64(out))
    return out


def round_vector(w, fmt: PrecisionFormat) -> np.ndarray:
    """Componentwise :func:`round_scalar` without the error bound."""
    out = _round_array(_as_finite_vector(w, "w"), fmt.significand_bits)
    _check_carrier_range(out)
    return out


def quantize_vector(w, fmt: PrecisionFormat) -> RoundedResult:
    """Round a vector into ``fmt``; bound is ``u * norm(w)``."""
    w = _as_finite_vector(w, "w")
    value = _round_array(w, fmt.significand_bits)
    _check_carrier_range(value)
    return RoundedResult(value, fmt.unit_roundoff * float(np.linalg.norm(w)))


def rounded_add_sub(v, w, sign: str, fmt: PrecisionFormat) -> RoundedResult:
    """Componentwise rounded ``v + w`` or ``v - w``; bound is ``u * norm(v +- w)``.

    Both operands are expected to be representable in ``fmt`` already; the
    single rounding then gives the componentwise ``(1 + d)`` model.
    """
    v = _as_finite_vector(v, "v")
    w = _as_finite_vector(w, "w")
    if v.shape != w.shape:
        raise ValueError(f"shape mismatch: {v.shape} vs {w.shape}")
    if sign == "+":
        exact = v + w
    elif sign == "-":
        exact = v - w
    else:
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    value = _round_array(exact, fmt.significand_bits)
    _check_carrier_range(value)
    return RoundedResult(value, fmt.unit_roundoff * float(np.linalg.norm(exact)))


def _csr(K) -> sparse.csr_array:
    if hasattr(K, "matrix"):  # SparseSpd and friends
        K = K.matrix
    if sparse.issparse(K):
        M = sparse.csr_array(K)
    else:
        M = sparse.csr_array(np.asarray(K, dtype=np.float64))
    M.sort_indices()
    return M


def _padded_rows(K: sparse.csr_array):
    """Row-major (values, column-index) arrays padded with explicit zeros.

    Padding with zero terms is exact under rounding (adding an exact zero to
    a representable partial sum is a fixed point), so it does not disturb
    the per-row error accounting.
    """
    n_rows = K.shape[0]
    counts = np.diff(K.indptr)
    width = max(int(counts.max(initial=0)), 1)
    vals = np.zeros((n_rows, width))
    cols = np.zeros((n_rows, width), dtype=np.int64)
    rows = np.repeat(np.arange(n_rows), counts)
    slots = np.arange(K.nnz) - np.repeat(K.indptr[:-1], counts)
    vals[rows, slots] = K.data
    cols[rows, slots] = K.indices
    return vals, cols, int(counts.max(initial=0))


def _inflation(m: int, eps: float) -> float:
    if (m + 1) * eps >= 1.0:
        raise PrecisionTooLowError(
            f"(m + 1) * u = {(m + 1) * eps} >= 1; error model undefined"
        )
    return (m + 1) / (1.0 - (m + 1) * eps)


def _abs_two_norm(K: sparse.csr_array) -> float:
    return float(np.linalg.norm(np.abs(K.toarray()), 2))


def _rounded_row_accumulate(K, w, c, fmt: PrecisionFormat):
    vals, cols, m = _padded_rows(K)
    bits = fmt.significand_bits
    acc = _round_array(vals[:, 0] * w[cols[:, 0]], bits)
    for j in range(1, vals.shape[1]):
        term = _round_array(vals[:, j] * w[cols[:, j]], bits)
        acc = _round_array(acc + term, bits)
    if c is not None:
        acc = _round_array(acc - c, bits)
    _check_carrier_range(acc)
    return acc, m


def rounded_residual(K, w, c, fmt: PrecisionFormat, *, eta_abs: float | None = None) -> RoundedResult:
    """Compute ``K @ w - c`` with every partial product and sum rounded to ``fmt``.

    The a-priori bound is ``u * inflation * (norm(c) + eta_abs * norm(w))``
    where ``inflation = (m + 1) / (1 - (m + 1) u)`` with ``m`` the maximum
    number of stored nonzeros in any row of ``K`` and ``eta_abs`` the
    spectral norm of the entrywise absolute value of ``K`` (computed densely
    when not supplied).
    """
    K = _csr(K)
    w = _as_finite_vector(w, "w")
    c = _as_finite_vector(c, "c")
    if K.shape[1] != w.shape[0] or K.shape[0] != c.shape[0]:
        raise ValueError("nonconformal residual dimensions")
    value, m = _rounded_row_accumulate(K, w, c, fmt)
    inflation = _inflation(m, fmt.unit_roundoff)
    if eta_abs is None:
        eta_abs = _abs_two_norm(K)
    bound = fmt.unit_roundoff * inflation * (
        float(np.linalg.norm(c)) + eta_abs * float(np.linalg.norm(w))
    )
    return RoundedResult(value, bound)


def rounded_matvec(K, w, fmt: PrecisionFormat, *, eta_abs: float | None = None) -> RoundedResult:
    """Compute ``K @ w`` row by row in ``fmt``; bound ``u * inflation * eta_abs * norm(w)``."""
    K = _csr(K)
    w = _as_finite_vector(w, "w")
    if K.shape[1] != w.shape[0]:
        raise ValueError("nonconformal matvec dimensions")
    value, m = _rounded_row_accumulate(K, w, None, fmt)
    inflation = _inflation(m, fmt.unit_roundoff)
    if eta_abs is None:
        eta_abs = _abs_two_norm(K)
    bound = fmt.unit_roundoff * inflation * eta_abs * float(np.linalg.norm(w))
    return RoundedResult(value, bound)
