"""Index bookkeeping, truncations, sparse complex matrices and eigenpairs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from . import _accel
from .errors import InvalidInputError, RangeError


@dataclass(frozen=True)
class TruncationParams:
    """Spectral truncation on A x T^2.

    With ``fourier_A`` the A-index is a signed wavenumber in [-ell_A, ell_A];
    otherwise it is an ordinal in [0, ell_A).
    """

    ell_A: int
    ell_X1: int
    ell_X2: int
    ell_v: int | None = None
    fourier_A: bool = False

    def __post_init__(self):
        lo_A = 0 if self.fourier_A else 1
        if self.ell_A < lo_A:
            raise InvalidInputError(f"ell_A must be >= {lo_A}, got {self.ell_A}")
        if self.ell_X1 < 0 or self.ell_X2 < 0:
            raise InvalidInputError("spatial truncations must be >= 0")
        if self.ell_v is not None and not (1 <= self.ell_v <= self.ell_A):
            raise InvalidInputError(f"ell_v must lie in [1, ell_A], got {self.ell_v}")

    @property
    def nA(self) -> int:
        return 2 * self.ell_A + 1 if self.fourier_A else self.ell_A

    @property
    def nX1(self) -> int:
        return 2 * self.ell_X1 + 1

    @property
    def nX2(self) -> int:
        return 2 * self.ell_X2 + 1

    @property
    def i_min(self) -> int:
        return -self.ell_A if self.fourier_A else 0

    @property
    def ell_total(self) -> int:
        return self.nA * self.nX1 * self.nX2

    @property
    def velocity_truncation(self) -> int:
        return self.ell_A if self.ell_v is None else self.ell_v

    def index_arrays(self):
        """Return (i, j, k) integer arrays over all flattened indices."""
        n = np.arange(self.ell_total)
        k = n % self.nX2 - self.ell_X2
        j = (n // self.nX2) % self.nX1 - self.ell_X1
        i = n // (self.nX1 * self.nX2) + self.i_min
        return i, j, k

    def laplace_eigs(self, eta_A=None) -> np.ndarray:
        """eta_ijk = eta^A_i + j^2 + k^2 on the flattened index set."""
        i, j, k = self.index_arrays()
        if eta_A is None:
            if not self.fourier_A:
                raise InvalidInputError("data-driven truncation needs eta_A")
            ea = i.astype(float) ** 2
        else:
            eta_A = np.asarray(eta_A, dtype=float)
            if eta_A.size < self.nA:
                raise InvalidInputError("eta_A shorter than ell_A")
            ea = eta_A[i - self.i_min]
        return ea + j.astype(float) ** 2 + k.astype(float) ** 2


@dataclass(frozen=True)
class MultiIndex:
    i: int
    j: int
    k: int


def _in_box(i, j, k, t: TruncationParams) -> bool:
    return (t.i_min <= i < t.i_min + t.nA) and abs(j) <= t.ell_X1 and abs(k) <= t.ell_X2


def flatten_index(m, t: TruncationParams) -> int:
    """Row-major linear index, A-index slowest and x2-wavenumber fastest."""
    i, j, k = (m.i, m.j, m.k) if isinstance(m, MultiIndex) else m
    if not _in_box(i, j, k, t):
        raise RangeError(f"index {(i, j, k)} outside truncation box")
    return ((i - t.i_min) * t.nX1 + (j + t.ell_X1)) * t.nX2 + (k + t.ell_X2)


def unflatten_index(n: int, t: TruncationParams) -> MultiIndex:
    if not (0 <= n < t.ell_total):
        raise RangeError(f"linear index {n} outside [0, {t.ell_total})")
    k = n % t.nX2 - t.ell_X2
    j = (n // t.nX2) % t.nX1 - t.ell_X1
    i = n // (t.nX1 * t.nX2) + t.i_min
    return MultiIndex(int(i), int(j), int(k))


def dirichlet_sort(energies) -> np.ndarray:
    """Permutation sorting energies ascending; ties keep original order."""
    e = np.asarray(energies, dtype=float)
    if np.any(np.isnan(e)):
        raise InvalidInputError("NaN in energies")
    return np.argsort(e, kind="stable")


class SparseComplexMatrix:
    """Complex CSR matrix assembled from (row, col, value) triples.

    Duplicates are summed when the matrix is built.  Instances are not
    meant to be mutated afterwards.
    """

    def __init__(self, csr: sps.csr_matrix):
        csr = sps.csr_matrix(csr, dtype=np.complex128)
        csr.sum_duplicates()
        csr.sort_indices()
        self._m = csr

    @classmethod
    def from_entries(cls, nrows, ncols, rows, cols, values):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols):
            raise RangeError("entry index out of range")
        coo = sps.coo_matrix((np.asarray(values, dtype=np.complex128), (rows, cols)), shape=(nrows, ncols))
        return cls(coo.tocsr())

    @property
    def shape(self):
        return self._m.shape

    @property
    def nnz(self) -> int:
        return self._m.nnz

    @property
    def csr(self) -> sps.csr_matrix:
        return self._m

    @property
    def T(self) -> "SparseComplexMatrix":
        return SparseComplexMatrix(self._m.T.tocsr())

    @property
    def H(self) -> "SparseComplexMatrix":
        return SparseComplexMatrix(self._m.conj().T.tocsr())

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x)
        return _accel.csr_matvec(self._m.indptr, self._m.indices, self._m.data, x)

    def __matmul__(self, x):
        return self.matvec(x)

    def toarray(self) -> np.ndarray:
        return self._m.toarray()

    def diagonal(self) -> np.ndarray:
        return self._m.diagonal()

    def entries(self):
        coo = self._m.tocoo()
        return coo.row, coo.col, coo.data

    def __add__(self, other):
        o = other.csr if isinstance(other, SparseComplexMatrix) else other
        return SparseComplexMatrix(self._m + o)

    def __sub__(self, other):
        o = other.csr if isinstance(other, SparseComplexMatrix) else other
        return SparseComplexMatrix(self._m - o)

    def __eq__(self, other):
        if not isinstance(other, SparseComplexMatrix) or other.shape != self.shape:
            return NotImplemented
        d = self._m != other._m
        return d.nnz == 0

    __hash__ = None


@dataclass
class EigenPair:
    """One coherent pattern: eigenvalue, coefficients, Dirichlet energy."""

    lam: complex
    coeffs: np.ndarray
    energy: float = 0.0
    l2_norm: float = 1.0
    residual: float = field(default=0.0)

    @property
    def gamma(self) -> float:
        return float(np.real(self.lam))

    @property
    def omega(self) -> float:
        return float(np.imag(self.lam))
