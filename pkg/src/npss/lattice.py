"""Lattice bases, discrete grids, and pseudo-spectral transforms.

Fields live on a uniform periodic grid r_j = A (j/N) spanned by the columns
of the lattice matrix A.  Spectral coefficients are indexed by integer modes
k with -N/2 <= k_i < N/2 in the standard FFT frequency layout, flattened in
C order so that real and spectral arrays share a fixed lexicographic index.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as _fft

__all__ = [
    "LatticeBasis",
    "Grid",
    "make_reciprocal",
    "square_lattice",
    "fft_workers",
]

TWO_PI = 2.0 * np.pi


def fft_workers() -> int:
    """Worker count for data-parallel transforms, capped by NPSS_THREADS."""
    raw = os.environ.get("NPSS_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        n = os.cpu_count() or 1
    return max(1, n)


@dataclass(frozen=True, eq=False)
class LatticeBasis:
    """Direct lattice A and reciprocal lattice B with A B^T = 2 pi I."""

    A: np.ndarray
    B: np.ndarray
    n: int

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "n", A.shape[0])
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("lattice matrix must be square")
        dual = A @ B.T
        target = TWO_PI * np.eye(self.n)
        if not np.allclose(dual, target, rtol=1e-12, atol=1e-10):
            raise ValueError("reciprocal basis violates A B^T = 2 pi I")


def make_reciprocal(A: np.ndarray) -> LatticeBasis:
    """Build the lattice pair (A, B) with B = 2 pi A^{-T}.

    Raises ``ValueError("degenerate lattice")`` when A is singular.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError("lattice matrix must be square")
    det = np.linalg.det(A)
    if not np.isfinite(det) or abs(det) < 1e-14 * max(1.0, np.abs(A).max() ** A.shape[0]):
        raise ValueError("degenerate lattice")
    B = TWO_PI * np.linalg.inv(A).T
    return LatticeBasis(A=A, B=B, n=A.shape[0])


def square_lattice(L: float, n: int) -> LatticeBasis:
    """Square/cubic cell of side 2 pi L, so |Bk| = |k| / L for integer modes k."""
    return make_reciprocal(TWO_PI * L * np.eye(n))


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform N^n periodic grid over a lattice cell.

    Real fields are float64 arrays of length M = N^n in grid-lexicographic
    (C) order; spectral fields are complex128 arrays of the same length in
    FFT frequency order.  The forward transform carries the 1/M factor, the
    inverse carries none, matching U_hat(k) = (1/M) sum_j u(r_j) e^{-i(Bk).r_j}.
    """

    basis: LatticeBasis
    N: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.N <= 0 or self.N % 2 != 0:
            raise ValueError("N must be a positive even integer")

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def M(self) -> int:
        return self.N ** self.n

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    # -- geometry ----------------------------------------------------------

    def coordinates(self) -> np.ndarray:
        """Grid points r_j = A (j/N), shape (M, n)."""
        if "coords" not in self._cache:
            axes = [np.arange(self.N) / self.N] * self.n
            frac = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)
            self._cache["coords"] = frac @ self.basis.A.T
        return self._cache["coords"]

    def integer_modes(self) -> np.ndarray:
        """Integer spectral indices k in FFT layout, shape (M, n)."""
        if "modes" not in self._cache:
            freq = np.fft.fftfreq(self.N, d=1.0 / self.N).astype(np.int64)
            grids = np.meshgrid(*([freq] * self.n), indexing="ij")
            self._cache["modes"] = np.stack(grids, axis=-1).reshape(-1, self.n)
        return self._cache["modes"]

    def bk_vectors(self) -> np.ndarray:
        """Reciprocal vectors Bk per mode, shape (M, n)."""
        if "bk" not in self._cache:
            self._cache["bk"] = self.integer_modes() @ self.basis.B.T
        return self._cache["bk"]

    # -- transforms ---------------------------------------------------------

    def forward(self, values: np.ndarray) -> np.ndarray:
        """Discrete Fourier coefficients (1/M) sum_j u_j e^{-i(Bk).r_j}."""
        u = np.asarray(values, dtype=float).reshape(self.shape)
        return (_fft.fftn(u, workers=fft_workers()) / self.M).reshape(-1)

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        """Real field sum_k U_hat(k) e^{i(Bk).r_j}; rejects non-real spectra."""
        c = np.asarray(coeffs, dtype=complex).reshape(self.shape)
        u = _fft.ifftn(c, workers=fft_workers()) * self.M
        scale = max(1.0, float(np.abs(u.real).max()))
        if np.abs(u.imag).max() > 1e-8 * scale:
            raise ValueError("non-real spectrum")
        return np.ascontiguousarray(u.real).reshape(-1)

    # -- inner products ------------------------------------------------------

    @property
    def weight(self) -> float:
        """Scalar weight of the normalized inner product <f,g> = w sum f g."""
        return 1.0 / self.M

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """l2 inner product <f,g> = (1/M) sum_j f_j g_j."""
        f = np.asarray(f)
        g = np.asarray(g)
        if f.shape != g.shape or f.size != self.M:
            raise ValueError("grid mismatch in inner product")
        return float(np.dot(f, g) / self.M)

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(f, f), 0.0)))

    # -- diagonal multipliers -------------------------------------------------

    def wave_multipliers(self, m: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Tabulate m(Bk) per mode in spectral index order.

        ``m`` receives the (M, n) array of Bk rows and returns M scalars.
        """
        return np.asarray(m(self.bk_vectors()), dtype=float).reshape(-1)

    def apply_multiplier(self, values: np.ndarray, mult: np.ndarray) -> np.ndarray:
        """Real-space action of the diagonal spectral operator F^{-1} diag(mult) F.

        Only valid for real multipliers that are even in k (functions of
        |Bk| and the like); odd multipliers such as derivative symbols must
        go through the full complex transform.
        """
        u = np.asarray(values, dtype=float).reshape(self.shape)
        m = np.asarray(mult, dtype=float).reshape(self.shape)
        half = m[..., : self.N // 2 + 1]
        out = _fft.irfftn(
            _fft.rfftn(u, workers=fft_workers()) * half,
            s=self.shape,
            workers=fft_workers(),
        )
        return np.ascontiguousarray(out).reshape(-1)

    # -- translations ----------------------------------------------------------

    def shift(self, values: np.ndarray, offset) -> np.ndarray:
        """Periodic lattice shift u'(r_j) = u(r_{j-offset})."""
        off = np.atleast_1d(np.asarray(offset, dtype=int))
        if off.size != self.n:
            raise ValueError("offset must have one component per dimension")
        u = np.asarray(values, dtype=float).reshape(self.shape)
        return np.roll(u, shift=tuple(off % self.N), axis=tuple(range(self.n))).reshape(-1)

    def constant_field(self, c: float = 1.0) -> np.ndarray:
        return np.full(self.M, float(c))

    def __repr__(self):  # noqa: D105
        return f"Grid(n={self.n}, N={self.N}, M={self.M})"
