"""Hessian nullspace construction and subspace comparison.

At a periodic critical point the lattice derivatives of the state span an
exact nullspace of the Hessian (one generator per direction the pattern
actually varies in).  This module builds that analytic basis, detects
nullspaces numerically from the smallest eigenpairs, and measures principal
angles between subspaces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.fft as _fft

from .eigen import SolverOptions, SubspaceBasis, SymmetricOperator, smallest_eigenpairs
from .lattice import Grid, fft_workers

__all__ = [
    "NullspaceError",
    "PrincipalAngleReport",
    "translational_generators",
    "detect_nullspace",
    "principal_angles",
    "vector_subspace_angle",
    "intrinsic_periodic_dimension",
]


class NullspaceError(RuntimeError):
    pass


@dataclass(frozen=True)
class PrincipalAngleReport:
    """Principal angles in ascending order plus sin of the largest one."""

    angles: np.ndarray
    sin_theta_norm: float


def _lattice_derivatives(grid: Grid, u: np.ndarray) -> list[np.ndarray]:
    """Fields with spectral coefficients i k_j U_hat(k), one per direction.

    The Nyquist plane is zeroed in each derivative so real input maps to
    real output.
    """
    spec = _fft.fftn(np.asarray(u, dtype=float).reshape(grid.shape), workers=fft_workers())
    modes = grid.integer_modes()
    outs = []
    for j in range(grid.n):
        kj = modes[:, j].astype(float)
        kj[modes[:, j] == -grid.N // 2] = 0.0
        dspec = (1j * kj.reshape(grid.shape)) * spec
        outs.append(np.real(_fft.ifftn(dspec, workers=fft_workers())).reshape(-1))
    return outs


def translational_generators(grid: Grid, u: np.ndarray) -> SubspaceBasis:
    """Orthonormal basis of the lattice-derivative (translation) directions.

    Directions in which the field is constant contribute nothing and are
    dropped; a constant field has no translational mode at all and raises
    ``NullspaceError``.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    derivs = _lattice_derivatives(grid, u)
    scale = max(grid.norm(d) for d in derivs)
    if scale < 1e-12 * max(1.0, grid.norm(u)):
        raise NullspaceError("no translational mode")
    basis = SubspaceBasis.orthonormalized(derivs, weight=grid.weight, drop_tol=1e-8)
    if basis.dim == 0:
        raise NullspaceError("no translational mode")
    return basis


def intrinsic_periodic_dimension(grid: Grid, u: np.ndarray, rel_tol: float = 1e-8) -> int:
    """Rank of the set of wave vectors carrying appreciable spectral weight."""
    spec = grid.forward(u)
    amp = np.abs(spec)
    peak = amp.max()
    if peak == 0.0:
        return 0
    active = grid.integer_modes()[amp > rel_tol * peak].astype(float)
    if active.size == 0:
        return 0
    return int(np.linalg.matrix_rank(active, tol=1e-8))


def detect_nullspace(
    H: SymmetricOperator,
    eps0: float = 1e-10,
    m_probe: int = 4,
    opts: Optional[SolverOptions] = None,
) -> SubspaceBasis:
    """Numerically detected nullspace: eigendirections with |lambda| < eps0.

    Probes the ``m_probe`` smallest eigenpairs; raises if every probed
    eigenvalue sits below eps0, since then the window cannot certify the
    nullspace dimension.  An empty basis is a legitimate result.
    """
    opts = opts or SolverOptions()
    m_probe = min(m_probe, H.dim)
    if m_probe < 1:
        raise ValueError("probe count must be >= 1")
    pairs = smallest_eigenpairs(H, m_probe, opts)
    if all(abs(p.value) < eps0 for p in pairs):
        raise NullspaceError("probe window too small")
    null_vecs = [p.vector for p in pairs if abs(p.value) < eps0]
    if not null_vecs:
        return SubspaceBasis.empty(H.dim, H.weight)
    return SubspaceBasis.orthonormalized(null_vecs, weight=H.weight)


def principal_angles(W: SubspaceBasis, What: SubspaceBasis) -> PrincipalAngleReport:
    """Principal angles between two subspaces.

    Cosines are the singular values of the cross-Gram matrix of the two
    orthonormal bases, clamped to [0, 1]; ``sin_theta_norm`` is the sine of
    the largest angle.
    """
    if W.dim == 0 or What.dim == 0:
        raise ValueError("principal angles of an empty subspace")
    small, big = (W, What) if W.dim <= What.dim else (What, W)
    gram = small.weight * (small.vectors @ big.vectors.T)
    sigma = np.linalg.svd(gram, compute_uv=False)
    cosines = np.clip(sigma, 0.0, 1.0)
    angles = np.sort(np.arccos(cosines))
    return PrincipalAngleReport(angles=angles, sin_theta_norm=float(np.sin(angles[-1])))


def vector_subspace_angle(v: np.ndarray, W: SubspaceBasis) -> float:
    """arccos(||P_W v|| / ||v||) in [0, pi/2]; pi/2 for an empty subspace."""
    v = np.asarray(v, dtype=float)
    nrm = np.sqrt(W.weight) * np.linalg.norm(v)
    if nrm == 0.0:
        raise ValueError("zero vector has no subspace angle")
    if W.dim == 0:
        return float(np.pi / 2.0)
    proj = W.project(v)
    cos = np.sqrt(W.weight) * np.linalg.norm(proj) / nrm
    return float(np.arccos(np.clip(cos, 0.0, 1.0)))
