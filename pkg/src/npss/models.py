"""Energy landscapes: spectral Landau models (LB, LP) and a 2D toy function.

Every landscape exposes the same surface: an intensive energy, its gradient
with respect to the normalized inner product, a matrix-free Hessian product,
and the linear/nonlinear split used by the semi-implicit time steppers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

from .lattice import Grid, fft_workers

__all__ = [
    "LPParams",
    "LBParams",
    "Landscape",
    "LPModel",
    "LBModel",
    "ToyLandscape",
    "project_mean_zero",
    "toy_energy",
    "toy_gradient",
    "toy_hessian",
    "TOY_GLM",
    "TOY_GSP",
]


def project_mean_zero(f: np.ndarray) -> np.ndarray:
    """Remove the field mean so the zero spectral mode vanishes exactly."""
    f = np.asarray(f, dtype=float)
    return f - f.mean()


@dataclass(frozen=True)
class LPParams:
    """Lifshitz-Petrich coefficients: two characteristic length scales."""

    epsilon: float
    alpha: float
    q1: float = 1.0
    q2: float = 2.0 * np.cos(np.pi / 12.0)

    def __post_init__(self):
        if not (self.q1 > 0 and self.q2 > 0):
            raise ValueError("wavenumbers q1, q2 must be positive")
        if self.q1 == self.q2:
            raise ValueError("q1 and q2 must differ")


@dataclass(frozen=True)
class LBParams:
    """Landau-Brazovskii coefficients."""

    tau: float
    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.tau) and np.isfinite(self.gamma)):
            raise ValueError("parameters must be finite")


class Landscape:
    """Shared interface for all energy landscapes.

    Subclasses define ``energy``, ``gradient``, ``hessian_apply`` and the
    semi-implicit split; this base supplies inner products, projections and
    an apply counter used for solver cost comparisons.
    """

    dim: int
    weight: float = 1.0
    mean_constrained: bool = False
    name: str = "landscape"

    def __init__(self):
        self.hessian_applies = 0

    # -- geometry -----------------------------------------------------------

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(self.weight * np.dot(np.ravel(f), np.ravel(g)))

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(f, f), 0.0)))

    def project(self, f: np.ndarray) -> np.ndarray:
        """Projection onto the constraint subspace (identity by default)."""
        return np.asarray(f, dtype=float)

    def constraint_vectors(self) -> list:
        """Unit directions excluded by constraints (for eigensolver deflation)."""
        return []

    # -- energy surface -------------------------------------------------------

    def energy(self, u: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian_apply(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian_operator(self, u: np.ndarray):
        """Matrix-free symmetric operator H(u), with the apply counter wired in."""
        from .eigen import SymmetricOperator

        u = np.asarray(u, dtype=float)
        return SymmetricOperator(
            matvec=lambda v: self.hessian_apply(u, v),
            dim=self.dim,
            weight=self.weight,
        )

    def negative_gradient(self, u: np.ndarray) -> np.ndarray:
        return -self.gradient(u)

    # -- semi-implicit split ----------------------------------------------------

    def explicit_force(self, u: np.ndarray) -> np.ndarray:
        """T(u) + L u, the force with the stiff linear part removed."""
        raise NotImplementedError

    def solve_semi_implicit(self, rhs: np.ndarray, beta: float) -> np.ndarray:
        """Solve (I + beta L) x = rhs for the stiff linear operator L."""
        raise NotImplementedError


class SpectralLandauModel(Landscape):
    """Common machinery for LB/LP: E = (1/2) sum_k d(Bk)|U_hat|^2 + mean(f(u)).

    The bulk polynomial f and the interaction multiplier d are provided by
    subclasses via ``bulk_*`` hooks and ``interaction_multiplier``.  The
    gradient carries the mass constraint (zero mode projected out); the
    Hessian product is the raw operator F^{-1} D F + diag(f''(u)).
    """

    mean_constrained = True

    def __init__(self, grid: Grid):
        super().__init__()
        self.grid = grid
        self.dim = grid.M
        self.weight = grid.weight
        self._d_full = grid.wave_multipliers(self.interaction_multiplier)
        shape = grid.shape
        half = self._d_full.reshape(shape)[..., : grid.N // 2 + 1]
        self._lin_half = half + self.linear_bulk_coefficient()
        self._shape = shape

    # hooks -------------------------------------------------------------------

    def interaction_multiplier(self, bk: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def linear_bulk_coefficient(self) -> float:
        """Coefficient c with bulk gradient f'(u) = c u + nonlinear terms."""
        raise NotImplementedError

    def bulk_potential(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bulk_gradient(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bulk_curvature(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def characteristic_wavenumbers(self) -> tuple:
        raise NotImplementedError

    # landscape surface ----------------------------------------------------------

    @property
    def interaction_multipliers(self) -> np.ndarray:
        """d(Bk) per mode, same index order as spectral fields."""
        return self._d_full

    def project(self, f: np.ndarray) -> np.ndarray:
        return project_mean_zero(f)

    def constraint_vectors(self) -> list:
        return [self.grid.constant_field(1.0)]

    def _check_finite(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.size != self.dim:
            raise ValueError("field length does not match grid")
        if not np.all(np.isfinite(u)):
            raise ValueError("non-finite field values")
        return u

    def energy(self, u: np.ndarray) -> float:
        u = self._check_finite(u)
        interaction = 0.5 * self.grid.inner(u, self.grid.apply_multiplier(u, self._d_full))
        return interaction + float(self.bulk_potential(u).mean())

    def gradient(self, u: np.ndarray) -> np.ndarray:
        u = self._check_finite(u)
        g = self.grid.apply_multiplier(u, self._d_full) + self.bulk_gradient(u)
        return project_mean_zero(g)

    def hessian_apply(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1)
        v = np.asarray(v, dtype=float).reshape(-1)
        if u.size != self.dim or v.size != self.dim:
            raise ValueError("grid mismatch in hessian_apply")
        self.hessian_applies += 1
        return self.grid.apply_multiplier(v, self._d_full) + self.bulk_curvature(u) * v

    def hessian_operator(self, u: np.ndarray):
        from .eigen import SymmetricOperator

        u = np.asarray(u, dtype=float).reshape(-1)
        lam2 = self.bulk_curvature(u)
        d = self._d_full
        grid = self.grid

        def matvec(v):
            self.hessian_applies += 1
            return grid.apply_multiplier(v, d) + lam2 * v

        precond_mult = 1.0 / (1.0 + d)

        def precond(v):
            return grid.apply_multiplier(v, precond_mult)

        # split H = L + S with L the stiff linear operator of the
        # semi-implicit state update and S the bounded pointwise remainder.
        # the stiff solve must not project the mean out: this operator is the
        # raw Hessian, and the flow's fixed points have to match its
        # eigenvectors exactly
        soft = lam2 - self.linear_bulk_coefficient()

        return SymmetricOperator(
            matvec=matvec,
            dim=self.dim,
            weight=self.weight,
            preconditioner=precond,
            stiff_solve=lambda rhs, dt: self._spectral_solve(rhs, dt, zero_mean=False),
            soft_matvec=lambda v: soft * v,
        )

    def inner(self, f, g):
        return self.grid.inner(f, g)

    # semi-implicit split -----------------------------------------------------------

    def explicit_force(self, u: np.ndarray) -> np.ndarray:
        c = self.linear_bulk_coefficient()
        return -(self.bulk_gradient(u) - c * u)

    def _spectral_solve(self, rhs: np.ndarray, beta: float, zero_mean: bool) -> np.ndarray:
        divisor = 1.0 + beta * self._lin_half
        if divisor.min() <= 1e-12:
            raise ValueError("time step too large for the semi-implicit split")
        spec = _fft.rfftn(np.asarray(rhs, dtype=float).reshape(self._shape), workers=fft_workers())
        spec /= divisor
        if zero_mean:
            spec[(0,) * self.grid.n] = 0.0
        out = _fft.irfftn(spec, s=self._shape, workers=fft_workers())
        return np.ascontiguousarray(out).reshape(-1)

    def solve_semi_implicit(self, rhs: np.ndarray, beta: float) -> np.ndarray:
        return self._spectral_solve(rhs, beta, zero_mean=True)


class LPModel(SpectralLandauModel):
    """Lifshitz-Petrich landscape with multiplier (q1^2-|Bk|^2)^2 (q2^2-|Bk|^2)^2."""

    name = "lp"

    def __init__(self, grid: Grid, params: LPParams):
        self.params = params
        super().__init__(grid)

    def interaction_multiplier(self, bk: np.ndarray) -> np.ndarray:
        k2 = np.einsum("ij,ij->i", bk, bk)
        p = self.params
        return (p.q1**2 - k2) ** 2 * (p.q2**2 - k2) ** 2

    def linear_bulk_coefficient(self) -> float:
        return -self.params.epsilon

    def bulk_potential(self, u):
        p = self.params
        return -0.5 * p.epsilon * u**2 - (p.alpha / 3.0) * u**3 + 0.25 * u**4

    def bulk_gradient(self, u):
        p = self.params
        return (-p.epsilon) * u - p.alpha * u**2 + u**3

    def bulk_curvature(self, u):
        p = self.params
        return -p.epsilon - 2.0 * p.alpha * u + 3.0 * u**2

    def characteristic_wavenumbers(self) -> tuple:
        return (self.params.q1, self.params.q2)


class LBModel(SpectralLandauModel):
    """Landau-Brazovskii landscape with multiplier (1-|Bk|^2)^2."""

    name = "lb"

    def __init__(self, grid: Grid, params: LBParams):
        self.params = params
        super().__init__(grid)

    def interaction_multiplier(self, bk: np.ndarray) -> np.ndarray:
        k2 = np.einsum("ij,ij->i", bk, bk)
        return (1.0 - k2) ** 2

    def linear_bulk_coefficient(self) -> float:
        return self.params.tau

    def bulk_potential(self, u):
        p = self.params
        return 0.5 * p.tau * u**2 - (p.gamma / 6.0) * u**3 + u**4 / 24.0

    def bulk_gradient(self, u):
        p = self.params
        return p.tau * u - 0.5 * p.gamma * u**2 + u**3 / 6.0

    def bulk_curvature(self, u):
        p = self.params
        return p.tau - p.gamma * u + 0.5 * u**2

    def characteristic_wavenumbers(self) -> tuple:
        return (1.0,)


# -- 2D illustrative landscape ---------------------------------------------------

TOY_GLM = np.array([-1.0, 0.0249])
TOY_GSP = np.array([-0.2996, 0.6698])


def _toy_gaussian(x: float, y: float) -> float:
    return np.exp(-6.0 * (x**2 + (y - 1.0) ** 2))


def toy_energy(x: float, y: float) -> float:
    """f(x, y) = x^4 + y^4 - 2 x^2 - exp(-6 (x^2 + (y-1)^2))."""
    return float(x**4 + y**4 - 2.0 * x**2 - _toy_gaussian(x, y))


def toy_gradient(x: float, y: float) -> np.ndarray:
    g = _toy_gaussian(x, y)
    return np.array([4.0 * x**3 - 4.0 * x + 12.0 * x * g, 4.0 * y**3 + 12.0 * (y - 1.0) * g])


def toy_hessian(x: float, y: float) -> np.ndarray:
    g = _toy_gaussian(x, y)
    fxx = 12.0 * x**2 - 4.0 + (12.0 - 144.0 * x**2) * g
    fyy = 12.0 * y**2 + (12.0 - 144.0 * (y - 1.0) ** 2) * g
    fxy = -144.0 * x * (y - 1.0) * g
    return np.array([[fxx, fxy], [fxy, fyy]])


class ToyLandscape(Landscape):
    """The flat-basin 2D function, exposed through the common interface.

    States are plain 2-vectors; the inner product is the standard dot
    product and there is no stiff linear part, so the semi-implicit stepper
    reduces to forward Euler.
    """

    dim = 2
    weight = 1.0
    name = "toy"

    def energy(self, u) -> float:
        x, y = np.asarray(u, dtype=float)
        return toy_energy(x, y)

    def gradient(self, u) -> np.ndarray:
        x, y = np.asarray(u, dtype=float)
        return toy_gradient(x, y)

    def hessian(self, u) -> np.ndarray:
        x, y = np.asarray(u, dtype=float)
        return toy_hessian(x, y)

    def hessian_apply(self, u, v) -> np.ndarray:
        self.hessian_applies += 1
        return self.hessian(u) @ np.asarray(v, dtype=float)

    def explicit_force(self, u) -> np.ndarray:
        return -self.gradient(u)

    def solve_semi_implicit(self, rhs, beta: float) -> np.ndarray:
        return np.asarray(rhs, dtype=float)
