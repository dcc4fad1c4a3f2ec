"""Named initial-state ansatzes for the phase-field models.

Each pattern is a small superposition of cosine modes at the model's
characteristic wavenumbers, rounded to the nearest integer lattice modes
for the given cell, with a configurable amplitude.  ``prepare_initial_state``
optionally relaxes the ansatz to a minimum and census-checks it.
"""

from __future__ import annotations

import warnings
from typing import Optional

import numpy as np

from .eigen import SolverOptions
from .lattice import Grid
from .mep import gradient_descent_minimize
from .models import SpectralLandauModel, project_mean_zero
from .search import morse_census

__all__ = [
    "SEED_PATTERNS",
    "EXPECTED_NULL_DIMS",
    "seed_field",
    "target_patch_direction",
    "prepare_initial_state",
]

SEED_PATTERNS = ("dis", "lam", "hex", "bcc", "lq", "ddqc")

# nullspace dimensions observed at converged pattern minima (pattern
# translations along each direction it actually varies in)
EXPECTED_NULL_DIMS = {"dis": 0, "lam": 1, "hex": 2, "bcc": 3, "lq": 1, "ddqc": 4}


def _ring_modes(L: float, q: float, angles_deg) -> list:
    """Integer 2D modes approximating wavevectors of length q at the angles."""
    out = []
    for a in np.radians(angles_deg):
        vec = L * q * np.array([np.cos(a), np.sin(a)])
        out.append(np.rint(vec).astype(int))
    return out


def _cell_scale(grid: Grid) -> float:
    """L for a square/cubic cell A = 2*pi*L*I; named ansatzes require one."""
    A = grid.basis.A
    L = A[0, 0] / (2.0 * np.pi)
    if not np.allclose(A, 2.0 * np.pi * L * np.eye(grid.n), rtol=0, atol=1e-9 * abs(A[0, 0])):
        raise ValueError("named seed patterns require a square or cubic cell")
    return float(L)


def _fractional_coords(grid: Grid) -> np.ndarray:
    idx = np.indices(grid.shape).reshape(grid.n, -1).T
    return idx / grid.N


def _pattern_modes(name: str, n: int, L: float, qs: tuple) -> list:
    q1 = qs[0]
    q2 = qs[-1]
    if name == "dis":
        return []
    if name == "lam":
        mode = np.zeros(n, dtype=int)
        mode[0] = int(round(L * q1))
        return [mode]
    if name == "hex":
        if n != 2:
            raise ValueError("hex ansatz is two-dimensional")
        return _ring_modes(L, q1, [0.0, 120.0, 240.0])
    if name == "bcc":
        if n != 3:
            raise ValueError("bcc ansatz is three-dimensional")
        m = L * q1 / np.sqrt(2.0)
        mi = int(round(m))
        return [
            np.array(v, dtype=int)
            for v in (
                (mi, mi, 0),
                (mi, 0, mi),
                (0, mi, mi),
                (mi, -mi, 0),
                (mi, 0, -mi),
                (0, mi, -mi),
            )
        ]
    if name == "lq":
        if len(qs) < 2:
            raise ValueError("lq ansatz needs a two-scale model")
        modes = []
        for q in (q1, q2):
            mode = np.zeros(n, dtype=int)
            mode[0] = int(round(L * q))
            modes.append(mode)
        return modes
    if name == "ddqc":
        if n != 2:
            raise ValueError("ddqc ansatz is two-dimensional")
        if len(qs) < 2:
            raise ValueError("ddqc ansatz needs a two-scale model")
        modes = _ring_modes(L, q1, [0.0, 30.0, 60.0, 90.0, 120.0, 150.0])
        modes += _ring_modes(L, q2, [15.0, 45.0, 75.0, 105.0, 135.0, 165.0])
        return modes
    raise ValueError(f"unknown seed pattern {name!r}")


def seed_field(
    name: str, grid: Grid, model: SpectralLandauModel, amplitude: float = 0.3
) -> np.ndarray:
    """Cosine-superposition ansatz for the named pattern, mean-zero."""
    qs = model.characteristic_wavenumbers()
    modes = _pattern_modes(name, grid.n, _cell_scale(grid), qs)
    u = np.zeros(grid.M)
    if modes:
        coords = _fractional_coords(grid)
        for k in modes:
            u += amplitude * np.cos(2.0 * np.pi * (coords @ np.asarray(k, dtype=float)))
    return project_mean_zero(u)


def target_patch_direction(
    u_from: np.ndarray,
    u_to: np.ndarray,
    grid: Grid,
    radius: float,
    center=None,
    width: Optional[float] = None,
) -> np.ndarray:
    """Deterministic perturbation toward a predicted product state.

    Escape directions solved from the Hessian alone can be uselessly soft
    (lattice phonons); when the product phase is known, blending a localized
    window of it into the reactant seeds the search with a nucleus instead.
    Returns the mean-zero field ``mask * (u_to - u_from)`` where ``mask`` is
    a smooth radial window (tanh edge of width ``width``, default radius/4)
    of the given ``radius`` around ``center`` (default: cell center), with
    periodic minimum-image distances.  The result is not normalized: with
    ``d`` the return value, ``U + d`` plants the windowed target exactly, so
    pass ``v0 = d`` and ``xi = model.norm(d)`` to the search.
    """
    u_from = np.asarray(u_from, dtype=float).reshape(-1)
    u_to = np.asarray(u_to, dtype=float).reshape(-1)
    if u_from.shape != (grid.M,) or u_to.shape != (grid.M,):
        raise ValueError("states must live on the supplied grid")
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    w = width if width is not None else radius / 4.0
    if w <= 0.0:
        raise ValueError("width must be positive")
    A = grid.basis.A
    frac = _fractional_coords(grid)
    center_frac = (
        np.full(grid.n, 0.5)
        if center is None
        else np.linalg.solve(A.T, np.asarray(center, dtype=float))
    )
    delta = frac - center_frac
    delta -= np.rint(delta)  # periodic minimum image in fractional coords
    r = np.linalg.norm(delta @ A, axis=1)
    mask = 0.5 * (1.0 - np.tanh((r - radius) / w))
    return project_mean_zero(mask * (u_to - u_from))


def prepare_initial_state(
    name: str,
    grid: Grid,
    model: SpectralLandauModel,
    amplitude: float = 0.3,
    relax: bool = True,
    relax_tol: float = 1e-7,
    relax_beta: float = 0.5,
    eps0: float = 1e-10,
    solver: Optional[SolverOptions] = None,
    rng: Optional[np.random.Generator] = None,
    perturb_scale: float = 0.0,
) -> np.ndarray:
    """Named ansatz, optionally relaxed to a minimum and census-checked.

    When the relaxed pattern's detected nullspace dimension differs from
    the tabulated expectation, a warning reports the achieved census.
    """
    u = seed_field(name, grid, model, amplitude)
    if perturb_scale > 0.0:
        rng = rng or np.random.default_rng(0)
        u = project_mean_zero(u + perturb_scale * rng.standard_normal(u.shape))
    if not relax:
        return u
    u = gradient_descent_minimize(
        u, model, tol=relax_tol, beta=relax_beta, verify=False
    )
    expected = EXPECTED_NULL_DIMS.get(name)
    if expected is not None:
        opts = solver or SolverOptions(use_preconditioner=True)
        census = morse_census(u, model, eps0=eps0, opts=opts)
        if census.negatives != 0 or census.zeros != expected:
            warnings.warn(
                f"relaxed {name!r} ansatz has census (neg={census.negatives},"
                f" zero={census.zeros}, pos={census.positives});"
                f" expected a minimum with {expected} null modes",
                stacklevel=2,
            )
    return u
