"""Minimum-energy-path construction and nullspace-preservation diagnostics.

A converged index-1 saddle is pushed off along its unstable direction on
both sides; semi-implicit gradient flow descends to the two adjacent
minima.  The path object keeps the side whose minimum has the higher
energy (the barrier side of interest), ordered from that minimum up to the
saddle, together with per-state energies, the six lowest eigenvalues, and
the angles between those eigenvectors and the nullspace of the path's own
minimum.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .eigen import SolverOptions, smallest_eigenpairs
from .models import Landscape
from .nullspace import detect_nullspace, vector_subspace_angle
from .search import NonConvergenceError, NPSSError, morse_census, verify_index1

__all__ = [
    "MEPath",
    "gradient_descent_minimize",
    "mep_from_saddle",
    "locate_inflection_point",
    "nullspace_preservation_report",
]

N_TRACE = 6  # eigenvalues/angles traced per path state


def gradient_descent_minimize(
    U0: np.ndarray,
    model: Landscape,
    tol: float = 1e-7,
    beta: float = 0.01,
    max_iterations: int = 500000,
    verify: bool = True,
    eps0: float = 1e-10,
    solver: Optional[SolverOptions] = None,
) -> np.ndarray:
    """Semi-implicit gradient flow to a minimum (no reflection term).

    With ``verify`` on, the converged state is census-checked; a nonzero
    count of negative eigenvalues raises no error but emits a warning,
    since descent can legitimately stall near a degenerate ridge.
    """
    u = model.project(np.asarray(U0, dtype=float).copy())
    for _ in range(max_iterations):
        if model.norm(model.gradient(u)) < tol:
            break
        rhs = u + beta * model.explicit_force(u)
        u = model.solve_semi_implicit(rhs, beta)
        if not np.all(np.isfinite(u)):
            raise NPSSError("non-finite state update; reduce beta")
    else:
        raise NonConvergenceError("gradient descent did not converge")
    if verify:
        census = morse_census(u, model, eps0=eps0, opts=solver)
        if census.negatives != 0:
            warnings.warn(
                f"descent converged to generalized Morse index {census.negatives}, not a minimum",
                stacklevel=2,
            )
    return u


@dataclass
class MEPath:
    """States j = 0..n from the higher minimum up to the index-1 saddle.

    ``eigenvalues[j]`` holds the lowest-6 spectrum at state j;
    ``angles[j]`` the angles between those eigenvectors and the nullspace
    of state 0.  ``other_minimum`` is the far endpoint of the barrier.
    """

    states: list
    energies: np.ndarray
    arclengths: np.ndarray
    eigenvalues: np.ndarray  # (n_states, N_TRACE)
    angles: np.ndarray  # (n_states, N_TRACE)
    saddle_index: int
    other_minimum: Optional[np.ndarray] = None
    other_energy: Optional[float] = None
    nullspace_dim: int = 0

    def __len__(self) -> int:
        return len(self.states)

    @property
    def minimum(self) -> np.ndarray:
        return self.states[0]

    @property
    def saddle(self) -> np.ndarray:
        return self.states[self.saddle_index]

    def barrier(self) -> float:
        return float(self.energies[self.saddle_index] - self.energies[0])


def _descend_sampled(
    model: Landscape,
    start: np.ndarray,
    tol: float,
    beta: float,
    max_iterations: int,
    max_keep: int = 4096,
) -> list:
    """Gradient-flow descent recording the trajectory with bounded memory.

    Keeps every ``stride``-th iterate, doubling the stride (and thinning
    the kept list) whenever the buffer fills; the converged endpoint is
    always appended.
    """
    u = model.project(np.asarray(start, dtype=float).copy())
    kept = [u.copy()]
    stride = 1
    count = 0
    for _ in range(max_iterations):
        if model.norm(model.gradient(u)) < tol:
            kept.append(u.copy())
            return kept
        rhs = u + beta * model.explicit_force(u)
        u = model.solve_semi_implicit(rhs, beta)
        if not np.all(np.isfinite(u)):
            raise NPSSError("non-finite state update; reduce beta")
        count += 1
        if count % stride == 0:
            kept.append(u.copy())
            if len(kept) > max_keep:
                kept = kept[::2]
                stride *= 2
    raise NonConvergenceError("descent from the saddle did not converge")


def _resample_by_arclength(model: Landscape, samples: list, stride: float) -> list:
    """Thin a descent record to roughly uniform arc-length spacing."""
    out = [samples[0]]
    acc = 0.0
    for prev, cur in zip(samples, samples[1:]):
        acc += model.norm(cur - prev)
        if acc >= stride:
            out.append(cur)
            acc = 0.0
    if out[-1] is not samples[-1]:
        out.append(samples[-1])
    return out


def _trace_spectrum(
    model: Landscape,
    states: list,
    solver: SolverOptions,
) -> tuple[np.ndarray, list]:
    """Lowest-6 eigenpairs at every state, warm-starting along the path."""
    m = min(N_TRACE, model.dim)
    values = np.zeros((len(states), N_TRACE))
    vectors = []
    warm = None
    for j, u in enumerate(states):
        H = model.hessian_operator(u)
        opts = solver if warm is None else SolverOptions(
            **{**solver.__dict__, "initial_guess": warm}
        )
        pairs = smallest_eigenpairs(H, m, opts)
        vals = [p.value for p in pairs]
        vecs = [p.vector for p in pairs]
        values[j, :m] = vals
        values[j, m:] = np.nan
        vectors.append(vecs)
        warm = np.stack(vecs)
    return values, vectors


def mep_from_saddle(
    gsp: np.ndarray,
    model: Landscape,
    xi: float = 0.01,
    tol: float = 1e-7,
    beta: float = 0.01,
    eps0: float = 1e-10,
    max_iterations: int = 500000,
    stride_fraction: float = 0.01,
    solver: Optional[SolverOptions] = None,
) -> MEPath:
    """Build the minimum-energy path through a verified index-1 saddle.

    Descends from ``gsp +- xi v`` (v the unstable direction) to the two
    adjacent minima, keeps the side whose minimum has the higher energy,
    and orders it from that minimum up to the saddle (the saddle itself is
    the final, exact sample).  Warns on a degenerate barrier (both sides
    reaching the same minimum).
    """
    gsp = np.asarray(gsp, dtype=float)
    solver = solver or SolverOptions(use_preconditioner=True)
    verify_index1(gsp, model, eps0=eps0, eps_T=max(tol, 1e-6), opts=solver)
    H = model.hessian_operator(gsp)
    unstable = smallest_eigenpairs(H, 1, solver)[0].vector
    unstable = model.project(unstable)
    unstable = unstable / model.norm(unstable)

    sides = []
    for sign in (+1.0, -1.0):
        start = model.project(gsp + sign * xi * unstable)
        samples = _descend_sampled(model, start, tol, beta, max_iterations)
        sides.append(samples)

    e_minima = [model.energy(s[-1]) for s in sides]
    gap = model.norm(sides[0][-1] - sides[1][-1])
    scale = max(model.norm(sides[0][-1]), model.norm(sides[1][-1]), 1.0)
    if gap < 1e-6 * scale:
        warnings.warn("degenerate barrier: both descents reached the same minimum", stacklevel=2)
    keep = int(np.argmax(e_minima))  # barrier side = higher minimum
    descent = sides[keep]
    other = sides[1 - keep][-1]

    stride = stride_fraction * model.norm(gsp - descent[-1])
    ordered = _resample_by_arclength(model, descent, max(stride, 1e-300))
    ordered = ordered[::-1]  # minimum first
    ordered.append(gsp.copy())  # exact saddle as the apex sample

    energies = np.array([model.energy(u) for u in ordered])
    arclengths = np.zeros(len(ordered))
    for j in range(1, len(ordered)):
        arclengths[j] = arclengths[j - 1] + model.norm(ordered[j] - ordered[j - 1])

    values, vectors = _trace_spectrum(model, ordered, solver)
    W0 = detect_nullspace(model.hessian_operator(ordered[0]), eps0=eps0, opts=solver)
    m = min(N_TRACE, model.dim)
    angles = np.full((len(ordered), N_TRACE), np.nan)
    for j, vecs in enumerate(vectors):
        for i in range(m):
            angles[j, i] = vector_subspace_angle(vecs[i], W0)

    return MEPath(
        states=ordered,
        energies=energies,
        arclengths=arclengths,
        eigenvalues=values,
        angles=angles,
        saddle_index=len(ordered) - 1,
        other_minimum=other,
        other_energy=float(model.energy(other)),
        nullspace_dim=W0.dim,
    )


def locate_inflection_point(path: MEPath, eps0: float = 1e-10) -> int:
    """Smallest j whose lowest eigenvalue outside the nullband is negative."""
    for j in range(len(path)):
        vals = path.eigenvalues[j]
        outside = vals[np.isfinite(vals) & (np.abs(vals) > eps0)]
        if outside.size and outside.min() < 0:
            return j
    raise NPSSError("no curvature sign change along the path")


@dataclass
class PreservationReport:
    """Per-state spectral/angle trace plus the preservation horizon.

    ``preserved_until`` is the largest j such that theta_1, theta_2 < 1e-2
    for all states up to and including j (or -1 if none qualify).
    """

    path: MEPath
    preserved_until: int = field(init=False)
    angle_threshold: float = 1e-2

    def __post_init__(self):
        horizon = -1
        for j in range(len(self.path)):
            pair = self.path.angles[j, : min(2, self.path.angles.shape[1])]
            pair = pair[np.isfinite(pair)]
            if pair.size and np.all(pair < self.angle_threshold):
                horizon = j
            else:
                break
        self.preserved_until = horizon

    def write_csv(self, dest):
        header = (
            ["j", "arclength", "energy"]
            + [f"lambda{i + 1}" for i in range(N_TRACE)]
            + [f"theta{i + 1}" for i in range(N_TRACE)]
        )
        with open(dest, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for j in range(len(self.path)):
                row = [j, repr(float(self.path.arclengths[j])), repr(float(self.path.energies[j]))]
                row += [repr(float(v)) for v in self.path.eigenvalues[j]]
                row += [repr(float(a)) for a in self.path.angles[j]]
                writer.writerow(row)


def nullspace_preservation_report(path: MEPath) -> PreservationReport:
    """Wrap the traced path in a CSV-writing report object."""
    return PreservationReport(path=path)
