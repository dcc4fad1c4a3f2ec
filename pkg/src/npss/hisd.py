"""High-index saddle dynamics baseline.

Carries a k-dimensional ascent space V = span{v_1..v_k}: the state follows
beta^-1 dU/dt = (I - 2 P_V) T(U) while each v_i is maintained by the
Rayleigh-quotient flow deflated against v_1..v_{i-1}.  An upward search
converges to a stationary point of whatever index the dynamics reach; the
downward protocol then repeatedly removes the ascent direction with the
least-negative curvature, perturbs along it, and reruns with k - 1 until
the census reports index 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .eigen import SolverOptions, SubspaceBasis, eigvec_flow_stage1, smallest_eigenpairs
from .models import Landscape
from .search import (
    IndexCensus,
    NonConvergenceError,
    NPSSError,
    Trajectory,
    morse_census,
)

__all__ = ["HiSDOptions", "HiSDLeg", "HiSDResult", "hisd_run", "hisd_find_index1"]


@dataclass
class HiSDOptions:
    """Ascent-space dynamics controls; k is the ascent dimension."""

    k: int = 1
    beta: float = 0.01
    zeta: float = 0.01
    xi: float = 0.01
    eps_T: float = 1e-7
    eps0: float = 1e-10
    max_iterations: int = 200000
    v_flow_steps: int = 5
    eig_tol: float = 1e-8
    eig_maxiter: int = 2000
    eig_preconditioner: bool = True
    seed: int = 0
    record_stride: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("ascent dimension k must be >= 1")
        for name in ("beta", "zeta", "eps_T", "eps0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def solver_options(self, **overrides) -> SolverOptions:
        kwargs = dict(
            tol=self.eig_tol,
            max_iterations=self.eig_maxiter,
            use_preconditioner=self.eig_preconditioner,
            seed=self.seed,
        )
        kwargs.update(overrides)
        return SolverOptions(**kwargs)


@dataclass
class HiSDLeg:
    """One upward/downward run: converged state, census, search metadata."""

    state: np.ndarray
    census: IndexCensus
    k: int
    iterations: int
    hessian_applies: int


@dataclass
class HiSDResult:
    state: np.ndarray
    census: IndexCensus
    trajectory: Trajectory
    legs: list = field(default_factory=list)


def _orthonormal_ascent_set(model: Landscape, vectors: list) -> list:
    basis = SubspaceBasis.orthonormalized(vectors, model.weight, drop_tol=1e-12)
    if basis.dim != len(vectors):
        raise NPSSError("ascent set lost rank during orthonormalization")
    return [basis.vectors[i].copy() for i in range(basis.dim)]


def hisd_run(
    U0: np.ndarray,
    k: int,
    model: Landscape,
    o: HiSDOptions,
    v_init: Optional[list] = None,
    stage_label: int = 1,
) -> tuple[np.ndarray, IndexCensus, Trajectory]:
    """Evolve the k-dimensional ascent dynamics to a stationary point.

    Returns the converged state, its eigenvalue census, and the trajectory.
    ``v_init`` seeds the ascent set (defaults to the k lowest eigenvectors
    at U0).
    """
    if k < 1:
        raise ValueError("ascent dimension k must be >= 1")
    if k > model.dim:
        raise ValueError("ascent dimension exceeds the problem dimension")
    u = model.project(np.asarray(U0, dtype=float).copy())
    applies_before = model.hessian_applies
    trajectory = Trajectory()

    if v_init is None:
        H = model.hessian_operator(u)
        pairs = smallest_eigenpairs(H, k, o.solver_options())
        vs = [model.project(p.vector) for p in pairs]
    else:
        if len(v_init) != k:
            raise ValueError("v_init must supply exactly k vectors")
        vs = [model.project(np.asarray(v, dtype=float)) for v in v_init]
    vs = _orthonormal_ascent_set(model, vs)

    for it in range(o.max_iterations):
        force = model.negative_gradient(u)
        gnorm = model.norm(force)
        done = gnorm < o.eps_T
        if it % o.record_stride == 0 or done:
            H = model.hessian_operator(u)
            rq = H.inner(vs[0], H(vs[0]))
            trajectory.record(it, stage_label, k, model.energy(u), gnorm, rq)
        if done:
            trajectory.iterations += it
            trajectory.hessian_applies += model.hessian_applies - applies_before
            census = morse_census(
                u, model, eps0=o.eps0, probe=max(k + 3, 0), opts=o.solver_options()
            )
            return u, census, trajectory

        # reflect the force across the whole ascent space
        coef = sum(model.inner(v, force) * v for v in vs)
        rhs = u + o.beta * (model.explicit_force(u) - 2.0 * coef)
        u = model.solve_semi_implicit(rhs, o.beta)
        if not np.all(np.isfinite(u)):
            raise NPSSError("non-finite state update; reduce beta")

        H = model.hessian_operator(u)
        new_vs = []
        for i, v in enumerate(vs):
            deflate = (
                SubspaceBasis(np.stack(new_vs), model.weight)
                if new_vs
                else None
            )
            w = eigvec_flow_stage1(v, H, deflate, o.zeta, o.v_flow_steps)
            w = model.project(w)
            new_vs.append(w / model.norm(w))
        vs = _orthonormal_ascent_set(model, new_vs)

    trajectory.iterations += o.max_iterations
    trajectory.hessian_applies += model.hessian_applies - applies_before
    raise NonConvergenceError("ascent dynamics did not converge", trajectory=trajectory)


def _ascent_curvatures(model: Landscape, u: np.ndarray, vs: list) -> list:
    H = model.hessian_operator(u)
    return [H.inner(v, H(v)) for v in vs]


def hisd_find_index1(
    U0: np.ndarray,
    model: Landscape,
    o: HiSDOptions,
    k: Optional[int] = None,
) -> HiSDResult:
    """Upward search followed by the downward protocol until index 1.

    A start that already sits at a critical point is nudged by xi along the
    k-th lowest eigendirection (the positive-curvature edge of the ascent
    set), since the reflected dynamics share the critical point as a fixed
    point.  Each downward leg removes the ascent direction with the
    least-negative curvature at the converged state, perturbs by xi along
    it, and reruns with k - 1.
    """
    k = o.k if k is None else int(k)
    trajectory = Trajectory()
    legs = []
    u = model.project(np.asarray(U0, dtype=float))
    if model.norm(model.gradient(u)) < max(o.eps_T, 1e-6):
        H = model.hessian_operator(u)
        pairs = smallest_eigenpairs(H, k, o.solver_options())
        u = model.project(u + o.xi * pairs[k - 1].vector)
    stage = 1
    while True:
        state, census, leg_traj = hisd_run(u, k, model, o, stage_label=stage)
        trajectory.extend(leg_traj)
        legs.append(
            HiSDLeg(
                state=state,
                census=census,
                k=k,
                iterations=leg_traj.iterations,
                hessian_applies=leg_traj.hessian_applies,
            )
        )
        if census.index <= 1:
            if census.index == 0:
                raise NPSSError("ascent dynamics fell back onto a minimum")
            return HiSDResult(state=state, census=census, trajectory=trajectory, legs=legs)
        if k <= 1:
            raise NPSSError(
                f"downward search exhausted with generalized Morse index {census.index}"
            )
        # drop the least-negative ascent direction and step off along it
        H = model.hessian_operator(state)
        pairs = smallest_eigenpairs(H, k, o.solver_options())
        curvatures = [p.value for p in pairs]
        negatives = [i for i, c in enumerate(curvatures) if c < 0]
        drop = max(negatives, key=lambda i: curvatures[i]) if negatives else k - 1
        removed = pairs[drop].vector
        u = model.project(state + o.xi * removed)
        k -= 1
        stage += 1
        trajectory.event(trajectory.iterations, f"downward k={k}")
