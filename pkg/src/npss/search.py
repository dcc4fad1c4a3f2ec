"""Two-stage nullspace-preserving saddle search.

Stage I escapes the starting basin in segments: the ascent direction v is
kept orthogonal to the nullspace of a frozen anchor state and follows a
deflated Rayleigh-quotient flow, while the state runs uphill along v and
downhill elsewhere.  When the Rayleigh quotient of v drops below the
refresh threshold the anchor (and its nullspace) is rebuilt at the current
state.  Once negative curvature appears, Stage II tracks the minimal
eigenvector without deflation and converges to an index-1 saddle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .eigen import (
    EigenPair,
    SolverOptions,
    SubspaceBasis,
    SymmetricOperator,
    eigvec_flow_stage1,
    eigvec_flow_stage2,
    smallest_eigenpairs,
)
from .models import Landscape
from .nullspace import NullspaceError, translational_generators, vector_subspace_angle

__all__ = [
    "Stage",
    "NPSSOptions",
    "SearchState",
    "Trajectory",
    "NPSSError",
    "NonConvergenceError",
    "FellBackIntoBasinError",
    "IndexCensusError",
    "IndexCensus",
    "NPSSResult",
    "perturb_initial",
    "stage1_step",
    "refresh_segment_if_needed",
    "stage1_run",
    "stage2_run",
    "verify_index1",
    "morse_census",
    "npss_search",
]


class NPSSError(RuntimeError):
    pass


class NonConvergenceError(NPSSError):
    def __init__(self, message, trajectory=None, state=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.state = state


class FellBackIntoBasinError(NPSSError):
    pass


class IndexCensusError(NPSSError):
    def __init__(self, message, census=None):
        super().__init__(message)
        self.census = census


class Stage(Enum):
    ESCAPE_BASIN = 1
    SEEK_GSP = 2


@dataclass
class NPSSOptions:
    """Controls for both stages.

    beta/zeta are the U- and v-dynamics step scales, xi the initial
    perturbation, eps_lambda the segment-refresh threshold on <v,Hv>,
    eps_T the gradient-norm convergence target, eps0 the zero-eigenvalue
    census tolerance.  Anchor nullspaces are detected with threshold
    max(eps0, eps_lambda): curvature below the refresh threshold cannot
    serve as ascent curvature, and at non-critical anchors the exact zeros
    have drifted by more than eps0.
    """

    beta: float = 0.01
    zeta: float = 0.01
    xi: float = 0.01
    eps_lambda: float = 0.05
    eps_T: float = 1e-7
    eps0: float = 1e-10
    max_iter_stage1: int = 100000
    max_iter_stage2: int = 200000
    v_flow_steps: int = 5
    nullspace_probe: int = 0  # 0 = automatic
    eig_tol: float = 1e-8
    eig_maxiter: int = 2000
    eig_preconditioner: bool = True
    seed: int = 0
    record_stride: int = 1
    # published starting minima are often quoted to a few digits; an
    # almost-critical start inside the basin behaves identically, so the
    # entry check only guards against grossly non-stationary inputs
    start_grad_tol: float = 1e-3

    def __post_init__(self):
        for name in ("beta", "zeta", "eps_lambda", "eps_T", "eps0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.xi < 0:
            raise ValueError("xi must be nonnegative")
        if self.v_flow_steps < 1:
            raise ValueError("v_flow_steps must be >= 1")

    def solver_options(self, model: Landscape, **overrides) -> SolverOptions:
        kwargs = dict(
            tol=self.eig_tol,
            max_iterations=self.eig_maxiter,
            use_preconditioner=self.eig_preconditioner,
            seed=self.seed,
        )
        kwargs.update(overrides)
        return SolverOptions(**kwargs)

    def probe_count(self, model: Landscape, at_least: int = 0) -> int:
        base = self.nullspace_probe
        if base <= 0:
            n = getattr(getattr(model, "grid", None), "n", 1)
            base = n + 2
        return min(model.dim, max(base, at_least))


@dataclass
class SearchState:
    u: np.ndarray
    v: np.ndarray
    anchor_u: np.ndarray
    anchor_nullspace: SubspaceBasis
    stage: Stage = Stage.ESCAPE_BASIN
    iteration: int = 0
    segment: int = 0


@dataclass
class Trajectory:
    """Per-iteration scalars plus segment/stage events.

    Rows are (iter, stage, segment, energy, grad_norm, vHv); events are
    (iter, label) pairs recording refreshes and stage switches.
    """

    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    hessian_applies: int = 0
    iterations: int = 0

    def record(self, it, stage, segment, energy, grad_norm, vhv):
        self.rows.append((it, stage, segment, energy, grad_norm, vhv))

    def event(self, it, label):
        self.events.append((it, label))

    def refresh_count(self) -> int:
        return sum(1 for _, label in self.events if label == "refresh")

    def extend(self, other: "Trajectory"):
        self.rows.extend(other.rows)
        self.events.extend(other.events)
        self.hessian_applies += other.hessian_applies
        self.iterations += other.iterations

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iter", "stage", "segment", "energy", "grad_norm", "vHv"])
            for it, stage, segment, energy, grad_norm, vhv in self.rows:
                writer.writerow(
                    [it, stage, segment, repr(float(energy)), repr(float(grad_norm)), repr(float(vhv))]
                )


@dataclass
class IndexCensus:
    """Counts of probed eigenvalues below -eps0, within the nullband, above."""

    negatives: int
    zeros: int
    positives: int
    eigenvalues: np.ndarray

    @property
    def index(self) -> int:
        return self.negatives


@dataclass
class NPSSResult:
    saddle: np.ndarray
    census: IndexCensus
    trajectory: Trajectory
    state: SearchState
    v_initial: np.ndarray
    stage1_iterations: int
    stage2_iterations: int
    stage1_applies: int = 0
    stage2_applies: int = 0


# ---------------------------------------------------------------------------
# elementary moves


def _normalized(model: Landscape, v: np.ndarray) -> np.ndarray:
    nrm = model.norm(v)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise NPSSError("degenerate ascent direction (zero norm)")
    return v / nrm


def _semi_implicit_update(
    model: Landscape, u: np.ndarray, force: np.ndarray, v: np.ndarray, beta: float
) -> np.ndarray:
    """One step of beta^-1 (U+ - U) = -L U+ + explicit(U) - 2 <v,T> v."""
    coef = model.inner(v, force)
    rhs = u + beta * (model.explicit_force(u) - 2.0 * coef * v)
    unew = model.solve_semi_implicit(rhs, beta)
    if not np.all(np.isfinite(unew)):
        raise NPSSError("non-finite state update; reduce beta")
    return unew


def perturb_initial(
    U0: np.ndarray,
    v0: np.ndarray,
    xi: float,
    nullspace: Optional[SubspaceBasis] = None,
    model: Optional[Landscape] = None,
) -> np.ndarray:
    """U0 + xi v0 with the constraint projection applied.

    Rejects directions lying in the supplied nullspace (angle < 1e-3).
    """
    U0 = np.asarray(U0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if nullspace is not None and nullspace.dim > 0:
        if vector_subspace_angle(v0, nullspace) < 1e-3:
            raise NPSSError("degenerate perturbation direction (inside the nullspace)")
    out = U0 + xi * v0
    if model is not None:
        out = model.project(out)
    return out


def stage1_step(state: SearchState, model: Landscape, o: NPSSOptions) -> SearchState:
    """One Stage-I move: semi-implicit U update, then the deflated v flow."""
    if state.stage is not Stage.ESCAPE_BASIN:
        raise NPSSError("stage1_step requires the escape-basin stage")
    force = model.negative_gradient(state.u)
    unew = _semi_implicit_update(model, state.u, force, state.v, o.beta)
    H = model.hessian_operator(unew)
    v = eigvec_flow_stage1(state.v, H, state.anchor_nullspace, o.zeta, o.v_flow_steps)
    v = model.project(v)
    if state.anchor_nullspace.dim > 0:
        v = state.anchor_nullspace.orthogonalize(v)
    v = _normalized(model, v)
    return replace(state, u=unew, v=v, iteration=state.iteration + 1)


def _classify_anchor(
    model: Landscape,
    u: np.ndarray,
    o: NPSSOptions,
    warm: Optional[np.ndarray] = None,
    min_probe: int = 0,
) -> tuple[SubspaceBasis, EigenPair, list]:
    """Anchor spectrum split into null cluster and ascent candidate.

    Returns (nullspace basis, candidate eigenpair, all probed pairs).  The
    candidate is the most negative eigenpair if anything sits below
    -eps_anchor (the basin boundary has been crossed), otherwise the
    smallest pair above the cluster.  Grows the probe window when every
    probed eigenvalue falls inside the cluster.
    """
    eps_anchor = max(o.eps0, o.eps_lambda)
    probe = o.probe_count(model, at_least=min_probe)
    H = model.hessian_operator(u)
    while True:
        opts = o.solver_options(model, initial_guess=warm)
        pairs = smallest_eigenpairs(H, probe, opts)
        if pairs[0].value < -eps_anchor:
            cluster = [p for p in pairs if abs(p.value) < eps_anchor]
            basis = (
                SubspaceBasis.orthonormalized([p.vector for p in cluster], model.weight)
                if cluster
                else SubspaceBasis.empty(model.dim, model.weight)
            )
            return basis, pairs[0], pairs
        cluster = [p for p in pairs if abs(p.value) < eps_anchor]
        above = [p for p in pairs if p.value >= eps_anchor]
        if above:
            basis = (
                SubspaceBasis.orthonormalized([p.vector for p in cluster], model.weight)
                if cluster
                else SubspaceBasis.empty(model.dim, model.weight)
            )
            return basis, above[0], pairs
        if probe >= min(model.dim, 16):
            raise NullspaceError("probe window too small")
        probe = min(model.dim, max(probe + 2, 2 * probe))


def refresh_segment_if_needed(
    state: SearchState,
    model: Landscape,
    o: NPSSOptions,
    rq: Optional[float] = None,
    trajectory: Optional[Trajectory] = None,
) -> SearchState:
    """Re-anchor the segment when <v,Hv> drops below the refresh threshold.

    The trigger is the plain Rayleigh-quotient test <v,Hv> < eps_lambda of
    either sign, so a step that plunges straight past zero still registers
    the nullspace update.  The new ascent direction is re-solved at the new
    anchor; if the anchor spectrum already contains an eigenvalue below the
    negative threshold, that eigenvector is adopted so the main loop exits
    Stage I.
    """
    if rq is None:
        H = model.hessian_operator(state.u)
        rq = H.inner(state.v, H(state.v))
    if rq >= o.eps_lambda:
        return state
    basis, candidate, _ = _classify_anchor(
        model, state.u, o, warm=state.v, min_probe=state.anchor_nullspace.dim + 2
    )
    if rq < 0.0 and candidate.value >= 0.0:
        # the boundary has been crossed but the negative direction is still
        # too shallow for the probe to resolve outside the anchor cluster;
        # adopting a positive candidate here would deflate the very
        # direction being crossed, so keep it and let Stage I exit on it
        return state
    v = model.project(candidate.vector)
    if basis.dim > 0:
        v = basis.orthogonalize(v)
    v = _normalized(model, v)
    if trajectory is not None:
        trajectory.event(state.iteration, "refresh")
    return replace(
        state,
        anchor_u=state.u.copy(),
        anchor_nullspace=basis,
        v=v,
        segment=state.segment + 1,
    )


# ---------------------------------------------------------------------------
# stage drivers


def _record(
    trajectory: Trajectory,
    model: Landscape,
    it: int,
    stage: int,
    segment: int,
    energy: float,
    grad_norm: float,
    rq: float,
):
    trajectory.record(it, stage, segment, energy, grad_norm, rq)


def stage1_run(
    U0: np.ndarray,
    v0: Optional[np.ndarray],
    model: Landscape,
    o: NPSSOptions,
    observer: Optional[Callable] = None,
    anchor: Optional[SubspaceBasis] = None,
) -> tuple[SearchState, Trajectory]:
    """Escape the basin of the converged minimum U0.

    Runs until <v, H v> < 0 (quadratic-region exit) and returns the state
    flagged for Stage II.  ``v0`` may be None, in which case the smallest
    ascent direction orthogonal to the anchor nullspace is solved for.
    ``anchor`` supplies the nullspace of U0 when it is known up front
    (for pattern states the translation generators span it exactly),
    skipping the anchor eigensolve entirely when v0 is also given.
    """
    U0 = np.asarray(U0, dtype=float)
    g0 = model.norm(model.gradient(U0))
    if g0 >= max(o.eps_T, o.start_grad_tol):
        raise NPSSError(f"stage I requires a converged minimum; ||grad|| = {g0:.3e}")

    applies_before = model.hessian_applies
    if anchor is not None:
        basis = anchor
        if v0 is None:
            pairs = smallest_eigenpairs(
                model.hessian_operator(U0),
                1,
                o.solver_options(model, constraints=basis if basis.dim > 0 else None),
            )
            candidate = pairs[0]
        else:
            candidate = None
    else:
        basis, candidate, _ = _classify_anchor(model, U0, o, warm=v0)
    if v0 is None:
        v = candidate.vector.copy()
    else:
        v = np.asarray(v0, dtype=float).copy()
    v = model.project(v)
    if basis.dim > 0:
        v = basis.orthogonalize(v)
    v = _normalized(model, v)

    u = perturb_initial(U0, v, o.xi, nullspace=basis, model=model)
    state = SearchState(u=u, v=v, anchor_u=U0.copy(), anchor_nullspace=basis)
    trajectory = Trajectory()

    for it in range(o.max_iter_stage1):
        H = model.hessian_operator(state.u)
        rq = H.inner(state.v, H(state.v))
        force = model.negative_gradient(state.u)
        if it % o.record_stride == 0:
            _record(
                trajectory,
                model,
                state.iteration,
                1,
                state.segment,
                model.energy(state.u),
                model.norm(force),
                rq,
            )
        if observer is not None:
            observer(state.iteration, 1, state.u)
        refreshed = False
        if 0.0 <= rq < o.eps_lambda:
            segment_before = state.segment
            state = refresh_segment_if_needed(state, model, o, rq=rq, trajectory=trajectory)
            refreshed = state.segment != segment_before
            H = model.hessian_operator(state.u)
            rq = H.inner(state.v, H(state.v))
        if rq < 0.0:
            if not refreshed:
                # the crossing iteration still moves the anchor (and counts
                # as a nullspace update in the event log), but re-detecting
                # a basis that Stage II never reads would only add an
                # eigensolve, so the stale one stays attached
                state = replace(
                    state, anchor_u=state.u.copy(), segment=state.segment + 1
                )
                trajectory.event(state.iteration, "refresh")
            state = replace(state, stage=Stage.SEEK_GSP)
            trajectory.event(state.iteration, "stage2")
            trajectory.iterations += it
            trajectory.hessian_applies += model.hessian_applies - applies_before
            return state, trajectory
        unew = _semi_implicit_update(model, state.u, force, state.v, o.beta)
        Hnew = model.hessian_operator(unew)
        v = eigvec_flow_stage1(state.v, Hnew, state.anchor_nullspace, o.zeta, o.v_flow_steps)
        v = model.project(v)
        if state.anchor_nullspace.dim > 0:
            v = state.anchor_nullspace.orthogonalize(v)
        v = _normalized(model, v)
        state = replace(state, u=unew, v=v, iteration=state.iteration + 1)

    trajectory.iterations += o.max_iter_stage1
    trajectory.hessian_applies += model.hessian_applies - applies_before
    raise NonConvergenceError(
        "stage I did not leave the quadratic region", trajectory=trajectory, state=state
    )


def stage2_run(
    state: SearchState,
    model: Landscape,
    o: NPSSOptions,
    observer: Optional[Callable] = None,
) -> tuple[np.ndarray, Trajectory]:
    """Minimax dynamics toward the index-1 saddle.

    The ascent direction follows the unconstrained minimal-eigenvector
    flow; convergence is declared at ||grad|| < eps_T.
    """
    if state.stage is not Stage.SEEK_GSP:
        raise NPSSError("stage2_run requires a state that has left the basin")
    applies_before = model.hessian_applies
    trajectory = Trajectory()

    H = model.hessian_operator(state.u)
    rq0 = H.inner(state.v, H(state.v))
    pairs = smallest_eigenpairs(
        H, 1, o.solver_options(model, initial_guess=state.v)
    )
    v = model.project(pairs[0].vector)
    v = _normalized(model, v)
    rq_entry = min(rq0, pairs[0].value)
    if rq_entry >= 0.0:
        raise NPSSError("stage II entered without negative curvature")
    u = state.u
    positive_streak = 0

    for it in range(o.max_iter_stage2):
        force = model.negative_gradient(u)
        gnorm = model.norm(force)
        H = model.hessian_operator(u)
        Hv = H(v)
        rq = H.inner(v, Hv)
        global_it = state.iteration + it
        if it % o.record_stride == 0 or gnorm < o.eps_T:
            _record(trajectory, model, global_it, 2, state.segment, model.energy(u), gnorm, rq)
        if observer is not None:
            observer(global_it, 2, u)
        if gnorm < o.eps_T:
            trajectory.iterations += it
            trajectory.hessian_applies += model.hessian_applies - applies_before
            state.u = u
            state.v = v
            state.iteration = global_it
            return u, trajectory
        if rq > 0.0:
            positive_streak += 1
            if positive_streak > 1000:
                raise FellBackIntoBasinError(
                    "lost negative curvature for >1000 steps; fell back into basin"
                )
        else:
            positive_streak = 0
        u = _semi_implicit_update(model, u, force, v, o.beta)
        Hnew = model.hessian_operator(u)
        v = eigvec_flow_stage2(v, Hnew, o.zeta, o.v_flow_steps)
        v = _normalized(model, model.project(v))

    trajectory.iterations += o.max_iter_stage2
    trajectory.hessian_applies += model.hessian_applies - applies_before
    raise NonConvergenceError("stage II did not converge", trajectory=trajectory, state=state)


# ---------------------------------------------------------------------------
# census


def morse_census(
    U: np.ndarray,
    model: Landscape,
    eps0: float = 1e-10,
    probe: int = 0,
    opts: Optional[SolverOptions] = None,
) -> IndexCensus:
    """Eigenvalue census at a critical point (no index assertion)."""
    n = getattr(getattr(model, "grid", None), "n", 1)
    m = min(model.dim, probe) if probe > 0 else min(model.dim, n + 3)
    H = model.hessian_operator(U)
    solver = opts or SolverOptions(use_preconditioner=True)
    while True:
        pairs = smallest_eigenpairs(H, m, solver)
        values = np.array([p.value for p in pairs])
        if np.any(np.abs(values) > eps0) or m >= min(model.dim, 16):
            break
        m = min(model.dim, m + 3)
    negatives = int(np.sum(values < -eps0))
    zeros = int(np.sum(np.abs(values) <= eps0))
    return IndexCensus(
        negatives=negatives, zeros=zeros, positives=int(values.size - negatives - zeros),
        eigenvalues=values,
    )


def verify_index1(
    U: np.ndarray,
    model: Landscape,
    eps0: float = 1e-10,
    eps_T: float = 1e-7,
    probe: int = 0,
    opts: Optional[SolverOptions] = None,
) -> IndexCensus:
    """Assert the state is an index-1 saddle; returns the census.

    Raises ``IndexCensusError`` naming the observed generalized Morse index
    when the count of eigenvalues below -eps0 differs from one.
    """
    gnorm = model.norm(model.gradient(U))
    if gnorm >= max(eps_T, 1e-6):
        raise NPSSError(f"census requires a critical point; ||grad|| = {gnorm:.3e}")
    census = morse_census(U, model, eps0=eps0, probe=probe, opts=opts)
    if census.negatives != 1:
        raise IndexCensusError(
            f"expected an index-1 saddle, found generalized Morse index {census.negatives}",
            census=census,
        )
    return census


def npss_search(
    U0: np.ndarray,
    model: Landscape,
    o: NPSSOptions,
    v0: Optional[np.ndarray] = None,
    observer: Optional[Callable] = None,
    anchor: Optional[SubspaceBasis] = None,
) -> NPSSResult:
    """Full pipeline: ascend from a converged minimum to a verified saddle."""
    state, traj1 = stage1_run(U0, v0, model, o, observer=observer, anchor=anchor)
    v_initial = state.v.copy()
    saddle, traj2 = stage2_run(state, model, o, observer=observer)
    # the verification nullband cannot be narrower than the achieved
    # stationarity: exact zero modes drift by O(eps_T) at the returned point
    guess = [state.v]
    grid = getattr(model, "grid", None)
    if grid is not None:
        generators = translational_generators(grid, saddle)
        if generators.dim > 0:
            guess.extend(generators.vectors)
    census = verify_index1(
        saddle,
        model,
        eps0=max(o.eps0, o.eps_T),
        eps_T=o.eps_T,
        opts=o.solver_options(model, initial_guess=np.stack(guess)),
    )
    trajectory = Trajectory()
    trajectory.extend(traj1)
    trajectory.extend(traj2)
    return NPSSResult(
        saddle=saddle,
        census=census,
        trajectory=trajectory,
        state=state,
        v_initial=v_initial,
        stage1_iterations=traj1.iterations,
        stage2_iterations=traj2.iterations,
        stage1_applies=traj1.hessian_applies,
        stage2_applies=traj2.hessian_applies,
    )
