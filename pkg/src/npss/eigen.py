"""Smallest-eigenpair machinery for matrix-free symmetric operators.

Two independent routes are provided: a block iterative solver (LOBPCG with
a dense fallback for small problems) and ``dense_hessian_oracle``, which
assembles the operator column by column for cross-validation.  The
gradient-flow eigenvector dynamics used inside the saddle search live here
as well.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, lobpcg

__all__ = [
    "SymmetricOperator",
    "EigenPair",
    "SubspaceBasis",
    "SolverOptions",
    "EigensolverError",
    "FlowBlowupError",
    "smallest_eigenpairs",
    "rayleigh_quotient",
    "eigvec_flow_stage1",
    "eigvec_flow_stage2",
    "dense_hessian_oracle",
    "eigenvalue_report",
]


class EigensolverError(RuntimeError):
    """Raised when the iterative solver misses its residual tolerance."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class FlowBlowupError(RuntimeError):
    """Raised when an eigenvector flow diverges (step size too large)."""


class SymmetricOperator:
    """Matrix-free symmetric operator with a scalar-weighted inner product.

    ``inner(f, g) = weight * dot(f, g)``; eigenvectors are normalized in
    that inner product.  ``preconditioner`` (optional) approximates the
    inverse of the operator for the block solver.

    Operators built from stiff PDE discretizations may supply a splitting
    H = L + S: ``soft_matvec`` applies the bounded part S and
    ``stiff_solve(rhs, dt)`` solves (I + dt L) x = rhs.  When both are
    present the eigenvector flows treat L implicitly, which keeps the flow
    stable at step sizes set by S alone rather than by the full spectral
    radius of H.
    """

    def __init__(
        self,
        matvec: Callable[[np.ndarray], np.ndarray],
        dim: int,
        weight: float = 1.0,
        preconditioner: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        stiff_solve: Optional[Callable[[np.ndarray, float], np.ndarray]] = None,
        soft_matvec: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        self._matvec = matvec
        self.dim = int(dim)
        self.weight = float(weight)
        self.preconditioner = preconditioner
        self.stiff_solve = stiff_solve
        self.soft_matvec = soft_matvec

    @property
    def has_stiff_split(self) -> bool:
        return self.stiff_solve is not None and self.soft_matvec is not None

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self._matvec(np.asarray(v, dtype=float))

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(self.weight * np.dot(np.ravel(f), np.ravel(g)))

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(f, f), 0.0)))

    @classmethod
    def from_dense(cls, A: np.ndarray, weight: float = 1.0) -> "SymmetricOperator":
        A = np.asarray(A, dtype=float)
        return cls(matvec=lambda v: A @ v, dim=A.shape[0], weight=weight)


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray


class SubspaceBasis:
    """Orthonormal set of vectors under a scalar-weighted inner product."""

    def __init__(self, vectors: np.ndarray, weight: float = 1.0):
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim == 1:
            vectors = vectors[None, :]
        self.vectors = vectors
        self.weight = float(weight)

    @classmethod
    def empty(cls, dim: int, weight: float = 1.0) -> "SubspaceBasis":
        return cls(np.zeros((0, dim)), weight)

    @classmethod
    def orthonormalized(
        cls, vectors: Sequence[np.ndarray], weight: float = 1.0, drop_tol: float = 1e-10
    ) -> "SubspaceBasis":
        """Modified Gram-Schmidt, dropping directions below ``drop_tol``."""
        kept: list[np.ndarray] = []
        vectors = [np.asarray(v, dtype=float).reshape(-1) for v in vectors]
        if not vectors:
            raise ValueError("no vectors to orthonormalize")
        scale = max(np.sqrt(weight) * np.linalg.norm(v) for v in vectors)
        for v in vectors:
            w = v.copy()
            for q in kept:
                w -= weight * np.dot(q, w) * q
            nrm = np.sqrt(weight) * np.linalg.norm(w)
            if nrm > drop_tol * max(scale, 1e-300):
                kept.append(w / nrm)
        dim = vectors[0].size
        if not kept:
            return cls.empty(dim, weight)
        return cls(np.stack(kept), weight)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.dim

    def __iter__(self):
        return iter(self.vectors)

    def project(self, v: np.ndarray) -> np.ndarray:
        """Orthogonal projection of v onto the span."""
        if self.dim == 0:
            return np.zeros_like(np.asarray(v, dtype=float))
        coef = self.weight * (self.vectors @ np.asarray(v, dtype=float))
        return coef @ self.vectors

    def orthogonalize(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) - self.project(v)

    def extended(self, extra: Sequence[np.ndarray]) -> "SubspaceBasis":
        """Basis of span(self, extra)."""
        vecs = list(self.vectors) + [np.asarray(v, dtype=float) for v in extra]
        if not vecs:
            return self
        return SubspaceBasis.orthonormalized(vecs, self.weight)


@dataclass
class SolverOptions:
    """Block-solver controls.

    ``tol`` bounds the scale-free residual ||Hv - lambda v|| / ||v|| by
    tol * max(1, |lambda|).  ``constraints`` keeps all iterates orthogonal
    to the given basis.  ``use_preconditioner`` enables the operator's own
    diagonal preconditioner when it has one.
    """

    block_size: Optional[int] = None
    max_iterations: int = 2000
    tol: float = 1e-8
    constraints: Optional[SubspaceBasis] = None
    use_preconditioner: bool = False
    seed: int = 0
    dense_cutoff: int = 256
    initial_guess: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.block_size is not None and self.block_size < 1:
            raise ValueError("block size must be >= 1")


def _fix_sign(v: np.ndarray) -> np.ndarray:
    """Deterministic orientation: first appreciable component positive."""
    mags = np.abs(v)
    peak = mags.max()
    if peak == 0.0:
        return v
    idx = int(np.argmax(mags > 1e-12 * peak))
    return -v if v[idx] < 0 else v


def _dense_constrained_eigh(H: np.ndarray, constraints: Optional[SubspaceBasis], weight: float):
    """Full spectrum of H restricted to the orthogonal complement of the constraints."""
    dim = H.shape[0]
    if constraints is None or constraints.dim == 0:
        vals, vecs = np.linalg.eigh(H)
        return vals, vecs.T
    C = constraints.vectors
    Q = scipy.linalg.null_space(C)  # dot-orthonormal columns spanning the complement
    vals, vecs = np.linalg.eigh(Q.T @ H @ Q)
    return vals, (Q @ vecs).T


def smallest_eigenpairs(H: SymmetricOperator, m: int, opts: Optional[SolverOptions] = None):
    """The m smallest eigenpairs of a symmetric operator, sorted ascending.

    Small problems (or blocks too large for the block iteration) are solved
    by dense assembly; everything else goes through LOBPCG seeded
    deterministically from ``opts.seed``.  Raises ``EigensolverError`` with
    the best residuals on non-convergence.
    """
    opts = opts or SolverOptions()
    dim = H.dim
    if m < 1:
        raise ValueError("must request at least one eigenpair")
    ncon = opts.constraints.dim if opts.constraints is not None else 0
    if m > dim - ncon:
        raise ValueError("requesting more eigenpairs than the constrained dimension")
    sqrt_w = np.sqrt(H.weight)

    use_dense = dim <= opts.dense_cutoff or m > max(1, dim // 8)
    if use_dense:
        if dim > 4096:
            raise EigensolverError("problem too large for the dense path")
        A = _assemble_dense(H)
        vals, vecs = _dense_constrained_eigh(A, opts.constraints, H.weight)
        pairs = []
        for i in range(m):
            v = vecs[i] / (sqrt_w * np.linalg.norm(vecs[i]))
            pairs.append(EigenPair(float(vals[i]), _fix_sign(v)))
        return pairs

    A_op = LinearOperator((dim, dim), matvec=lambda x: H(np.ravel(x)), dtype=float)
    M_op = None
    if opts.use_preconditioner and H.preconditioner is not None:
        prec = H.preconditioner
        M_op = LinearOperator((dim, dim), matvec=lambda x: prec(np.ravel(x)), dtype=float)
    Y = None
    if opts.constraints is not None and opts.constraints.dim > 0:
        Y = opts.constraints.vectors.T.copy()

    def run_block(block: int):
        rng = np.random.default_rng(opts.seed)
        X = rng.standard_normal((dim, block))
        if opts.initial_guess is not None:
            guess = np.atleast_2d(np.asarray(opts.initial_guess, dtype=float))
            ncols = min(guess.shape[0], block)
            X[:, :ncols] = guess[:ncols].T
        if Y is not None:
            col_sq = np.einsum("ij,ij->j", Y, Y)
            X -= Y @ ((Y.T @ X) / col_sq[:, None])
        # residuals are re-verified below, so the solver's own convergence
        # warnings would only duplicate (or contradict) that check
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vals, vecs = lobpcg(
                A_op,
                X,
                M=M_op,
                Y=Y,
                tol=opts.tol * 0.1,
                maxiter=opts.max_iterations,
                largest=False,
                verbosityLevel=0,
            )
        order = np.argsort(vals)[:m]
        pairs = []
        residuals = []
        for i in order:
            v = vecs[:, i]
            nrm = sqrt_w * np.linalg.norm(v)
            if not np.isfinite(nrm) or nrm == 0.0:
                raise EigensolverError("block solver produced a degenerate vector")
            v = v / nrm
            lam = H.inner(v, H(v))
            res = H.norm(H(v) - lam * v)
            residuals.append(res)
            pairs.append(EigenPair(float(lam), _fix_sign(v)))
        bad = [r for p, r in zip(pairs, residuals) if r > opts.tol * max(1.0, abs(p.value))]
        return pairs, residuals, not bad

    pairs, residuals, converged = run_block(m)
    if not converged:
        if dim <= 4096:
            dense_opts = replace(opts, dense_cutoff=dim + 1)
            return smallest_eigenpairs(H, m, dense_opts)
        if m + 2 <= dim - ncon:
            # an eigenvalue cluster straddling the block boundary stalls the
            # block iteration; two extra columns usually free it
            pairs, residuals, converged = run_block(m + 2)
    if not converged:
        raise EigensolverError(
            f"eigensolver missed tolerance {opts.tol:g}", residuals=residuals
        )
    return pairs


def _assemble_dense(H: SymmetricOperator) -> np.ndarray:
    cols = np.empty((H.dim, H.dim))
    e = np.zeros(H.dim)
    for j in range(H.dim):
        e[j] = 1.0
        cols[:, j] = H(e)
        e[j] = 0.0
    return cols


def rayleigh_quotient(H: SymmetricOperator, v: np.ndarray) -> float:
    """<v, Hv> / <v, v>; scale-invariant in v."""
    v = np.asarray(v, dtype=float)
    denom = H.inner(v, v)
    if denom <= 0.0:
        raise ValueError("Rayleigh quotient of a zero vector")
    return H.inner(v, H(v)) / denom


def _flow(
    v: np.ndarray,
    H: SymmetricOperator,
    basis: Optional[SubspaceBasis],
    zeta: float,
    steps: int,
) -> np.ndarray:
    v = np.asarray(v, dtype=float).copy()
    deflate = basis is not None and basis.dim > 0
    for _ in range(steps):
        Hv = H(v)
        rq = H.inner(v, Hv) / H.inner(v, v)
        if H.has_stiff_split:
            # treat the stiff part implicitly:
            #   (I + zeta L) v+ = v + zeta (-S v + rq v [+ deflation]);
            # the fixed points are unchanged (H v = rq v + deflation).
            drive = -H.soft_matvec(v) + rq * v
            if deflate:
                drive += basis.project(Hv)
            v = H.stiff_solve(v + zeta * drive, zeta)
        else:
            update = -Hv + rq * v
            if deflate:
                update += basis.project(Hv)
            v = v + zeta * update
        if deflate:
            v = basis.orthogonalize(v)
        nrm = H.norm(v)
        if not np.isfinite(nrm) or nrm > 1e6:
            raise FlowBlowupError("eigenvector flow blew up; reduce the step size")
        if nrm == 0.0:
            raise FlowBlowupError("eigenvector flow collapsed onto the constraints")
        v /= nrm
    return v


def eigvec_flow_stage1(
    v: np.ndarray, H: SymmetricOperator, Wk: Optional[SubspaceBasis], zeta: float, steps: int
) -> np.ndarray:
    """Forward-Euler Rayleigh-quotient descent deflated against Wk.

    Iterates zeta^-1 dv = -Hv + <v,Hv> v + sum_i <w_i,Hv> w_i with
    renormalization and re-orthogonalization against Wk every step.
    """
    return _flow(v, H, Wk, zeta, steps)


def eigvec_flow_stage2(v: np.ndarray, H: SymmetricOperator, zeta: float, steps: int) -> np.ndarray:
    """Unconstrained Rayleigh-quotient descent toward the minimal eigenvector."""
    return _flow(v, H, None, zeta, steps)


@dataclass
class DenseSpectrum:
    matrix: np.ndarray
    values: np.ndarray
    vectors: np.ndarray  # rows are eigenvectors, unit in the weighted norm


def dense_hessian_oracle(H: SymmetricOperator, dim: Optional[int] = None) -> DenseSpectrum:
    """Assemble H against unit vectors and take its full spectrum.

    Independent cross-check for the block solver; refuses dimensions above
    4096.
    """
    dim = H.dim if dim is None else int(dim)
    if dim > 4096:
        raise ValueError("dense oracle limited to dimension <= 4096")
    A = _assemble_dense(H)
    vals, vecs = np.linalg.eigh(A)
    rows = vecs.T / np.sqrt(H.weight)
    rows = np.stack([_fix_sign(r) for r in rows])
    return DenseSpectrum(matrix=A, values=vals, vectors=rows)


def eigenvalue_report(values) -> str:
    """Plain-text table, one eigenvalue per row, 3 significant digits."""
    lines = ["eigenvalue"]
    for v in np.asarray(values, dtype=float):
        lines.append(f"{v:.2e}")
    return "\n".join(lines) + "\n"
