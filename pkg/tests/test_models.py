"""Energy/gradient/Hessian consistency for the LB, LP, and toy landscapes."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from npss.lattice import Grid, square_lattice
from npss.models import (
    LBModel,
    LBParams,
    LPModel,
    LPParams,
    TOY_GLM,
    TOY_GSP,
    ToyLandscape,
    project_mean_zero,
    toy_energy,
    toy_gradient,
    toy_hessian,
)


def make_lp(N=16, L=2.0, n=2, epsilon=0.05, alpha=1.0):
    return LPModel(Grid(square_lattice(L, n), N), LPParams(epsilon=epsilon, alpha=alpha))


def make_lb(N=16, L=2.0, n=2, tau=-0.2, gamma=0.28):
    return LBModel(Grid(square_lattice(L, n), N), LBParams(tau=tau, gamma=gamma))


def random_field(model, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    return model.project(scale * rng.standard_normal(model.dim))


# -- trivial values -----------------------------------------------------------


@pytest.mark.parametrize("factory", [make_lp, make_lb])
def test_zero_field_is_critical(factory):
    model = factory()
    zero = np.zeros(model.dim)
    assert model.energy(zero) == 0.0
    assert_allclose(model.gradient(zero), 0.0, atol=1e-15)
    assert_allclose(model.hessian_apply(zero, np.zeros(model.dim)), 0.0, atol=1e-15)


def test_lp_rejects_non_finite():
    model = make_lp(N=8)
    bad = np.full(model.dim, np.nan)
    with pytest.raises(ValueError, match="non-finite"):
        model.energy(bad)


def test_lp_rejects_equal_wavenumbers():
    with pytest.raises(ValueError, match="q1 and q2"):
        LPParams(epsilon=0.05, alpha=1.0, q1=1.0, q2=1.0)


# -- spectral energy against a quadratic-form oracle ---------------------------------


def test_lp_energy_single_mode_convolution_oracle():
    """Interaction + bulk for a one-mode field, summed mode-by-mode.

    For u = c cos(q x) on a commensurate 1D grid the discrete energy is
    (1/2) d(q) c^2/2 + mean(-eps/2 u^2 - alpha/3 u^3 + 1/4 u^4); the bulk
    part is evaluated by direct quadrature of the sampled polynomial, the
    interaction by the diagonal quadratic form over the two occupied modes.
    """
    model = make_lp(N=32, L=1.0, n=1)
    grid = model.grid
    c = 0.37
    x = grid.coordinates()[:, 0]
    u = c * np.cos(x)  # mode k = +-1, |Bk| = 1
    coeffs = grid.forward(u)
    d = model.interaction_multipliers
    interaction = 0.5 * float(np.sum(d * np.abs(coeffs) ** 2))
    p = model.params
    bulk = float(np.mean(-0.5 * p.epsilon * u**2 - (p.alpha / 3.0) * u**3 + 0.25 * u**4))
    assert model.energy(u) == pytest.approx(interaction + bulk, abs=1e-10)
    # hand value of the diagonal form: d(1) = (q1^2-1)^2 (q2^2-1)^2, two modes at |c/2|^2
    dq = (p.q1**2 - 1.0) ** 2 * (p.q2**2 - 1.0) ** 2
    assert interaction == pytest.approx(0.5 * dq * 2 * (c / 2.0) ** 2, rel=1e-12)


def test_lb_energy_single_mode_value():
    model = make_lb(N=32, L=1.0, n=1, tau=-0.2, gamma=0.28)
    x = model.grid.coordinates()[:, 0]
    c = 0.5
    u = c * np.cos(x)  # |Bk| = 1 kills the interaction term
    p = model.params
    # mean of cos^2 = 1/2, cos^3 = 0, cos^4 = 3/8 on a commensurate grid
    expected = 0.5 * p.tau * c**2 * 0.5 - 0.0 + (c**4 / 24.0) * (3.0 / 8.0)
    assert model.energy(u) == pytest.approx(expected, abs=1e-12)


# -- finite-difference oracles ---------------------------------------------------


@pytest.mark.parametrize("factory,N", [(make_lp, 8), (make_lp, 16), (make_lb, 8), (make_lb, 16)])
def test_gradient_matches_central_differences(factory, N):
    model = factory(N=N)
    u = random_field(model, seed=21)
    g = model.gradient(u)
    gnorm = model.norm(g)
    rng = np.random.default_rng(42)
    h = 1e-5
    for _ in range(20):
        v = model.project(rng.standard_normal(model.dim))
        v /= model.norm(v)
        fd = (model.energy(u + h * v) - model.energy(u - h * v)) / (2.0 * h)
        assert abs(model.inner(g, v) - fd) / gnorm < 1e-6


@pytest.mark.parametrize("factory", [make_lp, make_lb])
def test_hessian_matches_differenced_gradients(factory):
    model = factory(N=16)
    u = random_field(model, seed=33)
    rng = np.random.default_rng(75)
    h = 1e-5
    for _ in range(5):
        v = rng.standard_normal(model.dim)
        v /= model.norm(v)
        fd = (model.gradient(u + h * v) - model.gradient(u - h * v)) / (2.0 * h)
        Hv = model.hessian_apply(u, v) - np.mean(model.hessian_apply(u, v))
        assert model.norm(Hv - fd) / max(model.norm(Hv), 1.0) < 1e-5


@pytest.mark.parametrize("factory", [make_lp, make_lb])
def test_hessian_symmetry_and_linearity(factory):
    model = factory(N=8)
    u = random_field(model, seed=3)
    rng = np.random.default_rng(4)
    v, w = rng.standard_normal((2, model.dim))
    assert model.inner(w, model.hessian_apply(u, v)) == pytest.approx(
        model.inner(v, model.hessian_apply(u, w)), abs=1e-10
    )
    a, b = 0.7, -1.3
    assert_allclose(
        model.hessian_apply(u, a * v + b * w),
        a * model.hessian_apply(u, v) + b * model.hessian_apply(u, w),
        atol=1e-10,
    )


def test_lp_hessian_at_disordered_state_is_diagonal():
    """At U = 0 the Hessian acts per mode as d(Bk) - epsilon."""
    model = make_lp(N=16, L=1.0, n=1)
    grid = model.grid
    k0 = 3
    x = grid.coordinates()[:, 0]
    v = np.cos(k0 * x)
    d_k0 = (model.params.q1**2 - k0**2) ** 2 * (model.params.q2**2 - k0**2) ** 2
    # absolute tolerance scaled to the multiplier: the transform round-trip
    # carries rounding noise proportional to d(k0) ~ 1.8e3
    assert_allclose(
        model.hessian_apply(np.zeros(model.dim), v),
        (d_k0 - model.params.epsilon) * v,
        atol=1e-11 * d_k0,
    )


# -- invariances -------------------------------------------------------------------


@pytest.mark.parametrize("factory", [make_lp, make_lb])
def test_translational_invariance_random_shifts(factory):
    model = factory(N=16)
    u = random_field(model, seed=55)
    e0 = model.energy(u)
    rng = np.random.default_rng(99)
    for _ in range(10):
        s = rng.integers(0, model.grid.N, size=model.grid.n)
        assert abs(model.energy(model.grid.shift(u, s)) - e0) / abs(e0) < 1e-12


def test_project_mean_zero():
    assert_allclose(project_mean_zero(np.full(10, 4.2)), 0.0, atol=1e-15)
    rng = np.random.default_rng(1)
    f = rng.standard_normal(64)
    f -= f.mean()
    assert_allclose(project_mean_zero(f), f, atol=1e-15)
    g = rng.standard_normal(64) + 3.0
    assert_allclose(project_mean_zero(project_mean_zero(g)), project_mean_zero(g), atol=1e-15)


def test_gradient_is_mean_zero():
    model = make_lb(N=16)
    u = random_field(model, seed=6)
    coeffs = model.grid.forward(model.gradient(u))
    assert abs(coeffs[0]) < 1e-13


def test_semi_implicit_solve_inverts_linear_part():
    model = make_lb(N=16)
    rng = np.random.default_rng(8)
    x = model.project(rng.standard_normal(model.dim))
    beta = 0.4
    lin = model.grid.apply_multiplier(x, model.interaction_multipliers) + (
        model.linear_bulk_coefficient() * x
    )
    rhs = x + beta * lin
    assert_allclose(model.solve_semi_implicit(rhs, beta), x, atol=1e-11)


# -- toy landscape -------------------------------------------------------------------


def test_toy_critical_points_are_nearly_stationary():
    assert np.linalg.norm(toy_gradient(*TOY_GLM)) < 1e-3
    assert np.linalg.norm(toy_gradient(*TOY_GSP)) < 1e-3


def test_toy_hessian_matches_finite_differences():
    rng = np.random.default_rng(14)
    h = 1e-6
    for _ in range(10):
        x, y = rng.uniform(-1.5, 1.5, size=2)
        H = toy_hessian(x, y)
        fd = np.column_stack(
            [
                (toy_gradient(x + h, y) - toy_gradient(x - h, y)) / (2 * h),
                (toy_gradient(x, y + h) - toy_gradient(x, y - h)) / (2 * h),
            ]
        )
        assert_allclose(H, fd, atol=1e-6)
        assert H[0, 1] == H[1, 0]


def test_toy_energy_value():
    assert toy_energy(0.0, 1.0) == pytest.approx(1.0 - 1.0, abs=1e-15)  # x^4+y^4-2x^2-1
    model = ToyLandscape()
    assert model.energy([0.0, 1.0]) == toy_energy(0.0, 1.0)
    assert_allclose(model.gradient([0.3, -0.2]), toy_gradient(0.3, -0.2))


def test_toy_landscape_interface():
    model = ToyLandscape()
    v = np.array([1.0, -2.0])
    u = np.array([0.1, 0.9])
    assert_allclose(model.hessian_apply(u, v), toy_hessian(0.1, 0.9) @ v)
    assert_allclose(model.explicit_force(u), -toy_gradient(0.1, 0.9))
    assert_allclose(model.solve_semi_implicit(v, 0.01), v)


# -- flat directions at a converged minimum -------------------------------------------


def test_energy_flat_along_nullspace_at_relaxed_state():
    """|E(U + t w) - E(U)| / t^2 decays superquadratically for null w."""
    from npss.mep import gradient_descent_minimize
    from npss.nullspace import detect_nullspace
    from npss.seeds import seed_field

    model = make_lb(N=32, L=2.0, n=1, tau=-0.2, gamma=0.28)
    u0 = seed_field("lam", model.grid, model)
    u = gradient_descent_minimize(u0, model, tol=1e-12, beta=0.5, verify=False)
    W = detect_nullspace(model.hessian_operator(u), eps0=1e-8, m_probe=3)
    assert W.dim >= 1
    w = W.vectors[0]
    e0 = model.energy(u)
    ratios = []
    for t in (1e-2, 1e-3):
        ratios.append(abs(model.energy(u + t * w) - e0) / t**2)
    assert ratios[1] * 10.0 <= ratios[0]


# -- stiff/soft split carried by the Hessian operator -----------------------------------


def test_grid_hessian_operator_split_reassembles_identity():
    """(I + zeta L)^{-1} (x + zeta L x) = x with L = H - S from the operator's split."""
    model = make_lb(N=32, L=8.0, n=2, tau=-0.2, gamma=0.28)
    rng = np.random.default_rng(7)
    x = rng.standard_normal(model.dim)
    x -= x.mean()
    u = random_field(model, seed=1, scale=0.2)
    H = model.hessian_operator(u)
    assert H.has_stiff_split
    zeta = 0.37
    Lx = H(x) - H.soft_matvec(x)
    assert_allclose(H.stiff_solve(x + zeta * Lx, zeta), x, atol=1e-11)


def test_toy_hessian_operator_has_no_stiff_split():
    H = ToyLandscape().hessian_operator(np.array([0.2, 0.1]))
    assert not H.has_stiff_split
