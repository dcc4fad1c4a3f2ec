"""Minimum-energy paths through an index-1 saddle on the toy landscape."""

import csv

import numpy as np
import pytest
from numpy.testing import assert_allclose

from npss.mep import (
    MEPath,
    gradient_descent_minimize,
    locate_inflection_point,
    mep_from_saddle,
    nullspace_preservation_report,
)
from npss.models import TOY_GLM, TOY_GSP, Landscape, ToyLandscape, toy_gradient, toy_hessian
from npss.search import IndexCensusError, NonConvergenceError, NPSSError


def _newton_refine(u0, steps=40):
    u = np.asarray(u0, dtype=float).copy()
    for _ in range(steps):
        u = u - np.linalg.solve(toy_hessian(*u), toy_gradient(*u))
    return u


@pytest.fixture(scope="module")
def toy_glm_exact():
    return _newton_refine(TOY_GLM)


@pytest.fixture(scope="module")
def toy_gsp_exact():
    return _newton_refine(TOY_GSP)


@pytest.fixture(scope="module")
def toy_path(toy_gsp_exact):
    return mep_from_saddle(toy_gsp_exact, ToyLandscape(), xi=0.01, tol=1e-7, beta=0.01)


# -- gradient descent -----------------------------------------------------------------


def test_descent_reaches_flat_basin_minimum(toy_glm_exact):
    model = ToyLandscape()
    u = gradient_descent_minimize(np.array([-0.9, 0.1]), model, tol=1e-7, beta=0.01)
    # tight agreement with the true stationary point...
    assert np.all(np.abs(u - toy_glm_exact) < 1e-4)
    # ...and with its four-digit published coordinates (rounded, so 5e-3)
    assert np.all(np.abs(u - TOY_GLM) < 5e-3)


def test_descent_warns_when_stalling_on_saddle(toy_gsp_exact):
    model = ToyLandscape()
    with pytest.warns(UserWarning, match="generalized Morse index 1"):
        gradient_descent_minimize(toy_gsp_exact, model, tol=1e-6, beta=0.01)


def test_descent_budget_exhaustion():
    with pytest.raises(NonConvergenceError, match="did not converge"):
        gradient_descent_minimize(
            np.array([-0.9, 0.1]), ToyLandscape(), tol=1e-7, beta=0.01, max_iterations=3
        )


# -- path construction ----------------------------------------------------------------


def test_mep_rejects_non_saddle(toy_glm_exact):
    with pytest.raises(IndexCensusError, match="generalized Morse index 0"):
        mep_from_saddle(toy_glm_exact, ToyLandscape())


def test_mep_apex_is_the_exact_saddle(toy_path, toy_gsp_exact):
    assert toy_path.saddle_index == len(toy_path) - 1
    assert np.array_equal(toy_path.states[-1], toy_gsp_exact)
    assert int(np.argmax(toy_path.energies)) == toy_path.saddle_index


def test_mep_energies_increase_monotonically(toy_path):
    assert np.all(np.diff(toy_path.energies) > -1e-12)
    assert np.all(np.diff(toy_path.arclengths) > 0)


def test_mep_keeps_higher_minimum_side(toy_path, toy_glm_exact):
    """The barrier side is the shallower basin; the flat basin is the far end."""
    model = ToyLandscape()
    assert toy_path.energies[0] > toy_path.other_energy
    assert np.all(np.abs(toy_path.other_minimum - toy_glm_exact) < 1e-4)
    assert_allclose(toy_path.other_energy, model.energy(toy_path.other_minimum), rtol=0, atol=0)


def test_mep_barrier_value(toy_path):
    model = ToyLandscape()
    assert_allclose(
        toy_path.barrier(),
        model.energy(toy_path.saddle) - model.energy(toy_path.minimum),
        rtol=0,
        atol=1e-14,
    )
    assert_allclose(toy_path.barrier(), 0.10449608, atol=1e-6)


def test_mep_inflection_strictly_between_endpoints(toy_path):
    j = locate_inflection_point(toy_path)
    assert 0 < j < toy_path.saddle_index
    # the lowest traced eigenvalue changes sign across the inflection sample
    assert toy_path.eigenvalues[j - 1, 0] > 0 > toy_path.eigenvalues[j, 0]


def test_locate_inflection_requires_sign_change():
    path = MEPath(
        states=[np.zeros(2), np.zeros(2)],
        energies=np.array([0.0, 1.0]),
        arclengths=np.array([0.0, 1.0]),
        eigenvalues=np.ones((2, 6)),
        angles=np.full((2, 6), np.nan),
        saddle_index=1,
    )
    with pytest.raises(NPSSError, match="no curvature sign change"):
        locate_inflection_point(path)


# -- preservation report ----------------------------------------------------------------


def test_preservation_report_without_nullspace(toy_path):
    report = nullspace_preservation_report(toy_path)
    assert toy_path.nullspace_dim == 0
    # no nullspace to preserve: every angle is pi/2, so the horizon is empty
    assert report.preserved_until == -1


def test_preservation_report_csv_round_trip(tmp_path, toy_path):
    report = nullspace_preservation_report(toy_path)
    dest = tmp_path / "mep_report.csv"
    report.write_csv(dest)
    with open(dest, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == (
        ["j", "arclength", "energy"]
        + [f"lambda{i}" for i in range(1, 7)]
        + [f"theta{i}" for i in range(1, 7)]
    )
    assert len(rows) == len(toy_path) + 1
    for j, row in enumerate(rows[1:]):
        assert int(row[0]) == j
        assert float(row[1]) == toy_path.arclengths[j]  # repr round-trips exactly
        assert float(row[2]) == toy_path.energies[j]


# -- degenerate barrier -----------------------------------------------------------------


class CraterLandscape(Landscape):
    """Tilted circular rim: one minimum and one saddle on the rim.

    E = (x^2 + y^2 - 1)^2 - delta * x.  Both unstable directions of the rim
    saddle flow around the crater into the same minimum.
    """

    dim = 2

    def __init__(self, delta=0.1):
        super().__init__()
        self.delta = float(delta)

    def energy(self, u):
        x, y = np.asarray(u, dtype=float)
        return float((x**2 + y**2 - 1.0) ** 2 - self.delta * x)

    def gradient(self, u):
        x, y = np.asarray(u, dtype=float)
        r2 = x**2 + y**2 - 1.0
        return np.array([4.0 * x * r2 - self.delta, 4.0 * y * r2])

    def hessian(self, u):
        x, y = np.asarray(u, dtype=float)
        r2 = x**2 + y**2 - 1.0
        return np.array(
            [[4.0 * r2 + 8.0 * x**2, 8.0 * x * y], [8.0 * x * y, 4.0 * r2 + 8.0 * y**2]]
        )

    def hessian_apply(self, u, v):
        self.hessian_applies += 1
        return self.hessian(u) @ np.asarray(v, dtype=float)

    def explicit_force(self, u):
        return -self.gradient(u)

    def solve_semi_implicit(self, rhs, beta):
        return np.asarray(rhs, dtype=float)


def test_mep_warns_on_degenerate_barrier():
    model = CraterLandscape(delta=0.1)
    saddle = np.array([-0.99, 0.0])
    for _ in range(40):
        saddle = saddle - np.linalg.solve(model.hessian(saddle), model.gradient(saddle))
    with pytest.warns(UserWarning, match="degenerate barrier"):
        path = mep_from_saddle(saddle, model, xi=0.01, tol=1e-9, beta=0.02)
    # both rims descend into the single tilted minimum
    assert model.norm(path.minimum - path.other_minimum) < 1e-6
