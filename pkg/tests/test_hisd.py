"""High-index saddle dynamics baseline: upward legs, downward protocol, cost accounting."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from npss.hisd import HiSDOptions, hisd_find_index1, hisd_run
from npss.models import TOY_GLM, TOY_GSP, Landscape, ToyLandscape, toy_gradient, toy_hessian
from npss.search import NPSSError


class SeparableQuartic(Landscape):
    """E = sum_i (-a_i/2) u_i^2 + u_i^4/4: independent wells, analytic saddles.

    Coordinates with a_i > 0 are double wells with minima at +-sqrt(a_i) and
    a hilltop at 0; a_i < 0 gives a single stable well at 0.
    """

    def __init__(self, a):
        super().__init__()
        self.a = np.asarray(a, dtype=float)
        self.dim = len(self.a)

    def energy(self, u):
        u = np.asarray(u, dtype=float)
        return float(np.sum(-0.5 * self.a * u**2 + 0.25 * u**4))

    def gradient(self, u):
        u = np.asarray(u, dtype=float)
        return -self.a * u + u**3

    def hessian_apply(self, u, v):
        self.hessian_applies += 1
        u = np.asarray(u, dtype=float)
        return (-self.a + 3.0 * u**2) * np.asarray(v, dtype=float)

    def explicit_force(self, u):
        return -self.gradient(u)

    def solve_semi_implicit(self, rhs, beta):
        return np.asarray(rhs, dtype=float)


def _newton_refine(u0, steps=40):
    u = np.asarray(u0, dtype=float).copy()
    for _ in range(steps):
        u = u - np.linalg.solve(toy_hessian(*u), toy_gradient(*u))
    return u


# -- argument validation ---------------------------------------------------------------


def test_hisd_rejects_nonpositive_k():
    with pytest.raises(ValueError, match="k must be"):
        HiSDOptions(k=0)
    with pytest.raises(ValueError, match="k must be"):
        hisd_run(np.zeros(2), 0, ToyLandscape(), HiSDOptions())


def test_hisd_rejects_k_beyond_dimension():
    with pytest.raises(ValueError, match="exceeds"):
        hisd_run(np.zeros(2), 3, ToyLandscape(), HiSDOptions())


def test_hisd_v_init_must_supply_k_vectors():
    with pytest.raises(ValueError, match="exactly k"):
        hisd_run(TOY_GLM, 1, ToyLandscape(), HiSDOptions(), v_init=[np.eye(2)[0], np.eye(2)[1]])


def test_hisd_rejects_rank_deficient_ascent_set():
    model = SeparableQuartic([1.0, 0.5, -4.0])
    v = np.array([1.0, 0.0, 0.0])
    with pytest.raises(NPSSError, match="lost rank"):
        hisd_run(np.array([0.9, 0.6, 0.0]), 2, model, HiSDOptions(k=2), v_init=[v, v.copy()])


# -- toy landscape ---------------------------------------------------------------------


def test_hisd_k1_matches_two_stage_saddle_on_toy():
    """k = 1 from the flat minimum lands on the same saddle, to 1e-6."""
    model = ToyLandscape()
    o = HiSDOptions(k=1, beta=0.02, zeta=0.02, eps_T=1e-7, record_stride=200)
    res = hisd_find_index1(TOY_GLM, model, o)
    exact = _newton_refine(TOY_GSP)
    assert res.census.index == 1
    assert len(res.legs) == 1 and res.legs[0].k == 1
    assert np.all(np.abs(res.state - exact) < 1e-6)


def test_hisd_nudges_exactly_critical_start():
    """A converged minimum is a fixed point; the search must step off it."""
    model = ToyLandscape()
    glm = _newton_refine(TOY_GLM)
    o = HiSDOptions(k=1, beta=0.05, zeta=0.05, eps_T=1e-7, xi=0.01, record_stride=200)
    res = hisd_find_index1(glm, model, o)
    exact = _newton_refine(TOY_GSP)
    assert res.census.index == 1
    assert np.all(np.abs(res.state - exact) < 1e-6)


def test_hisd_deterministic_across_runs():
    start = np.array([1.0 - 1e-5, np.sqrt(0.5) - 1e-5, 0.0])
    o = HiSDOptions(k=2, beta=0.05, zeta=0.05, xi=0.01, eps_T=1e-9, record_stride=50)
    res_a = hisd_find_index1(start, SeparableQuartic([1.0, 0.5, -4.0]), o)
    res_b = hisd_find_index1(start, SeparableQuartic([1.0, 0.5, -4.0]), o)
    assert res_a.trajectory.rows == res_b.trajectory.rows
    assert res_a.trajectory.events == res_b.trajectory.events
    assert np.array_equal(res_a.state, res_b.state)


# -- downward protocol -----------------------------------------------------------------


def test_hisd_downward_protocol_steps_from_index2_to_index1():
    """k=2 overshoots to the index-2 hilltop; one downward leg reaches the saddle."""
    model = SeparableQuartic([1.0, 0.5, -4.0])
    start = np.array([1.0 - 1e-5, np.sqrt(0.5) - 1e-5, 0.0])  # just inside the minimum
    o = HiSDOptions(k=2, beta=0.05, zeta=0.05, xi=0.01, eps_T=1e-9, record_stride=50)
    res = hisd_find_index1(start, model, o)

    assert [leg.k for leg in res.legs] == [2, 1]
    assert [leg.census.index for leg in res.legs] == [2, 1]
    assert_allclose(np.abs(res.legs[0].state), [0.0, 0.0, 0.0], atol=1e-7)
    assert_allclose(np.abs(res.state), [0.0, np.sqrt(0.5), 0.0], atol=1e-7)
    assert any(label == "downward k=1" for _, label in res.trajectory.events)


def test_hisd_downward_exhaustion_reports_residual_index():
    """k=1 recaptured by an index-2 hilltop cannot descend further."""
    model = SeparableQuartic([1.0, 0.5, -4.0])
    o = HiSDOptions(k=1, beta=0.05, zeta=0.05, xi=0.01, eps_T=1e-9, record_stride=50)
    with pytest.raises(NPSSError, match="exhausted with generalized Morse index 2"):
        hisd_find_index1(np.zeros(3), model, o)


def test_hisd_ascent_fallback_onto_minimum_is_an_error():
    """A leg that converges onto an index-0 point must not report success."""
    model = SeparableQuartic([-1.0, -2.0])  # single stable well at the origin
    # start (and stay, after the xi-nudge) inside the eps_T ball of the minimum
    o = HiSDOptions(k=1, beta=0.05, zeta=0.05, xi=1e-5, eps_T=1e-3, record_stride=50)
    with pytest.raises(NPSSError, match="fell back onto a minimum"):
        hisd_find_index1(np.array([3e-4, 0.0]), model, o)


# -- cost accounting -------------------------------------------------------------------


def test_hisd_apply_count_scales_with_ascent_dimension():
    """Each iteration spends k * v_flow_steps applies maintaining the ascent set."""
    model = SeparableQuartic([1.0, 0.5, -4.0])
    start = np.array([1.0 - 1e-5, np.sqrt(0.5) - 1e-5, 0.0])
    o = HiSDOptions(k=2, beta=0.05, zeta=0.05, xi=0.01, eps_T=1e-9, record_stride=1)
    res = hisd_find_index1(start, model, o)
    for leg in res.legs:
        assert leg.iterations > 0
        per_iter = leg.hessian_applies / leg.iterations
        # flow cost k * v_flow_steps plus one apply for the recorded <v,Hv>
        assert per_iter >= leg.k * o.v_flow_steps + 1
