import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degwave.diagnostics import dalembert
from degwave.fields import Grid1D
from degwave.picard import (SlabPolicy, SlabState, Termination, apply_phi, auto_slab_length,
                            continue_solution, pde_residual, recover_gradients, solve_slab,
                            update_derivatives)
from degwave.problem import DegenerateState, Flux, ProblemSpec, evaluate_sources, initial_fields

DALEMBERT = ProblemSpec(0.0, "2 + exp(-x**2)", "0")
SMOOTH_A1 = ProblemSpec(1.0, "1 + 0.2*exp(-x**2)", "0.1*exp(-x**2)")
TAIL = ProblemSpec(1.0, "bracket(x)**(-1)", "x*bracket(x)**(-4)", alpha=1, beta=2)


def first_slab(spec, grid, length, m, **kw):
    return solve_slab(spec, initial_fields(spec, grid), grid, 0.0, length / (m - 1), m, **kw)


# ---------------------------------------------------------------- sources and gradients

def test_sources_example():
    # k = 1/(2u) = 1/2: N1 = 0.5(1 - 2) , N2 = 0.5(4 - 2)
    N1, N2, L = evaluate_sources(1.0, 1.0, 2.0, ProblemSpec(1.0, "1", "0"))
    assert (N1, N2, L) == pytest.approx((-0.5, 1.0, 0.0), abs=1e-15)


@given(st.floats(0.1, 10), st.floats(-5, 5), st.floats(0, 3))
def test_sources_vanish_on_diagonal(u, r, a):
    assert evaluate_sources(u, r, r, ProblemSpec(a, "1", "0")) == (0.0, 0.0, 0.0)


def test_flux_source_example():
    spec = ProblemSpec(1.0, "1", "0", flux=Flux.power(1.0, 1.0))
    _, _, L = evaluate_sources(2.0, 1.0, 0.0, spec)
    # F(2) (R - S) / (2 c(2)) = 2 * 1 / 4
    assert L == pytest.approx(0.5, abs=1e-15)


def test_sources_reject_nonpositive_u():
    with pytest.raises(DegenerateState):
        evaluate_sources(0.0, 1.0, 1.0, ProblemSpec(1.0, "1", "0"))


def test_recover_gradients_example():
    spec = ProblemSpec(1.0, "1", "0")
    ut, ux = recover_gradients(np.array([2.0]), np.array([3.0]), np.array([1.0]), spec)
    assert ut[0] == 2.0 and ux[0] == pytest.approx(0.5)
    with pytest.raises(DegenerateState):
        recover_gradients(np.array([0.0]), np.array([1.0]), np.array([1.0]), spec)


# ---------------------------------------------------------------- the map

def test_phi_transports_linear_data():
    # a = 0: R is carried along dx/ds = -1, so R(t, x) = R0(x + t)
    spec = ProblemSpec(0.0, "2 + exp(-x**2)", "0")
    g = Grid1D(-8, 8, 801)
    f = initial_fields(spec, g)
    state = SlabState.constant_extension(g, 0.0, 0.01, 11, f)
    out = apply_phi(state, spec)
    x = g.nodes
    R0 = lambda y: -2 * y * np.exp(-y**2)
    inner = np.abs(x) < 7
    assert np.max(np.abs(out.R[-1] - R0(x + 0.1))[inner]) <= 1e-5
    assert np.max(np.abs(out.S[-1] + R0(x - 0.1))[inner]) <= 1e-5


def test_phi_constant_velocity_data():
    spec = ProblemSpec(1.0, "1", "-0.1")
    g = Grid1D(-5, 5, 101)
    state = SlabState.constant_extension(g, 0.0, 0.05, 5, initial_fields(spec, g))
    out = apply_phi(state, spec)
    assert np.max(np.abs(out.R + 0.1)) <= 1e-15
    assert np.max(np.abs(out.u - (1 - 0.1 * out.times[:, None]))) <= 1e-14


def test_update_derivatives_zero_for_constant_data():
    spec = ProblemSpec(2.0, "1", "0")
    g = Grid1D(-5, 5, 101)
    state = SlabState.constant_extension(g, 0.0, 0.05, 5, initial_fields(spec, g))
    V, W = update_derivatives(state, spec)
    assert np.all(V == 0) and np.all(W == 0)


def test_derivatives_match_finite_differences():
    g = Grid1D(-8, 8, 801)
    state, _ = first_slab(SMOOTH_A1, g, 0.1, 11)
    h = g.h
    fd = (state.R[:, 2:] - state.R[:, :-2]) / (2 * h)
    scale = np.max(np.abs(np.diff(state.R, 3, axis=1))) / h**3
    err = np.max(np.abs(state.V[:, 1:-1] - fd))
    assert err <= max(1e-3, 5 * (h**2 + state.dt**2) * scale)


# ---------------------------------------------------------------- slabs

def test_constant_data_fixed_point():
    g = Grid1D(-5, 5, 101)
    state, stats = first_slab(ProblemSpec(1.0, "1", "0"), g, 0.1, 11)
    assert stats.distances[0] <= 1e-12 and stats.converged
    assert np.all(state.u == 1.0)


@pytest.mark.parametrize("a", [0.0, 1.0])
def test_linear_in_time_solution(a):
    g = Grid1D(-5, 5, 101)
    state, _ = first_slab(ProblemSpec(a, "1", "-0.1"), g, 0.1, 11)
    assert np.max(np.abs(state.u - (1 - 0.1 * state.times[:, None]))) <= 1e-12


def test_slab_matches_dalembert():
    g = Grid1D(-10, 10, 1001)
    state, _ = first_slab(DALEMBERT, g, 0.1, 11)
    exact = dalembert(DALEMBERT.u0, DALEMBERT.u1, g.nodes, state.t1)
    assert np.max(np.abs(state.u[-1] - exact)) <= 5e-4


def test_fixed_point_residual_below_tolerance():
    g = Grid1D(-8, 8, 321)
    tol = 1e-10
    state, stats = first_slab(SMOOTH_A1, g, 0.1, 11, tol=tol)
    again = apply_phi(state, SMOOTH_A1)
    d = sum(np.max(np.abs(getattr(again, k) - getattr(state, k))) for k in "uRS")
    assert stats.converged and d <= 2 * tol


def test_contraction_factor_below_one_and_shrinks():
    g = Grid1D(-8, 8, 321)
    _, long = first_slab(SMOOTH_A1, g, 0.2, 21)
    _, short = first_slab(SMOOTH_A1, g, 0.1, 11)
    assert 0 < short.factor < long.factor < 1


def test_weighted_bounds_over_first_slab():
    g = Grid1D(-15, 15, 601)
    f = initial_fields(TAIL, g)
    length = auto_slab_length(TAIL, f, 0.0)
    state, _ = first_slab(TAIL, g, length, 17)
    w = np.sqrt(1 + g.nodes**2)
    for k in "RS":
        arr = getattr(state, k)
        assert np.max(w**2 * np.abs(arr)) <= 2 * np.max(w**2 * np.abs(arr[0]))
    assert np.min(w * state.u) >= 0.5 * np.min(w * state.u[0])


@given(st.floats(0.0, 0.5), st.floats(0.0, 0.3))
@settings(max_examples=10)
def test_sign_preserved_for_nonnegative_invariants(amp, a_frac):
    # u1 >= |c(u0) u0'| makes R0, S0 >= 0
    spec = ProblemSpec(1.0, f"1 + {a_frac}*exp(-x**2)", f"{amp} + {a_frac}*exp(-x**2/4)")
    g = Grid1D(-8, 8, 161)
    f = initial_fields(spec, g)
    if min(f["R"].values.min(), f["S"].values.min()) < 0:
        return
    state, _ = first_slab(spec, g, 0.1, 11)
    assert state.R.min() >= -1e-8 and state.S.min() >= -1e-8


def test_compatibility_at_initial_level():
    g = Grid1D(-8, 8, 321)
    state, _ = first_slab(SMOOTH_A1, g, 0.1, 11)
    x = g.nodes
    u0 = 1 + 0.2 * np.exp(-x**2)
    ut, ux = recover_gradients(state.u[0], state.R[0], state.S[0], SMOOTH_A1)
    np.testing.assert_allclose(ut, 0.1 * np.exp(-x**2), rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(ux, -0.4 * x * np.exp(-x**2), rtol=1e-12, atol=1e-15)
    assert np.all(state.u[0] == u0)


def test_general_mode_matches_power_mode():
    g = Grid1D(-8, 8, 161)
    general = ProblemSpec(1.0, SMOOTH_A1.u0_expr, SMOOTH_A1.u1_expr,
                          coefficient_mode="general", c_expr="theta**1.0")
    a, _ = first_slab(SMOOTH_A1, g, 0.1, 11)
    b, _ = first_slab(general, g, 0.1, 11)
    for k in "uRSVW":
        assert np.max(np.abs(getattr(a, k) - getattr(b, k))) <= 1e-12


# ---------------------------------------------------------------- continuation

def test_single_slab_when_target_short():
    g = Grid1D(-5, 5, 101)
    sol = continue_solution(ProblemSpec(1.0, "1", "0"), g, 0.05, SlabPolicy(0.1, 11))
    assert len(sol.slabs) == 1 and sol.t_final == pytest.approx(0.05)
    assert sol.termination is Termination.REACHED_TARGET_T


def test_constant_solution_long_run():
    g = Grid1D(-5, 5, 51)
    sol = continue_solution(ProblemSpec(1.0, "1", "0"), g, 10.0, SlabPolicy(1.0, 5))
    assert sol.t_final == pytest.approx(10.0)
    assert np.all(sol.stacked("u") == 1.0)


def test_slab_boundaries_agree():
    g = Grid1D(-8, 8, 161)
    sol = continue_solution(SMOOTH_A1, g, 0.3, SlabPolicy(0.1, 6))
    assert len(sol.slabs) == 3
    for a, b in zip(sol.slabs, sol.slabs[1:]):
        assert a.t1 == pytest.approx(b.t0)
        for k in "uRSVW":
            assert np.array_equal(getattr(a, k)[-1], getattr(b, k)[0])
    assert sol.stacked("u").shape == (sol.times.size, g.n_points)


def test_negative_bump_degenerates():
    spec = ProblemSpec(1.0, "1", "-2*exp(-x**2)")
    g = Grid1D(-10, 10, 201)
    sol = continue_solution(spec, g, 2.0, SlabPolicy("auto", 9))
    assert sol.termination is Termination.BREAKDOWN_DEGENERACY
    assert 0 < sol.t_final < 2.0


def test_invalid_policy():
    with pytest.raises(ValueError):
        SlabPolicy(0.1, 2)
    with pytest.raises(ValueError):
        SlabPolicy(-1.0)


# ---------------------------------------------------------------- residual and convergence

def test_residual_vanishes_for_linear_in_time():
    g = Grid1D(-5, 5, 101)
    sol = continue_solution(ProblemSpec(2.0, "1", "-0.1"), g, 0.2, SlabPolicy(0.1, 11))
    assert pde_residual(sol).max <= 1e-9


def test_dalembert_error_order():
    errs = []
    for n, m in ((201, 6), (401, 11), (801, 21)):
        g = Grid1D(-8, 8, n)
        sol = continue_solution(DALEMBERT, g, 0.2, SlabPolicy(0.1, m))
        exact = dalembert(DALEMBERT.u0, DALEMBERT.u1, g.nodes, sol.t_final)
        errs.append(np.max(np.abs(sol.stacked("u")[-1] - exact)))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 1.8), orders
