import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinetic_brw import charfn, laws
from kinetic_brw.branching import simulate_generation
from kinetic_brw.group import IDENTITY, FourierPoint, default_grid, haar_rotation
from kinetic_brw.kernels import DirichletScalarKernel, IndependentUniformKernel, deterministic_kernel
from kinetic_brw.rng import NodeStream
from kinetic_brw.solver import (
    Yn,
    calibrate_ode_allowance,
    embedded_matrix_cf,
    lattice_reference,
    ode_residual,
    q_plus,
    semigroup_check,
    solve_time,
    vec,
    vectorized_Yn_check,
)
from oracles import gaussian_lattice_phi

GRID = default_grid()


def test_q_plus_trivial_cases(rng):
    one = q_plus(charfn.constant_one(), IndependentUniformKernel(1.0), GRID, 100, rng)
    assert all(e.mean == 1 and e.se == 0 for e in one)
    at0 = q_plus(charfn.gaussian(), IndependentUniformKernel(1.0), FourierPoint(0.0, IDENTITY), 100, rng)
    assert at0[0].mean == 1


@given(st.floats(0.2, 2.0), st.floats(0.1, 3.0))
def test_q_plus_stable_dirichlet_exact(alpha, sigma):
    phi = charfn.stable(alpha, sigma)
    est = q_plus(phi, DirichletScalarKernel(alpha), GRID[:5], 50, np.random.default_rng(0))
    for p, e in zip(GRID[:5], est):
        assert abs(e.mean - np.exp(-sigma * p.r**alpha)) < 1e-12


def test_solve_time_t_zero_and_constant_one():
    g = charfn.gaussian(2.0)
    est = solve_time(g, IndependentUniformKernel(1.0), 0.0, GRID, 50, NodeStream(1))
    # only the root is alive at t = 0
    assert all(e.mean == g.at(p) and e.se == 0 for p, e in zip(GRID, est))
    one = solve_time(charfn.constant_one(), IndependentUniformKernel(1.0), 1.0, GRID, 50, NodeStream(1))
    assert all(e.mean == 1 for e in one)


def test_solve_time_stationary_on_dirichlet():
    a = 1.2
    phi = charfn.stable(a, 0.8)
    for t in (0.3, 1.0, 2.0):
        est = solve_time(phi, DirichletScalarKernel(a), t, GRID, 200, NodeStream(2))
        assert max(abs(e.mean - phi.at(p)) for p, e in zip(GRID, est)) < 1e-12


def test_solve_time_common_random_numbers():
    k = IndependentUniformKernel(1.0)
    g = charfn.gaussian()
    a = solve_time(g, k, 0.8, GRID[:3], 500, NodeStream(3))
    b = solve_time(g, k, 0.8, GRID, 500, NodeStream(3))
    assert [e.mean for e in a] == [e.mean for e in b[:3]]


def test_solve_time_threads_do_not_change_results():
    k = IndependentUniformKernel(1.0)
    g = charfn.gaussian()
    a = solve_time(g, k, 1.0, GRID, 3000, NodeStream(3), block=500, threads=1)
    b = solve_time(g, k, 1.0, GRID, 3000, NodeStream(3), block=500, threads=4)
    assert [(e.mean, e.se) for e in a] == [(e.mean, e.se) for e in b]


def test_solve_time_modulus_bound():
    est = solve_time(charfn.stable(0.7), IndependentUniformKernel(0.7), 1.0, GRID, 500, NodeStream(4))
    assert all(abs(e.mean) <= 1 + 1e-15 for e in est)


def test_lattice_reference_matches_independent_ode():
    g = charfn.gaussian(1.0)
    for r in (0.5, 1.0, 2.0):
        assert np.isclose(lattice_reference(g, 1.0, r, [0.7])[0], gaussian_lattice_phi(0.7, r), atol=1e-8)
    assert np.allclose(lattice_reference(g, 1.0, 1.3, [0.0]), np.exp(-0.5 * 1.3**2))


def test_solve_time_matches_lattice_reference():
    g = charfn.gaussian(1.0)
    pts = [FourierPoint(r, IDENTITY) for r in (0.5, 1.0, 2.0)]
    est = solve_time(g, deterministic_kernel(0.5, 0.5), 1.0, pts, 40_000, NodeStream(11), block=10_000)
    for p, e in zip(pts, est):
        assert e.within(gaussian_lattice_phi(1.0, p.r), k=4)


def test_ode_allowance_calibration_is_small_and_frozen(frozen):
    c = calibrate_ode_allowance(charfn.gaussian(1.0), 1.0, sorted({p.r for p in GRID}), 0.5, 0.05)
    assert c == pytest.approx(frozen["ode_c"], rel=1e-6)
    # the rigorous bound |phi'''| <= 26 gives c <= 26 / 6
    assert c < 26 / 6


def test_ode_residual_exact_cases():
    a = 0.8
    phi = charfn.stable(a, 1.0)
    rep = ode_residual(phi, DirichletScalarKernel(a), 0.5, 0.05, GRID, 100, NodeStream(1))
    assert rep.max_abs_gap < 1e-12
    one = ode_residual(charfn.constant_one(), IndependentUniformKernel(1.0), 0.5, 0.05, GRID, 100, NodeStream(1))
    assert one.max_abs_gap == 0.0
    with pytest.raises(ValueError):
        ode_residual(phi, DirichletScalarKernel(a), 0.1, 0.2, GRID, 10, NodeStream(1))


def test_ode_residual_dirichlet_gaussian(frozen):
    pts = [FourierPoint(r, IDENTITY) for r in (0.5, 1.0, 2.0)]
    rep = ode_residual(charfn.gaussian(), DirichletScalarKernel(1.0), 0.5, 0.05, pts, 50_000, NodeStream(2), c_allowance=frozen["ode_c"])
    assert rep.passed


def test_semigroup_trivial_and_statistical():
    g = charfn.gaussian()
    k = IndependentUniformKernel(1.0)
    h0 = semigroup_check(g, k, 0.4, 0.0, GRID, 300, NodeStream(1))
    assert h0.passed
    rep = semigroup_check(g, k, 0.4, 0.4, GRID, 20_000, NodeStream(2))
    assert rep.passed


def test_embedding_single_node_and_r_zero(rng):
    law = laws.gaussian_law()
    X = rng.normal(size=(1, 3))
    p = FourierPoint(1.7, haar_rotation(rng))
    e = embedded_matrix_cf(None, np.ones(1), IDENTITY[None], p, X=X)
    assert abs(e.matrix_form - np.exp(1j * 1.7 * p.o[:, 2] @ X[0])) < 1e-12
    sl = simulate_generation(IndependentUniformKernel(1.0), 4, NodeStream(1))
    z = embedded_matrix_cf(law, sl.L, sl.U, FourierPoint(0.0, IDENTITY), rng)
    assert z.matrix_form == 1 and z.product_form == 1


@given(st.integers(0, 2**31), st.floats(0, 5))
def test_embedding_identity_per_sample(seed, r):
    rng = np.random.default_rng(seed)
    sl = simulate_generation(IndependentUniformKernel(1.0), 6, NodeStream(seed % 97))
    e = embedded_matrix_cf(laws.gaussian_law(), sl.L, sl.U, FourierPoint(r, haar_rotation(rng)), rng)
    assert e.max_gap < 1e-10


def test_vec_is_column_stacking():
    a = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(vec(a), a.T.ravel())
    X = np.array([[[1.0, 2.0, 3.0]]])
    y = Yn(np.array([2.0]), IDENTITY[None], X)
    assert np.array_equal(y[0], vec(np.array([[0, 0, 2.0], [0, 0, 4.0], [0, 0, 6.0]])))


def test_Yn_checks(rng):
    sl = simulate_generation(IndependentUniformKernel(1.0), 4, NodeStream(3))
    pts = [FourierPoint(float(r), o) for r, o in zip(rng.uniform(0, 2, 10), haar_rotation(rng, 10))]
    shared = vectorized_Yn_check(laws.gaussian_law(), sl.L, sl.U, pts, 200, rng, shared=True)
    assert shared.extra["max_sample_gap"] < 1e-10
    ind = vectorized_Yn_check(laws.gaussian_law(), sl.L, sl.U, pts, 50_000, rng)
    assert ind.passed
    zero = vectorized_Yn_check(laws.gaussian_law(), sl.L, sl.U, [FourierPoint(0.0, IDENTITY)], 100, rng)
    assert zero.lhs[0].mean == 1 and zero.rhs[0].mean == 1
