import warnings

import numpy as np
import pytest

from cylflow import AngleSeries, Interval, StarShaped, build_geometry, contact_angle_field
from cylflow.diagnostics import compute_I
from cylflow.flow import FlowParams, run_flow
from cylflow.translators import (
    NewtonConvergenceError,
    _System,
    cap_driving_force,
    cap_profile,
    classify_speed,
    extract_speed_from_flow,
    greedy_coloring,
    grim_reaper_profile,
    grim_reaper_speed,
    solve_translator_newton,
    uniqueness_probe,
    verify_flux_identity,
)

from _util import PEANUT, angle

C_GR = np.pi / 6


def line(n):
    return build_geometry(Interval(-1.0, 1.0, n))


def disk(nr, nt=None):
    return build_geometry(StarShaped((1.0,), nr=nr, ntheta=nt))


@pytest.fixture(scope="module")
def cap32():
    g = disk(32, 32)
    th = angle(g, 2 * np.pi / 3)
    return g, th, solve_translator_newton(g, 1.0, th)


@pytest.fixture(scope="module")
def gr201():
    g = line(201)
    th = angle(g, np.pi / 3)
    return g, th, solve_translator_newton(g, 0.0, th)


def test_oracles():
    assert grim_reaper_speed(np.pi / 3) == pytest.approx(C_GR, abs=1e-15)
    assert np.sin(grim_reaper_speed(1.1, 2.0) * 2.0) == pytest.approx(np.cos(1.1))
    assert cap_driving_force(2 * np.pi / 3) == pytest.approx(1.0)
    r = np.linspace(0, 1, 5)
    np.testing.assert_allclose(cap_profile(r, 1.0), 2 * np.sqrt(1 - r**2 / 4) - 2)
    # u_r / v = -A r / 2 on the cap
    ur = np.gradient(cap_profile(np.linspace(0, 1, 100001), 1.0), 1e-5)[50000]
    assert ur / np.sqrt(1 + ur**2) == pytest.approx(-0.25, abs=1e-6)


@pytest.mark.parametrize("geom", [line(51), disk(8), build_geometry(StarShaped(PEANUT, nr=8))])
def test_flat_translator(geom):
    th = angle(geom, np.pi / 2)
    sol = solve_translator_newton(geom, 1.7, th)
    assert sol.c == pytest.approx(1.7, abs=1e-14)
    assert np.max(np.abs(sol.phi)) == 0.0
    assert sol.iterations <= 1 and sol.converged
    rep = verify_flux_identity(sol, geom, 1.7, th)
    assert rep.mismatch <= 1e-12 * (1 + abs(rep.rhs))
    probe = uniqueness_probe(geom, 1.7, th, k=5, reference=sol)
    # rounding floor: eps times the 1/h^2 stencil weights
    assert probe.passed and probe.max_dc < 1e-10 and probe.max_dphi < 1e-10


def test_grim_reaper_speed_and_profile(gr201):
    g, th, sol = gr201
    assert sol.c == pytest.approx(C_GR, rel=1e-5)
    ref = grim_reaper_profile(g.x, C_GR)
    assert np.max(np.abs(sol.phi - (ref - ref[g.anchor]))) < 1e-5
    assert sol.phi[g.anchor] == 0.0
    assert sol.interior_residual <= 1e-9 and sol.bc_residual <= 1e-10


def test_grim_reaper_refinement():
    errs = [abs(solve_translator_newton(line(n), 0.0, angle(line(n), np.pi / 3)).c - C_GR) for n in (51, 101, 201)]
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_cap_stationary(cap32):
    g, th, sol = cap32
    assert abs(sol.c) <= 1e-4
    ref = cap_profile(np.hypot(g.x, g.y), 1.0)
    assert np.max(np.abs(sol.phi - ref)) <= 0.01 * np.max(np.abs(ref))
    assert classify_speed(sol.c, 1.0) == "Stationary"


def test_cap_profile_second_order():
    errs = []
    for nr in (8, 16, 32):
        g = disk(nr, 32)
        sol = solve_translator_newton(g, 1.0, angle(g, 2 * np.pi / 3))
        errs.append(np.max(np.abs(sol.phi - cap_profile(np.hypot(g.x, g.y), 1.0))))
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_flux_identity_reports(gr201, cap32):
    g, th, sol = gr201
    rep = verify_flux_identity(sol, g, 0.0, th)
    assert rep.rhs == pytest.approx(1.0, abs=1e-14) and rep.passed
    g, th, sol = cap32
    rep = verify_flux_identity(sol, g, 1.0, th)
    assert abs(rep.rhs) < 1e-12 and abs(rep.lhs) < 1e-3 and rep.passed


def test_zero_I_speed_is_discretisation_error():
    # with I = 0 the discrete speed is O(h^2), not zero
    cs = []
    for nr in (8, 16, 32):
        g = disk(nr, 32)
        cs.append(abs(solve_translator_newton(g, 1.0, angle(g, 2 * np.pi / 3)).c))
    assert cs[0] / cs[1] >= 3.5 and cs[1] / cs[2] >= 3.5


@pytest.mark.parametrize("A, theta", [(0.5, 1.2), (-0.5, 1.2), (-2.0, 1.0), (0.3, 2.0), (1.5, np.pi / 2)])
def test_sign_of_speed_follows_I(A, theta):
    g = build_geometry(StarShaped((1.0, 0.0, 0.15), nr=12))
    th = angle(g, theta)
    sol = solve_translator_newton(g, A, th)
    I = compute_I(g, A, th)
    assert abs(I) > 1e-3 and np.sign(sol.c) == np.sign(I)
    assert verify_flux_identity(sol, g, A, th).passed


def test_angle_series_translator():
    g = build_geometry(StarShaped((1.0, 0.1), nr=12))
    th = contact_angle_field(g, AngleSeries(1.3, (0.15,), (0.1,)))
    sol = solve_translator_newton(g, 0.2, th)
    rep = verify_flux_identity(sol, g, 0.2, th)
    assert sol.converged and rep.passed and np.sign(sol.c) == np.sign(compute_I(g, 0.2, th))


def test_residual_history_decreases(cap32):
    *_, sol = cap32
    interior = [h[1] for h in sol.history]
    assert all(b < a for a, b in zip(interior, interior[1:]))
    assert interior[-1] <= 1e-9 * 2


def test_reanchoring_invariance(gr201):
    g, th, sol = gr201
    other = solve_translator_newton(g, 0.0, th, anchor=(37,))
    assert other.c == pytest.approx(sol.c, abs=1e-10)
    np.testing.assert_allclose(other.phi - other.phi[g.anchor], sol.phi, atol=1e-9)
    assert other.phi[37] == 0.0


def test_uniqueness_probe_grim_and_cap(gr201, cap32):
    for (g, th, sol), A in ((gr201, 0.0), (cap32, 1.0)):
        rep = uniqueness_probe(g, A, th, k=5, amplitude=1.0, reference=sol)
        assert rep.passed, rep
        assert len(rep.speeds) == 5


def test_newton_failure_keeps_report():
    g = line(101)
    with pytest.raises(NewtonConvergenceError) as exc:
        solve_translator_newton(g, 0.0, angle(g, np.pi / 3), max_iter=1)
    sol = exc.value.solution
    assert not sol.converged and sol.iterations == 1 and np.isfinite(sol.interior_residual)
    quiet = solve_translator_newton(g, 0.0, angle(g, np.pi / 3), max_iter=1, raise_on_failure=False)
    assert not quiet.converged


def test_coloring_is_proper():
    g = build_geometry(StarShaped(PEANUT, nr=6))
    s = _System(g, 1.0, angle(g, 1.0), g.anchor_flat)
    P = s.pattern().tocsc()
    colors = greedy_coloring(P)
    for k in range(colors.max() + 1):
        cols = np.nonzero(colors == k)[0]
        rows = np.concatenate([P.indices[P.indptr[j]: P.indptr[j + 1]] for j in cols])
        assert len(rows) == len(np.unique(rows))


def test_pattern_covers_dense_jacobian():
    g = build_geometry(StarShaped(PEANUT, nr=5, ntheta=12))
    th = angle(g, 1.1)
    s = _System(g, 0.6, th, g.anchor_flat)
    rng = np.random.default_rng(0)
    z = np.concatenate([0.1 * rng.normal(size=g.n_nodes + g.n_ghosts), [0.3]])
    r0 = s.residual(z)
    P = s.pattern().toarray() != 0
    for j in range(z.size):
        zp = z.copy()
        zp[j] += 1e-6
        nz = np.abs(s.residual(zp) - r0) > 1e-12
        assert np.all(P[nz, j]), j


def test_extract_speed():
    t = np.linspace(0, 2, 50)
    est = extract_speed_from_flow(t, 2.5 * t + 1.0)
    assert est.c_est == pytest.approx(2.5, abs=1e-12) and est.profile_drift == 0.0
    p = np.array([0.0, 1.0, 3.0])
    est = extract_speed_from_flow(t, 2.5 * t, profiles=[p, p + 7.0], anchor=(1,))
    assert est.profile_drift == 0.0
    with pytest.raises(ValueError, match="too short"):
        extract_speed_from_flow([0.0, 1.0], [0.0, 1.0])


def test_flow_and_newton_speeds_agree(gr201):
    g, th, sol = gr201
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traj = run_flow(g, np.zeros(201), FlowParams(A=0.0, theta=th, max_time=10.0), keep_fields=True)
    est = extract_speed_from_flow(traj.times, traj.anchor_values, traj.fields[-2:], anchor=g.anchor)
    assert abs(est.c_est - sol.c) <= max(0.01 * abs(sol.c), 5e-4)
    assert est.profile_drift < 1e-4


def test_flat_flow_speed_exact():
    g = disk(8)
    traj = run_flow(g, np.zeros(g.shape), FlowParams(A=2.0, theta=angle(g, np.pi / 2), record_every=5),
                    keep_fields=True)
    est = extract_speed_from_flow(traj.times, traj.anchor_values, traj.fields[-2:], anchor=g.anchor)
    assert est.c_est == pytest.approx(2.0, abs=1e-12) and est.profile_drift == 0.0
