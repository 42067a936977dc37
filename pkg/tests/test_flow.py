import warnings

import numpy as np
import pytest

from cylflow import Interval, StarShaped, build_geometry
from cylflow.config import random_smooth
from cylflow.flow import (
    FlowError,
    FlowParams,
    FlowState,
    comparison_test,
    compatibility_residual,
    run_flow,
    stable_dt,
    step,
    weak_increase_check,
)
from cylflow.translators import grim_reaper_profile

from _util import angle


@pytest.fixture(scope="module")
def disk12():
    return build_geometry(StarShaped((1.0,), nr=12))


def test_stable_dt_interval_formula(line201):
    assert stable_dt(line201, FlowParams(A=0.0, theta=angle(line201, 1.0))) == pytest.approx(2.5e-5, rel=1e-12)
    g2 = build_geometry(Interval(-1.0, 1.0, 401))
    assert stable_dt(g2, FlowParams(A=0.0, theta=angle(g2, 1.0))) == pytest.approx(2.5e-5 / 4, rel=1e-12)


def test_stable_dt_disk_below_1d_value(disk16):
    p = FlowParams(A=0.0, theta=angle(disk16, 1.0))
    pts = np.column_stack([disk16.x.ravel(), disk16.y.ravel()])
    d = np.hypot(*(pts[:, None] - pts[None]).transpose(2, 0, 1))
    hmin = d[d > 1e-12].min()
    assert stable_dt(disk16, p) <= 0.5 * hmin**2 / 2


def test_stable_dt_scaling():
    g1, g2 = (build_geometry(Interval(0.0, 1.0, n)) for n in (101, 201))
    th = lambda g: angle(g, 1.0)
    assert stable_dt(g1, FlowParams(A=0.0, theta=th(g1))) / stable_dt(g2, FlowParams(A=0.0, theta=th(g2))) == (
        pytest.approx(4.0, rel=1e-12))
    # on a polar grid the ring-one cells are h x h^2, so dt falls like h^4
    dts = []
    for nr in (16, 32):
        g = build_geometry(StarShaped((1.0,), nr=nr))
        dts.append(stable_dt(g, FlowParams(A=0.0, theta=angle(g, 1.0))))
    assert dts[0] / dts[1] == pytest.approx(16.0, rel=0.1)


def test_params_validation(disk16):
    th = angle(disk16, 1.0)
    for bad in ({"cfl": 0.0}, {"cfl": 1.5}, {"scheme": "rk4"}, {"eps_stat": 0.0}, {"dt": -1.0}):
        with pytest.raises(ValueError):
            FlowParams(A=0.0, theta=th, **bad)


@pytest.mark.parametrize("scheme", ["explicit", "semi-implicit"])
def test_flat_translator_step_exact(disk16, scheme):
    p = FlowParams(A=2.0, theta=angle(disk16, np.pi / 2), scheme=scheme)
    dt = 1e-3
    new, rep = step(disk16, FlowState(np.zeros(disk16.shape)), p, dt)
    np.testing.assert_allclose(new.u, 2.0 * dt, rtol=0, atol=1e-15)
    np.testing.assert_allclose(new.ut, 2.0, atol=1e-12)
    assert rep.dt == dt and rep.bc_residual < 1e-14 and new.steps == 1 and new.t == dt


def test_max_principle_step(disk16):
    p = FlowParams(A=0.0, theta=angle(disk16, np.pi / 2))
    rng = np.random.default_rng(0)
    for _ in range(10):
        c = rng.uniform(-0.4, 0.4, 2)
        u = 0.1 * np.exp(-((disk16.x - c[0]) ** 2 + (disk16.y - c[1]) ** 2) / 0.1)
        new, _ = step(disk16, FlowState(u), p)
        assert new.u.max() < u.max()


@pytest.mark.parametrize("scheme", ["explicit", "semi-implicit"])
def test_step_shift_equivariance(peanut16, scheme):
    p = FlowParams(A=0.7, theta=angle(peanut16, 1.1), scheme=scheme)
    u = random_smooth(peanut16, np.random.default_rng(1))
    a, _ = step(peanut16, FlowState(u), p)
    b, _ = step(peanut16, FlowState(u + 5.0), p)
    np.testing.assert_allclose(b.u - 5.0, a.u, rtol=0, atol=1e-12)


def test_nonfinite_update_raises(disk16):
    p = FlowParams(A=0.0, theta=angle(disk16, 1.0), dt=1e6)
    u = random_smooth(disk16, np.random.default_rng(2), amplitude=2.0)
    with pytest.raises((FlowError, Exception)):
        s = FlowState(u)
        for _ in range(50):
            s, _ = step(disk16, s, p)


def test_heat_like_decay_stationary(disk16):
    p = FlowParams(A=0.0, theta=angle(disk16, np.pi / 2), max_time=20.0, record_every=200)
    traj = run_flow(disk16, 0.1 * (disk16.x**2 + disk16.y**2), p)
    assert traj.stop_reason == "stationary"
    assert traj.records[-1].sup_ut < 1e-7
    assert np.ptp(traj.final.u) < 1e-6


def test_grim_reaper_translator_rule(line201):
    p = FlowParams(A=0.0, theta=angle(line201, np.pi / 3), max_time=10.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traj = run_flow(line201, np.zeros(201), p)
    assert traj.stop_reason == "translator"
    mean_ut = np.mean(traj.final.ut)
    assert mean_ut == pytest.approx(np.pi / 6, rel=1e-3)


def test_flat_translator_run(disk16):
    p = FlowParams(A=1.5, theta=angle(disk16, np.pi / 2), max_time=1.0, record_every=10)
    traj = run_flow(disk16, np.zeros(disk16.shape), p)
    assert traj.stop_reason == "translator"
    np.testing.assert_allclose(traj.final.u, 1.5 * traj.final.t, rtol=1e-12)


def test_incompatible_initial_data_warns(line201):
    p = FlowParams(A=0.0, theta=angle(line201, np.pi / 3), max_time=1e-3)
    assert compatibility_residual(line201, np.zeros(201), angle(line201, np.pi / 3)) == pytest.approx(0.5)
    with pytest.warns(RuntimeWarning, match="contact condition"):
        run_flow(line201, np.zeros(201), p)
    ok = grim_reaper_profile(line201.x, np.pi / 6)
    assert compatibility_residual(line201, ok, angle(line201, np.pi / 3)) < 1e-3


def test_shape_mismatch_rejected(disk16):
    with pytest.raises(ValueError, match="shape"):
        run_flow(disk16, np.zeros(5), FlowParams(A=0.0, theta=angle(disk16, 1.0)))


def test_explicit_and_semi_implicit_agree(disk12):
    th = angle(disk12, np.pi / 2)
    u0 = random_smooth(disk12, np.random.default_rng(3))
    T = 0.05
    ref = run_flow(disk12, u0, FlowParams(A=0.5, theta=th, stop_rules=False, max_time=T, record_every=10**6,
                                          dt=T / 2000)).final.u
    errs = []
    for n in (125, 250, 500):
        p = FlowParams(A=0.5, theta=th, scheme="semi-implicit", dt=T / n, max_time=T, stop_rules=False,
                       record_every=10**6)
        errs.append(np.max(np.abs(run_flow(disk12, u0, p).final.u - ref)))
    assert errs[-1] < 1e-3
    assert 1.6 < errs[0] / errs[1] < 2.5 and 1.6 < errs[1] / errs[2] < 2.5


def test_bicgstab_matches_direct(disk12):
    th = angle(disk12, 1.2)
    u0 = random_smooth(disk12, np.random.default_rng(4))
    a, _ = step(disk12, FlowState(u0), FlowParams(A=0.5, theta=th, scheme="semi-implicit"), 1e-3)
    b, _ = step(disk12, FlowState(u0), FlowParams(A=0.5, theta=th, scheme="semi-implicit",
                                                  linear_solver="bicgstab"), 1e-3)
    np.testing.assert_allclose(a.u, b.u, atol=1e-9)


def test_records_and_ut_bound(disk12):
    th = angle(disk12, 1.0)
    pre = FlowParams(A=-0.5, theta=th, max_time=0.02, stop_rules=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        u0 = run_flow(disk12, random_smooth(disk12, np.random.default_rng(5)), pre).final.u
    p = FlowParams(A=-0.5, theta=th, max_time=0.05, stop_rules=False, record_every=20, track_step_energy=True)
    traj = run_flow(disk12, u0, p)
    sup = traj.column("sup_ut")
    assert np.all(sup <= sup[0] * (1 + 1e-6) + 1e-8)
    assert traj.max_step_increase <= 1e-8
    assert len({r.I for r in traj.records}) == 1
    t = traj.times
    assert np.all(np.diff(t) > 0) and t[-1] == pytest.approx(0.05, abs=traj.dt)


def test_comparison_shift_pair(disk12):
    th = angle(disk12, 1.0)
    u0 = random_smooth(disk12, np.random.default_rng(6))
    p = FlowParams(A=0.3, theta=th, record_every=20)
    rep = comparison_test(disk12, u0, u0 + 1.0, p, horizon=0.02)
    assert rep.passed and rep.min_gap == pytest.approx(1.0, abs=1e-12)


@pytest.mark.filterwarnings("ignore:initial data violates")
def test_comparison_random_pairs(disk12):
    th = angle(disk12, 1.3)
    rng = np.random.default_rng(8)
    p = FlowParams(A=0.4, theta=th, record_every=10)
    for k in range(3):
        u0 = random_smooth(disk12, rng)
        v0 = u0 + (0.0 if k == 0 else 0.005) + np.abs(random_smooth(disk12, rng))
        rep = comparison_test(disk12, u0, v0, p, horizon=0.02)
        assert rep.passed, rep


def test_comparison_rejects_unordered(disk12):
    p = FlowParams(A=0.0, theta=angle(disk12, 1.0))
    with pytest.raises(ValueError):
        comparison_test(disk12, np.ones(disk12.shape), np.zeros(disk12.shape), p, 0.01)


def test_weak_increase_on_grim_reaper():
    g = build_geometry(Interval(-1.0, 1.0, 51))
    p = FlowParams(A=0.0, theta=angle(g, np.pi / 3), stop_rules=False, record_every=40)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traj = run_flow(g, np.zeros(51), p, horizon=5.0, keep_fields=True)
    rep = weak_increase_check(traj, delta=1.0, tol=1e-6)
    assert rep.passed and rep.T is not None and rep.pairs > 10
