import numpy as np
import pytest

from cylflow import Interval, StarShaped, build_geometry
from cylflow.geometry import (
    GeometryError,
    boundary_curvature,
    boundary_quadrature,
    distance_field,
    polar_curvature,
    quadrature,
    write_structured_grid,
)

from _util import PEANUT


def kappa_oracle(coeffs, phi):
    # closed-form polar curvature of rho = sum c_k cos(k phi), written out independently
    k = np.arange(len(coeffs))
    c = np.asarray(coeffs)
    r = np.sum(c[:, None] * np.cos(np.outer(k, phi)), axis=0)
    r1 = np.sum((-k * c)[:, None] * np.sin(np.outer(k, phi)), axis=0)
    r2 = np.sum((-k * k * c)[:, None] * np.cos(np.outer(k, phi)), axis=0)
    return (r * r + 2 * r1 * r1 - r * r2) / (r * r + r1 * r1) ** 1.5


def test_interval_nodes_and_normals():
    g = build_geometry(Interval(-1.0, 1.0, 5))
    np.testing.assert_allclose(g.x, [-1, -0.5, 0, 0.5, 1])
    assert g.gamma[0, 0] == 1.0 and g.gamma[1, 0] == -1.0


def test_interval_rejects_bad_bounds():
    with pytest.raises(GeometryError):
        Interval(1.0, -1.0, 5)


def test_star_rejects_nonpositive_radius():
    with pytest.raises(GeometryError, match=r"not star-shaped: rho\("):
        StarShaped((0.5, 0.0, 0.6), nr=8)


@pytest.mark.parametrize("nr", [4, 9, 16])
def test_disk_curvature_is_one(nr):
    g = build_geometry(StarShaped((1.0,), nr=nr))
    np.testing.assert_allclose(boundary_curvature(g), 1.0, atol=1e-10)


def test_circle_curvature_scales_with_radius():
    g = build_geometry(StarShaped((2.5,), nr=8))
    np.testing.assert_allclose(g.kappa, 0.4, atol=1e-12)


def test_peanut_curvature_values(peanut16):
    k = boundary_curvature(peanut16)
    phi = peanut16.boundary_param
    k0 = k[np.argmin(np.abs(phi))]
    k90 = k[np.argmin(np.abs(phi - np.pi / 2))]
    assert k0 == pytest.approx(1.5306122448979593, abs=1e-10)  # 1.5/0.98, derived from the formula
    assert k90 == pytest.approx(-2.7777777777777777, abs=1e-10)
    np.testing.assert_allclose(k, kappa_oracle(PEANUT, phi), atol=1e-12)


def test_convexity_certificates():
    phi = np.linspace(0, 2 * np.pi, 20001)
    # 1 + 0.2 cos 2phi is only weakly convex: rho^2 = rho rho'' at phi = pi/2, so kappa touches 0
    ell = build_geometry(StarShaped((1.0, 0.0, 0.2), nr=16))
    assert kappa_oracle((1.0, 0.0, 0.2), phi).min() == pytest.approx(0.0, abs=1e-12)
    assert ell.kappa.min() >= -1e-12
    strict = build_geometry(StarShaped((1.0, 0.0, 0.1), nr=16))
    assert kappa_oracle((1.0, 0.0, 0.1), phi).min() > 0.5 and strict.kappa.min() > 0.5
    pea = build_geometry(StarShaped(PEANUT, nr=16))
    assert pea.kappa.min() < 0


def test_polar_curvature_matches_osculating_circle():
    errs = []
    for nr in (16, 32):
        g = build_geometry(StarShaped((1.0, 0.0, 0.2), nr=nr))
        p = g.bpos
        a, b, c = np.roll(p, 1, 0), p, np.roll(p, -1, 0)
        ab, bc, ca = (np.linalg.norm(b - a, axis=1), np.linalg.norm(c - b, axis=1), np.linalg.norm(a - c, axis=1))
        cross = (b - a)[:, 0] * (c - a)[:, 1] - (b - a)[:, 1] * (c - a)[:, 0]
        kosc = 2 * cross / (ab * bc * ca)
        errs.append(np.max(np.abs(kosc - g.kappa)))
    assert errs[1] < errs[0] / 3.5


def test_normals_unit_and_orthogonal(peanut16):
    np.testing.assert_allclose(np.linalg.norm(peanut16.gamma, axis=1), 1.0, atol=1e-12)
    assert np.max(np.abs(np.sum(peanut16.gamma * peanut16.tangent, axis=1))) < 1e-10


def test_normals_point_inward(peanut16):
    # a small step along gamma lands strictly inside rho(phi)
    q = peanut16.bpos + 1e-3 * peanut16.gamma
    r, phi = np.hypot(q[:, 0], q[:, 1]), np.arctan2(q[:, 1], q[:, 0])
    assert np.all(r < peanut16.spec.rho(phi))


def test_polar_curvature_function():
    assert polar_curvature(2.0, 0.0, 0.0) == pytest.approx(0.5)


def test_distance_trivial_cases(disk16, line201):
    # polyline chord error at 4096 samples is 1 - cos(pi/4096) ~ 3e-7
    assert disk16.distance[0, 0] == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(distance_field(line201), 1 - np.abs(line201.x), atol=1e-14)
    assert np.all(disk16.distance[disk16.boundary_index] == 0)
    assert np.all(disk16.distance[:-1] > 0)


def test_peanut_distance_brute_force(peanut16):
    phi = np.linspace(0, 2 * np.pi, 100000, endpoint=False)
    r = peanut16.spec.rho(phi)
    bx, by = r * np.cos(phi), r * np.sin(phi)
    rng = np.random.default_rng(1)
    for _ in range(25):
        i, j = rng.integers(1, peanut16.nr), rng.integers(peanut16.ntheta)
        x, y = peanut16.x[i, j], peanut16.y[i, j]
        brute = np.min(np.hypot(bx - x, by - y))
        assert peanut16.distance[i, j] == pytest.approx(brute, abs=1e-3)


def test_distance_gradient_bounded(peanut16):
    from cylflow.diagnostics import distance_derivatives

    grad, _ = distance_derivatives(peanut16)
    assert np.max(np.linalg.norm(grad, axis=-1)) <= 1 + 1e-6


def test_area_and_perimeter_second_order():
    errs = []
    for nr in (8, 16, 32):
        g = build_geometry(StarShaped((1.0,), nr=nr))
        assert quadrature(g, np.ones(g.shape)) == pytest.approx(np.pi, rel=1e-2)
        assert boundary_quadrature(g, np.ones(g.kappa.shape)) == pytest.approx(2 * np.pi, rel=1e-2)
        errs.append(abs(quadrature(g, g.x**2 + g.y**2) - np.pi / 2))
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_smooth_quadrature_refinement():
    # exp(x) cos(y) is harmonic, so its disk integral is pi by the mean-value property; int y^2 = pi/4
    f = lambda g: np.exp(g.x) * np.cos(g.y) + g.y**2
    ref = np.pi + np.pi / 4
    errs = []
    for nr in (8, 16, 32):
        g = build_geometry(StarShaped((1.0,), nr=nr))
        errs.append(abs(quadrature(g, f(g)) - ref))
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_peanut_area():
    # |Omega| = (1/2) int rho^2 = pi (1 + 0.4^2 / 2)
    g = build_geometry(StarShaped(PEANUT, nr=32))
    assert g.area == pytest.approx(np.pi * 1.08, rel=1e-3)


def test_interval_boundary_quadrature_is_endpoint_sum(line201):
    assert boundary_quadrature(line201, np.array([0.25, 0.5])) == pytest.approx(0.75)


def test_quadrature_rejects_mismatched_grid(disk16):
    with pytest.raises(ValueError):
        quadrature(disk16, np.ones(7))


def test_structured_grid_dump(tmp_path, disk16):
    p = tmp_path / "g.txt"
    write_structured_grid(p, disk16, {"u": disk16.x}, header="demo")
    lines = p.read_text().splitlines()
    assert lines[0] == "# demo"
    assert lines[1].split()[1:] == ["i", "j", "x", "y", "d", "boundary", "gamma_x", "gamma_y", "kappa", "u"]
    assert len(lines) == 2 + disk16.n_nodes


def test_geometry_is_immutable(disk16):
    with pytest.raises(Exception):
        disk16.nr = 3
    with pytest.raises(ValueError):
        disk16.x[0, 0] = 1.0
