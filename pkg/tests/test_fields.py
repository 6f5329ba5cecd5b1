"""Derivative stencils against analytic fields."""
from __future__ import annotations

import numpy as np
import pytest

from substream.fields import GridField, curl, divergence, physical_gradient, physical_hessian
from substream.geometry import flat_profile, generate_grid, poly_bump_profile, truncate


def flat_grid(nx=33, nz=17, R=4.0, H=4.0):
    domain = truncate(flat_profile(), R=R, H=H)
    return generate_grid(domain, nx, nz, grading=1.0)


def bump_grid(nx=65, nz=33, R=8.0, H=8.0):
    profile = poly_bump_profile([0.1], delta=0.15, d0=2.0)
    return generate_grid(truncate(profile, R=R, H=H), nx, nz, grading=1.5)


def quadratic(x1, x2):
    return 2.0 + 0.3 * x1 - 0.7 * x2 + 0.25 * x1**2 - 0.4 * x1 * x2 + 0.15 * x2**2


def test_quadratic_exact_on_affine_grid():
    # with a flat boundary and unit grading the map is affine, so every node
    # including the one-sided edge rows must differentiate a quadratic exactly
    grid = flat_grid()
    u = quadratic(grid.x1, grid.x2)
    g1, g2 = physical_gradient(grid, u)
    h11, h12, h22 = physical_hessian(grid, u)
    np.testing.assert_allclose(g1, 0.3 + 0.5 * grid.x1 - 0.4 * grid.x2, atol=1e-12)
    np.testing.assert_allclose(g2, -0.7 - 0.4 * grid.x1 + 0.3 * grid.x2, atol=1e-12)
    np.testing.assert_allclose(h11, 0.5, atol=1e-12)
    np.testing.assert_allclose(h12, -0.4, atol=1e-12)
    np.testing.assert_allclose(h22, 0.3, atol=1e-12)


def test_constant_field_has_zero_derivatives():
    grid = bump_grid(nx=33, nz=17)
    u = np.full(grid.shape, 3.25)
    g1, g2 = physical_gradient(grid, u)
    np.testing.assert_allclose(g1, 0.0, atol=1e-13)
    np.testing.assert_allclose(g2, 0.0, atol=1e-13)
    for h in physical_hessian(grid, u):
        np.testing.assert_allclose(h, 0.0, atol=1e-12)


def _errors_on(grid):
    # decay scale 4 keeps the vertical Taylor series well inside its
    # asymptotic range at these resolutions
    u = np.sin(grid.x1) * np.exp(-grid.x2 / 4.0)
    g1, g2 = physical_gradient(grid, u)
    h11, h12, h22 = physical_hessian(grid, u)
    e = np.exp(-grid.x2 / 4.0)
    s, c = np.sin(grid.x1), np.cos(grid.x1)
    errs = {
        "g1": g1 - c * e,
        "g2": g2 + s * e / 4.0,
        "h11": h11 + s * e,
        "h12": h12 + c * e / 4.0,
        "h22": h22 - s * e / 16.0,
    }
    return errs


def test_bump_grid_derivatives_second_order():
    coarse = bump_grid(nx=65, nz=33)
    fine = bump_grid(nx=129, nz=65)
    ec = _errors_on(coarse)
    ef = _errors_on(fine)
    # every coarse node is shared with the fine grid (index doubling), so the
    # error comparison uses identical physical locations; nodes within 0.5 of
    # a profile corner are excluded since the solution map is singular there
    near = (np.hypot(coarse.x1 + 1.0, coarse.x2) < 0.5) | (
        np.hypot(coarse.x1 - 1.0, coarse.x2) < 0.5
    )
    keep = ~near
    for key in ec:
        c = np.max(np.abs(ec[key][keep]))
        f = np.max(np.abs(ef[key][::2, ::2][keep]))
        order = np.log2(c / f)
        assert order > 1.8, f"{key}: order {order:.2f} (coarse {c:.2e}, fine {f:.2e})"


def test_divergence_and_curl_of_analytic_field():
    grid = bump_grid(nx=129, nz=65)
    v1 = grid.x1**2 + grid.x2
    v2 = grid.x1 * grid.x2
    div = divergence(grid, v1, v2)
    rot = curl(grid, v1, v2)
    np.testing.assert_allclose(div, 3.0 * grid.x1, atol=6e-3)
    np.testing.assert_allclose(rot, grid.x2 - 1.0, atol=6e-3)


def test_grid_field_wrapper_shape_checked():
    grid = flat_grid()
    with pytest.raises(ValueError):
        GridField(grid, np.zeros((3, 3)))
    field = GridField(grid, grid.x2.copy())
    g1, g2 = field.gradient()
    np.testing.assert_allclose(g2, 1.0, atol=1e-11)
    np.testing.assert_allclose(g1, 0.0, atol=1e-11)
    mid = field.at(0.37, 1.29)
    assert mid == pytest.approx(1.29, abs=1e-12)
