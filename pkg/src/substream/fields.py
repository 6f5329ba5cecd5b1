"""Finite-difference calculus for scalar fields stored on curvilinear grids.

Node fields live on the (nz, nx) lattice of a CurvilinearGrid.  Derivatives
are taken in mapped coordinates with second-order central stencils, falling
back to one-sided second-order stencils on the first and last row/column,
then pushed to physical space through the grid's inverse-metric arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CurvilinearGrid

__all__ = [
    "GridField",
    "diff_xi",
    "diff_zeta",
    "diff2_xi",
    "diff2_zeta",
    "diff_mixed",
    "physical_gradient",
    "physical_hessian",
    "divergence",
    "curl",
]


def _d1(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    u = np.moveaxis(values, axis, 0)
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - u[:-2]) / (2.0 * h)
    out[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
    out[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def _d2(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    u = np.moveaxis(values, axis, 0)
    out = np.empty_like(u)
    h2 = h * h
    out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h2
    out[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / h2
    out[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / h2
    return np.moveaxis(out, 0, axis)


def _sided_d1(out: np.ndarray, u: np.ndarray, h: float, kinks) -> np.ndarray:
    for i, side in kinks:
        if side > 0:
            out[:, i] = (-3.0 * u[:, i] + 4.0 * u[:, i + 1] - u[:, i + 2]) / (2.0 * h)
        else:
            out[:, i] = (3.0 * u[:, i] - 4.0 * u[:, i - 1] + u[:, i - 2]) / (2.0 * h)
    return out


def _sided_d2(out: np.ndarray, u: np.ndarray, h: float, kinks) -> np.ndarray:
    h2 = h * h
    for i, side in kinks:
        if side > 0:
            out[:, i] = (
                2.0 * u[:, i] - 5.0 * u[:, i + 1] + 4.0 * u[:, i + 2] - u[:, i + 3]
            ) / h2
        else:
            out[:, i] = (
                2.0 * u[:, i] - 5.0 * u[:, i - 1] + 4.0 * u[:, i - 2] - u[:, i - 3]
            ) / h2
    return out


def diff_xi(grid: CurvilinearGrid, values: np.ndarray) -> np.ndarray:
    out = _d1(values, grid.hxi, axis=1)
    return _sided_d1(out, values, grid.hxi, grid.kink_columns)


def diff_zeta(grid: CurvilinearGrid, values: np.ndarray) -> np.ndarray:
    return _d1(values, grid.hzeta, axis=0)


def diff2_xi(grid: CurvilinearGrid, values: np.ndarray) -> np.ndarray:
    out = _d2(values, grid.hxi, axis=1)
    return _sided_d2(out, values, grid.hxi, grid.kink_columns)


def diff2_zeta(grid: CurvilinearGrid, values: np.ndarray) -> np.ndarray:
    return _d2(values, grid.hzeta, axis=0)


def diff_mixed(grid: CurvilinearGrid, values: np.ndarray) -> np.ndarray:
    # composing the two second-order first-derivative operators keeps the
    # mixed stencil second order up to and including the boundary rows; the
    # xi pass goes last so kink-column siding applies to it
    return diff_xi(grid, diff_zeta(grid, values))


def physical_gradient(grid: CurvilinearGrid, values: np.ndarray):
    """Return (u_x1, u_x2) on the full node set.

    The map keeps x1 = xi, so only the zeta derivative picks up metric
    corrections.
    """
    u_xi = diff_xi(grid, values)
    u_zeta = diff_zeta(grid, values)
    return u_xi + grid.zeta_x1 * u_zeta, grid.zeta_x2 * u_zeta


def physical_hessian(grid: CurvilinearGrid, values: np.ndarray):
    """Return (u_x1x1, u_x1x2, u_x2x2) on the full node set."""
    u_zeta = diff_zeta(grid, values)
    u_xixi = diff2_xi(grid, values)
    u_xizeta = diff_mixed(grid, values)
    u_zetazeta = diff2_zeta(grid, values)
    z1, z2 = grid.zeta_x1, grid.zeta_x2
    u_11 = u_xixi + 2.0 * z1 * u_xizeta + z1 * z1 * u_zetazeta + grid.zeta_x1x1 * u_zeta
    u_12 = z2 * u_xizeta + z1 * z2 * u_zetazeta + grid.zeta_x1x2 * u_zeta
    u_22 = z2 * z2 * u_zetazeta + grid.zeta_x2x2 * u_zeta
    return u_11, u_12, u_22


def divergence(grid: CurvilinearGrid, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    g1, _ = physical_gradient(grid, v1)
    _, g2 = physical_gradient(grid, v2)
    return g1 + g2


def curl(grid: CurvilinearGrid, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Scalar curl d(v2)/dx1 - d(v1)/dx2 of a plane vector field."""
    g1, _ = physical_gradient(grid, v2)
    _, g2 = physical_gradient(grid, v1)
    return g1 - g2


@dataclass(frozen=True)
class GridField:
    """A scalar field sampled at every grid node."""

    grid: CurvilinearGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def gradient(self):
        return physical_gradient(self.grid, self.values)

    def hessian(self):
        return physical_hessian(self.grid, self.values)

    def at(self, x1, x2):
        """Bilinear sample at physical points (clamped to the domain)."""
        return self.grid.interpolate(self.values, x1, x2)

    def __add__(self, other):
        if isinstance(other, GridField):
            return GridField(self.grid, self.values + other.values)
        return GridField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridField):
            return GridField(self.grid, self.values - other.values)
        return GridField(self.grid, self.values - other)
