"""Linearized elliptic assembly, sparse solves, and the outer iteration.

The unknown throughout is the perturbation u = psi - l. Coefficients are
frozen at the current iterate, the mean-value b-fields are built by
Gauss-Legendre quadrature along the segment joining the iterate to the
stream limit, and the resulting nondivergence-form operator is discretized
with second-order stencils in mapped coordinates. A flux (divergence-form)
discretization of the same equation is available as a cross-check scheme.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial.legendre import leggauss

from .errors import (
    IllConditioned,
    LinearSolveDiverged,
    MaxIterationsExceeded,
    QuadratureStateSupersonic,
    SubsonicViolation,
    SupersonicChi,
)
from .farfield import StreamLimitData
from .fields import (
    GridField,
    diff2_xi,
    diff2_zeta,
    diff_mixed,
    diff_xi,
    diff_zeta,
    physical_gradient,
)
from .geometry import BOTTOM, CurvilinearGrid, TruncatedDomain
from .thermo import coefficients, pressure, solve_density

__all__ = [
    "DirichletData",
    "LinearEllipticProblem",
    "SolveReport",
    "EulerFields",
    "cutoff_eta",
    "boundary_data",
    "assemble_linearized",
    "assemble_picard",
    "inject_manufactured",
    "manufactured_solution",
    "apply_operator",
    "solve_linear",
    "fixed_point_solve",
    "recover_euler_fields",
]

DIRECT_SOLVER_LIMIT = 300_000


def cutoff_eta(s, d0: float = 2.0, deriv: int = 0):
    """Quintic smoothstep cutoff: 1 on |s| <= d0, 0 on |s| >= d0 + 1, C^2."""
    s = np.asarray(s, dtype=float)
    t = np.clip(np.abs(s) - d0, 0.0, 1.0)
    if deriv == 0:
        out = 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
    elif deriv == 1:
        out = -30.0 * t * t * (1.0 - t) ** 2 * np.sign(s)
    elif deriv == 2:
        out = -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    else:
        raise ValueError("cutoff_eta supports derivatives 0, 1, 2")
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DirichletData:
    """Boundary trace for the perturbation: u = g on every boundary segment.

    g couples the cutoff in both coordinates so that psi = l + g vanishes
    identically on the bottom boundary and g itself vanishes above d0 + 1.
    """

    domain: TruncatedDomain
    stream: StreamLimitData

    @property
    def d0(self) -> float:
        return self.domain.profile.d0

    def eta(self, s, deriv: int = 0):
        return cutoff_eta(s, self.d0, deriv)

    def g(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        scalar = x1.ndim == 0 and x2.ndim == 0
        x1, x2 = np.broadcast_arrays(x1, x2)
        eta1 = cutoff_eta(x1, self.d0)
        eta2 = cutoff_eta(x2, self.d0)
        # the tail term only matters where eta1 < 1, i.e. |x1| > d0 >= 1,
        # which keeps the profile evaluation off the arc piece
        tail = np.zeros_like(np.asarray(eta1, dtype=float))
        mask = np.asarray(eta1) < 1.0
        if np.any(mask):
            heights = self.domain.profile.height(x1[mask])
            tail[mask] = self.stream.l(heights)
        out = -eta2 * ((1.0 - eta1) * tail + eta1 * self.stream.l(x2))
        return float(out) if scalar else out

    def trace(self, grid: CurvilinearGrid) -> np.ndarray:
        """g evaluated at every node; only boundary entries are consumed."""
        return self.g(grid.x1, grid.x2)


def boundary_data(domain: TruncatedDomain, stream: StreamLimitData) -> DirichletData:
    if domain.H <= domain.profile.d0 + 1.0:
        raise ValueError("domain height must exceed d0 + 1 for the cutoff data")
    return DirichletData(domain=domain, stream=stream)


@dataclass(frozen=True)
class LinearEllipticProblem:
    """Nondivergence-form problem a_ij u_xixj + b_i u_xi + b0 u = rhs."""

    grid: CurvilinearGrid
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    b0: np.ndarray
    rhs: np.ndarray
    trace: np.ndarray
    min_sonic_margin: float = float("nan")

    def __post_init__(self):
        det = self.a11 * self.a22 - self.a12**2
        bad = (det <= 0.0) & self.grid.interior
        if np.any(bad):
            nodes = [tuple(p) for p in np.argwhere(bad)]
            raise SubsonicViolation(
                f"ellipticity lost at {len(nodes)} node(s), first {nodes[:5]}",
                nodes=nodes,
            )

    @property
    def coefficient_scale(self) -> float:
        return float(max(np.max(np.abs(self.a11)), np.max(np.abs(self.a22))))


def _gauss01(n: int):
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _subsonic_nodes(margin, shape):
    m = np.asarray(margin)
    if m.shape != shape:
        m = m.reshape(shape)
    return [tuple(p) for p in np.argwhere(m < 0.0)]


def assemble_linearized(
    psi: GridField,
    stream: StreamLimitData,
    boundary: DirichletData,
    *,
    quad_points: int = 5,
) -> LinearEllipticProblem:
    """Coefficients at the iterate plus mean-value b-fields along t_s."""
    grid = psi.grid
    pv = psi.values
    g1, g2 = physical_gradient(grid, pv)
    chi = 0.5 * (g1 * g1 + g2 * g2)
    try:
        dens = solve_density(chi, pv, stream)
    except SupersonicChi as exc:
        raise SubsonicViolation(
            "iterate is supersonic at some nodes",
            nodes=_subsonic_nodes(exc.margin, grid.shape),
        ) from exc
    bun = coefficients(dens, (g1, g2))

    lv = stream.l(grid.x2)
    lp = stream.l_d1(grid.x2)
    lpp = stream.l_d2(grid.x2)

    b0 = np.zeros(grid.shape)
    b1 = np.zeros(grid.shape)
    b2 = np.zeros(grid.shape)
    for s, w in zip(*_gauss01(quad_points)):
        ps = lv + s * (pv - lv)
        h1 = s * g1
        h2 = lp + s * (g2 - lp)
        try:
            ds = solve_density(0.5 * (h1 * h1 + h2 * h2), ps, stream)
        except SupersonicChi as exc:
            raise QuadratureStateSupersonic(
                f"segment state at s={s:.4f} is supersonic",
                nodes=_subsonic_nodes(exc.margin, grid.shape),
            ) from exc
        bs = coefficients(ds, (h1, h2))
        b0 += w * (lpp * bs.da22_dpsi - bs.dF_dpsi)
        b1 += w * (lpp * bs.da22_dgrad1 - bs.dF_dgrad1)
        b2 += w * (lpp * bs.da22_dgrad2 - bs.dF_dgrad2)

    return LinearEllipticProblem(
        grid=grid,
        a11=bun.a11,
        a12=bun.a12,
        a22=bun.a22,
        b1=b1,
        b2=b2,
        b0=b0,
        rhs=np.zeros(grid.shape),
        trace=boundary.trace(grid),
        min_sonic_margin=float(np.min(dens.sonic_margin)),
    )


def assemble_picard(
    psi: GridField,
    stream: StreamLimitData,
    boundary: DirichletData,
) -> LinearEllipticProblem:
    """Plain Picard freeze: a_ij and F at the iterate, no b-fields.

    In the perturbation unknown the source F(psi_k) - a22(psi_k) l'' moves
    to the right-hand side (the l-part of the second derivatives is applied
    analytically).
    """
    grid = psi.grid
    pv = psi.values
    g1, g2 = physical_gradient(grid, pv)
    chi = 0.5 * (g1 * g1 + g2 * g2)
    try:
        dens = solve_density(chi, pv, stream)
    except SupersonicChi as exc:
        raise SubsonicViolation(
            "iterate is supersonic at some nodes",
            nodes=_subsonic_nodes(exc.margin, grid.shape),
        ) from exc
    bun = coefficients(dens, (g1, g2))
    lpp = stream.l_d2(grid.x2)
    zero = np.zeros(grid.shape)
    return LinearEllipticProblem(
        grid=grid,
        a11=bun.a11,
        a12=bun.a12,
        a22=bun.a22,
        b1=zero,
        b2=zero,
        b0=zero,
        rhs=bun.F - bun.a22 * lpp,
        trace=boundary.trace(grid),
        min_sonic_margin=float(np.min(dens.sonic_margin)),
    )


def manufactured_solution(x1, x2):
    """u* = sin(x1) exp(-x2) with its first and second derivatives."""
    e = np.exp(-np.asarray(x2, dtype=float))
    s = np.sin(x1)
    c = np.cos(x1)
    return s * e, c * e, -s * e, -s * e, -c * e, s * e


def inject_manufactured(problem: LinearEllipticProblem, exact=manufactured_solution):
    """Replace rhs/trace so the exact solution of the problem is u*.

    Returns the modified problem and the exact node values for error
    measurement.
    """
    grid = problem.grid
    u, u1, u2, u11, u12, u22 = exact(grid.x1, grid.x2)
    rhs = (
        problem.a11 * u11
        + 2.0 * problem.a12 * u12
        + problem.a22 * u22
        + problem.b1 * u1
        + problem.b2 * u2
        + problem.b0 * u
    )
    return replace(problem, rhs=rhs, trace=u), u


def _transformed_coefficients(problem: LinearEllipticProblem):
    grid = problem.grid
    z1, z2 = grid.zeta_x1, grid.zeta_x2
    a11, a12, a22 = problem.a11, problem.a12, problem.a22
    cxx = a11
    cxz = 2.0 * (a11 * z1 + a12 * z2)
    czz = a11 * z1 * z1 + 2.0 * a12 * z1 * z2 + a22 * z2 * z2
    cx = problem.b1
    cz = (
        a11 * grid.zeta_x1x1
        + 2.0 * a12 * grid.zeta_x1x2
        + a22 * grid.zeta_x2x2
        + problem.b1 * z1
        + problem.b2 * z2
    )
    return cxx, cxz, czz, cx, cz, problem.b0


def apply_operator(problem: LinearEllipticProblem, values: np.ndarray) -> np.ndarray:
    """L values - rhs with the same stencils the matrix uses; interior only."""
    grid = problem.grid
    cxx, cxz, czz, cx, cz, c0 = _transformed_coefficients(problem)
    res = (
        cxx * diff2_xi(grid, values)
        + cxz * diff_mixed(grid, values)
        + czz * diff2_zeta(grid, values)
        + cx * diff_xi(grid, values)
        + cz * diff_zeta(grid, values)
        + c0 * values
        - problem.rhs
    )
    out = np.zeros(grid.shape)
    inner = grid.interior
    out[inner] = res[inner]
    return out


def _assemble_matrix(problem: LinearEllipticProblem):
    grid = problem.grid
    nz, nx = grid.shape
    hx, hz = grid.hxi, grid.hzeta
    hx2, hz2 = hx * hx, hz * hz
    cross = 1.0 / (4.0 * hx * hz)
    cxx, cxz, czz, cx, cz, c0 = _transformed_coefficients(problem)

    unk = -np.ones((nz, nx), dtype=np.int64)
    n_unknowns = (nz - 2) * (nx - 2)
    unk[1:-1, 1:-1] = np.arange(n_unknowns).reshape(nz - 2, nx - 2)
    rhs_vec = problem.rhs[1:-1, 1:-1].ravel().astype(float).copy()
    trace = problem.trace

    kink_cols = {i: side for i, side in grid.kink_columns}
    jj, ii = np.mgrid[1 : nz - 1, 1 : nx - 1]
    generic = np.ones((nz - 2, nx - 2), dtype=bool)
    for i in kink_cols:
        generic[:, i - 1] = False

    rows, cols, vals = [], [], []

    def scatter(mask_rows, djs, dis, weights):
        # one COO batch: row nodes given by boolean mask over the interior
        r = unk[1:-1, 1:-1][mask_rows]
        tj = jj[mask_rows] + djs
        ti = ii[mask_rows] + dis
        c = unk[tj, ti]
        inside = c >= 0
        rows.append(r[inside])
        cols.append(c[inside])
        vals.append(weights[inside])
        outside = ~inside
        if np.any(outside):
            np.subtract.at(
                rhs_vec, r[outside], weights[outside] * trace[tj[outside], ti[outside]]
            )

    centre = -2.0 * cxx / hx2 - 2.0 * czz / hz2 + c0
    generic_offsets = [
        (0, 0, centre),
        (0, 1, cxx / hx2 + cx / (2.0 * hx)),
        (0, -1, cxx / hx2 - cx / (2.0 * hx)),
        (1, 0, czz / hz2 + cz / (2.0 * hz)),
        (-1, 0, czz / hz2 - cz / (2.0 * hz)),
        (1, 1, cxz * cross),
        (-1, -1, cxz * cross),
        (1, -1, -cxz * cross),
        (-1, 1, -cxz * cross),
    ]
    for dj, di, W in generic_offsets:
        scatter(generic, dj, di, W[1:-1, 1:-1][generic])

    # kink columns get one-sided xi stencils (toward the arc) so the scheme
    # never differences across the boundary corner's metric jump
    d1w = np.array([-3.0, 4.0, -1.0]) / (2.0 * hx)
    d2w = np.array([2.0, -5.0, 4.0, -1.0]) / hx2
    for ik, side in grid.kink_columns:
        colmask = np.zeros((nz - 2, nx - 2), dtype=bool)
        colmask[:, ik - 1] = True
        stencil = {}

        def add(dj, di, w):
            stencil[(dj, di)] = stencil.get((dj, di), 0.0) + w

        col = slice(1, nz - 1)
        for c, w in enumerate(d2w):
            add(0, side * c, cxx[col, ik] * w)
        for c, w in enumerate(d1w):
            add(0, side * c, cx[col, ik] * side * w)
            for dj in (1, -1):
                add(dj, side * c, cxz[col, ik] * dj / (2.0 * hz) * side * w)
        add(1, 0, czz[col, ik] / hz2 + cz[col, ik] / (2.0 * hz))
        add(0, 0, -2.0 * czz[col, ik] / hz2 + c0[col, ik])
        add(-1, 0, czz[col, ik] / hz2 - cz[col, ik] / (2.0 * hz))
        for (dj, di), w in stencil.items():
            scatter(colmask, dj, di, np.asarray(w)[colmask[:, ik - 1]])

    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknowns, n_unknowns),
    ).tocsr()
    return matrix, rhs_vec, unk


def _solve_sparse(matrix, rhs, *, rel_tol: float = 1e-10, method: str = "auto"):
    n = matrix.shape[0]
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros(n)
    use_direct = method == "direct" or (method == "auto" and n <= DIRECT_SOLVER_LIMIT)
    csc = matrix.tocsc()
    if use_direct:
        try:
            lu = spla.splu(csc)
        except RuntimeError as exc:
            raise IllConditioned(f"sparse factorization failed: {exc}") from exc
        x = lu.solve(rhs)
        resid = matrix @ x - rhs
        rel = float(np.linalg.norm(resid)) / bnorm
        if rel > rel_tol:
            x -= lu.solve(resid)
            rel = float(np.linalg.norm(matrix @ x - rhs)) / bnorm
        if not np.isfinite(rel) or rel > rel_tol:
            cond = _condition_estimate(matrix, lu)
            raise IllConditioned(
                f"direct solve stalled at relative residual {rel:.3e} "
                f"(condition estimate {cond:.3e})"
            )
        return x
    try:
        prec = spla.spilu(csc, drop_tol=1e-5, fill_factor=20.0)
    except RuntimeError as exc:
        raise IllConditioned(f"incomplete factorization failed: {exc}") from exc
    M = spla.LinearOperator((n, n), prec.solve)
    x, info = spla.gmres(matrix, rhs, M=M, rtol=rel_tol / 10.0, atol=0.0, restart=200)
    if info != 0:
        raise LinearSolveDiverged(f"gmres returned info={info}")
    rel = float(np.linalg.norm(matrix @ x - rhs)) / bnorm
    if not np.isfinite(rel) or rel > rel_tol:
        raise LinearSolveDiverged(f"iterative solve stalled at residual {rel:.3e}")
    return x


def _condition_estimate(matrix, lu) -> float:
    try:
        n = matrix.shape[0]
        inv = spla.LinearOperator((n, n), lu.solve)
        return float(spla.onenormest(matrix) * spla.onenormest(inv))
    except Exception:
        return float("nan")


def solve_linear(
    problem: LinearEllipticProblem,
    *,
    rel_tol: float = 1e-10,
    method: str = "auto",
) -> GridField:
    """Solve the Dirichlet problem; boundary rows are eliminated exactly."""
    matrix, rhs_vec, unk = _assemble_matrix(problem)
    x = _solve_sparse(matrix, rhs_vec, rel_tol=rel_tol, method=method)
    values = problem.trace.astype(float).copy()
    inner = unk >= 0
    values[inner] = x[unk[inner]]
    return GridField(problem.grid, values)


@dataclass
class SolveReport:
    """Outer-iteration history and the final diagnostics that come free."""

    scheme: str
    converged: bool
    iterations: int
    tol_outer: float
    tol_pde: float
    update_norms: list = field(default_factory=list)
    omega_history: list = field(default_factory=list)
    sonic_margins: list = field(default_factory=list)
    linear_residual: float = float("nan")
    pde_residual: float = float("nan")
    coefficient_scale: float = float("nan")
    contraction_ratio: float = float("nan")
    warnings: list = field(default_factory=list)

    def tail_ratios(self, window: int = 5):
        tail = self.update_norms[-(window + 1) :]
        return [b / a for a, b in zip(tail, tail[1:]) if a > 0.0]


def _check_contraction(report: SolveReport):
    ratios = report.tail_ratios()
    if ratios:
        report.contraction_ratio = float(np.exp(np.mean(np.log(ratios))))
        if report.converged and any(r >= 0.9 for r in ratios):
            report.warnings.append(
                f"slow contraction: tail ratios {['%.3f' % r for r in ratios]}"
            )


def fixed_point_solve(
    grid: CurvilinearGrid,
    stream: StreamLimitData,
    *,
    scheme: str = "linearized",
    tol_outer: float | None = None,
    tol_pde: float | None = None,
    k_max: int = 40,
    omega: float = 1.0,
    quad_points: int = 5,
    progress: bool = False,
):
    """Iterate u -> solve(linearize(l + u)) until the update norm is tiny.

    Returns (psi, report). The initial iterate is psi = l + g with the
    boundary blend g evaluated on the whole grid, so the trace is matched
    from the start and the far region starts exactly on the stream limit.
    """
    if scheme not in ("linearized", "picard", "divergence"):
        raise ValueError(f"unknown scheme '{scheme}'")
    far = stream.far
    tol = 1e-9 * far.m0 if tol_outer is None else float(tol_outer)
    tol_p = 10.0 * tol if tol_pde is None else float(tol_pde)
    boundary = boundary_data(grid.domain, stream)

    lv = stream.l(grid.x2)
    gv = boundary.trace(grid)
    u = gv.copy()
    w = float(omega)

    report = SolveReport(
        scheme=scheme, converged=False, iterations=0, tol_outer=tol, tol_pde=tol_p
    )
    problem = None
    for k in range(1, k_max + 1):
        psi = GridField(grid, lv + u)
        if scheme == "divergence":
            utilde, margin = _divergence_sweep(grid, stream, psi.values, lv, gv)
        else:
            assemble = assemble_linearized if scheme == "linearized" else assemble_picard
            kwargs = {"quad_points": quad_points} if scheme == "linearized" else {}
            problem = assemble(psi, stream, boundary, **kwargs)
            margin = problem.min_sonic_margin
            utilde = solve_linear(problem).values
        report.sonic_margins.append(margin)

        candidate = (1.0 - w) * u + w * utilde
        update = float(np.max(np.abs(candidate - u)))
        while report.update_norms and update > report.update_norms[-1] and w > 0.0625:
            w *= 0.5
            candidate = (1.0 - w) * u + w * utilde
            update = float(np.max(np.abs(candidate - u)))
            report.warnings.append(f"iteration {k}: relaxation halved to {w}")
        u = candidate
        report.update_norms.append(update)
        report.omega_history.append(w)
        report.iterations = k
        if progress:
            print(f"{k}\t{update:.6e}\t{margin:.6e}")
        if update < tol:
            report.converged = True
            break

    psi = GridField(grid, lv + u)
    if scheme != "divergence":
        final = (
            assemble_linearized(psi, stream, boundary, quad_points=quad_points)
            if scheme == "linearized"
            else assemble_picard(psi, stream, boundary)
        )
        report.coefficient_scale = final.coefficient_scale
        res = apply_operator(final, u)
        report.pde_residual = float(np.max(np.abs(res))) / final.coefficient_scale
        if report.pde_residual > tol_p:
            report.warnings.append(
                f"discrete nonlinear residual {report.pde_residual:.3e} "
                f"above tol_pde {tol_p:.3e}"
            )
    _check_contraction(report)
    if not report.converged:
        raise MaxIterationsExceeded(
            f"no convergence in {report.iterations} iterations "
            f"(last update {report.update_norms[-1]:.3e})",
            report=report,
        )
    return psi, report


def _divergence_sweep(grid, stream, psi_values, lv, gv):
    """One Picard sweep of the flux form div(grad psi / rho) = source."""
    g1, g2 = physical_gradient(grid, psi_values)
    dens = solve_density(0.5 * (g1 * g1 + g2 * g2), psi_values, stream)
    rho = dens.rho
    margin = float(np.min(dens.sonic_margin))
    gamma = stream.far.gamma
    source = stream.B_d1(psi_values) * rho - stream.A_d1(psi_values) * rho**gamma / gamma

    nz, nx = grid.shape
    hx, hz = grid.hxi, grid.hzeta
    xi, zeta = grid.xi, grid.zeta
    xi_h = 0.5 * (xi[:-1] + xi[1:])
    zeta_h = 0.5 * (zeta[:-1] + zeta[1:])

    jac_xh, x2xi_xh = grid.map_metrics(xi_h[None, :], zeta[:, None])
    jac_zh, x2xi_zh = grid.map_metrics(xi[None, :], zeta_h[:, None])
    rho_xh = 0.5 * (rho[:, :-1] + rho[:, 1:])
    rho_zh = 0.5 * (rho[:-1, :] + rho[1:, :])

    P = jac_xh / rho_xh
    Qx = x2xi_xh / rho_xh
    Qz = x2xi_zh / rho_zh
    W = (x2xi_zh**2 + 1.0) / (jac_zh * rho_zh)

    a = 1.0 / (hx * hx)
    c = 1.0 / (hz * hz)
    bq = 1.0 / (4.0 * hx * hz)

    # half-node slices aligned with interior nodes (j = 1..nz-2, i = 1..nx-2)
    Pxp, Pxm = P[1:-1, 1:], P[1:-1, :-1]
    Qxp, Qxm = Qx[1:-1, 1:], Qx[1:-1, :-1]
    Wzp, Wzm = W[1:, 1:-1], W[:-1, 1:-1]
    Qzp, Qzm = Qz[1:, 1:-1], Qz[:-1, 1:-1]

    offsets = {
        (0, 0): -a * (Pxp + Pxm) - c * (Wzp + Wzm),
        (0, 1): a * Pxp - bq * Qzp + bq * Qzm,
        (0, -1): a * Pxm + bq * Qzp - bq * Qzm,
        (1, 0): c * Wzp - bq * Qxp + bq * Qxm,
        (-1, 0): c * Wzm + bq * Qxp - bq * Qxm,
        (1, 1): -bq * (Qxp + Qzp),
        (-1, -1): -bq * (Qxm + Qzm),
        (1, -1): bq * (Qxm + Qzp),
        (-1, 1): bq * (Qxp + Qzm),
    }

    unk = -np.ones((nz, nx), dtype=np.int64)
    n_unknowns = (nz - 2) * (nx - 2)
    unk[1:-1, 1:-1] = np.arange(n_unknowns).reshape(nz - 2, nx - 2)
    jac_node = grid.jac
    rhs_vec = (jac_node * source)[1:-1, 1:-1].ravel().copy()
    trace_psi = lv + gv

    jj, ii = np.mgrid[1 : nz - 1, 1 : nx - 1]
    rows, cols, vals = [], [], []
    for (dj, di), Wgt in offsets.items():
        r = unk[1:-1, 1:-1].ravel()
        tj = (jj + dj).ravel()
        ti = (ii + di).ravel()
        wf = Wgt.ravel()
        cidx = unk[tj, ti]
        inside = cidx >= 0
        rows.append(r[inside])
        cols.append(cidx[inside])
        vals.append(wf[inside])
        outside = ~inside
        if np.any(outside):
            np.subtract.at(
                rhs_vec, r[outside], wf[outside] * trace_psi[tj[outside], ti[outside]]
            )
    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknowns, n_unknowns),
    ).tocsr()
    x = _solve_sparse(matrix, rhs_vec)
    psi_new = trace_psi.astype(float).copy()
    inner = unk >= 0
    psi_new[inner] = x[unk[inner]]
    return psi_new - lv, margin


@dataclass(frozen=True)
class EulerFields:
    """Momentum, density, pressure, and specific energy recovered from psi."""

    grid: CurvilinearGrid
    m1: np.ndarray
    m2: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    sonic_margin: np.ndarray


def recover_euler_fields(psi: GridField, stream: StreamLimitData) -> EulerFields:
    grid = psi.grid
    g1, g2 = physical_gradient(grid, psi.values)
    m1, m2 = g2, -g1
    chi = 0.5 * (m1 * m1 + m2 * m2)
    dens = solve_density(chi, psi.values, stream)
    rho = dens.rho
    p = pressure(dens)
    gamma = stream.far.gamma
    energy = (m1 * m1 + m2 * m2) / (2.0 * rho * rho) + p / ((gamma - 1.0) * rho)
    return EulerFields(
        grid=grid,
        m1=m1,
        m2=m2,
        rho=rho,
        p=p,
        energy=energy,
        sonic_margin=np.asarray(dens.sonic_margin),
    )
