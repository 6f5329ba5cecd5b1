"""Far-field state and the stream-function limit.

Builds the asymptotic inflow profile, integrates it into the stream-function
limit l with its inverse, and derives the per-streamline entropy/Bernoulli
functions A(s), B(s) with two derivatives each (the linearized operator needs
the second derivatives).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .errors import InvalidFarField, NonMonotoneStreamLimit
from .geometry import (
    ProfilePiece,
    discrete_weighted_fholder,
    discrete_weighted_fnorm,
    discrete_weighted_fsup,
)

Array = np.ndarray

_GL7 = np.polynomial.legendre.leggauss(7)
_GL15 = np.polynomial.legendre.leggauss(15)


@dataclass(frozen=True)
class SmoothFn:
    """Scalar function of x2 with two derivatives; callables take arrays."""

    f: Callable[[Array], Array]
    d1: Callable[[Array], Array]
    d2: Callable[[Array], Array]

    def __call__(self, x, deriv: int = 0):
        x = np.asarray(x, dtype=float)
        fn = (self.f, self.d1, self.d2)[deriv]
        return np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape).copy()


def constant_fn(value: float) -> SmoothFn:
    v = float(value)
    return SmoothFn(
        f=lambda x: np.full_like(x, v),
        d1=lambda x: np.zeros_like(x),
        d2=lambda x: np.zeros_like(x),
    )


def exp_perturbation(base: float, amp: float, rate: float) -> SmoothFn:
    """base * (1 + amp * exp(-rate * x2))."""
    b, a, r = float(base), float(amp), float(rate)
    return SmoothFn(
        f=lambda x: b * (1.0 + a * np.exp(-r * x)),
        d1=lambda x: -b * a * r * np.exp(-r * x),
        d2=lambda x: b * a * r * r * np.exp(-r * x),
    )


def algebraic_perturbation(base: float, amp: float, q: float) -> SmoothFn:
    """base * (1 + amp * (1 + x2)^(-q)); x2 > -1."""
    b, a, q = float(base), float(amp), float(q)
    return SmoothFn(
        f=lambda x: b * (1.0 + a * (1.0 + x) ** (-q)),
        d1=lambda x: -b * a * q * (1.0 + x) ** (-q - 1.0),
        d2=lambda x: b * a * q * (q + 1.0) * (1.0 + x) ** (-q - 2.0),
    )


@dataclass(frozen=True)
class FarFieldState:
    """Asymptotic state: gas constants plus the inflow profiles m_inf, rho_inf.

    alpha/beta are the weight parameters carried along for the norm checks.
    """

    gamma: float
    p0: float
    rho0: float
    m_star: float
    m0: float
    eps: float
    m_inf: SmoothFn
    rho_inf: SmoothFn
    alpha: float = 0.8
    beta: float = 0.4


def build_far_field(
    *,
    gamma: float,
    p0: float,
    rho0: float,
    m_star: float,
    m0: float,
    eps: float,
    m_inf: SmoothFn | None = None,
    rho_inf: SmoothFn | None = None,
    alpha: float = 0.8,
    beta: float = 0.4,
) -> FarFieldState:
    """Validate the background constants and assemble the far-field state."""
    problems = []
    if not gamma > 1.0:
        problems.append(f"gamma={gamma} must exceed 1")
    if not p0 > 0.0:
        problems.append(f"p0={p0} must be positive")
    if not rho0 > 0.0:
        problems.append(f"rho0={rho0} must be positive")
    if not 0.0 < m0 <= m_star:
        problems.append(f"m0={m0} must lie in (0, m_star={m_star}]")
    if rho0 > 0 and p0 > 0 and not m_star / rho0 < np.sqrt(p0 / rho0):
        problems.append(
            f"reference speed m_star/rho0={m_star / rho0} must stay below "
            f"sqrt(p0/rho0)={np.sqrt(p0 / rho0)}"
        )
    if not 0.0 < eps < 0.5:
        problems.append(f"eps={eps} must lie in (0, 1/2)")
    if not 0.0 < beta < alpha < 1.0:
        problems.append(f"weights must satisfy 0 < beta={beta} < alpha={alpha} < 1")
    if problems:
        raise InvalidFarField("; ".join(problems))
    return FarFieldState(
        gamma=float(gamma),
        p0=float(p0),
        rho0=float(rho0),
        m_star=float(m_star),
        m0=float(m0),
        eps=float(eps),
        m_inf=m_inf if m_inf is not None else constant_fn(m0),
        rho_inf=rho_inf if rho_inf is not None else constant_fn(rho0),
        alpha=float(alpha),
        beta=float(beta),
    )


def background_constants(far: FarFieldState) -> Tuple[float, float]:
    """Entropy/Bernoulli constants of the uniform background state."""
    g = far.gamma
    A0 = g * far.p0 / ((g - 1.0) * far.rho0**g)
    B0 = far.m0**2 / (2.0 * far.rho0**2) + g * far.p0 / ((g - 1.0) * far.rho0)
    return A0, B0


# -- quadrature ---------------------------------------------------------------


def _panel_integrals(fn, a: Array, b: Array, rule) -> Array:
    nodes, weights = rule
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = mid[:, None] + half[:, None] * nodes[None, :]
    return half * (fn(x) @ weights)


def _integrate_segments(fn, a: Array, b: Array, tol: float, depth: int = 0) -> Array:
    coarse = _panel_integrals(fn, a, b, _GL7)
    fine = _panel_integrals(fn, a, b, _GL15)
    err = np.abs(fine - coarse)
    bad = err > tol * np.maximum(b - a, 1e-300)
    if bad.any() and depth < 40:
        mid = 0.5 * (a[bad] + b[bad])
        fine = fine.copy()
        fine[bad] = _integrate_segments(
            fn, a[bad], mid, tol, depth + 1
        ) + _integrate_segments(fn, mid, b[bad], tol, depth + 1)
    return fine


def cumulative_integral(fn, points, tol: float = 1e-10):
    """Integral of fn from 0 to each requested point, shared-segment cumulative.

    Sorts the unique points, integrates each gap with an adaptive 7/15-point
    pair (tolerance per unit length), and cumulates, so the result is exactly
    consistent across all requested points.
    """
    pts = np.asarray(points, dtype=float)
    scalar = pts.ndim == 0
    flat = np.concatenate([[0.0], pts.ravel()])
    uniq = np.unique(flat)
    if uniq.size == 1:
        vals = np.zeros_like(pts)
        return float(vals) if scalar else vals
    seg = _integrate_segments(fn, uniq[:-1], uniq[1:], tol)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    cum -= cum[np.searchsorted(uniq, 0.0)]
    out = cum[np.searchsorted(uniq, pts.ravel())].reshape(pts.shape)
    return float(out) if scalar else out


# -- stream limit --------------------------------------------------------------


@dataclass(frozen=True)
class StreamLimitData:
    """Stream-function limit l, its inverse, and the streamline functions.

    All callables are vectorized. A and B map a stream value s to the
    entropy/Bernoulli coefficients of the streamline carrying that value;
    their derivatives come from the chain rule through x2 = l_inv(s).
    """

    far: FarFieldState
    strict_paper: bool
    A0: float
    B0: float
    l: Callable
    l_d1: Callable
    l_d2: Callable
    l_inv: Callable
    A: Callable
    A_d1: Callable
    A_d2: Callable
    B: Callable
    B_d1: Callable
    B_d2: Callable

    def streamline_functions(self, s):
        """All six A/B values at once, sharing a single inverse solve."""
        x = self.l_inv(s)
        return _bar_bundle(self.far, self.strict_paper, x, self.far.m_inf)


def _bar_functions(far: FarFieldState, strict_paper: bool):
    """Entropy/Bernoulli coefficients as functions of height x2, with two
    derivatives. The default forms are the ones consistent with the uniform
    background constants; strict_paper reproduces the variant with rho_inf to
    the first power in the entropy coefficient and without the 1/(gamma-1)
    factor on the pressure term of the Bernoulli coefficient."""
    g, p0 = far.gamma, far.p0
    m, r = far.m_inf, far.rho_inf

    if strict_paper:

        def Abar(x, rho):
            return g * p0 / ((g - 1.0) * rho)

        def Abar1(x, rho, rho1):
            return -g * p0 * rho1 / ((g - 1.0) * rho**2)

        def Abar2(x, rho, rho1, rho2):
            return g * p0 * (2.0 * rho1**2 - rho * rho2) / ((g - 1.0) * rho**3)

        pfac = g * p0
    else:

        def Abar(x, rho):
            return g * p0 / ((g - 1.0) * rho**g)

        def Abar1(x, rho, rho1):
            return -(g**2) * p0 * rho1 / ((g - 1.0) * rho ** (g + 1.0))

        def Abar2(x, rho, rho1, rho2):
            return (
                -(g**2)
                * p0
                * (rho2 * rho - (g + 1.0) * rho1**2)
                / ((g - 1.0) * rho ** (g + 2.0))
            )

        pfac = g * p0 / (g - 1.0)

    def bundle(x):
        x = np.asarray(x, dtype=float)
        mm, m1, m2 = m(x), m(x, 1), m(x, 2)
        rr, r1, r2 = r(x), r(x, 1), r(x, 2)
        A = Abar(x, rr)
        A1 = Abar1(x, rr, r1)
        A2 = Abar2(x, rr, r1, r2)
        B = mm**2 / (2.0 * rr**2) + pfac / rr
        B1 = mm * m1 / rr**2 - mm**2 * r1 / rr**3 - pfac * r1 / rr**2
        B2 = (
            (m1**2 + mm * m2) / rr**2
            - (4.0 * mm * m1 * r1 + mm**2 * r2) / rr**3
            + 3.0 * mm**2 * r1**2 / rr**4
            + pfac * (2.0 * r1**2 - rr * r2) / rr**3
        )
        return A, A1, A2, B, B1, B2

    return bundle


def _bar_bundle(far, strict_paper, x, m_inf):
    """Chain the height-space bundle through l_inv to stream-value space."""
    bundle = _bar_functions(far, strict_paper)
    A, A1x, A2x, B, B1x, B2x = bundle(x)
    lp = m_inf(x)
    lpp = m_inf(x, 1)
    A1 = A1x / lp
    A2 = (A2x - A1 * lpp) / lp**2
    B1 = B1x / lp
    B2 = (B2x - B1 * lpp) / lp**2
    return A, A1, A2, B, B1, B2


def build_stream_limit(
    far: FarFieldState,
    *,
    strict_paper: bool = False,
    quad_tol: float = 1e-10,
    validate: bool = True,
    n_samples: int = 200,
) -> StreamLimitData:
    """Integrate the inflow profile into l and derive A, B with derivatives."""
    m = far.m_inf
    m0 = far.m0

    if validate:
        probe = np.concatenate([[-0.5, 0.0], np.geomspace(1e-3, 1e4, n_samples)])
        mv = m(probe)
        if np.min(mv) <= 0.0:
            bad = probe[np.argmin(mv)]
            raise NonMonotoneStreamLimit(
                f"m_inf({bad:.6g}) = {np.min(mv):.6g} <= 0: limit not increasing"
            )
        if np.min(far.rho_inf(probe)) <= 0.0:
            raise InvalidFarField("rho_inf must stay positive")

    def limit(x2):
        return cumulative_integral(m, x2, tol=quad_tol)

    def limit_d1(x2):
        return m(x2)

    def limit_d2(x2):
        return m(x2, 1)

    def limit_inv(s):
        s_arr = np.asarray(s, dtype=float)
        scalar = s_arr.ndim == 0
        x = np.atleast_1d(s_arr / m0).astype(float).copy()
        target = np.atleast_1d(s_arr)
        for _ in range(50):
            resid = limit(x) - target
            step = resid / m(x)
            x -= step
            if np.max(np.abs(step)) <= 1e-13 * (1.0 + np.max(np.abs(x))):
                break
        else:
            raise InvalidFarField("stream-limit inversion failed to converge")
        return float(x[0]) if scalar else x.reshape(s_arr.shape)

    if validate:
        xs = np.geomspace(1e-3, 1e3, n_samples)
        lv = limit(xs)
        if not (np.all(lv > 0.5 * m0 * xs) and np.all(lv < 2.0 * m0 * xs)):
            raise InvalidFarField(
                "stream limit leaves the band (m0/2) x2 < l(x2) < 2 m0 x2"
            )

    A0, B0 = background_constants(far)
    bundle = _bar_functions(far, strict_paper)

    def _chained(index):
        def fn(s):
            x = limit_inv(s)
            return _bar_bundle(far, strict_paper, x, m)[index]

        return fn

    return StreamLimitData(
        far=far,
        strict_paper=bool(strict_paper),
        A0=A0,
        B0=B0,
        l=limit,
        l_d1=limit_d1,
        l_d2=limit_d2,
        l_inv=limit_inv,
        A=_chained(0),
        A_d1=_chained(1),
        A_d2=_chained(2),
        B=_chained(3),
        B_d1=_chained(4),
        B_d2=_chained(5),
    )


# -- norm diagnostics -----------------------------------------------------------


def _fn_piece(fn: Callable, d1: Callable, d2: Callable, lo: float) -> ProfilePiece:
    return ProfilePiece(f=fn, d1=d1, d2=d2, lo=lo, hi=np.inf)


def check_farfield_norm(
    far: FarFieldState, alpha: float | None = None, *, n_samples: int = 400
) -> Tuple[float, bool]:
    """Sampled weighted norm of U_inf - U_0 over the inflow height range,
    with the pass/fail verdict against eps * m0.

    The deviation has components (m_inf - m0, 0, 0, rho_inf - rho0) in
    (momentum1, momentum2, pressure, density); the vector norm is the sum of
    the component norms.
    """
    a = far.alpha if alpha is None else float(alpha)
    m, r = far.m_inf, far.rho_inf
    m0, rho0 = far.m0, far.rho0
    pieces = [
        _fn_piece(lambda x: m(x) - m0, lambda x: m(x, 1), lambda x: m(x, 2), 0.0),
        _fn_piece(lambda x: r(x) - rho0, lambda x: r(x, 1), lambda x: r(x, 2), 0.0),
    ]
    value = sum(
        discrete_weighted_fnorm(p, 2, a, 0.0, n_samples=n_samples) for p in pieces
    )
    return float(value), bool(value <= far.eps * far.m0)


def stream_limit_norm_ratios(
    stream: StreamLimitData, *, n_samples: int = 200
) -> dict:
    """Primed-norm deviations of A and B from their background constants.

    Uses the weight variant whose offset is m0 instead of 1. The comparison
    constant in the underlying estimate is nonconstructive, so the ratios to
    eps * m0 are reported rather than judged.
    """
    far = stream.far
    a = far.alpha
    scale = far.eps * far.m0
    out = {}
    for name, fn, d1, d2, const in (
        ("entropy", stream.A, stream.A_d1, stream.A_d2, stream.A0),
        ("bernoulli", stream.B, stream.B_d1, stream.B_d2, stream.B0),
    ):
        piece = _fn_piece(
            lambda s, fn=fn, c=const: fn(s) - c,
            lambda s, d1=d1: d1(s),
            lambda s, d2=d2: d2(s),
            0.0,
        )
        kw = dict(n_samples=n_samples, weight_offset=far.m0)
        norm = sum(
            discrete_weighted_fsup(piece, i, 0.0, **kw) for i in range(3)
        ) + discrete_weighted_fholder(piece, 2, a, 0.0, **kw)
        out[f"{name}_deviation_norm"] = float(norm)
        out[f"{name}_deviation_ratio"] = float(norm / scale)
    return out
