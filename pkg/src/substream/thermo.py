"""Subsonic-branch density inversion and the elliptic coefficient bundle.

Bernoulli's law fixes the density as the larger root of
chi = B(psi) rho^2 - A(psi) rho^(gamma+1); its partials and the coefficients
of the reduced second-order operator fall out by the chain rule.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import NegativeChi, SonicProximityWarning, SupersonicChi
from .farfield import StreamLimitData

Array = np.ndarray

# relative h-residual accepted after the Newton solve
_DENSITY_RTOL = 1e-12
# chi within this relative distance of the sonic maximum is clamped (warned)
_SONIC_GRAZE = 1e-12


def sonic_parameters(A, B, gamma: float):
    """Bracket data for the subsonic branch at given streamline coefficients.

    Returns (rho_sonic, rho_max, chi_max): the sonic density, the stagnation
    density (kinetic term zero), and the largest kinetic term h(rho_sonic)
    admitting a subsonic root.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    ex = 1.0 / (gamma - 1.0)
    rho_sonic = (2.0 * B / ((gamma + 1.0) * A)) ** ex
    rho_max = (B / A) ** ex
    chi_max = B * rho_sonic**2 * (gamma - 1.0) / (gamma + 1.0)
    return rho_sonic, rho_max, chi_max


@dataclass(frozen=True)
class DensityState:
    """Density on the subsonic branch with its partials and cached
    streamline-function values (so downstream coefficient evaluation does not
    repeat the stream-limit inversion)."""

    gamma: float
    chi: Array
    psi: Array
    rho: Array
    rho_chi: Array
    rho_psi: Array
    sonic_margin: Array
    A: Array
    A_d1: Array
    A_d2: Array
    B: Array
    B_d1: Array
    B_d2: Array


def solve_density(
    chi,
    psi,
    stream: StreamLimitData,
    *,
    clamp_sonic: bool = True,
) -> DensityState:
    """Invert Bernoulli's law for the subsonic-branch density.

    Safeguarded Newton bracketed in [rho_sonic, rho_max]; the initial guess
    rho_max (1 - chi/(2 chi_max)) is clipped into the bracket. chi at most a
    rounding margin above chi_max is clamped to the sonic root with a warning
    (iterates may graze the bound transiently); anything larger raises.
    """
    chi_in = np.asarray(chi, dtype=float)
    psi_in = np.asarray(psi, dtype=float)
    chi_b, psi_b = np.broadcast_arrays(chi_in, psi_in)
    shape = chi_b.shape
    chi_f = chi_b.reshape(-1).astype(float).copy()
    psi_f = psi_b.reshape(-1).astype(float)

    if np.min(chi_f, initial=np.inf) < 0.0:
        raise NegativeChi(f"kinetic term min {np.min(chi_f)} < 0")

    gamma = stream.far.gamma
    A, A1, A2, B, B1, B2 = stream.streamline_functions(psi_f)
    rho_sonic, rho_max, chi_max = sonic_parameters(A, B, gamma)

    over = chi_f > chi_max
    if over.any():
        graze = chi_f <= chi_max * (1.0 + _SONIC_GRAZE)
        hard = over & ~graze
        if hard.any() or not clamp_sonic:
            margin = chi_max - chi_f
            worst = int(np.argmin(margin))
            raise SupersonicChi(
                f"{int(np.count_nonzero(over))} state(s) exceed the sonic "
                f"maximum; worst chi={chi_f[worst]:.6g} vs "
                f"chi_max={chi_max[worst]:.6g}",
                margin=margin.reshape(shape) if shape else float(margin[0]),
            )
        warnings.warn(
            f"{int(np.count_nonzero(over))} state(s) within rounding of the "
            "sonic maximum; clamped to the sonic density",
            SonicProximityWarning,
        )
        chi_f[over] = chi_max[over]

    def h_and_slope(rho):
        h = B * rho**2 - A * rho ** (gamma + 1.0)
        hp = 2.0 * B * rho - (gamma + 1.0) * A * rho**gamma
        return h, hp

    lo = rho_sonic.copy()
    hi = rho_max.copy()
    rho = np.clip(rho_max * (1.0 - chi_f / (2.0 * chi_max)), lo, hi)
    for _ in range(80):
        h, hp = h_and_slope(rho)
        resid = h - chi_f
        # maintain the bracket: h decreases in rho on the subsonic branch
        lo = np.where(resid > 0.0, np.maximum(lo, rho), lo)
        hi = np.where(resid < 0.0, np.minimum(hi, rho), hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = resid / hp
        new = rho - step
        fallback = ~np.isfinite(new) | (new < lo) | (new > hi)
        new = np.where(fallback, 0.5 * (lo + hi), new)
        done = np.abs(new - rho) <= 1e-14 * np.abs(new)
        rho = new
        if done.all():
            break

    h, hp = h_and_slope(rho)
    scale = np.maximum(B * rho**2, 1e-300)
    bad = np.abs(h - chi_f) > _DENSITY_RTOL * scale
    if bad.any():
        worst = int(np.argmax(np.abs(h - chi_f) / scale))
        raise SupersonicChi(
            f"density solve failed to meet tolerance at {int(bad.sum())} "
            f"state(s); worst relative residual "
            f"{abs(h[worst] - chi_f[worst]) / scale[worst]:.3e}"
        )

    denom = (gamma + 1.0) * A * rho**gamma - 2.0 * B * rho  # = -dh/drho > 0
    rho_chi = -1.0 / denom
    rho_psi = (B1 * rho - A1 * rho**gamma) / (
        (gamma + 1.0) * A * rho ** (gamma - 1.0) - 2.0 * B
    )
    sonic_margin = (gamma - 1.0) * A * rho ** (gamma + 1.0) - 2.0 * chi_f

    def shaped(a):
        return a.reshape(shape) if shape else float(a[0])

    return DensityState(
        gamma=gamma,
        chi=shaped(chi_f),
        psi=shaped(psi_f.copy()),
        rho=shaped(rho),
        rho_chi=shaped(rho_chi),
        rho_psi=shaped(rho_psi),
        sonic_margin=shaped(sonic_margin),
        A=shaped(A),
        A_d1=shaped(A1),
        A_d2=shaped(A2),
        B=shaped(B),
        B_d1=shaped(B1),
        B_d2=shaped(B2),
    )


def pressure(density: DensityState) -> Array:
    """Polytropic pressure recovery p = ((gamma-1)/gamma) A rho^gamma."""
    g = density.gamma
    return (g - 1.0) / g * density.A * np.asarray(density.rho) ** g


@dataclass(frozen=True)
class CoefficientBundle:
    """Second-order coefficients, the source term, and the partials the
    linearization integrates along the state segment."""

    a11: Array
    a12: Array
    a22: Array
    F: Array
    da22_dpsi: Array
    dF_dpsi: Array
    da22_dgrad1: Array
    da22_dgrad2: Array
    dF_dgrad1: Array
    dF_dgrad2: Array


def coefficients(density: DensityState, grad_psi: Tuple[Array, Array]) -> CoefficientBundle:
    """Populate the coefficient bundle at states (psi, grad psi).

    All partials are closed-form chain rules through rho(chi, psi) and the
    streamline functions cached on the density state.
    """
    g = density.gamma
    rho = np.asarray(density.rho, dtype=float)
    A, A1, A2 = density.A, density.A_d1, density.A_d2
    B, B1, B2 = density.B, density.B_d1, density.B_d2
    rho_chi = density.rho_chi
    rho_psi = density.rho_psi
    p1, p2 = (np.asarray(c, dtype=float) for c in grad_psi)

    q = (g - 1.0) * A * rho ** (g + 1.0)  # = c^2 rho^2
    a11 = q - p2**2
    a12 = p1 * p2
    a22 = q - p1**2

    G = g * A * B1 - 2.0 * A1 * B + A * A1 * rho ** (g - 1.0)
    kappa = (g - 1.0) / g
    F = kappa * rho ** (g + 3.0) * G

    # partials of a22 = (g-1) A rho^(g+1) - p1^2
    dq_drho = (g - 1.0) * (g + 1.0) * A * rho**g
    da22_dpsi = (g - 1.0) * A1 * rho ** (g + 1.0) + dq_drho * rho_psi
    da22_dgrad1 = dq_drho * rho_chi * p1 - 2.0 * p1
    da22_dgrad2 = dq_drho * rho_chi * p2

    # partials of F = kappa rho^(g+3) G(psi, rho)
    dF_drho = kappa * (
        (g + 3.0) * rho ** (g + 2.0) * G + (g - 1.0) * A * A1 * rho ** (2.0 * g + 1.0)
    )
    G_psi = (
        g * (A1 * B1 + A * B2)
        - 2.0 * (A2 * B + A1 * B1)
        + (A1**2 + A * A2) * rho ** (g - 1.0)
    )
    dF_dpsi = dF_drho * rho_psi + kappa * rho ** (g + 3.0) * G_psi
    dF_dgrad1 = dF_drho * rho_chi * p1
    dF_dgrad2 = dF_drho * rho_chi * p2

    return CoefficientBundle(
        a11=a11,
        a12=a12,
        a22=a22,
        F=F,
        da22_dpsi=da22_dpsi,
        dF_dpsi=dF_dpsi,
        da22_dgrad1=da22_dgrad1,
        da22_dgrad2=da22_dgrad2,
        dF_dgrad1=dF_dgrad1,
        dF_dgrad2=dF_dgrad2,
    )
