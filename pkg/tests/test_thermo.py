"""Density inversion and coefficient bundle against independent oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from substream.errors import NegativeChi, SonicProximityWarning, SupersonicChi
from substream.farfield import (
    algebraic_perturbation,
    build_far_field,
    build_stream_limit,
    exp_perturbation,
)
from substream.thermo import (
    CoefficientBundle,
    coefficients,
    pressure,
    solve_density,
    sonic_parameters,
)

CANON = dict(gamma=1.4, p0=1.0, rho0=1.0, m_star=0.5, m0=0.1, eps=1e-3)

# frozen: chi of the uniform background, m0^2 / 2
CHI_BG = 0.005
# frozen: -1 / ((gamma+1) A0 - 2 B0) = -1 / 1.39
RHO_CHI_BG = -1.0 / 1.39


def constant_stream():
    return build_stream_limit(build_far_field(**CANON))


def sheared_stream(amp=0.3):
    far = build_far_field(
        **CANON,
        m_inf=exp_perturbation(0.1, amp, 1.0),
        rho_inf=algebraic_perturbation(1.0, 0.15, 1.5),
    )
    return build_stream_limit(far)


def bisect_h_root(A, B, gamma, chi, lo, hi, iters=200):
    """Independent bracketing oracle for B rho^2 - A rho^(gamma+1) = chi."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        h = B * mid**2 - A * mid ** (gamma + 1.0)
        if h > chi:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def golden_max_h(A, B, gamma, lo=0.2, hi=1.2, iters=300):
    """Golden-section oracle for the largest kinetic term on the branch."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0

    def h(r):
        return B * r**2 - A * r ** (gamma + 1.0)

    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    for _ in range(iters):
        if h(c) > h(d):
            b = d
        else:
            a = c
        c, d = b - invphi * (b - a), a + invphi * (b - a)
    return h(0.5 * (a + b))


def test_background_density_is_exact():
    state = solve_density(CHI_BG, 0.3, constant_stream())
    assert state.rho == pytest.approx(1.0, abs=1e-12)
    assert state.rho_chi == pytest.approx(RHO_CHI_BG, abs=1e-10)
    assert state.rho_psi == 0.0
    # h identity and margin sign
    h = 3.505 * state.rho**2 - 3.5 * state.rho**2.4
    assert h == pytest.approx(CHI_BG, rel=1e-12)
    assert state.sonic_margin > 0


def test_stagnation_density_matches_bisection_oracle():
    state = solve_density(0.0, 0.0, constant_stream())
    oracle = bisect_h_root(3.5, 3.505, 1.4, 0.0, 0.9, 1.2)
    assert state.rho == pytest.approx(oracle, abs=1e-10)
    assert state.rho == pytest.approx((3.505 / 3.5) ** 2.5, abs=1e-12)
    assert state.rho == pytest.approx(1.003575, abs=1e-6)


def test_sonic_maximum_and_supersonic_rejection():
    rho_sonic, rho_max, chi_max = sonic_parameters(3.5, 3.505, 1.4)
    oracle = golden_max_h(3.5, 3.505, 1.4)
    assert chi_max == pytest.approx(oracle, abs=1e-10)
    assert chi_max == pytest.approx(0.23642, abs=1e-4)
    assert rho_sonic < rho_max
    with pytest.raises(SupersonicChi) as exc:
        solve_density(0.3, 0.0, constant_stream())
    assert exc.value.margin < 0


def test_negative_chi_rejected():
    with pytest.raises(NegativeChi):
        solve_density(-1e-8, 0.0, constant_stream())


def test_sonic_graze_clamps_with_warning():
    rho_sonic, _, chi_max = sonic_parameters(3.5, 3.505, 1.4)
    with pytest.warns(SonicProximityWarning):
        state = solve_density(chi_max * (1.0 + 1e-14), 0.0, constant_stream())
    assert state.rho == pytest.approx(rho_sonic, rel=1e-6)
    # h is quadratically flat at the sonic root, so the density (and hence the
    # margin) is only resolvable to sqrt(machine eps) there
    assert state.sonic_margin == pytest.approx(0.0, abs=1e-7)


def _random_states(stream, n=100, seed=0, chi_hi=0.8):
    rng = np.random.default_rng(seed)
    x2 = rng.uniform(0.05, 5.0, n)
    psi = stream.l(x2)
    _, _, chi_max = sonic_parameters(stream.A(psi), stream.B(psi), stream.far.gamma)
    chi = rng.uniform(0.0, chi_hi, n) * chi_max
    return chi, psi


def test_density_partials_match_central_differences():
    stream = sheared_stream()
    chi, psi = _random_states(stream)
    state = solve_density(chi, psi, stream)

    h = 1e-6 * np.maximum(chi, 0.01)
    rho_p = solve_density(chi + h, psi, stream).rho
    rho_m = solve_density(chi - h + 2 * h * (chi < h), psi, stream).rho
    # one-sided where chi - h would go negative
    mask = chi >= h
    fd = np.where(mask, (rho_p - rho_m) / (2 * h), 0.0)
    np.testing.assert_allclose(fd[mask], state.rho_chi[mask], rtol=1e-5)

    hp = 1e-6 * (1.0 + np.abs(psi))
    rho_pp = solve_density(chi, psi + hp, stream).rho
    rho_pm = solve_density(chi, psi - hp, stream).rho
    fd_psi = (rho_pp - rho_pm) / (2 * hp)
    np.testing.assert_allclose(fd_psi, state.rho_psi, rtol=1e-5, atol=1e-12)


def test_background_coefficients_frozen():
    stream = constant_stream()
    state = solve_density(CHI_BG, 0.01, stream)
    bundle = coefficients(state, (0.0, 0.1))
    assert bundle.a11 == pytest.approx(1.39, abs=1e-12)
    assert bundle.a22 == pytest.approx(1.40, abs=1e-12)
    assert bundle.a12 == 0.0
    assert bundle.F == 0.0
    det = bundle.a11 * bundle.a22 - bundle.a12**2
    assert det == pytest.approx(1.946, abs=1e-12)
    assert pressure(state) == pytest.approx(1.0, abs=1e-12)


def test_source_vanishes_identically_for_constant_far_field():
    stream = constant_stream()
    chi, psi = _random_states(stream, n=40, seed=3)
    state = solve_density(chi, psi, stream)
    g1 = np.sqrt(2.0 * chi) * 0.6
    g2 = np.sqrt(2.0 * chi - g1**2)
    bundle = coefficients(state, (g1, g2))
    np.testing.assert_array_equal(bundle.F, 0.0)
    np.testing.assert_array_equal(bundle.dF_dpsi, 0.0)


def _states_with_gradients(stream, n=100, seed=7):
    rng = np.random.default_rng(seed)
    chi, psi = _random_states(stream, n=n, seed=seed, chi_hi=0.7)
    angle = rng.uniform(0.0, 2 * np.pi, n)
    g1 = np.sqrt(2.0 * chi) * np.cos(angle)
    g2 = np.sqrt(2.0 * chi) * np.sin(angle)
    return psi, g1, g2


def test_ellipticity_identity_at_random_states():
    stream = sheared_stream()
    psi, g1, g2 = _states_with_gradients(stream)
    chi = 0.5 * (g1**2 + g2**2)
    state = solve_density(chi, psi, stream)
    bundle = coefficients(state, (g1, g2))
    det = bundle.a11 * bundle.a22 - bundle.a12**2
    q = 0.4 * state.A * state.rho**2.4
    np.testing.assert_allclose(det, q * (q - 2.0 * chi), rtol=1e-10)
    assert np.all(det > 0)


def test_coefficient_partials_match_central_differences():
    stream = sheared_stream()
    psi, g1, g2 = _states_with_gradients(stream)

    def bundle_at(psi_v, g1_v, g2_v) -> CoefficientBundle:
        chi = 0.5 * (g1_v**2 + g2_v**2)
        return coefficients(solve_density(chi, psi_v, stream), (g1_v, g2_v))

    base = bundle_at(psi, g1, g2)

    hp = 1e-6 * (1.0 + np.abs(psi))
    plus, minus = bundle_at(psi + hp, g1, g2), bundle_at(psi - hp, g1, g2)
    np.testing.assert_allclose(
        (plus.a22 - minus.a22) / (2 * hp), base.da22_dpsi, rtol=1e-5, atol=1e-10
    )
    np.testing.assert_allclose(
        (plus.F - minus.F) / (2 * hp), base.dF_dpsi, rtol=1e-5, atol=1e-10
    )

    hg = 1e-7
    plus, minus = bundle_at(psi, g1 + hg, g2), bundle_at(psi, g1 - hg, g2)
    np.testing.assert_allclose(
        (plus.a22 - minus.a22) / (2 * hg), base.da22_dgrad1, rtol=1e-5, atol=1e-8
    )
    np.testing.assert_allclose(
        (plus.F - minus.F) / (2 * hg), base.dF_dgrad1, rtol=1e-5, atol=1e-8
    )
    plus, minus = bundle_at(psi, g1, g2 + hg), bundle_at(psi, g1, g2 - hg)
    np.testing.assert_allclose(
        (plus.a22 - minus.a22) / (2 * hg), base.da22_dgrad2, rtol=1e-5, atol=1e-8
    )
    np.testing.assert_allclose(
        (plus.F - minus.F) / (2 * hg), base.dF_dgrad2, rtol=1e-5, atol=1e-8
    )


@settings(max_examples=40, deadline=None)
@given(
    chi_frac=st.floats(0.0, 0.95),
    x2=st.floats(0.0, 8.0),
    shear=st.booleans(),
)
def test_subsonic_branch_properties(chi_frac, x2, shear):
    stream = sheared_stream() if shear else constant_stream()
    psi = stream.l(x2)
    rho_sonic, rho_max, chi_max = sonic_parameters(
        stream.A(psi), stream.B(psi), 1.4
    )
    state = solve_density(chi_frac * chi_max, psi, stream)
    assert rho_sonic < state.rho <= rho_max * (1 + 1e-12)
    assert state.rho_chi < 0
    assert state.sonic_margin > 0 or chi_frac > 0.999
    h = state.B * state.rho**2 - state.A * state.rho**2.4
    assert h == pytest.approx(float(state.chi), rel=1e-11, abs=1e-14)
