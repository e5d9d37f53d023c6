import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from scatdesign import quadrature as quad
from scatdesign import sht, synthesis
from scatdesign.specfun import iter_lm, spherical_bessel_ladder


@pytest.fixture(scope="module")
def radial():
    return quad.make_radial_rule(24, 1.0)


@pytest.fixture(scope="module")
def grid(radial):
    return quad.make_ball_grid(radial, quad.make_sphere_rule(8))


def test_gamma_monopole_closed_form(radial):
    # 1 / int_0^1 r^2 j_0(r)^2 dr = 1 / (1/2 - sin(2)/4)
    val = synthesis.gamma_l(0, 1.0, radial)
    assert abs(val - 1.0 / (0.5 - math.sin(2.0) / 4.0)) <= 1e-10
    assert abs(val - 3.667362) <= 1e-5


def test_gamma_small_wavenumber_limit(radial):
    # j_0 -> 1, denominator -> R^3/3
    val = synthesis.gamma_l(0, 1e-4, radial)
    assert_allclose(val, 3.0, rtol=1e-7)


def test_gamma_grows_with_degree(radial):
    g0 = synthesis.gamma_l(0, 1.0, radial)
    g5 = synthesis.gamma_l(5, 1.0, radial)
    assert g5 > g0
    # doubled-resolution quadrature oracle
    fine = quad.make_radial_rule(48, 1.0)
    assert_allclose(g5, synthesis.gamma_l(5, 1.0, fine), rtol=1e-8)


def test_radial_profiles_monopole(radial):
    c = sht.AngularCoefficients.from_terms(0, {(0, 0): 1.0})
    prof = synthesis.radial_profiles(c, 1.0, radial)
    g0 = synthesis.gamma_l(0, 1.0, radial)
    j0 = np.sin(radial.nodes) / radial.nodes
    assert_allclose(prof.channel(0, 0), -g0 * j0, rtol=1e-12)


def test_radial_profiles_zero_target(radial):
    c = sht.AngularCoefficients.zeros(3)
    prof = synthesis.radial_profiles(c, 1.0, radial)
    assert np.all(prof.values == 0)


def test_moment_identity_random_target(radial):
    rng = np.random.default_rng(31)
    L = 8
    vals = rng.normal(size=(L + 1) ** 2) + 1j * rng.normal(size=(L + 1) ** 2)
    c = sht.AngularCoefficients(L, vals)
    prof = synthesis.radial_profiles(c, 1.0, radial)
    for l, m in iter_lm(L):
        got = synthesis.moment_check(prof, l, m)
        assert abs(got - c.get(l, m)) <= 1e-10 * max(abs(c.get(l, m)), 1.0)


def test_moment_zero_profiles(radial):
    prof = synthesis.radial_profiles(sht.AngularCoefficients.zeros(2), 1.0, radial)
    assert synthesis.moment_check(prof, 1, 0) == 0


def test_moment_unchanged_by_null_component(radial):
    c = sht.AngularCoefficients.from_terms(2, {(0, 0): 1.0, (2, 1): 0.5 - 0.25j})
    base = synthesis.radial_profiles(c, 1.0, radial)
    shifted = synthesis.radial_profiles(
        c, 1.0, radial, null_coeffs={(0, 0): 10.0, (2, 1): 3.0 + 1.0j})
    assert np.max(np.abs(shifted.values - base.values)) > 1e-3  # really different
    for l, m in ((0, 0), (2, 1)):
        assert abs(synthesis.moment_check(shifted, l, m) - c.get(l, m)) <= 1e-10


def test_orthogonal_profile_constant_seed(radial):
    perp = synthesis.orthogonal_profile(0, 1.0, radial, np.ones(radial.n))
    j0 = np.sin(radial.nodes) / radial.nodes
    w2 = radial.weights * radial.nodes ** 2
    moment = np.sum(w2 * j0 * perp)
    scale = math.sqrt(float(np.sum(w2 * np.abs(perp) ** 2)))
    assert abs(moment) <= 1e-12 * scale
    # projection coefficient matches the direct formula
    coef = np.sum(w2 * j0) / np.sum(w2 * j0 * j0)
    assert_allclose(perp, 1.0 - coef * j0, rtol=1e-12)
    # scaling keeps the zero moment
    assert abs(np.sum(w2 * j0 * (5.5 * perp))) <= 1e-11 * scale


def test_orthogonal_profile_degenerate_seed(radial):
    j3 = np.array([spherical_bessel_ladder(3, r)[3] for r in radial.nodes])
    with pytest.raises(ValueError):
        synthesis.orthogonal_profile(3, 1.0, radial, 2.0 * j3)


def test_assemble_zero_and_constant_channel(radial, grid):
    prof = synthesis.radial_profiles(sht.AngularCoefficients.zeros(1), 1.0, radial)
    f = synthesis.assemble_h(prof, grid)
    assert f.norm() == 0.0
    prof.values[0] = 1.0  # h_{0,0}(r) = 1
    f = synthesis.assemble_h(prof, grid)
    assert np.max(np.abs(f.values - 1.0 / math.sqrt(4 * math.pi))) <= 1e-13


def test_assemble_parseval(radial, grid):
    rng = np.random.default_rng(32)
    L = 3
    c = sht.AngularCoefficients(
        L, rng.normal(size=(L + 1) ** 2) + 1j * rng.normal(size=(L + 1) ** 2))
    prof = synthesis.radial_profiles(c, 1.0, radial)
    field = synthesis.assemble_h(prof, grid)
    w2 = radial.weights * radial.nodes ** 2
    channel_sq = float(np.sum(w2 * np.abs(prof.values) ** 2))
    assert abs(field.norm() ** 2 - channel_sq) <= 1e-10 * channel_sq


def test_assemble_rule_mismatch(radial):
    other = quad.make_ball_grid(quad.make_radial_rule(10, 1.0),
                                quad.make_sphere_rule(8))
    prof = synthesis.radial_profiles(sht.AngularCoefficients.zeros(1), 1.0, radial)
    with pytest.raises(ValueError):
        synthesis.assemble_h(prof, other)


def test_amplitude_of_unit_density(grid):
    # -(1/4pi) int_B exp(-i b.y) dy = -(sin kR - kR cos kR)/k^3 at k = 1
    one = quad.constant_field(grid)
    amp = synthesis.amplitude_from_h(one, 1.0, grid.angular)
    expect = -(math.sin(1.0) - math.cos(1.0))
    assert np.max(np.abs(amp - expect)) <= 1e-10
    zero = quad.constant_field(grid, 0.0)
    assert np.max(np.abs(synthesis.amplitude_from_h(zero, 1.0, grid.angular))) == 0.0


def test_amplitude_at_matches_samples(grid):
    rng = np.random.default_rng(33)
    field = quad.BallField(grid, rng.normal(size=grid.n) + 1j * rng.normal(size=grid.n))
    amp = synthesis.amplitude_from_h(field, 1.0, grid.angular)
    for j in (0, 17, grid.angular.n - 1):
        single = synthesis.amplitude_at(field, 1.0, grid.angular.xyz[j])
        assert abs(single - amp[j]) <= 1e-12


def test_far_field_reproduces_target(radial, grid):
    rng = np.random.default_rng(34)
    L = 4
    vals = rng.normal(size=(L + 1) ** 2) + 1j * rng.normal(size=(L + 1) ** 2)
    c = sht.AngularCoefficients(L, vals / np.linalg.norm(vals))
    prof = synthesis.radial_profiles(c, 1.0, radial)
    field = synthesis.assemble_h(prof, grid)
    amp = synthesis.amplitude_from_h(field, 1.0, grid.angular)
    target = sht.synthesize(c, grid.angular)
    assert quad.norm_s2(grid.angular, amp - target) <= 1e-8


def test_far_field_null_space_invariance(radial, grid):
    c = sht.AngularCoefficients.from_terms(2, {(0, 0): 1.0, (2, -1): 0.7j})
    base = synthesis.assemble_h(synthesis.radial_profiles(c, 1.0, radial), grid)
    null = {(l, m): 10.0 * 1j ** (l + m) for l, m in iter_lm(2)}
    shifted = synthesis.assemble_h(
        synthesis.radial_profiles(c, 1.0, radial, null_coeffs=null), grid)
    a0 = synthesis.amplitude_from_h(base, 1.0, grid.angular)
    a1 = synthesis.amplitude_from_h(shifted, 1.0, grid.angular)
    assert quad.norm_s2(grid.angular, a1 - a0) <= 1e-8


def test_target_to_amplitude_is_linear(radial, grid):
    rng = np.random.default_rng(35)
    L = 2

    def amp_of(vals):
        c = sht.AngularCoefficients(L, vals)
        field = synthesis.assemble_h(synthesis.radial_profiles(c, 1.0, radial), grid)
        return synthesis.amplitude_from_h(field, 1.0, grid.angular)

    f = rng.normal(size=9) + 1j * rng.normal(size=9)
    g = rng.normal(size=9) + 1j * rng.normal(size=9)
    a, b = 1.3 - 0.2j, -0.7 + 1.1j
    lhs = amp_of(a * f + b * g)
    rhs = a * amp_of(f) + b * amp_of(g)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


# ---------------------------------------------------------------------------
# least-squares fit
# ---------------------------------------------------------------------------

def _bessel_basis(radial, grid, k, L):
    # plain j_l(kr) Y_{l,m} source fields, one per channel
    from scatdesign.specfun import lm_index
    jmat = synthesis._bessel_matrix(radial, k, L)
    fields = []
    for l, m in iter_lm(L):
        values = np.zeros(((L + 1) ** 2, radial.n), dtype=complex)
        values[lm_index(l, m)] = jmat[l]
        prof = synthesis.RadialProfiles(L=L, k=k, rule=radial, values=values)
        fields.append(synthesis.assemble_h(prof, grid))
    return fields


def test_lsq_zero_target(radial, grid):
    basis = _bessel_basis(radial, grid, 1.0, 1)
    fit = synthesis.lsq_fit(grid.angular, np.zeros(grid.angular.n), basis, 1.0)
    assert np.max(np.abs(fit.coeffs)) <= 1e-10
    assert fit.residual <= 1e-10


def test_lsq_single_exact_member(radial, grid):
    basis = _bessel_basis(radial, grid, 1.0, 0)
    g1 = synthesis.amplitude_from_h(basis[0], 1.0, grid.angular)
    fit = synthesis.lsq_fit(grid.angular, g1, basis, 1.0)
    assert abs(fit.coeffs[0] - 1.0) <= 1e-8
    assert fit.residual <= 1e-10


def test_lsq_recovers_minimal_norm_solution(radial, grid):
    rng = np.random.default_rng(36)
    L = 2
    vals = rng.normal(size=9) + 1j * rng.normal(size=9)
    c = sht.AngularCoefficients(L, vals)
    f = sht.synthesize(c, grid.angular)
    basis = _bessel_basis(radial, grid, 1.0, L)
    # exact recovery needs the unregularized solve: the channel scale spread
    # (gamma_l spans ~1e3 at kR = 1) turns the default ridge into an O(1e-8)
    # perturbation of the large channels
    fit = synthesis.lsq_fit(grid.angular, f, basis, 1.0, ridge=0.0)
    assert fit.residual <= 1e-8
    direct = synthesis.assemble_h(synthesis.radial_profiles(c, 1.0, radial), grid)
    assert quad.BallField(grid, fit.field.values - direct.values).norm() <= 1e-6
    ridged = synthesis.lsq_fit(grid.angular, f, basis, 1.0)
    assert ridged.residual <= 1e-6


def test_lsq_nested_residual_monotone(radial, grid):
    f = np.exp(np.cos(grid.angular.theta)).astype(complex)
    basis = _bessel_basis(radial, grid, 1.0, 2)
    last = math.inf
    for n in (1, 4, 9):
        fit = synthesis.lsq_fit(grid.angular, f, basis[:n], 1.0)
        assert fit.residual <= last + 1e-12
        last = fit.residual


def test_lsq_singular_without_ridge(radial, grid):
    basis = _bessel_basis(radial, grid, 1.0, 0)
    doubled = [basis[0], basis[0]]
    f = np.ones(grid.angular.n, dtype=complex)
    with pytest.raises(np.linalg.LinAlgError):
        synthesis.lsq_fit(grid.angular, f, doubled, 1.0, ridge=0.0)
    fit = synthesis.lsq_fit(grid.angular, f, doubled, 1.0)  # default ridge copes
    assert np.isfinite(fit.residual)
