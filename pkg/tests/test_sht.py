import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from scatdesign import quadrature as quad
from scatdesign import sht
from scatdesign.specfun import lm_index


@pytest.fixture(scope="module")
def rule():
    return quad.make_sphere_rule(14)


def test_analyze_basis_element(rule):
    f = sht.harmonic_samples(rule, 2, 1)
    c = sht.analyze(rule, f, 4)
    expect = np.zeros(25, dtype=complex)
    expect[lm_index(2, 1)] = 1.0
    assert np.max(np.abs(c.values - expect)) <= 1e-10


def test_analyze_zero(rule):
    c = sht.analyze(rule, np.zeros(rule.n), 3)
    assert np.all(c.values == 0)


def test_analyze_linear_combination(rule):
    y00 = sht.harmonic_samples(rule, 0, 0)
    y1m1 = sht.harmonic_samples(rule, 1, -1)
    c = sht.analyze(rule, 3.0 * y00 + (2 - 1j) * y1m1, 2)
    assert abs(c.get(0, 0) - 3.0) <= 1e-12
    assert abs(c.get(1, -1) - (2 - 1j)) <= 1e-12
    assert abs(c.get(2, 2)) <= 1e-12


def test_roundtrip_band_limited(rule):
    rng = np.random.default_rng(21)
    L = 6
    vals = rng.normal(size=(L + 1) ** 2) + 1j * rng.normal(size=(L + 1) ** 2)
    c = sht.AngularCoefficients(L, vals)
    f = sht.synthesize(c, rule)
    c2 = sht.analyze(rule, f, L)
    assert np.max(np.abs(c2.values - vals)) <= 1e-10
    f2 = sht.synthesize(c2, rule)
    assert quad.norm_s2(rule, f2 - f) <= 1e-10


def test_parseval(rule):
    rng = np.random.default_rng(22)
    L = 5
    vals = rng.normal(size=(L + 1) ** 2) + 1j * rng.normal(size=(L + 1) ** 2)
    c = sht.AngularCoefficients(L, vals)
    f = sht.synthesize(c, rule)
    sample_sq = quad.norm_s2(rule, f) ** 2
    coef_sq = float(np.sum(np.abs(vals) ** 2))
    assert abs(sample_sq - coef_sq) <= 1e-10 * coef_sq
    assert_allclose(c.norm() ** 2, coef_sq, rtol=1e-14)


def test_synthesize_constant(rule):
    c = sht.AngularCoefficients.from_terms(0, {(0, 0): math.sqrt(4 * math.pi)})
    f = sht.synthesize(c, rule)
    assert np.max(np.abs(f - 1.0)) <= 1e-13


@given(a_re=st.floats(-2, 2), a_im=st.floats(-2, 2), b_re=st.floats(-2, 2))
@settings(max_examples=25, deadline=None)
def test_analyze_is_linear(a_re, a_im, b_re):
    rule = quad.make_sphere_rule(8)
    rng = np.random.default_rng(23)
    f = rng.normal(size=rule.n) + 1j * rng.normal(size=rule.n)
    g = rng.normal(size=rule.n)
    a = complex(a_re, a_im)
    lhs = sht.analyze(rule, a * f + b_re * g, 3).values
    rhs = (a * sht.analyze(rule, f, 3).values
           + b_re * sht.analyze(rule, g, 3).values)
    scale = max(1.0, np.max(np.abs(rhs)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


def test_analyze_insufficient_degree():
    rule = quad.make_sphere_rule(4)
    with pytest.raises(ValueError):
        sht.analyze(rule, np.zeros(rule.n), 5)


def test_choose_l_band_limited(rule):
    rng = np.random.default_rng(24)
    vals = rng.normal(size=25) + 1j * rng.normal(size=25)
    f = sht.synthesize(sht.AngularCoefficients(4, vals), rule)
    choice = sht.choose_L(rule, f, 1e-6, 10)
    assert choice.attained
    assert choice.L <= 4
    assert choice.tail_norm < 5e-7


def test_choose_l_monopole(rule):
    f = sht.harmonic_samples(rule, 0, 0)
    choice = sht.choose_L(rule, f, 1e-6, 8)
    assert choice.L == 0 and choice.attained


def test_choose_l_smooth_against_tail_oracle():
    # axial exponential exp(cos theta); tails from a finer rule agree
    rule = quad.make_sphere_rule(16)
    f = np.exp(np.cos(rule.theta)).astype(complex)
    eps = 1e-3
    choice = sht.choose_L(rule, f, eps, 12)
    fine = quad.make_sphere_rule(24)
    ff = np.exp(np.cos(fine.theta)).astype(complex)
    coeffs = sht.analyze(fine, ff, 16)
    total = float(np.sum(fine.weights * np.abs(ff) ** 2))
    running, oracle_L = 0.0, None
    for l in range(17):
        sl = slice(lm_index(l, -l), lm_index(l, l) + 1)
        running += float(np.sum(np.abs(coeffs.values[sl]) ** 2))
        if math.sqrt(max(total - running, 0.0)) < eps / 2 and oracle_L is None:
            oracle_L = l
    assert choice.attained
    assert choice.L == oracle_L


def test_choose_l_monotone_in_epsilon(rule):
    f = np.exp(np.cos(rule.theta)).astype(complex)
    last = 10 ** 9
    for eps in (1e-5, 1e-4, 1e-3, 1e-2, 1e-1):
        choice = sht.choose_L(rule, f, eps, 12)
        assert choice.L <= last
        last = choice.L


def test_choose_l_unattainable_flag(rule):
    f = np.exp(3 * np.cos(rule.theta)).astype(complex)
    choice = sht.choose_L(rule, f, 1e-10, 2)
    assert not choice.attained
    assert choice.L == 2
    assert choice.tail_norm >= 0.5e-10


def test_coefficient_file_roundtrip(tmp_path):
    rng = np.random.default_rng(25)
    vals = rng.normal(size=16) + 1j * rng.normal(size=16)
    c = sht.AngularCoefficients(3, vals)
    path = tmp_path / "coeffs.txt"
    sht.save_coefficients(path, c)
    text = path.read_text()
    assert text.startswith("# L=3\n")
    c2 = sht.load_coefficients(path)
    assert c2.L == 3
    assert np.max(np.abs(c2.values - vals)) == 0.0


def test_coefficient_file_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("no header\n0 0 1 0\n")
    with pytest.raises(ValueError):
        sht.load_coefficients(bad)
    bad.write_text("# L=1\n0 0 1\n")
    with pytest.raises(ValueError):
        sht.load_coefficients(bad)
    bad.write_text("# L=1\n2 0 1 0\n")
    with pytest.raises(ValueError):
        sht.load_coefficients(bad)
