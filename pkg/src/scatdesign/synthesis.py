"""Construction of the source density h on the ball from a truncated target.

Given target coefficients f_{l,m}, each angular channel receives the radial
profile

    h_{l,m}(r) = (-i)^{-l-2} f_{l,m} gamma_l j_l(k r) + c_{l,m} h_perp(r),

where gamma_l = 1 / int_0^R r^2 j_l(k r)^2 dr and h_perp has vanishing
j_l-moment.  With all c_{l,m} = 0 this is the minimal-norm solution of the
per-channel moment equations, and the far-field map

    A(b) = -(1/4pi) int_B exp(-ik b.y) h(y) dy

returns exactly the truncated target (at quadrature level, because gamma_l
is computed with the same radial rule used everywhere else).

Channel computations are independent; everything here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quadrature import BallField, BallGrid, RadialRule, SphereRule, inner_s2, norm_s2
from .sht import AngularCoefficients, basis_matrix
from .specfun import ipow, iter_lm, lm_index, spherical_bessel_ladder


def _bessel_matrix(rule: RadialRule, k: float, L: int) -> np.ndarray:
    """j_l(k r_i) for 0 <= l <= L on the rule's nodes, shape (L+1, n)."""
    cols = [spherical_bessel_ladder(L, k * r) for r in rule.nodes]
    return np.array(cols).T


def gamma_l(l: int, k: float, rule: RadialRule) -> float:
    """Reciprocal of the quadrature value of int_0^R r^2 j_l(k r)^2 dr.

    Deliberately uses the same rule as the rest of the synthesis so the
    discrete moment identity is exact, not merely quadrature-accurate.
    """
    if k <= 0.0:
        raise ValueError("wavenumber k must be > 0")
    j = _bessel_matrix(rule, k, l)[l]
    denom = float(np.sum(rule.weights * rule.nodes ** 2 * j * j))
    if denom <= 0.0:
        raise ValueError(f"degenerate radial normalization for l={l}")
    return 1.0 / denom


@dataclass(eq=False)
class RadialProfiles:
    """Per-channel sampled radial profiles h_{l,m}(r_i); (L+1)^2 channels."""

    L: int
    k: float
    rule: RadialRule
    values: np.ndarray  # shape ((L+1)^2, n_radial)

    def __post_init__(self):
        expected = ((self.L + 1) ** 2, self.rule.n)
        if self.values.shape != expected:
            raise ValueError(f"profile array shape {self.values.shape}, expected {expected}")

    def channel(self, l: int, m: int) -> np.ndarray:
        return self.values[lm_index(l, m)]


def orthogonal_profile(l: int, k: float, rule: RadialRule, seed) -> np.ndarray:
    """Radial function with zero j_l-moment: the seed minus its projection
    onto j_l(k r) in the r^2-weighted (bilinear) pairing.

    The seed may be a callable of r or an array on the rule's nodes; a seed
    proportional to j_l(k r) is degenerate and rejected.
    """
    j = _bessel_matrix(rule, k, l)[l]
    s = np.asarray(seed(rule.nodes) if callable(seed) else seed, dtype=complex)
    if s.shape != (rule.n,):
        raise ValueError("seed shape does not match the radial rule")
    w2 = rule.weights * rule.nodes ** 2
    coef = np.sum(w2 * j * s) / np.sum(w2 * j * j)
    perp = s - coef * j
    seed_scale = math.sqrt(float(np.sum(w2 * np.abs(s) ** 2)))
    perp_scale = math.sqrt(float(np.sum(w2 * np.abs(perp) ** 2)))
    if perp_scale <= 1e-10 * seed_scale:
        raise ValueError("seed is (numerically) proportional to j_l; no orthogonal part left")
    return perp


def radial_profiles(coeffs: AngularCoefficients, k: float, rule: RadialRule,
                    null_coeffs: dict | None = None) -> RadialProfiles:
    """Minimal-norm radial profiles for every channel of the target.

    ``null_coeffs`` maps (l, m) to a constant multiplying the canonical
    zero-moment profile for that degree (built from a constant seed); the
    far-field output is invariant under any such addition.
    """
    L = coeffs.L
    jmat = _bessel_matrix(rule, k, L)
    w2 = rule.weights * rule.nodes ** 2
    values = np.zeros(((L + 1) ** 2, rule.n), dtype=complex)
    perp_cache: dict[int, np.ndarray] = {}
    for l, m in iter_lm(L):
        f_lm = coeffs.get(l, m)
        j = jmat[l]
        gamma = 1.0 / float(np.sum(w2 * j * j))
        # (-i)^(-l-2) = i^(l+2), applied by exact quadrant rotation.
        values[lm_index(l, m)] = ipow(l + 2) * f_lm * gamma * j
        if null_coeffs:
            c = null_coeffs.get((l, m), 0.0)
            if c != 0.0:
                if l not in perp_cache:
                    perp_cache[l] = orthogonal_profile(l, k, rule, np.ones(rule.n))
                values[lm_index(l, m)] += c * perp_cache[l]
    return RadialProfiles(L=L, k=k, rule=rule, values=values)


def moment_check(profiles: RadialProfiles, l: int, m: int) -> complex:
    """(-i)^(l+2) int_0^R r^2 j_l(k r) h_{l,m}(r) dr by quadrature; recovers
    the target coefficient f_{l,m} for minimal-norm profiles."""
    rule = profiles.rule
    j = _bessel_matrix(rule, profiles.k, l)[l]
    w2 = rule.weights * rule.nodes ** 2
    return ipow(-(l + 2)) * complex(np.sum(w2 * j * profiles.channel(l, m)))


def assemble_h(profiles: RadialProfiles, grid: BallGrid) -> BallField:
    """Pointwise sum over channels h_{l,m}(r) Y_{l,m}(y0) on the ball grid."""
    if grid.radial is not profiles.rule and not (
            grid.radial.n == profiles.rule.n
            and np.allclose(grid.radial.nodes, profiles.rule.nodes)):
        raise ValueError("grid radial rule does not match the profiles' rule")
    ylm = basis_matrix(grid.angular, profiles.L)       # (channels, n_ang)
    vals = profiles.values.T @ ylm                     # (n_rad, n_ang)
    return BallField(grid, vals.reshape(-1))


def amplitude_from_h(field: BallField, k: float, angular: SphereRule) -> np.ndarray:
    """Far-field samples A(b_j) = -(1/4pi) sum_n W_n exp(-ik b_j.y_n) h_n."""
    grid = field.grid
    wh = grid.weights * field.values
    out = np.empty(angular.n, dtype=complex)
    # chunk over directions to bound the phase-matrix size
    chunk = max(1, int(2e7 // max(grid.n, 1)))
    for start in range(0, angular.n, chunk):
        beta = angular.xyz[start:start + chunk]
        phase = np.exp(-1j * k * (grid.nodes @ beta.T))
        out[start:start + chunk] = phase.T @ wh
    return -out / (4.0 * math.pi)


def amplitude_at(field: BallField, k: float, beta_xyz) -> complex:
    """Far-field value at a single direction."""
    grid = field.grid
    beta_xyz = np.asarray(beta_xyz, dtype=float)
    phase = np.exp(-1j * k * (grid.nodes @ beta_xyz))
    return complex(-np.sum(grid.weights * field.values * phase) / (4.0 * math.pi))


@dataclass(frozen=True)
class LeastSquaresFit:
    """Result of fitting the target with far fields of given basis sources."""

    coeffs: np.ndarray
    field: BallField
    residual: float


def lsq_fit(rule: SphereRule, f_samples, basis: list[BallField], k: float,
            ridge: float | None = None) -> LeastSquaresFit:
    """Best L2(S^2) fit of the target by far fields of the basis sources.

    Solves the normal equations of min ||f - sum_j c_j g_j|| where g_j is
    the far field of basis source phi_j.  ``ridge`` shifts the Gram matrix
    by ridge*I; the default 1e-12 * trace/n guards near-dependent bases.
    Passing ridge=0 requests the unregularized solve, which raises
    numpy.linalg.LinAlgError on a singular Gram matrix.
    """
    if not basis:
        raise ValueError("need at least one basis field")
    f_samples = np.asarray(f_samples, dtype=complex)
    g = np.array([amplitude_from_h(phi, k, rule) for phi in basis])  # (nb, n_ang)
    gw = g * rule.weights
    gram = gw.conj() @ g.T           # gram[i, j] = <g_j, g_i> conj-linear in i
    rhs = gw.conj() @ f_samples
    nb = len(basis)
    if ridge is None:
        ridge = 1e-12 * float(np.trace(gram).real) / nb
    if ridge > 0.0:
        gram = gram + ridge * np.eye(nb)
    else:
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
            raise np.linalg.LinAlgError(
                f"Gram matrix is numerically singular (cond ~ {cond:.2e}); "
                "pass a positive ridge to regularize")
    c = np.linalg.solve(gram, rhs)
    combined = np.zeros(basis[0].grid.n, dtype=complex)
    for cj, phi in zip(c, basis):
        combined += cj * phi.values
    fitted = BallField(basis[0].grid, combined)
    residual = norm_s2(rule, f_samples - c @ g)
    return LeastSquaresFit(coeffs=c, field=fitted, residual=residual)
