"""Special functions in the conventions used throughout this package.

Conventions
-----------
* Spherical Bessel functions ``j_l(x) = sqrt(pi/2x) J_{l+1/2}(x)`` (regular
  at the origin).
* Legendre polynomials from the three-term recurrence, normalized so that
  ``P_l(1) = 1``.
* Associated Legendre functions WITHOUT the Condon-Shortley sign,
  ``P_{l,m}(t) = (1-t^2)^{m/2} d^m P_l / dt^m``.
* Spherical harmonics carry an extra ``i^l`` on top of the familiar
  orthonormal harmonics, and the ``(-1)^m`` sign is attached only for
  ``m >= 0``:

      Y_{l,m}(theta, phi) = (-1)^{(m+|m|)/2} i^l
                            * sqrt((2l+1)(l-|m|)! / (4 pi (l+|m|)!))
                            * exp(i m phi) * P_{l,|m|}(cos theta)

  With this phase, Y_{l,m}(-a) = (-1)^l Y_{l,m}(a) and
  conj(Y_{l,m}(a)) = (-1)^{l+m} Y_{l,-m}(a), and the plane-wave expansion

      exp(-ik b.y) = sum_{l,m} 4 pi i^l j_l(k|y|) Y_{l,m}(-b) conj(Y_{l,m}(y0))

  holds with y0 = y/|y|.

All functions here are pure and hold no mutable state; they may be called
concurrently from any number of threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Largest Bessel degree the downward recurrence is dimensioned for.
BESSEL_L_CAP = 128

_SQRT4PI = math.sqrt(4.0 * math.pi)


def ipow(n: int) -> complex:
    """i**n for integer n by exact quadrant rotation (never via cmath.exp)."""
    return (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)[n % 4]


# ---------------------------------------------------------------------------
# spherical Bessel functions
# ---------------------------------------------------------------------------

def _bessel_series(l: int, x: float) -> float:
    # Ascending series x^l/(2l+1)!! * sum_j (-x^2/2)^j / (j! (2l+3)...(2l+2j+1)).
    # Only used for small x where a handful of terms reach machine precision.
    lead = 1.0
    for n in range(1, l + 1):
        lead *= x / (2 * n + 1)
    if lead == 0.0:
        # true value underflows double precision
        return 0.0 if l > 0 else 1.0
    term = 1.0
    acc = 1.0
    z = 0.5 * x * x
    for j in range(1, 40):
        term *= -z / (j * (2 * l + 2 * j + 1))
        acc += term
        if abs(term) <= 1e-18 * abs(acc):
            break
    return lead * acc


def _bessel_miller_ladder(l_max: int, x: float) -> np.ndarray:
    # Downward recurrence from well above max(l_max, x), normalized with
    # sum_n (2n+1) j_n(x)^2 = 1.  Stable for every order; the upward
    # recurrence would blow up for l > x.
    l_top = max(l_max, int(x)) + 40
    out = np.zeros(l_max + 1)
    jp = 0.0                      # j_{n+1}
    jc = 1e-30                    # j_n seed, rescaled away by the sum rule
    total = (2 * l_top + 1) * jc * jc
    for n in range(l_top, 0, -1):
        if n <= l_max:
            out[n] = jc
        jm = (2 * n + 1) / x * jc - jp
        jp, jc = jc, jm
        total += (2 * (n - 1) + 1) * jc * jc
        if abs(jc) > 1e130:
            # Keep squares inside double range.  Entries flushed to zero by
            # the rescale sit >=260 orders below the dominant low orders.
            jp *= 1e-130
            jc *= 1e-130
            total *= 1e-260
            out *= 1e-130
    out[0] = jc
    # The sum rule fixes the magnitude only; take the sign from whichever of
    # j_0, j_1 is farther from a zero crossing.
    j0t = math.sin(x) / x
    j1t = math.sin(x) / (x * x) - math.cos(x) / x
    if abs(j0t) >= abs(j1t):
        sign = math.copysign(1.0, j0t) * math.copysign(1.0, jc)
    else:
        sign = math.copysign(1.0, j1t) * math.copysign(1.0, jp)
    out *= sign / math.sqrt(total)
    return out


def spherical_bessel_j(l: int, x: float) -> float:
    """Regular spherical Bessel function j_l(x) for x >= 0, 0 <= l <= 128.

    Small arguments go through the ascending series; everything else
    through a sum-rule-normalized downward (Miller) recurrence, which keeps
    full relative accuracy at large order where the values underflow the
    leading term of the upward recurrence.
    """
    if l < 0 or l > BESSEL_L_CAP:
        raise ValueError(f"order l={l} outside supported range [0, {BESSEL_L_CAP}]")
    if not math.isfinite(x) or x < 0.0:
        raise ValueError(f"argument x={x} must be finite and >= 0")
    if x < max(1e-3, 1e-4 * l):
        return _bessel_series(l, x)
    if l == 0:
        return math.sin(x) / x
    return float(_bessel_miller_ladder(l, x)[l])


def spherical_bessel_ladder(l_max: int, x: float) -> np.ndarray:
    """All of j_0(x) .. j_{l_max}(x) in one sweep."""
    if l_max < 0 or l_max > BESSEL_L_CAP:
        raise ValueError(f"l_max={l_max} outside supported range [0, {BESSEL_L_CAP}]")
    if not math.isfinite(x) or x < 0.0:
        raise ValueError(f"argument x={x} must be finite and >= 0")
    cutoff = max(1e-3, 1e-4 * l_max)
    if x < cutoff:
        return np.array([_bessel_series(l, x) for l in range(l_max + 1)])
    return _bessel_miller_ladder(l_max, x)


# ---------------------------------------------------------------------------
# Legendre functions
# ---------------------------------------------------------------------------

def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-12):
        raise ValueError("Legendre argument must satisfy |t| <= 1")
    return np.clip(t, -1.0, 1.0)


def legendre_p(l: int, t):
    """Legendre polynomial P_l(t) on [-1, 1], scalar or array argument."""
    if l < 0:
        raise ValueError("degree l must be >= 0")
    t = _check_t(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    pm = np.ones_like(t)
    if l == 0:
        return float(pm[0]) if scalar else pm
    pc = t.copy()
    for n in range(1, l):
        pm, pc = pc, ((2 * n + 1) * t * pc - n * pm) / (n + 1)
    return float(pc[0]) if scalar else pc


def assoc_legendre(l: int, m: int, t):
    """Associated Legendre P_{l,m}(t) = (1-t^2)^{m/2} d^m P_l/dt^m, no
    Condon-Shortley sign."""
    if l < 0 or m < 0 or m > l:
        raise ValueError(f"need 0 <= m <= l, got l={l}, m={m}")
    t = _check_t(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    s = np.sqrt(np.maximum(0.0, 1.0 - t * t))
    # P_{m,m} = (2m-1)!! s^m, then upward in degree.
    pmm = np.ones_like(t)
    for n in range(1, m + 1):
        pmm *= (2 * n - 1) * s
    if l == m:
        return float(pmm[0]) if scalar else pmm
    pm1 = (2 * m + 1) * t * pmm
    if l == m + 1:
        return float(pm1[0]) if scalar else pm1
    for n in range(m + 1, l):
        pmm, pm1 = pm1, ((2 * n + 1) * t * pm1 - (n + m) * pmm) / (n - m + 1)
    return float(pm1[0]) if scalar else pm1


# ---------------------------------------------------------------------------
# directions and harmonic indices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HarmonicIndex:
    """Degree/order pair (l, m) with l >= 0 and -l <= m <= l."""

    l: int
    m: int

    def __post_init__(self):
        if self.l < 0:
            raise ValueError(f"degree l={self.l} must be >= 0")
        if abs(self.m) > self.l:
            raise ValueError(f"order m={self.m} violates |m| <= l={self.l}")


def lm_index(l: int, m: int) -> int:
    """Flat packing of (l, m) as l*l + l + m; the inverse of iter_lm order."""
    return l * l + l + m


def iter_lm(L: int):
    """Deterministic (l, m) iteration order matching lm_index."""
    for l in range(L + 1):
        for m in range(-l, l + 1):
            yield l, m


@dataclass(frozen=True)
class UnitVector:
    """Direction on the unit sphere, stored as (theta, phi).

    theta is the polar angle in [0, pi], phi the azimuth in [0, 2 pi).
    Conversion to and from Cartesian coordinates round-trips to 1e-14.
    """

    theta: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= math.pi + 1e-12):
            raise ValueError(f"theta={self.theta} outside [0, pi]")
        if not (0.0 <= self.phi < 2.0 * math.pi + 1e-12):
            raise ValueError(f"phi={self.phi} outside [0, 2 pi)")

    @classmethod
    def from_xyz(cls, v) -> "UnitVector":
        v = np.asarray(v, dtype=float)
        n = float(np.linalg.norm(v))
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        x, y, z = v / n
        theta = math.atan2(math.hypot(x, y), z)
        phi = math.atan2(y, x) % (2.0 * math.pi)
        return cls(theta, phi)

    @property
    def xyz(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi),
                         st * math.sin(self.phi),
                         math.cos(self.theta)])

    def antipode(self) -> "UnitVector":
        return UnitVector(math.pi - self.theta, (self.phi + math.pi) % (2.0 * math.pi))

    def dot(self, other: "UnitVector") -> float:
        return float(self.xyz @ other.xyz)


# ---------------------------------------------------------------------------
# spherical harmonics
# ---------------------------------------------------------------------------

def _phase_sign(m: int) -> float:
    # (-1)^{(m+|m|)/2}: (-1)^m for m >= 0, +1 for m < 0.
    return -1.0 if (m > 0 and m % 2 == 1) else 1.0


def sph_harm(idx: HarmonicIndex, direction: UnitVector) -> complex:
    """Spherical harmonic Y_{l,m}(theta, phi) in the module convention."""
    l, m = idx.l, idx.m
    am = abs(m)
    norm = math.sqrt((2 * l + 1) * math.factorial(l - am)
                     / (4.0 * math.pi * math.factorial(l + am)))
    plm = assoc_legendre(l, am, math.cos(direction.theta))
    return (_phase_sign(m) * ipow(l) * norm * plm
            * complex(math.cos(m * direction.phi), math.sin(m * direction.phi)))


def _normalized_plm_table(L: int, t: np.ndarray) -> np.ndarray:
    """Orthonormalized associated Legendre values, shape (L+1, L+1, n).

    Entry [l, m] holds sqrt((2l+1)(l-m)!/(4 pi (l+m)!)) P_{l,m}(t) for
    0 <= m <= l; the fully normalized recurrence keeps every intermediate
    O(1), so degrees far beyond the package's needs stay accurate.
    """
    t = np.asarray(t, dtype=float)
    s = np.sqrt(np.maximum(0.0, 1.0 - t * t))
    n = t.shape[0]
    tab = np.zeros((L + 1, L + 1, n))
    tab[0, 0] = 1.0 / _SQRT4PI
    for m in range(1, L + 1):
        tab[m, m] = math.sqrt((2 * m + 1) / (2.0 * m)) * s * tab[m - 1, m - 1]
    for m in range(L):
        tab[m + 1, m] = math.sqrt(2 * m + 3) * t * tab[m, m]
        for l in range(m + 2, L + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            tab[l, m] = a * (t * tab[l - 1, m] - b * tab[l - 2, m])
    return tab


def sph_harm_samples(l: int, m: int, theta, phi) -> np.ndarray:
    """Vectorized Y_{l,m} over arrays of angles (same convention as sph_harm)."""
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid harmonic index l={l}, m={m}")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    plm = _normalized_plm_table(l, np.cos(theta))[l, abs(m)]
    return _phase_sign(m) * ipow(l) * plm * np.exp(1j * m * phi)


def all_harmonics(L: int, theta, phi) -> np.ndarray:
    """Matrix of Y_{l,m} samples, shape ((L+1)^2, n), rows in lm_index order."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    tab = _normalized_plm_table(L, np.cos(theta))
    out = np.empty(((L + 1) ** 2, theta.shape[0]), dtype=complex)
    for l in range(L + 1):
        il = ipow(l)
        out[lm_index(l, 0)] = il * tab[l, 0]
        for m in range(1, l + 1):
            e = np.exp(1j * m * phi)
            out[lm_index(l, m)] = _phase_sign(m) * il * tab[l, m] * e
            out[lm_index(l, -m)] = il * tab[l, m] * np.conj(e)
    return out


def plane_wave_partial_sum(k: float, beta: UnitVector, y, L: int) -> complex:
    """Truncation at degree L of the expansion of exp(-ik beta.y) into
    spherical waves; converges to the exponential as L grows."""
    if L < 0:
        raise ValueError("L must be >= 0")
    y = np.asarray(y, dtype=float)
    r = float(np.linalg.norm(y))
    # j_l(0) = delta_{l0} kills every l > 0 term at the origin, so the
    # direction of y is immaterial there.
    y0 = UnitVector.from_xyz(y) if r > 0.0 else UnitVector(0.0, 0.0)
    j = spherical_bessel_ladder(L, k * r)
    mb = beta.antipode()
    yb = all_harmonics(L, [mb.theta, y0.theta], [mb.phi, y0.phi])
    acc = 0.0 + 0.0j
    for l in range(L + 1):
        block = 0.0 + 0.0j
        for m in range(-l, l + 1):
            row = yb[lm_index(l, m)]
            block += row[0] * np.conj(row[1])
        acc += 4.0 * math.pi * ipow(l) * j[l] * block
    return complex(acc)
