"""Forward/inverse spherical-harmonic transform and target truncation.

A target pattern on the sphere enters the pipeline either as point samples
on a SphereRule or as a coefficient file; both normalize into
AngularCoefficients.  Truncation degree selection keeps the discarded tail
below half of the requested pattern tolerance.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .quadrature import SphereRule, inner_s2, norm_s2
from .specfun import all_harmonics, iter_lm, lm_index


@dataclass(eq=False)
class AngularCoefficients:
    """Band-limited function on S^2 as coefficients f_{l,m}, 0 <= l <= L.

    Values are packed flat in lm_index order (l*l + l + m).
    """

    L: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != ((self.L + 1) ** 2,):
            raise ValueError(
                f"expected {(self.L + 1) ** 2} coefficients for L={self.L}, "
                f"got {self.values.shape}")

    @classmethod
    def zeros(cls, L: int) -> "AngularCoefficients":
        return cls(L, np.zeros((L + 1) ** 2, dtype=complex))

    @classmethod
    def from_terms(cls, L: int, terms: dict) -> "AngularCoefficients":
        c = cls.zeros(L)
        for (l, m), v in terms.items():
            c.values[lm_index(l, m)] = v
        return c

    def get(self, l: int, m: int) -> complex:
        return complex(self.values[lm_index(l, m)])

    def norm(self) -> float:
        """L2(S^2) norm; equals sqrt(sum |f_{l,m}|^2) by orthonormality."""
        return float(np.linalg.norm(self.values))


def basis_matrix(rule: SphereRule, L: int) -> np.ndarray:
    """Samples of every Y_{l,m}, l <= L, on the rule; shape ((L+1)^2, n)."""
    return all_harmonics(L, rule.theta, rule.phi)


def harmonic_samples(rule: SphereRule, l: int, m: int) -> np.ndarray:
    from .specfun import sph_harm_samples
    return sph_harm_samples(l, m, rule.theta, rule.phi)


def analyze(rule: SphereRule, samples, L: int) -> AngularCoefficients:
    """Coefficients f_{l,m} = (f, Y_{l,m})_{L2(S2)} by quadrature.

    Requires a rule exact for harmonic products up to degree L, otherwise
    the projections alias.
    """
    if L < 0:
        raise ValueError("L must be >= 0")
    if rule.exact_degree < L:
        raise ValueError(
            f"rule of exact_degree {rule.exact_degree} cannot analyze up to "
            f"L={L}; need exact_degree >= L")
    samples = np.asarray(samples, dtype=complex)
    if samples.shape != (rule.n,):
        raise ValueError("sample length does not match the rule")
    basis = basis_matrix(rule, L)
    coeffs = basis.conj() @ (rule.weights * samples)
    return AngularCoefficients(L, coeffs)


def synthesize(coeffs: AngularCoefficients, rule: SphereRule) -> np.ndarray:
    """Pointwise sum over (l, m) of f_{l,m} Y_{l,m} at the rule's nodes."""
    basis = basis_matrix(rule, coeffs.L)
    return coeffs.values @ basis


@dataclass(frozen=True)
class TruncationChoice:
    """Outcome of the truncation-degree search."""

    L: int
    tail_norm: float
    attained: bool


def choose_L(rule: SphereRule, samples, epsilon: float, L_max: int) -> TruncationChoice:
    """Smallest L with tail norm sqrt(||f||^2 - ||f_L||^2) < epsilon/2.

    The total norm is taken on the sampling rule (Parseval on the same
    quadrature).  When even L_max cannot reach the target, returns L_max
    with ``attained=False`` rather than failing.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be > 0")
    coeffs = analyze(rule, samples, L_max)
    total_sq = float(np.sum(rule.weights * np.abs(np.asarray(samples)) ** 2))
    target = 0.5 * epsilon
    running = 0.0
    for l in range(L_max + 1):
        sl = slice(lm_index(l, -l), lm_index(l, l) + 1)
        running += float(np.sum(np.abs(coeffs.values[sl]) ** 2))
        tail = math.sqrt(max(0.0, total_sq - running))
        if tail < target:
            return TruncationChoice(L=l, tail_norm=tail, attained=True)
    return TruncationChoice(L=L_max, tail_norm=tail, attained=False)


def save_coefficients(path, coeffs: AngularCoefficients) -> None:
    """Plain-text coefficient file: header '# L=<int>', lines 'l m re im'."""
    with open(path, "w") as f:
        f.write(f"# L={coeffs.L}\n")
        for l, m in iter_lm(coeffs.L):
            v = coeffs.get(l, m)
            f.write(f"{l} {m} {v.real:.17g} {v.imag:.17g}\n")


def load_coefficients(path) -> AngularCoefficients:
    with open(path) as f:
        first = f.readline()
        match = re.match(r"#\s*L\s*=\s*(\d+)\s*$", first)
        if not match:
            raise ValueError(f"{path}: missing '# L=<int>' header line")
        L = int(match.group(1))
        coeffs = AngularCoefficients.zeros(L)
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'l m re im'")
            l, m = int(parts[0]), int(parts[1])
            if l > L or abs(m) > l or l < 0:
                raise ValueError(f"{path}:{lineno}: index ({l},{m}) invalid for L={L}")
            coeffs.values[lm_index(l, m)] = complex(float(parts[2]), float(parts[3]))
    return coeffs
