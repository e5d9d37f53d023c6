"""Deterministic quadrature on [0, R], on the unit sphere, and on the ball.

The sphere rule is a product of Gauss-Legendre in cos(theta) with a uniform
azimuthal grid.  A rule built with ``make_sphere_rule(d)`` integrates the
product of any two spherical harmonics of degree <= d exactly (equivalently,
any spherical polynomial of degree <= 2d), which is what makes the discrete
harmonic analysis in this package exact at quadrature level.

Rules are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .specfun import UnitVector


@dataclass(frozen=True, eq=False)
class RadialRule:
    """Gauss rule on (0, R) with strictly interior, increasing nodes."""

    nodes: np.ndarray
    weights: np.ndarray
    R: float

    @property
    def n(self) -> int:
        return self.nodes.shape[0]


def make_radial_rule(n: int, R: float) -> RadialRule:
    """Gauss-Legendre rule mapped to [0, R]; exact for polynomials of
    degree <= 2n - 1."""
    if n < 1:
        raise ValueError(f"need n >= 1 radial nodes, got {n}")
    if not (R > 0.0 and math.isfinite(R)):
        raise ValueError(f"radius R={R} must be positive and finite")
    x, w = leggauss(n)
    nodes = 0.5 * R * (x + 1.0)
    weights = 0.5 * R * w
    return RadialRule(nodes=nodes, weights=weights, R=float(R))


@dataclass(frozen=True, eq=False)
class SphereRule:
    """Product quadrature on S^2: Gauss in cos(theta) x uniform in phi.

    ``exact_degree`` d guarantees exact integration of Y_{l,m} conj(Y_{l',m'})
    for all l, l' <= d.  Node ordering is theta-major: index = i_theta * n_phi
    + i_phi, with theta descending (Gauss nodes in cos(theta) ascending).
    """

    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    exact_degree: int
    n_theta: int
    n_phi: int
    xyz: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def directions(self) -> list[UnitVector]:
        return [UnitVector(float(t), float(p)) for t, p in zip(self.theta, self.phi)]


def make_sphere_rule(degree: int) -> SphereRule:
    """Sphere rule exact for harmonic products up to the given degree.

    Uses degree+1 Gauss nodes in cos(theta) and 2*degree+1 uniform azimuths;
    the uniform phi grid gives exact discrete orthogonality in the order m,
    which the synthesis identities rely on.
    """
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    n_t = degree + 1
    n_p = 2 * degree + 1
    t, wt = leggauss(n_t)
    theta_1d = np.arccos(t)
    phi_1d = 2.0 * math.pi * np.arange(n_p) / n_p
    theta = np.repeat(theta_1d, n_p)
    phi = np.tile(phi_1d, n_t)
    weights = np.repeat(wt * (2.0 * math.pi / n_p), n_p)
    st = np.sin(theta)
    xyz = np.column_stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])
    return SphereRule(theta=theta, phi=phi, weights=weights,
                      exact_degree=degree, n_theta=n_t, n_phi=n_p, xyz=xyz)


@dataclass(frozen=True, eq=False)
class BallGrid:
    """Tensor quadrature over the ball B_R: radial x angular.

    Node ordering is radial-major: node = i_radial * n_angular + j_angular.
    Combined weight at a node is w_radial * r^2 * w_angular, so plain
    weighted sums approximate volume integrals.
    """

    radial: RadialRule
    angular: SphereRule
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    radii: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.radial.n, self.angular.n)

    @property
    def R(self) -> float:
        return self.radial.R


def make_ball_grid(radial: RadialRule, angular: SphereRule) -> BallGrid:
    """Tensor-product grid with combined weights."""
    r = radial.nodes
    nodes = (r[:, None, None] * angular.xyz[None, :, :]).reshape(-1, 3)
    weights = ((radial.weights * r * r)[:, None] * angular.weights[None, :]).reshape(-1)
    radii = np.repeat(r, angular.n)
    return BallGrid(radial=radial, angular=angular, nodes=nodes,
                    weights=weights, radii=radii)


@dataclass(eq=False)
class BallField:
    """Complex samples of a function on the nodes of a BallGrid."""

    grid: BallGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n,):
            raise ValueError(
                f"field has {self.values.shape} values for a grid of {self.grid.n} nodes")

    def norm(self) -> float:
        """L2 norm over the ball."""
        return math.sqrt(float(np.sum(self.grid.weights * np.abs(self.values) ** 2)))

    def with_values(self, values) -> "BallField":
        return BallField(self.grid, np.asarray(values, dtype=complex))


def constant_field(grid: BallGrid, value: complex = 1.0) -> BallField:
    return BallField(grid, np.full(grid.n, value, dtype=complex))


def _check_samples(rule: SphereRule, a) -> np.ndarray:
    a = np.asarray(a)
    if a.shape != (rule.n,):
        raise ValueError(f"samples of shape {a.shape} do not match rule with {rule.n} nodes")
    return a


def inner_s2(rule: SphereRule, a, b) -> complex:
    """L2(S^2) inner product sum_j w_j a_j conj(b_j)."""
    a = _check_samples(rule, a)
    b = _check_samples(rule, b)
    return complex(np.sum(rule.weights * a * np.conj(b)))


def norm_s2(rule: SphereRule, a) -> float:
    a = _check_samples(rule, a)
    return math.sqrt(max(0.0, float(np.sum(rule.weights * np.abs(a) ** 2))))


def inner_ball(grid: BallGrid, a, b) -> complex:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != (grid.n,) or b.shape != (grid.n,):
        raise ValueError("sample length does not match the grid")
    return complex(np.sum(grid.weights * a * np.conj(b)))


def save_field(path, field: BallField, header: dict | None = None) -> None:
    """Write a field as a plain-text table 'x y z re im' with a grid
    descriptor header.  Output is deterministic for byte-identical reruns."""
    grid = field.grid
    with open(path, "w") as f:
        f.write(f"# n_radial = {grid.radial.n}\n")
        f.write(f"# sphere_degree = {grid.angular.exact_degree}\n")
        f.write(f"# R = {grid.R!r}\n")
        if header:
            for key, val in header.items():
                f.write(f"# {key} = {val}\n")
        f.write("# columns: x y z re im\n")
        for p, v in zip(grid.nodes, field.values):
            f.write(f"{p[0]:.16e} {p[1]:.16e} {p[2]:.16e} {v.real:.16e} {v.imag:.16e}\n")
