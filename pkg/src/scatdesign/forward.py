"""Independent forward verification: solve u = u0 - int g q u for a given
potential, form the far field from h = q u, and compare against the target.

The Nystrom discretization lives on the same ball grid as the synthesis and
regularization stages and reuses their singularity-subtraction constant, so
a (q, u) pair manufactured there satisfies the discrete system here exactly.
The solver contract is matrix-free Krylov (restart-free GMRES, iteration cap
500); when memory allows, the operator assembles its dense matrix once so
each iteration is a single BLAS matvec.

Oracles for weak and spherically symmetric potentials (first-order Born and
the partial-wave series for a constant ball potential) are built on scipy's
Bessel routines, deliberately independent of the package's own special
functions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres
from scipy.special import spherical_in, spherical_jn, spherical_yn

from .quadrature import BallField, BallGrid, SphereRule, norm_s2
from .reconstruction import _kernel_block, ball_potential, incident_wave
from .specfun import UnitVector, legendre_p
from .synthesis import amplitude_at, amplitude_from_h

_FOURPI = 4.0 * math.pi

# Dense-operator assembly is skipped above this many matrix bytes and the
# apply falls back to chunked on-the-fly kernel evaluation.
DENSE_CACHE_LIMIT = 1.0e9


class LSOperator:
    """Discretized map v -> v + int g q v on the nodes of a ball grid.

    The diagonal uses the subtraction constant S(x) = int_D g(x, y) dy, the
    same closed-form quantity the reconstruction stage uses, so both stages
    share one discrete operator.
    """

    def __init__(self, grid: BallGrid, k: float, q_values,
                 cache_bytes: float = DENSE_CACHE_LIMIT):
        if k <= 0.0:
            raise ValueError("wavenumber k must be > 0")
        self.grid = grid
        self.k = float(k)
        self.q = np.asarray(q_values, dtype=complex)
        if self.q.shape != (grid.n,):
            raise ValueError("potential samples do not match the grid")
        self.n = grid.n
        self._self_tol = 1e-12 * max(grid.R, 1.0)
        s_nodes = ball_potential(k, grid.R, grid.radii)
        self._dense = None
        if 16.0 * self.n * self.n <= cache_bytes:
            kern = self._kernel_rows(np.arange(self.n))
            rowg = kern @ grid.weights
            kern *= (grid.weights * self.q)[None, :]
            kern[np.arange(self.n), np.arange(self.n)] = self.q * (s_nodes - rowg)
            self._dense = kern
        else:
            self._diag = self.q * (s_nodes - self._rowg())

    def _kernel_rows(self, idx):
        kern, _ = _kernel_block(self.grid.nodes[idx], self.grid.nodes,
                                self.k, self._self_tol)
        return kern

    def _rowg(self):
        out = np.empty(self.n, dtype=complex)
        chunk = max(1, int(1.2e7 // self.n))
        for start in range(0, self.n, chunk):
            idx = np.arange(start, min(start + chunk, self.n))
            out[idx] = self._kernel_rows(idx) @ self.grid.weights
        return out

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        if self._dense is not None:
            return v + self._dense @ v
        wqv = self.grid.weights * self.q * v
        out = v + self._diag * v
        chunk = max(1, int(1.2e7 // self.n))
        for start in range(0, self.n, chunk):
            idx = np.arange(start, min(start + chunk, self.n))
            out[idx] += self._kernel_rows(idx) @ wqv
        return out

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator((self.n, self.n), matvec=self.apply, dtype=complex)


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    final_residual: float
    converged: bool


def solve_scattering(q: BallField, k: float, alpha: UnitVector,
                     tol: float = 1e-8, maxiter: int = 500,
                     cache_bytes: float = DENSE_CACHE_LIMIT) -> tuple[BallField, SolveStats]:
    """Solve the discrete scattering system for the field u of potential q.

    Restart-free GMRES on the matrix-free operator; non-convergence within
    the iteration cap is reported in the stats, with the partial result
    returned rather than raised.
    """
    if tol <= 0.0:
        raise ValueError("tol must be > 0")
    max_im = float(np.max(q.values.imag)) if q.grid.n else 0.0
    if max_im > 0.0:
        warnings.warn(
            f"max Im q = {max_im:.3e} > 0: uniqueness of the scattering "
            "solution is not guaranteed", stacklevel=2)
    op = LSOperator(q.grid, k, q.values, cache_bytes=cache_bytes)
    u0 = incident_wave(q.grid.nodes, k, alpha)
    iters = 0

    def _count(_):
        nonlocal iters
        iters += 1

    sol, info = gmres(op.as_linear_operator(), u0, x0=u0, rtol=tol, atol=0.0,
                      restart=min(maxiter, q.grid.n), maxiter=1,
                      callback=_count, callback_type="pr_norm")
    resid = float(np.linalg.norm(op.apply(sol) - u0) / np.linalg.norm(u0))
    stats = SolveStats(iterations=iters, final_residual=resid, converged=info == 0)
    if info != 0:
        warnings.warn(
            f"forward solve did not reach tol={tol} within {maxiter} "
            f"iterations (residual {resid:.3e}); partial result returned",
            stacklevel=2)
    return BallField(q.grid, sol), stats


def amplitude_from_q(q: BallField, u: BallField, k: float,
                     angular: SphereRule) -> np.ndarray:
    """Far-field samples from the product density h = q u."""
    if q.grid is not u.grid and q.grid.n != u.grid.n:
        raise ValueError("q and u live on different grids")
    return amplitude_from_h(BallField(q.grid, q.values * u.values), k, angular)


def born_amplitude(q: BallField, k: float, alpha: UnitVector,
                   beta: UnitVector) -> complex:
    """First-order amplitude -(1/4pi) int exp(-ik b.y) q exp(ik a.y) dy by
    quadrature on the field's grid."""
    grid = q.grid
    phase = k * (grid.nodes @ (alpha.xyz - beta.xyz))
    wave = np.cos(phase) + 1j * np.sin(phase)
    return complex(-np.sum(grid.weights * q.values * wave) / _FOURPI)


def partial_wave_amplitude(q0: float, R: float, k: float, cos_gamma: float,
                           l_max: int = 60) -> complex:
    """Exact far field of the constant potential q0 on the ball B_R, at
    scattering angle cos_gamma = a.b, by interior/exterior wave matching.

    The series is summed until terms fall below 1e-16 of the running value
    (tail below 1e-10 long before the default cap).  For q0 > k^2 the
    interior wave is evanescent and modified Bessel functions take over.
    """
    if k <= 0.0 or R <= 0.0:
        raise ValueError("need k > 0 and R > 0")
    if abs(cos_gamma) > 1.0 + 1e-12:
        raise ValueError("cos_gamma must lie in [-1, 1]")
    if q0 == 0.0:
        return 0.0 + 0.0j
    kr = k * R
    kappa_sq = k * k - q0
    acc = 0.0 + 0.0j
    tiny_run = 0
    for l in range(l_max + 1):
        jl = spherical_jn(l, kr)
        jlp = spherical_jn(l, kr, derivative=True)
        hl = jl + 1j * spherical_yn(l, kr)
        hlp = jlp + 1j * spherical_yn(l, kr, derivative=True)
        if kappa_sq > 1e-12 * k * k:
            kap = math.sqrt(kappa_sq)
            ji = spherical_jn(l, kap * R)
            jip = spherical_jn(l, kap * R, derivative=True)
            num = kap * jip * jl - k * ji * jlp
            den = kap * jip * hl - k * ji * hlp
        elif kappa_sq < -1e-12 * k * k:
            kap = math.sqrt(-kappa_sq)
            ii = spherical_in(l, kap * R)
            iip = spherical_in(l, kap * R, derivative=True)
            gam = kap * iip / ii
            num = gam * jl - k * jlp
            den = gam * hl - k * hlp
        else:
            # interior wavenumber ~ 0: regular interior solution ~ r^l
            num = l * jl - kr * jlp
            den = l * hl - kr * hlp
        t_l = -num / den
        term = (2 * l + 1) * t_l * legendre_p(l, float(cos_gamma))
        acc += term
        if abs(term) < 1e-16 * max(1e-300, abs(acc)):
            tiny_run += 1
            if tiny_run >= 2 and l > kr + 2:
                break
        else:
            tiny_run = 0
    return complex(-1j / k * acc)


def amplitude_difference_residual(q1: BallField, q2: BallField, k: float,
                                  alpha: UnitVector, beta: UnitVector,
                                  tol: float = 1e-10) -> float:
    """Relative mismatch of the two-potential amplitude-difference identity

        -4 pi [A_{q1}(b) - A_{q2}(b)] = int (q1 - q2) u1(., a) u2(., -b) dy,

    with u1 the scattering field of q1 at incidence a and u2 that of q2 at
    incidence -b.  Both sides are evaluated at matched resolution."""
    grid = q1.grid
    if grid.n != q2.grid.n:
        raise ValueError("potentials live on different grids")
    u1, s1 = solve_scattering(q1, k, alpha, tol=tol)
    u2a, s2 = solve_scattering(q2, k, alpha, tol=tol)
    u2m, s3 = solve_scattering(q2, k, beta.antipode(), tol=tol)
    for s in (s1, s2, s3):
        if not s.converged:
            warnings.warn("identity residual computed from a non-converged solve",
                          stacklevel=2)
    a1 = amplitude_at(BallField(grid, q1.values * u1.values), k, beta.xyz)
    a2 = amplitude_at(BallField(grid, q2.values * u2a.values), k, beta.xyz)
    lhs = -_FOURPI * (a1 - a2)
    rhs = complex(np.sum(grid.weights * (q1.values - q2.values)
                         * u1.values * u2m.values))
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-14)


def residual_norm(rule: SphereRule, amplitude, target) -> float:
    """L2(S^2) distance between computed and prescribed patterns."""
    amplitude = np.asarray(amplitude, dtype=complex)
    target = np.asarray(target, dtype=complex)
    if amplitude.shape != (rule.n,) or target.shape != (rule.n,):
        raise ValueError("samples do not match the rule")
    return norm_s2(rule, amplitude - target)
