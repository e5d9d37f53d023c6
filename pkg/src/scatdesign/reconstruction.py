"""From the source density h to the potential: u = u0 - int g h, q = h/u,
and the bounded regularization that excises the near-zero set of u.

The kernel g(x,y) = exp(ik|x-y|) / (4 pi |x-y|) is weakly singular; node
self-interactions are handled by singularity subtraction,

    int_D g(x,y) h(y) dy = h(x) S(x) + sum_n W_n g(x, y_n) (h(y_n) - h(x)),

with S(x) = int_D g(x,y) dy.  For the ball the one-point constant S(x) has
a closed form (only the l = 0 spherical mode of the kernel survives the
angular integral), so no correction quadrature is needed and the dominant
1/|x-y| part is treated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .quadrature import BallField, BallGrid
from .specfun import UnitVector

_FOURPI = 4.0 * math.pi


# ---------------------------------------------------------------------------
# closed-form kernel integrals
# ---------------------------------------------------------------------------

def _em1(t):
    """exp(it)(1 - it) - 1, series-stabilized for small t."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.exp(1j * t) * (1.0 - 1j * t) - 1.0
    small = np.abs(t) < 1e-2
    if np.any(small):
        ts = t[small]
        t2 = ts * ts
        out[small] = (t2 / 2.0 - t2 * t2 / 8.0) + 1j * ts * t2 * (1.0 / 3.0 - t2 / 30.0)
    return out


def _qfun(z):
    """(sin z - z cos z)/z, series-stabilized for small z."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (np.sin(z) - z * np.cos(z)) / z
    small = np.abs(z) < 1e-2
    if np.any(small):
        z2 = z[small] * z[small]
        out[small] = z2 * (1.0 / 3.0 - z2 / 30.0 + z2 * z2 / 840.0)
    return out


def ball_potential(k: float, R: float, s):
    """int over the ball B_R of g(x, .) dy at |x| = s <= R, in closed form."""
    if k <= 0.0:
        raise ValueError("wavenumber k must be > 0")
    s = np.asarray(s, dtype=float)
    scalar = s.ndim == 0
    if np.any(s > R * (1.0 + 1e-12)):
        raise ValueError("ball_potential: target radius outside the ball")
    z = np.atleast_1d(k * s)
    Z = k * R
    sinc = np.sinc(z / math.pi)
    val = (np.exp(1j * z) * _qfun(z) + sinc * (_em1(Z) - _em1(z))) / (k * k)
    return complex(val[0]) if scalar else val


def incident_wave(points, k: float, alpha: UnitVector) -> np.ndarray:
    """Plane wave exp(ik alpha.x) sampled at the given points."""
    phase = k * (np.asarray(points) @ alpha.xyz)
    return np.cos(phase) + 1j * np.sin(phase)


# ---------------------------------------------------------------------------
# volume potential with singularity subtraction
# ---------------------------------------------------------------------------

def _kernel_block(points_a, points_b, k, self_tol):
    """exp(ik d)/(4 pi d) for a block of point pairs; entries with d below
    self_tol are zeroed and their index pairs returned."""
    d = cdist(points_a, points_b)
    self_pairs = np.nonzero(d < self_tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = k * d
        kern = (np.cos(p) + 1j * np.sin(p)) / (_FOURPI * d)
    if self_pairs[0].size:
        kern[self_pairs] = 0.0
    return kern, self_pairs


def volume_potential(field: BallField, k: float, targets) -> np.ndarray:
    """Values of int_D g(x, y) h(y) dy at each target point.

    Targets that coincide with grid nodes get the subtraction treatment and
    are accurate to the quadrature order; other interior targets fall back
    to the plain Nystrom sum, which degrades within about one cell of a
    node.
    """
    grid = field.grid
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if targets.shape[1] != 3:
        raise ValueError("targets must be 3-vectors")
    h = field.values
    wh = grid.weights * h
    s_nodes = ball_potential(k, grid.R, grid.radii)
    self_tol = 1e-12 * max(grid.R, 1.0)
    out = np.empty(targets.shape[0], dtype=complex)
    chunk = max(1, int(1.2e7 // max(grid.n, 1)))
    for start in range(0, targets.shape[0], chunk):
        block = targets[start:start + chunk]
        kern, (rows, cols) = _kernel_block(block, grid.nodes, k, self_tol)
        vals = kern @ wh
        if rows.size:
            rowg = kern[rows] @ grid.weights
            vals[rows] += h[cols] * (s_nodes[cols] - rowg)
        out[start:start + chunk] = vals
    return out


def _sparse_potential(grid: BallGrid, k: float, source_idx, source_values) -> np.ndarray:
    """Subtraction-scheme potential of a source supported on a node subset,
    evaluated at every node.

    Reproduces the full-grid evaluation term by term: off the support the
    sum only runs over source nodes; on a source node the subtraction
    constant and its row sum reappear with the source value as weight."""
    src_pts = grid.nodes[source_idx]
    wv = grid.weights[source_idx] * source_values
    self_tol = 1e-12 * max(grid.R, 1.0)
    out = np.empty(grid.n, dtype=complex)
    chunk = max(1, int(1.2e7 // max(len(source_idx), 1)))
    for start in range(0, grid.n, chunk):
        kern, _ = _kernel_block(grid.nodes[start:start + chunk], src_pts, k, self_tol)
        out[start:start + chunk] = kern @ wv
    rowg = np.empty(len(source_idx), dtype=complex)
    chunk = max(1, int(1.2e7 // grid.n))
    for start in range(0, len(source_idx), chunk):
        kern, _ = _kernel_block(src_pts[start:start + chunk], grid.nodes, k, self_tol)
        rowg[start:start + chunk] = kern @ grid.weights
    s_src = ball_potential(k, grid.R, grid.radii[source_idx])
    out[source_idx] += source_values * (s_src - rowg)
    return out


def scattering_field_from_h(field: BallField, k: float, alpha: UnitVector) -> BallField:
    """u = u0 - int_D g(., y) h(y) dy on the grid, u0 the incident plane wave."""
    u0 = incident_wave(field.grid.nodes, k, alpha)
    return BallField(field.grid, u0 - volume_potential(field, k, field.grid.nodes))


def potential_from_h(h: BallField, u: BallField) -> BallField:
    """Pointwise quotient q = h/u; nodes where u is exactly zero are flagged
    with NaN markers (the regularization resolves them)."""
    if h.grid is not u.grid and h.grid.n != u.grid.n:
        raise ValueError("h and u live on different grids")
    uv = u.values
    dead = uv == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        q = h.values / uv
    if np.any(dead):
        q = np.where(dead, complex(math.nan, math.nan), q)
    return BallField(h.grid, q)


# ---------------------------------------------------------------------------
# zero set and regularization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroSetReport:
    """Grid nodes where |u| falls below the excision threshold delta."""

    delta: float
    nodes_in_N: np.ndarray
    fraction: float
    min_abs_u: float


def zero_set(u: BallField, delta: float) -> ZeroSetReport:
    """Classify nodes into N_delta = {|u| < delta} and its complement."""
    if delta <= 0.0:
        raise ValueError("delta must be > 0")
    absu = np.abs(u.values)
    idx = np.nonzero(absu < delta)[0]
    return ZeroSetReport(delta=float(delta), nodes_in_N=idx,
                         fraction=idx.size / u.grid.n,
                         min_abs_u=float(absu.min()))


def tube_integral_bound(grid: BallGrid, report: ZeroSetReport,
                        target_idx=None) -> float:
    """sup over complement nodes of sum_{n in N} W_n / (4 pi |x - y_n|).

    Diagnostic for how much excising N_delta can depress |u_delta|; the
    continuum quantity scales like delta^2 log(1/delta) for a tubular N.
    """
    nset = report.nodes_in_N
    if nset.size == 0:
        return 0.0
    if target_idx is None:
        mask = np.ones(grid.n, dtype=bool)
        mask[nset] = False
        target_idx = np.nonzero(mask)[0]
    target_idx = np.asarray(target_idx, dtype=int)
    if target_idx.size == 0:
        return 0.0
    src = grid.nodes[nset]
    wn = grid.weights[nset]
    best = 0.0
    chunk = max(1, int(1.2e7 // max(nset.size, 1)))
    for start in range(0, target_idx.size, chunk):
        idx = target_idx[start:start + chunk]
        d = cdist(grid.nodes[idx], src)
        np.maximum(d, 1e-300, out=d)
        vals = (1.0 / (_FOURPI * d)) @ wn
        best = max(best, float(vals.max()))
    return best


def default_delta(h: BallField) -> float:
    """Resolution-tied excision threshold: twice the field's sup-norm times
    the potential of a typical grid cell, floored at 1e-2."""
    grid = h.grid
    a = float(np.cbrt(3.0 * np.median(grid.weights) / _FOURPI))
    i_grid = 0.5 * a * a
    return max(1e-2, 2.0 * float(np.max(np.abs(h.values))) * i_grid)


@dataclass(eq=False)
class Regularized:
    """Bounded regularization of q = h/u.

    h_delta agrees with h away from the excised set and vanishes on it;
    u_delta is recomputed from h_delta in a single pass (no iteration);
    q_delta = h_delta/u_delta off the excised set and 0 on it.  Nodes of
    the complement where |u_delta| still dropped to delta/2 or below are
    re-classified into the excised set (with h_delta and q_delta zeroed,
    u_delta not recomputed again) and flagged.
    """

    h_delta: BallField
    u_delta: BallField
    q_delta: BallField
    report: ZeroSetReport
    inf_abs_u_delta: float
    depression_bound: float
    reclassified: np.ndarray
    flagged: bool


def regularize(h: BallField, k: float, alpha: UnitVector, delta: float,
               u: BallField | None = None) -> Regularized:
    """Excise N_delta = {|u| < delta}, zero h there, recompute u once, divide.

    ``u`` may carry a precomputed scattering field of h (e.g. across a
    delta sweep); when omitted it is computed here.
    """
    if delta <= 0.0:
        raise ValueError("delta must be > 0")
    grid = h.grid
    if u is None:
        u = scattering_field_from_h(h, k, alpha)
    elif u.grid.n != grid.n:
        raise ValueError("precomputed field does not match the grid")
    first = zero_set(u, delta)
    n0 = first.nodes_in_N
    if n0.size == grid.n:
        raise ValueError(
            f"target unreachable at this delta: every node has |u| < {delta}")

    h_d = h.values.copy()
    h_d[n0] = 0.0
    if n0.size == 0:
        u_d = u.values.copy()
    elif 4 * n0.size <= grid.n:
        # u_delta = u + int g (h - h_delta): the correction source is h on
        # N_delta only, so a sparse pass reproduces the one-pass result.
        u_d = u.values + _sparse_potential(grid, k, n0, h.values[n0])
    else:
        u0 = incident_wave(grid.nodes, k, alpha)
        u_d = u0 - volume_potential(BallField(grid, h_d), k, grid.nodes)

    # recorded lower bound  inf |u_delta| >= delta - max_N|h| * I(delta)
    if n0.size:
        c_n = float(np.max(np.abs(h.values[n0])))
        bound = delta - c_n * tube_integral_bound(grid, first)
    else:
        bound = delta

    in_n = np.zeros(grid.n, dtype=bool)
    in_n[n0] = True
    comp = ~in_n
    reclass = np.nonzero(comp & (np.abs(u_d) <= 0.5 * delta))[0]
    flagged = reclass.size > 0
    if flagged:
        h_d[reclass] = 0.0
        in_n[reclass] = True
        comp = ~in_n
    if not np.any(comp):
        raise ValueError(
            "target unreachable at this delta: re-classification consumed the domain")

    q_d = np.zeros(grid.n, dtype=complex)
    q_d[comp] = h_d[comp] / u_d[comp]
    final_idx = np.nonzero(in_n)[0]
    report = ZeroSetReport(delta=float(delta), nodes_in_N=final_idx,
                           fraction=final_idx.size / grid.n,
                           min_abs_u=first.min_abs_u)
    return Regularized(
        h_delta=BallField(grid, h_d),
        u_delta=BallField(grid, u_d),
        q_delta=BallField(grid, q_d),
        report=report,
        inf_abs_u_delta=float(np.min(np.abs(u_d[comp]))),
        depression_bound=bound,
        reclassified=reclass,
        flagged=flagged,
    )


def mollify(field: BallField, width: float) -> BallField:
    """Gaussian-kernel smoothing over the grid, for export only; the
    numerics elsewhere operate on the unsmoothed bounded fields."""
    if width <= 0.0:
        raise ValueError("width must be > 0")
    grid = field.grid
    wv = grid.weights * field.values
    out = np.empty(grid.n, dtype=complex)
    chunk = max(1, int(1.2e7 // max(grid.n, 1)))
    for start in range(0, grid.n, chunk):
        d = cdist(grid.nodes[start:start + chunk], grid.nodes)
        phi = np.exp(-0.5 * (d / width) ** 2)
        out[start:start + chunk] = (phi @ wv) / (phi @ grid.weights)
    return BallField(grid, out)
