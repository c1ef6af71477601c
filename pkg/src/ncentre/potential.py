"""The singular potential, its derivatives, and the Jacobi-metric curvature.

The potential is the globally explicit sum

    V(q) = - sum_j m_j / (alpha_j * rho_j(q)^alpha_j) + sum_j W_j(q)

where rho_j is the chart distance to centre j (or its mollification on the
torus) and the W_j are smooth regular parts.  The energy level h must sit
above sup V; ``energy_threshold`` estimates that supremum.

The Jacobi-Maupertuis metric g_J = (h - V) g has scalar curvature

    kappa_J = (kappa - Lap_g log(h - V)) / (h - V)
            = kappa/(h-V) + |grad V|^2/(h-V)^3 + Lap V/(h-V)^2

which is negative near every centre and, for flat charts with h > 0,
non-positive everywhere; ``jacobi_curvature`` evaluates it and
``asymptotic_kappa_J`` returns the leading near-centre coefficient
-alpha^4 (h - W(c)) / m^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .geometry import (
    ConformalPlane,
    FlatPlane,
    FlatTorus,
    MetricModel,
    canonical_point,
    cut_locus_distance,
    displacement,
    distance,
    laplace_beltrami,
    scalar_curvature,
)

Array = np.ndarray

#: below this chart distance to a centre, direct evaluation is refused
GUARD_RADIUS = 1e-10

#: ratio of the mollifier convolution half-width to the tube radius
MOLLIFY_KERNEL_FRACTION = 0.125

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(12)
_GAUSS_NODES8, _GAUSS_WEIGHTS8 = np.polynomial.legendre.leggauss(8)


class SingularityError(ValueError):
    """Evaluation requested inside the guard radius of a centre."""


class CutLocusError(ValueError):
    """Exact-mode derivative requested on the torus cut locus."""


# ---------------------------------------------------------------------------
# regular parts W_j
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroPart:
    def value(self, q: Array) -> float:
        return 0.0

    def grad(self, q: Array) -> Array:
        return np.zeros(2)

    def laplacian(self, q: Array) -> float:
        return 0.0

    @property
    def limit_at_infinity(self) -> float:
        return 0.0


@dataclass(frozen=True)
class ConstantPart:
    c: float

    def value(self, q: Array) -> float:
        return self.c

    def grad(self, q: Array) -> Array:
        return np.zeros(2)

    def laplacian(self, q: Array) -> float:
        return 0.0

    @property
    def limit_at_infinity(self) -> float:
        return self.c


@dataclass(frozen=True)
class GaussianPart:
    """W(q) = a * exp(-|q - centre|^2 / (2 sigma^2)) (chart-Euclidean)."""

    a: float
    sigma: float
    centre: tuple[float, float]

    def _u(self, q: Array) -> Array:
        return np.asarray(q, float) - np.asarray(self.centre, float)

    def value(self, q: Array) -> float:
        u = self._u(q)
        return self.a * math.exp(-float(u @ u) / (2.0 * self.sigma ** 2))

    def grad(self, q: Array) -> Array:
        u = self._u(q)
        return -self.value(q) / self.sigma ** 2 * u

    def laplacian(self, q: Array) -> float:
        u = self._u(q)
        r2 = float(u @ u)
        return self.value(q) * (r2 / self.sigma ** 4 - 2.0 / self.sigma ** 2)

    @property
    def limit_at_infinity(self) -> float:
        return 0.0


RegularPart = Union[ZeroPart, ConstantPart, GaussianPart]


# ---------------------------------------------------------------------------
# field definition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CentreSpec:
    position: tuple[float, float]
    mass: float = 1.0
    exponent: float = 1.0
    regular_part: RegularPart = field(default_factory=ZeroPart)

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("centre mass must be positive")
        if not (1.0 <= self.exponent < 2.0):
            raise ValueError("exponent alpha must lie in [1, 2)")

    @property
    def pos(self) -> Array:
        return np.asarray(self.position, dtype=float)


@dataclass(frozen=True)
class Mollified:
    eps: float

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("mollification radius must be positive")


DistanceMode = Union[str, Mollified]  # "exact" or Mollified(eps)


@dataclass(frozen=True)
class PotentialField:
    metric: MetricModel
    centres: tuple[CentreSpec, ...]
    energy: float
    distance_mode: DistanceMode = "exact"

    def __post_init__(self):
        positions = [c.pos for c in self.centres]
        for i in range(len(positions)):
            for j in range(i + 1, len(positions)):
                if np.linalg.norm(displacement(self.metric, positions[i], positions[j])) < 1e-12:
                    raise ValueError("centres must be pairwise distinct")
        if isinstance(self.distance_mode, Mollified) and not isinstance(self.metric, FlatTorus):
            raise ValueError("mollified distances are defined on the flat torus only")

    @property
    def h(self) -> float:
        return self.energy

    @property
    def positions(self) -> Array:
        return np.array([c.pos for c in self.centres])

    def min_centre_separation(self) -> float:
        positions = [c.pos for c in self.centres]
        if len(positions) < 2:
            return math.inf
        return min(
            float(np.linalg.norm(displacement(self.metric, positions[i], positions[j])))
            for i in range(len(positions)) for j in range(i + 1, len(positions))
        )


def field_scale(fld: PotentialField) -> float:
    """Characteristic length of the configuration (min centre separation or 1)."""
    sep = fld.min_centre_separation()
    return sep if math.isfinite(sep) else 1.0


# ---------------------------------------------------------------------------
# distance to centres (with mollification)
# ---------------------------------------------------------------------------

def _smoothstep(u: float) -> float:
    u = min(max(u, 0.0), 1.0)
    return u * u * (3.0 - 2.0 * u)


def _mollifier_1d(u: Array) -> Array:
    """Smooth bump on (-1, 1), unnormalized."""
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
    return out


def _split_axis_nodes(lo: float, hi: float, cut: float) -> tuple[Array, Array]:
    """Gauss nodes/weights on [lo, hi], split at ``cut`` if it falls inside."""
    pieces = []
    if lo < cut < hi:
        bounds = [(lo, cut), (cut, hi)]
    else:
        bounds = [(lo, hi)]
    nodes, weights = [], []
    for a, b in bounds:
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes.append(mid + half * _GAUSS_NODES)
        weights.append(half * _GAUSS_WEIGHTS)
    return np.concatenate(nodes), np.concatenate(weights)


def _nearest_cut(value: float, period: float) -> float:
    """The cut-locus coordinate (offset by period/2) nearest to ``value``."""
    k = round((value - 0.5 * period) / period)
    return 0.5 * period + k * period


def _mollified_distance(model: FlatTorus, c: Array, q: Array, eps: float) -> float:
    """phi_eps(q): smoothing-kernel convolution of d(., c), cutoff-blended.

    The convolution kernel is a product of two 1D bumps of half-width
    delta = MOLLIFY_KERNEL_FRACTION * eps; each axis integral is split at the
    (axis-parallel) cut-locus line inside the kernel support, so the
    quadrature integrates a smooth function on every sub-cell.
    """
    q = np.asarray(q, dtype=float)
    t = cut_locus_distance(model, c, q)
    if t >= eps:
        return float(np.linalg.norm(displacement(model, c, q)))
    psi = _smoothstep((eps - t) / (0.5 * eps))  # 1 on the cut locus, 0 at t >= eps
    delta = MOLLIFY_KERNEL_FRACTION * eps

    rel = q - c  # distances depend only on q - c
    cut_x = _nearest_cut(rel[0], model.period_x)
    cut_y = _nearest_cut(rel[1], model.period_y)
    nx, wx = _split_axis_nodes(rel[0] - delta, rel[0] + delta, cut_x)
    ny, wy = _split_axis_nodes(rel[1] - delta, rel[1] + delta, cut_y)
    kx = _mollifier_1d((nx - rel[0]) / delta) * wx
    ky = _mollifier_1d((ny - rel[1]) / delta) * wy

    dx = nx - model.period_x * np.round(nx / model.period_x)
    dy = ny - model.period_y * np.round(ny / model.period_y)
    dist_grid = np.sqrt(dx[:, None] ** 2 + dy[None, :] ** 2)
    weight_grid = kx[:, None] * ky[None, :]
    smooth = float(np.sum(weight_grid * dist_grid) / np.sum(weight_grid))

    exact = float(np.linalg.norm(displacement(model, c, q)))
    return psi * smooth + (1.0 - psi) * exact


def _mollified_distance_batch(model: FlatTorus, c: Array, pts: Array,
                              eps: float) -> Array:
    """Vectorized phi_eps over a batch of points (same construction)."""
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    per = np.array([model.period_x, model.period_y])
    rel = pts - c
    # exact distances and tube membership
    wrapped = rel - per * np.round(rel / per)
    exact = np.linalg.norm(wrapped, axis=1)
    tx = np.abs((rel[:, 0] - 0.5 * per[0]) - per[0] * np.round((rel[:, 0] - 0.5 * per[0]) / per[0]))
    ty = np.abs((rel[:, 1] - 0.5 * per[1]) - per[1] * np.round((rel[:, 1] - 0.5 * per[1]) / per[1]))
    t = np.minimum(tx, ty)
    out = exact.copy()
    inside = t < eps
    if not np.any(inside):
        return out
    sub = rel[inside]
    m = len(sub)
    delta = MOLLIFY_KERNEL_FRACTION * eps

    def axis_nodes(vals, period):
        lo = vals - delta
        hi = vals + delta
        k = np.round((vals - 0.5 * period) / period)
        cut = np.clip(0.5 * period + k * period, lo, hi)
        mid1, half1 = 0.5 * (lo + cut), 0.5 * (cut - lo)
        mid2, half2 = 0.5 * (cut + hi), 0.5 * (hi - cut)
        nodes = np.concatenate([
            mid1[:, None] + half1[:, None] * _GAUSS_NODES8[None, :],
            mid2[:, None] + half2[:, None] * _GAUSS_NODES8[None, :]], axis=1)
        weights = np.concatenate([
            half1[:, None] * _GAUSS_WEIGHTS8[None, :],
            half2[:, None] * _GAUSS_WEIGHTS8[None, :]], axis=1)
        kern = _mollifier_1d((nodes - vals[:, None]) / delta) * weights
        dd = nodes - period * np.round(nodes / period)
        return dd, kern

    dx, kx = axis_nodes(sub[:, 0], per[0])
    dy, ky = axis_nodes(sub[:, 1], per[1])
    dist = np.sqrt(dx[:, :, None] ** 2 + dy[:, None, :] ** 2)
    w = kx[:, :, None] * ky[:, None, :]
    smooth = np.sum(w * dist, axis=(1, 2)) / np.sum(w, axis=(1, 2))
    u = np.clip((eps - t[inside]) / (0.5 * eps), 0.0, 1.0)
    psi = u * u * (3.0 - 2.0 * u)
    out[inside] = psi * smooth + (1.0 - psi) * exact[inside]
    return out


def centre_distance(fld: PotentialField, j: int, q: Array) -> float:
    """rho_j(q): chart distance from q to centre j under the field's mode."""
    c = fld.centres[j].pos
    if isinstance(fld.distance_mode, Mollified):
        return _mollified_distance(fld.metric, c, q, fld.distance_mode.eps)
    return distance(fld.metric, c, q)


def min_centre_distance(fld: PotentialField, q: Array) -> float:
    return min(centre_distance(fld, j, q) for j in range(len(fld.centres)))


# ---------------------------------------------------------------------------
# vectorized evaluation over point batches (hot path of the loop functionals)
# ---------------------------------------------------------------------------

def _displacements_batch(model: MetricModel, centre: Array, pts: Array) -> Array:
    d = pts - centre
    if isinstance(model, FlatTorus):
        per = np.array([model.period_x, model.period_y])
        d = d - per * np.round(d / per)
    return d


def _has_fast_path(fld: PotentialField) -> bool:
    return (isinstance(fld.metric, (FlatPlane, FlatTorus))
            and fld.distance_mode == "exact")


def centre_distances_batch(fld: PotentialField, pts: Array) -> Array:
    """(n_points, n_centres) matrix of rho_j over a batch of points."""
    pts = np.asarray(pts, dtype=float)
    if _has_fast_path(fld):
        cols = [np.linalg.norm(_displacements_batch(fld.metric, c.pos, pts), axis=1)
                for c in fld.centres]
        return np.column_stack(cols)
    if isinstance(fld.distance_mode, Mollified) and isinstance(fld.metric, FlatTorus):
        eps = fld.distance_mode.eps
        cols = [_mollified_distance_batch(fld.metric, c.pos, pts, eps)
                for c in fld.centres]
        return np.column_stack(cols)
    return np.array([[centre_distance(fld, j, p) for j in range(len(fld.centres))]
                     for p in pts])


def min_centre_distance_batch(fld: PotentialField, pts: Array) -> Array:
    return centre_distances_batch(fld, pts).min(axis=1)


def guard_distance_batch(fld: PotentialField, pts: Array) -> Array:
    """Exact min centre distance for guard checks (mollification only acts
    in the cut-locus tube, far from the centres, so the exact distance is
    the right guard quantity and much cheaper)."""
    pts = np.asarray(pts, dtype=float)
    if isinstance(fld.metric, (FlatPlane, FlatTorus)):
        cols = [np.linalg.norm(_displacements_batch(fld.metric, c.pos, pts), axis=1)
                for c in fld.centres]
        return np.column_stack(cols).min(axis=1)
    return min_centre_distance_batch(fld, pts)


def evaluate_V_batch(fld: PotentialField, pts: Array) -> Array:
    """V over a batch of points; guard violations raise as in evaluate_V."""
    pts = np.asarray(pts, dtype=float)
    rho = centre_distances_batch(fld, pts)
    if np.any(rho < GUARD_RADIUS):
        k = int(np.argwhere(rho < GUARD_RADIUS)[0][0])
        raise SingularityError(f"evaluation within guard radius at vertex {k}")
    out = np.zeros(len(pts))
    for j, spec in enumerate(fld.centres):
        out -= spec.mass / (spec.exponent * rho[:, j] ** spec.exponent)
        if not isinstance(spec.regular_part, ZeroPart):
            out += np.array([spec.regular_part.value(p) for p in pts])
    return out


def hessian_V_batch(fld: PotentialField, pts: Array) -> Array:
    """(n, 2, 2) chart Hessians of V; exact flat kinds only."""
    pts = np.asarray(pts, dtype=float)
    if not _has_fast_path(fld):
        raise ValueError("analytic Hessian requires an exact flat-chart field")
    out = np.zeros((len(pts), 2, 2))
    eye = np.eye(2)
    for spec in fld.centres:
        d = _displacements_batch(fld.metric, spec.pos, pts)
        rho = np.linalg.norm(d, axis=1)
        if np.any(rho < GUARD_RADIUS):
            raise SingularityError("Hessian within guard radius of a centre")
        a = spec.exponent
        out += spec.mass * (rho ** (-a - 2.0))[:, None, None] * eye[None, :, :]
        out -= spec.mass * (a + 2.0) * (rho ** (-a - 4.0))[:, None, None] * \
            np.einsum("ki,kj->kij", d, d)
        w = spec.regular_part
        if isinstance(w, GaussianPart):
            u = pts - np.asarray(w.centre, float)
            vals = np.array([w.value(p) for p in pts])
            out += vals[:, None, None] * (
                np.einsum("ki,kj->kij", u, u) / w.sigma ** 4
                - eye[None, :, :] / w.sigma ** 2)
    return out


def grad_V_batch(fld: PotentialField, pts: Array) -> Array:
    """Chart-partials of V over a batch (flat exact kinds vectorized)."""
    pts = np.asarray(pts, dtype=float)
    if isinstance(fld.distance_mode, Mollified) and isinstance(fld.metric, FlatTorus):
        # batched central differences of the mollified potential
        h = 1e-6 * min(fld.metric.period_x, fld.metric.period_y)
        out = np.empty_like(pts)
        for k, e in enumerate((np.array([1.0, 0.0]), np.array([0.0, 1.0]))):
            vp = evaluate_V_batch(fld, pts + h * e)
            vm = evaluate_V_batch(fld, pts - h * e)
            out[:, k] = (vp - vm) / (2.0 * h)
        return out
    if not _has_fast_path(fld):
        return np.array([grad_V(fld, p) for p in pts])
    out = np.zeros_like(pts)
    for spec in fld.centres:
        if isinstance(fld.metric, FlatTorus):
            rel = pts - spec.pos
            per = np.array([fld.metric.period_x, fld.metric.period_y])
            cut = np.abs((rel - 0.5 * per) - per * np.round((rel - 0.5 * per) / per))
            if np.any(cut.min(axis=1) < 1e-9):
                raise CutLocusError(
                    "exact-mode gradient on the torus cut locus; use "
                    "mollified_potential")
        d = _displacements_batch(fld.metric, spec.pos, pts)
        rho = np.linalg.norm(d, axis=1)
        if np.any(rho < GUARD_RADIUS):
            raise SingularityError("gradient within guard radius of a centre")
        out += spec.mass * (rho ** (-spec.exponent - 2.0))[:, None] * d
        if not isinstance(spec.regular_part, ZeroPart):
            out += np.array([spec.regular_part.grad(p) for p in pts])
    return out


# ---------------------------------------------------------------------------
# V, grad V, Lap V
# ---------------------------------------------------------------------------

def evaluate_V(fld: PotentialField, q: Array) -> float:
    """V(q); raises SingularityError within the guard radius of a centre."""
    q = np.asarray(q, dtype=float)
    total = 0.0
    for j, spec in enumerate(fld.centres):
        rho = centre_distance(fld, j, q)
        if rho < GUARD_RADIUS:
            raise SingularityError(f"evaluation within guard radius of centre {j}")
        total -= spec.mass / (spec.exponent * rho ** spec.exponent)
        total += spec.regular_part.value(q)
    return total


def _check_cut_locus(fld: PotentialField, q: Array) -> None:
    if isinstance(fld.metric, FlatTorus) and fld.distance_mode == "exact":
        for spec in fld.centres:
            if cut_locus_distance(fld.metric, spec.pos, q) < 1e-9:
                raise CutLocusError(
                    "exact-mode derivative on the cut locus; switch the field "
                    "to mollified distances (mollified_potential)")


def _fd_scale(fld: PotentialField, q: Array) -> float:
    return max(min_centre_distance(fld, q), GUARD_RADIUS)


def grad_V(fld: PotentialField, q: Array) -> Array:
    """Riemannian gradient of V in chart components.

    Analytic on flat kinds; finite differences for mollified or conformal
    distances.  On flat kinds the Riemannian and Euclidean gradients agree.
    """
    q = np.asarray(q, dtype=float)
    _check_cut_locus(fld, q)
    if isinstance(fld.metric, (FlatPlane, FlatTorus)) and fld.distance_mode == "exact":
        g = np.zeros(2)
        for j, spec in enumerate(fld.centres):
            d = displacement(fld.metric, spec.pos, q)  # from centre to q
            rho = float(np.linalg.norm(d))
            if rho < GUARD_RADIUS:
                raise SingularityError(f"gradient within guard radius of centre {j}")
            g += spec.mass * rho ** (-spec.exponent - 2.0) * d
            g += spec.regular_part.grad(q)
        return g
    # finite differences on the potential itself
    h = 1e-6 * _fd_scale(fld, q)
    g = np.empty(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        g[k] = (evaluate_V(fld, q + e) - evaluate_V(fld, q - e)) / (2.0 * h)
    if isinstance(fld.metric, ConformalPlane):
        g *= np.exp(-2.0 * fld.metric.phi(q))
    return g


def laplacian_V(fld: PotentialField, q: Array) -> float:
    """Laplace-Beltrami of V.

    Flat kinds use the closed form (Lap rho = 1/rho in 2D); elsewhere a
    central-difference Laplace-Beltrami of evaluate_V.
    """
    q = np.asarray(q, dtype=float)
    _check_cut_locus(fld, q)
    if isinstance(fld.metric, (FlatPlane, FlatTorus)) and fld.distance_mode == "exact":
        total = 0.0
        for j, spec in enumerate(fld.centres):
            rho = float(np.linalg.norm(displacement(fld.metric, spec.pos, q)))
            if rho < GUARD_RADIUS:
                raise SingularityError(f"laplacian within guard radius of centre {j}")
            total -= spec.exponent * spec.mass * rho ** (-spec.exponent - 2.0)
            total += spec.regular_part.laplacian(q)
        return total
    step = 1e-4 * _fd_scale(fld, q)
    return laplace_beltrami(fld.metric, lambda p: evaluate_V(fld, p), q, step=step)


# ---------------------------------------------------------------------------
# energy threshold
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdEstimate:
    value: float
    margin: float
    attained: bool  # False when the supremum sits at infinity

    def certified_below(self, h: float) -> bool:
        return h > self.value + self.margin


def energy_threshold(fld: PotentialField, grid: int = 96, zoom_levels: int = 8) -> ThresholdEstimate:
    """Numerical estimate of sup_M V with a certification margin.

    Grid sampling refined by successive local grid zooms (robust to the
    cut-locus ridges where V is not differentiable), combined with the
    analytic value of V at infinity for plane fields.
    """
    model = fld.metric

    def best_on(xs, ys):
        best_v, best_q = -math.inf, None
        for x in xs:
            for y in ys:
                q = np.array([x, y])
                try:
                    v = evaluate_V(fld, q)
                except SingularityError:
                    continue
                if v > best_v:
                    best_v, best_q = v, q
        return best_v, best_q

    if isinstance(model, FlatTorus):
        xs = np.linspace(0.0, model.period_x, grid, endpoint=False)
        ys = np.linspace(0.0, model.period_y, grid, endpoint=False)
        span = np.array([model.period_x, model.period_y]) / grid
    else:
        pos = fld.positions
        lo = pos.min(axis=0) - 2.0 * field_scale(fld) - 1.0
        hi = pos.max(axis=0) + 2.0 * field_scale(fld) + 1.0
        xs = np.linspace(lo[0], hi[0], grid)
        ys = np.linspace(lo[1], hi[1], grid)
        span = (hi - lo) / grid

    best_v, best_q = best_on(xs, ys)
    improvement = 0.0
    for _ in range(zoom_levels):
        span = span / 4.0
        xs = np.linspace(best_q[0] - 2 * span[0], best_q[0] + 2 * span[0], 9)
        ys = np.linspace(best_q[1] - 2 * span[1], best_q[1] + 2 * span[1], 9)
        v, q = best_on(xs, ys)
        improvement = v - best_v
        if v > best_v:
            best_v, best_q = v, q

    margin = max(4.0 * abs(improvement), 1e-12)
    if isinstance(model, (FlatPlane, ConformalPlane)):
        at_infinity = sum(c.regular_part.limit_at_infinity for c in fld.centres)
        if at_infinity >= best_v:
            return ThresholdEstimate(value=at_infinity, margin=0.0, attained=False)
    return ThresholdEstimate(value=best_v, margin=margin, attained=True)


# ---------------------------------------------------------------------------
# Jacobi-Maupertuis curvature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JacobiReport:
    point: Array
    kappa: float
    kappa_J: float
    gradV: Array
    laplacianV: float


def jacobi_curvature(fld: PotentialField, q: Array) -> JacobiReport:
    """Scalar curvature of g_J = (h - V) g at q.

    kappa_J = kappa/(h-V) + |grad V|_g^2/(h-V)^3 + Lap_g V/(h-V)^2.
    """
    q = np.asarray(q, dtype=float)
    if min_centre_distance(fld, q) < 1e-10:
        raise SingularityError("kappa_J too close to a centre; use asymptotic_kappa_J")
    v = evaluate_V(fld, q)
    hv = fld.h - v
    if hv <= 0:
        raise ValueError("h - V must be positive (energy below the local potential)")
    g = grad_V(fld, q)
    lap = laplacian_V(fld, q)
    kappa = scalar_curvature(fld.metric, q)
    # g holds chart components of the Riemannian gradient, so
    # |grad V|_g^2 = g_ij g^i g^j = e^{2 phi} |g|^2 (weight 1 on flat kinds)
    if isinstance(fld.metric, ConformalPlane):
        grad_sq = float(np.exp(2.0 * fld.metric.phi(q)) * (g @ g))
    else:
        grad_sq = float(g @ g)
    kj = kappa / hv + grad_sq / hv ** 3 + lap / hv ** 2
    return JacobiReport(point=q, kappa=kappa, kappa_J=kj, gradV=g, laplacianV=lap)


def asymptotic_kappa_J(fld: PotentialField, centre_index: int) -> float:
    """Leading coefficient of kappa_J(x) ~ coeff * r^{2(alpha-1)} near a centre.

    coeff = -alpha^4 (h - W(c)) / m^2 where W is the full regular part of V
    at the centre (the other centres' singular terms plus all W_j).
    """
    spec = fld.centres[centre_index]
    c = spec.pos
    w = 0.0
    for k, other in enumerate(fld.centres):
        w += other.regular_part.value(c)
        if k != centre_index:
            rho = centre_distance(fld, k, c)
            w -= other.mass / (other.exponent * rho ** other.exponent)
    a = spec.exponent
    return -a ** 4 * (fld.h - w) / spec.mass ** 2


# ---------------------------------------------------------------------------
# mollified fields
# ---------------------------------------------------------------------------

def mollified_potential(fld: PotentialField, eps: float) -> PotentialField:
    """Field with every d_g(., c_j) replaced by its mollification phi_eps.

    phi_eps differs from the distance only inside the eps-tube of the cut
    locus, converges uniformly (sup difference <= sqrt(2)*eps/8) and keeps a
    uniform gradient bound below twice the Lipschitz constant of d_g.
    """
    if not isinstance(fld.metric, FlatTorus):
        raise ValueError("mollified potentials are defined on the flat torus only")
    if fld.distance_mode != "exact":
        raise ValueError("field already mollified; build from the exact field")
    if eps > 0.5 * fld.metric.injectivity_radius:
        raise ValueError("eps exceeds half the injectivity radius")
    return PotentialField(metric=fld.metric, centres=fld.centres,
                          energy=fld.energy, distance_mode=Mollified(eps))


def mollified_gradient_sup(fld: PotentialField, j: int, grid: int = 160) -> float:
    """Grid estimate of sup |grad phi_eps| for centre j (diagnostic)."""
    if not isinstance(fld.distance_mode, Mollified):
        raise ValueError("field is not mollified")
    model = fld.metric
    c = fld.centres[j].pos
    eps = fld.distance_mode.eps
    h = 1e-6 * min(model.period_x, model.period_y)
    worst = 0.0
    xs = np.linspace(0.0, model.period_x, grid, endpoint=False)
    ys = np.linspace(0.0, model.period_y, grid, endpoint=False)
    for x in xs:
        for y in ys:
            q = np.array([x, y])
            if float(np.linalg.norm(displacement(model, c, q))) < 4 * h:
                continue
            gx = (_mollified_distance(model, c, q + [h, 0], eps)
                  - _mollified_distance(model, c, q - [h, 0], eps)) / (2 * h)
            gy = (_mollified_distance(model, c, q + [0, h], eps)
                  - _mollified_distance(model, c, q - [0, h], eps)) / (2 * h)
            worst = max(worst, math.hypot(gx, gy))
    return worst
