"""Charts, metric tensors and differential operators for the supported surfaces.

Three chart models are supported: the Euclidean plane, a flat rectangular
torus, and a conformally flat plane g = e^{2*phi} g_e.  Everything downstream
(potentials, loop functionals, flow integration) talks to the metric only
through the functions in this module, so adding a chart kind means extending
the dispatch here.

All operations are pure functions of immutable values and safe to call from
any number of workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

Array = np.ndarray

#: relative finite-difference step (times the local feature scale)
DEFAULT_FD_STEP = 1e-4

#: endpoint miss tolerance of the conformal geodesic two-point solver
GEODESIC_TOL = 1e-8


class GeodesicSolveError(RuntimeError):
    """Two-point geodesic solve failed; carries the best residual found."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (endpoint residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class FlatPlane:
    """R^2 with the Euclidean metric."""


@dataclass(frozen=True)
class FlatTorus:
    """Flat rectangular torus with fundamental domain [0,Px) x [0,Py)."""

    period_x: float
    period_y: float

    def __post_init__(self):
        if self.period_x <= 0 or self.period_y <= 0:
            raise ValueError("torus periods must be strictly positive")

    @property
    def periods(self) -> Array:
        return np.array([self.period_x, self.period_y])

    @property
    def injectivity_radius(self) -> float:
        return 0.5 * min(self.period_x, self.period_y)


@dataclass(frozen=True)
class ConformalPlane:
    """R^2 with metric e^{2*phi(q)} (dx^2 + dy^2).

    ``phi`` must be smooth with bounded gradient.  ``grad_phi`` is required
    (the Christoffel symbols are computed from it analytically);
    ``laplacian_phi`` is optional and falls back to finite differences where
    needed.  ``comparability_bounds`` stores (lambda, Lambda) with
    lambda*g <= g_e <= Lambda*g, i.e. lambda <= e^{-2*phi} <= Lambda.
    """

    phi: Callable[[Array], float]
    grad_phi: Callable[[Array], Array]
    laplacian_phi: Optional[Callable[[Array], float]] = None
    comparability_bounds: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        lam, big = self.comparability_bounds
        if lam <= 0 or big <= 0:
            raise ValueError("comparability bounds must be positive")


MetricModel = Union[FlatPlane, FlatTorus, ConformalPlane]


# ---------------------------------------------------------------------------
# basic chart helpers
# ---------------------------------------------------------------------------

def canonical_point(model: MetricModel, q: Array) -> Array:
    """Canonical representative of q (wraps into the fundamental domain)."""
    q = np.asarray(q, dtype=float)
    if isinstance(model, FlatTorus):
        return np.mod(q, model.periods)
    return q


def displacement(model: MetricModel, p: Array, q: Array) -> Array:
    """Shortest chart displacement from p to q (minimal lattice image)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = q - p
    if isinstance(model, FlatTorus):
        per = model.periods
        d = d - per * np.round(d / per)
    return d


def conformal_factor(model: MetricModel, q: Array) -> float:
    """Metric weight w with g = w * g_e (1 for the flat kinds)."""
    if isinstance(model, ConformalPlane):
        return float(np.exp(2.0 * model.phi(np.asarray(q, dtype=float))))
    return 1.0


def metric_tensor(model: MetricModel, q: Array) -> Array:
    """2x2 metric matrix g(q) in chart coordinates."""
    return conformal_factor(model, q) * np.eye(2)


def inner(model: MetricModel, q: Array, u: Array, v: Array) -> float:
    """g_q(u, v)."""
    return conformal_factor(model, q) * float(np.dot(u, v))


def norm_g(model: MetricModel, q: Array, v: Array) -> float:
    """|v|_g at q."""
    return float(np.sqrt(inner(model, q, v, v)))


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------

def distance(model: MetricModel, p: Array, q: Array) -> float:
    """Riemannian distance between chart points.

    Flat plane: Euclidean.  Flat torus: minimum over lattice translates.
    Conformal plane: two-point geodesic solve (shooting with bisection on the
    launch angle); raises :class:`GeodesicSolveError` on non-convergence.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if isinstance(model, (FlatPlane, FlatTorus)):
        return float(np.linalg.norm(displacement(model, p, q)))
    return _conformal_distance(model, p, q)


def distance_bracket(model: ConformalPlane, p: Array, q: Array) -> tuple[float, float]:
    """Comparability bracket for the conformal distance.

    With lambda*g <= g_e <= Lambda*g the geodesic distance satisfies
    |p-q|/sqrt(Lambda) <= d_g(p,q) <= |p-q|/sqrt(lambda).
    """
    lam, big = model.comparability_bounds
    de = float(np.linalg.norm(np.asarray(q, float) - np.asarray(p, float)))
    return de / np.sqrt(big), de / np.sqrt(lam)


def _geodesic_rhs(model: ConformalPlane):
    grad_phi = model.grad_phi

    def rhs(s, y):
        gx, gy = grad_phi(y[:2])
        vx, vy = y[2], y[3]
        ax = -(gx * (vx * vx - vy * vy) + 2.0 * gy * vx * vy)
        ay = -(gy * (vy * vy - vx * vx) + 2.0 * gx * vx * vy)
        return [vx, vy, ax, ay]

    return rhs


def _shoot(model: ConformalPlane, p: Array, theta: float, s_max: float):
    """Integrate a unit g-speed geodesic from p at chart angle theta."""
    w0 = np.exp(-model.phi(p))  # |v|_e for |v|_g = 1
    y0 = [p[0], p[1], w0 * np.cos(theta), w0 * np.sin(theta)]
    sol = solve_ivp(_geodesic_rhs(model), (0.0, s_max), y0,
                    method="RK45", rtol=1e-12, atol=1e-12, dense_output=True)
    return sol


def _conformal_distance(model: ConformalPlane, p: Array, q: Array) -> float:
    if np.allclose(p, q):
        return 0.0
    lo, hi = distance_bracket(model, p, q)
    s_max = 1.5 * hi
    theta0 = float(np.arctan2(q[1] - p[1], q[0] - p[0]))
    chord = q - p
    perp = np.array([-chord[1], chord[0]]) / np.linalg.norm(chord)

    def closest(sol):
        # arc parameter of the closest approach to q, Newton-refined on
        # F(s) = (pos - q) . vel using the dense output
        ss = np.linspace(0.0, sol.t[-1], 400)
        xy = sol.sol(ss)[:2].T
        d2 = np.sum((xy - q) ** 2, axis=1)
        s_star = float(ss[int(np.argmin(d2))])
        for _ in range(6):
            y = sol.sol(s_star)
            pos, vel = y[:2], y[2:]
            v2 = float(np.dot(vel, vel))
            if v2 == 0.0:
                break
            ds = -float(np.dot(pos - q, vel)) / v2
            s_star = float(np.clip(s_star + ds, 0.0, sol.t[-1]))
            if abs(ds) < 1e-14 * max(1.0, sol.t[-1]):
                break
        return s_star, sol.sol(s_star)[:2]

    def miss(theta):
        sol = _shoot(model, p, theta, s_max)
        s_star, xy = closest(sol)
        return float(np.dot(xy - q, perp))

    # bracket the launch angle around the chord direction
    span = 0.5 * np.pi
    m0 = miss(theta0)
    best = None
    for dth in np.linspace(0.02, span, 24):
        m1 = miss(theta0 + dth)
        if np.sign(m1) != np.sign(m0):
            best = (theta0, theta0 + dth) if m0 < m1 else (theta0 + dth, theta0)
            break
        m2 = miss(theta0 - dth)
        if np.sign(m2) != np.sign(m0):
            best = (theta0 - dth, theta0) if m2 < m0 else (theta0, theta0 - dth)
            break
    if best is None:
        if abs(m0) < GEODESIC_TOL:
            best = (theta0, theta0)
        else:
            raise GeodesicSolveError("could not bracket launch angle", abs(m0))
    if best[0] != best[1]:
        theta = brentq(miss, best[0], best[1], xtol=1e-13)
    else:
        theta = theta0
    sol = _shoot(model, p, theta, s_max)
    s_star, xy = closest(sol)
    resid = float(np.linalg.norm(xy - q))
    if resid > GEODESIC_TOL * max(1.0, hi):
        raise GeodesicSolveError("geodesic endpoint did not converge", resid)
    return s_star


# ---------------------------------------------------------------------------
# cut locus (flat torus only)
# ---------------------------------------------------------------------------

def _axis_torus_dist(x: float, px: float) -> float:
    d = np.mod(x, px)
    return float(min(d, px - d))


def cut_locus_distance(model: FlatTorus, c: Array, q: Array) -> float:
    """Distance of q to the cut locus of c (the join of two circles)."""
    if not isinstance(model, FlatTorus):
        raise ValueError("cut locus is only defined for the flat torus model")
    c = np.asarray(c, dtype=float)
    q = np.asarray(q, dtype=float)
    dx = _axis_torus_dist(q[0] - c[0] - 0.5 * model.period_x, model.period_x)
    dy = _axis_torus_dist(q[1] - c[1] - 0.5 * model.period_y, model.period_y)
    return min(dx, dy)


def cut_locus_membership(model: MetricModel, c: Array, q: Array, tube: float) -> bool:
    """True iff q lies within distance ``tube`` of the cut locus of c."""
    if not isinstance(model, FlatTorus):
        raise ValueError("cut locus membership requires a FlatTorus metric")
    return cut_locus_distance(model, c, q) <= tube + 1e-15


# ---------------------------------------------------------------------------
# covariant derivative and Laplace-Beltrami
# ---------------------------------------------------------------------------

def christoffel_quadratic(model: MetricModel, q: Array, v: Array) -> Array:
    """Gamma(q)(v, v) in chart coordinates (zero for the flat kinds)."""
    if not isinstance(model, ConformalPlane):
        return np.zeros(2)
    gx, gy = model.grad_phi(np.asarray(q, dtype=float))
    vx, vy = v
    return np.array([
        gx * (vx * vx - vy * vy) + 2.0 * gy * vx * vy,
        gy * (vy * vy - vx * vx) + 2.0 * gx * vx * vy,
    ])


def covariant_acceleration(model: MetricModel, q: Array, v: Array, a: Array) -> Array:
    """D/dt v = a + Gamma(q)(v, v) for a curve with velocity v, accel a."""
    return np.asarray(a, dtype=float) + christoffel_quadratic(model, q, v)


def christoffel_fd(model: MetricModel, q: Array, v: Array, step: float = 1e-6) -> Array:
    """Finite-difference oracle for Gamma(q)(v,v) from the metric tensor.

    Test oracle only; the analytic path is christoffel_quadratic.
    """
    q = np.asarray(q, dtype=float)

    def g_at(p):
        return metric_tensor(model, p)

    dg = np.empty((2, 2, 2))  # dg[l, i, j] = d g_ij / d x_l
    for l in range(2):
        e = np.zeros(2)
        e[l] = step
        dg[l] = (g_at(q + e) - g_at(q - e)) / (2.0 * step)
    ginv = np.linalg.inv(g_at(q))
    gamma = np.zeros(2)
    for k in range(2):
        for i in range(2):
            for j in range(2):
                s = 0.0
                for l in range(2):
                    s += ginv[k, l] * (dg[i][j, l] + dg[j][i, l] - dg[l][i, j])
                gamma[k] += 0.5 * s * v[i] * v[j]
    return gamma


def laplace_beltrami(model: MetricModel, f: Callable[[Array], float], q: Array,
                     step: Optional[float] = None,
                     singularities: Sequence[Array] = ()) -> float:
    """Second-order central-difference Laplace-Beltrami of a scalar field.

    The default step is DEFAULT_FD_STEP times the local feature scale
    (distance to the nearest declared singularity, or 1).  Raises if the
    stencil would touch a declared singularity.
    """
    q = np.asarray(q, dtype=float)
    scale = 1.0
    if len(singularities):
        dists = [float(np.linalg.norm(displacement(model, s, q))) for s in singularities]
        scale = max(min(dists), 0.0)
        if scale == 0.0:
            raise ValueError("evaluation point coincides with a declared singularity")
    h = step if step is not None else DEFAULT_FD_STEP * scale
    if len(singularities):
        for s in singularities:
            if float(np.linalg.norm(displacement(model, s, q))) <= h * np.sqrt(2.0):
                raise ValueError("finite-difference stencil touches a singularity")
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    lap_e = (f(q + ex) + f(q - ex) + f(q + ey) + f(q - ey) - 4.0 * f(q)) / (h * h)
    if isinstance(model, ConformalPlane):
        return float(np.exp(-2.0 * model.phi(q)) * lap_e)
    return float(lap_e)


def scalar_curvature(model: MetricModel, q: Array, step: float = 1e-5) -> float:
    """Scalar curvature of the chart metric (0 for flat kinds).

    For the conformal plane the scalar curvature is -2 e^{-2 phi} Lap_e phi;
    uses the supplied Laplacian when available, finite differences otherwise.
    """
    if not isinstance(model, ConformalPlane):
        return 0.0
    q = np.asarray(q, dtype=float)
    if model.laplacian_phi is not None:
        lap = model.laplacian_phi(q)
    else:
        ex = np.array([step, 0.0])
        ey = np.array([0.0, step])
        lap = (model.phi(q + ex) + model.phi(q - ex) + model.phi(q + ey)
               + model.phi(q - ey) - 4.0 * model.phi(q)) / (step * step)
    return float(-2.0 * np.exp(-2.0 * model.phi(q)) * lap)
