"""Discrete Maupertuis functional, homotopy-constrained minimization, obstacles.

The functional on closed loops gamma: [0,1] -> M is

    value = K * U,   K = 1/2 int |gamma'|_g^2 dt,   U = int (h - V(gamma)) dt,

with omega^2 = U / K the reparametrization factor: psi(t) = gamma(omega t)
solves the motion equation at energy h when gamma is a critical point.

Closed loops are discretized on a uniform parameter grid with spectral (FFT)
differentiation and the periodic rectangle rule, which is exact to rounding
for band-limited loops (the closed-form circle benchmarks rely on this).
Open paths and loop restrictions use a per-segment chord scheme under which
K and U split additively, making super-additivity exact.

Torus loops are stored as lifts; the lattice winding vector is part of the
class and the closing segment is offset by winding * periods.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .geometry import (
    ConformalPlane,
    FlatPlane,
    FlatTorus,
    MetricModel,
    christoffel_quadratic,
    conformal_factor,
    displacement,
)
from .potential import (
    GUARD_RADIUS,
    PotentialField,
    SingularityError,
    evaluate_V,
    evaluate_V_batch,
    field_scale,
    grad_V,
    grad_V_batch,
    guard_distance_batch,
    min_centre_distance,
    min_centre_distance_batch,
)
from .state import EnergyShellState, Trajectory
from .topology import (
    HomotopyWord,
    RaySystem,
    cyclic_equal,
    crossing_word,
    default_rays,
    is_admissible,
    loop_from_word,
)

Array = np.ndarray
log = logging.getLogger(__name__)


class WordDriftError(RuntimeError):
    """The iterate left its homotopy class and rollback could not recover."""


class NotAdmissibleError(ValueError):
    """Minimization refused for a non-admissible class without force=True."""


# ---------------------------------------------------------------------------
# loops
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteLoop:
    """Closed polygonal loop on a uniform parameter grid over [0, 1].

    ``points`` holds lift coordinates; on the torus the loop closes up to
    winding * periods.  n must be even and at least 64.
    """

    points: Array
    winding: tuple[int, int] = (0, 0)

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        n = len(pts)
        if n < 64 or n % 2 != 0:
            raise ValueError("loops need an even number of points, n >= 64")

    @property
    def n(self) -> int:
        return len(self.points)


def _winding_offset(loop: DiscreteLoop, model: MetricModel) -> Array:
    if isinstance(model, FlatTorus):
        return np.array(loop.winding, dtype=float) * [model.period_x, model.period_y]
    return np.zeros(2)


def spectral_velocity(loop: DiscreteLoop, model: MetricModel) -> Array:
    """d gamma / dt at the nodes by FFT differentiation of the periodic part."""
    n = loop.n
    off = _winding_offset(loop, model)
    t = np.arange(n)[:, None] / n
    periodic = loop.points - t * off
    freqs = 2.0 * np.pi * np.fft.rfftfreq(n, d=1.0 / n)
    coef = np.fft.rfft(periodic, axis=0)
    coef = coef * (1j * freqs)[:, None]
    coef[n // 2] = 0.0  # Nyquist mode has no well-defined derivative
    return np.fft.irfft(coef, n=n, axis=0) + off


def _spectral_div(values: Array, n: int) -> Array:
    """Apply -D (the adjoint of spectral differentiation) to node values."""
    freqs = 2.0 * np.pi * np.fft.rfftfreq(n, d=1.0 / n)
    coef = np.fft.rfft(values, axis=0) * (1j * freqs)[:, None]
    coef[n // 2] = 0.0
    return -np.fft.irfft(coef, n=n, axis=0)


def resample_loop(loop: DiscreteLoop, n_new: int, model: MetricModel) -> DiscreteLoop:
    """Trigonometric resampling of the loop to a new grid size."""
    n = loop.n
    off = _winding_offset(loop, model)
    t = np.arange(n)[:, None] / n
    periodic = loop.points - t * off
    coef = np.fft.rfft(periodic, axis=0)
    if n_new >= n:
        out = np.zeros((n_new // 2 + 1, 2), dtype=complex)
        out[: coef.shape[0]] = coef
        out[n // 2] *= 0.5  # split the Nyquist coefficient symmetrically
    else:
        out = coef[: n_new // 2 + 1].copy()
        out[-1] = out[-1].real
    new = np.fft.irfft(out, n=n_new, axis=0) * (n_new / n)
    t_new = np.arange(n_new)[:, None] / n_new
    return DiscreteLoop(points=new + t_new * off, winding=loop.winding)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MaupertuisEvaluation:
    kinetic: float
    potential: float
    value: float
    omega2: float


def _metric_weights(points: Array, model: MetricModel) -> Array:
    if isinstance(model, ConformalPlane):
        return np.array([conformal_factor(model, p) for p in points])
    return np.ones(len(points))


def _potential_values(points: Array, fld: PotentialField) -> Array:
    return evaluate_V_batch(fld, points)


def check_guard(points: Array, fld: PotentialField, guard: float = GUARD_RADIUS):
    d = guard_distance_batch(fld, points)
    if np.any(d < guard):
        k = int(np.argmin(d))
        raise SingularityError(f"loop vertex {k} violates the guard radius")


def maupertuis_value(loop: DiscreteLoop, fld: PotentialField) -> MaupertuisEvaluation:
    """Spectral-grid evaluation of (K, U, K*U, omega^2) for a closed loop.

    Guard-radius violations surface from the batched potential evaluation.
    """
    n = loop.n
    vel = spectral_velocity(loop, fld.metric)
    w = _metric_weights(loop.points, fld.metric)
    kinetic = 0.5 * float(np.sum(w * np.sum(vel * vel, axis=1))) / n
    pot = float(np.sum(fld.h - _potential_values(loop.points, fld))) / n
    value = kinetic * pot
    omega2 = pot / kinetic if kinetic > 0 else math.inf
    return MaupertuisEvaluation(kinetic=kinetic, potential=pot, value=value, omega2=omega2)


def maupertuis_gradient(loop: DiscreteLoop, fld: PotentialField) -> Array:
    """Exact gradient of the discretized functional, (n, 2) per-vertex."""
    n = loop.n
    vel = spectral_velocity(loop, fld.metric)
    w = _metric_weights(loop.points, fld.metric)
    kinetic = 0.5 * float(np.sum(w * np.sum(vel * vel, axis=1))) / n
    pot = float(np.sum(fld.h - _potential_values(loop.points, fld))) / n

    dK = _spectral_div(w[:, None] * vel, n) / n
    if isinstance(fld.metric, ConformalPlane):
        speed2 = np.sum(vel * vel, axis=1)
        gphi = np.array([fld.metric.grad_phi(p) for p in loop.points])
        dK = dK + (w * speed2)[:, None] * gphi / n
    dU = -grad_V_batch(fld, loop.points) / n
    if isinstance(fld.metric, ConformalPlane):
        # dU must be the chart partial of V, not the Riemannian gradient
        phi_w = np.array([conformal_factor(fld.metric, p) for p in loop.points])
        dU = dU * phi_w[:, None]
    return pot * dK + kinetic * dU


def path_value(points: Array, fld: PotentialField, closed: bool = False,
               dt: Optional[float] = None,
               winding: tuple[int, int] = (0, 0)) -> MaupertuisEvaluation:
    """Chord-scheme evaluation; K and U split additively over segments.

    ``dt`` is the parameter length of one segment (defaults to 1/#segments).
    Used for open paths, obstacle runs and loop-restriction inequalities.
    """
    pts = np.asarray(points, dtype=float)
    if closed:
        off = np.zeros(2)
        if isinstance(fld.metric, FlatTorus):
            off = np.array(winding, float) * [fld.metric.period_x, fld.metric.period_y]
        segs = np.vstack([pts, pts[:1] + off])
    else:
        segs = pts
    n_seg = len(segs) - 1
    h_dt = dt if dt is not None else 1.0 / n_seg
    diffs = np.diff(segs, axis=0)
    mids = 0.5 * (segs[:-1] + segs[1:])
    w = _metric_weights(mids, fld.metric)
    sp2 = np.sum(diffs * diffs, axis=1) / h_dt ** 2
    kinetic = 0.5 * float(np.sum(w * sp2)) * h_dt
    pot = float(np.sum(fld.h - evaluate_V_batch(fld, mids))) * h_dt
    value = kinetic * pot
    omega2 = pot / kinetic if kinetic > 0 else math.inf
    return MaupertuisEvaluation(kinetic=kinetic, potential=pot, value=value, omega2=omega2)


def jacobi_length(loop: DiscreteLoop, fld: PotentialField) -> float:
    """L_J = int sqrt(2 (h - V)) |gamma'|_g dt on the spectral grid."""
    vel = spectral_velocity(loop, fld.metric)
    w = _metric_weights(loop.points, fld.metric)
    speed = np.sqrt(w * np.sum(vel * vel, axis=1))
    hv = fld.h - _potential_values(loop.points, fld)
    return float(np.sum(np.sqrt(2.0 * hv) * speed)) / loop.n


# ---------------------------------------------------------------------------
# minimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MinimizeConfig:
    grad_tol_rel: float = 1e-8
    max_iters: int = 50_000
    word_check_every: int = 10
    step_cap_factor: float = 0.5
    collision_threshold: Optional[float] = None  # default 10 * guard radius
    collision_iters: int = 100
    armijo_c1: float = 1e-4
    precondition: bool = True
    polish: bool = True
    polish_gtol_rel: float = 1e-11
    seed: int = 0
    guard_radius: float = GUARD_RADIUS


@dataclass
class MinimizerResult:
    loop: DiscreteLoop
    evaluation: MaupertuisEvaluation
    gradient_norm: float
    min_centre_distance: float
    word_verified: bool
    iterations: int
    collision_trend: bool
    word: HomotopyWord
    contact: Optional[dict] = None  # obstacle runs: contact-set report


def _min_centre_dist(points: Array, fld: PotentialField) -> float:
    return float(np.min(min_centre_distance_batch(fld, points)))


def torus_support_hausdorff(a: Array, b: Array, model,
                            winding: tuple[int, int] = (0, 0)) -> float:
    """Hausdorff distance between closed lift-loop supports, torus-wrapped."""
    from .geometry import FlatTorus

    if not isinstance(model, FlatTorus):
        return polyline_hausdorff(a, b)
    per = np.array([model.period_x, model.period_y])
    off = np.array(winding, float) * per
    a = np.vstack([a, a[:1] + off])
    b = np.vstack([b, b[:1] + off])

    def directed(p: Array, q: Array) -> float:
        seg_a = q[:-1]
        seg_b = q[1:]
        d = seg_b - seg_a
        denom = np.sum(d * d, axis=1)
        denom[denom == 0] = 1.0
        mids = 0.5 * (seg_a + seg_b)
        worst = 0.0
        for pt in p:
            # shift the point to the lattice image nearest each segment
            rel = pt - mids
            shift = per * np.round(rel / per)
            pp = pt - shift
            t = np.clip(np.sum((pp - seg_a) * d, axis=1) / denom, 0.0, 1.0)
            proj = seg_a + t[:, None] * d
            worst = max(worst, float(np.min(np.linalg.norm(proj - pp, axis=1))))
        return worst

    return max(directed(a, b), directed(b, a))


def _step_cap(points: Array, direction: Array, fld: PotentialField,
              cap_factor: float) -> float:
    """Largest step with |alpha * p_k| <= cap_factor * dist_k for all k."""
    norms = np.linalg.norm(direction, axis=1)
    mask = norms > 0
    if not np.any(mask):
        return math.inf
    d = guard_distance_batch(fld, points[mask])
    return float(np.min(cap_factor * d / norms[mask]))


def _verify_word(points: Array, winding, word: HomotopyWord, rays: RaySystem,
                 fld: PotentialField, seed: int) -> bool:
    try:
        w = crossing_word(points, rays, fld.metric, winding=winding, seed=seed)
    except Exception:
        return False
    return w.winding == tuple(winding) and cyclic_equal(w.letters, word.letters)


def minimize_in_class(word: HomotopyWord, init: DiscreteLoop, fld: PotentialField,
                      config: MinimizeConfig = MinimizeConfig(),
                      force: bool = False,
                      rays: Optional[RaySystem] = None) -> MinimizerResult:
    """Descend the Maupertuis functional within a fixed homotopy class.

    Nonlinear conjugate gradient (Polak-Ribiere with restarts) with Armijo
    backtracking.  Two guards preserve the class: the step never moves a
    vertex more than half its distance to the nearest centre, and the
    crossing word is re-verified every ``word_check_every`` iterations with
    rollback on mismatch.  A collision trend (sustained approach below the
    collision threshold) terminates the run with ``collision_trend=True``.
    """
    centres = fld.positions
    if rays is None:
        rays = default_rays(centres, fld.metric)
    verdict = is_admissible(word, centres, fld.metric)
    if verdict.verdict != "admissible" and not force:
        raise NotAdmissibleError(
            f"class {word} is {verdict.verdict} ({verdict.reason}); "
            "pass force=True to minimize anyway")
    if not _verify_word(init.points, init.winding, word, rays, fld, config.seed):
        raise ValueError("initial loop does not represent the requested class")

    x = init.points.copy()
    winding = init.winding
    n = init.n
    model = fld.metric

    def f_only(pts):
        return maupertuis_value(DiscreteLoop(points=pts, winding=winding), fld)

    def f_and_g(pts):
        lo = DiscreteLoop(points=pts, winding=winding)
        ev = maupertuis_value(lo, fld)
        gr = maupertuis_gradient(lo, fld)
        return ev, gr

    # Sobolev (H^1) preconditioner, diagonal in Fourier space: inverts the
    # dominant second-difference block U * (-D^2)/n of the Hessian so the
    # conjugate-gradient iteration count stops scaling with n^2
    kappa2 = (2.0 * np.pi * np.fft.rfftfreq(n, d=1.0 / n)) ** 2

    def precondition(g: Array, u_val: float) -> Array:
        if not config.precondition:
            return g
        c2 = u_val / n
        weights = 1.0 / (c2 * (2.0 * np.pi) ** 2 + c2 * kappa2)
        coef = np.fft.rfft(g, axis=0) * weights[:, None]
        return np.fft.irfft(coef, n=n, axis=0)

    ev, grad = f_and_g(x)
    z = precondition(grad, ev.potential)
    direction = -z
    gz_old = float(np.sum(grad * z))
    gg_old = float(np.sum(grad * grad))
    alpha_prev = None
    collision_threshold = (config.collision_threshold
                           if config.collision_threshold is not None
                           else 10.0 * config.guard_radius)
    collision_run = 0
    collision_trend = False
    last_verified = x.copy()
    rollbacks = 0
    iterations = 0

    steepest_retry = False
    for it in range(config.max_iters):
        iterations = it + 1
        gnorm = math.sqrt(gg_old)
        if gnorm <= config.grad_tol_rel * max(ev.value, 1e-300):
            break
        slope = float(np.sum(grad * direction))
        if slope >= 0.0:  # restart on non-descent direction
            direction = -z
            slope = -gz_old
        cap = _step_cap(x, direction, fld, config.step_cap_factor)
        alpha = min(cap, (2.0 * alpha_prev) if alpha_prev else cap)
        accepted = False
        for _ in range(60):
            x_try = x + alpha * direction
            try:
                ev_try = f_only(x_try)
            except SingularityError:
                alpha *= 0.5
                continue
            if ev_try.value <= ev.value + config.armijo_c1 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if not steepest_retry:
                direction = -z
                steepest_retry = True
                continue
            break  # line search exhausted at the preconditioned gradient
        steepest_retry = False
        x, ev_new = x_try, ev_try
        grad_try = maupertuis_gradient(DiscreteLoop(points=x, winding=winding), fld)
        z_try = precondition(grad_try, ev_new.potential)
        gz_new = float(np.sum(grad_try * z_try))
        beta = max(0.0, float(np.sum(grad_try * (z_try - z))) / gz_old)
        direction = -z_try + beta * direction
        grad, z, ev = grad_try, z_try, ev_new
        gz_old, gg_old = gz_new, float(np.sum(grad * grad))
        alpha_prev = alpha
        if (it + 1) % n == 0:
            direction = -z  # periodic restart

        mind = _min_centre_dist(x, fld)
        if mind < collision_threshold:
            collision_run += 1
            if collision_run >= config.collision_iters:
                collision_trend = True
                break
        else:
            collision_run = 0

        if (it + 1) % config.word_check_every == 0:
            if _verify_word(x, winding, word, rays, fld, config.seed):
                last_verified = x.copy()
                rollbacks = 0
            else:
                rollbacks += 1
                log.info("homotopy class drift at iteration %d; rolling back", it + 1)
                x = last_verified.copy()
                ev, grad = f_and_g(x)
                z = precondition(grad, ev.potential)
                gz_old = float(np.sum(grad * z))
                gg_old = float(np.sum(grad * grad))
                direction = -z
                alpha_prev = (alpha_prev or 1.0) * 0.25
                if rollbacks > 8:
                    raise WordDriftError("persistent homotopy-class drift")

    if config.polish and not collision_trend:
        x, ev, grad = _polish(x, winding, word, rays, fld, config)
        gg_old = float(np.sum(grad * grad))

    word_ok = _verify_word(x, winding, word, rays, fld, config.seed)
    loop = DiscreteLoop(points=x, winding=winding)
    return MinimizerResult(
        loop=loop, evaluation=ev, gradient_norm=math.sqrt(gg_old),
        min_centre_distance=_min_centre_dist(x, fld), word_verified=word_ok,
        iterations=iterations, collision_trend=collision_trend, word=word)


def _polish(x: Array, winding, word, rays, fld: PotentialField,
            config: MinimizeConfig):
    """Drive the stationarity equations grad F = 0 below the value floor.

    Near the minimum the value F is converged to machine precision long
    before the gradient is, so further descent on F stalls; damped Newton
    root-finding on the gradient (exact Hessian-vector products: K is
    quadratic in the spectral discretization and the V-Hessian is analytic
    on flat charts) keeps converging down to the gradient's rounding floor.
    Falls back to the plain loop when no analytic Hessian is available.
    """
    before = x.copy()
    try:
        pts = _newton_refine(x, winding, fld, config)
    except (ValueError, SingularityError):
        pts = x
    if not _verify_word(pts, winding, word, rays, fld, config.seed):
        log.info("polish drifted out of class; keeping pre-polish loop")
        pts = before
    lo = DiscreteLoop(points=pts, winding=winding)
    ev_b = maupertuis_value(DiscreteLoop(points=before, winding=winding), fld)
    ev_p = maupertuis_value(lo, fld)
    gr_b = maupertuis_gradient(DiscreteLoop(points=before, winding=winding), fld)
    gr_p = maupertuis_gradient(lo, fld)
    if float(np.linalg.norm(gr_p)) <= float(np.linalg.norm(gr_b)):
        return pts, ev_p, gr_p
    return before, ev_b, gr_b


def _newton_refine(x: Array, winding, fld: PotentialField,
                   config: MinimizeConfig, newton_iters: int = 12,
                   cg_iters: int = 400) -> Array:
    """Damped Newton iteration on grad F = 0 with exact Hessian products."""
    from .potential import hessian_V_batch

    n = len(x)
    model = fld.metric
    if isinstance(model, ConformalPlane):
        raise ValueError("Newton refinement needs a flat chart")
    freqs2 = (2.0 * np.pi * np.fft.rfftfreq(n, d=1.0 / n)) ** 2

    def neg_d2(v: Array) -> Array:
        coef = np.fft.rfft(v, axis=0) * freqs2[:, None]
        if n % 2 == 0:
            coef[n // 2] = 0.0
        return np.fft.irfft(coef, n=n, axis=0)

    x_cur = x.copy()
    for _ in range(newton_iters):
        loop = DiscreteLoop(points=x_cur, winding=winding)
        ev = maupertuis_value(loop, fld)
        g = maupertuis_gradient(loop, fld)
        gnorm = float(np.linalg.norm(g))
        if gnorm < 1e-13 * max(ev.value, 1.0):
            break
        dK = _spectral_div(spectral_velocity(loop, model), n) / n
        dU = -grad_V_batch(fld, x_cur) / n
        hess_v = hessian_V_batch(fld, x_cur)
        mu = 1e-10 * ev.potential / n * (2.0 * np.pi) ** 2

        def hvp(v_flat: Array) -> Array:
            v = v_flat.reshape(n, 2)
            term = ev.potential * neg_d2(v) / n
            term -= ev.kinetic * np.einsum("kij,kj->ki", hess_v, v) / n
            term += dK * float(np.sum(dU * v)) + dU * float(np.sum(dK * v))
            term += mu * v
            return term.ravel()

        delta = _cg_solve(hvp, -g.ravel(), cg_iters, ev.potential / n, freqs2, n)
        step = delta.reshape(n, 2)
        cap = _step_cap(x_cur, step, fld, config.step_cap_factor)
        t = min(1.0, cap)
        x_new = x_cur + t * step
        g_new = maupertuis_gradient(DiscreteLoop(points=x_new, winding=winding), fld)
        if float(np.linalg.norm(g_new)) < gnorm:
            x_cur = x_new
        else:
            # halve the damping once; give up on further Newton progress
            x_half = x_cur + 0.5 * t * step
            g_half = maupertuis_gradient(DiscreteLoop(points=x_half, winding=winding), fld)
            if float(np.linalg.norm(g_half)) < gnorm:
                x_cur = x_half
            else:
                break
    return x_cur


def _cg_solve(hvp, rhs: Array, max_iter: int, c2: float, freqs2: Array, n: int) -> Array:
    """Preconditioned CG on the Newton system (H is symmetric PSD + damping)."""
    weights = 1.0 / (c2 * (2.0 * np.pi) ** 2 + c2 * freqs2)

    def precond(v: Array) -> Array:
        coef = np.fft.rfft(v.reshape(n, 2), axis=0) * weights[:, None]
        return np.fft.irfft(coef, n=n, axis=0).ravel()

    x = np.zeros_like(rhs)
    r = rhs.copy()
    z = precond(r)
    p = z.copy()
    rz = float(r @ z)
    rhs_norm = float(np.linalg.norm(rhs))
    for _ in range(max_iter):
        hp = hvp(p)
        denom = float(p @ hp)
        if denom <= 0:
            break
        alpha = rz / denom
        x += alpha * p
        r -= alpha * hp
        if float(np.linalg.norm(r)) < 1e-10 * rhs_norm:
            break
        z = precond(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x


def initial_loop(word: HomotopyWord, fld: PotentialField, n_points: int = 512,
                 seed: int = 0, jitter: float = 0.0) -> DiscreteLoop:
    """Representative of a class, smoothed, ready as a minimization start."""
    pts, winding = loop_from_word(word.letters, fld.positions, fld.metric,
                                  winding=word.winding, n_points=n_points,
                                  seed=seed, jitter=jitter)
    return DiscreteLoop(points=pts, winding=winding)


# ---------------------------------------------------------------------------
# obstacle problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObstacleConstraint:
    centre_index: int
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("obstacle radius must be positive")


@dataclass(frozen=True)
class ObstacleConfig:
    grad_tol_rel: float = 1e-7
    max_iters: int = 20_000
    step_cap_factor: float = 0.5
    winding_check_every: int = 10
    armijo_c1: float = 1e-4
    seed: int = 0


def _project_outside(points: Array, centre: Array, radius: float,
                     fixed_ends: bool) -> Array:
    out = points.copy()
    rel = out - centre
    r = np.linalg.norm(rel, axis=1)
    inside = r < radius
    if fixed_ends:
        inside[0] = inside[-1] = False
    if np.any(inside):
        safe = np.where(r[inside] > 0, r[inside], 1.0)
        out[inside] = centre + rel[inside] * (radius / safe)[:, None]
    return out


def _principal_angle(delta: float) -> float:
    """Wrap to [-pi, pi); the same convention everywhere winding is counted."""
    return (delta + math.pi) % (2.0 * math.pi) - math.pi


def _open_path_winding(points: Array, centre: Array, ref_dir: Array) -> int:
    """Winding count of an open path around ``centre``.

    Measured as the net unwrapped angular sweep minus the principal
    endpoint difference, in whole turns (``ref_dir`` is kept for signature
    compatibility; the angle-based count has no ray degeneracies).
    """
    rel = np.asarray(points, float) - centre
    ang = np.unwrap(np.arctan2(rel[:, 1], rel[:, 0]))
    sweep = float(ang[-1] - ang[0])
    return int(round((sweep - _principal_angle(sweep)) / (2.0 * math.pi)))


def _contact_report(points: Array, centre: Array, radius: float,
                    tol: float = 1e-6) -> dict:
    r = np.linalg.norm(points - centre, axis=1)
    on = r <= radius * (1.0 + tol)
    idx = np.flatnonzero(on)
    if len(idx) == 0:
        return {"active": False, "interval": None, "single_interval": True,
                "indices": idx}
    single = bool(np.all(np.diff(idx) == 1))
    return {"active": True, "interval": (int(idx[0]), int(idx[-1])),
            "single_interval": single, "indices": idx}


def obstacle_minimize(constraint: ObstacleConstraint, endpoints: tuple[Array, Array],
                      fld: PotentialField, ref_winding: int,
                      n_points: int = 256,
                      config: ObstacleConfig = ObstacleConfig(),
                      init: Optional[Array] = None) -> MinimizerResult:
    """Fixed-endpoint Maupertuis minimization outside a metric ball.

    The inequality constraint dist(path, centre) >= radius is enforced by
    radial projection onto the ball complement after every step.  The path's
    class is pinned by its net winding around the obstacle centre
    (``ref_winding`` signed ray crossings), re-verified periodically.
    Returns the achieved value d(radius) and the contact-set report.
    """
    centre = fld.centres[constraint.centre_index].pos
    eps = constraint.radius
    sep = fld.min_centre_separation()
    if eps >= sep / 4.0:
        raise ValueError("obstacle radius must stay below centre separation / 4")
    p, q = (np.asarray(e, dtype=float) for e in endpoints)
    if np.linalg.norm(p - centre) < eps or np.linalg.norm(q - centre) < eps:
        raise ValueError("endpoints lie inside the obstacle")

    ref_dir = -(p - centre) - (q - centre)
    nrm = np.linalg.norm(ref_dir)
    ref_dir = np.array([0.0, -1.0]) if nrm < 1e-9 else ref_dir / nrm

    if init is None:
        x = None
        for shift in (0, 1, -1, 2, -2):
            cand = _initial_winding_arc(p, q, centre, eps,
                                        ref_winding + shift, n_points)
            cand = _project_outside(cand, centre, eps, fixed_ends=True)
            if _open_path_winding(cand, centre, ref_dir) == ref_winding:
                x = cand
                break
        if x is None:
            raise ValueError("could not construct a path with the requested winding")
    else:
        x = _project_outside(np.asarray(init, dtype=float).copy(), centre, eps, True)
        if _open_path_winding(x, centre, ref_dir) != ref_winding:
            raise ValueError("initial path does not realize the requested winding")

    def value(pts):
        return path_value(pts, fld, closed=False)

    def grad(pts):
        # chord-scheme gradient by segments: exact differentiation
        n_seg = len(pts) - 1
        h_dt = 1.0 / n_seg
        diffs = np.diff(pts, axis=0)
        mids = 0.5 * (pts[:-1] + pts[1:])
        w = _metric_weights(mids, fld.metric)
        kin = 0.5 * float(np.sum(w * np.sum(diffs * diffs, axis=1))) / h_dt
        pot = float(np.sum(fld.h - evaluate_V_batch(fld, mids))) * h_dt
        dK = np.zeros_like(pts)
        seg_term = (w[:, None] * diffs) / h_dt
        dK[:-1] -= seg_term
        dK[1:] += seg_term
        if isinstance(fld.metric, ConformalPlane):
            sp2 = np.sum(diffs * diffs, axis=1) / h_dt
            gphi = np.array([fld.metric.grad_phi(m) for m in mids])
            half = 0.5 * (w * sp2)[:, None] * gphi
            dK[:-1] += half
            dK[1:] += half
        dU = np.zeros_like(pts)
        gv = grad_V_batch(fld, mids)
        if isinstance(fld.metric, ConformalPlane):
            gv = gv * np.array([conformal_factor(fld.metric, m) for m in mids])[:, None]
        dU[:-1] -= 0.5 * gv * h_dt
        dU[1:] -= 0.5 * gv * h_dt
        g = pot * dK + kin * dU
        g[0] = g[-1] = 0.0  # endpoints fixed
        return g

    n_seg = len(x) - 1
    h_dt = 1.0 / n_seg

    def precond(g: Array, pot: float) -> Array:
        """Dirichlet H^1 preconditioner (tridiagonal solve, fixed ends).

        A diagonal floor is mixed in so corner-scale (high-frequency)
        defects keep a usable step instead of the full 1/k^2 suppression.
        """
        c2 = pot / h_dt
        c0 = 4.0 * c2 * (np.pi / n_seg) ** 2
        m = len(g) - 2
        ab = np.empty((2, m))
        ab[0, :] = -c2
        ab[1, :] = c0 + 2.0 * c2
        from scipy.linalg import solveh_banded
        out = np.zeros_like(g)
        out[1:-1, 0] = solveh_banded(ab, g[1:-1, 0])
        out[1:-1, 1] = solveh_banded(ab, g[1:-1, 1])
        k_cut = max(n_seg // 6, 8)
        theta = 1.0 / (c0 + 2.0 * c2 * (1.0 - math.cos(math.pi * k_cut / n_seg)))
        out += theta * g
        out[0] = out[-1] = 0.0
        return out

    def penalty_and_grad(pts, mu):
        rel = pts - centre
        r = np.linalg.norm(rel, axis=1)
        viol = np.maximum(eps - r, 0.0)
        pen = mu * float(np.sum(viol ** 2))
        gpen = np.zeros_like(pts)
        inside = viol > 0
        if np.any(inside):
            safe = np.where(r[inside] > 0, r[inside], 1.0)
            gpen[inside] = -2.0 * mu * (viol[inside] / safe)[:, None] * rel[inside]
        gpen[0] = gpen[-1] = 0.0
        return pen, gpen

    # phase 1: smooth penalty continuation (avoids the projection corners)
    ev = value(x)
    mu = 10.0 * max(ev.value, 1.0) / eps ** 2
    it_done = 0
    for _round in range(5):
        alpha_prev = None
        for _it in range(config.max_iters // 8):
            it_done += 1
            pen, gpen = penalty_and_grad(x, mu)
            g = grad(x) + gpen
            total = ev.value + pen
            gnorm = float(np.linalg.norm(g))
            if gnorm <= 10.0 * config.grad_tol_rel * max(total, 1e-300):
                break
            z = precond(g, ev.potential)
            slope = -float(np.sum(g * z))
            direction = -z
            cap = _step_cap(x[1:-1], direction[1:-1], fld, config.step_cap_factor)
            alpha = min(cap, (2.0 * alpha_prev) if alpha_prev else cap, 2.0)
            accepted = False
            for _ in range(60):
                x_try = x + alpha * direction
                x_try[0], x_try[-1] = p, q
                try:
                    ev_try = value(x_try)
                except SingularityError:
                    alpha *= 0.5
                    continue
                pen_try, _ = penalty_and_grad(x_try, mu)
                if ev_try.value + pen_try <= total + config.armijo_c1 * alpha * slope:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break
            if _open_path_winding(x_try, centre, ref_dir) != ref_winding:
                alpha_prev = alpha * 0.25
                continue
            x, ev = x_try, ev_try
            alpha_prev = alpha
        mu *= 10.0

    # phase 2: exact feasibility by projection, then projected descent
    x = _project_outside(x, centre, eps, fixed_ends=True)
    ev = value(x)
    alpha_prev = None
    for it in range(config.max_iters):
        it_done += 1
        g = grad(x)
        # project out the inward normal component on the active set
        rel = x - centre
        r = np.linalg.norm(rel, axis=1)
        active = r <= eps * (1 + 1e-9)
        if np.any(active):
            nrm_dir = rel[active] / r[active][:, None]
            radial = np.sum(g[active] * nrm_dir, axis=1)
            outward = radial < 0  # would push further inside after -g step
            fix = np.where(active)[0][~outward]
            if len(fix):
                nd = rel[fix] / r[fix][:, None]
                g[fix] -= np.sum(g[fix] * nd, axis=1)[:, None] * nd
        gnorm = float(np.linalg.norm(g))
        if gnorm <= config.grad_tol_rel * max(ev.value, 1e-300):
            break
        z = precond(g, ev.potential)
        slope = -float(np.sum(g * z))
        direction = -z
        cap = _step_cap(x[1:-1], direction[1:-1], fld, config.step_cap_factor)
        alpha = min(cap, (2.0 * alpha_prev) if alpha_prev else cap, 2.0)
        accepted = False
        for _ in range(60):
            x_try = _project_outside(x + alpha * direction, centre, eps, True)
            try:
                ev_try = value(x_try)
            except SingularityError:
                alpha *= 0.5
                continue
            if ev_try.value <= ev.value + config.armijo_c1 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        if _open_path_winding(x_try, centre, ref_dir) != ref_winding:
            # drifted class (typically a chord skipping past the obstacle in
            # the rough early phase): reject the step and shorten the trust
            alpha_prev = alpha * 0.25
            continue
        x, ev = x_try, ev_try
        alpha_prev = alpha

    x_balanced, t_phys = _balanced_resample(x, fld)
    contact = _contact_report(x_balanced, centre, eps)
    word = HomotopyWord.make(())
    mind = float(np.min(np.linalg.norm(x - centre, axis=1)))
    return MinimizerResult(
        loop=DiscreteLoop(points=_pad_to_loop(x), winding=(0, 0)),
        evaluation=ev, gradient_norm=float(np.linalg.norm(grad(x))),
        min_centre_distance=mind,
        word_verified=_open_path_winding(x, centre, ref_dir) == ref_winding,
        iterations=it_done, collision_trend=False, word=word,
        contact={"points": x_balanced, "points_raw": x, **contact,
                 "ref_dir": ref_dir, "winding": ref_winding,
                 "physical_time": t_phys})


def _balanced_resample(points: Array, fld: PotentialField) -> tuple[Array, float]:
    """Resample an open path uniformly in physical time.

    The continuum obstacle minimizer has constant energy, so the physical
    speed is sqrt(2 (h - V)); resampling at uniform increments of
    |dx| / speed restores the energy-balanced parametrization that the
    projection steps may have disturbed.  Returns (points, total time).
    """
    pts = np.asarray(points, dtype=float)
    mids = 0.5 * (pts[:-1] + pts[1:])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    v_mid = evaluate_V_batch(fld, mids)
    speed = np.sqrt(2.0 * np.maximum(fld.h - v_mid, 1e-12))
    dt = seg / speed
    t = np.concatenate([[0.0], np.cumsum(dt)])
    targets = np.linspace(0.0, t[-1], len(pts))
    out = np.empty_like(pts)
    out[:, 0] = np.interp(targets, t, pts[:, 0])
    out[:, 1] = np.interp(targets, t, pts[:, 1])
    return out, float(t[-1])


def _pad_to_loop(points: Array) -> Array:
    """Embed an open path into the DiscreteLoop container (storage only)."""
    pts = np.asarray(points, float)
    if len(pts) % 2:
        pts = np.vstack([pts, pts[-1:]])
    if len(pts) < 64:
        reps = int(np.ceil(64 / len(pts))) + 1
        pts = np.vstack([pts] * reps)[:64]
    return pts


def _initial_winding_arc(p: Array, q: Array, centre: Array, eps: float,
                         winding: int, n_points: int) -> Array:
    """Radial-in, wind, radial-out initial path with sweep base + 2pi*winding."""
    rp = p - centre
    rq = q - centre
    ap = math.atan2(rp[1], rp[0])
    aq = math.atan2(rq[1], rq[0])
    sweep = _principal_angle(aq - ap) + 2 * math.pi * winding
    r_mid = 2.5 * eps
    n3 = n_points // 3
    leg_in = np.linspace(np.linalg.norm(rp), r_mid, n3)[:, None] * \
        (rp / np.linalg.norm(rp))[None, :] + centre
    ang = ap + np.linspace(0.0, sweep, n_points - 2 * n3)
    arc = centre + r_mid * np.column_stack([np.cos(ang), np.sin(ang)])
    leg_out = np.linspace(r_mid, np.linalg.norm(rq), n3)[:, None] * \
        (rq / np.linalg.norm(rq))[None, :] + centre
    path = np.vstack([leg_in, arc, leg_out])
    # soften the leg/arc junction corners (interior Jacobi passes, ends fixed)
    for _ in range(30):
        inner = 0.5 * (path[:-2] + path[2:])
        path[1:-1] = 0.75 * path[1:-1] + 0.25 * inner
    return path


# ---------------------------------------------------------------------------
# reparametrization, residuals, blow-up
# ---------------------------------------------------------------------------

def reparametrize(result: MinimizerResult, fld: PotentialField) -> Trajectory:
    """Physical-time trajectory psi(t) = gamma(omega t), period T = 1/omega."""
    ev = result.evaluation
    if not (ev.omega2 > 0):
        raise ValueError("reparametrization needs omega^2 > 0")
    omega = math.sqrt(ev.omega2)
    loop = result.loop
    period = 1.0 / omega
    times = np.arange(loop.n) * (period / loop.n)
    velocities = omega * spectral_velocity(loop, fld.metric)
    return Trajectory(times=times, positions=loop.points.copy(),
                      velocities=velocities, status="completed")


def trajectory_energy_error(traj: Trajectory, fld: PotentialField) -> float:
    return float(np.max(np.abs(traj.energy_errors(fld))))


def newton_residual(traj: Trajectory, fld: PotentialField) -> float:
    """max_k |D/dt psi' + grad V(psi)|_g by centered second differences.

    Second-order in the sample count for a smooth solution; the constant
    trajectory is rejected (not a solution of the motion equation).
    """
    pos = traj.positions
    n = len(pos)
    if n < 8 or float(np.ptp(pos[:, 0]) + np.ptp(pos[:, 1])) < 1e-12:
        raise ValueError("trajectory is constant or too short for a residual")
    dt = traj.times[1] - traj.times[0]
    nxt = np.roll(pos, -1, axis=0)
    prv = np.roll(pos, 1, axis=0)
    acc = (nxt - 2 * pos + prv) / dt ** 2
    worst = 0.0
    for k in range(n):
        gamma_term = christoffel_quadratic(fld.metric, pos[k], traj.velocities[k])
        resid = acc[k] + gamma_term + grad_V(fld, pos[k])
        w = conformal_factor(fld.metric, pos[k])
        worst = max(worst, math.sqrt(w * float(resid @ resid)))
    return worst


@dataclass(frozen=True)
class BlowupReport:
    eps: float
    total_angular_variation: float
    contact_single_interval: bool
    contact_size: int
    rescaled_energy_offcontact: float
    kepler_energy_samples: Array


def blowup_rescale(result: MinimizerResult, constraint: ObstacleConstraint,
                   fld: PotentialField, window_radius: Optional[float] = None) -> BlowupReport:
    """Near-obstacle rescaling diagnostics of an obstacle minimizer.

    Rescales the path through u = (path - centre)/eps with the time dilation
    s = eps^{-(alpha+2)/2} * t and reports the total angular variation around
    the centre plus the rescaled off-contact energy of the zero-energy
    Kepler comparison (which vanishes like eps^alpha).
    """
    if result.contact is None or not result.contact["active"]:
        raise ValueError("blow-up rescaling needs an active contact set")
    from .topology import _resample_polyline

    centre = fld.centres[constraint.centre_index].pos
    spec = fld.centres[constraint.centre_index]
    eps = constraint.radius

    # angular variation and contact structure are support properties:
    # measure them on a dense arclength resampling of the path
    geom = _resample_polyline(result.contact["points_raw"], 3000, closed=False)
    rel = geom - centre
    r = np.linalg.norm(rel, axis=1)
    if window_radius is not None:
        keep = r <= window_radius
        rel = rel[keep]
        r = r[keep]
    ang = np.unwrap(np.arctan2(rel[:, 1], rel[:, 0]))
    dtheta = float(np.sum(np.abs(np.diff(ang))))
    on = np.flatnonzero(r <= eps * (1.0 + 1e-3))
    single = bool(len(on) and np.all(np.diff(on) == 1))

    # rescaled Kepler comparison on the balanced (uniform physical time)
    # samples, restricted to a fixed rescaled annulus off the contact set
    pts = result.contact["points"]
    dt_phys = result.contact["physical_time"] / (len(pts) - 1)
    vel = np.gradient(pts, dt_phys, axis=0)
    u = (pts - centre) / eps
    du = vel * eps ** (0.5 * spec.exponent)  # d u / d s
    ru = np.linalg.norm(u, axis=1)
    kep = 0.5 * np.sum(du * du, axis=1) - spec.mass / (spec.exponent * ru ** spec.exponent)
    r_max = float(np.max(ru))
    lo = min(2.0, 1.0 + 0.3 * (r_max - 1.0))
    off = (ru >= lo) & (ru <= max(2.0 * lo, 0.8 * r_max))
    off_energy = float(np.max(np.abs(kep[off]))) if np.any(off) else 0.0
    return BlowupReport(
        eps=eps, total_angular_variation=dtheta,
        contact_single_interval=single,
        contact_size=int(len(on)),
        rescaled_energy_offcontact=off_energy,
        kepler_energy_samples=kep)


# ---------------------------------------------------------------------------
# loop support comparison
# ---------------------------------------------------------------------------

def polyline_hausdorff(a: Array, b: Array, closed: bool = True) -> float:
    """Hausdorff distance between polyline supports (vertex-to-segment)."""
    def directed(p: Array, q: Array) -> float:
        segs_a = q
        segs_b = np.roll(q, -1, axis=0) if closed else q[1:]
        if not closed:
            segs_a = q[:-1]
        d = segs_b - segs_a
        denom = np.sum(d * d, axis=1)
        denom[denom == 0] = 1.0
        worst = 0.0
        for pt in p:
            t = np.clip(np.sum((pt - segs_a) * d, axis=1) / denom, 0.0, 1.0)
            proj = segs_a + t[:, None] * d
            dist = np.min(np.linalg.norm(proj - pt, axis=1))
            worst = max(worst, float(dist))
        return worst

    return max(directed(a, b), directed(b, a))


def align_loops(a: Array, b: Array) -> tuple[float, Array]:
    """Optimal cyclic alignment of two same-size loops.

    Finds the continuous parameter shift minimizing the max pointwise
    mismatch (FFT cross-correlation for the integer part, golden-section on
    the trigonometric fractional shift) and returns (residual, aligned b).
    """
    za = a[:, 0] + 1j * a[:, 1]
    zb = b[:, 0] + 1j * b[:, 1]
    n = len(za)
    fb = np.fft.fft(zb)
    corr = np.fft.ifft(np.fft.fft(za) * np.conj(fb))
    shift0 = int(np.argmax(np.real(corr)))
    k = np.fft.fftfreq(n, d=1.0 / n)

    def resample(shift: float) -> Array:
        # fractional cyclic roll: resample(s)[j] = b[(j - s) mod n]
        shifted = np.fft.ifft(fb * np.exp(-2j * np.pi * k * shift / n))
        return np.column_stack([shifted.real, shifted.imag])

    def residual(shift: float) -> float:
        return float(np.max(np.abs((a[:, 0] + 1j * a[:, 1])
                                   - (resample(shift) @ [1, 1j]))))

    best_s = min((shift0 + d for d in (-1, 0, 1)), key=residual)
    lo, hi = best_s - 1.0, best_s + 1.0
    for _ in range(60):  # golden-section refinement of the continuous shift
        m1 = lo + 0.382 * (hi - lo)
        m2 = lo + 0.618 * (hi - lo)
        if residual(m1) < residual(m2):
            hi = m2
        else:
            lo = m1
    best_s = 0.5 * (lo + hi)
    return residual(best_s), resample(best_s)
