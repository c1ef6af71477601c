"""Fixed-energy flow integration, section segments, and the first-return map.

The trajectory integrator is an adaptive embedded Runge-Kutta 5(4) pair
(scipy's RK45) on q' = v, v' = -grad V - Gamma(v, v), with dense output for
event localization.  Energy drift is monitored, never corrected in the state.

The section system consists of the outer disk boundary (the minimizer of the
class enclosing all three centres), attachment points p_i on it, and the
segments ell_i from each centre to p_i, built by fixed-endpoint Maupertuis
minimization and truncated at a small radius around their centre (extended
radially for crossing tests).  Crossing events are localized on the segment
chord and carry the sign of g(v, n_i) against the stored normal.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .geometry import FlatPlane, FlatTorus, MetricModel, conformal_factor
from .potential import (
    GUARD_RADIUS,
    PotentialField,
    ZeroPart,
    evaluate_V,
    field_scale,
    grad_V,
    min_centre_distance,
)
from .state import SHELL_RTOL, CrossingEvent, EnergyShellState, Trajectory
from .topology import HomotopyWord, _segments_cross, default_rays
from .variational import (
    DiscreteLoop,
    MinimizeConfig,
    MinimizerResult,
    minimize_in_class,
    initial_loop,
    path_value,
)

Array = np.ndarray
log = logging.getLogger(__name__)

#: default integrator tolerance for benchmark runs
DEFAULT_TOL = 1e-10

#: flow stops when closer than this multiple of the guard radius to a centre
COLLISION_STOP_FACTOR = 10.0


class ReturnFailure(RuntimeError):
    """First return did not complete; carries the partial trajectory."""

    def __init__(self, message: str, trajectory: Trajectory):
        super().__init__(message)
        self.trajectory = trajectory


# ---------------------------------------------------------------------------
# energy shell helpers
# ---------------------------------------------------------------------------

def shell_energy(state: EnergyShellState, fld: PotentialField) -> float:
    w = conformal_factor(fld.metric, state.q)
    return 0.5 * w * float(state.v @ state.v) + evaluate_V(fld, state.q)


def assert_on_shell(state: EnergyShellState, fld: PotentialField,
                    rtol: float = SHELL_RTOL) -> None:
    drift = abs(shell_energy(state, fld) - fld.h)
    if drift > rtol * max(abs(fld.h), 1.0):
        raise ValueError(f"state off the energy shell by {drift:.3e}")


def project_to_shell(q: Array, direction: Array, fld: PotentialField) -> EnergyShellState:
    """Shell state at q with velocity along ``direction`` (speed from h)."""
    q = np.asarray(q, dtype=float)
    direction = np.asarray(direction, dtype=float)
    nrm = float(np.linalg.norm(direction))
    if nrm == 0.0:
        raise ValueError("velocity direction must be nonzero")
    w = conformal_factor(fld.metric, q)
    k = fld.h - evaluate_V(fld, q)
    if k <= 0:
        raise ValueError("h - V(q) <= 0: no shell velocity at q")
    speed = math.sqrt(2.0 * k / w)
    return EnergyShellState(q, speed * direction / nrm)


# ---------------------------------------------------------------------------
# acceleration
# ---------------------------------------------------------------------------

def _accel_factory(fld: PotentialField):
    """Fast RHS closure; scalar-math fast path for exact flat-plane fields."""
    model = fld.metric
    plain = (isinstance(model, FlatPlane) and fld.distance_mode == "exact"
             and all(isinstance(c.regular_part, ZeroPart) for c in fld.centres))
    if plain:
        data = [(float(c.pos[0]), float(c.pos[1]), c.mass, c.exponent)
                for c in fld.centres]

        def accel(x: float, y: float):
            ax = ay = 0.0
            for (cx, cy, m, al) in data:
                dx = x - cx
                dy = y - cy
                r2 = dx * dx + dy * dy
                f = -m * r2 ** (-0.5 * (al + 2.0))
                ax += f * dx
                ay += f * dy
            return ax, ay

        return accel

    def accel_general(x: float, y: float):
        g = grad_V(fld, np.array([x, y]))
        return -g[0], -g[1]

    return accel_general


def _rhs_factory(fld: PotentialField):
    model = fld.metric
    if isinstance(model, (FlatPlane, FlatTorus)):
        accel = _accel_factory(fld)

        def rhs(t, y):
            ax, ay = accel(y[0], y[1])
            return (y[2], y[3], ax, ay)

        return rhs

    from .geometry import christoffel_quadratic

    def rhs_conformal(t, y):
        q = np.array([y[0], y[1]])
        v = np.array([y[2], y[3]])
        g = grad_V(fld, q)
        gamma = christoffel_quadratic(model, q, v)
        return (y[2], y[3], -g[0] - gamma[0], -g[1] - gamma[1])

    return rhs_conformal


# ---------------------------------------------------------------------------
# section system
# ---------------------------------------------------------------------------

@dataclass
class SectionSystem:
    """Outer boundary, attachment points, and the transversal segments."""

    boundary: Array                 # (n, 2) closed polyline of the disk edge
    attachment_points: Array        # (3, 2) p_i on the boundary
    segments: list[Array]           # per centre: polyline from truncation to p_i
    chord_units: Array              # (3, 2) unit vectors c_i -> p_i
    normals: Array                  # (3, 2) CCW normals of the chords
    chord_lengths: Array            # (3,)
    centres: Array                  # (3, 2)

    def segment_band(self, i: int) -> float:
        """Max deviation of segment polyline i from its chord."""
        c = self.centres[i]
        u = self.chord_units[i]
        n = self.normals[i]
        rel = self.segments[i] - c
        return float(np.max(np.abs(rel @ n)))


def build_section_system(fld: PotentialField,
                         outer_word: Optional[HomotopyWord] = None,
                         n_points: int = 512,
                         trunc_radius: Optional[float] = None,
                         config: Optional[MinimizeConfig] = None,
                         max_retries: int = 8) -> SectionSystem:
    """Disk boundary plus pairwise disjoint segments ell_i.

    The boundary is the minimizer of the class enclosing all three centres;
    a doubled outer word is collapsed to its simple circuit.  Each ell_i is
    a fixed-endpoint Maupertuis minimizer from (near) c_i to p_i, truncated
    at ``trunc_radius`` and extended radially to the centre for crossing
    tests.  On a disjointness failure the attachment points are re-chosen
    (up to ``max_retries``).
    """
    if len(fld.centres) != 3:
        raise ValueError("section systems are built for 3-centre configurations")
    if outer_word is None:
        outer_word = HomotopyWord.make((1, 2, 3))
    letters = outer_word.letters
    if len(letters) == 6:  # doubled outer class: same support, simple circuit
        outer_word = HomotopyWord.make(letters[:3])
    config = config or MinimizeConfig()
    init = initial_loop(outer_word, fld, n_points=n_points, seed=config.seed)
    boundary_res = minimize_in_class(outer_word, init, fld, config)
    boundary = boundary_res.loop.points
    centres = fld.positions
    centroid = centres.mean(axis=0)
    scale = field_scale(fld)
    trunc = trunc_radius if trunc_radius is not None else 0.05 * scale

    for attempt in range(max_retries):
        rot = 2.0 * np.pi * attempt / (3.0 * max_retries)
        segments = []
        attach = []
        ok = True
        for i in range(3):
            u0 = centres[i] - centroid
            u0 = u0 / np.linalg.norm(u0)
            if attempt:
                c, s = np.cos(rot), np.sin(rot)
                u0 = np.array([c * u0[0] - s * u0[1], s * u0[0] + c * u0[1]])
            p_i = _ray_boundary_intersection(centroid, centres[i], u0, boundary)
            if p_i is None:
                ok = False
                break
            seg = _segment_minimizer(fld, i, p_i, trunc, config)
            segments.append(seg)
            attach.append(p_i)
        if not ok:
            continue
        if _segments_disjoint(segments):
            chords = np.array([attach[i] - centres[i] for i in range(3)])
            lengths = np.linalg.norm(chords, axis=1)
            units = chords / lengths[:, None]
            normals = np.column_stack([-units[:, 1], units[:, 0]])
            return SectionSystem(
                boundary=boundary, attachment_points=np.array(attach),
                segments=segments, chord_units=units, normals=normals,
                chord_lengths=lengths, centres=centres)
    raise RuntimeError("could not build pairwise disjoint section segments")


def _ray_boundary_intersection(centroid: Array, centre: Array, u: Array,
                               boundary: Array) -> Optional[Array]:
    """First hit of the ray centre + s*u (s > 0) on the boundary polyline."""
    far = centre + 1e6 * u
    best_s, best_pt = math.inf, None
    n = len(boundary)
    for k in range(n):
        a = boundary[k]
        b = boundary[(k + 1) % n]
        crossed, t, uu, pt = _segments_cross(centre, far, a, b)
        if crossed:
            s = t * 1e6
            if s < best_s:
                best_s, best_pt = s, pt
    return best_pt


def _segment_minimizer(fld: PotentialField, i: int, p_i: Array, trunc: float,
                       config: MinimizeConfig, n_pts: int = 96) -> Array:
    """Fixed-endpoint Maupertuis minimizer from near c_i to p_i.

    The inner endpoint sits at ``trunc`` from the centre along the chord;
    the returned polyline is prepended with the radial extension to c_i.
    """
    c = fld.centres[i].pos
    u = (p_i - c) / np.linalg.norm(p_i - c)
    start = c + trunc * u
    t = np.linspace(0.0, 1.0, n_pts)
    x = start[None, :] + t[:, None] * (p_i - start)[None, :]

    from .potential import SingularityError, evaluate_V_batch, grad_V_batch

    def value(pts):
        return path_value(pts, fld, closed=False).value

    def grad(pts):
        n_seg = len(pts) - 1
        h_dt = 1.0 / n_seg
        diffs = np.diff(pts, axis=0)
        mids = 0.5 * (pts[:-1] + pts[1:])
        kin = 0.5 * float(np.sum(diffs * diffs)) / h_dt
        pot = float(np.sum(fld.h - evaluate_V_batch(fld, mids))) * h_dt
        dK = np.zeros_like(pts)
        seg_term = diffs / h_dt
        dK[:-1] -= seg_term
        dK[1:] += seg_term
        gv = grad_V_batch(fld, mids)
        dU = np.zeros_like(pts)
        dU[:-1] -= 0.5 * gv * h_dt
        dU[1:] -= 0.5 * gv * h_dt
        g = pot * dK + kin * dU
        g[0] = g[-1] = 0.0
        return g

    ev = value(x)
    for it in range(2000):
        g = grad(x)
        gn = float(np.linalg.norm(g))
        if gn < 1e-9 * max(ev, 1.0):
            break
        alpha = 0.1 / max(gn, 1e-12)
        ok = False
        for _ in range(50):
            x_try = x - alpha * g
            try:
                ev_try = value(x_try)
            except SingularityError:
                alpha *= 0.5
                continue
            if ev_try <= ev - 1e-4 * alpha * gn ** 2:
                ok = True
                break
            alpha *= 0.5
        if not ok:
            break
        x, ev = x_try, ev_try
    return np.vstack([c[None, :], x])


def _segments_disjoint(segments: Sequence[Array]) -> bool:
    for i in range(len(segments)):
        for j in range(i + 1, len(segments)):
            a = segments[i]
            b = segments[j]
            for k in range(len(a) - 1):
                for l in range(len(b) - 1):
                    crossed, t, u, _ = _segments_cross(a[k], a[k + 1], b[l], b[l + 1])
                    if crossed or t is None:
                        return False
    return True


# ---------------------------------------------------------------------------
# integration with events
# ---------------------------------------------------------------------------

def _point_in_polygon(q: Array, poly: Array) -> bool:
    x, y = q
    j = len(poly) - 1
    inside = False
    for i in range(len(poly)):
        xi, yi = poly[i]
        xj, yj = poly[j]
        if (yi > y) != (yj > y):
            xcross = (xj - xi) * (y - yi) / (yj - yi) + xi
            if x < xcross:
                inside = not inside
        j = i
    return inside


#: events earlier than this fraction of the horizon are the starting crossing
MIN_EVENT_FRACTION = 1e-9


def integrate(state: EnergyShellState, t_max: float, fld: PotentialField,
              tol: float = DEFAULT_TOL,
              system: Optional[SectionSystem] = None,
              stop_at_first_crossing: bool = False,
              check_disk: bool = False,
              samples_per_unit_time: float = 64.0,
              shell_check: bool = True) -> Trajectory:
    """Adaptive RK5(4) flow with signed section-crossing events.

    Crossing candidates are localized on the segment chords (linear event
    functions) and validated against the along-chord window and the segment
    polyline band; disk exit and collision proximity stop the run with the
    corresponding status.  Energy drift is never corrected in the state.
    """
    if shell_check:
        assert_on_shell(state, fld, rtol=1e-6)
    rhs = _rhs_factory(fld)
    centres = fld.positions
    stop_r = COLLISION_STOP_FACTOR * GUARD_RADIUS

    events_found: list[CrossingEvent] = []
    times: list[Array] = []
    positions: list[Array] = []
    velocities: list[Array] = []
    status = "time_limit"

    def make_chord_event(i):
        c = centres[i] if system is not None else None
        nrm = system.normals[i] if system is not None else None

        def ev(t, y):
            return (y[0] - c[0]) * nrm[0] + (y[1] - c[1]) * nrm[1]

        ev.terminal = True
        ev.direction = 0
        return ev

    def collision_event(t, y):
        d = min(math.hypot(y[0] - c[0], y[1] - c[1]) for c in centres)
        return d - stop_r

    collision_event.terminal = True
    collision_event.direction = -1

    ev_funcs = []
    if system is not None:
        ev_funcs = [make_chord_event(i) for i in range(3)]
    ev_funcs.append(collision_event)

    t0 = 0.0
    y0 = state.as_vector()
    remaining = t_max
    scale_t = max(t_max, 1e-12)
    guard_t = 1e-12 * scale_t

    while remaining > guard_t:
        sol = solve_ivp(rhs, (t0, t0 + remaining), y0, method="RK45",
                        rtol=tol, atol=tol, dense_output=True, events=ev_funcs)
        n_dense = max(int(samples_per_unit_time * (sol.t[-1] - t0)), 8)
        ts = np.linspace(t0, sol.t[-1], n_dense, endpoint=False)
        ys = sol.sol(ts)
        times.append(ts)
        positions.append(ys[:2].T)
        velocities.append(ys[2:].T)

        if sol.status == 1:  # an event fired
            hit = None
            for idx, te in enumerate(sol.t_events):
                if len(te):
                    t_ev = te[0]
                    if hit is None or t_ev < hit[1]:
                        hit = (idx, t_ev)
            idx, t_ev = hit
            y_ev = sol.sol(t_ev)
            if idx == len(ev_funcs) - 1:
                status = "collision_proximity"
                times.append(np.array([t_ev]))
                positions.append(y_ev[:2][None, :])
                velocities.append(y_ev[2:][None, :])
                break
            # candidate chord crossing: validate window and band
            i = idx
            q_ev = y_ev[:2]
            v_ev = y_ev[2:]
            c = centres[i]
            along = float((q_ev - c) @ system.chord_units[i])
            band = max(2.0 * system.segment_band(i), 1e-7)
            dist_chord = abs(float((q_ev - c) @ system.normals[i]))
            qualify = (-0.02 * system.chord_lengths[i] <= along
                       <= 1.001 * system.chord_lengths[i])
            if qualify and t_ev >= MIN_EVENT_FRACTION * scale_t:
                sgn = 1 if float(v_ev @ system.normals[i]) > 0 else -1
                events_found.append(CrossingEvent(time=float(t_ev),
                                                  segment_index=i + 1,
                                                  sign=sgn, point=q_ev.copy()))
                if stop_at_first_crossing:
                    status = "completed"
                    times.append(np.array([t_ev]))
                    positions.append(q_ev[None, :])
                    velocities.append(v_ev[None, :])
                    break
            # resume just past the event
            t_resume = t_ev + guard_t * 10
            y0 = sol.sol(t_resume)
            t0 = t_resume
            remaining = t_max - t0

            if check_disk and system is not None:
                if not _point_in_polygon(y0[:2], system.boundary):
                    status = "left_disk"
                    break
            continue

        # no event: integrated to the end of the chunk
        status = "completed" if not stop_at_first_crossing else "time_limit"
        times.append(np.array([sol.t[-1]]))
        yl = sol.y[:, -1]
        positions.append(yl[:2][None, :])
        velocities.append(yl[2:][None, :])
        break

    traj = Trajectory(times=np.concatenate(times),
                      positions=np.vstack(positions),
                      velocities=np.vstack(velocities),
                      events=events_found, status=status)
    return traj


def first_return(state: EnergyShellState, system: SectionSystem,
                 fld: PotentialField, tol: float = DEFAULT_TOL,
                 t_max: Optional[float] = None) -> tuple[EnergyShellState, float, CrossingEvent]:
    """Next transversal segment crossing inside the disk.

    Raises ReturnFailure (with the partial trajectory) on disk exit,
    collision proximity, or time-out before the crossing.
    """
    if t_max is None:
        t_max = 40.0 * field_scale(fld) / math.sqrt(2.0 * max(fld.h, 1e-6))
    traj = integrate(state, t_max, fld, tol=tol, system=system,
                     stop_at_first_crossing=True, check_disk=True)
    if not traj.events:
        raise ReturnFailure(f"no return before status={traj.status}", traj)
    ev = traj.events[0]
    k = traj.n_samples - 1
    new_state = EnergyShellState(traj.positions[k], traj.velocities[k])
    return new_state, ev.time, ev


def returns(state: EnergyShellState, system: SectionSystem, fld: PotentialField,
            count: int, tol: float = DEFAULT_TOL) -> list[CrossingEvent]:
    """Compose first_return ``count`` times, collecting the events."""
    out = []
    s = state
    for _ in range(count):
        s, t_ret, ev = first_return(s, system, fld, tol=tol)
        out.append(ev)
    return out


def itinerary(state: EnergyShellState, system: SectionSystem, fld: PotentialField,
              K: int, tol: float = DEFAULT_TOL):
    """Symbol window (s_{-K}, ..., s_K) of the orbit through ``state``.

    s_0 is the signed symbol of the segment the base point lies on; forward
    symbols come from successive returns, backward symbols from the
    velocity-reversed flow with signs flipped.  Early disk exit truncates
    the window (marked in the result).
    """
    from .symbolic import SymbolWindow  # symbolic builds on flow; import here

    i0 = nearest_segment(state.q, system)
    sgn0 = 1 if float(state.v @ system.normals[i0]) > 0 else -1
    forward: list[int] = []
    truncated_fwd = truncated_bwd = False
    s = state
    for _ in range(K):
        try:
            s, _, ev = first_return(s, system, fld, tol=tol)
        except ReturnFailure:
            truncated_fwd = True
            break
        forward.append(ev.symbol)
    backward: list[int] = []
    s = state.reversed()
    for _ in range(K):
        try:
            s, _, ev = first_return(s, system, fld, tol=tol)
        except ReturnFailure:
            truncated_bwd = True
            break
        backward.append(-ev.symbol)
    symbols = tuple(reversed(backward)) + (sgn0 * (i0 + 1),) + tuple(forward)
    return SymbolWindow(symbols=symbols, origin=len(backward),
                        truncated=(truncated_bwd or truncated_fwd))


@dataclass(frozen=True)
class ReturnChainReport:
    """Hop-wise verification of the first-return map around a closed orbit."""

    symbols: tuple[int, ...]         # periodic block
    return_times: tuple[float, ...]
    max_state_gap: float             # worst relative mismatch at the landings
    symbols_match: bool              # every hop lands on the next crossing


def orbit_crossing_states(traj: Trajectory, system: SectionSystem,
                          fld: PotentialField,
                          tol: float = DEFAULT_TOL) -> tuple[list[EnergyShellState], list[int]]:
    """Shell states of a closed trajectory at each of its section crossings.

    Each state is produced by a short flow from the exact grid sample just
    before the crossing, so it carries no interpolation error.
    """
    evs = polyline_crossings(traj.positions, system, velocities=traj.velocities)
    n = len(traj.positions)
    dt = traj.times[1] - traj.times[0]
    states: list[EnergyShellState] = []
    symbols: list[int] = []
    for ev in evs:
        k = int(ev.time * n) % n
        start = EnergyShellState(traj.positions[k], traj.velocities[k])
        probe = integrate(start, 4.0 * dt, fld, tol=tol, system=system,
                          stop_at_first_crossing=True, shell_check=False)
        if not probe.events or probe.events[0].segment_index != ev.segment_index:
            continue
        m = probe.n_samples - 1
        states.append(EnergyShellState(probe.positions[m], probe.velocities[m]))
        symbols.append(probe.events[0].symbol)
    return states, symbols


def verify_return_chain(states: Sequence[EnergyShellState], symbols: Sequence[int],
                        system: SectionSystem, fld: PotentialField,
                        tol: float = DEFAULT_TOL) -> ReturnChainReport:
    """Apply one first return from every crossing state of a closed orbit.

    Checks that the flow hop from crossing k lands on crossing k+1 (cyclic)
    with the matching symbol; the worst landing mismatch bounds the
    verification error.  This composes to the full periodic itinerary while
    keeping each numerical horizon to a single return time.
    """
    m = len(states)
    gaps = []
    times = []
    ok = True
    for k in range(m):
        target = states[(k + 1) % m]
        s_new, t_ret, ev = first_return(states[k], system, fld, tol=tol)
        times.append(t_ret)
        if ev.symbol != symbols[(k + 1) % m]:
            ok = False
        scale = max(float(np.linalg.norm(target.as_vector())), 1.0)
        gaps.append(float(np.linalg.norm(s_new.as_vector() - target.as_vector())) / scale)
    return ReturnChainReport(symbols=tuple(symbols), return_times=tuple(times),
                             max_state_gap=max(gaps) if gaps else math.inf,
                             symbols_match=ok)


def periodic_itinerary(state: EnergyShellState, system: SectionSystem,
                       fld: PotentialField, tol: float = DEFAULT_TOL,
                       close_tol: float = 2e-2, max_returns: int = 64):
    """Symbol block of a periodic orbit, detected by phase-space closure.

    Composes first returns until the state recurs within ``close_tol`` in
    (q, v); the collected symbols form the periodic window.  Exponential
    error growth limits honest finite windows on hyperbolic orbits to a few
    periods, so periodic orbits are encoded by their closing block instead.
    Raises ReturnFailure when the orbit does not close within
    ``max_returns`` crossings.
    """
    from .symbolic import SymbolWindow

    i0 = nearest_segment(state.q, system)
    sgn0 = 1 if float(state.v @ system.normals[i0]) > 0 else -1
    start_vec = state.as_vector()
    scale = max(float(np.linalg.norm(start_vec)), 1.0)
    symbols = [sgn0 * (i0 + 1)]
    s = state
    total_t = 0.0
    for k in range(max_returns):
        s, t_ret, ev = first_return(s, system, fld, tol=tol)
        total_t += t_ret
        gap = float(np.linalg.norm(s.as_vector() - start_vec)) / scale
        if gap < close_tol:
            return SymbolWindow.periodic(symbols), total_t
        symbols.append(ev.symbol)
    raise ReturnFailure(
        f"orbit did not close after {max_returns} returns",
        Trajectory(times=np.zeros(1), positions=state.q[None, :],
                   velocities=state.v[None, :], status="time_limit"))


def nearest_segment(q: Array, system: SectionSystem) -> int:
    """Index of the section segment whose chord passes closest to q."""
    best, best_d = 0, math.inf
    for i in range(3):
        rel = q - system.centres[i]
        along = float(rel @ system.chord_units[i])
        perp = abs(float(rel @ system.normals[i]))
        if -0.05 <= along <= 1.05 * system.chord_lengths[i] and perp < best_d:
            best, best_d = i, perp
    return best


# ---------------------------------------------------------------------------
# crossings of a sampled closed path (itineraries without the flow)
# ---------------------------------------------------------------------------

def polyline_crossings(points: Array, system: SectionSystem,
                       velocities: Optional[Array] = None) -> list[CrossingEvent]:
    """Signed chord crossings of a closed polygonal path, in path order.

    The sign uses the path direction (or supplied velocities) against the
    stored normals; time is the fractional vertex index.
    """
    n = len(points)
    out = []
    for k in range(n):
        p = points[k]
        q = points[(k + 1) % n]
        for i in range(3):
            c = system.centres[i]
            far = c + system.chord_units[i] * system.chord_lengths[i]
            crossed, t, u, pt = _segments_cross(p, q, c, far)
            if crossed:
                vel = (velocities[k] if velocities is not None else (q - p))
                sgn = 1 if float(vel @ system.normals[i]) > 0 else -1
                out.append(CrossingEvent(time=(k + t) / n, segment_index=i + 1,
                                         sign=sgn, point=np.asarray(pt)))
    out.sort(key=lambda e: e.time)
    return out


def section_state_from_trajectory(traj: Trajectory, system: SectionSystem,
                                  fld: PotentialField, segment: int = 1,
                                  tol: float = DEFAULT_TOL) -> EnergyShellState:
    """Shell state at the first crossing of a given segment (1-based).

    Starts the flow at the sample just before the crossing (grid samples are
    exact states) and lets event localization place the state on the
    section, so no interpolation error enters.
    """
    evs = polyline_crossings(traj.positions, system, velocities=traj.velocities)
    n = len(traj.positions)
    t_span = traj.times[-1] - traj.times[0] + (traj.times[1] - traj.times[0])
    for ev in evs:
        if ev.segment_index != segment:
            continue
        k = int(ev.time * n) % n
        start = EnergyShellState(traj.positions[k], traj.velocities[k])
        horizon = 4.0 * t_span / n
        probe = integrate(start, horizon, fld, tol=tol, system=system,
                          stop_at_first_crossing=True, shell_check=False)
        for got in probe.events:
            if got.segment_index == segment:
                m = probe.n_samples - 1
                return EnergyShellState(probe.positions[m], probe.velocities[m])
    raise ValueError(f"trajectory never crosses segment {segment}")
