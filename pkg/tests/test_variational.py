import numpy as np
import pytest

from ncentre import geometry as G
from ncentre import potential as P
from ncentre import topology as T
from ncentre import variational as V


plane = G.FlatPlane()


def unit_circle_loop(n=1024):
    t = np.arange(n) / n * 2 * np.pi
    return V.DiscreteLoop(points=np.column_stack([np.cos(t), np.sin(t)]))


def random_loop(rng, n=128, centre=(3.0, 0.0)):
    t = np.arange(n) / n * 2 * np.pi
    x = centre[0] + np.cos(t) + 0.2 * np.cos(3 * t + rng.uniform(0, 6))
    y = centre[1] + np.sin(t) - 0.15 * np.sin(2 * t + rng.uniform(0, 6))
    return V.DiscreteLoop(points=np.column_stack([x, y]))


def test_loop_validation():
    with pytest.raises(ValueError):
        V.DiscreteLoop(points=np.zeros((32, 2)))
    with pytest.raises(ValueError):
        V.DiscreteLoop(points=np.zeros((65, 2)))


def test_constant_loop_zero_value(kepler_field):
    pts = np.tile([2.0, 1.0], (64, 1))
    ev = V.maupertuis_value(V.DiscreteLoop(points=pts), kepler_field)
    assert ev.kinetic == 0.0 and ev.value == 0.0


def test_unit_circle_closed_form(kepler_field):
    ev = V.maupertuis_value(unit_circle_loop(), kepler_field)
    assert abs(ev.kinetic - 2 * np.pi ** 2) < 1e-10
    assert abs(ev.potential - 2.0) < 1e-12
    assert abs(ev.value - 4 * np.pi ** 2) < 1e-10
    assert abs(ev.omega2 - 1 / np.pi ** 2) < 1e-12


def test_value_invariances(kepler_field):
    rng = np.random.default_rng(1)
    loop = random_loop(rng)
    v0 = V.maupertuis_value(loop, kepler_field).value
    # cyclic rotation of the points
    rolled = V.DiscreteLoop(points=np.roll(loop.points, 31, axis=0))
    assert V.maupertuis_value(rolled, kepler_field).value == pytest.approx(v0, abs=1e-11)
    # trigonometric grid resampling (affine time rescaling surrogate)
    fine = V.resample_loop(loop, 256, plane)
    assert V.maupertuis_value(fine, kepler_field).value == pytest.approx(v0, rel=1e-10)


def test_gradient_matches_finite_differences(kepler_field):
    rng = np.random.default_rng(2)
    loop = random_loop(rng)
    g = V.maupertuis_gradient(loop, kepler_field)
    pts = loop.points
    h = 1e-6
    floor = 1e-4 * np.abs(g).max()
    for k in [0, 17, 64, 100]:
        for d in range(2):
            pp = pts.copy()
            pp[k, d] += h
            pm = pts.copy()
            pm[k, d] -= h
            fd = (V.maupertuis_value(V.DiscreteLoop(points=pp), kepler_field).value
                  - V.maupertuis_value(V.DiscreteLoop(points=pm), kepler_field).value) / (2 * h)
            assert abs(g[k, d] - fd) <= 1e-5 * max(abs(fd), floor)


def test_guard_violation_reports_index(kepler_field):
    pts = unit_circle_loop(64).points.copy()
    pts[10] = [1e-12, 0.0]
    with pytest.raises(P.SingularityError):
        V.maupertuis_value(V.DiscreteLoop(points=pts), kepler_field)


def test_superadditivity_exact(kepler_field):
    rng = np.random.default_rng(3)
    loop = random_loop(rng, n=128)
    pts = loop.points
    whole = V.path_value(pts, kepler_field, closed=True)
    for _ in range(200):
        a, b = sorted(rng.integers(0, 128, 2))
        if b - a < 2 or b - a > 126:
            continue
        part1 = V.path_value(pts[a:b + 1], kepler_field, dt=1.0 / 128)
        part2 = V.path_value(np.vstack([pts[b:], pts[:a + 1]]), kepler_field,
                             dt=1.0 / 128)
        assert whole.value >= part1.value + part2.value - 1e-12 * whole.value


def test_minimizer_benchmark(bench_field, bench_minimizer, bench_rays):
    res = bench_minimizer
    assert res.word_verified
    assert not res.collision_trend
    assert res.gradient_norm <= 1e-8 * res.evaluation.value
    assert res.min_centre_distance > 0.1
    # frozen benchmark value (regression; equilateral unit side, alpha=1.5, h=1)
    assert res.evaluation.value == pytest.approx(199.0591754812, rel=1e-9)
    # balanced-parametrization identity: value = L_J^2 / 4
    lj = V.jacobi_length(res.loop, bench_field)
    assert res.evaluation.value == pytest.approx(lj ** 2 / 4.0, rel=1e-6)
    # minimizers are taut: no singular gons
    d = T.detect_singular_gons(res.loop.points, bench_rays, plane,
                               centres=bench_field.positions)
    assert not d.has_1gon and not d.has_2gon


def test_minimize_rejects_inadmissible(bench_field):
    word = T.HomotopyWord.make((1,))
    init = V.initial_loop(word, bench_field, n_points=128, seed=0)
    with pytest.raises(V.NotAdmissibleError):
        V.minimize_in_class(word, init, bench_field)


def test_minimize_wrong_init_rejected(bench_field):
    word = T.word_for_class(3, 1, 1)
    wrong = V.initial_loop(T.word_for_class(1, 1, 1), bench_field,
                           n_points=128, seed=0)
    with pytest.raises(ValueError):
        V.minimize_in_class(word, wrong, bench_field)


def test_collision_trend_forced_single_centre(bench_field):
    word = T.HomotopyWord.make((1,))
    init = V.initial_loop(word, bench_field, n_points=128, seed=0)
    cfg = V.MinimizeConfig(max_iters=4000, collision_threshold=1e-3,
                           collision_iters=40, polish=False)
    res = V.minimize_in_class(word, init, bench_field, cfg, force=True)
    assert res.collision_trend
    assert res.min_centre_distance < 1e-3


def test_reparametrize_balanced_circle(kepler_field):
    # unit Kepler circle: omega^2 = 1/pi^2, period = pi
    res = V.MinimizerResult(
        loop=unit_circle_loop(), evaluation=V.maupertuis_value(unit_circle_loop(), kepler_field),
        gradient_norm=0.0, min_centre_distance=1.0, word_verified=True,
        iterations=0, collision_trend=False, word=T.HomotopyWord.make((1,)))
    traj = V.reparametrize(res, kepler_field)
    assert traj.times[-1] == pytest.approx(np.pi * (1 - 1 / len(traj.times)), rel=1e-9)
    speeds = np.linalg.norm(traj.velocities, axis=1)
    assert np.allclose(speeds, 2.0, atol=1e-9)  # |v| = sqrt(2(h-V)) = 2


def test_newton_residual_rejects_constant(kepler_field):
    from ncentre.state import Trajectory
    traj = Trajectory(times=np.linspace(0, 1, 64),
                      positions=np.tile([2.0, 0.0], (64, 1)),
                      velocities=np.zeros((64, 2)))
    with pytest.raises(ValueError):
        V.newton_residual(traj, kepler_field)


def test_obstacle_inactive_constraint(kepler_field):
    # obstacle far below the free minimizer's closest approach: identical runs
    p = np.array([2.0, 0.0])
    q = np.array([-1.4, 1.4])
    cons_small = V.ObstacleConstraint(0, 0.01)
    cfg = V.ObstacleConfig(max_iters=1500)
    res_small = V.obstacle_minimize(cons_small, (p, q), kepler_field,
                                    ref_winding=0, n_points=200, config=cfg)
    assert not res_small.contact["active"]
    cons_tiny = V.ObstacleConstraint(0, 0.005)
    res_tiny = V.obstacle_minimize(cons_tiny, (p, q), kepler_field,
                                   ref_winding=0, n_points=200, config=cfg)
    assert res_small.evaluation.value == pytest.approx(
        res_tiny.evaluation.value, rel=1e-5)


def test_obstacle_contact_single_interval(kepler_field):
    # the asymptotic regime: winding class around one Newtonian centre
    p = np.array([0.35, 0.0])
    q = 0.35 * np.array([np.cos(np.pi - 0.4), np.sin(np.pi - 0.4)])
    cons = V.ObstacleConstraint(0, 0.05)
    res = V.obstacle_minimize(cons, (p, q), kepler_field, ref_winding=1,
                              n_points=300, config=V.ObstacleConfig(max_iters=4000))
    rep = V.blowup_rescale(res, cons, kepler_field)
    assert rep.contact_single_interval
    assert rep.contact_size > 0
    assert res.word_verified


def test_obstacle_infeasible_endpoints(kepler_field):
    cons = V.ObstacleConstraint(0, 0.2)
    with pytest.raises(ValueError):
        V.obstacle_minimize(cons, (np.array([0.1, 0.0]), np.array([-1.0, 0.0])),
                            kepler_field, ref_winding=1)


def test_align_and_hausdorff():
    rng = np.random.default_rng(4)
    t = np.arange(256) / 256 * 2 * np.pi
    a = np.column_stack([np.cos(t), np.sin(t)])
    b = np.roll(a, 37, axis=0)
    resid, aligned = V.align_loops(a, b)
    assert resid < 1e-10
    assert V.polyline_hausdorff(a, b) < 1e-9
    c = a * 1.01
    assert V.polyline_hausdorff(a, c) == pytest.approx(0.01, rel=0.05)


def test_torus_hausdorff_wraps(torus_field):
    torus = torus_field.metric
    t = np.arange(128) / 128
    a = np.column_stack([t, np.zeros(128)])            # lift starting at x=0
    b = np.column_stack([t + 0.4, np.full(128, 1e-6)])  # same circle, shifted lift
    d = V.torus_support_hausdorff(a, b, torus, winding=(1, 0))
    assert d < 1e-5
