import numpy as np
import pytest

from ncentre import geometry as G
from ncentre import potential as P


plane = G.FlatPlane()


def test_centre_spec_validation():
    with pytest.raises(ValueError):
        P.CentreSpec((0, 0), mass=-1.0)
    with pytest.raises(ValueError):
        P.CentreSpec((0, 0), exponent=2.0)
    with pytest.raises(ValueError):
        P.CentreSpec((0, 0), exponent=0.5)
    with pytest.raises(ValueError):
        P.PotentialField(metric=plane, energy=1.0,
                         centres=(P.CentreSpec((0, 0)), P.CentreSpec((0, 0))))


def test_evaluate_V_kepler(kepler_field):
    assert P.evaluate_V(kepler_field, (1.0, 0.0)) == pytest.approx(-1.0)
    assert P.evaluate_V(kepler_field, (2.0, 0.0)) == pytest.approx(-0.5)
    with pytest.raises(P.SingularityError):
        P.evaluate_V(kepler_field, (1e-13, 0.0))


def test_evaluate_V_two_centres():
    two = P.PotentialField(metric=plane, energy=1.0,
                           centres=(P.CentreSpec((1.0, 0.0)),
                                    P.CentreSpec((-1.0, 0.0))))
    assert P.evaluate_V(two, (0.0, 0.0)) == pytest.approx(-2.0)
    # gradient vanishes by symmetry at the midpoint
    assert np.allclose(P.grad_V(two, (0.0, 0.0)), 0.0, atol=1e-14)


def test_grad_V_kepler(kepler_field):
    assert np.allclose(P.grad_V(kepler_field, (1.0, 0.0)), [1.0, 0.0])


def test_grad_matches_finite_differences(bench_field):
    rng = np.random.default_rng(5)
    h = 1e-7
    checked = 0
    while checked < 40:
        q = rng.uniform(-1.5, 1.5, 2)
        if P.min_centre_distance(bench_field, q) < 0.1:
            continue
        checked += 1
        g = P.grad_V(bench_field, q)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            fd = (P.evaluate_V(bench_field, q + e)
                  - P.evaluate_V(bench_field, q - e)) / (2 * h)
            assert abs(g[k] - fd) <= 1e-5 * max(abs(fd), 1e-3)


def test_laplacian_V_closed_form(kepler_field):
    # alpha = 1: Lap V = -1/r^3
    assert P.laplacian_V(kepler_field, (2.0, 0.0)) == pytest.approx(-0.125)
    # cross-check against the central-difference Laplace-Beltrami
    q = np.array([1.3, 0.4])
    fd = G.laplace_beltrami(plane, lambda p: P.evaluate_V(kepler_field, p), q,
                            singularities=[np.zeros(2)])
    assert P.laplacian_V(kepler_field, q) == pytest.approx(fd, rel=1e-5)


def test_energy_threshold_plane(kepler_field, bench_field):
    est = P.energy_threshold(kepler_field)
    assert est.value == 0.0 and not est.attained
    est = P.energy_threshold(bench_field)
    assert est.value == 0.0 and not est.attained
    assert est.certified_below(1.0)


def test_energy_threshold_torus(torus_field):
    est = P.energy_threshold(torus_field)
    # farthest point is the half-period corner at distance sqrt(2)/2
    assert est.value == pytest.approx(-np.sqrt(2.0), abs=1e-6)
    assert est.attained


def test_energy_threshold_constant_part():
    fld = P.PotentialField(
        metric=plane, energy=10.0,
        centres=(P.CentreSpec((0.0, 0.0), regular_part=P.ConstantPart(5.0)),))
    est = P.energy_threshold(fld)
    assert est.value == pytest.approx(5.0)  # V -> 5 at infinity


def test_jacobi_curvature_kepler_closed_form(kepler_field):
    for r in [0.05, 0.3, 1.0, 4.0, 10.0]:
        rep = P.jacobi_curvature(kepler_field, (r, 0.0))
        assert rep.kappa_J == pytest.approx(-1.0 / (1.0 + r) ** 3, abs=1e-12)
        assert rep.kappa == 0.0
    # r -> 0 limit matches the asymptotic coefficient -h
    rep = P.jacobi_curvature(kepler_field, (1e-4, 0.0))
    assert rep.kappa_J == pytest.approx(-1.0, rel=5e-4)


def test_jacobi_report_consistency(kepler_field):
    q = np.array([0.8, 0.3])
    rep = P.jacobi_curvature(kepler_field, q)
    hv = kepler_field.h - P.evaluate_V(kepler_field, q)
    recomputed = (rep.kappa / hv + float(rep.gradV @ rep.gradV) / hv ** 3
                  + rep.laplacianV / hv ** 2)
    assert rep.kappa_J == pytest.approx(recomputed, rel=1e-12)


def test_jacobi_curvature_negative_on_grid(bench_field):
    rng = np.random.default_rng(7)
    for _ in range(200):
        q = rng.uniform(-2, 2, 2)
        try:
            rep = P.jacobi_curvature(bench_field, q)
        except (P.SingularityError, ValueError):
            continue
        assert rep.kappa_J <= 1e-12


def test_jacobi_negative_bounded_near_centres(bench_field):
    # Lemma-style check: negative and bounded on an annulus around a centre
    c = bench_field.centres[0].pos
    vals = []
    for r in np.geomspace(1e-3, 0.05, 12):
        for th in np.linspace(0, 2 * np.pi, 8, endpoint=False):
            q = c + r * np.array([np.cos(th), np.sin(th)])
            rep = P.jacobi_curvature(bench_field, q)
            vals.append(rep.kappa_J)
    vals = np.array(vals)
    assert np.all(vals < 0)
    assert np.all(np.abs(vals) < 50.0)


def test_asymptotic_kappa():
    f1 = P.PotentialField(metric=plane, centres=(P.CentreSpec((0, 0)),), energy=1.0)
    assert P.asymptotic_kappa_J(f1, 0) == pytest.approx(-1.0)
    f2 = P.PotentialField(metric=plane, centres=(P.CentreSpec((0, 0), mass=2.0),),
                          energy=1.0)
    assert P.asymptotic_kappa_J(f2, 0) == pytest.approx(-0.25)
    f3 = P.PotentialField(metric=plane,
                          centres=(P.CentreSpec((0, 0), exponent=1.5),), energy=2.0)
    assert P.asymptotic_kappa_J(f3, 0) == pytest.approx(-10.125)


def test_asymptotic_slope_fit():
    fld = P.PotentialField(metric=plane,
                           centres=(P.CentreSpec((0, 0), exponent=1.5),), energy=2.0)
    rs = np.geomspace(1e-5, 1e-4, 8)
    ks = np.array([P.jacobi_curvature(fld, (r, 0.0)).kappa_J for r in rs])
    slope, intercept = np.polyfit(np.log(rs), np.log(-ks), 1)
    assert slope == pytest.approx(2 * (1.5 - 1.0), rel=0.02)
    assert -np.exp(intercept) == pytest.approx(P.asymptotic_kappa_J(fld, 0), rel=0.02)


def test_mollified_properties(torus_field):
    torus = torus_field.metric
    mf = P.mollified_potential(torus_field, 0.1)
    # identical to exact outside the tube
    q_far = np.array([0.3, 0.35])
    assert P.centre_distance(mf, 0, q_far) == pytest.approx(
        G.distance(torus, (0.5, 0.5), q_far), abs=1e-15)
    # uniform bound sup |phi_eps - d| <= C eps with C stable across halvings
    consts = []
    xs = np.linspace(0, 1, 90, endpoint=False)
    for eps in (0.1, 0.05, 0.025):
        m = P.mollified_potential(torus_field, eps)
        worst = 0.0
        for x in xs:
            for y in xs[::5]:
                q = np.array([x, y])
                worst = max(worst, abs(P.centre_distance(m, 0, q)
                                       - G.distance(torus, (0.5, 0.5), q)))
        consts.append(worst / eps)
    assert max(consts) / min(consts) < 1.2  # fitted C stable
    assert max(consts) < 1.0
    with pytest.raises(ValueError):
        P.mollified_potential(torus_field, 0.3)  # beyond half injectivity radius


def test_mollified_gradient_bound(torus_field):
    mf = P.mollified_potential(torus_field, 0.1)
    assert P.mollified_gradient_sup(mf, 0, grid=80) <= 2.0


def test_mollified_batch_matches_scalar(torus_field):
    mf = P.mollified_potential(torus_field, 0.05)
    rng = np.random.default_rng(11)
    pts = rng.uniform(0, 1, (50, 2))
    vb = P.evaluate_V_batch(mf, pts)
    vs = np.array([P.evaluate_V(mf, p) for p in pts])
    assert np.allclose(vb, vs, atol=1e-12)


def test_exact_torus_cut_locus_errors(torus_field):
    q_on_locus = np.array([0.0, 0.25])  # x = 0.5 + 0.5 (mod 1)
    with pytest.raises(P.CutLocusError):
        P.grad_V(torus_field, q_on_locus)
    mf = P.mollified_potential(torus_field, 0.05)
    P.grad_V(mf, q_on_locus)  # mollified mode evaluates fine


def test_batch_consistency(bench_field):
    rng = np.random.default_rng(13)
    pts = rng.uniform(-2, 2, (64, 2))
    keep = P.min_centre_distance_batch(bench_field, pts) > 0.05
    pts = pts[keep]
    assert np.allclose(P.evaluate_V_batch(bench_field, pts),
                       [P.evaluate_V(bench_field, p) for p in pts])
    assert np.allclose(P.grad_V_batch(bench_field, pts),
                       [P.grad_V(bench_field, p) for p in pts])


def test_hessian_batch_matches_fd(bench_field):
    rng = np.random.default_rng(17)
    h = 1e-6
    pts = []
    while len(pts) < 10:
        q = rng.uniform(-1.5, 1.5, 2)
        if P.min_centre_distance(bench_field, q) > 0.15:
            pts.append(q)
    pts = np.array(pts)
    hess = P.hessian_V_batch(bench_field, pts)
    for k, q in enumerate(pts):
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (P.grad_V(bench_field, q + e) - P.grad_V(bench_field, q - e)) / (2 * h)
            assert np.allclose(hess[k][:, i], fd, rtol=1e-5, atol=1e-6)
