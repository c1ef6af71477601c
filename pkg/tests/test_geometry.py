import numpy as np
import pytest

from ncentre import geometry as G


plane = G.FlatPlane()
torus = G.FlatTorus(1.0, 1.0)


def conformal_linear(a=1.0, b=0.0):
    lam = np.exp(-2 * (abs(a) + abs(b)) * 3)  # loose bounds on a small box
    return G.ConformalPlane(phi=lambda q: a * q[0] + b * q[1],
                            grad_phi=lambda q: np.array([a, b]),
                            laplacian_phi=lambda q: 0.0,
                            comparability_bounds=(np.exp(-2.0), np.exp(2.0)))


def test_metric_tensor_flat():
    assert np.allclose(G.metric_tensor(plane, (3.0, 4.0)), np.eye(2))
    assert np.allclose(G.metric_tensor(torus, (0.2, 0.9)), np.eye(2))


def test_metric_tensor_conformal():
    conf0 = G.ConformalPlane(phi=lambda q: 0.0, grad_phi=lambda q: np.zeros(2))
    assert np.allclose(G.metric_tensor(conf0, (1.0, 2.0)), np.eye(2))
    confx = conformal_linear(1.0)
    got = G.metric_tensor(confx, (1.0, 0.0))
    assert np.allclose(got, np.exp(2.0) * np.eye(2))
    assert abs(got[0, 0] - 7.389056098930649) < 1e-12


def test_distance_plane_and_torus():
    assert G.distance(plane, (0.0, 0.0), (3.0, 4.0)) == pytest.approx(5.0)
    assert G.distance(torus, (0.0, 0.0), (0.5, 0.5)) == pytest.approx(np.sqrt(2) / 2)
    # lattice translation invariance of either argument
    rng = np.random.default_rng(0)
    for _ in range(20):
        p, q = rng.uniform(0, 1, 2), rng.uniform(0, 1, 2)
        shift = rng.integers(-3, 4, 2).astype(float)
        assert G.distance(torus, p, q) == pytest.approx(
            G.distance(torus, p + shift, q), abs=1e-12)


def test_distance_symmetry_and_triangle():
    rng = np.random.default_rng(1)
    for model in (plane, torus):
        for _ in range(30):
            p, q, r = rng.uniform(-1, 2, (3, 2))
            assert G.distance(model, p, q) == pytest.approx(
                G.distance(model, q, p), abs=1e-12)
            assert G.distance(model, p, r) <= (
                G.distance(model, p, q) + G.distance(model, q, r) + 1e-12)


def test_conformal_distance():
    conf0 = G.ConformalPlane(phi=lambda q: 0.0, grad_phi=lambda q: np.zeros(2))
    assert G.distance(conf0, np.zeros(2), np.array([1.0, 0.0])) == pytest.approx(1.0, abs=1e-9)
    confx = conformal_linear(1.0)
    # geodesic along the x-axis: length = integral of e^x = e - 1
    d = G.distance(confx, np.zeros(2), np.array([1.0, 0.0]))
    assert d == pytest.approx(np.e - 1.0, abs=1e-7)
    lo, hi = G.distance_bracket(confx, np.zeros(2), np.array([1.0, 0.0]))
    assert lo <= d <= hi


def test_conformal_distance_triangle_tolerance():
    confx = conformal_linear(0.4, -0.3)
    rng = np.random.default_rng(2)
    pts = rng.uniform(-0.4, 0.4, (3, 2))
    dpq = G.distance(confx, pts[0], pts[1])
    dqr = G.distance(confx, pts[1], pts[2])
    dpr = G.distance(confx, pts[0], pts[2])
    assert dpr <= dpq + dqr + 1e-6
    assert dpq == pytest.approx(G.distance(confx, pts[1], pts[0]), abs=1e-6)


def test_cut_locus_membership():
    assert G.cut_locus_membership(torus, (0.0, 0.0), (0.5, 0.25), 0.0)
    assert not G.cut_locus_membership(torus, (0.0, 0.0), (0.1, 0.1), 0.05)
    assert G.cut_locus_membership(torus, (0.0, 0.0), (0.5, 0.5), 0.0)
    with pytest.raises(ValueError):
        G.cut_locus_membership(plane, (0.0, 0.0), (0.5, 0.5), 0.0)


def test_covariant_acceleration_flat():
    q = np.array([0.3, -0.7])
    v = np.array([1.2, 0.4])
    assert np.allclose(G.covariant_acceleration(plane, q, v, np.zeros(2)), 0.0)
    conf0 = G.ConformalPlane(phi=lambda q: 0.0, grad_phi=lambda q: np.zeros(2))
    a = np.array([0.5, -0.1])
    assert np.allclose(G.covariant_acceleration(conf0, q, v, a), a)


def test_covariant_acceleration_conformal_oracle():
    confx = conformal_linear(1.0)
    q = np.zeros(2)
    v = np.array([1.0, 0.0])
    got = G.covariant_acceleration(confx, q, v, np.zeros(2))
    oracle = G.christoffel_fd(confx, q, v)
    # frozen from the finite-difference Christoffel oracle: Gamma(v,v) = (1, 0)
    assert np.allclose(got, [1.0, 0.0], atol=1e-9)
    assert np.allclose(got, oracle, atol=1e-6)


def test_parallel_transport_oracle_random_curves():
    confx = conformal_linear(0.7, -0.2)
    rng = np.random.default_rng(3)
    for _ in range(10):
        q = rng.uniform(-0.5, 0.5, 2)
        v = rng.uniform(-1, 1, 2)
        analytic = G.christoffel_quadratic(confx, q, v)
        fd = G.christoffel_fd(confx, q, v)
        assert np.allclose(analytic, fd, atol=1e-6)


def test_laplace_beltrami():
    val = G.laplace_beltrami(plane, lambda q: q[0] ** 2 + q[1] ** 2,
                             np.array([0.3, 0.7]))
    assert val == pytest.approx(4.0, abs=1e-6)
    # harmonic away from the origin
    val = G.laplace_beltrami(plane, lambda q: np.log(np.hypot(*q)),
                             np.array([1.0, 0.0]), singularities=[np.zeros(2)])
    assert abs(val) < 1e-6
    # Lap r = 1/r in 2D
    val = G.laplace_beltrami(plane, lambda q: np.hypot(*q),
                             np.array([2.0, 0.0]), singularities=[np.zeros(2)])
    assert val == pytest.approx(0.5, abs=1e-6)


def test_laplace_beltrami_conformal_and_guard():
    confx = conformal_linear(1.0)
    # Lap_g f = e^{-2 phi} Lap_e f
    val = G.laplace_beltrami(confx, lambda q: q[0] ** 2 + q[1] ** 2,
                             np.array([0.5, 0.0]))
    assert val == pytest.approx(4.0 * np.exp(-1.0), rel=1e-5)
    with pytest.raises(ValueError):
        G.laplace_beltrami(plane, lambda q: np.hypot(*q), np.array([1e-6, 0.0]),
                           step=1e-5, singularities=[np.zeros(2)])


def test_scalar_curvature():
    assert G.scalar_curvature(plane, np.zeros(2)) == 0.0
    assert G.scalar_curvature(torus, np.zeros(2)) == 0.0
    confx = conformal_linear(1.0)  # harmonic phi: flat conformal metric
    assert abs(G.scalar_curvature(confx, np.array([0.2, 0.1]))) < 1e-12
