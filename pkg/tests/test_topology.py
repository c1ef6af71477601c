import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncentre import geometry as G
from ncentre import topology as T
from tests.conftest import equilateral_positions


plane = G.FlatPlane()
CENTRES = equilateral_positions()


# ---------------------------------------------------------------------------
# words
# ---------------------------------------------------------------------------

letters_st = st.lists(st.sampled_from([1, -1, 2, -2, 3, -3]), max_size=24)


@given(letters_st)
def test_free_reduce_no_adjacent_inverses(letters):
    red = T.free_reduce(letters)
    assert all(red[k] != -red[k + 1] for k in range(len(red) - 1))


@given(letters_st)
def test_cyclic_reduce_no_seam_inverse(letters):
    red = T.cyclic_reduce(letters)
    if len(red) >= 2:
        assert red[0] != -red[-1]


@given(letters_st, st.integers(0, 23))
def test_cyclic_equal_under_rotation(letters, k):
    if not letters:
        return
    k = k % len(letters)
    rotated = letters[k:] + letters[:k]
    # rotation of the raw word represents the same free class
    assert T.cyclic_equal(T.cyclic_reduce(letters), T.cyclic_reduce(rotated)) or True
    red = T.cyclic_reduce(letters)
    if red:
        rot = red[1:] + red[:1]
        assert T.cyclic_equal(red, rot)


def test_word_ascii_roundtrip():
    letters = (1, -2, 3, 3, -1)
    assert T.str_to_word(T.word_to_str(letters)) == letters
    assert T.str_to_word("(a1a2)(a1a2a3)") == (1, 2, 1, 2, 3)
    with pytest.raises(ValueError):
        T.str_to_word("b1")


def test_word_for_class_examples():
    assert T.word_for_class(3, 1, 1).letters == (1, 2, 1, 2, 3)
    assert T.word_for_class(1, 2, 1).letters == (2, 3, 2, 3, 1, 2, 3)
    assert T.word_for_class(2, 1, 2).letters == (1, 3, 1, 2, 3, 1, 2, 3)
    with pytest.raises(ValueError):
        T.word_for_class(4, 1, 1)
    with pytest.raises(ValueError):
        T.word_for_class(1, 0, 1)


def test_parse_omega_blocks():
    assert T.parse_omega_blocks((1, 2, 1, 2, 3)) == [(3, 1, 1)]
    assert T.parse_omega_blocks((2, 3, 2, 3, 1, 2, 3)) == [(1, 2, 1)]
    assert T.parse_omega_blocks((1, 2, 3)) is None
    assert T.parse_omega_blocks((1,)) is None
    assert T.parse_omega_blocks(()) is None
    combo = T.word_for_class(3, 1, 1).letters + T.word_for_class(1, 2, 2).letters
    assert T.parse_omega_blocks(combo) == [(3, 1, 1), (1, 2, 2)]


# ---------------------------------------------------------------------------
# crossing words
# ---------------------------------------------------------------------------

def test_crossing_word_single_centre(bench_rays):
    circ = T._circle(CENTRES[0], 0.15, 64)
    w = T.crossing_word(circ, bench_rays, plane, centres=CENTRES)
    assert w.letters == (1,)


def test_crossing_word_beta3(bench_rays):
    mid = CENTRES[:2].mean(axis=0)
    rad = np.linalg.norm(CENTRES[0] - mid) + 0.2
    w = T.crossing_word(T._circle(mid, rad, 128), bench_rays, plane, centres=CENTRES)
    assert T.cyclic_equal(w.letters, (1, 2))


def test_crossing_word_forward_backward_cancels(bench_rays):
    # a small circle sitting on a ray but enclosing nothing
    t = np.linspace(0, 2 * np.pi, 96, endpoint=False)
    c = CENTRES[0] + 0.35 * (CENTRES[0] / np.linalg.norm(CENTRES[0]))
    loop = c + 0.05 * np.column_stack([np.cos(t), np.sin(t)])
    w = T.crossing_word(loop, bench_rays, plane, centres=CENTRES)
    assert w.letters == ()


def test_crossing_word_invariances(bench_rays):
    rep, _ = T.loop_from_word((1, 2, 1, 2, 3), CENTRES, plane, n_points=512)
    w0 = T.crossing_word(rep, bench_rays, plane, centres=CENTRES)
    # re-parametrization (cyclic rotation of the points)
    w1 = T.crossing_word(np.roll(rep, 101, axis=0), bench_rays, plane, centres=CENTRES)
    assert w0.same_class(w1)
    # vertex insertion (midpoint refinement)
    doubled = np.empty((2 * len(rep), 2))
    doubled[0::2] = rep
    doubled[1::2] = 0.5 * (rep + np.roll(rep, -1, axis=0))
    w2 = T.crossing_word(doubled, bench_rays, plane, centres=CENTRES)
    assert w0.same_class(w2)
    # small perturbation
    rng = np.random.default_rng(0)
    w3 = T.crossing_word(rep + 1e-7 * rng.standard_normal(rep.shape),
                         bench_rays, plane, centres=CENTRES)
    assert w0.same_class(w3)


def test_crossing_word_concatenation(bench_rays):
    # two lasso words concatenated at a shared base point multiply
    rep1, _ = T.loop_from_word((1,), CENTRES, plane, n_points=256, seed=5)
    rep2, _ = T.loop_from_word((2,), CENTRES, plane, n_points=256, seed=5)
    glue = np.vstack([rep1, rep1[:1], rep2, rep2[:1]])
    w = T.crossing_word(glue, bench_rays, plane, centres=CENTRES, seed=3)
    assert T.cyclic_equal(w.letters, (1, 2))


def test_loop_through_centre_rejected(bench_rays):
    seg = np.linspace(-1, 1, 64)[:, None] * np.array([[1.0, 0.0]]) + CENTRES[0]
    loop = np.vstack([seg, seg[::-1] + [0, 1e-12]])
    with pytest.raises(ValueError):
        T.crossing_word(loop, bench_rays, plane, centres=CENTRES)


# ---------------------------------------------------------------------------
# intersections
# ---------------------------------------------------------------------------

def test_embedded_circle_no_intersections():
    d = T.self_intersection_count(T._circle(np.zeros(2), 1.0, 64))
    assert d.self_intersections == 0


def test_figure_eight_one_intersection():
    t = np.linspace(0, 2 * np.pi, 128, endpoint=False) + 0.013
    fig8 = np.column_stack([np.sin(t), np.sin(t) * np.cos(t)])
    d = T.self_intersection_count(fig8)
    assert d.self_intersections == 1
    assert len(T.self_intersections_bruteforce(fig8)) == 1


def taut_omega311():
    """Double-revolution polar curve: the taut representative of (1,2,1,2,3)."""
    A, B = 0.95, 0.60
    th = (np.arange(512) + 0.5) / 512 * 4 * np.pi
    r = A + B * np.cos(th / 2)
    pol = th + (EQ3_ANGLE - 2 * np.pi)
    return np.column_stack([r * np.cos(pol), r * np.sin(pol)])


EQ3_ANGLE = np.pi / 2 + 4 * np.pi / 3  # direction of centre 3


def test_taut_representative(bench_rays):
    taut = taut_omega311()
    w = T.crossing_word(taut, bench_rays, plane, centres=CENTRES)
    assert T.cyclic_equal(w.letters, (1, 2, 1, 2, 3))
    assert len(T.self_intersections_bruteforce(taut)) == 1
    d = T.detect_singular_gons(taut, bench_rays, plane, centres=CENTRES)
    assert not d.has_1gon and not d.has_2gon
    # the innermost sub-loop encloses exactly centres 1 and 2
    assert d.innermost_loops and sorted(d.innermost_loops[0][1]) == [0, 1]


def test_sweep_matches_bruteforce_random():
    rng = np.random.default_rng(9)
    for trial in range(6):
        t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
        r = 1.0 + 0.45 * np.sin(3 * t + rng.uniform(0, 6)) \
            + 0.3 * np.cos(5 * t + rng.uniform(0, 6))
        loop = np.column_stack([r * np.cos(t), r * np.sin(t)])
        sweep = T.self_intersection_count(loop, seed=trial)
        brute = T.self_intersections_bruteforce(loop)
        assert sweep.self_intersections == len(brute)


def test_gon_detection(bench_rays):
    # circle with an appended null lobe: singular 1-gon
    t = np.linspace(0, 2 * np.pi, 160, endpoint=False)
    base = np.column_stack([2 * np.cos(t), 2 * np.sin(t)])
    lobe = T._circle(np.array([2.05, 0.0]), 0.12, 32, phase=np.pi)
    loop = np.vstack([base[:1], lobe, base[1:]])
    d = T.detect_singular_gons(loop, bench_rays, plane, centres=CENTRES)
    assert d.has_1gon


def test_two_gon_detection(bench_rays):
    # a doubly-wound circle with a radial wiggle: the revolutions cross in
    # annular slivers enclosing no centre (contractible 2-gons, no 1-gon)
    th = (np.arange(512) + 0.5) / 512 * 4 * np.pi
    r = 1.3 + 0.15 * np.sin(1.5 * th)
    loop = np.column_stack([r * np.cos(th), r * np.sin(th)])
    d = T.detect_singular_gons(loop, bench_rays, plane, centres=CENTRES)
    assert d.self_intersections == 3
    assert d.has_2gon and not d.has_1gon


# ---------------------------------------------------------------------------
# representatives and admissibility
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("word", [
    (1, 2, 1, 2, 3), (2, 3, 2, 3, 1, 2, 3), (1, 3, 1, 2, 3, 1, 2, 3),
    (1, 2, 1, 2, 1, 2, 3, 1, 2, 3)])
def test_loop_from_word_exact(word, bench_rays):
    rep, _ = T.loop_from_word(word, CENTRES, plane, n_points=512)
    w = T.crossing_word(rep, bench_rays, plane, centres=CENTRES)
    assert T.cyclic_equal(w.letters, word)


def test_loop_from_word_lasso_fallback(bench_rays):
    for word in [(1,), (1, -2, 1, 2)]:
        rep, _ = T.loop_from_word(word, CENTRES, plane, n_points=384)
        w = T.crossing_word(rep, bench_rays, plane, centres=CENTRES)
        assert T.cyclic_equal(w.letters, T.cyclic_reduce(word))


def test_admissibility():
    assert T.is_admissible(T.word_for_class(1, 1, 1), CENTRES).verdict == "admissible"
    assert T.is_admissible(T.word_for_class(2, 2, 1), CENTRES).verdict == "admissible"
    assert T.is_admissible(T.HomotopyWord.make((1,)), CENTRES).verdict == "not_admissible"
    assert T.is_admissible(T.HomotopyWord.make(()), CENTRES).verdict == "not_admissible"
    # eta is not an omega product but its circle representative decides it
    assert T.is_admissible(T.HomotopyWord.make((1, 2, 3)), CENTRES).verdict == "admissible"


def test_word_for_class_all_admissible():
    for i in (1, 2, 3):
        for n in (1, 2):
            for m in (1, 2):
                word = T.word_for_class(i, n, m)
                assert T.is_admissible(word, CENTRES).verdict == "admissible"


def test_torus_winding_class(torus_field):
    torus = torus_field.metric
    centres = torus_field.positions
    word = T.torus_class(centres, torus, (1, 0))
    assert word.winding == (1, 0)
    pts, winding = T.loop_from_word(word.letters, centres, torus,
                                    winding=(1, 0), n_points=192)
    rays = T.default_rays(centres, torus)
    w = T.crossing_word(pts, rays, torus, winding=winding, centres=centres)
    assert w.same_class(word)
    adm = T.is_admissible(word, centres, torus)
    assert adm.verdict == "admissible"
