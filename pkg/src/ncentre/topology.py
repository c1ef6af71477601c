"""Free-homotopy words, self-intersections, singular gons, admissibility.

Homotopy classes of loops in the punctured chart are encoded by signed
crossing sequences against a system of pairwise disjoint rays, one per
puncture.  On the torus the class carries the lattice winding vector of the
lift as well.  Words are cyclic: two words are the same free class iff they
agree up to rotation after free and cyclic reduction.

ASCII serialization: generators ``a1..aN``, inverses ``A1..AN``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import FlatPlane, FlatTorus, MetricModel, displacement

Array = np.ndarray
log = logging.getLogger(__name__)

#: magnitude of the deterministic general-position perturbation
PERTURB_SCALE = 1e-9


# ---------------------------------------------------------------------------
# words
# ---------------------------------------------------------------------------

def free_reduce(letters: Sequence[int]) -> tuple[int, ...]:
    out: list[int] = []
    for s in letters:
        if out and out[-1] == -s:
            out.pop()
        else:
            out.append(int(s))
    return tuple(out)


def cyclic_reduce(letters: Sequence[int]) -> tuple[int, ...]:
    w = list(free_reduce(letters))
    while len(w) >= 2 and w[0] == -w[-1]:
        w = w[1:-1]
    return tuple(w)


def cyclic_equal(a: Sequence[int], b: Sequence[int]) -> bool:
    a = cyclic_reduce(a)
    b = cyclic_reduce(b)
    if len(a) != len(b):
        return False
    if not a:
        return True
    doubled = a + a
    return any(doubled[k:k + len(b)] == b for k in range(len(a)))


@dataclass(frozen=True)
class HomotopyWord:
    """Reduced word over puncture generators, plus torus winding if relevant."""

    letters: tuple[int, ...]
    cyclically_reduced: bool = True
    winding: tuple[int, int] = (0, 0)

    @staticmethod
    def make(letters: Sequence[int], winding: tuple[int, int] = (0, 0)) -> "HomotopyWord":
        return HomotopyWord(letters=cyclic_reduce(letters), winding=winding)

    def __str__(self) -> str:
        return word_to_str(self.letters)

    def is_trivial(self) -> bool:
        return not self.letters and self.winding == (0, 0)

    def same_class(self, other: "HomotopyWord") -> bool:
        return self.winding == other.winding and cyclic_equal(self.letters, other.letters)


def word_to_str(letters: Sequence[int]) -> str:
    return "".join(f"a{s}" if s > 0 else f"A{-s}" for s in letters)


def str_to_word(text: str) -> tuple[int, ...]:
    """Parse ``a1A2a3`` style words; parentheses and whitespace are ignored."""
    out: list[int] = []
    i = 0
    text = "".join(ch for ch in text if ch not in "() \t\n")
    while i < len(text):
        ch = text[i]
        if ch not in "aA":
            raise ValueError(f"unexpected character {ch!r} in word at position {i}")
        j = i + 1
        while j < len(text) and text[j].isdigit():
            j += 1
        if j == i + 1:
            raise ValueError(f"generator index missing at position {i}")
        idx = int(text[i + 1:j])
        out.append(idx if ch == "a" else -idx)
        i = j
    return tuple(out)


# ---------------------------------------------------------------------------
# ray systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RaySystem:
    """One ray per centre: origin c_j, unit direction, finite length.

    In the plane the length is an effective cutoff well beyond any loop
    (crossing counts only use segments, so a large finite length is exact for
    loops inside the cutoff).  On the torus the ray is a straight segment to
    a fundamental-domain boundary point; it must not wrap.
    """

    origins: Array      # (N, 2)
    directions: Array   # (N, 2) unit vectors
    lengths: Array      # (N,)

    @property
    def n_rays(self) -> int:
        return len(self.origins)

    def endpoint(self, j: int) -> Array:
        return self.origins[j] + self.lengths[j] * self.directions[j]


def default_rays(centres: Array, model: MetricModel, extent: float = 1e6) -> RaySystem:
    """Disjoint rays: radially outward in the plane, downward on the torus.

    Directions are nudged deterministically until no ray passes near another
    centre and no two rays intersect.
    """
    centres = np.asarray(centres, dtype=float)
    n = len(centres)
    if isinstance(model, FlatTorus):
        # full lattice-period circles through each centre: closed cycles, so
        # signed crossing counts are homotopy invariants (a finite segment
        # with a free interior endpoint would let loops slip around it).
        # All rays share one primitive direction; parallel circles stay
        # pairwise disjoint provided no two centres lie on the same circle.
        origins = np.mod(centres, [model.period_x, model.period_y])
        per = np.array([model.period_x, model.period_y])
        for (px, py) in ((0, -1), (1, -1), (1, -2), (2, -1), (1, -3)):
            lat = np.array([px * per[0], py * per[1]])
            normal = np.array([-lat[1], lat[0]])
            offsets = origins @ normal
            span = per[0] * per[1]  # offset period of a primitive direction
            sep = [abs((offsets[i] - offsets[j] + 0.5 * span) % span - 0.5 * span)
                   for i in range(n) for j in range(i + 1, n)]
            if all(s > 1e-7 for s in sep) or n == 1:
                length = float(np.linalg.norm(lat))
                dirs = np.tile(lat / length, (n, 1))
                return RaySystem(origins=origins, directions=dirs,
                                 lengths=np.full(n, length))
        raise ValueError("could not separate torus centres with parallel circles")
    centroid = centres.mean(axis=0)
    dirs = np.empty((n, 2))
    for j in range(n):
        d = centres[j] - centroid
        nd = np.linalg.norm(d)
        if nd < 1e-12:
            angle = 2.0 * np.pi * j / max(n, 1)
            d = np.array([np.cos(angle), np.sin(angle)])
            nd = 1.0
        dirs[j] = d / nd
    for attempt in range(32):
        rays = RaySystem(origins=centres, directions=dirs,
                         lengths=np.full(n, extent))
        try:
            _check_ray_disjoint(rays, centres)
            return rays
        except ValueError:
            # rotate every direction by a small deterministic angle and retry
            ang = 1e-3 * (attempt + 1)
            rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
            dirs = dirs @ rot.T
    raise ValueError("could not construct pairwise disjoint rays")


def _check_ray_disjoint(rays: RaySystem, centres: Array) -> None:
    n = rays.n_rays
    segs = [(rays.origins[j], rays.endpoint(j)) for j in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if _segments_cross(segs[i][0], segs[i][1], segs[j][0], segs[j][1])[0]:
                raise ValueError(f"rays {i} and {j} intersect")
    for j in range(n):
        for k in range(n):
            if k == j:
                continue
            if _point_segment_distance(centres[k], segs[j][0], segs[j][1]) < 1e-9:
                raise ValueError(f"ray {j} passes through centre {k}")


# ---------------------------------------------------------------------------
# segment predicates
# ---------------------------------------------------------------------------

def _cross2(o: Array, a: Array, b: Array) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _point_segment_distance(p: Array, a: Array, b: Array) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(a + t * ab - p))


def _segments_cross(p1: Array, p2: Array, q1: Array, q2: Array):
    """Proper (interior, transversal) crossing test.

    Returns (crossed, t, u, point) with t, u in (0,1) the local parameters.
    Collinear or endpoint-touching configurations report degenerate=True via
    t = None.
    """
    d1 = p2 - p1
    d2 = q2 - q1
    denom = d1[0] * d2[1] - d1[1] * d2[0]
    r = q1 - p1
    if denom == 0.0:
        # parallel; overlapping collinear segments are degenerate
        if abs(r[0] * d1[1] - r[1] * d1[0]) < 1e-300:
            return False, None, None, None
        return False, 0.0, 0.0, None
    t = (r[0] * d2[1] - r[1] * d2[0]) / denom
    u = (r[0] * d1[1] - r[1] * d1[0]) / denom
    eps = 1e-13
    if -eps < t < eps or 1 - eps < t < 1 + eps or -eps < u < eps or 1 - eps < u < 1 + eps:
        if -eps <= t <= 1 + eps and -eps <= u <= 1 + eps:
            return False, None, None, None  # endpoint touch: degenerate
        return False, 0.0, 0.0, None
    if 0.0 < t < 1.0 and 0.0 < u < 1.0:
        return True, float(t), float(u), p1 + t * d1
    return False, 0.0, 0.0, None


# ---------------------------------------------------------------------------
# crossing words
# ---------------------------------------------------------------------------

def _loop_segments(points: Array, model: MetricModel, winding=(0, 0)):
    """Yield (global_param_start, p, p_next) chart segments of the loop.

    Torus loops are given by lift points; segments use the lift directly so
    winding is preserved.  The closing segment returns to points[0] shifted
    by the winding offsets.
    """
    n = len(points)
    if isinstance(model, FlatTorus):
        close = points[0] + np.array(winding, dtype=float) * [model.period_x, model.period_y]
    else:
        close = points[0]
    for k in range(n):
        p = points[k]
        q = points[k + 1] if k + 1 < n else close
        yield k / n, p, q


def _ray_images(rays: RaySystem, j: int, model: MetricModel, bbox):
    """Ray j and, on the torus, its lattice translates covering the bbox."""
    a = rays.origins[j]
    b = rays.endpoint(j)
    if not isinstance(model, FlatTorus):
        return [(a, b)]
    per = np.array([model.period_x, model.period_y])
    lo = np.floor((bbox[0] - per) / per).astype(int)
    hi = np.ceil((bbox[1] + per) / per).astype(int)
    out = []
    for ix in range(lo[0], hi[0] + 1):
        for iy in range(lo[1], hi[1] + 1):
            off = np.array([ix, iy]) * per
            out.append((a + off, b + off))
    return out


class DegenerateCrossing(RuntimeError):
    pass


def crossing_word(points: Array, rays: RaySystem, model: MetricModel,
                  winding: tuple[int, int] = (0, 0),
                  centres: Optional[Array] = None,
                  seed: int = 0) -> HomotopyWord:
    """Signed ray-crossing word of a closed polygonal loop, cyclically reduced.

    A crossing of ray j counts +j when the loop passes with positive
    determinant against the ray direction (counterclockwise around c_j).
    Tangential or endpoint-degenerate crossings trigger a deterministic
    subpixel perturbation (magnitude 1e-9, keyed by ``seed``), logged.
    """
    points = np.asarray(points, dtype=float)
    if centres is not None:
        _check_loop_clear_of_centres(points, centres, model, winding)
    rng = np.random.default_rng(seed)
    pts = points
    for attempt in range(4):
        try:
            letters = _crossing_letters(pts, rays, model, winding)
            return HomotopyWord.make(letters, winding=winding)
        except DegenerateCrossing:
            log.info("degenerate ray crossing; applying general-position "
                     "perturbation (attempt %d)", attempt + 1)
            pts = pts + PERTURB_SCALE * rng.standard_normal(pts.shape)
    raise DegenerateCrossing("crossing word degenerate after 3 perturbations")


def _check_loop_clear_of_centres(points: Array, centres: Array, model: MetricModel,
                                 winding, tol: float = 1e-9) -> None:
    n = len(points)
    if isinstance(model, FlatTorus):
        close = points[0] + np.array(winding, float) * [model.period_x, model.period_y]
    else:
        close = points[0]
    p = points
    q = np.vstack([points[1:], close[None, :]])
    d = q - p
    denom = np.sum(d * d, axis=1)
    denom[denom == 0] = 1.0
    for c in np.asarray(centres, dtype=float):
        mid = 0.5 * (p + q)
        if isinstance(model, FlatTorus):
            per = np.array([model.period_x, model.period_y])
            rel = c - mid
            c_img = mid + rel - per * np.round(rel / per)
        else:
            c_img = np.broadcast_to(c, p.shape)
        t = np.clip(np.sum((c_img - p) * d, axis=1) / denom, 0.0, 1.0)
        proj = p + t[:, None] * d
        if np.any(np.linalg.norm(proj - c_img, axis=1) < tol):
            raise ValueError("loop passes through a centre (within tolerance)")


def _crossing_letters(points: Array, rays: RaySystem, model: MetricModel, winding):
    n = len(points)
    if isinstance(model, FlatTorus):
        close = points[0] + np.array(winding, float) * [model.period_x, model.period_y]
    else:
        close = points[0]
    p = points
    q = np.vstack([points[1:], close[None, :]])
    d1 = q - p
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    events: list[tuple[float, int]] = []
    eps = 1e-13
    for j in range(rays.n_rays):
        dirj = rays.directions[j]
        seg_sign = np.where(dirj[0] * d1[:, 1] - dirj[1] * d1[:, 0] > 0, 1, -1)
        for a, b in _ray_images(rays, j, model, (lo, hi)):
            d2 = b - a
            r = a - p
            denom = d1[:, 0] * d2[1] - d1[:, 1] * d2[0]
            tnum = r[:, 0] * d2[1] - r[:, 1] * d2[0]
            unum = r[:, 0] * d1[:, 1] - r[:, 1] * d1[:, 0]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(denom != 0.0, tnum / denom, np.inf)
                u = np.where(denom != 0.0, unum / denom, np.inf)
            near_end = ((np.abs(t) < eps) | (np.abs(t - 1) < eps)
                        | (np.abs(u) < eps) | (np.abs(u - 1) < eps))
            in_box = (t > -eps) & (t < 1 + eps) & (u > -eps) & (u < 1 + eps)
            if np.any(near_end & in_box):
                raise DegenerateCrossing("tangential or endpoint crossing")
            hit = (t > 0.0) & (t < 1.0) & (u > 0.0) & (u < 1.0)
            for k in np.flatnonzero(hit):
                events.append(((k + t[k]) / n, int(seg_sign[k]) * (j + 1)))
    events.sort(key=lambda e: e[0])
    return [s for _, s in events]


# ---------------------------------------------------------------------------
# canonical three-centre classes
# ---------------------------------------------------------------------------

BETA_LETTERS = {1: (2, 3), 2: (1, 3), 3: (1, 2)}
ETA_LETTERS = (1, 2, 3)


def word_for_class(i: int, n: int, m: int) -> HomotopyWord:
    """Reduced word of the class beta_i^n eta^m for the 3-centre problem."""
    if i not in (1, 2, 3):
        raise ValueError("centre index must be 1, 2 or 3 (N=3 configuration)")
    if n < 1 or m < 1:
        raise ValueError("block counts n, m must be >= 1")
    letters = BETA_LETTERS[i] * n + ETA_LETTERS * m
    return HomotopyWord.make(letters)


def parse_omega_blocks(letters: Sequence[int]) -> Optional[list[tuple[int, int, int]]]:
    """Factor a cyclic word into omega blocks [(i, n, m), ...].

    Returns None when the word is not in the semigroup generated by the
    beta_i^n eta^m classes.  Tokenizes the cyclic word into beta/eta tokens by
    depth-first search and checks the alternating run structure.
    """
    w = cyclic_reduce(letters)
    if not w or any(s < 0 for s in w):
        return None
    L = len(w)

    pair_of = {v: k for k, v in BETA_LETTERS.items()}  # (j,k) -> i

    def token_at(seq, pos):
        """Tokens starting at pos: ('b', i) consuming 2, ('e',) consuming 3."""
        out = []
        if tuple(seq[pos:pos + 2]) in pair_of:
            out.append(("b", pair_of[tuple(seq[pos:pos + 2])], 2))
        if tuple(seq[pos:pos + 3]) == ETA_LETTERS:
            out.append(("e", 0, 3))
        return out

    def valid_tokenization(tokens):
        # cyclic runs: beta runs uniform in i, alternating with eta runs,
        # at least one of each
        kinds = [t[0] for t in tokens]
        if "b" not in kinds or "e" not in kinds:
            return None
        k = len(tokens)
        start = next(idx for idx in range(k)
                     if tokens[idx][0] == "b" and tokens[idx - 1][0] == "e")
        rot = tokens[start:] + tokens[:start]
        blocks = []
        pos = 0
        while pos < k:
            if rot[pos][0] != "b":
                return None
            i = rot[pos][1]
            n = 0
            while pos < k and rot[pos][0] == "b":
                if rot[pos][1] != i:
                    return None
                n += 1
                pos += 1
            m = 0
            while pos < k and rot[pos][0] == "e":
                m += 1
                pos += 1
            if m == 0:
                return None
            blocks.append((i, n, m))
        return blocks

    # DFS over tokenizations of the doubled word starting at each rotation
    for rot in range(L):
        seq = w[rot:] + w[:rot]
        stack = [(0, [])]
        while stack:
            pos, toks = stack.pop()
            if pos == L:
                blocks = valid_tokenization(toks)
                if blocks is not None:
                    return blocks
                continue
            for kind, i, consumed in token_at(seq, pos):
                if pos + consumed <= L:
                    stack.append((pos + consumed, toks + [(kind, i, consumed)]))
    return None


# ---------------------------------------------------------------------------
# self-intersections
# ---------------------------------------------------------------------------

@dataclass
class LoopDiagnostics:
    self_intersections: int = 0
    intersection_params: list = field(default_factory=list)  # [(t, t'), ...]
    has_1gon: bool = False
    has_2gon: bool = False
    innermost_loops: list = field(default_factory=list)  # [((t, t'), [centres])]
    perturbed: bool = False


def _adjacent(i: int, j: int, n: int) -> bool:
    return abs(i - j) == 1 or abs(i - j) == n - 1


def self_intersections_bruteforce(points: Array, model: MetricModel = FlatPlane(),
                                  winding=(0, 0)) -> list[tuple[float, float]]:
    """O(n^2) pairwise transversal crossing parameters; the test oracle."""
    segs = list(_loop_segments(np.asarray(points, float), model, winding))
    n = len(segs)
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            if _adjacent(i, j, n):
                continue
            crossed, t, u, _ = _segments_cross(segs[i][1], segs[i][2],
                                               segs[j][1], segs[j][2])
            if t is None:
                raise DegenerateCrossing("degenerate segment pair")
            if crossed:
                out.append(((i + t) / n, (j + u) / n))
    return out


def _sweep_intersections(points: Array, model: MetricModel, winding):
    """Sweep over x-sorted segment intervals; O((n + k) log n) typical."""
    segs = list(_loop_segments(np.asarray(points, float), model, winding))
    n = len(segs)
    lo = np.empty(n)
    hi = np.empty(n)
    for i, (_, p, q) in enumerate(segs):
        lo[i] = min(p[0], q[0])
        hi[i] = max(p[0], q[0])
    order = np.argsort(lo, kind="stable")
    active: list[int] = []
    out = []
    for idx in order:
        x = lo[idx]
        active = [a for a in active if hi[a] >= x]
        for a in active:
            if _adjacent(idx, a, n):
                continue
            i, j = (a, idx) if a < idx else (idx, a)
            crossed, t, u, _ = _segments_cross(segs[i][1], segs[i][2],
                                               segs[j][1], segs[j][2])
            if t is None:
                raise DegenerateCrossing("degenerate segment pair")
            if crossed:
                out.append(((i + t) / n, (j + u) / n))
        active.append(int(idx))
    out.sort()
    return out


def self_intersection_count(points: Array, model: MetricModel = FlatPlane(),
                            winding=(0, 0), seed: int = 0) -> LoopDiagnostics:
    """Transversal self-crossings of the polygonal loop (Def (t,t') ~ (t',t)).

    Degenerate configurations are retried under a deterministic perturbation
    (3 attempts) before raising.
    """
    pts = np.asarray(points, dtype=float)
    rng = np.random.default_rng(seed)
    perturbed = False
    for attempt in range(4):
        try:
            pairs = _sweep_intersections(pts, model, winding)
            diag = LoopDiagnostics(self_intersections=len(pairs),
                                   intersection_params=pairs, perturbed=perturbed)
            return diag
        except DegenerateCrossing:
            log.info("degenerate self-intersection; perturbing (attempt %d)", attempt + 1)
            pts = pts + PERTURB_SCALE * rng.standard_normal(pts.shape)
            perturbed = True
    raise DegenerateCrossing("self-intersection count degenerate after 3 retries")


# ---------------------------------------------------------------------------
# sub-loops, winding numbers, singular gons
# ---------------------------------------------------------------------------

def _point_at(points: Array, t: float, model: MetricModel, winding) -> Array:
    n = len(points)
    s = (t % 1.0) * n
    k = int(s) % n
    frac = s - int(s)
    p = points[k]
    if k + 1 < n:
        q = points[k + 1]
    else:
        if isinstance(model, FlatTorus):
            q = points[0] + np.array(winding, float) * [model.period_x, model.period_y]
        else:
            q = points[0]
    return p + frac * (q - p)


def subloop_points(points: Array, t0: float, t1: float, model: MetricModel,
                   winding=(0, 0)) -> Array:
    """Vertices of the sub-loop between global parameters t0 < t1 (closed)."""
    n = len(points)
    a = _point_at(points, t0, model, winding)
    b = _point_at(points, t1, model, winding)
    k0 = int(math.floor(t0 * n)) + 1
    k1 = int(math.floor(t1 * n))
    mids = [points[k % n] if k < n else points[k % n] for k in range(k0, k1 + 1)]
    # on the torus the lift must stay continuous across the seam at index n
    if isinstance(model, FlatTorus) and k1 >= n:
        per = np.array([model.period_x, model.period_y])
        mids = [points[k % n] + (np.array(winding, float) * per if k >= n else 0.0)
                for k in range(k0, k1 + 1)]
    return np.vstack([a] + mids + [b])


def winding_numbers(points: Array, centres: Array, model: MetricModel = FlatPlane()) -> list[int]:
    """Winding number of a closed polygon (lift closes) around each centre."""
    points = np.asarray(points, dtype=float)
    out = []
    for c in np.asarray(centres, dtype=float):
        # nearest image of the centre to the loop's bounding box centre
        mid = 0.5 * (points.min(axis=0) + points.max(axis=0))
        c_img = mid + displacement(model, mid, c) if isinstance(model, FlatTorus) else c
        rel = points - c_img
        ang = np.arctan2(rel[:, 1], rel[:, 0])
        d = np.diff(np.concatenate([ang, ang[:1]]))
        d = (d + np.pi) % (2 * np.pi) - np.pi
        out.append(int(round(d.sum() / (2 * np.pi))))
    return out


def enclosed_centres(points: Array, centres: Array, model: MetricModel = FlatPlane()) -> list[int]:
    """Indices of centres with nonzero winding number (0-based)."""
    return [j for j, w in enumerate(winding_numbers(points, centres, model)) if w != 0]


def detect_singular_gons(points: Array, rays: RaySystem, model: MetricModel = FlatPlane(),
                         winding=(0, 0), centres: Optional[Array] = None,
                         seed: int = 0) -> LoopDiagnostics:
    """Flag singular 1-gons and 2-gons of a general-position loop.

    A 1-gon is a sub-loop between equal points whose crossing word (and
    torus winding) is trivial; a 2-gon is a pair of crossings whose enclosed
    bigon region is contractible.  Absence of both certifies tautness.
    """
    pts = np.asarray(points, dtype=float)
    diag = self_intersection_count(pts, model, winding, seed=seed)
    crossings = diag.intersection_params
    if centres is None:
        centres = rays.origins

    def subword_trivial(t0, t1):
        sub = subloop_points(pts, t0, t1, model, winding)
        if isinstance(model, FlatTorus):
            # a lift sub-loop closes exactly iff its winding contribution is 0
            if np.linalg.norm(sub[0] - sub[-1]) > 1e-7:
                return False
        w = crossing_word(sub, rays, model, winding=(0, 0), seed=seed + 1)
        return len(w.letters) == 0

    for (t0, t1) in crossings:
        # both sub-loops at the crossing are candidate 1-gons
        if subword_trivial(t0, t1) or subword_trivial(t1, t0 + 1.0):
            diag.has_1gon = True
            break

    # 2-gons: crossings x=(a, c), y=(b, d); arcs [a,b] and [c,d] with the
    # reversed second arc closing the bigon
    for i in range(len(crossings)):
        for j in range(len(crossings)):
            if i == j:
                continue
            a, c = crossings[i]
            b, d = crossings[j]
            if not (a < b <= c < d):
                continue
            arc1 = subloop_points(pts, a, b, model, winding)
            arc2 = subloop_points(pts, c, d, model, winding)
            bigon = np.vstack([arc1, arc2[::-1]])
            if isinstance(model, FlatTorus):
                if np.linalg.norm(bigon[0] - bigon[-1]) > 1e-7:
                    continue
            w = crossing_word(bigon, rays, model, winding=(0, 0), seed=seed + 2)
            if len(w.letters) == 0:
                diag.has_2gon = True
                break
        if diag.has_2gon:
            break

    # innermost (simple) contractible sub-loops with their enclosed centres
    for (t0, t1) in crossings:
        inner = not any(t0 < s0 < t1 and t0 < s1 < t1 and (s0, s1) != (t0, t1)
                        for (s0, s1) in crossings)
        if not inner:
            continue
        sub = subloop_points(pts, t0, t1, model, winding)
        if isinstance(model, FlatTorus) and np.linalg.norm(sub[0] - sub[-1]) > 1e-7:
            continue
        diag.innermost_loops.append(((t0, t1), enclosed_centres(sub, centres, model)))
    return diag


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Admissibility:
    verdict: str  # "admissible" | "not_admissible" | "undecided"
    reason: str = ""

    def __bool__(self) -> bool:
        return self.verdict == "admissible"


def is_admissible(word: HomotopyWord, centres: Array,
                  model: MetricModel = FlatPlane(), seed: int = 0) -> Admissibility:
    """Three-tier admissibility verdict for a free-homotopy class.

    1. semigroup membership (products of the omega classes) decides
       admissible outright;
    2. otherwise a constructed representative that is certified taut (no
       singular 1-gon or 2-gon) decides by its innermost contractible
       sub-loops: all enclosing >= 2 centres -> admissible, any enclosing
       exactly one -> not_admissible;
    3. anything else is undecided.
    """
    centres = np.asarray(centres, dtype=float)
    letters = cyclic_reduce(word.letters)
    if not letters and word.winding == (0, 0):
        return Admissibility("not_admissible", "trivial class")
    if len(centres) == 3 and word.winding == (0, 0):
        if parse_omega_blocks(letters) is not None:
            return Admissibility("admissible", "omega-semigroup word")
    try:
        rep, rep_winding = loop_from_word(letters, centres, model,
                                          winding=word.winding, n_points=512, seed=seed)
    except Exception as exc:  # construction failed: cannot certify
        return Admissibility("undecided", f"no representative constructed: {exc}")
    rays = default_rays(centres, model)
    diag = detect_singular_gons(rep, rays, model, rep_winding, centres, seed=seed)
    if diag.has_1gon or diag.has_2gon:
        return Admissibility("undecided", "representative not certified taut")
    if diag.self_intersections == 0:
        # simple loop: it is its own innermost sub-loop when contractible
        if isinstance(model, FlatTorus) and rep_winding != (0, 0):
            return Admissibility("admissible", "taut, no contractible sub-loop")
        enclosed = enclosed_centres(rep, centres, model)
        if len(enclosed) >= 2:
            return Admissibility("admissible", "simple loop enclosing >= 2 centres")
        if len(enclosed) == 1:
            return Admissibility("not_admissible", "encloses exactly one centre")
        return Admissibility("not_admissible", "contractible representative")
    counts = [len(enc) for _, enc in diag.innermost_loops]
    if any(c == 1 for c in counts):
        return Admissibility("not_admissible", "innermost sub-loop with one centre")
    if all(c >= 2 for c in counts) and counts:
        return Admissibility("admissible", "taut, all innermost sub-loops >= 2 centres")
    if not counts:
        return Admissibility("admissible", "taut, no contractible sub-loop")
    return Admissibility("undecided", "mixed innermost structure")


# ---------------------------------------------------------------------------
# representative construction
# ---------------------------------------------------------------------------

def _circle(centre: Array, radius: float, n: int, phase: float = 0.0,
            ccw: bool = True) -> Array:
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    if not ccw:
        t = -t
    t = t + phase
    return centre + radius * np.column_stack([np.cos(t), np.sin(t)])


def _resample_polyline(pts: Array, n: int, closed: bool) -> Array:
    """Uniform arclength resampling."""
    pts = np.asarray(pts, float)
    if closed:
        pts = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    targets = np.linspace(0.0, total, n, endpoint=not closed)
    out = np.empty((n, 2))
    out[:, 0] = np.interp(targets, s, pts[:, 0])
    out[:, 1] = np.interp(targets, s, pts[:, 1])
    return out


def _smooth_closed(pts: Array, steps: int = 10, lam: float = 0.25) -> Array:
    out = pts.copy()
    for _ in range(steps):
        out = out + lam * (np.roll(out, 1, axis=0) + np.roll(out, -1, axis=0) - 2 * out)
    return out


def loop_from_word(letters: Sequence[int], centres: Array,
                   model: MetricModel = FlatPlane(),
                   winding: tuple[int, int] = (0, 0),
                   n_points: int = 512, seed: int = 0,
                   jitter: float = 0.0) -> tuple[Array, tuple[int, int]]:
    """Explicit polygonal representative of a homotopy class.

    For omega-semigroup words (N=3, plane) the representative concatenates
    circles around centre groups joined by radial bridges; generic words use
    a lasso construction from a base point.  The crossing word is correct by
    construction; 10 Laplacian smoothing steps are applied at the end.
    Returns (points, winding).
    """
    centres = np.asarray(centres, dtype=float)
    rng = np.random.default_rng(seed)
    letters = cyclic_reduce(letters)

    if isinstance(model, FlatTorus) and winding != (0, 0):
        return _torus_winding_loop(model, centres, winding, n_points, rng,
                                   jitter, letters), winding

    simple = _subset_circle_if_matches(letters, centres, model, n_points, rng, jitter)
    if simple is not None:
        return simple, (0, 0)
    blocks = parse_omega_blocks(letters) if len(centres) == 3 else None
    if blocks is not None and not isinstance(model, FlatTorus):
        pts = _omega_loop(blocks, centres, n_points, rng, jitter)
        return pts, (0, 0)
    pts = _lasso_loop(letters, centres, model, n_points, rng, jitter)
    return pts, winding


def _dedupe(pts: Array, tol: float = 1e-12) -> Array:
    keep = [0]
    for k in range(1, len(pts)):
        if np.linalg.norm(pts[k] - pts[keep[-1]]) > tol:
            keep.append(k)
    return pts[keep]


def _circle_arc_from_anchor(centre: Array, radius: float, anchor: Array,
                            n: int) -> Array:
    """Full CCW circuit of a circle starting and ending at the anchor point."""
    phase = float(np.arctan2(anchor[1] - centre[1], anchor[0] - centre[0]))
    t = phase + np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return centre + radius * np.column_stack([np.cos(t), np.sin(t)])


def _anchor_on_circle(origin: Array, direction: Array, centre: Array,
                      radius: float) -> Array:
    """Intersection of the ray origin + s*direction (s > 0) with the circle."""
    oc = origin - centre
    b = 2.0 * float(oc @ direction)
    c = float(oc @ oc) - radius * radius
    disc = b * b - 4.0 * c
    if disc < 0:
        raise ValueError("anchor ray misses the circle")
    s = (-b + np.sqrt(disc)) / 2.0
    return origin + s * direction


def _subset_circle_if_matches(letters, centres: Array, model: MetricModel,
                              n_points: int, rng, jitter: float) -> Optional[Array]:
    """Simple circle representative for single-circuit subset words.

    Words visiting a subset of centres once each, positively, are realized
    by one CCW circle around the subset when the circle's crossing word
    matches (verified); returns None otherwise.
    """
    if isinstance(model, FlatTorus):
        return None
    if not letters or any(s < 0 for s in letters):
        return None
    idx = [s - 1 for s in letters]
    if len(set(idx)) != len(idx):
        return None
    subset = centres[sorted(set(idx))]
    mid = subset.mean(axis=0)
    r_in = np.linalg.norm(subset - mid, axis=1).max()
    excluded = [k for k in range(len(centres)) if k not in set(idx)]
    r_out = min((np.linalg.norm(centres[k] - mid) for k in excluded), default=np.inf)
    if r_out <= r_in * 1.05:
        return None
    r = r_in + 0.45 * (min(r_out, r_in + 2.0) - r_in)
    r = r * (1.0 + 0.1 * rng.uniform(-1, 1) * jitter)
    pts = _circle(mid, r, n_points, phase=rng.uniform(0, 2 * np.pi) * jitter)
    try:
        rays = default_rays(centres, model)
        w = crossing_word(pts, rays, model, seed=0)
        if cyclic_equal(w.letters, letters):
            return pts
    except Exception:
        return None
    return None


def _omega_loop(blocks, centres: Array, n_points: int, rng, jitter: float) -> Array:
    """Circle-circuit representative of a product of omega blocks.

    All circuits are anchored on a common ray-free corridor through the
    centroid (the bisector between two puncture rays), so the bridges
    between circuits never cross a ray and the crossing word is the block
    word by construction.  Repeated circuits spiral slightly outward to stay
    in general position.
    """
    centroid = centres.mean(axis=0)
    spread = max(np.linalg.norm(centres - centroid, axis=1).max(), 0.1)
    # corridor direction: bisector between the first two outward ray directions
    d1 = (centres[0] - centroid) / np.linalg.norm(centres[0] - centroid)
    d2 = (centres[1] - centroid) / np.linalg.norm(centres[1] - centroid)
    corridor = d1 + d2
    corridor = corridor / np.linalg.norm(corridor)

    def eta_geom(k):
        r = spread * (1.6 + 0.04 * k) * (1.0 + 0.1 * rng.uniform(-1, 1) * jitter)
        return centroid, r

    def beta_geom(i, k):
        others = centres[[j for j in range(3) if j != i - 1]]
        mid = others.mean(axis=0)
        rad = np.linalg.norm(others - mid, axis=1).max()
        gap = np.linalg.norm(centres[i - 1] - mid)
        r = rad + (0.4 + 0.04 * k) * max(gap - rad, 0.2 * spread)
        r = r * (1.0 + 0.08 * rng.uniform(-1, 1) * jitter)
        return mid, r

    circuits = []
    for (i, n, m) in blocks:
        for k in range(n):
            circuits.append(beta_geom(i, k))
        for k in range(m):
            circuits.append(eta_geom(k))

    offsets = 0.01 * spread * np.arange(len(circuits))
    perp = np.array([-corridor[1], corridor[0]])
    path: list[Array] = []
    for idx, (ctr, r) in enumerate(circuits):
        origin = centroid + offsets[idx] * perp
        anchor = _anchor_on_circle(origin, corridor, ctr, r)
        arc = _circle_arc_from_anchor(ctr, r, anchor, 96)
        path.append(arc)
        path.append(anchor[None, :])
    flat = _dedupe(np.vstack(path))
    pts = _resample_polyline(flat, n_points, closed=True)
    pts = _smooth_closed(pts, steps=10)
    if jitter > 0:
        pts = pts + 0.002 * spread * jitter * rng.standard_normal(pts.shape)
    return pts


def _lasso_loop(letters, centres: Array, model: MetricModel,
                n_points: int, rng, jitter: float) -> Array:
    """Concatenation of lassos from a base point, one per letter.

    Each lasso approaches its centre with a small perpendicular strand
    offset, winds once (orientation by letter sign), and returns on the
    opposite strand; repeated visits to the same centre use shrinking radii
    so no two strands or circuits overlap exactly.
    """
    centres = np.asarray(centres, float)
    centroid = centres.mean(axis=0)
    spread = max(np.linalg.norm(centres - centroid, axis=1).max(), 0.5)
    base = centroid + np.array([0.0, 2.5 * spread + 1.0])
    min_sep = spread
    if len(centres) > 1:
        min_sep = min(np.linalg.norm(centres[i] - centres[j])
                      for i in range(len(centres)) for j in range(i + 1, len(centres)))
    r0 = 0.3 * min_sep * (1.0 + 0.2 * rng.uniform(-1, 1) * jitter)
    path: list[Array] = [base[None, :]]
    for k, s in enumerate(letters):
        c = centres[abs(s) - 1]
        u = (c - base) / np.linalg.norm(c - base)
        perp = np.array([-u[1], u[0]])
        w = 0.02 * min_sep * (1.0 + 0.35 * k)
        r = r0 * (1.0 - 0.05 * k / max(len(letters), 1))
        start = c - (r + w) * u + w * perp
        angle0 = float(np.arctan2(start[1] - c[1], start[0] - c[0]))
        sweep = 2.0 * np.pi if s > 0 else -2.0 * np.pi
        t = angle0 + np.linspace(0.0, sweep, 72)
        circ = c + r * np.column_stack([np.cos(t), np.sin(t)])
        path.append((base + w * perp)[None, :])
        path.append(circ)
        path.append((base - w * perp)[None, :])
    path.append(base[None, :])
    flat = _dedupe(np.vstack(path))
    pts = _resample_polyline(flat, n_points, closed=True)
    if jitter > 0:
        pts = pts + 0.002 * spread * jitter * rng.standard_normal(pts.shape)
    return pts


def _torus_baseline_candidates(model: FlatTorus, centres: Array, winding,
                               n_points: int):
    """Straight lift loops for a winding class, sorted by centre clearance."""
    per = np.array([model.period_x, model.period_y])
    shifts = np.linspace(0, 1, 17, endpoint=False)
    t = np.linspace(0.0, 1.0, n_points, endpoint=False)
    candidates = []
    for sx in shifts:
        for sy in shifts:
            start = np.array([sx * model.period_x, sy * model.period_y])
            pts = start + t[:, None] * (np.array(winding, float) * per)
            d = min(
                min(np.linalg.norm(displacement(model, c, p)) for p in pts[::max(1, n_points // 64)])
                for c in centres)
            candidates.append((d, pts))
    candidates.sort(key=lambda c: -c[0])
    return candidates


def _torus_winding_loop(model: FlatTorus, centres: Array, winding,
                        n_points: int, rng, jitter: float,
                        letters: Sequence[int] = ()) -> Array:
    """Straight lift representative of a lattice winding class.

    The baseline is the candidate farthest from the centres whose crossing
    word matches ``letters`` (use :func:`torus_class` for the canonical
    word of a straight winding loop).
    """
    rays = default_rays(centres, model)
    target = cyclic_reduce(letters)
    per = np.array([model.period_x, model.period_y])
    for d, pts in _torus_baseline_candidates(model, centres, winding, n_points):
        try:
            w = crossing_word(pts, rays, model, winding=tuple(winding))
        except Exception:
            continue
        if cyclic_equal(w.letters, target):
            return pts + 0.01 * jitter * rng.standard_normal(pts.shape) * per
    raise ValueError("no baseline found matching the requested torus word")


def torus_class(centres: Array, model: FlatTorus, winding: tuple[int, int],
                n_points: int = 256) -> HomotopyWord:
    """Canonical class of a straight lattice-winding loop on the torus.

    The letters are the crossing word of the farthest-from-centres straight
    representative against the default ray circles.
    """
    centres = np.asarray(centres, dtype=float)
    rays = default_rays(centres, model)
    for d, pts in _torus_baseline_candidates(model, centres, winding, n_points):
        try:
            w = crossing_word(pts, rays, model, winding=tuple(winding))
        except Exception:
            continue
        return HomotopyWord.make(w.letters, winding=tuple(winding))
    raise ValueError("no valid straight representative found")
