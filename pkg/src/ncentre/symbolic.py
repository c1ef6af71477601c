"""Shift space over S = {+-1, +-2, +-3}, the allowed language, probes.

Bi-infinite sequences are represented by finite windows with an optional
periodic closure; every metric statement carries a certified truncation
bound.  The distance is

    d1(a, b) = sum_k rho(a_k, b_k) / 4^|k|

with rho the discrete metric, so truncating at |k| <= K leaves a tail of at
most (2/3) 4^{-K}.

The allowed language consists of factors of sequences of the form
(i_1, j_1)^{k_1} (1,2,3)^{w_1} (i_2, j_2)^{k_2} ... with i_l < j_l and all
run lengths positive; it is realized as the label language of a small
transition graph, which makes window enumeration and the Cantor-style
window-level checks exhaustive.  A separate pair-level validator rejects
the bounce blocks (-i, i) / (i, -i); both verdicts are reported.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .potential import PotentialField
from .state import EnergyShellState
from .topology import HomotopyWord, parse_omega_blocks

Array = np.ndarray

ALPHABET = (1, 2, 3, -1, -2, -3)

#: beta block symbols: pair of the two indices other than i
PAIR_OF = {1: (2, 3), 2: (1, 3), 3: (1, 2)}


class CoverageError(ValueError):
    """A window does not cover the index range required by the operation."""


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymbolWindow:
    """Finite itinerary window with the origin index of s_0.

    ``closure`` is "finite" or "periodic"; periodic windows repeat their
    stored block in both directions (the block length is the period).
    """

    symbols: tuple[int, ...]
    origin: int = 0
    closure: str = "finite"
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        for s in self.symbols:
            if s == 0 or abs(s) > 3:
                raise ValueError(f"symbol {s} outside the alphabet")
        if self.closure not in ("finite", "periodic"):
            raise ValueError("closure must be 'finite' or 'periodic'")
        if not (0 <= self.origin <= max(len(self.symbols) - 1, 0)):
            raise ValueError("origin must index into the stored symbols")

    @staticmethod
    def periodic(block: Sequence[int]) -> "SymbolWindow":
        return SymbolWindow(symbols=tuple(block), origin=0, closure="periodic")

    @property
    def period(self) -> int:
        if self.closure != "periodic":
            raise ValueError("period is defined for periodic windows only")
        return len(self.symbols)

    def covers(self, k: int) -> bool:
        if self.closure == "periodic":
            return True
        idx = self.origin + k
        return 0 <= idx < len(self.symbols)

    def at(self, k: int) -> int:
        """s_k; periodic closure extends in both directions."""
        if self.closure == "periodic":
            return self.symbols[(self.origin + k) % len(self.symbols)]
        idx = self.origin + k
        if not (0 <= idx < len(self.symbols)):
            raise CoverageError(f"window does not cover index {k}")
        return self.symbols[idx]

    def range(self) -> tuple[int, int]:
        """Covered index range [kmin, kmax] for finite windows."""
        return -self.origin, len(self.symbols) - 1 - self.origin


def shift(window: SymbolWindow) -> SymbolWindow:
    """Bernoulli shift: sigma((s_k)) = (s_{k+1}).

    Periodic windows rotate exactly; finite windows shrink by one symbol on
    the left of the new origin.
    """
    if not window.symbols:
        raise ValueError("cannot shift an empty window")
    if window.closure == "periodic":
        sym = window.symbols[1:] + window.symbols[:1]
        return SymbolWindow(symbols=sym, origin=window.origin, closure="periodic")
    if len(window.symbols) - window.origin <= 1:
        raise ValueError("finite window has no symbol to the right of s_0")
    return SymbolWindow(symbols=window.symbols[1:], origin=window.origin,
                        closure="finite", truncated=window.truncated)


# ---------------------------------------------------------------------------
# the d1 metric
# ---------------------------------------------------------------------------

def d1(a: SymbolWindow, b: SymbolWindow, K: int) -> tuple[float, float]:
    """Truncated shift-space distance and its certified tail bound.

    value = sum_{|k| <= K} rho(a_k, b_k)/4^|k|; the tail obeys
    |d1 - value| <= (2/3) 4^{-K}.  Raises CoverageError when either window
    misses part of [-K, K].
    """
    for w, name in ((a, "a"), (b, "b")):
        if w.closure == "finite":
            lo, hi = w.range()
            if lo > -K or hi < K:
                raise CoverageError(
                    f"window {name} covers [{lo}, {hi}], needs [-{K}, {K}]")
    total = 0.0
    for k in range(-K, K + 1):
        if a.at(k) != b.at(k):
            total += 4.0 ** (-abs(k))
    tail = (2.0 / 3.0) * 4.0 ** (-K)
    return total, tail


def d1_periodic_exact(a: SymbolWindow, b: SymbolWindow) -> float:
    """Exact d1 for two periodic windows (closed-form lattice sums)."""
    if a.closure != "periodic" or b.closure != "periodic":
        raise ValueError("exact distance requires periodic closures")
    L = math.lcm(a.period, b.period)
    q = 0.25
    qL = q ** L
    total = 0.0
    for r in range(L):
        if a.at(r) == b.at(r):
            continue
        if r == 0:
            total += 1.0 + 2.0 * qL / (1.0 - qL)
        else:
            total += (q ** r + q ** (L - r)) / (1.0 - qL)
    return total


# ---------------------------------------------------------------------------
# the allowed language
# ---------------------------------------------------------------------------

def _language_graph():
    """Transition graph whose bi-infinite walks realize the periodic form.

    Nodes: ("b", i, j, pos) inside a pair block (i < j, pos the emitted
    element), ("e", pos) inside a (1,2,3) block.  Labels sit on the nodes
    (the symbol just emitted).
    """
    nodes = []
    for (i, j) in ((1, 2), (1, 3), (2, 3)):
        nodes.append(("b", i, j, 0))
        nodes.append(("b", i, j, 1))
    for pos in range(3):
        nodes.append(("e", pos))
    labels = {}
    for node in nodes:
        if node[0] == "b":
            labels[node] = node[1] if node[3] == 0 else node[2]
        else:
            labels[node] = node[1] + 1
    edges: dict = {node: [] for node in nodes}
    for (i, j) in ((1, 2), (1, 3), (2, 3)):
        edges[("b", i, j, 0)].append(("b", i, j, 1))
        edges[("b", i, j, 1)].append(("b", i, j, 0))
        edges[("b", i, j, 1)].append(("e", 0))
        edges[("e", 2)].append(("b", i, j, 0))
    edges[("e", 0)].append(("e", 1))
    edges[("e", 1)].append(("e", 2))
    edges[("e", 2)].append(("e", 0))
    return nodes, labels, edges


@dataclass(frozen=True)
class AllowedLanguage:
    """Pair-level forbidden blocks plus the positive periodic grammar."""

    forbid_bounce: bool = True   # adjacent (-i, i) and (i, -i)
    use_grammar: bool = True

    def graph(self):
        return _language_graph()


DEFAULT_LANGUAGE = AllowedLanguage()


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    pair_ok: bool
    grammar_ok: bool
    position: Optional[int] = None
    kind: str = ""


def _pair_scan(symbols: Sequence[int], periodic: bool) -> Optional[int]:
    n = len(symbols)
    last = n if periodic else n - 1
    for k in range(last):
        a, b = symbols[k], symbols[(k + 1) % n]
        if a == -b:
            return k
    return None


def _grammar_scan(symbols: Sequence[int], periodic: bool,
                  language: AllowedLanguage) -> bool:
    """True iff the window is a factor (or cycle) of the language graph."""
    if any(s < 0 for s in symbols):
        return False
    nodes, labels, edges = language.graph()
    starts = [v for v in nodes if labels[v] == symbols[0]]
    frontier = {v: {v} for v in starts}  # current node -> possible start nodes
    for s in symbols[1:]:
        new: dict = {}
        for v, origins in frontier.items():
            for w in edges[v]:
                if labels[w] == s:
                    new.setdefault(w, set()).update(origins)
        frontier = new
        if not frontier:
            return False
    if not periodic:
        return True
    # a periodic window must close into a cycle of the graph
    for v, origins in frontier.items():
        for w in edges[v]:
            if w in origins and labels[w] == symbols[0]:
                return True
    return False


def validate(window: SymbolWindow,
             language: AllowedLanguage = DEFAULT_LANGUAGE) -> ValidationReport:
    """Linear scan for forbidden bounce pairs plus the grammar verdict.

    The overall ``valid`` follows the pair scan (any bounce pair fails) and,
    when the window is sign-positive, the grammar; windows with negative
    symbols are judged by the pair scan alone (the grammar covers the
    positive periodic form only, and both verdicts are reported).
    """
    periodic = window.closure == "periodic"
    pos = _pair_scan(window.symbols, periodic) if language.forbid_bounce else None
    pair_ok = pos is None
    grammar_ok = True
    if language.use_grammar and all(s > 0 for s in window.symbols):
        grammar_ok = _grammar_scan(window.symbols, periodic, language)
    valid = pair_ok and grammar_ok
    kind = ""
    if not pair_ok:
        kind = "reflection pair"
    elif not grammar_ok:
        kind = "grammar"
    return ValidationReport(valid=valid, pair_ok=pair_ok, grammar_ok=grammar_ok,
                            position=pos, kind=kind)


# ---------------------------------------------------------------------------
# expected itineraries of the canonical classes
# ---------------------------------------------------------------------------

def expected_itinerary(word: HomotopyWord) -> SymbolWindow:
    """Periodic window of a word in the omega semigroup.

    Each block beta_i^n maps to (pair of the other two indices)^n and eta^m
    to (1,2,3)^m.
    """
    blocks = parse_omega_blocks(word.letters)
    if blocks is None:
        raise ValueError(f"word {word} is not a product of omega classes")
    out: list[int] = []
    for (i, n, m) in blocks:
        out.extend(PAIR_OF[i] * n)
        out.extend((1, 2, 3) * m)
    return SymbolWindow.periodic(out)


def cyclic_symbols_equal(a: Sequence[int], b: Sequence[int]) -> bool:
    a = tuple(a)
    b = tuple(b)
    if len(a) != len(b):
        return False
    if not a:
        return True
    return any((a[k:] + a[:k]) == b for k in range(len(a)))


# ---------------------------------------------------------------------------
# semi-conjugation check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SemiConjugationReport:
    agreements: int
    comparisons: int
    window_before: SymbolWindow
    window_after: SymbolWindow
    return_time: float

    @property
    def exact(self) -> bool:
        return self.comparisons > 0 and self.agreements == self.comparisons


def semi_conjugation_check(state: EnergyShellState, system, fld: PotentialField,
                           K: int, tol: float = 1e-10,
                           periodic: bool = False) -> SemiConjugationReport:
    """Verify pi(Phi^{T(x)}(x)) = sigma(pi(x)) symbol by symbol.

    Computes the itinerary window of ``state``, applies one first return,
    recomputes the window, and counts agreements of the shift relation over
    [-K, K).  With ``periodic=True`` the windows are the closing blocks of
    a periodic orbit (full coverage at any K; finite windows truncate under
    the exponential shadowing limit of hyperbolic orbits).
    """
    from .flow import first_return, itinerary, periodic_itinerary

    if periodic:
        before, _ = periodic_itinerary(state, system, fld, tol=tol)
    else:
        before = itinerary(state, system, fld, K=K, tol=tol)
    new_state, t_ret, _ = first_return(state, system, fld, tol=tol)
    if periodic:
        after, _ = periodic_itinerary(new_state, system, fld, tol=tol)
    else:
        after = itinerary(new_state, system, fld, K=K, tol=tol)
    agreements = comparisons = 0
    for k in range(-K, K):
        if before.covers(k + 1) and after.covers(k):
            comparisons += 1
            if before.at(k + 1) == after.at(k):
                agreements += 1
    return SemiConjugationReport(agreements=agreements, comparisons=comparisons,
                                 window_before=before, window_after=after,
                                 return_time=t_ret)


# ---------------------------------------------------------------------------
# window-level Cantor checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CantorReport:
    K: int
    window_count: int
    branching_ok: bool            # every K-window branches within the horizon
    branching_horizon: int
    periodic_density_ok: bool     # every K-window occurs in a periodic word
    shift_invariant_ok: bool
    min_extensions: int           # at the branching horizon

    @property
    def all_ok(self) -> bool:
        return self.branching_ok and self.periodic_density_ok and self.shift_invariant_ok


def enumerate_windows(K: int, language: AllowedLanguage = DEFAULT_LANGUAGE) -> list[tuple[int, ...]]:
    """All length-K factors of the language.

    With the grammar enabled these are the label sequences of graph walks;
    the pair-level control language enumerates signed windows without
    bounce pairs (kept to K <= 8 to stay exhaustive).
    """
    if K < 1:
        raise ValueError("window length must be >= 1")
    if not language.use_grammar:
        if K > 8:
            raise ValueError("pair-level enumeration is limited to K <= 8")
        out = [(s,) for s in ALPHABET]
        for _ in range(K - 1):
            out = [w + (s,) for w in out for s in ALPHABET if w[-1] != -s]
        return sorted(out)
    nodes, labels, edges = language.graph()
    frontier: dict[tuple[int, ...], set] = {}
    for v in nodes:
        frontier.setdefault((labels[v],), set()).add(v)
    for _ in range(K - 1):
        new: dict[tuple[int, ...], set] = {}
        for word, vs in frontier.items():
            for v in vs:
                for w in edges[v]:
                    new.setdefault(word + (labels[w],), set()).add(w)
        frontier = new
    return sorted(frontier.keys())


def _extension_count(word, horizon: int, language: AllowedLanguage) -> int:
    """Number of distinct valid (len+horizon)-extensions of the window."""
    if not language.use_grammar:
        count = 1
        for _ in range(horizon):
            count *= 5  # any symbol but the bounce of the previous one
        return count
    nodes, labels, edges = language.graph()
    ends = {v for v in nodes if labels[v] == word[0]}
    for s in word[1:]:
        ends = {w for v in ends for w in edges[v] if labels[w] == s}
        if not ends:
            return 0
    suffixes = {(): ends}
    for _ in range(horizon):
        new: dict = {}
        for suf, vs in suffixes.items():
            for v in vs:
                for w in edges[v]:
                    new.setdefault(suf + (labels[w],), set()).add(w)
        suffixes = new
    return len(suffixes)


def cantor_window_properties(language: AllowedLanguage = DEFAULT_LANGUAGE,
                             K: int = 3, horizon: int = 4) -> CantorReport:
    """Exhaustive window-level proxies for the Cantor-set structure.

    (a) every valid K-window admits at least two distinct valid extensions
    within ``horizon`` more symbols (no isolated points; the grammar has
    deterministic single-step continuations, so the branching horizon is
    where distinctness must show up); (b) every valid K-window occurs in
    some periodic valid word; (c) the window set is shift-invariant.
    """
    if K > 12:
        raise ValueError("exhaustive enumeration is limited to K <= 12")
    wins = enumerate_windows(K, language)
    min_ext = math.inf
    for w in wins:
        min_ext = min(min_ext, _extension_count(w, horizon, language))
    branching_ok = min_ext >= 2

    if language.use_grammar:
        nodes, labels, edges = language.graph()
        reachable: dict = {}
        for v in nodes:
            seen = {v}
            queue = [v]
            while queue:
                u = queue.pop()
                for w in edges[u]:
                    if w not in seen:
                        seen.add(w)
                        queue.append(w)
            reachable[v] = seen

        def occurs_in_cycle(word) -> bool:
            pairs = {(v, v) for v in nodes if labels[v] == word[0]}
            for s in word[1:]:
                pairs = {(v0, w) for (v0, v) in pairs
                         for w in edges[v] if labels[w] == s}
                if not pairs:
                    return False
            return any(v0 in reachable[v] for (v0, v) in pairs)

        dens_ok = all(occurs_in_cycle(w) for w in wins)
    else:
        # a pair-valid window closes into a periodic word directly, possibly
        # with one buffer symbol between the end and the start
        def closes(word) -> bool:
            if word[-1] != -word[0]:
                return True
            return any(word[-1] != -s and s != -word[0] for s in ALPHABET)

        dens_ok = all(closes(w) for w in wins)

    if K > 1:
        shorter = set(enumerate_windows(K - 1, language))
        shift_ok = all(w[1:] in shorter and w[:-1] in shorter for w in wins)
    else:
        shift_ok = True
    return CantorReport(K=K, window_count=len(wins), branching_ok=branching_ok,
                        branching_horizon=horizon, periodic_density_ok=dens_ok,
                        shift_invariant_ok=shift_ok, min_extensions=int(min_ext))


# ---------------------------------------------------------------------------
# uniqueness probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniquenessReport:
    trials: int
    completed: int
    values: tuple[float, ...]
    max_hausdorff: float
    max_alignment_residual: float
    kappa_certified: bool

    @property
    def agree(self) -> bool:
        return self.completed == self.trials


def uniqueness_probe(word: HomotopyWord, fld: PotentialField, trials: int,
                     seed: int = 0, n_points: int = 1024,
                     config=None, kappa_grid: int = 24,
                     tol: float = 1e-4) -> UniquenessReport:
    """Minimize the same class from independent initializations and compare.

    Support agreement across trials (pairwise polyline Hausdorff distance
    within tolerance) is the numerical evidence for uniqueness of the
    minimizer, the mechanism behind the conjugation statement; the working
    region is first certified kappa_J <= 0 on a grid.
    """
    from .potential import SingularityError, jacobi_curvature
    from .variational import (DiscreteLoop, MinimizeConfig, align_loops,
                              initial_loop, minimize_in_class,
                              polyline_hausdorff, resample_loop)

    if trials < 2:
        raise ValueError("uniqueness probes need at least two trials")
    # the Newton polish supplies the final precision; the descent phase only
    # needs to reach its basin
    config = config or MinimizeConfig(grad_tol_rel=3e-7, max_iters=8000)
    # curvature certification grid over the configuration's bounding box
    pos = fld.positions
    lo = pos.min(axis=0) - 1.5
    hi = pos.max(axis=0) + 1.5
    certified = True
    for x in np.linspace(lo[0], hi[0], kappa_grid):
        for y in np.linspace(lo[1], hi[1], kappa_grid):
            try:
                rep = jacobi_curvature(fld, np.array([x, y]))
            except (SingularityError, ValueError):
                continue
            if rep.kappa_J > 1e-12:
                certified = False
    loops = []
    dense = []
    values = []
    for t in range(trials):
        init = initial_loop(word, fld, n_points=n_points,
                            seed=seed + 1000 * t, jitter=1.0 if t else 0.0)
        try:
            res = minimize_in_class(word, init, fld, config)
        except Exception:
            continue
        loops.append(res.loop.points)
        # trigonometric upsample so polyline sag stays below the tolerance
        dense.append(resample_loop(res.loop, 4 * n_points, fld.metric).points)
        values.append(res.evaluation.value)
    worst_h = 0.0
    worst_a = 0.0
    for i in range(len(loops)):
        for j in range(i + 1, len(loops)):
            worst_h = max(worst_h, polyline_hausdorff(dense[i], dense[j]))
            if loops[i].shape == loops[j].shape:
                resid, _ = align_loops(loops[i], loops[j])
                worst_a = max(worst_a, resid)
    return UniquenessReport(trials=trials, completed=len(loops),
                            values=tuple(values), max_hausdorff=worst_h,
                            max_alignment_residual=worst_a,
                            kappa_certified=certified)
