"""Command-line orchestration, artifact persistence, and the orbit library.

Subcommands (all take ``--scene FILE``):

    minimize --word W            minimize the class W, emit an orbit record
    flow --orbit ID --time T     integrate from an orbit's initial state
    itinerary --orbit ID -K k    symbol window of an orbit via the flow
    sections                     build and plot the section system
    curvature-map --grid g       kappa_J on a grid, CSV output
    conjugation-check --orbit ID semi-conjugation report for an orbit
    kepler-blowup --alpha a --winding w --eps-list e1,e2,...
                                 obstacle suite with blow-up diagnostics
    shift-bench -K k             shift-space window properties report

Artifacts are written under $NCENTRE_OUT (default ./ncentre_out), keyed by
the content hash of the record; identical scene + seed + subcommand produce
byte-identical artifacts.  Exit codes: 0 success, 2 validation error,
3 numeric failure, 4 corruption.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from . import flow as flow_mod
from . import symbolic as symbolic_mod
from .potential import PotentialField, SingularityError, jacobi_curvature, evaluate_V
from .scene import SceneConfig, SceneError, build_field, emit_scene, parse_scene
from .state import EnergyShellState
from .topology import HomotopyWord, str_to_word, word_to_str
from .variational import (
    MinimizeConfig,
    MinimizerResult,
    NotAdmissibleError,
    ObstacleConfig,
    ObstacleConstraint,
    WordDriftError,
    blowup_rescale,
    initial_loop,
    minimize_in_class,
    newton_residual,
    obstacle_minimize,
    reparametrize,
    trajectory_energy_error,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_CORRUPTION = 4


def output_root() -> Path:
    return Path(os.environ.get("NCENTRE_OUT", "ncentre_out"))


# ---------------------------------------------------------------------------
# deterministic serialization
# ---------------------------------------------------------------------------

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_id(record: dict) -> str:
    return hashlib.sha256(canonical_json(record).encode()).hexdigest()[:12]


def file_sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def loop_csv(points: np.ndarray) -> str:
    lines = ["index,x,y"]
    for k, (x, y) in enumerate(points):
        lines.append(f"{k},{x!r},{y!r}")
    return "\n".join(lines) + "\n"


def trajectory_csv(traj, fld: PotentialField) -> str:
    errs = traj.energy_errors(fld)
    lines = ["t,x,y,vx,vy,energy_error"]
    for k in range(traj.n_samples):
        t = traj.times[k]
        x, y = traj.positions[k]
        vx, vy = traj.velocities[k]
        lines.append(f"{t!r},{x!r},{y!r},{vx!r},{vy!r},{errs[k]!r}")
    return "\n".join(lines) + "\n"


def events_csv(events) -> str:
    lines = ["t,segment,sign,x,y"]
    for ev in events:
        lines.append(f"{ev.time!r},{ev.segment_index},{ev.sign},"
                     f"{ev.point[0]!r},{ev.point[1]!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# SVG emission (deterministic; no timestamps)
# ---------------------------------------------------------------------------

def orbit_svg(points: np.ndarray, centres: np.ndarray,
              segments: Optional[list] = None, size: int = 640) -> str:
    all_pts = [points, centres]
    if segments:
        all_pts.extend(segments)
    stack = np.vstack(all_pts)
    lo = stack.min(axis=0)
    hi = stack.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-9))
    pad = 0.08 * span

    def sx(x):
        return (x - lo[0] + pad) / (span + 2 * pad) * size

    def sy(y):
        return size - (y - lo[1] + pad) / (span + 2 * pad) * size

    def polyline(pts, colour, width, close=False):
        coords = " ".join(f"{sx(p[0]):.3f},{sy(p[1]):.3f}" for p in pts)
        tag = "polygon" if close else "polyline"
        return (f'<{tag} points="{coords}" fill="none" stroke="{colour}" '
                f'stroke-width="{width}"/>')

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size}" viewBox="0 0 {size} {size}">',
             '<rect width="100%" height="100%" fill="white"/>',
             polyline(points, "#1f77b4", 1.5, close=True)]
    if segments:
        for seg in segments:
            parts.append(polyline(seg, "#2ca02c", 1.0))
    for c in centres:
        parts.append(f'<circle cx="{sx(c[0]):.3f}" cy="{sy(c[1]):.3f}" r="4" '
                     'fill="#d62728"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# orbit records
# ---------------------------------------------------------------------------

def write_orbit_record(result: MinimizerResult, traj, fld: PotentialField,
                       cfg: SceneConfig, itinerary_block=None) -> tuple[str, Path]:
    scene_hash = hashlib.sha256(emit_scene(cfg).encode()).hexdigest()[:12]
    ev = result.evaluation
    record = {
        "kind": "orbit",
        "scene": scene_hash,
        "word": word_to_str(result.word.letters),
        "winding": list(result.word.winding),
        "kinetic": ev.kinetic,
        "potential": ev.potential,
        "value": ev.value,
        "omega2": ev.omega2,
        "period": 1.0 / math.sqrt(ev.omega2),
        "gradient_norm": result.gradient_norm,
        "min_centre_distance": result.min_centre_distance,
        "energy_error": trajectory_energy_error(traj, fld),
        "iterations": result.iterations,
        "word_verified": result.word_verified,
        "itinerary": list(itinerary_block) if itinerary_block else None,
        "loop": [[float(x), float(y)] for x, y in result.loop.points],
    }
    oid = content_id(record)
    base = output_root() / "orbits" / oid
    loop_text = loop_csv(result.loop.points)
    traj_text = trajectory_csv(traj, fld)
    svg_text = orbit_svg(result.loop.points, fld.positions)
    atomic_write(base / "loop.csv", loop_text)
    atomic_write(base / "trajectory.csv", traj_text)
    atomic_write(base / "orbit.svg", svg_text)
    public = dict(record)
    public.pop("loop")
    public["id"] = oid
    public["files"] = {
        "loop.csv": hashlib.sha256(loop_text.encode()).hexdigest(),
        "trajectory.csv": hashlib.sha256(traj_text.encode()).hexdigest(),
        "orbit.svg": hashlib.sha256(svg_text.encode()).hexdigest(),
    }
    atomic_write(base / "record.json", canonical_json(public) + "\n")
    atomic_write(base / "loop.json", canonical_json(record["loop"]) + "\n")
    return oid, base


def load_orbit(oid_prefix: str):
    root = output_root() / "orbits"
    if not root.exists():
        raise FileNotFoundError("orbit library is empty")
    matches = [d for d in sorted(root.iterdir()) if d.name.startswith(oid_prefix)]
    if not matches:
        raise FileNotFoundError(f"no orbit matches id prefix {oid_prefix!r}")
    if len(matches) > 1:
        raise ValueError(f"ambiguous id prefix {oid_prefix!r}: "
                         + ", ".join(d.name for d in matches))
    record = json.loads((matches[0] / "record.json").read_text())
    loop = np.array(json.loads((matches[0] / "loop.json").read_text()))
    return record, loop, matches[0]


def verify_library() -> list[str]:
    """Re-check file hashes of every record; returns corruption messages."""
    problems = []
    root = output_root() / "orbits"
    if not root.exists():
        return problems
    for d in sorted(root.iterdir()):
        rec_path = d / "record.json"
        if not rec_path.exists():
            problems.append(f"{d.name}: missing record.json")
            continue
        record = json.loads(rec_path.read_text())
        for name, sha in record.get("files", {}).items():
            path = d / name
            if not path.exists():
                problems.append(f"{d.name}: missing {name}")
            elif file_sha(path) != sha:
                problems.append(f"{d.name}: hash mismatch in {name}")
    return problems


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _load_scene(path: str) -> tuple[SceneConfig, PotentialField]:
    cfg = parse_scene(Path(path).read_text())
    return cfg, build_field(cfg, check_energy=False)


def _minimize_config(cfg: SceneConfig) -> MinimizeConfig:
    return MinimizeConfig(grad_tol_rel=cfg.grad_tol, max_iters=cfg.max_iters,
                          seed=cfg.seed)


def cmd_minimize(args) -> int:
    cfg, fld = _load_scene(args.scene)
    letters = str_to_word(args.word)
    word = HomotopyWord.make(letters, winding=tuple(args.winding))
    init = initial_loop(word, fld, n_points=cfg.loop_points, seed=cfg.seed)
    result = minimize_in_class(word, init, fld, _minimize_config(cfg),
                               force=args.force)
    traj = reparametrize(result, fld)
    block = None
    try:
        system = flow_mod.build_section_system(fld, config=_minimize_config(cfg))
        evs = flow_mod.polyline_crossings(result.loop.points, system)
        block = [e.symbol for e in evs]
    except Exception:
        system = None
    oid, base = write_orbit_record(result, traj, fld, cfg, itinerary_block=block)
    print(f"orbit {oid}")
    print(f"  value = {result.evaluation.value!r}")
    print(f"  omega2 = {result.evaluation.omega2!r}")
    print(f"  period = {1.0 / math.sqrt(result.evaluation.omega2)!r}")
    print(f"  gradient_norm = {result.gradient_norm:.3e}")
    print(f"  min_centre_distance = {result.min_centre_distance:.6f}")
    print(f"  collision_trend = {result.collision_trend}")
    if block:
        print(f"  itinerary = {block}")
    print(f"  artifacts in {base}")
    return EXIT_OK


def cmd_flow(args) -> int:
    cfg, fld = _load_scene(args.scene)
    record, loop, base = load_orbit(args.orbit)
    omega = math.sqrt(record["omega2"])
    from .variational import DiscreteLoop, spectral_velocity
    lo = DiscreteLoop(points=loop, winding=tuple(record["winding"]))
    vel = omega * spectral_velocity(lo, fld.metric)
    state = EnergyShellState(loop[0], vel[0])
    traj = flow_mod.integrate(state, args.time, fld, tol=cfg.flow_tol)
    text = trajectory_csv(traj, fld)
    out = base / f"flow_T{args.time!r}.csv"
    atomic_write(out, text)
    print(f"status = {traj.status}; max energy drift = "
          f"{float(np.max(np.abs(traj.energy_errors(fld)))):.3e}")
    print(f"wrote {out}")
    return EXIT_OK


def _orbit_section_state(cfg, fld, record, loop):
    omega = math.sqrt(record["omega2"])
    from .variational import DiscreteLoop, spectral_velocity
    lo = DiscreteLoop(points=loop, winding=tuple(record["winding"]))
    vel = omega * spectral_velocity(lo, fld.metric)
    from .state import Trajectory
    n = len(loop)
    period = 1.0 / omega
    traj = Trajectory(times=np.arange(n) * period / n, positions=loop,
                      velocities=vel)
    system = flow_mod.build_section_system(fld, config=_minimize_config(cfg))
    state = flow_mod.section_state_from_trajectory(traj, system, fld,
                                                   tol=cfg.flow_tol)
    return system, state


def cmd_itinerary(args) -> int:
    cfg, fld = _load_scene(args.scene)
    record, loop, base = load_orbit(args.orbit)
    system, state = _orbit_section_state(cfg, fld, record, loop)
    window, t_total = flow_mod.periodic_itinerary(state, system, fld,
                                                  tol=cfg.flow_tol)
    # extend periodically to the requested radius
    out = [window.at(k) for k in range(-args.K, args.K + 1)]
    print(f"periodic block = {list(window.symbols)}")
    print(f"window [-{args.K}, {args.K}] = {out}")
    atomic_write(base / f"itinerary_K{args.K}.csv",
                 "k,symbol\n" + "\n".join(
                     f"{k},{s}" for k, s in zip(range(-args.K, args.K + 1), out)) + "\n")
    return EXIT_OK


def cmd_sections(args) -> int:
    cfg, fld = _load_scene(args.scene)
    system = flow_mod.build_section_system(fld, config=_minimize_config(cfg))
    root = output_root() / "sections"
    svg = orbit_svg(system.boundary, fld.positions, segments=system.segments)
    atomic_write(root / "sections.svg", svg)
    rows = ["segment,band,length"]
    for i in range(3):
        rows.append(f"{i + 1},{system.segment_band(i)!r},{system.chord_lengths[i]!r}")
    atomic_write(root / "segments.csv", "\n".join(rows) + "\n")
    print(f"sections built; max band {max(system.segment_band(i) for i in range(3)):.2e}")
    print(f"artifacts in {root}")
    return EXIT_OK


def cmd_curvature_map(args) -> int:
    cfg, fld = _load_scene(args.scene)
    pos = fld.positions
    lo = pos.min(axis=0) - 1.5
    hi = pos.max(axis=0) + 1.5
    rows = ["x,y,V,kappa_J"]
    worst = -math.inf
    for x in np.linspace(lo[0], hi[0], args.grid):
        for y in np.linspace(lo[1], hi[1], args.grid):
            q = np.array([x, y])
            try:
                rep = jacobi_curvature(fld, q)
                v = evaluate_V(fld, q)
            except (SingularityError, ValueError):
                continue
            worst = max(worst, rep.kappa_J)
            rows.append(f"{x!r},{y!r},{v!r},{rep.kappa_J!r}")
    out = output_root() / "curvature" / "map.csv"
    atomic_write(out, "\n".join(rows) + "\n")
    print(f"max kappa_J on grid = {worst!r}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_conjugation_check(args) -> int:
    cfg, fld = _load_scene(args.scene)
    record, loop, base = load_orbit(args.orbit)
    system, state = _orbit_section_state(cfg, fld, record, loop)
    rep = symbolic_mod.semi_conjugation_check(state, system, fld, K=args.K,
                                              tol=cfg.flow_tol, periodic=True)
    report = {
        "agreements": rep.agreements,
        "comparisons": rep.comparisons,
        "exact": rep.exact,
        "return_time": rep.return_time,
        "window_before": list(rep.window_before.symbols),
        "window_after": list(rep.window_after.symbols),
    }
    atomic_write(base / f"conjugation_K{args.K}.json", canonical_json(report) + "\n")
    print(f"shift relation: {rep.agreements}/{rep.comparisons} symbols agree"
          f" (exact={rep.exact})")
    return EXIT_OK


def cmd_kepler_blowup(args) -> int:
    cfg, fld = _load_scene(args.scene)
    eps_list = [float(e) for e in args.eps_list.split(",")]
    centre = fld.centres[args.centre].pos
    r0 = args.radius
    p = centre + np.array([r0, 0.0])
    q = centre + r0 * np.array([math.cos(math.pi - 0.4), math.sin(math.pi - 0.4)])
    rows = []
    for eps in eps_list:
        cons = ObstacleConstraint(centre_index=args.centre, radius=eps)
        res = obstacle_minimize(cons, (p, q), fld, ref_winding=args.winding,
                                n_points=360,
                                config=ObstacleConfig(max_iters=cfg.max_iters // 8,
                                                      seed=cfg.seed))
        rep = blowup_rescale(res, cons, fld)
        rows.append({
            "eps": eps, "value": res.evaluation.value,
            "dtheta": rep.total_angular_variation,
            "contact_single_interval": rep.contact_single_interval,
            "rescaled_energy_offcontact": rep.rescaled_energy_offcontact,
        })
        print(f"eps={eps}: d(eps)={res.evaluation.value!r} "
              f"dtheta={rep.total_angular_variation:.4f} "
              f"offE={rep.rescaled_energy_offcontact:.4e}")
    out = output_root() / "blowup" / "report.json"
    atomic_write(out, canonical_json({"runs": rows}) + "\n")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_shift_bench(args) -> int:
    rep = symbolic_mod.cantor_window_properties(K=args.K)
    report = {
        "K": rep.K, "window_count": rep.window_count,
        "branching_ok": rep.branching_ok,
        "branching_horizon": rep.branching_horizon,
        "periodic_density_ok": rep.periodic_density_ok,
        "shift_invariant_ok": rep.shift_invariant_ok,
        "min_extensions": rep.min_extensions,
    }
    out = output_root() / "shift" / f"bench_K{args.K}.json"
    atomic_write(out, canonical_json(report) + "\n")
    print(canonical_json(report))
    return EXIT_OK


def cmd_library(args) -> int:
    root = output_root() / "orbits"
    if args.action == "list":
        if not root.exists():
            print("(empty library)")
            return EXIT_OK
        for d in sorted(root.iterdir()):
            rec = json.loads((d / "record.json").read_text())
            print(f"{rec['id']}  word={rec['word']}  value={rec['value']:.6f}  "
                  f"period={rec['period']:.4f}")
        return EXIT_OK
    if args.action == "show":
        record, loop, base = load_orbit(args.orbit)
        print(canonical_json(record))
        return EXIT_OK
    problems = verify_library()
    if problems:
        for p in problems:
            print(f"CORRUPT: {p}")
        return EXIT_CORRUPTION
    print("library verified")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ncentre",
                                 description="periodic orbits and symbolic "
                                 "dynamics of the generalized N-centre problem")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_scene(p):
        p.add_argument("--scene", required=True, help="scene file path")

    p = sub.add_parser("minimize")
    add_scene(p)
    p.add_argument("--word", required=True, help='class word, e.g. "(a1a2)(a1a2a3)"')
    p.add_argument("--winding", type=int, nargs=2, default=(0, 0))
    p.add_argument("--force", action="store_true",
                   help="minimize even in a non-admissible class")
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("flow")
    add_scene(p)
    p.add_argument("--orbit", required=True)
    p.add_argument("--time", type=float, required=True)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("itinerary")
    add_scene(p)
    p.add_argument("--orbit", required=True)
    p.add_argument("-K", type=int, default=5)
    p.set_defaults(func=cmd_itinerary)

    p = sub.add_parser("sections")
    add_scene(p)
    p.set_defaults(func=cmd_sections)

    p = sub.add_parser("curvature-map")
    add_scene(p)
    p.add_argument("--grid", type=int, default=48)
    p.set_defaults(func=cmd_curvature_map)

    p = sub.add_parser("conjugation-check")
    add_scene(p)
    p.add_argument("--orbit", required=True)
    p.add_argument("-K", type=int, default=10)
    p.set_defaults(func=cmd_conjugation_check)

    p = sub.add_parser("kepler-blowup")
    add_scene(p)
    p.add_argument("--centre", type=int, default=0)
    p.add_argument("--winding", type=int, default=1)
    p.add_argument("--radius", type=float, default=0.35,
                   help="endpoint radius around the centre")
    p.add_argument("--eps-list", default="0.1,0.05,0.025")
    p.set_defaults(func=cmd_kepler_blowup)

    p = sub.add_parser("shift-bench")
    p.add_argument("-K", type=int, default=5)
    p.set_defaults(func=cmd_shift_bench)

    p = sub.add_parser("library")
    p.add_argument("action", choices=["list", "show", "verify"])
    p.add_argument("--orbit", help="id prefix for show")
    p.set_defaults(func=cmd_library)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except SceneError as exc:
        for ln, msg in exc.errors:
            print(f"scene error (line {ln}): {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NotAdmissibleError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (WordDriftError, SingularityError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
