"""Command-line entry points: section, rod, beam, converge.

Exit codes: 0 success / experiment pass, 1 experiment verdict fail, 2 error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import beam3d, rod1d
from .cross_section import (
    Q1Form,
    assemble_q1,
    generate_disc,
    load_mesh,
    normalize_section,
)
from .harness import (
    ExperimentConfig,
    HarnessError,
    InsufficientDataError,
    load_profile_from_file,
    run_convergence,
)
from .material import EnergyDensity, isotropic_elasticity


def _parse_load(spec: str, length: float) -> rod1d.LoadProfile:
    if spec == "zero":
        return rod1d.LoadProfile.zero(length)
    if spec.startswith("const:"):
        parts = spec[len("const:") :].split(",")
        if len(parts) != 3:
            raise ValueError(f"load spec {spec!r}: const needs gx,gy,gz")
        vec = np.array([float(p) for p in parts])
        return rod1d.LoadProfile.constant(vec, length)
    if spec.startswith("file:"):
        return load_profile_from_file(spec[len("file:") :], length)
    raise ValueError(f"unknown load spec {spec!r} (zero | const:gx,gy,gz | file:PATH)")


def _parse_section(spec: str):
    if spec.startswith("disc:"):
        return generate_disc(1.0, int(spec[len("disc:") :]))
    return load_mesh(spec)


def _cmd_section(args) -> int:
    if (args.mesh is None) == (args.disc_refine is None):
        print("section: give exactly one of --mesh or --disc-refine", file=sys.stderr)
        return 2
    if args.mesh is not None:
        raw = load_mesh(args.mesh)
    else:
        raw = generate_disc(1.0, args.disc_refine)
    mesh, tform = normalize_section(raw)
    L = isotropic_elasticity(args.lam, args.mu)
    form = assemble_q1(mesh, L)

    print(f"normalization: shift ({tform.shift[0]:+.6e}, {tform.shift[1]:+.6e}), "
          f"rotation {tform.angle:+.6e} rad, scale {tform.scale:.6e}")
    print("Q1 stiffness matrix, coordinates (A12, A13, A23):")
    for row in form.matrix:
        print("  " + "  ".join(f"{v:+.10e}" for v in row))
    print(f"smallest eigenvalue: {form.smallest_eigenvalue:.10e}")
    print(f"cell-solve weak residuals: "
          + ", ".join(f"{r:.3e}" for r in form.constraint_residuals))

    payload = {
        "matrix": [[float(v) for v in row] for row in form.matrix],
        "mesh_stats": mesh.stats(),
        "constraint_residuals": list(form.constraint_residuals),
    }
    out = Path(args.out)
    out.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {out}")
    return 0


def _nodal_skew_coords(sol: rod1d.RodConfig) -> np.ndarray:
    a_mid = rod1d.curvature_torsion(sol)
    n = sol.n_intervals
    a = np.zeros((n + 1, 3))
    if n == 1:
        a[:] = a_mid[0]
    else:
        a[1:-1] = 0.5 * (a_mid[:-1] + a_mid[1:])
        a[0] = 1.5 * a_mid[0] - 0.5 * a_mid[1]
        a[-1] = 1.5 * a_mid[-1] - 0.5 * a_mid[-2]
    return a


def _cmd_rod(args) -> int:
    with open(args.q1, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    form = Q1Form(
        matrix=np.array(data["matrix"], dtype=float),
        constraint_residuals=tuple(data.get("constraint_residuals", ())),
    )
    load = _parse_load(args.load, args.length)
    init = rod1d.RodConfig.straight(args.length, args.grid)
    opts = rod1d.SolverOptions(tol=args.tol)
    sol = rod1d.minimize_j2(init, form, load, opts)

    energy = rod1d.energy_j2(sol, form, load)
    elastic = rod1d.elastic_energy_j2(sol, form)
    res = rod1d.el_residual(sol, form, load)
    print(f"energy J2 = {energy:.10e} (elastic {elastic:.10e})")
    print(f"EL residual: interior L2 {res.interior_l2:.3e}, "
          f"max {res.interior_max:.3e}, boundary {res.boundary_max:.3e}")

    y, _, _ = rod1d.frame_from_rotations(sol)
    a = _nodal_skew_coords(sol)
    header = "x1," + ",".join(f"R{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)) \
        + ",y1,y2,y3,A12,A13,A23"
    lines = [header]
    for k in range(len(sol.x)):
        vals = [sol.x[k]]
        vals += [sol.rotations[k, i, j] for i in range(3) for j in range(3)]
        vals += list(y[k]) + list(a[k])
        lines.append(",".join("%.12e" % v for v in vals))
    out = Path(args.out)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out}")
    return 0


def _cmd_beam(args) -> int:
    raw = _parse_section(args.section)
    section, _ = normalize_section(raw)
    W = EnergyDensity(kind=args.density, lame_lambda=args.lam, lame_mu=args.mu)
    load = _parse_load(args.load, args.length)
    mesh = beam3d.BeamMesh(section, args.length, args.grid, args.h)
    init = beam3d.identity_state(mesh)
    opts = beam3d.BeamSolverOptions(tol=args.tol)
    state = beam3d.minimize_jh(init, mesh, W, load, opts)
    en = beam3d.energy_jh(state, mesh, W, load)
    diag = beam3d.compute_diagnostics(state, mesh, W)
    print(f"J^h = {en.total:.10e} (elastic {en.elastic:.10e}, "
          f"elastic/h^2 {en.elastic / args.h**2:.10e})")
    print(f"rigidity |grad_h y - R|_L2 = {diag.rigidity_l2:.3e}, "
          f"symmetry defect L1 = {diag.symmetry_defect_l1:.3e}")

    tag = f"{args.h:g}"
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"beam_h{tag}.csv"
    xs = np.repeat(mesh.x1_nodes, mesh.n_section)
    sec = np.tile(section.nodes, (mesh.n_axial + 1, 1))
    lines = ["node,x1,x2,x3,y1,y2,y3"]
    for k in range(mesh.n_nodes):
        lines.append(
            f"{k}," + ",".join(
                "%.12e" % v
                for v in (xs[k], sec[k, 0], sec[k, 1], *state.y[k])
            )
        )
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    diag_path = outdir / f"diag_h{tag}.json"
    payload = {
        "h": args.h,
        "grid": args.grid,
        "density": args.density,
        "lambda": args.lam,
        "mu": args.mu,
        "energy": {
            "total": en.total,
            "elastic": en.elastic,
            "load_work": en.load_work,
            "elastic_over_h2": en.elastic / args.h**2,
        },
        "rigidity_l2": diag.rigidity_l2,
        "symmetry_defect_l1": diag.symmetry_defect_l1,
        "x1_nodes": [float(v) for v in mesh.x1_nodes],
        "moments": {
            "bar": diag.moments_bar.tolist(),
            "tilde": diag.moments_tilde.tolist(),
            "hat": diag.moments_hat.tolist(),
        },
    }
    diag_path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n",
                         encoding="utf-8")
    print(f"wrote {csv_path} and {diag_path}")
    return 0


def _cmd_converge(args) -> int:
    cfg = ExperimentConfig.from_toml(args.config)
    report = run_convergence(cfg, progress=lambda msg: print(msg, flush=True))
    out = Path(cfg.output_dir)
    print(f"report files in {out}")
    if report.verdict is not None and report.verdict.passed:
        print("verdict: PASS")
        return 0
    print("verdict: FAIL")
    if report.verdict is not None:
        for f in report.verdict.failures:
            print(f"  - {f}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rodlimit",
        description="Bending-torsion rod models extracted from 3D elastic beams",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("section", help="assemble the limit stiffness form Q1")
    ps.add_argument("--mesh", help="cross-section mesh file")
    ps.add_argument("--disc-refine", type=int, help="use a unit disc at this refinement")
    ps.add_argument("--lambda", dest="lam", type=float, default=0.0)
    ps.add_argument("--mu", type=float, default=1.0)
    ps.add_argument("--out", default="q1.json")
    ps.set_defaults(func=_cmd_section)

    pr = sub.add_parser("rod", help="minimize the limit rod energy J2")
    pr.add_argument("--q1", required=True, help="q1.json from the section step")
    pr.add_argument("--load", default="zero", help="zero | const:gx,gy,gz | file:PATH")
    pr.add_argument("--grid", type=int, default=80)
    pr.add_argument("--tol", type=float, default=1e-9)
    pr.add_argument("--length", type=float, default=1.0)
    pr.add_argument("--out", default="rod_solution.csv")
    pr.set_defaults(func=_cmd_rod)

    pb = sub.add_parser("beam", help="minimize the 3D energy J^h at one thickness")
    pb.add_argument("--section", required=True, help="mesh path or disc:K")
    pb.add_argument("--h", type=float, required=True)
    pb.add_argument("--grid", type=int, required=True, help="axial intervals")
    pb.add_argument("--lambda", dest="lam", type=float, default=0.0)
    pb.add_argument("--mu", type=float, default=1.0)
    pb.add_argument("--density", choices=("dist2", "svk"), default="svk")
    pb.add_argument("--load", default="zero")
    pb.add_argument("--tol", type=float, default=1e-9)
    pb.add_argument("--length", type=float, default=1.0)
    pb.add_argument("--outdir", default=".")
    pb.set_defaults(func=_cmd_beam)

    pc = sub.add_parser("converge", help="run the h-sweep convergence experiment")
    pc.add_argument("--config", required=True, help="TOML experiment config")
    pc.set_defaults(func=_cmd_converge)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (HarnessError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
