"""Command-line interface tying the modules into runnable experiments.

Exit codes: 0 success, 1 validation failure (an invariant breached), 2 usage
error.  Failures print one machine-readable line on stderr of the form
``mdwkb-error code=<code> msg=<text>``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, dirac, transport
from .config import RunConfig, default_config_text, load_config, parse_config
from .eikonal import eikonal_residual, phase_on_grid, solve_hj_grid, solve_rays
from .errors import MdwkbError
from .fieldio import save_field, save_manifest
from .grids import NamedForm
from .reference import run_reference
from .scaling import physical_to_dimensionless
from .transport import first_corrector, run_wkb, synthesize


def _outdir(args) -> Path:
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = parse_config(default_config_text())
    cfg.outdir = args.out
    cfg.seed = args.seed
    cfg.threads = args.threads
    return cfg


def cmd_scale(args) -> int:
    consts = {}
    if args.preset and args.preset != "electron":
        print(f"mdwkb-error code=usage msg=unknown preset {args.preset}", file=sys.stderr)
        return 2
    sc = physical_to_dimensionless(consts)
    for line in sc.lines():
        print(line)
    return 0


def cmd_symbol_check(args) -> int:
    rep = dirac.verify_identities(args.samples, seed=args.seed)
    for line in rep.lines():
        print(line)
    if rep.worst >= 1e-12:
        print(f"mdwkb-error code=identity msg=max deviation {rep.worst:.3e} >= 1e-12",
              file=sys.stderr)
        return 1
    return 0


def cmd_eikonal(args) -> int:
    cfg = _config(args)
    grid = cfg.grid
    T = cfg.T
    rays = solve_rays(cfg.phase_form, grid, T, oversample=cfg.oversample)
    nt = max(5, min(33, int(round(T / grid.dx[0])) + 1))
    phase = phase_on_grid(rays, grid, np.linspace(0.0, T, nt))
    res, mx = eikonal_residual(phase)
    hj = solve_hj_grid(cfg.phase_form, grid, T)
    cross = float(np.max(np.abs(phase.phi[-1] - hj.phi[-1])))
    print(f"caustic bound     : {rays.caustic_bound:.6g}")
    print(f"eikonal residual  : {mx:.3e}")
    print(f"ray-vs-grid match : {cross:.3e}")
    out = _outdir(args)
    save_field(out / "phase_final.fld", phase.phi[-1])
    save_manifest(out / "eikonal.json", {
        "caustic_bound": rays.caustic_bound,
        "residual_max": mx,
        "ray_vs_grid": cross,
        "config_hash": cfg.hash,
        "config": cfg.raw_text,
    })
    tol = 20.0 * max(grid.dx) ** 2 + 1e-9
    if mx > tol:
        print(f"mdwkb-error code=eikonal msg=residual {mx:.3e} exceeds {tol:.3e}",
              file=sys.stderr)
        return 1
    return 0


def cmd_wkb(args) -> int:
    cfg = _config(args)
    sol = run_wkb(cfg)
    if cfg.corrector:
        first_corrector(sol)
    drift = sol.metadata["charge_drift"]
    defect = sol.metadata["max_defect"]
    print(f"steps             : {sol.metadata['n_steps']} (dt={sol.metadata['dt']:.4g})")
    print(f"charge drift      : {drift:.3e}")
    print(f"polarization defct: {defect:.3e}")
    out = _outdir(args)
    sol.save(out / "wkb")
    for eps in cfg.epsilons:
        psi = synthesize(sol, eps, sol.times[-1])
        save_field(out / f"psi_eps_{eps:.6g}.fld", psi)
    if drift > cfg.conservation_tol or defect > cfg.defect_tol:
        print(f"mdwkb-error code=conservation msg=drift {drift:.3e} defect {defect:.3e}",
              file=sys.stderr)
        return 1
    return 0


def cmd_reference(args) -> int:
    cfg = _config(args)
    eps = cfg.epsilons[0]
    sol = run_wkb(cfg)
    psi0 = synthesize(sol, eps, 0.0)
    traj = run_reference(cfg.grid, psi0, eps, cfg.T, coupling=cfg.coupling)
    drift = float(np.max(np.abs(traj.log_charge - traj.log_charge[0]))
                  / max(traj.log_charge[0], 1e-300))
    print(f"steps             : {len(traj.log_times) - 1}")
    print(f"charge drift      : {drift:.3e}")
    out = _outdir(args)
    save_field(out / "psi_ref_final.fld", traj.psi[-1])
    lines = ["time,charge"] + [f"{t},{c}" for t, c in zip(traj.log_times, traj.log_charge)]
    (out / "reference_charge.csv").write_text("\n".join(lines) + "\n")
    if drift > 1e-8:
        print(f"mdwkb-error code=conservation msg=charge drift {drift:.3e}", file=sys.stderr)
        return 1
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    eps_list = cfg.epsilons
    if args.epsilons:
        eps_list = []
        for tok in args.epsilons.split(","):
            a, _, b = tok.partition("/")
            eps_list.append(float(a) / float(b) if b else float(tok))
    sol = run_wkb(cfg)
    if cfg.corrector:
        first_corrector(sol)
    table = diagnostics.compare(sol, eps_list, corrector=cfg.corrector)
    out = _outdir(args)
    (out / "convergence.csv").write_text(table.to_csv())
    print(table.to_csv())
    print(f"fitted order p = {table.fitted_order:.3f} (fit residual {table.fit_residual:.3f})")
    if table.unresolved:
        print("mdwkb-error code=order-unresolved msg=fit residual above 0.1", file=sys.stderr)
        return 1
    return 0


def cmd_wigner(args) -> int:
    cfg = _config(args)
    eps = cfg.epsilons[0]
    sol = run_wkb(cfg)
    psi = synthesize(sol, eps, sol.times[-1])
    w = diagnostics.wigner_transform(psi, eps, cfg.grid)
    out = _outdir(args)
    save_field(out / "wigner_trace.fld", w.trace_mass())
    save_field(out / "wigner_xi.fld", w.xi)
    dv = cfg.grid.cell_volume()
    total = w.total_mass()
    norm = float(np.sum(np.abs(psi) ** 2) * dv)
    print(f"wigner mass       : {total:.6g} (|psi|^2 = {norm:.6g})")
    if abs(total - norm) > 0.05 * max(norm, 1e-300):
        print("mdwkb-error code=wigner msg=marginal inconsistency", file=sys.stderr)
        return 1
    return 0


def cmd_residual(args) -> int:
    cfg = _config(args)
    sol = run_wkb(cfg)
    if cfg.corrector:
        first_corrector(sol)
    out = _outdir(args)
    rows = ["epsilon,time,residual_l2"]
    finals = []
    for eps in cfg.epsilons:
        t, r = diagnostics.residual_meter(sol, eps, corrector=cfg.corrector)
        finals.append(r[-1])
        rows += [f"{eps},{ti},{ri}" for ti, ri in zip(t, r)]
    (out / "residual.csv").write_text("\n".join(rows) + "\n")
    if len(cfg.epsilons) >= 3:
        p, resid = diagnostics.fit_order(cfg.epsilons, finals)
        print(f"residual order    : {p:.3f} (fit residual {resid:.3f})")
    for eps, r in zip(cfg.epsilons, finals):
        print(f"eps={eps:<10.6g} residual={r:.4e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mdwkb", description=__doc__)
    ap.add_argument("--config", help="run configuration file")
    ap.add_argument("--out", help="output directory (default ./out)")
    ap.add_argument("--threads", type=int, default=None, help="cap data-parallel width")
    ap.add_argument("--seed", type=int, default=0)
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("symbol-check", help="run the symbol identity suite")
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=cmd_symbol_check)

    p = sub.add_parser("eikonal", help="phase solve and residual report")
    p.set_defaults(func=cmd_eikonal)

    p = sub.add_parser("wkb", help="march the WKB transport system")
    p.set_defaults(func=cmd_wkb)

    p = sub.add_parser("reference", help="direct Maxwell-Dirac solve")
    p.set_defaults(func=cmd_reference)

    p = sub.add_parser("compare", help="WKB-vs-reference convergence study")
    p.add_argument("--epsilons", help="comma list, fractions allowed (1/16,1/32)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("wigner", help="Wigner transform of the synthesized field")
    p.set_defaults(func=cmd_wigner)

    p = sub.add_parser("residual", help="PDE residual of the synthesis")
    p.set_defaults(func=cmd_residual)

    p = sub.add_parser("scale", help="physical-to-dimensionless scaling")
    p.add_argument("--preset", default="electron")
    p.set_defaults(func=cmd_scale)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if not getattr(args, "command", None):
        ap.print_help()
        return 2
    if args.threads:
        try:
            import numba

            numba.set_num_threads(max(1, args.threads))
        except ImportError:
            pass
    try:
        return args.func(args)
    except MdwkbError as exc:
        print(f"mdwkb-error code={exc.code} msg={exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"mdwkb-error code=usage msg={exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
