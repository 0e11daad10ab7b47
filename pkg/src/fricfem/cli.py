"""Command line interface: campaign runs, property verification, mesh info."""

import argparse
import json
import os
import sys

import numpy as np

from .adaptive import (AdaptiveConfig, adaptive_solve, fitted_rate,
                       solve_reference)
from .assembly import ContactFaces
from .campaigns import (BUILTIN_NAMES, adaptive_config, builtin_config,
                        config_hash, initial_mesh, load_config, newton_config,
                        problem_factory, reference_mesh, save_config,
                        validate_config)
from .mesh import read_mesh, write_mesh
from .newton import newton_solve
from .verification import lemma_properties, rewrite_identities, tangent_check

ENV_OUTPUT_DIR = "FRICFEM_OUTPUT_DIR"


# ----------------------------------------------------------------------
# Output helpers

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows, chash):
    """Write rows (sequences) with a header line and a config-hash comment."""
    with open(path, "w") as f:
        f.write(f"# config {chash}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _report_rows(report):
    header = list(report.levels[0].keys())
    rows = [[row.get(k, float("nan")) for k in header] for row in report.levels]
    return header, rows


def _distribution_rows(report):
    header = ["level", "elements", "eta_min", "eta_q1", "eta_median",
              "eta_q3", "eta_max"]
    rows = [[row[k] for k in header] for row in report.levels]
    return header, rows


def _trace_rows(report, gamma_lin):
    header = ["level", "k", "eta_osc", "eta_str", "eta_lin", "eta_Neu",
              "eta_cnt", "eta_frc", "stop"]
    rows = []
    for level, trace in enumerate(report.traces):
        for entry in trace:
            if "osc" not in entry:
                continue  # residual-stopping runs carry no estimator trace
            rest = (entry["osc"] + entry["str"] + entry["neu"]
                    + entry["cnt"] + entry["frc"])
            rows.append([level, entry["iteration"], entry["osc"],
                         entry["str"], entry["lin"], entry["neu"],
                         entry["cnt"], entry["frc"],
                         int(entry["lin"] <= gamma_lin * rest)])
    return header, rows


def _element_rows(table):
    header = ["element", "osc", "str", "lin1", "lin2n", "lin2t", "neu",
              "cnt", "frc", "eta_tot"]
    cols = [getattr(table, name) for name in table.COLUMNS]
    cols.append(table.eta_tot)
    rows = [[t] + [float(c[t]) for c in cols] for t in range(len(cols[0]))]
    return header, rows


def _dump_solution(out_dir, tag, mesh_file, u, degree, chash):
    path = os.path.join(out_dir, f"solution_{tag}.csv")
    write_csv(path, ["dof_id", "value"],
              [[i, float(v)] for i, v in enumerate(u)], chash)
    side = os.path.join(out_dir, f"solution_{tag}.txt")
    with open(side, "w") as f:
        f.write(f"mesh {mesh_file}\ndegree {degree}\ncomponents 2\n")
    return [path, side]


def _render_figures(out_dir, reports):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    files = []

    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    for mode, rep in reports.items():
        dofs = [r["dofs"] for r in rep.levels]
        ax.loglog(dofs, [r["eta_tot"] for r in rep.levels], "o-",
                  label=f"eta_tot ({mode})")
        if "energy_error" in rep.levels[0]:
            ax.loglog(dofs, [r["energy_error"] for r in rep.levels], "s--",
                      label=f"energy error ({mode})")
    ax.set_xlabel("degrees of freedom")
    ax.set_ylabel("estimator / error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    p = os.path.join(out_dir, "convergence.png")
    fig.savefig(p, dpi=150)
    plt.close(fig)
    files.append(p)

    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    for mode, rep in reports.items():
        lv = [r["level"] for r in rep.levels]
        ax.semilogy(lv, [r["eta_max"] for r in rep.levels], "-",
                    label=f"max ({mode})")
        ax.semilogy(lv, [r["eta_median"] for r in rep.levels], "--",
                    label=f"median ({mode})")
        ax.semilogy(lv, [r["eta_min"] for r in rep.levels], ":",
                    label=f"min ({mode})")
    ax.set_xlabel("refinement level")
    ax.set_ylabel("elementwise estimator")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    p = os.path.join(out_dir, "distribution.png")
    fig.savefig(p, dpi=150)
    plt.close(fig)
    files.append(p)

    for mode, rep in reports.items():
        mesh = rep.meshes[-1]
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.triplot(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles,
                   lw=0.4, color="k")
        ax.set_aspect("equal")
        ax.set_title(f"final mesh ({mode}), {mesh.num_triangles} elements",
                     fontsize=9)
        fig.tight_layout()
        p = os.path.join(out_dir, f"mesh_{mode}.png")
        fig.savefig(p, dpi=150)
        plt.close(fig)
        files.append(p)
    return files


def run_campaign(cfg, out_dir, modes=("adaptive", "uniform"),
                 with_reference=True, with_figures=True, quiet=False):
    """Execute refinement campaigns and write all declared outputs.

    Returns the manifest dict; all listed files exist and are non-empty.
    """
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(cfg)
    files = []

    cfg_path = os.path.join(out_dir, "config.json")
    save_config(cfg, cfg_path)
    files.append(cfg_path)

    make_problem = problem_factory(cfg)
    reference = None
    if with_reference:
        if not quiet:
            print("solving reference problem ...", flush=True)
        reference = solve_reference(make_problem, reference_mesh(cfg), None)

    ncfg = newton_config(cfg)
    reports = {}
    for mode in modes:
        if not quiet:
            print(f"{mode} campaign:", flush=True)

        def progress(row):
            if quiet:
                return
            msg = (f"  level {row['level']:2d}  elements {row['elements']:6d}"
                   f"  newton {row['newton_iterations']}"
                   f"  eta_tot {row['eta_tot']:.3e}")
            if "energy_error" in row:
                msg += f"  err {row['energy_error']:.3e}"
            print(msg, flush=True)

        rep = adaptive_solve(make_problem, initial_mesh(cfg),
                             adaptive_config(cfg, mode), ncfg,
                             reference=reference, progress=progress)
        reports[mode] = rep

        header, rows = _report_rows(rep)
        p = os.path.join(out_dir, f"report_{mode}.csv")
        write_csv(p, header, rows, chash)
        files.append(p)

        header, rows = _distribution_rows(rep)
        p = os.path.join(out_dir, f"distribution_{mode}.csv")
        write_csv(p, header, rows, chash)
        files.append(p)

        header, rows = _trace_rows(rep, ncfg.gamma_lin)
        if rows:
            p = os.path.join(out_dir, f"newton_trace_{mode}.csv")
            write_csv(p, header, rows, chash)
            files.append(p)

        header, rows = _element_rows(rep.tables[-1])
        p = os.path.join(out_dir, f"elements_{mode}.csv")
        write_csv(p, header, rows, chash)
        files.append(p)

        for level, mesh in enumerate(rep.meshes):
            p = os.path.join(out_dir, f"mesh_{mode}_level{level}.txt")
            write_mesh(mesh, p)
            files.append(p)

        mesh_file = f"mesh_{mode}_level{len(rep.meshes) - 1}.txt"
        files += _dump_solution(out_dir, mode, mesh_file, rep.solutions[-1],
                                cfg.get("degree", 1), chash)

        if with_reference and len(rep.levels) >= 2:
            dofs = [r["dofs"] for r in rep.levels]
            errs = [r["energy_error"] for r in rep.levels]
            rate = fitted_rate(dofs, errs)
            if not quiet:
                print(f"  fitted energy rate: {rate:.3f}", flush=True)

    if with_figures:
        files += _render_figures(out_dir, reports)

    manifest = {"config_hash": chash, "files": [os.path.basename(f)
                                                for f in files]}
    mpath = os.path.join(out_dir, "manifest.json")
    with open(mpath, "w") as f:
        json.dump(manifest, f, indent=1)

    for f in files:
        if not (os.path.exists(f) and os.path.getsize(f) > 0):
            raise RuntimeError(f"declared output missing or empty: {f}")
    return manifest


# ----------------------------------------------------------------------
# Subcommands

def _load_cfg(args):
    if getattr(args, "builtin", None):
        cfg = builtin_config(args.builtin)
    elif getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        raise SystemExit("error: provide a config file or --builtin NAME")
    validate_config(cfg)
    return cfg


def _output_dir(cfg, args):
    env = os.environ.get(ENV_OUTPUT_DIR)
    if env:
        return env
    if getattr(args, "output_dir", None):
        return args.output_dir
    return cfg.get("output_dir", "out")


def cmd_run(args):
    cfg = _load_cfg(args)
    modes = ("adaptive", "uniform") if args.mode == "both" else (args.mode,)
    out_dir = _output_dir(cfg, args)
    run_campaign(cfg, out_dir, modes=modes,
                 with_reference=not args.skip_reference,
                 with_figures=not args.no_figures, quiet=args.quiet)
    if not args.quiet:
        print(f"outputs written to {out_dir}")
    return 0


def cmd_verify(args):
    cfg = _load_cfg(args)
    make_problem = problem_factory(cfg)
    ncfg = newton_config(cfg)
    mesh = initial_mesh(cfg)
    failures = 0
    for level in (0, 1):
        problem = make_problem(mesh, degree=1)
        faces = ContactFaces(problem.space, problem.material, problem.nitsche)
        from .estimators import Estimators
        est = Estimators(problem, faces)
        res = newton_solve(problem, ncfg, estimator=est)
        checks = lemma_properties(problem, faces, res.u, res.u_prev,
                                  fault=args.fault if level == 0 else None)
        checks += rewrite_identities(problem, faces, res.u, res.u_prev)
        checks.append(tangent_check(problem))
        print(f"level {level}:")
        for c in checks:
            print(f"  {c}")
            failures += not c.passed
        mesh = mesh.refine(uniform=True)
    print(f"{failures} failing properties" if failures else "all properties pass")
    return 0


def cmd_mesh_info(args):
    mesh = read_mesh(args.mesh)
    a = mesh.vertices[mesh.triangles[:, 1]] - mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 2]] - mesh.vertices[mesh.triangles[:, 0]]
    areas = 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    d = mesh.diameters()
    print(f"vertices   {mesh.num_vertices}")
    print(f"triangles  {mesh.num_triangles}")
    print(f"edges      {mesh.num_edges}")
    print(f"area       {areas.sum():.12g}")
    print(f"h min/max  {d.min():.6g} / {d.max():.6g}")
    labels = {}
    for e, lab in mesh.boundary_label_dict().items():
        labels[lab] = labels.get(lab, 0) + 1
    for lab in sorted(labels):
        print(f"boundary {lab:3s} {labels[lab]} edges")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fricfem",
        description="Adaptive FEM for frictional contact with Nitsche terms "
                    "and equilibrated-stress error estimators.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run refinement campaigns")
    p_run.add_argument("config", nargs="?", help="config file (JSON)")
    p_run.add_argument("--builtin", choices=BUILTIN_NAMES,
                       help="use a builtin benchmark configuration")
    p_run.add_argument("--mode", choices=("adaptive", "uniform", "both"),
                       default="both")
    p_run.add_argument("--output-dir", help="override config output directory")
    p_run.add_argument("--skip-reference", action="store_true",
                       help="skip the fine reference solve (no error columns)")
    p_run.add_argument("--no-figures", action="store_true")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run the property suite")
    p_ver.add_argument("config", nargs="?", help="config file (JSON)")
    p_ver.add_argument("--builtin", choices=BUILTIN_NAMES)
    p_ver.add_argument("--fault", choices=("equilibrium",),
                       help="inject a fault to confirm the suite detects it")
    p_ver.set_defaults(func=cmd_verify)

    p_mesh = sub.add_parser("mesh-info", help="print mesh statistics")
    p_mesh.add_argument("mesh", help="mesh file")
    p_mesh.set_defaults(func=cmd_mesh_info)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
