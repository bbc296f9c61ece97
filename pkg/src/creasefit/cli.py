"""Command-line harness.

Subcommands: partition | approximate | convergence | curve | selftest.
Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
Every run writes meta.json (effective config plus measured diagnostics).
"""

import argparse
import json
import os
import sys

import numpy as np

from . import experiments
from .errors import ConfigError, CreasefitError
from .levelcurve import curve_to_rows, singularity_study
from .pointset import PointCloud
from .testcases import get_case, probe_mesh, sample_case

_EXIT_CONFIG = 2
_EXIT_NUMERIC = 3


def _load_cloud(args, cfg):
    if getattr(args, "sites", None):
        return PointCloud.load_csv(args.sites), None
    case = get_case(cfg["case"])
    cloud = sample_case(case, cfg["count"], seed=cfg["seed"])
    return cloud, case


def _out_dir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _meta_extra(ctx, result=None):
    extra = {
        "h": ctx.h,
        "upsilon": ctx.upsilon,
        "r_measured": ctx.r_measured,
        "ball_radius": ctx.ball_radius,
        "conjecture_violations": len(ctx.conjecture_events),
        "min_sigma": None if not np.isfinite(ctx.min_sigma) else ctx.min_sigma,
    }
    if result is not None:
        extra["merge_trace"] = [
            {"l1": s.l1, "l2": s.l2, "d": s.d_value, "fallback": s.fallback}
            for s in result.partition.merge_trace]
    return extra


def cmd_partition(args):
    cfg = experiments.load_config(args.config, overrides={"seed": args.seed})
    if "case" not in cfg and not args.sites:
        raise ConfigError("partition needs either --sites or a config with a case")
    out = _out_dir(args)
    cloud, _ = _load_cloud(args, cfg)
    settings = experiments.build_settings(cfg)
    ctx, result = experiments.assemble(cloud, cloud.values, settings)
    n = cloud.dim
    in_s = np.zeros(cloud.n_sites, dtype=int)
    in_s[result.band.indices] = 1
    side = np.where(result.partition.in_p, 1, 2)
    path = os.path.join(out, "partition.csv")
    header = [f"x{i + 1}" for i in range(n)] + ["f", "in_S", "component", "a", "side"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(cloud.n_sites):
            cells = [f"{v:.17g}" for v in cloud.sites[i]]
            cells.append(f"{cloud.values[i]:.17g}")
            cells += [str(in_s[i]), str(result.components.labels[i]),
                      str(result.labeling.labels[i]), str(side[i])]
            fh.write(",".join(cells) + "\n")
    with open(os.path.join(out, "merge_trace.json"), "w") as fh:
        json.dump([{"l1": s.l1, "l2": s.l2, "d": s.d_value, "fallback": s.fallback}
                   for s in result.partition.merge_trace], fh, indent=2)
        fh.write("\n")
    experiments.write_meta(os.path.join(out, "meta.json"), cfg, _meta_extra(ctx, result))
    print(f"wrote {path}")
    return 0


def cmd_approximate(args):
    cfg = experiments.load_config(args.config, overrides={"seed": args.seed})
    out = _out_dir(args)
    cloud, case = _load_cloud(args, cfg)
    if args.probes:
        probes = np.loadtxt(args.probes, delimiter=",", skiprows=1, ndmin=2)
    else:
        probes = probe_mesh(cloud.bbox, per_axis=cfg["mesh_n"],
                            shrink=cfg["mesh_shrink"])
    settings = experiments.build_settings(cfg)
    ctx, result = experiments.assemble(cloud, cloud.values, settings)
    vals = ctx.evaluate_field(probes, method=cfg["method"])
    n = cloud.dim
    path = os.path.join(out, "approximation.csv")
    header = [f"y{i + 1}" for i in range(n)]
    if case is not None:
        header.append("f_true")
        truth = case.f(probes)
    header += ["Qf", "corrected", "correction", "in_G", "r_hat", "sigma_min"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i, v in enumerate(vals):
            cells = [f"{c:.17g}" for c in probes[i]]
            if case is not None:
                cells.append(f"{truth[i]:.17g}")
            cells += [f"{v.q_value:.17g}", f"{v.corrected:.17g}",
                      f"{v.correction:.17g}", str(int(v.in_g)),
                      "" if v.r_hat is None else f"{v.r_hat:.17g}",
                      "" if v.sigma_min is None else f"{v.sigma_min:.17g}"]
            fh.write(",".join(cells) + "\n")
    experiments.write_meta(os.path.join(out, "meta.json"), cfg, _meta_extra(ctx, result))
    print(f"wrote {path}")
    return 0


def cmd_convergence(args):
    cfg = experiments.load_config(args.config, overrides={"seed": args.seed})
    if "case" not in cfg:
        raise ConfigError("convergence needs a config with a case")
    out = _out_dir(args)
    mode = cfg.get("mode", "h_sweep")
    if mode == "m_sweep":
        table = experiments.run_m_sweep(cfg)
    elif mode == "h_sweep":
        table = experiments.run_h_sweep(cfg)
    else:
        raise ConfigError(f"unknown sweep mode {mode!r}")
    csv_path = os.path.join(out, f"{mode}.csv")
    table.to_csv(csv_path)
    # per-probe error surfaces at the base scale, for the heatmap panels
    case = get_case(cfg["case"])
    settings = experiments.build_settings(cfg)
    cloud = experiments.scaled_case_cloud(case, cfg["count"], cfg["seed"],
                                          cfg["scales"][0])
    ctx, result = experiments.assemble(cloud, cloud.values, settings)
    probes = probe_mesh(cloud.bbox, per_axis=cfg["mesh_n"], shrink=cfg["mesh_shrink"])
    errs = experiments.field_errors(ctx, case, probes)
    per_probe = os.path.join(out, "error_surface.csv")
    with open(per_probe, "w") as fh:
        fh.write("y1,y2,e_plain,e_error_analysis,e_partitioned_mls\n")
        for i in range(len(probes)):
            fh.write(",".join(f"{v:.17g}" for v in (
                probes[i, 0], probes[i, 1], errs["e_plain"][i],
                errs["e_error_analysis"][i], errs["e_partitioned_mls"][i])) + "\n")
    experiments.render_error_surface(
        probes,
        {"E": errs["e_plain"], "E1": errs["e_error_analysis"],
         "E2": errs["e_partitioned_mls"]},
        os.path.join(out, "error_surface.svg"))
    experiments.write_meta(os.path.join(out, "meta.json"), cfg,
                           {**_meta_extra(ctx, result), "slopes": table.slopes})
    print(f"wrote {csv_path}")
    return 0


def cmd_curve(args):
    cfg = experiments.load_config(args.config, overrides={"seed": args.seed})
    if "case" not in cfg:
        raise ConfigError("curve needs a config with a case")
    out = _out_dir(args)
    case = get_case(cfg["case"])
    settings = experiments.build_settings(cfg)
    contexts = {}

    def factory(scale):
        if scale not in contexts:
            cloud = experiments.scaled_case_cloud(case, cfg["count"], cfg["seed"], scale)
            contexts[scale], _ = experiments.assemble(cloud, cloud.values, settings)
        return contexts[scale]

    rows = singularity_study(factory, case.r, cfg["scales"],
                             grid_spacing=cfg["curve_grid_spacing"],
                             sample_density=cfg["curve_sample_density"])
    table_path = os.path.join(out, "hausdorff.csv")
    with open(table_path, "w") as fh:
        fh.write("scale,h,grid_spacing,d_h_error_analysis,d_h_partitioned_mls\n")
        for row, _ in rows:
            fh.write(",".join(f"{row[k]:.17g}" for k in (
                "scale", "h", "grid_spacing", "d_h_error_analysis",
                "d_h_partitioned_mls")) + "\n")
    base_row, base_curves = rows[0]
    for name, curve in base_curves.items():
        path = os.path.join(out, f"curve_{name}.csv")
        with open(path, "w") as fh:
            fh.write("polyline_id,x,y\n")
            for pid, x, y in curve_to_rows(curve):
                fh.write(f"{pid},{x:.17g},{y:.17g}\n")
    ctx = contexts[cfg["scales"][0]]
    experiments.render_curves(base_curves, ctx.cloud.bbox,
                              os.path.join(out, "curves.svg"))
    experiments.write_meta(os.path.join(out, "meta.json"), cfg, _meta_extra(ctx))
    print(f"wrote {table_path}")
    return 0


def cmd_selftest(args):
    from .testcases import builtin_cases

    rng = np.random.default_rng(0)
    failures = []
    for case in builtin_cases():
        pts = rng.uniform(case.domain[0], case.domain[1], size=(100_000, 2))
        gap = case.f(pts) - case.g(pts) - np.maximum(case.r(pts), 0.0)
        if np.max(np.abs(gap)) > 1e-15 * max(1.0, np.max(np.abs(case.f(pts)))):
            failures.append(f"{case.name}: f != g + max(r, 0)")
        # central differences vs analytic gradients
        step = 1e-5
        sub = pts[:200]
        for fn, grad in ((case.g, case.grad_g), (case.r, case.grad_r)):
            for k in range(2):
                e = np.zeros(2)
                e[k] = step
                fd = (fn(sub + e) - fn(sub - e)) / (2 * step)
                if np.max(np.abs(fd - grad(sub)[:, k])) > 1e-5:
                    failures.append(f"{case.name}: gradient mismatch axis {k}")
                    break
    for msg in failures:
        print("FAIL", msg)
    if not failures:
        print(f"selftest ok: {len(builtin_cases())} cases verified")
    return 0 if not failures else _EXIT_NUMERIC


def build_parser():
    parser = argparse.ArgumentParser(
        prog="creasefit",
        description="Scattered-data approximation with crease correction")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("partition", cmd_partition), ("approximate", cmd_approximate),
                     ("convergence", cmd_convergence), ("curve", cmd_curve),
                     ("selftest", cmd_selftest)):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        if name in ("partition", "approximate"):
            p.add_argument("--sites", help="sites CSV (x1,...,xn,f)")
        if name == "approximate":
            p.add_argument("--probes", help="probes CSV")
        p.set_defaults(fn=fn)
    return parser


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return _EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except (CreasefitError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
