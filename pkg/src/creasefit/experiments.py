"""Experiment harness: assembly, convergence sweeps, tables, and SVG plots.

Order exponents are always least-squares slopes on log-log data over at
least three resolutions; two-point ratios are too noisy to report.
"""

import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import scipy

from .correction import CorrectionContext
from .errors import ConfigError
from .levelcurve import singularity_study
from .mls import MlsConfig, QuasiInterpolant, truncated_gaussian, wendland_c2
from .partition import PartitionConfig, partition_pipeline
from .pointset import estimate_fill_distance, estimate_upsilon
from .testcases import (RNG_ALGORITHM, case_names, get_case, probe_mesh,
                        scaled_case_cloud)

_WEIGHT_KEYS = {"kind", "rho", "shape"}


def _weight_from_spec(spec, default):
    if spec is None:
        return default
    unknown = set(spec) - _WEIGHT_KEYS
    if unknown:
        raise ConfigError(f"unknown weight keys {sorted(unknown)}")
    kind = spec.get("kind", default.kind)
    if kind == "wendland_c2":
        return wendland_c2(spec.get("rho", default.rho))
    if kind == "truncated_gaussian":
        return truncated_gaussian(shape=spec.get("shape", 40.0),
                                  rho=spec.get("rho", 20.0))
    raise ConfigError(f"unknown weight kind {kind!r}")


@dataclass
class RunSettings:
    """Everything needed to assemble the full pipeline on one cloud."""

    degree: int = 4
    q_weight: object = field(default_factory=truncated_gaussian)
    detect_rho: float = 4.0
    label_rho: float = 10.0
    merge_rho: float = 14.0
    refine_rho: float = 8.0
    method: str = "error_analysis"
    rank_tol: float = 1e-8

    def partition_config(self, h):
        return PartitionConfig(
            degree=self.degree, h=h,
            detect_weight=wendland_c2(self.detect_rho),
            label_weight=wendland_c2(self.label_rho),
            merge_weight=wendland_c2(self.merge_rho),
            refine_weight=wendland_c2(self.refine_rho),
            rank_tol=self.rank_tol)


def assemble(cloud, f_values, settings, h=None, upsilon=None):
    """Estimate h and the uni-solvency radius, partition, and build the
    correction context."""
    if h is None:
        h = estimate_fill_distance(cloud).h
    if upsilon is None:
        upsilon = estimate_upsilon(cloud, settings.degree, h=h)
    qi = QuasiInterpolant(cloud, MlsConfig(degree=settings.degree,
                                           weight=settings.q_weight, h=h,
                                           rank_tol=settings.rank_tol))
    result = partition_pipeline(cloud, f_values, settings.partition_config(h))
    ctx = CorrectionContext(cloud, f_values, result.partition, qi,
                            method=settings.method, upsilon=upsilon,
                            rank_tol=settings.rank_tol)
    return ctx, result


def field_errors(ctx, case, probes, methods=("error_analysis", "partitioned_mls")):
    """Per-probe true values, plain errors, and corrected errors per method."""
    truth = case.f(probes)
    out = {"f_true": truth}
    base = ctx.evaluate_field(probes, method=methods[0])
    out["qf"] = np.array([v.q_value for v in base])
    out["in_g"] = np.array([v.in_g for v in base])
    out["e_plain"] = truth - out["qf"]
    out[f"e_{methods[0]}"] = truth - np.array([v.corrected for v in base])
    out[f"corrected_{methods[0]}"] = np.array([v.corrected for v in base])
    for m in methods[1:]:
        vals = ctx.evaluate_field(probes, method=m)
        out[f"corrected_{m}"] = np.array([v.corrected for v in vals])
        out[f"e_{m}"] = truth - out[f"corrected_{m}"]
    return out


def fitted_slope(hs, errs):
    """Least-squares slope of log err against log h; None below 3 points."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    ok = (errs > 0) & np.isfinite(errs)
    if ok.sum() < 3:
        return None
    return float(np.polyfit(np.log(hs[ok]), np.log(errs[ok]), 1)[0])


@dataclass
class ConvergenceTable:
    columns: list
    rows: list            # dicts keyed by column
    slopes: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                cells = []
                for c in self.columns:
                    v = row.get(c, "")
                    if isinstance(v, float):
                        cells.append(f"{v:.17g}")
                    else:
                        cells.append(str(v))
                fh.write(",".join(cells) + "\n")


def _sweep_cell(case, settings, count, seed, scale, mesh_n, mesh_shrink):
    cloud = scaled_case_cloud(case, count, seed, scale)
    t0 = time.perf_counter()
    ctx, _ = assemble(cloud, cloud.values, settings)
    probes = probe_mesh(cloud.bbox, per_axis=mesh_n, shrink=mesh_shrink)
    errs = field_errors(ctx, case, probes)
    cell = {
        "h": ctx.h,
        "max_e": float(np.nanmax(np.abs(errs["e_plain"]))),
        "max_e1": float(np.nanmax(np.abs(errs["e_error_analysis"]))),
        "max_e2": float(np.nanmax(np.abs(errs["e_partitioned_mls"]))),
        "runtime": time.perf_counter() - t0,
        "conjecture_violations": len(ctx.conjecture_events),
        "min_sigma": ctx.min_sigma if np.isfinite(ctx.min_sigma) else "",
        "upsilon": ctx.upsilon,
        "r_measured": ctx.r_measured,
    }
    return cell, ctx, errs, probes


_TABLE_COLUMNS = ["case", "M", "scale", "h", "max_e", "max_e1", "max_e2",
                  "slope_e", "slope_e1", "slope_e2", "d_h_1", "d_h_2", "runtime",
                  "conjecture_violations"]


def run_m_sweep(cfg):
    """Max errors and fitted order exponents for each polynomial degree."""
    case = get_case(cfg["case"])
    rows = []
    slopes = {}
    for m in cfg["m_list"]:
        settings = build_settings(cfg, degree=m)
        per_h = []
        for scale in cfg["scales"]:
            try:
                cell, ctx, _, _ = _sweep_cell(case, settings, cfg["count"], cfg["seed"],
                                              scale, cfg["mesh_n"], cfg["mesh_shrink"])
                cell.update({"case": case.name, "M": m, "scale": scale})
            except Exception as exc:  # record the failure, keep the table
                cell = {"case": case.name, "M": m, "scale": scale,
                        "error": f"{type(exc).__name__}: {exc}"}
            rows.append(cell)
            per_h.append(cell)
        good = [c for c in per_h if "max_e" in c]
        hs = [c["h"] for c in good]
        slopes[m] = {
            "slope_e": fitted_slope(hs, [c["max_e"] for c in good]),
            "slope_e1": fitted_slope(hs, [c["max_e1"] for c in good]),
            "slope_e2": fitted_slope(hs, [c["max_e2"] for c in good]),
        }
        for c in good:
            c.update(slopes[m])
    return ConvergenceTable(columns=_TABLE_COLUMNS, rows=rows, slopes=slopes)


def run_h_sweep(cfg):
    """Errors and crease-recovery distances over the resolution ladder."""
    case = get_case(cfg["case"])
    m = cfg["m_list"][0]
    settings = build_settings(cfg, degree=m)
    rows = []
    contexts = {}

    def factory(scale):
        if scale not in contexts:
            cloud = scaled_case_cloud(case, cfg["count"], cfg["seed"], scale)
            contexts[scale], _ = assemble(cloud, cloud.values, settings)
        return contexts[scale]

    for scale in cfg["scales"]:
        try:
            cell, ctx, _, _ = _sweep_cell(case, settings, cfg["count"], cfg["seed"],
                                          scale, cfg["mesh_n"], cfg["mesh_shrink"])
            contexts[scale] = ctx
            cell.update({"case": case.name, "M": m, "scale": scale})
        except Exception as exc:
            cell = {"case": case.name, "M": m, "scale": scale,
                    "error": f"{type(exc).__name__}: {exc}"}
        rows.append(cell)
    if cfg.get("curves", True):
        study = singularity_study(factory, case.r, cfg["scales"],
                                  grid_spacing=cfg["curve_grid_spacing"],
                                  sample_density=cfg["curve_sample_density"])
        for row, (srow, _) in zip(rows, study):
            row["d_h_1"] = srow.get("d_h_error_analysis")
            row["d_h_2"] = srow.get("d_h_partitioned_mls")
    good = [c for c in rows if "max_e" in c]
    hs = [c["h"] for c in good]
    slopes = {
        "slope_e": fitted_slope(hs, [c["max_e"] for c in good]),
        "slope_e1": fitted_slope(hs, [c["max_e1"] for c in good]),
        "slope_e2": fitted_slope(hs, [c["max_e2"] for c in good]),
        "slope_dh_1": fitted_slope(hs, [c.get("d_h_1", np.nan) for c in good]),
        "slope_dh_2": fitted_slope(hs, [c.get("d_h_2", np.nan) for c in good]),
    }
    for c in good:
        c.update({k: v for k, v in slopes.items() if not k.startswith("slope_dh")})
    return ConvergenceTable(columns=_TABLE_COLUMNS, rows=rows, slopes=slopes)


# -- configuration ------------------------------------------------------------

_CONFIG_KEYS = {
    "case", "m_list", "scales", "count", "seed", "mesh_n", "mesh_shrink",
    "q_weight", "detect_rho", "label_rho", "merge_rho", "refine_rho",
    "method", "rank_tol", "curves", "curve_grid_spacing", "curve_sample_density",
    "mode", "probes_csv", "sites_csv",
}

_DEFAULTS = {
    "m_list": [4],
    "scales": [1.0],
    "count": 41 * 41,
    "seed": 1,
    "mesh_n": 81,
    "mesh_shrink": 0.9,
    "q_weight": None,
    "detect_rho": 4.0,
    "label_rho": 10.0,
    "merge_rho": 14.0,
    "refine_rho": 8.0,
    "method": "error_analysis",
    "rank_tol": 1e-8,
    "curves": True,
    "curve_grid_spacing": 0.01,
    "curve_sample_density": 0.002,
}


def load_config(path=None, text=None, overrides=None):
    """Strict config loading: unknown keys are rejected, defaults recorded."""
    raw = {}
    if path is not None:
        with open(path) as fh:
            raw = json.load(fh)
    elif text is not None:
        raw = json.loads(text)
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    cfg = dict(_DEFAULTS)
    cfg.update(raw)
    if overrides:
        cfg.update({k: v for k, v in overrides.items() if v is not None})
    if "case" in cfg and cfg["case"] not in case_names():
        raise ConfigError(f"unknown case {cfg['case']!r}; "
                          f"choose from {case_names()}")
    if cfg["method"] not in ("error_analysis", "partitioned_mls"):
        raise ConfigError(f"unknown method {cfg['method']!r}")
    return cfg


def build_settings(cfg, degree=None):
    return RunSettings(
        degree=cfg["m_list"][0] if degree is None else degree,
        q_weight=_weight_from_spec(cfg.get("q_weight"), truncated_gaussian()),
        detect_rho=cfg["detect_rho"], label_rho=cfg["label_rho"],
        merge_rho=cfg["merge_rho"], refine_rho=cfg["refine_rho"],
        method=cfg["method"], rank_tol=cfg["rank_tol"])


def write_meta(path, cfg, extra=None):
    meta = {
        "config": {k: v for k, v in cfg.items()},
        "rng_algorithm": RNG_ALGORITHM,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# -- SVG rendering -------------------------------------------------------------

_VIRIDIS = [(0.267, 0.005, 0.329), (0.283, 0.141, 0.458), (0.254, 0.265, 0.530),
            (0.207, 0.372, 0.553), (0.164, 0.471, 0.558), (0.128, 0.567, 0.551),
            (0.135, 0.659, 0.518), (0.267, 0.749, 0.441), (0.478, 0.821, 0.318),
            (0.741, 0.873, 0.150), (0.993, 0.906, 0.144)]


def _color(v):
    v = min(max(v, 0.0), 1.0) * (len(_VIRIDIS) - 1)
    i = min(int(v), len(_VIRIDIS) - 2)
    t = v - i
    c = [(1 - t) * a + t * b for a, b in zip(_VIRIDIS[i], _VIRIDIS[i + 1])]
    return "#%02x%02x%02x" % tuple(int(round(255 * x)) for x in c)


def render_error_surface(probes, panels, out_path, cell_px=4, floor=1e-16):
    """Three-panel log10 |error| heatmap with one shared color scale.

    ``panels`` is an ordered dict name -> error array on the common probe
    mesh (must be a full grid).  Values are pure views of the data arrays;
    the color range is global so the panels are comparable.
    """
    probes = np.asarray(probes)
    xs = np.unique(probes[:, 0])
    ys = np.unique(probes[:, 1])
    nx, ny = len(xs), len(ys)
    if nx * ny != len(probes):
        raise ConfigError("error-surface rendering needs a full probe grid")
    logs = {k: np.log10(np.maximum(np.abs(np.asarray(v)), floor)) for k, v in panels.items()}
    lo = min(v.min() for v in logs.values())
    hi = max(v.max() for v in logs.values())
    span = max(hi - lo, 1e-12)
    pad = 20
    panel_w = nx * cell_px
    panel_h = ny * cell_px
    width = len(panels) * (panel_w + pad) + pad
    height = panel_h + 2 * pad + 14
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
             f'width="{width}" height="{height}">']
    for p, (name, vals) in enumerate(logs.items()):
        x0 = pad + p * (panel_w + pad)
        grid = vals.reshape(nx, ny)
        for i in range(nx):
            for j in range(ny):
                c = _color((grid[i, j] - lo) / span)
                parts.append(
                    f'<rect x="{x0 + i * cell_px}" y="{pad + (ny - 1 - j) * cell_px}" '
                    f'width="{cell_px}" height="{cell_px}" fill="{c}"/>')
        parts.append(f'<text x="{x0}" y="{pad + panel_h + 12}" '
                     f'font-size="11">{name} in [{lo:.2f}, {hi:.2f}] (log10)</text>')
    parts.append("</svg>")
    with open(out_path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def render_curves(curve_sets, bbox, out_path, size=480):
    """Overlay of the true curve (solid red) and the two model curves
    (dashed blue, dotted green)."""
    bbox = np.asarray(bbox, dtype=float)
    span = float(max(bbox[1] - bbox[0]))
    scale = (size - 40) / span

    def to_px(p):
        return (20 + (p[0] - bbox[0, 0]) * scale,
                size - 20 - (p[1] - bbox[0, 1]) * scale)

    styles = {
        "r_true": 'stroke="red" fill="none"',
        "error_analysis": 'stroke="blue" fill="none" stroke-dasharray="6,4"',
        "partitioned_mls": 'stroke="green" fill="none" stroke-dasharray="1,3"',
    }
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
             f'width="{size}" height="{size}">']
    for name, curve in curve_sets.items():
        style = styles.get(name, 'stroke="black" fill="none"')
        for poly in curve.polylines:
            pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in (to_px(p) for p in poly))
            parts.append(f'<polyline points="{pts}" {style}/>')
    parts.append("</svg>")
    with open(out_path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
