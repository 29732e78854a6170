"""End-to-end experiment orchestration and file emission."""

from __future__ import annotations

import os
import time

import numpy as np

from . import ltfio
from .algebraic import (NoiseModel, apply_noise, lsqr, relative_error,
                        scan_linear_map)
from .config import (build_apertures, build_grid, build_medium,
                     build_phantom_spec, derive_seed)
from .diffusion import (BoundaryField, assemble_operator, boundary_flux,
                        boundary_functional, solve_adjoint_weight,
                        solve_forward, V_FLOOR_FRACTION)
from .errors import ConfigError, StabilityViolationError
from .excitation import (ConeScanData, ScalarField, _source_field,
                         simulate_boundary_scan, xray_transform)
from .fbp import FbpFilter, divide_by_weight, fbp
from .fields import build_phantom
from .multiplier import ellipticity_margin, invert_multiplier


def _write_report(path, report):
    with open(path, "w") as fh:
        for key in sorted(report):
            fh.write(f"{key} = {report[key]}\n")


def _slice_csv(path, field):
    """CSV of the mid-row slice along the first axis (the z=0 analog)."""
    mid = field.grid.cells[-1] // 2
    coords = field.grid.axis_centers(0)
    vals = field.values[(slice(None),) + (mid,) * (field.grid.dim - 1)]
    with open(path, "w") as fh:
        fh.write("coordinate,value\n")
        for c, v in zip(coords, vals):
            fh.write(f"{c:.17g},{v:.17g}\n")


def emit_outputs(outdir, fields, report, sinogram=None, scan=None,
                 history=None):
    """Write LTFIELD files, CSV slices, PGM renders and the run report.

    `fields` maps names to ScalarFields; colormap bounds of every PGM are
    recorded in the report.
    """
    os.makedirs(outdir, exist_ok=True)
    for name, fld in fields.items():
        ltfio.write_field(os.path.join(outdir, f"{name}.ltf"), fld)
        if fld.grid.dim == 2:
            vmin, vmax = ltfio.write_pgm(os.path.join(outdir, f"{name}.pgm"), fld)
            report[f"render.{name}.vmin"] = f"{vmin:.17g}"
            report[f"render.{name}.vmax"] = f"{vmax:.17g}"
        _slice_csv(os.path.join(outdir, f"{name}_slice.csv"), fld)
    if sinogram is not None:
        ltfio.write_sinogram(os.path.join(outdir, "sinogram.ltf"), sinogram)
    if scan is not None:
        ltfio.write_scan(os.path.join(outdir, "scan_manifest.txt"),
                         os.path.join(outdir, "scan"), scan)
    if history is not None:
        with open(os.path.join(outdir, "lsqr_history.csv"), "w") as fh:
            fh.write("iteration,residual,normal_residual\n")
            for it, res, nres in history:
                fh.write(f"{int(it)},{res:.17g},{nres:.17g}\n")
    _write_report(os.path.join(outdir, "report.txt"), report)


def _base_setup(cfg):
    grid = build_grid(cfg)
    medium = build_medium(cfg)
    truth = build_phantom(build_phantom_spec(cfg, grid.dim), grid)
    op = assemble_operator(grid, medium)
    h = BoundaryField.constant(grid, float(cfg["boundary.h"]))
    v = solve_adjoint_weight(op, h)
    return grid, medium, truth, op, h, v


def _echo_config(report, cfg):
    for key, val in cfg.items():
        report[f"config.{key}"] = val


def _noise_stage(cfg, scan, report):
    if cfg["noise.kind"] == "none":
        report["noise.applied"] = "false"
        return scan
    if cfg["noise.kind"] != "poisson":
        raise ConfigError(f"unknown noise kind {cfg['noise.kind']!r}")
    kappa = float(cfg["noise.photons"])
    base = int(cfg["run.seed"])
    noisy = []
    for j, fld in enumerate(scan.fields):
        model = NoiseModel(photons_per_unit=kappa,
                           seed=derive_seed(base, f"noise.cone{j}"))
        clean = np.maximum(fld.values, 0.0)  # clip FFT roundoff negatives
        noisy.append(ScalarField(fld.grid, apply_noise(model, clean)))
    report["noise.applied"] = "true"
    report["noise.photons"] = f"{kappa:g}"
    return ConeScanData(scan.focus_grid, noisy, scan.apertures)


def _spot_check(cfg, op, h, truth, apertures, grid, report):
    """Full-physics verification of the fast path on a small focus subgrid."""
    n_checks = max(int(cfg["run.spot_checks"]), 1)
    side = max(int(np.ceil(np.sqrt(n_checks))), 2)
    idx = [np.linspace(n // 4, 3 * n // 4, side, dtype=int) for n in grid.cells[:2]]
    v = solve_adjoint_weight(op, h)
    from .excitation import cone_transform
    ap = apertures[0]
    fast = cone_transform(truth, v, ap)
    worst = 0.0
    scale = float(np.max(np.abs(fast.values))) or 1.0
    centers = grid.centers()
    mid = tuple(n // 2 for n in grid.cells[2:])
    count = 0
    for i in idx[0]:
        for j in idx[1]:
            if count >= n_checks and count >= 9:
                break
            x = centers[(i, j) + mid]
            s = _source_field(ap, grid, x, truth)
            u = solve_forward(op, s)
            Q = boundary_flux(op, u, mode="consistent")
            full = boundary_functional(h, Q)
            fast_val = fast.values[(i, j) + mid]
            worst = max(worst, abs(full - fast_val) / scale)
            count += 1
    report["spot_check.points"] = str(count)
    report["spot_check.max_relative_mismatch"] = f"{worst:.6e}"
    return worst


def run_xmlt(cfg, outdir=None):
    """Full cone-excitation (XMLT) experiment: simulate, invert, report."""
    t0 = time.perf_counter()
    report = {}
    _echo_config(report, cfg)
    grid, medium, truth, op, h, v = _base_setup(cfg)
    apertures = build_apertures(cfg, grid.dim)
    margin = ellipticity_margin(apertures)
    report["stability.margin"] = f"{margin.margin:.6e}"
    report["stability.max_min_ratio"] = f"{margin.ratio:.6e}"
    force = cfg["run.force_pseudo"].lower() in ("true", "1", "yes")
    if margin.margin <= 0 and not force:
        raise StabilityViolationError(
            f"ellipticity margin {margin.margin:g} <= 0; "
            "set run.force_pseudo=true to force a pseudo-inversion")
    scan = simulate_boundary_scan(op, h, truth, apertures, weight=v, mode="fast")
    report["scan.mode"] = "fast"
    report["scan.focus_grid"] = "field grid (ROI pitch not separately configured)"
    _spot_check(cfg, op, h, truth, apertures, grid, report)
    noisy = _noise_stage(cfg, scan, report)

    fields = {"truth": truth, "weight": v}
    history = None
    method = cfg["recon.method"]
    if method not in ("multiplier", "lsqr", "both"):
        raise ConfigError(f"recon.method must be multiplier|lsqr|both, got {method!r}")
    eps_bg = float(cfg["error.eps_bg"])
    if method in ("multiplier", "both"):
        rec = invert_multiplier(noisy, apertures, v, eps=float(cfg["recon.eps"]),
                                check_margin=not force)
        fields["recon_multiplier"] = rec
        signed, absolute = relative_error(truth, rec, eps_bg)
        report["error.multiplier.signed"] = f"{signed:.6f}"
        report["error.multiplier.absolute"] = f"{absolute:.6f}"
    if method in ("lsqr", "both"):
        linmap = scan_linear_map(apertures, v)
        data = np.concatenate([f.values.ravel() for f in noisy.fields])
        x, history = lsqr(linmap, data,
                          max_iters=int(cfg["recon.lsqr_iters"]),
                          atol=float(cfg["recon.lsqr_atol"]))
        if cfg["recon.nonneg"].lower() in ("true", "1", "yes"):
            x = np.maximum(x, 0.0)
        rec = ScalarField(grid, x.reshape(grid.cells))
        fields["recon_lsqr"] = rec
        report["lsqr.iterations"] = str(int(history[-1][0]))
        signed, absolute = relative_error(truth, rec, eps_bg)
        report["error.lsqr.signed"] = f"{signed:.6f}"
        report["error.lsqr.absolute"] = f"{absolute:.6f}"
    report["wall_clock_seconds"] = f"{time.perf_counter() - t0:.3f}"
    outdir = outdir or cfg["run.output_dir"]
    emit_outputs(outdir, fields, report, scan=noisy, history=history)
    return report


def run_xlct(cfg, outdir=None):
    """Full line-excitation (XLCT) experiment: sinogram, FBP, divide by weight."""
    t0 = time.perf_counter()
    report = {}
    _echo_config(report, cfg)
    grid, medium, truth, op, h, v = _base_setup(cfg)
    if grid.dim != 2:
        raise ConfigError("run_xlct requires a 2D grid")
    n_angles = int(cfg["xray.n_angles"])
    n_offsets = int(cfg["xray.n_offsets"])
    angles = np.arange(n_angles) * (np.pi / n_angles)
    half_diag = 0.5 * np.sqrt(sum(e ** 2 for e in grid.extent))
    offsets = np.linspace(-half_diag, half_diag, n_offsets)
    vf = ScalarField(grid, v.values * truth.values)
    sino = xray_transform(vf, angles, offsets)
    if cfg["noise.kind"] == "poisson":
        model = NoiseModel(photons_per_unit=float(cfg["noise.photons"]),
                           seed=derive_seed(int(cfg["run.seed"]), "noise.sinogram"))
        from .excitation import Sinogram
        sino = Sinogram(angles, offsets,
                        apply_noise(model, np.maximum(sino.values, 0.0)))
        report["noise.applied"] = "true"
    elif cfg["noise.kind"] == "none":
        report["noise.applied"] = "false"
    else:
        raise ConfigError(f"unknown noise kind {cfg['noise.kind']!r}")
    filt = FbpFilter(kind=cfg["recon.filter"], cutoff=float(cfg["recon.cutoff"]))
    g = fbp(sino, grid, filt)
    v_floor = V_FLOOR_FRACTION * float(np.max(v.values))
    rec = divide_by_weight(g, v, v_floor)
    report["weight.max_inverse"] = f"{1.0 / max(float(np.min(v.values)), v_floor):.6e}"
    signed, absolute = relative_error(truth, rec, float(cfg["error.eps_bg"]))
    report["error.fbp.signed"] = f"{signed:.6f}"
    report["error.fbp.absolute"] = f"{absolute:.6f}"
    report["wall_clock_seconds"] = f"{time.perf_counter() - t0:.3f}"
    outdir = outdir or cfg["run.output_dir"]
    emit_outputs(outdir, {"truth": truth, "weight": v, "recon_fbp": rec},
                 report, sinogram=sino)
    return report


def check_stability(cfg):
    """Report the ellipticity margin and invisible directions of the cone set."""
    dim = int(cfg["grid.dim"])
    apertures = build_apertures(cfg, dim)
    rep = ellipticity_margin(apertures)
    report = {
        "stability.margin": f"{rep.margin:.6e}",
        "stability.max_factor": f"{rep.max_factor:.6e}",
        "stability.max_min_ratio": f"{rep.ratio:.6e}",
        "stability.worst_direction": ",".join(f"{x:.6f}" for x in rep.worst_direction),
        "stability.invisible_count": str(len(rep.invisible_directions)),
    }
    for i, d in enumerate(rep.invisible_directions[:10]):
        report[f"stability.invisible.{i}"] = ",".join(f"{x:.6f}" for x in d)
    return report
