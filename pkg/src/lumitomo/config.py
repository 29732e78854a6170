"""Flat key = value run configuration.

The format is plain text, one `key = value` per line, with dotted section
prefixes (e.g. `medium.mu_a = 0.05`) and `#` comments.  Every key has a
default; the resolved configuration (defaults included) is echoed into the
run report so no silent default can hide.
"""

from __future__ import annotations

import zlib

import numpy as np

from .errors import ConfigError
from .fields import (OpticalMedium, PhantomSpec, derived_optics, make_grid,
                     robin_coefficient)
from .excitation import Aperture

DEFAULTS = {
    "grid.dim": "2",
    "grid.origin": "-10,-10",
    "grid.extent": "20,20",
    "grid.cells": "128,128",
    "medium.mu_a": "0.05",
    "medium.mu_s": "15.0",
    "medium.g": "0.9",
    "medium.refractive_index": "1.37",
    "medium.D": "",            # set to override the derived value
    "medium.A": "",            # set to override the refractive-index fit
    "phantom.background": "0.0",
    "phantom.inclusions": "2.5,2.5,1.0,5.0; 3.5,0.0,1.0,10.0",
    "boundary.h": "1.0",
    "cones.count": "10",
    "cones.start_deg": "0.0",
    "cones.half_angle_deg": "19.2",
    "cones.taper_frac": "0.15",
    "cones.amplitude": "1.0",
    "xray.n_angles": "180",
    "xray.n_offsets": "256",
    "noise.kind": "none",
    "noise.photons": "1e6",
    "recon.method": "multiplier",
    "recon.eps": "1e-3",
    "recon.filter": "ramp-hann",
    "recon.cutoff": "0.9",
    "recon.lsqr_iters": "200",
    "recon.lsqr_atol": "1e-8",
    "recon.nonneg": "true",
    "error.eps_bg": "0.5",
    "run.seed": "12345",
    "run.output_dir": "out",
    "run.spot_checks": "9",
    "run.force_pseudo": "false",
}


def parse_config_text(text):
    """Parse `key = value` lines into a dict (later keys win)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def load_config(path=None, overrides=None):
    """Resolve defaults, an optional config file, and --set overrides."""
    cfg = dict(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            cfg.update(parse_config_text(fh.read()))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, _, val = item.partition("=")
        cfg[key.strip()] = val.strip()
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _floats(text):
    return tuple(float(x) for x in text.split(","))


def _bool(text, key):
    val = text.strip().lower()
    if val in ("true", "1", "yes"):
        return True
    if val in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {text!r}")


def build_grid(cfg):
    try:
        return make_grid(int(cfg["grid.dim"]), _floats(cfg["grid.origin"]),
                         _floats(cfg["grid.extent"]),
                         tuple(int(x) for x in cfg["grid.cells"].split(",")))
    except ValueError as exc:
        raise ConfigError(f"bad grid spec: {exc}") from exc


def build_medium(cfg):
    try:
        mu_a = float(cfg["medium.mu_a"])
        if cfg["medium.D"]:
            D = float(cfg["medium.D"])
        else:
            _, D = derived_optics(mu_a, float(cfg["medium.mu_s"]),
                                  float(cfg["medium.g"]))
        if cfg["medium.A"]:
            A = float(cfg["medium.A"])
        else:
            A = robin_coefficient(float(cfg["medium.refractive_index"]))
        return OpticalMedium(mu_a=mu_a, D=D, A=A)
    except ValueError as exc:
        raise ConfigError(f"bad medium spec: {exc}") from exc


def build_phantom_spec(cfg, dim):
    text = cfg["phantom.inclusions"].strip()
    inclusions = []
    if text:
        for item in text.split(";"):
            vals = _floats(item)
            if len(vals) != dim + 2:
                raise ConfigError(
                    f"inclusion needs {dim + 2} numbers (center, radius, "
                    f"concentration), got {item.strip()!r}")
            inclusions.append((vals[:dim], vals[dim], vals[dim + 1]))
    return PhantomSpec(background=float(cfg["phantom.background"]),
                       inclusions=tuple(inclusions))


def build_apertures(cfg, dim):
    """Cone set with axes fanned in the xy-plane from start_deg."""
    count = int(cfg["cones.count"])
    if count < 1:
        raise ConfigError("cones.count must be >= 1")
    start = np.deg2rad(float(cfg["cones.start_deg"]))
    half = np.deg2rad(float(cfg["cones.half_angle_deg"]))
    taper = float(cfg["cones.taper_frac"]) * half
    amp = float(cfg["cones.amplitude"])
    apertures = []
    for j in range(count):
        ang = start + j * (2.0 * np.pi / count)
        axis = (np.cos(ang), np.sin(ang)) if dim == 2 else \
            (np.cos(ang), np.sin(ang), 0.0)
        apertures.append(Aperture(dim=dim, axis=axis, half_angle=half,
                                  taper_width=taper, amplitude=amp))
    return apertures


def derive_seed(base_seed, stream_name):
    """Deterministic per-stream seed: SeedSequence(base, crc32(name))."""
    tag = zlib.crc32(stream_name.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(tag,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
