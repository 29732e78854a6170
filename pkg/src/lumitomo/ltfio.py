"""LTFIELD container I/O.

Every file starts with one ASCII header line

    LTFIELD v1 dim=<d> cells=<n1,...> origin=<o1,...> extent=<e1,...>

followed by a newline and the row-major little-endian float64 payload.
Variants add header tokens:

  boundary=1   boundary-face values; enumeration order is axis 0 low side,
               axis 0 high side, axis 1 low side, ... with each side's faces
               in C order of the adjacent boundary cell.
  sinogram=1   line-integral table; the header carries explicit
               angles=<...> and offsets=<...> tables instead of a grid.

Floats in headers are written with repr-precision so that a read/write
round trip is bit-exact.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .fields import Grid, ScalarField, make_grid
from .diffusion import BoundaryField, boundary_face_count
from .excitation import Aperture, ConeScanData, Sinogram

_MAGIC = "LTFIELD v1"


def _fmt_floats(values):
    return ",".join(format(float(x), ".17g") for x in values)


def _parse_floats(text):
    return tuple(float(x) for x in text.split(","))


def _grid_tokens(grid: Grid):
    return (f"dim={grid.dim} cells={','.join(str(n) for n in grid.cells)} "
            f"origin={_fmt_floats(grid.origin)} extent={_fmt_floats(grid.extent)}")


def _parse_header(line):
    parts = line.strip().split()
    if parts[:2] != ["LTFIELD", "v1"]:
        raise InvalidArgumentError("not an LTFIELD v1 file")
    tokens = {}
    for p in parts[2:]:
        key, _, val = p.partition("=")
        tokens[key] = val
    return tokens


def _grid_from_tokens(tokens):
    dim = int(tokens["dim"])
    cells = tuple(int(x) for x in tokens["cells"].split(","))
    origin = _parse_floats(tokens["origin"])
    extent = _parse_floats(tokens["extent"])
    return make_grid(dim, origin, extent, cells)


def _write(path, header, payload):
    with open(path, "wb") as fh:
        fh.write((header + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def _read(path):
    with open(path, "rb") as fh:
        raw_header = fh.readline()
        raw = fh.read()
    try:
        header = raw_header.decode("ascii")
    except UnicodeDecodeError as err:
        raise InvalidArgumentError(f"{path} is not an LTFIELD file") from err
    tokens = _parse_header(header)
    if len(raw) % 8 != 0:
        raise InvalidArgumentError(f"{path} has a truncated payload")
    return tokens, np.frombuffer(raw, dtype="<f8")


def write_field(path, field: ScalarField):
    _write(path, f"{_MAGIC} {_grid_tokens(field.grid)}", field.values)


def read_field(path) -> ScalarField:
    tokens, payload = _read(path)
    if "boundary" in tokens or "sinogram" in tokens:
        raise InvalidArgumentError(f"{path} is not a plain field file")
    grid = _grid_from_tokens(tokens)
    return ScalarField(grid, payload.reshape(grid.cells))


def write_boundary_field(path, bf: BoundaryField):
    _write(path, f"{_MAGIC} boundary=1 {_grid_tokens(bf.grid)}", bf.values)


def read_boundary_field(path) -> BoundaryField:
    tokens, payload = _read(path)
    if tokens.get("boundary") != "1":
        raise InvalidArgumentError(f"{path} is not a boundary field file")
    grid = _grid_from_tokens(tokens)
    if payload.size != boundary_face_count(grid):
        raise InvalidArgumentError("boundary payload size mismatch")
    return BoundaryField(grid, payload)


def write_sinogram(path, sino: Sinogram):
    header = (f"{_MAGIC} sinogram=1 angles={_fmt_floats(sino.angles)} "
              f"offsets={_fmt_floats(sino.offsets)}")
    _write(path, header, sino.values)


def read_sinogram(path) -> Sinogram:
    tokens, payload = _read(path)
    if tokens.get("sinogram") != "1":
        raise InvalidArgumentError(f"{path} is not a sinogram file")
    angles = np.array(_parse_floats(tokens["angles"]))
    offsets = np.array(_parse_floats(tokens["offsets"]))
    return Sinogram(angles, offsets, payload.reshape(angles.size, offsets.size))


def write_scan(manifest_path, prefix, scan: ConeScanData):
    """Write one LTFIELD per cone plus a text manifest of the apertures."""
    lines = ["LTSCAN v1"]
    for j, (fld, ap) in enumerate(zip(scan.fields, scan.apertures)):
        fname = f"{prefix}_cone{j:02d}.ltf"
        write_field(fname, fld)
        lines.append(
            f"cone file={fname} axis={_fmt_floats(ap.axis)} "
            f"half_angle={ap.half_angle:.17g} taper_width={ap.taper_width:.17g} "
            f"amplitude={ap.amplitude:.17g}")
    with open(manifest_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_scan(manifest_path) -> ConeScanData:
    with open(manifest_path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "LTSCAN v1":
        raise InvalidArgumentError(f"{manifest_path} is not a scan manifest")
    fields, apertures = [], []
    for ln in lines[1:]:
        if not ln.startswith("cone "):
            raise InvalidArgumentError(f"bad manifest line: {ln!r}")
        tokens = dict(p.partition("=")[::2] for p in ln.split()[1:])
        fld = read_field(tokens["file"])
        axis = _parse_floats(tokens["axis"])
        apertures.append(Aperture(
            dim=fld.grid.dim, axis=axis,
            half_angle=float(tokens["half_angle"]),
            taper_width=float(tokens["taper_width"]),
            amplitude=float(tokens["amplitude"])))
        fields.append(fld)
    if not fields:
        raise InvalidArgumentError("manifest lists no cones")
    return ConeScanData(fields[0].grid, fields, apertures)


def write_pgm(path, field: ScalarField, vmin=None, vmax=None):
    """8-bit binary PGM rendering with a fixed linear colormap.

    Returns the (vmin, vmax) bounds actually used so they can be recorded.
    """
    if field.grid.dim != 2:
        raise InvalidArgumentError("PGM rendering requires a 2D field")
    vals = field.values
    if vmin is None:
        vmin = float(vals.min())
    if vmax is None:
        vmax = float(vals.max())
    span = vmax - vmin if vmax > vmin else 1.0
    img = np.clip((vals - vmin) / span * 255.0, 0, 255).astype(np.uint8)
    # transpose so x runs along image columns, y up
    img = img.T[::-1]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return vmin, vmax
