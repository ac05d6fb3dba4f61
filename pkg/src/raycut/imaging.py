"""Scalar image/volume model, file I/O, interpolation, and synthetic phantoms.

Grids hold intensities as float64 regardless of file bit depth; geometry is
physical (mm) with per-axis spacing. Supported containers: binary PGM (P5),
grayscale PNG, and a minimal mhd-style header with an inline little-endian
raw payload (x-fastest order).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import FormatError, ValidationError

MHD_DTYPES = {
    "MET_UCHAR": np.dtype("<u1"),
    "MET_USHORT": np.dtype("<u2"),
    "MET_FLOAT": np.dtype("<f4"),
}
_DTYPE_TO_MHD = {v: k for k, v in MHD_DTYPES.items()}


@dataclass(frozen=True)
class ScalarGrid:
    """2D/3D scalar intensity field with physical spacing.

    values is indexed [x, y] or [x, y, z]; voxel (i, ...) is centered at
    origin + i * spacing along each axis.
    """

    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.dims) not in (2, 3):
            raise ValidationError(f"grid must be 2D or 3D, got {len(self.dims)} axes")
        if any(d < 1 for d in self.dims):
            raise ValidationError(f"grid dims must be >= 1, got {self.dims}")
        if len(self.spacing) != len(self.dims) or any(s <= 0 for s in self.spacing):
            raise ValidationError(f"spacing must be positive per axis, got {self.spacing}")
        if len(self.origin) != len(self.dims):
            raise ValidationError("origin/dims axis count mismatch")
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != tuple(self.dims):
            if v.size != int(np.prod(self.dims)):
                raise ValidationError(
                    f"values count {v.size} != product of dims {self.dims}"
                )
            v = v.reshape(self.dims, order="F")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def voxel_centers_world(self, axis: int) -> np.ndarray:
        """World coordinates of voxel centers along one axis."""
        return self.origin[axis] + np.arange(self.dims[axis]) * self.spacing[axis]

    def world_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.origin)
        hi = lo + (np.asarray(self.dims) - 1) * np.asarray(self.spacing)
        return lo, hi


@dataclass(frozen=True)
class Mask:
    """Binary foreground/background labels on a grid."""

    dims: tuple[int, ...]
    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=bool)
        if lab.shape != tuple(self.dims):
            if lab.size != int(np.prod(self.dims)):
                raise ValidationError("labels count != product of dims")
            lab = lab.reshape(self.dims, order="F")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    def count(self) -> int:
        return int(self.labels.sum())


@dataclass(frozen=True)
class PhantomSpec:
    """Synthetic object on a constant background, desk-scale stand-in for data."""

    kind: str  # disc | sphere | rectangle | box
    center: tuple[float, ...]  # world mm
    radius_mm: tuple[float, ...]  # radius (disc/sphere) or half-extent per axis
    fg_intensity: float
    bg_intensity: float
    noise_sigma: float
    dims: tuple[int, ...]
    spacing: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("disc", "sphere", "rectangle", "box"):
            raise ValidationError(f"unknown phantom kind {self.kind!r}")
        nd = 2 if self.kind in ("disc", "rectangle") else 3
        if len(self.dims) != nd:
            raise ValidationError(f"{self.kind} phantom needs {nd} dims, got {self.dims}")
        spacing = self.spacing or (1.0,) * nd
        if len(spacing) != nd:
            raise ValidationError("spacing axis count mismatch")
        object.__setattr__(self, "spacing", tuple(float(s) for s in spacing))
        radius = self.radius_mm
        if isinstance(radius, (int, float)):
            radius = (float(radius),) * nd
        if self.kind in ("disc", "sphere"):
            if len(set(radius)) != 1:
                raise ValidationError("disc/sphere radius must be a single value")
            radius = (radius[0],) * nd
        if len(radius) != nd or any(r <= 0 for r in radius):
            raise ValidationError(f"radius/half-extent must be positive, got {radius}")
        object.__setattr__(self, "radius_mm", tuple(float(r) for r in radius))
        if len(self.center) != nd:
            raise ValidationError("center axis count mismatch")
        if self.fg_intensity == self.bg_intensity:
            raise ValidationError("fg and bg intensities must differ")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        # shape must fit inside the grid in world coordinates
        lo = np.asarray(self.center) - np.asarray(radius)
        hi = np.asarray(self.center) + np.asarray(radius)
        gmax = (np.asarray(self.dims) - 1) * np.asarray(self.spacing)
        if np.any(lo < 0.0) or np.any(hi > gmax):
            raise ValidationError("phantom shape extends outside grid bounds")


def _parse_pgm(data: bytes) -> np.ndarray:
    """Parse binary PGM (P5); returns [x, y] float array of raw sample values."""
    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("unexpected end of PGM header", offset=start)
        return data[start:pos]

    magic = token()
    if magic != b"P5":
        raise FormatError(f"not a binary PGM (magic {magic!r})", offset=0)
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError:
        raise FormatError("non-numeric PGM header field", offset=pos) from None
    if not (0 < maxval < 65536):
        raise FormatError(f"PGM maxval {maxval} out of range", offset=pos)
    pos += 1  # single whitespace byte after maxval
    bytes_per = 1 if maxval < 256 else 2
    need = width * height * bytes_per
    payload = data[pos : pos + need]
    if len(payload) != need or len(data) - pos != need:
        raise FormatError(
            f"PGM payload is {len(data) - pos} bytes, expected {need}", offset=pos
        )
    dt = np.dtype(">u2") if bytes_per == 2 else np.dtype("u1")
    raster = np.frombuffer(payload, dtype=dt).reshape(height, width)
    return raster.T.astype(np.float64)


def _write_pgm(values_xy: np.ndarray, maxval: int) -> bytes:
    width, height = values_xy.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode()
    dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    raster = np.ascontiguousarray(values_xy.T).astype(dt)
    return header + raster.tobytes()


def _parse_mhd(data: bytes):
    """Parse minimal mhd header + inline raw payload (ElementDataFile = LOCAL)."""
    end = data.find(b"ElementDataFile")
    if end < 0:
        raise FormatError("mhd header missing ElementDataFile", offset=len(data))
    nl = data.find(b"\n", end)
    if nl < 0:
        raise FormatError("mhd header not terminated", offset=end)
    header_text = data[: nl + 1].decode("ascii", errors="replace")
    fields = {}
    for line in header_text.splitlines():
        if "=" not in line:
            continue
        key, _, val = line.partition("=")
        fields[key.strip()] = val.strip()
    try:
        ndims = int(fields["NDims"])
        dims = tuple(int(t) for t in fields["DimSize"].split())
        etype = fields["ElementType"]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad mhd header: {exc}", offset=0) from None
    if fields.get("ElementDataFile", "LOCAL") != "LOCAL":
        raise FormatError("only inline payloads (ElementDataFile = LOCAL) supported")
    if len(dims) != ndims:
        raise FormatError("DimSize entry count != NDims")
    spacing = tuple(float(t) for t in fields.get("ElementSpacing", "").split()) or (1.0,) * ndims
    if len(spacing) != ndims:
        raise FormatError("ElementSpacing entry count != NDims")
    if etype not in MHD_DTYPES:
        raise FormatError(f"unsupported ElementType {etype}")
    dt = MHD_DTYPES[etype]
    payload = data[nl + 1 :]
    need = int(np.prod(dims)) * dt.itemsize
    if len(payload) != need:
        raise FormatError(
            f"raw payload is {len(payload)} bytes, expected {need}", offset=nl + 1
        )
    flat = np.frombuffer(payload, dtype=dt)
    values = flat.reshape(dims, order="F").astype(np.float64)
    return dims, spacing, values


def _write_mhd(values: np.ndarray, spacing, element_type: str) -> bytes:
    dt = MHD_DTYPES[element_type]
    dims = values.shape
    header = (
        f"NDims = {len(dims)}\n"
        f"DimSize = {' '.join(str(d) for d in dims)}\n"
        f"ElementSpacing = {' '.join(format(s, 'g') for s in spacing)}\n"
        f"ElementType = {element_type}\n"
        f"ElementDataFile = LOCAL\n"
    ).encode("ascii")
    payload = values.astype(dt).ravel(order="F").tobytes()
    return header + payload


def _infer_format(path: str) -> str:
    low = str(path).lower()
    if low.endswith(".pgm"):
        return "pgm"
    if low.endswith(".png"):
        return "png-gray"
    if low.endswith(".mhd"):
        return "mhd-raw"
    raise ValidationError(f"cannot infer format from {path!r}")


def load_grid(path, format: str | None = None) -> ScalarGrid:
    """Read an image/volume file into a float64 grid.

    Missing spacing metadata (PGM, PNG) defaults to 1.0 mm per axis.
    """
    fmt = format or _infer_format(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if fmt == "pgm":
        values = _parse_pgm(data)
        return ScalarGrid(values.shape, (1.0, 1.0), (0.0, 0.0), values)
    if fmt == "png-gray":
        try:
            img = Image.open(io.BytesIO(data))
            img.load()
        except Exception as exc:
            raise FormatError(f"unreadable PNG: {exc}", offset=0) from None
        if img.mode not in ("L", "I", "I;16"):
            img = img.convert("L")
        values = np.asarray(img).T.astype(np.float64)
        return ScalarGrid(values.shape, (1.0, 1.0), (0.0, 0.0), values)
    if fmt == "mhd-raw":
        dims, spacing, values = _parse_mhd(data)
        return ScalarGrid(dims, spacing, (0.0,) * len(dims), values)
    raise ValidationError(f"unknown format {fmt!r}")


def save_grid(grid: ScalarGrid, path, format: str | None = None,
              element_type: str = "MET_FLOAT") -> None:
    """Write a grid; PGM rounds/clips to the integer sample range."""
    fmt = format or _infer_format(path)
    if fmt == "pgm":
        if grid.ndim != 2:
            raise ValidationError("PGM holds 2D data only")
        maxval = 255 if float(grid.values.max(initial=0.0)) <= 255 else 65535
        data = _write_pgm(np.clip(np.rint(grid.values), 0, maxval), maxval)
    elif fmt == "mhd-raw":
        data = _write_mhd(grid.values, grid.spacing, element_type)
    else:
        raise ValidationError(f"unsupported grid save format {fmt!r}")
    with open(path, "wb") as fh:
        fh.write(data)


def save_mask(mask: Mask, path, format: str | None = None) -> None:
    """Write a mask; foreground stores 1, background 0 (round-trip exact)."""
    fmt = format or _infer_format(path)
    if fmt == "pgm":
        if len(mask.dims) != 2:
            raise ValidationError("PGM holds 2D masks only")
        data = _write_pgm(mask.labels.astype(np.uint8), 255)
    elif fmt == "mhd-raw":
        data = _write_mhd(mask.labels.astype(np.float64), (1.0,) * len(mask.dims),
                          "MET_UCHAR")
    else:
        raise ValidationError(f"unsupported mask save format {fmt!r}")
    with open(path, "wb") as fh:
        fh.write(data)


def load_mask(path, format: str | None = None) -> Mask:
    grid = load_grid(path, format)
    return Mask(grid.dims, grid.values > 0)


def _continuous_index(grid: ScalarGrid, pts: np.ndarray) -> np.ndarray:
    q = (pts - np.asarray(grid.origin)) / np.asarray(grid.spacing)
    hi = np.asarray(grid.dims, dtype=np.float64) - 1.0
    return np.clip(q, 0.0, hi)


def sample_points(grid: ScalarGrid, pts) -> np.ndarray:
    """Bilinear/trilinear interpolation at world points, clamped at the edges.

    pts has shape (n, ndim); returns (n,) float64.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    if pts.shape[1] != grid.ndim:
        raise ValidationError(f"points have {pts.shape[1]} axes, grid has {grid.ndim}")
    q = _continuous_index(grid, pts)
    i0 = np.floor(q).astype(np.int64)
    hi = np.asarray(grid.dims) - 1
    i0 = np.minimum(i0, hi - (np.asarray(grid.dims) > 1))  # keep i0+1 in bounds
    i0 = np.maximum(i0, 0)
    f = q - i0
    v = grid.values
    if grid.ndim == 2:
        x0, y0 = i0[:, 0], i0[:, 1]
        x1 = np.minimum(x0 + 1, hi[0])
        y1 = np.minimum(y0 + 1, hi[1])
        fx, fy = f[:, 0], f[:, 1]
        return (v[x0, y0] * (1 - fx) * (1 - fy)
                + v[x1, y0] * fx * (1 - fy)
                + v[x0, y1] * (1 - fx) * fy
                + v[x1, y1] * fx * fy)
    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1 = np.minimum(x0 + 1, hi[0])
    y1 = np.minimum(y0 + 1, hi[1])
    z1 = np.minimum(z0 + 1, hi[2])
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    c00 = v[x0, y0, z0] * (1 - fx) + v[x1, y0, z0] * fx
    c10 = v[x0, y1, z0] * (1 - fx) + v[x1, y1, z0] * fx
    c01 = v[x0, y0, z1] * (1 - fx) + v[x1, y0, z1] * fx
    c11 = v[x0, y1, z1] * (1 - fx) + v[x1, y1, z1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


def sample_at(grid: ScalarGrid, p) -> float:
    """Interpolated intensity at one world point (mm)."""
    return float(sample_points(grid, [p])[0])


def make_phantom(spec: PhantomSpec, rng_seed: int) -> tuple[ScalarGrid, Mask]:
    """Build (grid, truth mask); fully determined by (spec, rng_seed)."""
    nd = len(spec.dims)
    axes = [np.arange(spec.dims[a]) * spec.spacing[a] for a in range(nd)]
    coords = np.meshgrid(*axes, indexing="ij")
    center = spec.center
    if spec.kind in ("disc", "sphere"):
        r2 = sum((coords[a] - center[a]) ** 2 for a in range(nd))
        inside = r2 <= spec.radius_mm[0] ** 2
    else:
        inside = np.ones(spec.dims, dtype=bool)
        for a in range(nd):
            inside &= np.abs(coords[a] - center[a]) <= spec.radius_mm[a]
    values = np.where(inside, spec.fg_intensity, spec.bg_intensity).astype(np.float64)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(rng_seed)
        values = values + rng.normal(0.0, spec.noise_sigma, size=spec.dims)
    grid = ScalarGrid(spec.dims, spec.spacing, (0.0,) * nd, values)
    return grid, Mask(spec.dims, inside)
