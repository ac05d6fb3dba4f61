"""Template shapes and the ray/node lattice they induce around a seed point.

A template fixes, per ray direction, the distance at which node sampling
stops. Rays fan out from the seed: uniformly spaced angles in 2D, a
latitude-longitude grid in 3D. Node k=0 sits at a small inner offset (2% of
the boundary distance) so terminal wiring at depth 0 has a position distinct
from the seed itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ValidationError

INNER_OFFSET_FRACTION = 0.02

KINDS_2D = ("circle", "rectangle", "triangle", "polygon")
KINDS_3D = ("sphere", "cube")


class NodeIndex(NamedTuple):
    ray: int
    depth: int


@dataclass(frozen=True)
class Template:
    """Basic shape of the object class; directs the ray endpoints."""

    kind: str
    size_params: tuple[float, ...]
    corner_points: tuple[tuple[float, ...], ...]  # world offsets from the center

    @property
    def ndim(self) -> int:
        return 3 if self.kind in KINDS_3D else 2


def _validate_star_polygon(corners: np.ndarray) -> None:
    """Simple loop, star-shaped about the origin: vertex angles wind once,
    strictly monotonic, every consecutive gap < pi."""
    if len(corners) < 3:
        raise ValidationError("polygon needs at least 3 corners")
    radii = np.hypot(corners[:, 0], corners[:, 1])
    if np.any(radii <= 0):
        raise ValidationError("polygon corner coincides with the center")
    angles = np.arctan2(corners[:, 1], corners[:, 0])
    gaps = np.diff(np.concatenate([angles, angles[:1]])) % (2 * math.pi)
    if np.any(gaps <= 0) or np.any(gaps >= math.pi) or not math.isclose(
            float(gaps.sum()), 2 * math.pi, rel_tol=1e-9):
        raise ValidationError(
            "polygon must be a simple loop, star-shaped about the center")


def make_template(kind: str, size_params) -> Template:
    """Build a template; polygonal kinds get derived corner offsets."""
    if kind in ("circle", "sphere"):
        (diameter,) = _as_floats(size_params, 1, kind)
        if diameter <= 0:
            raise ValidationError("diameter must be positive")
        return Template(kind, (diameter,), ())
    if kind == "rectangle":
        w, h = _as_floats(size_params, 2, kind)
        if w <= 0 or h <= 0:
            raise ValidationError("rectangle extents must be positive")
        corners = ((w / 2, h / 2), (-w / 2, h / 2), (-w / 2, -h / 2), (w / 2, -h / 2))
        return Template(kind, (w, h), corners)
    if kind == "cube":
        ex, ey, ez = _as_floats(size_params, 3, kind)
        if min(ex, ey, ez) <= 0:
            raise ValidationError("cube extents must be positive")
        corners = tuple((sx * ex / 2, sy * ey / 2, sz * ez / 2)
                        for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1))
        return Template(kind, (ex, ey, ez), corners)
    if kind in ("triangle", "polygon"):
        corners = np.asarray([[float(c[0]), float(c[1])] for c in size_params])
        if kind == "triangle" and len(corners) != 3:
            raise ValidationError("triangle needs exactly 3 corners")
        _validate_star_polygon(corners)
        flat = tuple(v for c in corners for v in c)
        return Template(kind, flat, tuple(map(tuple, corners)))
    raise ValidationError(f"unknown template kind {kind!r}")


def _as_floats(params, n, kind):
    if isinstance(params, (int, float)):
        params = (params,)
    vals = tuple(float(p) for p in params)
    if len(vals) != n:
        raise ValidationError(f"{kind} takes {n} size parameter(s), got {len(vals)}")
    return vals


def _ray_box_distance(dirs: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Distance from the center to an axis-aligned box boundary, per direction."""
    with np.errstate(divide="ignore"):
        t = np.where(np.abs(dirs) > 1e-15, half / np.abs(dirs), np.inf)
    return t.min(axis=1)


def _ray_polygon_distance(dirs: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """First positive crossing of each direction with the polygon boundary."""
    out = np.full(len(dirs), np.inf)
    m = len(corners)
    for i in range(m):
        a = corners[i]
        b = corners[(i + 1) % m]
        e = b - a
        # solve seed + t*d = a + u*e for t > 0, u in [0, 1]
        denom = dirs[:, 0] * (-e[1]) - dirs[:, 1] * (-e[0])
        ok = np.abs(denom) > 1e-15
        safe = np.where(ok, denom, 1.0)
        t = np.where(ok, (a[0] * (-e[1]) - a[1] * (-e[0])) / safe, np.inf)
        u = np.where(ok, (dirs[:, 0] * a[1] - dirs[:, 1] * a[0]) / safe, -1.0)
        hit = ok & (t > 1e-12) & (u >= -1e-12) & (u <= 1 + 1e-12)
        out = np.where(hit & (t < out), t, out)
    return out


def boundary_distances(template: Template, dirs: np.ndarray) -> np.ndarray:
    """Template boundary distance from the center along unit directions."""
    if template.kind in ("circle", "sphere"):
        return np.full(len(dirs), template.size_params[0] / 2.0)
    if template.kind in ("rectangle", "cube"):
        return _ray_box_distance(dirs, np.asarray(template.size_params) / 2.0)
    corners = np.asarray(template.corner_points)
    d = _ray_polygon_distance(dirs, corners)
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise ValidationError("polygon boundary distance non-positive along a ray")
    return d


@dataclass(frozen=True)
class RayGeometry:
    """Sampled node lattice: positions[r, k] = seed + t(k) * ray_dirs[r]."""

    seed: tuple[float, ...]
    ray_count: int
    nodes_per_ray: int
    positions: np.ndarray  # (R, N, ndim)
    ray_dirs: np.ndarray  # (R, ndim)
    adjacency: tuple[tuple[int, int], ...]  # unordered neighbor ray pairs
    template: Template
    lat_count: int = 0  # 3D only
    lon_count: int = 0

    @property
    def ndim(self) -> int:
        return self.positions.shape[2]

    def radii(self) -> np.ndarray:
        """Distance of every node from the seed, shape (R, N)."""
        return np.linalg.norm(self.positions - np.asarray(self.seed), axis=2)


def _lat_lon_dirs(r_lat: int, r_lon: int) -> np.ndarray:
    theta = math.pi * (np.arange(r_lat) + 0.5) / r_lat
    phi = 2 * math.pi * np.arange(r_lon) / r_lon
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    dirs = np.stack([np.sin(th) * np.cos(ph),
                     np.sin(th) * np.sin(ph),
                     np.cos(th)], axis=-1)
    return dirs.reshape(-1, 3)


def _lat_lon_adjacency(r_lat: int, r_lon: int) -> tuple[tuple[int, int], ...]:
    pairs = set()

    def rid(i, j):
        return i * r_lon + j % r_lon

    for i in range(r_lat):
        for j in range(r_lon):
            pairs.add(tuple(sorted((rid(i, j), rid(i, j + 1)))))
            if i + 1 < r_lat:
                pairs.add(tuple(sorted((rid(i, j), rid(i + 1, j)))))
    # pole rows are mutually adjacent through the pole
    for row in (0, r_lat - 1):
        ids = [rid(row, j) for j in range(r_lon)]
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                pairs.add((ids[a], ids[b]))
    return tuple(sorted(pairs))


def generate_rays(template: Template, seed, rays, nodes_per_ray: int) -> RayGeometry:
    """Sample the node lattice for a template centered on the seed.

    rays is an int for 2D templates, or (lat, lon) for sphere/cube.
    """
    N = int(nodes_per_ray)
    if N < 2:
        raise ValidationError("need at least 2 nodes per ray")
    seed = tuple(float(s) for s in seed)
    if template.ndim == 2:
        if not isinstance(rays, int) or isinstance(rays, bool):
            rays = int(rays)
        R = rays
        if R < 3:
            raise ValidationError("need at least 3 rays")
        ang = 2 * math.pi * np.arange(R) / R
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        adjacency = tuple((r, (r + 1) % R) if r < (r + 1) % R else ((r + 1) % R, r)
                          for r in range(R))
        adjacency = tuple(sorted(set(adjacency)))
        lat = lon = 0
        if len(seed) != 2:
            raise ValidationError("2D template needs a 2D seed")
    else:
        if isinstance(rays, int):
            raise ValidationError("3D templates take rays as (lat, lon)")
        lat, lon = int(rays[0]), int(rays[1])
        if lat < 2 or lon < 3:
            raise ValidationError("3D lattice needs lat >= 2, lon >= 3")
        dirs = _lat_lon_dirs(lat, lon)
        adjacency = _lat_lon_adjacency(lat, lon)
        R = lat * lon
        if len(seed) != 3:
            raise ValidationError("3D template needs a 3D seed")

    tb = boundary_distances(template, dirs)
    t0 = INNER_OFFSET_FRACTION * tb
    steps = np.linspace(0.0, 1.0, N)
    t = t0[:, None] + (tb - t0)[:, None] * steps[None, :]
    positions = np.asarray(seed)[None, None, :] + t[:, :, None] * dirs[:, None, :]
    positions.setflags(write=False)
    dirs.setflags(write=False)
    return RayGeometry(seed, R, N, positions, dirs, adjacency, template, lat, lon)


def closest_node(geom: RayGeometry, p) -> NodeIndex:
    """Lattice node nearest to a world point; ties go to the smaller ray,
    then the smaller depth."""
    p = np.asarray(p, dtype=np.float64)
    d2 = ((geom.positions - p) ** 2).sum(axis=2)
    flat = int(np.argmin(d2))  # first occurrence: ray-major, then depth
    return NodeIndex(flat // geom.nodes_per_ray, flat % geom.nodes_per_ray)


def parse_template_doc(text: str) -> Template:
    """Parse the key/value + corner-list template document.

    Keys: kind, diameter_mm (circle/sphere), extent_mm (rectangle/cube,
    space-separated), corner_mm (repeatable, "x y" offsets for
    triangle/polygon).
    """
    kind = None
    diameter = None
    extents = None
    corners = []
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"template doc line {ln}: expected key = value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key == "kind":
            kind = val
        elif key == "diameter_mm":
            diameter = float(val)
        elif key == "extent_mm":
            extents = tuple(float(t) for t in val.split())
        elif key == "corner_mm":
            parts = val.split()
            if len(parts) != 2:
                raise ValidationError(f"template doc line {ln}: corner_mm takes x y")
            corners.append((float(parts[0]), float(parts[1])))
        else:
            raise ValidationError(f"template doc line {ln}: unknown key {key!r}")
    if kind is None:
        raise ValidationError("template doc missing kind")
    if kind in ("circle", "sphere"):
        if diameter is None:
            raise ValidationError(f"{kind} template doc missing diameter_mm")
        return make_template(kind, diameter)
    if kind in ("rectangle", "cube"):
        if extents is None:
            raise ValidationError(f"{kind} template doc missing extent_mm")
        return make_template(kind, extents)
    if kind in ("triangle", "polygon"):
        return make_template(kind, corners)
    raise ValidationError(f"unknown template kind {kind!r}")


def format_template_doc(template: Template) -> str:
    lines = [f"kind = {template.kind}"]
    if template.kind in ("circle", "sphere"):
        lines.append(f"diameter_mm = {template.size_params[0]:g}")
    elif template.kind in ("rectangle", "cube"):
        lines.append("extent_mm = " + " ".join(f"{e:g}" for e in template.size_params))
    else:
        for c in template.corner_points:
            lines.append(f"corner_mm = {c[0]:g} {c[1]:g}")
    return "\n".join(lines) + "\n"


def parse_template_arg(arg: str) -> Template:
    """CLI shorthand: "circle:80", "rectangle:40x60", "cube:30x30x30",
    or a path to a template document."""
    import os

    if os.path.exists(arg):
        with open(arg, encoding="utf-8") as fh:
            return parse_template_doc(fh.read())
    kind, _, rest = arg.partition(":")
    if kind in ("circle", "sphere"):
        return make_template(kind, float(rest))
    if kind in ("rectangle", "cube"):
        return make_template(kind, tuple(float(t) for t in rest.split("x")))
    raise ValidationError(
        f"template {arg!r}: use kind:size (circle:80, rectangle:40x60) or a file path")
