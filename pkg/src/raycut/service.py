"""Session-oriented HTTP interface for interactive segmentation.

Sessions are memory-resident with idle expiry. Mutations increment a
revision and schedule a recompute with latest-wins coalescing: one worker
per session at a time; a mutation arriving mid-compute sets a dirty flag
that triggers exactly one follow-up pass. get_result always answers
immediately with the freshest completed result, marked stale while a newer
revision is pending.
"""

from __future__ import annotations

import base64
import io
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np

from .cutbuilder import BuildConfig, RefinementSeed
from .errors import FormatError, InfeasibleCutError, ValidationError
from .imaging import ScalarGrid, load_grid
from .segmenter import (
    SegmentationRequest,
    SegmentationResult,
    result_document,
    segment,
)
from .templates import Template, format_template_doc, parse_template_doc

DEFAULT_IDLE_EXPIRY_S = 30 * 60.0


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _load_grid_from_payload(payload: bytes, format: str) -> ScalarGrid:
    suffix = {"pgm": ".pgm", "png-gray": ".png", "mhd-raw": ".mhd"}.get(format)
    if suffix is None:
        raise FormatError(f"unknown image format {format!r}")
    with tempfile.NamedTemporaryFile(suffix=suffix) as tmp:
        tmp.write(payload)
        tmp.flush()
        return load_grid(tmp.name, format)


class Session:
    """Live segmentation state plus the coalescing recompute worker."""

    def __init__(self, session_id: str, grid: ScalarGrid, config: BuildConfig,
                 template: Template):
        self.id = session_id
        self.grid = grid
        self.config = config
        self.template = template
        self.primary_seed: tuple | None = None
        self.refinements: list[RefinementSeed] = []
        self.revision = 0
        self._next_seed = 1
        self.lock = threading.Lock()
        self.last_result: tuple[int, SegmentationResult] | None = None
        self.last_error: str | None = None
        self.computing = False
        self.dirty = False
        self.recompute_count = 0
        self.touched = time.monotonic()

    # -- state mutation (accept path) --

    def _bounds_ok(self, position) -> bool:
        lo, hi = self.grid.world_bounds()
        margin = (np.asarray(hi) - np.asarray(lo)) + 1.0
        p = np.asarray(position, dtype=float)
        if p.size != self.grid.ndim:
            return False
        return bool(np.all(p >= lo - margin) and np.all(p <= hi + margin))

    def mutate(self, action: str, seed_id: str | None = None,
               position=None) -> int:
        """Apply one seed mutation; returns the new revision (last-writer-wins,
        stale client revisions accepted)."""
        with self.lock:
            self.touched = time.monotonic()
            if action in ("set_primary", "add_refine", "move"):
                if position is None or not self._bounds_ok(position):
                    raise ServiceError(400, f"position {position} out of range")
                position = tuple(float(x) for x in position)
            if action == "set_primary":
                self.primary_seed = position
                seed_id = "primary"
            elif action == "add_refine":
                seed_id = f"r{self._next_seed}"
                self._next_seed += 1
                self.refinements.append(RefinementSeed(seed_id, position))
            elif action == "move":
                if seed_id == "primary":
                    if self.primary_seed is None:
                        raise ServiceError(404, "primary seed not set")
                    self.primary_seed = position
                else:
                    idx = self._find_refinement(seed_id)
                    self.refinements[idx] = RefinementSeed(seed_id, position)
            elif action == "delete":
                if seed_id == "primary":
                    raise ServiceError(400, "primary seed cannot be deleted")
                idx = self._find_refinement(seed_id)
                del self.refinements[idx]
            else:
                raise ServiceError(400, f"unknown action {action!r}")
            self.revision += 1
            self._schedule_locked()
            return self.revision

    def update_config(self, doc: dict) -> int:
        with self.lock:
            self.touched = time.monotonic()
            merged = self.config.as_dict()
            template = self.template
            for key, val in doc.items():
                if key == "template":
                    template = parse_template_doc(val)
                elif key == "client_revision":
                    continue
                elif key in merged:
                    merged[key] = val
                else:
                    raise ServiceError(400, f"unknown config key {key!r}")
            try:
                self.config = BuildConfig.from_dict(merged)
            except ValidationError as exc:
                raise ServiceError(400, str(exc)) from None
            self.template = template
            self.revision += 1
            self._schedule_locked()
            return self.revision

    def _find_refinement(self, seed_id) -> int:
        for i, s in enumerate(self.refinements):
            if s.id == seed_id:
                return i
        raise ServiceError(404, f"unknown seed id {seed_id!r}")

    # -- recompute worker (latest-wins coalescing) --

    def _schedule_locked(self):
        if self.primary_seed is None:
            return
        self.dirty = True
        if not self.computing:
            self.computing = True
            threading.Thread(target=self._worker, daemon=True).start()

    def _worker(self):
        while True:
            with self.lock:
                if not self.dirty:
                    self.computing = False
                    return
                self.dirty = False
                revision = self.revision
                request = SegmentationRequest(
                    self.grid, self.template, self.primary_seed,
                    list(self.refinements), self.config)
            try:
                result = segment(request)
                error = None
            except (InfeasibleCutError, ValidationError) as exc:
                result = None
                error = str(exc)
            with self.lock:
                self.recompute_count += 1
                if result is not None:
                    self.last_result = (revision, result)
                    self.last_error = None
                else:
                    self.last_error = error

    def settle(self, timeout: float = 30.0) -> None:
        """Block until no recompute is running or pending (test support)."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self.lock:
                if not self.computing and not self.dirty:
                    return
            time.sleep(0.002)
        raise TimeoutError("session did not settle")

    # -- documents --

    def state_doc(self) -> dict:
        with self.lock:
            return {
                "id": self.id,
                "dims": list(self.grid.dims),
                "spacing": list(self.grid.spacing),
                "origin": list(self.grid.origin),
                "revision": self.revision,
                "config": self.config.as_dict(),
                "template": format_template_doc(self.template),
                "seeds": {
                    "primary": list(self.primary_seed) if self.primary_seed else None,
                    "refinements": [{"id": s.id, "position_mm": list(s.position)}
                                    for s in self.refinements],
                },
                "recompute_count": self.recompute_count,
                "has_result": self.last_result is not None,
            }

    def result_doc(self) -> dict:
        with self.lock:
            self.touched = time.monotonic()
            pending = self.computing or self.dirty
            if self.last_result is None:
                return {"revision": 0, "stale": pending, "result": None,
                        "error": self.last_error}
            revision, result = self.last_result
            return {
                "revision": revision,
                "stale": pending or revision < self.revision,
                "result": result_document(result),
                "error": self.last_error,
            }

    def current_result(self) -> SegmentationResult | None:
        with self.lock:
            return self.last_result[1] if self.last_result else None


class SessionStore:
    def __init__(self, idle_expiry_s: float = DEFAULT_IDLE_EXPIRY_S):
        self.idle_expiry_s = idle_expiry_s
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, payload: bytes, format: str, config_doc: dict) -> Session:
        try:
            grid = _load_grid_from_payload(payload, format)
        except (FormatError, ValidationError) as exc:
            raise ServiceError(400, f"image parse failed: {exc}") from None
        doc = dict(config_doc or {})
        template_doc = doc.pop("template", None)
        try:
            config = BuildConfig.from_dict(doc)
            if template_doc:
                template = parse_template_doc(template_doc)
            else:
                template = _default_template(grid)
        except ValidationError as exc:
            raise ServiceError(400, str(exc)) from None
        if (grid.ndim == 3) != (template.ndim == 3):
            raise ServiceError(400, "template dimensionality mismatch")
        if grid.ndim == 3 and isinstance(config.rays, int):
            raise ServiceError(400, "3D sessions need rays as [lat, lon]")
        session = Session(uuid.uuid4().hex[:12], grid, config, template)
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        self.sweep()
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise ServiceError(404, f"unknown session {session_id!r}")
        return session

    def sweep(self):
        now = time.monotonic()
        with self._lock:
            dead = [sid for sid, s in self._sessions.items()
                    if now - s.touched > self.idle_expiry_s]
            for sid in dead:
                del self._sessions[sid]

    def drop(self, session_id: str):
        with self._lock:
            self._sessions.pop(session_id, None)


def _default_template(grid: ScalarGrid) -> Template:
    from .templates import make_template

    extent = min((d - 1) * s for d, s in zip(grid.dims, grid.spacing))
    if grid.ndim == 2:
        return make_template("circle", 0.8 * extent)
    return make_template("sphere", 0.8 * extent)


def _slice_plane(grid: ScalarGrid, axis: int, index: int) -> np.ndarray:
    if grid.ndim == 2:
        if index != 0:
            raise ServiceError(404, "2D image has a single slice (index 0)")
        return grid.values
    if not (0 <= axis < 3):
        raise ServiceError(404, f"axis {axis} out of range")
    if not (0 <= index < grid.dims[axis]):
        raise ServiceError(404, f"slice {index} out of range")
    return np.take(grid.values, index, axis=axis)


def render_slice_png(grid: ScalarGrid, axis: int, index: int) -> bytes:
    """8-bit display rendering: min/max windowing over the whole grid."""
    from PIL import Image

    plane = _slice_plane(grid, axis, index)
    lo = float(grid.values.min())
    hi = float(grid.values.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img8 = np.clip((plane - lo) * scale, 0, 255).astype(np.uint8)
    # plane axes (a0, a1): PNG column = a0 index, row = a1 index
    image = Image.fromarray(img8.T, mode="L")
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


def mask_slice_outlines(mask_labels: np.ndarray, grid: ScalarGrid, axis: int,
                        index: int) -> list:
    """Closed outlines (mm, slice-plane coords) of a mask slice via marching
    squares on voxel edges."""
    if grid.ndim == 2:
        plane = mask_labels
        axes = (0, 1)
    else:
        plane = np.take(mask_labels, index, axis=axis)
        axes = tuple(a for a in range(3) if a != axis)
    nx, ny = plane.shape
    padded = np.zeros((nx + 2, ny + 2), dtype=bool)
    padded[1:-1, 1:-1] = plane
    segments = {}
    # horizontal neighbor changes emit vertical edges and vice versa;
    # vertices live on the half-integer voxel-corner lattice
    for x in range(nx + 1):
        for y in range(ny + 1):
            a = padded[x + 1, y + 1] if x < nx and y < ny else False
            left = padded[x, y + 1] if y < ny else False
            below = padded[x + 1, y] if x < nx else False
            if y < ny and a != left:
                p0 = (x - 0.5, y - 0.5)
                p1 = (x - 0.5, y + 0.5)
                segments.setdefault(p0, []).append(p1)
                segments.setdefault(p1, []).append(p0)
            if x < nx and a != below:
                p0 = (x - 0.5, y - 0.5)
                p1 = (x + 0.5, y - 0.5)
                segments.setdefault(p0, []).append(p1)
                segments.setdefault(p1, []).append(p0)
    outlines = []
    visited = set()
    for start in list(segments):
        if start in visited:
            continue
        loop = [start]
        visited.add(start)
        cur = start
        while True:
            nxts = [p for p in segments[cur] if p not in visited]
            if not nxts:
                break
            cur = nxts[0]
            visited.add(cur)
            loop.append(cur)
        if len(loop) >= 4:
            a0, a1 = axes
            outlines.append(
                [[grid.origin[a0] + px * grid.spacing[a0],
                  grid.origin[a1] + py * grid.spacing[a1]] for px, py in loop])
    return outlines


def _warm_solver():
    from .flownet import SINK, SOURCE, FlowNetwork, max_flow

    net = FlowNetwork(1, [(SOURCE, 0, 1.0), (0, SINK, 2.0)])
    for method in ("bk", "bfs"):
        max_flow(net, method=method)


def create_app(store: SessionStore | None = None):
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse, Response

    app = FastAPI(title="raycut session service")
    app.state.store = store or SessionStore()
    threading.Thread(target=_warm_solver, daemon=True).start()

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={"error": exc.message})

    def _store() -> SessionStore:
        return app.state.store

    @app.post("/sessions")
    async def create_session(body: dict):
        try:
            payload = base64.b64decode(body["image_b64"])
        except (KeyError, ValueError):
            raise ServiceError(400, "body needs base64 image data in image_b64")
        session = _store().create(payload, body.get("format", "pgm"),
                                  body.get("config", {}))
        return {"id": session.id, "revision": session.revision}

    @app.get("/sessions/{sid}")
    async def get_session(sid: str):
        return _store().get(sid).state_doc()

    @app.post("/sessions/{sid}/seeds")
    async def post_seed(sid: str, body: dict):
        session = _store().get(sid)
        kind = body.get("kind", "refine")
        action = "set_primary" if kind == "primary" else "add_refine"
        revision = session.mutate(action, position=body.get("position_mm"))
        seed_id = "primary" if kind == "primary" else session.refinements[-1].id
        return {"seed_id": seed_id, "revision": revision}

    @app.patch("/sessions/{sid}/seeds/{seed_id}")
    async def move_seed(sid: str, seed_id: str, body: dict):
        session = _store().get(sid)
        revision = session.mutate("move", seed_id=seed_id,
                                  position=body.get("position_mm"))
        return {"seed_id": seed_id, "revision": revision}

    @app.delete("/sessions/{sid}/seeds/{seed_id}")
    async def delete_seed(sid: str, seed_id: str):
        session = _store().get(sid)
        revision = session.mutate("delete", seed_id=seed_id)
        return {"seed_id": seed_id, "revision": revision}

    @app.patch("/sessions/{sid}/config")
    async def patch_config(sid: str, body: dict):
        session = _store().get(sid)
        revision = session.update_config(body)
        return {"revision": revision}

    @app.get("/sessions/{sid}/result")
    async def get_result(sid: str):
        return _store().get(sid).result_doc()

    @app.get("/sessions/{sid}/image/slice/{axis}/{index}")
    async def image_slice(sid: str, axis: int, index: int):
        session = _store().get(sid)
        png = render_slice_png(session.grid, axis, index)
        return Response(content=png, media_type="image/png")

    @app.get("/sessions/{sid}/result/slice/{axis}/{index}")
    async def result_slice(sid: str, axis: int, index: int):
        session = _store().get(sid)
        doc = session.result_doc()
        result = session.current_result()
        if result is None:
            return {"revision": 0, "stale": doc["stale"], "outlines": []}
        outlines = mask_slice_outlines(result.mask.labels, session.grid,
                                       axis, index)
        return {"revision": doc["revision"], "stale": doc["stale"],
                "outlines": outlines}

    return app
