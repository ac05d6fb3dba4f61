import base64
import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from raycut.cutbuilder import BuildConfig, RefinementSeed
from raycut.imaging import PhantomSpec, make_phantom, save_grid
from raycut.segmenter import (
    SegmentationRequest,
    results_equal_modulo_timing,
    segment,
)
from raycut.service import SessionStore, create_app
from raycut.templates import format_template_doc, make_template


def disc_pgm_bytes(noise=0.0, rng_seed=1):
    spec = PhantomSpec("disc", (48.0, 48.0), (20.0,), 200.0, 50.0, noise, (96, 96))
    grid, _ = make_phantom(spec, rng_seed)
    import tempfile

    with tempfile.NamedTemporaryFile(suffix=".pgm") as tmp:
        save_grid(grid, tmp.name)
        tmp.seek(0)
        return open(tmp.name, "rb").read(), grid


def make_client(idle_expiry_s=1800.0):
    store = SessionStore(idle_expiry_s=idle_expiry_s)
    app = create_app(store)
    return TestClient(app), store


def create_disc_session(client, **config):
    payload, grid = disc_pgm_bytes()
    body = {
        "image_b64": base64.b64encode(payload).decode(),
        "format": "pgm",
        "config": {
            "delta": 2, "rays": 30, "nodes_per_ray": 30, "mean_radius_mm": 4.0,
            "template": format_template_doc(make_template("circle", 60.0)),
            **config,
        },
    }
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()["id"], grid


def settle(store, sid):
    store.get(sid).settle()


class TestSessionLifecycle:
    def test_create_and_state(self):
        client, store = make_client()
        sid, _ = create_disc_session(client)
        state = client.get(f"/sessions/{sid}").json()
        assert state["dims"] == [96, 96]
        assert state["revision"] == 0
        assert state["seeds"]["primary"] is None

    def test_garbage_payload_rejected(self):
        client, _ = make_client()
        resp = client.post("/sessions", json={
            "image_b64": base64.b64encode(b"not an image").decode(),
            "format": "pgm", "config": {}})
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_two_uploads_distinct_ids(self):
        client, _ = make_client()
        a, _ = create_disc_session(client)
        b, _ = create_disc_session(client)
        assert a != b

    def test_unknown_session_404(self):
        client, _ = make_client()
        assert client.get("/sessions/nope").status_code == 404
        assert client.get("/sessions/nope/result").status_code == 404

    def test_idle_expiry(self):
        client, store = make_client(idle_expiry_s=0.05)
        sid, _ = create_disc_session(client)
        assert client.get(f"/sessions/{sid}").status_code == 200
        time.sleep(0.12)
        assert client.get(f"/sessions/{sid}").status_code == 404


class TestSeedMutations:
    def test_no_result_before_primary(self):
        client, _ = make_client()
        sid, _ = create_disc_session(client)
        doc = client.get(f"/sessions/{sid}/result").json()
        assert doc["revision"] == 0 and doc["result"] is None

    def test_set_primary_produces_result(self):
        client, store = make_client()
        sid, _ = create_disc_session(client)
        resp = client.post(f"/sessions/{sid}/seeds",
                           json={"kind": "primary", "position_mm": [48, 48]})
        assert resp.json() == {"seed_id": "primary", "revision": 1}
        settle(store, sid)
        doc = client.get(f"/sessions/{sid}/result").json()
        assert doc["revision"] == 1
        assert doc["stale"] is False
        assert len(doc["result"]["contour_mm"]) == 30

    def test_refinement_stays_fixed_while_primary_moves(self):
        client, store = make_client()
        sid, _ = create_disc_session(client)
        client.post(f"/sessions/{sid}/seeds",
                    json={"kind": "primary", "position_mm": [48, 48]})
        resp = client.post(f"/sessions/{sid}/seeds",
                           json={"kind": "refine", "position_mm": [68.0, 48.0]})
        seed_id = resp.json()["seed_id"]
        client.patch(f"/sessions/{sid}/seeds/primary",
                     json={"position_mm": [45.0, 50.0]})
        state = client.get(f"/sessions/{sid}").json()
        refs = state["seeds"]["refinements"]
        assert refs == [{"id": seed_id, "position_mm": [68.0, 48.0]}]
        assert state["seeds"]["primary"] == [45.0, 50.0]
        settle(store, sid)
        doc = client.get(f"/sessions/{sid}/result").json()
        # forced boundary still honored after the move
        snapped = doc["result"]["snapped_refinements"][0]
        assert doc["result"]["boundary"][snapped[0]] == snapped[1]

    def test_delete_refinement_removes_forcing(self):
        client, store = make_client()
        sid, _ = create_disc_session(client)
        client.post(f"/sessions/{sid}/seeds",
                    json={"kind": "primary", "position_mm": [48, 48]})
        resp = client.post(f"/sessions/{sid}/seeds",
                           json={"kind": "refine", "position_mm": [58.0, 48.0]})
        seed_id = resp.json()["seed_id"]
        settle(store, sid)
        with_ref = client.get(f"/sessions/{sid}/result").json()
        assert with_ref["result"]["snapped_refinements"]
        client.delete(f"/sessions/{sid}/seeds/{seed_id}")
        settle(store, sid)
        doc = client.get(f"/sessions/{sid}/result").json()
        assert doc["result"]["snapped_refinements"] == []

    def test_stale_client_revision_still_increments(self):
        client, _ = make_client()
        sid, _ = create_disc_session(client)
        r1 = client.post(f"/sessions/{sid}/seeds",
                         json={"kind": "primary", "position_mm": [48, 48],
                               "client_revision": 0}).json()["revision"]
        r2 = client.patch(f"/sessions/{sid}/seeds/primary",
                          json={"position_mm": [47, 48],
                                "client_revision": 0}).json()["revision"]
        assert (r1, r2) == (1, 2)

    def test_unknown_seed_id_404(self):
        client, _ = make_client()
        sid, _ = create_disc_session(client)
        assert client.patch(f"/sessions/{sid}/seeds/r9",
                            json={"position_mm": [1, 1]}).status_code == 404

    def test_position_out_of_range_rejected(self):
        client, _ = make_client()
        sid, _ = create_disc_session(client)
        resp = client.post(f"/sessions/{sid}/seeds",
                           json={"kind": "primary", "position_mm": [5000, 0]})
        assert resp.status_code == 400

    def test_isolation_between_sessions(self):
        client, store = make_client()
        sid_a, _ = create_disc_session(client)
        sid_b, _ = create_disc_session(client)
        client.post(f"/sessions/{sid_a}/seeds",
                    json={"kind": "primary", "position_mm": [48, 48]})
        settle(store, sid_a)
        doc_b = client.get(f"/sessions/{sid_b}/result").json()
        assert doc_b["result"] is None


class TestConfig:
    def test_patch_config_triggers_recompute(self):
        client, store = make_client()
        sid, _ = create_disc_session(client)
        client.post(f"/sessions/{sid}/seeds",
                    json={"kind": "primary", "position_mm": [48, 48]})
        settle(store, sid)
        rev = client.patch(f"/sessions/{sid}/config",
                           json={"delta": 0}).json()["revision"]
        assert rev == 2
        settle(store, sid)
        doc = client.get(f"/sessions/{sid}/result").json()
        assert doc["revision"] == 2

    def test_unknown_config_key_rejected(self):
        client, _ = make_client()
        sid, _ = create_disc_session(client)
        assert client.patch(f"/sessions/{sid}/config",
                            json={"wat": 1}).status_code == 400

    def test_invalid_delta_rejected(self):
        client, _ = make_client()
        sid, _ = create_disc_session(client)
        assert client.patch(f"/sessions/{sid}/config",
                            json={"delta": 99}).status_code == 400


class TestResultConvergence:
    def test_burst_converges_to_synchronous_result(self):
        client, store = make_client()
        sid, grid = create_disc_session(client)
        client.post(f"/sessions/{sid}/seeds",
                    json={"kind": "primary", "position_mm": [48, 48]})
        positions = [[48.0 - i * 0.4, 48.0 + i * 0.3] for i in range(1, 11)]
        t0 = time.perf_counter()
        for p in positions:
            client.patch(f"/sessions/{sid}/seeds/primary",
                         json={"position_mm": p})
        burst_s = time.perf_counter() - t0
        session = store.get(sid)
        session.settle()
        base_recomputes = session.recompute_count
        doc = client.get(f"/sessions/{sid}/result").json()
        assert doc["stale"] is False
        assert doc["revision"] == 11
        # bit-identical to a fresh synchronous run on the final state
        cfg = BuildConfig.from_dict(
            {k: v for k, v in session.config.as_dict().items()})
        req = SegmentationRequest(session.grid, session.template,
                                  tuple(positions[-1]), [], cfg)
        expect = segment(req)
        got = session.current_result()
        assert results_equal_modulo_timing(got, expect)
        assert base_recomputes <= 11 + 1  # primary set + 10 moves, coalesced
        assert burst_s < 5.0

    def test_infeasible_refinements_surface_error(self):
        client, store = make_client()
        sid, _ = create_disc_session(client)
        client.post(f"/sessions/{sid}/seeds",
                    json={"kind": "primary", "position_mm": [48, 48]})
        settle(store, sid)
        from raycut.templates import generate_rays

        geom = generate_rays(make_template("circle", 60.0), (48.0, 48.0), 30, 30)
        p1 = geom.positions[3, 2]
        p2 = geom.positions[3, 27]
        client.post(f"/sessions/{sid}/seeds",
                    json={"kind": "refine", "position_mm": list(map(float, p1))})
        client.post(f"/sessions/{sid}/seeds",
                    json={"kind": "refine", "position_mm": list(map(float, p2))})
        settle(store, sid)
        doc = client.get(f"/sessions/{sid}/result").json()
        assert doc["error"]
        # last good result is retained
        assert doc["result"] is not None


class TestSlices:
    def test_image_slice_png(self):
        client, _ = make_client()
        sid, _ = create_disc_session(client)
        resp = client.get(f"/sessions/{sid}/image/slice/0/0")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        from PIL import Image

        img = Image.open(io.BytesIO(resp.content))
        assert img.size == (96, 96)

    def test_slice_out_of_range(self):
        client, _ = make_client()
        sid, _ = create_disc_session(client)
        assert client.get(f"/sessions/{sid}/image/slice/0/5").status_code == 404

    def test_result_slice_outlines(self):
        client, store = make_client()
        sid, _ = create_disc_session(client)
        client.post(f"/sessions/{sid}/seeds",
                    json={"kind": "primary", "position_mm": [48, 48]})
        settle(store, sid)
        doc = client.get(f"/sessions/{sid}/result/slice/0/0").json()
        assert doc["outlines"]
        loop = np.asarray(doc["outlines"][0])
        radii = np.linalg.norm(loop - np.array([48.0, 48.0]), axis=1)
        assert radii.min() > 15 and radii.max() < 25

    def test_3d_session_slices(self):
        import tempfile

        spec = PhantomSpec("sphere", (24.0,) * 3, (10.0,), 200.0, 50.0, 0.0,
                           (48, 48, 48))
        grid, _ = make_phantom(spec, 0)
        with tempfile.NamedTemporaryFile(suffix=".mhd") as tmp:
            save_grid(grid, tmp.name)
            payload = open(tmp.name, "rb").read()
        client, store = make_client()
        resp = client.post("/sessions", json={
            "image_b64": base64.b64encode(payload).decode(),
            "format": "mhd-raw",
            "config": {"delta": 2, "rays": [8, 16], "nodes_per_ray": 16,
                       "mean_radius_mm": 3.0,
                       "template": format_template_doc(
                           make_template("sphere", 30.0))},
        })
        assert resp.status_code == 200, resp.text
        sid = resp.json()["id"]
        client.post(f"/sessions/{sid}/seeds",
                    json={"kind": "primary", "position_mm": [24, 24, 24]})
        settle(store, sid)
        result = client.get(f"/sessions/{sid}/result").json()
        assert "surface" in result["result"]
        for axis in range(3):
            png = client.get(f"/sessions/{sid}/image/slice/{axis}/24")
            assert png.status_code == 200
            doc = client.get(f"/sessions/{sid}/result/slice/{axis}/24").json()
            assert doc["outlines"], f"no outline on axis {axis}"
            loop = np.asarray(doc["outlines"][0])
            center = np.array([24.0, 24.0])
            radii = np.linalg.norm(loop - center, axis=1)
            # equatorial slice through the sphere center: near the radius
            assert 6.0 < radii.mean() < 12.0

    def test_3d_requires_lat_lon_rays(self):
        import tempfile

        spec = PhantomSpec("sphere", (24.0,) * 3, (10.0,), 200.0, 50.0, 0.0,
                           (48, 48, 48))
        grid, _ = make_phantom(spec, 0)
        with tempfile.NamedTemporaryFile(suffix=".mhd") as tmp:
            save_grid(grid, tmp.name)
            payload = open(tmp.name, "rb").read()
        client, _ = make_client()
        resp = client.post("/sessions", json={
            "image_b64": base64.b64encode(payload).decode(),
            "format": "mhd-raw",
            "config": {"rays": 30,
                       "template": format_template_doc(
                           make_template("sphere", 30.0))},
        })
        assert resp.status_code == 400
