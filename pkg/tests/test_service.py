import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from conftest import make_scene, render_run
from vlptrack.config import default_config_dict
from vlptrack.frameio import write_pgm
from vlptrack.service import create_app


def small_config(noise_sigma=0.0, seed=9):
    cfg = default_config_dict(noise_sigma=noise_sigma, seed=seed)
    cfg["scene"]["camera"] = {"focal_length_mm": 4.0,
                              "pixel_pitch_um": [10.0, 10.0],
                              "resolution": [640, 480]}
    cfg["scene"]["trajectory"]["waypoints"] = [[97.0, 95.0, 40.0],
                                               [103.0, 95.0, 40.0]]
    return cfg


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(), raise_server_exceptions=False)


class TestHealth:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"


class TestBatchEndpoints:
    def test_simulate_writes_frames(self, client, tmp_path):
        response = client.post("/simulate", json={
            "config": small_config(), "out_dir": str(tmp_path / "frames")})
        assert response.status_code == 200
        body = response.json()
        pgms = sorted((tmp_path / "frames").glob("frame_*.pgm"))
        assert body["frames_written"] == len(pgms) > 0
        assert (tmp_path / "frames" / "groundtruth.jsonl").exists()
        assert (tmp_path / "frames" / "config.json").exists()

    def test_track_over_simulated_frames(self, client, tmp_path):
        cfg = small_config()
        client.post("/simulate", json={"config": cfg,
                                       "out_dir": str(tmp_path / "f")})
        response = client.post("/track", json={
            "config": cfg, "frames_dir": str(tmp_path / "f")})
        assert response.status_code == 200
        body = response.json()
        assert body["status_counts"].get("fix", 0) > 0
        assert body["mean_proc_ms"] > 0
        lines = open(body["fixes_path"]).read().splitlines()
        assert len(lines) == body["frames"]
        json.loads(lines[0])

    def test_schema_error_names_key(self, client, tmp_path):
        cfg = small_config()
        cfg["scene"]["camera"]["iso"] = 200
        response = client.post("/simulate", json={
            "config": cfg, "out_dir": str(tmp_path / "x")})
        assert response.status_code == 400
        body = response.json()
        assert body["path"] == "scene.camera.iso"

    def test_exactly_one_config_source(self, client, tmp_path):
        response = client.post("/simulate", json={"out_dir": str(tmp_path)})
        assert response.status_code == 422

    def test_bench_minimal_timing_table(self, client, tmp_path):
        response = client.post("/bench", json={
            "config": small_config(),
            "out_dir": str(tmp_path / "rep"),
            "scenarios": {"timing_frames": 10, "occlusion_fractions": [],
                          "heights_cm": []}})
        assert response.status_code == 200
        body = response.json()
        methods = {row["method"] for row in body["comparison"]}
        assert {"pipeline", "baseline_full_frame"} <= methods
        assert (tmp_path / "rep" / "comparison.csv").exists()
        assert (tmp_path / "rep" / "timing" / "pipeline" / "summary.json").exists()

    def test_report_roundtrip(self, client, tmp_path):
        cfg = small_config()
        client.post("/simulate", json={"config": cfg,
                                       "out_dir": str(tmp_path / "f")})
        track = client.post("/track", json={
            "config": cfg, "frames_dir": str(tmp_path / "f")}).json()
        response = client.post("/report", json={
            "config": cfg,
            "fixes_path": track["fixes_path"],
            "groundtruth_path": str(tmp_path / "f" / "groundtruth.jsonl"),
            "out_dir": str(tmp_path / "rep")})
        assert response.status_code == 200
        assert (tmp_path / "rep" / "summary.json").exists()


class TestSessions:
    def test_streaming_session(self, client):
        created = client.post("/sessions", json={"config": small_config()})
        assert created.status_code == 200
        sid = created.json()["session_id"]

        scene = make_scene(noise_sigma=0.0)
        frames, truths = render_run(scene, 4)
        last = None
        for frame, truth in zip(frames, truths):
            import io
            buf = io.BytesIO()
            header = f"P5\n{frame.width} {frame.height}\n255\n".encode()
            buf.write(header)
            buf.write(frame.pixels.tobytes())
            response = client.post(
                f"/sessions/{sid}/frames", content=buf.getvalue(),
                headers={"content-type": "application/octet-stream"})
            assert response.status_code == 200
            last = response.json()
            assert last["status"] == "fix"
        state = client.get(f"/sessions/{sid}").json()
        assert state["frames_processed"] == 4
        assert state["slot_status"] == {"1": "tracking", "2": "tracking"}
        assert state["last_fix"]["frame"] == last["frame"]

        closed = client.delete(f"/sessions/{sid}").json()
        assert closed["frames_processed"] == 4
        assert client.get(f"/sessions/{sid}").status_code == 400

    def test_bad_frame_body_rejected(self, client):
        sid = client.post("/sessions",
                          json={"config": small_config()}).json()["session_id"]
        response = client.post(f"/sessions/{sid}/frames", content=b"garbage")
        assert response.status_code == 400

    def test_unknown_session(self, client):
        assert client.get("/sessions/deadbeef").status_code == 400


class TestLiveServer:
    def test_remote_client_against_uvicorn(self, tmp_path):
        # run the real server in a thread and drive it through the CLI's
        # --server path
        import socket
        import threading
        import time

        import uvicorn

        from vlptrack.cli import ServiceClient

        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        config = uvicorn.Config(create_app(), host="127.0.0.1", port=port,
                                log_level="error")
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        try:
            deadline = time.time() + 10
            while not server.started:
                if time.time() > deadline:
                    pytest.skip("server did not start in this environment")
                time.sleep(0.05)
            remote = ServiceClient(f"http://127.0.0.1:{port}")
            assert remote.get("/health")["status"] == "ok"
            body = remote.post("/simulate", {
                "config": small_config(), "out_dir": str(tmp_path / "f"),
                "limit_frames": 2})
            assert body["frames_written"] == 2
        finally:
            server.should_exit = True
            thread.join(timeout=5)
