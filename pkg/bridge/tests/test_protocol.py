import base64
import io
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from xpose_bridge.app import create_app
from xpose_bridge.config import BridgeConfig
from xpose_bridge.model import MarkerCardModel, detect_marker_x, make_marker_card


def encode_b64(arr):
    buf = io.BytesIO()
    Image.fromarray(np.asarray(arr, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_b64(text):
    raw = base64.b64decode(text)
    with Image.open(io.BytesIO(raw)) as im:
        return np.asarray(im.convert("RGB"))


def wait_ready(client, timeout=5.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        if client.get("/v1/health").status_code == 200:
            return
        time.sleep(0.01)
    raise TimeoutError("model never became ready")


def valid_request(n_views=3):
    # azimuths small enough that marker shifts stay inside the card
    return {
        "image_png_b64": encode_b64(make_marker_card(128)),
        "views": [
            {"d_azimuth_deg": 5.0 * (k + 1), "d_elevation_deg": -2.0 * k}
            for k in range(n_views)
        ],
        "steps": 50,
        "seed": 1,
    }


@pytest.fixture
def client():
    app = create_app(MarkerCardModel(), BridgeConfig())
    with TestClient(app) as c:
        wait_ready(c)
        yield c


class TestLoadingState:
    def test_health_503_before_load_completes(self):
        gate = threading.Event()
        app = create_app(MarkerCardModel(), BridgeConfig(), defer_load=gate)
        with TestClient(app) as c:
            resp = c.get("/v1/health")
            assert resp.status_code == 503
            assert "error" in resp.json()
            resp = c.post("/v1/generate", json=valid_request(1))
            assert resp.status_code == 503
            gate.set()
            wait_ready(c)
            resp = c.get("/v1/health")
            assert resp.status_code == 200
            assert resp.json()["status"] == "ok"
            assert resp.json()["model"] == "mock-marker/1"


class TestGenerate:
    def test_count_and_order(self, client):
        req = valid_request(5)
        resp = client.post("/v1/generate", json=req)
        assert resp.status_code == 200
        images = resp.json()["images_png_b64"]
        assert len(images) == 5
        # marker positions follow the requested azimuths in request order
        xs = [detect_marker_x(decode_b64(b)) for b in images]
        expected_order = np.argsort([-v["d_azimuth_deg"] for v in req["views"]])
        assert list(np.argsort(xs)) == list(expected_order)

    def test_byte_identical_repeat(self, client):
        req = valid_request(2)
        a = client.post("/v1/generate", json=req)
        b = client.post("/v1/generate", json=req)
        assert a.content == b.content

    def test_chunking_preserves_count(self):
        app = create_app(MarkerCardModel(), BridgeConfig(max_batch=2))
        with TestClient(app) as c:
            wait_ready(c)
            resp = c.post("/v1/generate", json=valid_request(5))
            assert resp.status_code == 200
            assert len(resp.json()["images_png_b64"]) == 5

    def test_resolution_matches_input(self, client):
        req = valid_request(1)
        resp = client.post("/v1/generate", json=req)
        img = decode_b64(resp.json()["images_png_b64"][0])
        assert img.shape == (128, 128, 3)


class TestErrorPaths:
    def test_malformed_json_400(self, client):
        resp = client.post(
            "/v1/generate",
            content=b"{not json",
            headers={"Content-Type": "application/json"},
        )
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_bad_base64_400(self, client):
        req = valid_request(1)
        req["image_png_b64"] = "@@@not-base64@@@"
        resp = client.post("/v1/generate", json=req)
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_missing_field_400(self, client):
        req = valid_request(1)
        del req["views"]
        resp = client.post("/v1/generate", json=req)
        assert resp.status_code == 400

    def test_empty_views_400(self, client):
        req = valid_request(1)
        req["views"] = []
        resp = client.post("/v1/generate", json=req)
        assert resp.status_code == 400

    def test_bad_steps_400(self, client):
        req = valid_request(1)
        req["steps"] = 0
        resp = client.post("/v1/generate", json=req)
        assert resp.status_code == 400

    def test_out_of_range_azimuth_422(self, client):
        req = valid_request(1)
        req["views"][0]["d_azimuth_deg"] = 720.0
        resp = client.post("/v1/generate", json=req)
        assert resp.status_code == 422
        assert "d_azimuth_deg" in resp.json()["error"]

    def test_out_of_range_elevation_422(self, client):
        req = valid_request(1)
        req["views"][0]["d_elevation_deg"] = -91.0
        resp = client.post("/v1/generate", json=req)
        assert resp.status_code == 422
        assert "d_elevation_deg" in resp.json()["error"]


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            BridgeConfig(port=0)
        with pytest.raises(ValueError):
            BridgeConfig(max_batch=0)
        with pytest.raises(ValueError):
            BridgeConfig(checkpoint="/definitely/not/here.ckpt")
        with pytest.raises(ValueError):
            BridgeConfig(azimuth_sign=2)

    def test_azimuth_remap_applied(self):
        # a sign-flipped config must cancel a sign-flipped model
        app = create_app(
            MarkerCardModel(azimuth_sign=-1), BridgeConfig(azimuth_sign=-1)
        )
        reference = create_app(MarkerCardModel(), BridgeConfig())
        req = valid_request(1)
        with TestClient(app) as c1, TestClient(reference) as c2:
            wait_ready(c1)
            wait_ready(c2)
            a = c1.post("/v1/generate", json=req).json()["images_png_b64"][0]
            b = c2.post("/v1/generate", json=req).json()["images_png_b64"][0]
        assert np.array_equal(decode_b64(a), decode_b64(b))
