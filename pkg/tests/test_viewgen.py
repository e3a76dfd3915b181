import json
import os
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
import requests

from xpose.errors import GeneratorFailure
from xpose.geom import (
    SphericalViewpoint,
    distance_for_inscribed_sphere,
    viewpoint_to_pose,
)
from xpose.imutil import to_gray
from xpose.mockserver import MockBridgeServer
from xpose.pngio import decode_png_b64, encode_png_b64
from xpose.viewgen import (
    ENDPOINT_ENV_VAR,
    GeneratedViewSet,
    MockGenerator,
    ViewRequest,
    build_reference_set,
    check_health,
    decode_test_card,
    diffusion_client_generate,
    make_test_card,
    resolve_endpoint,
)

FIXTURE = os.path.join(os.path.dirname(__file__), "fixtures", "golden_generate.json")


class _CannedHandler(BaseHTTPRequestHandler):
    """Stub server returning whatever its class attributes say."""

    status = 200
    body = b"{}"

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        self.rfile.read(length)
        self.send_response(self.status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(self.body)))
        self.end_headers()
        self.wfile.write(self.body)

    def log_message(self, *args):
        pass


@pytest.fixture
def canned_server():
    server = HTTPServer(("127.0.0.1", 0), _CannedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}", _CannedHandler
    server.shutdown()
    server.server_close()


class TestRequestTypes:
    def test_view_request_validation(self):
        img = np.zeros((32, 32, 3), np.uint8)
        with pytest.raises(ValueError):
            ViewRequest(img, (), 50, 0)
        with pytest.raises(ValueError):
            ViewRequest(img, ((0.0, 0.0),), 0, 0)

    def test_view_set_validation(self, square_intrinsics):
        d = distance_for_inscribed_sphere(square_intrinsics)
        vp = SphericalViewpoint(0.0, 30.0, 0.0, d)
        img = np.zeros((4, 4, 3), np.uint8)
        with pytest.raises(ValueError):
            GeneratedViewSet((img,), (vp, vp), (viewpoint_to_pose(vp),), square_intrinsics)
        wrong_pose = viewpoint_to_pose(SphericalViewpoint(10.0, 30.0, 0.0, d))
        with pytest.raises(ValueError):
            GeneratedViewSet((img,), (vp,), (wrong_pose,), square_intrinsics)


class TestBuildReferenceSet:
    def test_oracle_set_invariants(self, square_intrinsics, oracle_setup):
        _asset, oracle, image, _mask = oracle_setup
        orientation = type("H", (), {"elevation_deg": 30.0})
        refset = build_reference_set(image, orientation, square_intrinsics, 8, oracle)
        assert len(refset) == 9  # 8 generated + the rectified input
        d = distance_for_inscribed_sphere(square_intrinsics)
        assert all(vp.distance == pytest.approx(d) for vp in refset.viewpoints)
        assert refset.viewpoints[-1].azimuth_deg == 0.0
        assert refset.viewpoints[-1].elevation_deg == 30.0
        assert np.array_equal(refset.images[-1], image)

    def test_single_view_zero_delta_matches_input(self, square_intrinsics, oracle_setup):
        _asset, oracle, image, _mask = oracle_setup
        # n=1 hemisphere sample sits at azimuth 0, elevation asin(0.5) = 30 deg,
        # so an orientation estimate of 30 deg makes the only delta (0, 0).
        orientation = type("H", (), {"elevation_deg": 30.0})
        refset = build_reference_set(image, orientation, square_intrinsics, 1, oracle)
        gen = refset.images[0]
        a = to_gray(gen) - to_gray(gen).mean()
        b = to_gray(image) - to_gray(image).mean()
        ncc = float((a * b).sum() / (np.linalg.norm(a) * np.linalg.norm(b)))
        assert ncc > 0.99

    def test_full_size_set_invariants(self, square_intrinsics, oracle_setup):
        _asset, oracle, image, _mask = oracle_setup
        orientation = type("H", (), {"elevation_deg": 30.0})
        refset = build_reference_set(image, orientation, square_intrinsics, 128, oracle)
        assert len(refset) == 129  # construction re-validates the pose invariant

    def test_determinism(self, square_intrinsics, oracle_setup):
        _asset, oracle, image, _mask = oracle_setup
        orientation = type("H", (), {"elevation_deg": 25.0})
        a = build_reference_set(image, orientation, square_intrinsics, 4, oracle, seed=3)
        b = build_reference_set(image, orientation, square_intrinsics, 4, oracle, seed=3)
        for ia, ib in zip(a.images, b.images):
            assert np.array_equal(ia, ib)


class TestMockGenerator:
    def test_cards_stamp_deltas(self):
        img = np.zeros((128, 128, 3), np.uint8)
        req = ViewRequest(img, ((30.0, -15.0), (0.0, 10.0), (200.0, 0.0)), 50, 1)
        cards = MockGenerator().generate(req)
        assert len(cards) == 3
        for card, (d_az, d_el) in zip(cards, req.deltas):
            az, el = decode_test_card(card)
            assert abs(az - d_az % 360.0) <= 2.0
            assert abs(el - d_el) <= 2.0
        assert not np.array_equal(cards[0], cards[1])

    def test_matches_card_builder(self):
        img = np.zeros((64, 64, 3), np.uint8)
        card = MockGenerator().generate(ViewRequest(img, ((12.0, 3.0),), 1, 0))[0]
        assert np.array_equal(card, make_test_card(64, 12.0, 3.0))


class TestClient:
    def test_golden_fixture_round_trip(self):
        with open(FIXTURE) as fh:
            doc = json.load(fh)
        req = doc["request"]
        # the recorded response must decode into exactly the mock's cards
        size = decode_png_b64(req["image_png_b64"]).shape[0]
        for encoded, view in zip(doc["response"]["images_png_b64"], req["views"]):
            img = decode_png_b64(encoded)
            expected = make_test_card(size, view["d_azimuth_deg"], view["d_elevation_deg"])
            assert np.array_equal(img, expected)
        # a live mock server answers the recorded request with the recorded images
        with MockBridgeServer() as srv:
            resp = requests.post(srv.endpoint + "/v1/generate", json=req, timeout=30)
            assert resp.status_code == 200
            live = resp.json()["images_png_b64"]
            assert len(live) == len(doc["response"]["images_png_b64"])
            for a, b in zip(live, doc["response"]["images_png_b64"]):
                assert np.array_equal(decode_png_b64(a), decode_png_b64(b))

    def test_client_against_mock_server(self):
        img = np.full((96, 96, 3), 100, np.uint8)
        req = ViewRequest(img, ((45.0, 5.0), (-30.0, -20.0)), 50, 2)
        with MockBridgeServer() as srv:
            out = diffusion_client_generate(req, srv.endpoint)
            local = MockGenerator().generate(req)
        assert len(out) == 2
        for a, b in zip(out, local):
            assert np.array_equal(a, b)

    def test_health_check(self):
        with MockBridgeServer() as srv:
            doc = check_health(srv.endpoint)
        assert doc["status"] == "ok"
        assert "model" in doc

    def test_http_error_maps_to_failure(self):
        img = np.zeros((16, 16, 3), np.uint8)
        with MockBridgeServer() as srv:
            bad = {"image_png_b64": "@@@", "views": [{"d_azimuth_deg": 0, "d_elevation_deg": 0}], "steps": 1, "seed": 0}
            resp = requests.post(srv.endpoint + "/v1/generate", json=bad, timeout=30)
            assert resp.status_code == 400
            assert "error" in resp.json()
            with pytest.raises(GeneratorFailure) as err:
                diffusion_client_generate(
                    ViewRequest(img, ((0.0, 0.0),), 1, 0), srv.endpoint + "/missing"
                )
            assert err.value.kind == "http_status"

    def test_count_mismatch(self, canned_server):
        endpoint, handler = canned_server
        img = np.zeros((16, 16, 3), np.uint8)
        handler.status = 200
        handler.body = json.dumps(
            {"images_png_b64": [encode_png_b64(make_test_card(16, 0, 0))]}
        ).encode()
        with pytest.raises(GeneratorFailure) as err:
            diffusion_client_generate(
                ViewRequest(img, ((0.0, 0.0), (1.0, 0.0)), 1, 0), endpoint
            )
        assert err.value.kind == "count_mismatch"

    def test_decode_failure(self, canned_server):
        endpoint, handler = canned_server
        img = np.zeros((16, 16, 3), np.uint8)
        handler.status = 200
        handler.body = json.dumps({"images_png_b64": ["!!!not-base64"]}).encode()
        with pytest.raises(GeneratorFailure) as err:
            diffusion_client_generate(ViewRequest(img, ((0.0, 0.0),), 1, 0), endpoint)
        assert err.value.kind == "decode"

    def test_server_error_body_carried(self, canned_server):
        endpoint, handler = canned_server
        img = np.zeros((16, 16, 3), np.uint8)
        handler.status = 400
        handler.body = json.dumps({"error": "deltas out of range"}).encode()
        with pytest.raises(GeneratorFailure) as err:
            diffusion_client_generate(ViewRequest(img, ((0.0, 0.0),), 1, 0), endpoint)
        assert err.value.kind == "http_status"
        assert "deltas out of range" in str(err.value)

    def test_unreachable_endpoint(self):
        img = np.zeros((16, 16, 3), np.uint8)
        with pytest.raises(GeneratorFailure):
            diffusion_client_generate(
                ViewRequest(img, ((0.0, 0.0),), 1, 0),
                "http://127.0.0.1:9",
                timeout=2.0,
            )


def test_endpoint_resolution(monkeypatch):
    monkeypatch.delenv(ENDPOINT_ENV_VAR, raising=False)
    assert resolve_endpoint("http://a") == "http://a"
    assert resolve_endpoint(None) is None
    monkeypatch.setenv(ENDPOINT_ENV_VAR, "http://env")
    assert resolve_endpoint("http://a") == "http://env"
