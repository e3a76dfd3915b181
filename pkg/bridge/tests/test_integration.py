"""Round trip through a real socket using the estimator package's client,
exercising the wire protocol exactly as the primary consumes it."""

import socket
import threading
import time

import pytest

uvicorn = pytest.importorskip("uvicorn")
xpose_viewgen = pytest.importorskip("xpose.viewgen")

from xpose_bridge.app import create_app
from xpose_bridge.config import BridgeConfig
from xpose_bridge.model import MarkerCardModel, detect_marker_x, make_marker_card


@pytest.fixture(scope="module")
def live_endpoint():
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    app = create_app(MarkerCardModel(), BridgeConfig(port=port))
    server = uvicorn.Server(
        uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    endpoint = f"http://127.0.0.1:{port}"
    while time.time() < deadline:
        try:
            xpose_viewgen.check_health(endpoint)
            break
        except Exception:
            time.sleep(0.05)
    yield endpoint
    server.should_exit = True
    thread.join(timeout=5)


def test_health_through_client(live_endpoint):
    doc = xpose_viewgen.check_health(live_endpoint)
    assert doc["status"] == "ok"


def test_generate_through_client(live_endpoint):
    card = make_marker_card(128)
    request = xpose_viewgen.ViewRequest(card, ((20.0, 0.0), (-20.0, 0.0)), 50, 3)
    images = xpose_viewgen.diffusion_client_generate(request, live_endpoint)
    assert len(images) == 2
    x_plus = detect_marker_x(images[0])
    x_minus = detect_marker_x(images[1])
    assert x_plus < x_minus  # canonical: +azimuth moves the marker left


def test_protocol_error_through_client(live_endpoint):
    card = make_marker_card(64)
    request = xpose_viewgen.ViewRequest(card, ((0.0, 200.0),), 50, 0)
    with pytest.raises(xpose_viewgen.GeneratorFailure) as err:
        xpose_viewgen.diffusion_client_generate(request, live_endpoint)
    assert err.value.kind == "http_status"
    assert "422" in str(err.value)
