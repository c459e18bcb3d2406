import pytest
from starlette.testclient import TestClient

from smoj.assets import save_asset
from smoj.server import create_app, parse_drive_frame
from smoj.synthetic import random_asset


@pytest.fixture
def client(tmp_path, rng):
    path = tmp_path / "a.smoj"
    save_asset(random_asset(rng, 8), path)
    app = create_app(path)
    with TestClient(app) as c:
        c.asset_path = path
        yield c


def test_asset_bytes_served(client):
    resp = client.get("/asset.smoj")
    assert resp.status_code == 200
    assert resp.content == client.asset_path.read_bytes()


def test_index_fallback_page(client):
    resp = client.get("/")
    assert resp.status_code == 200
    assert "asset.smoj" in resp.text


def test_drive_frame_parser():
    vals = parse_drive_frame(" ".join(str(i / 16) for i in range(16)))
    assert len(vals) == 16
    with pytest.raises(ValueError):
        parse_drive_frame("0.1 0.2")
    with pytest.raises(ValueError):
        parse_drive_frame(" ".join(["x"] * 16))


def test_drive_broadcast_to_viewers(client):
    frame = " ".join(f"{i / 16:.3f}" for i in range(16))
    with client.websocket_connect("/viewers") as viewer1, \
            client.websocket_connect("/viewers") as viewer2, \
            client.websocket_connect("/drive") as driver:
        driver.send_text(frame)
        assert viewer1.receive_text() == frame
        assert viewer2.receive_text() == frame


def test_malformed_frame_error_connection_stays(client):
    good = " ".join(["0.5"] * 16)
    with client.websocket_connect("/viewers") as viewer, \
            client.websocket_connect("/drive") as driver:
        driver.send_text("not a frame")
        err = driver.receive_text()
        assert err.startswith("error:")
        # connection still works afterwards
        driver.send_text(good)
        assert viewer.receive_text() == good


def test_static_without_viewer_dir(client):
    assert client.get("/static/app.js").status_code == 404


def test_static_with_viewer_dir(tmp_path, rng):
    path = tmp_path / "a.smoj"
    save_asset(random_asset(rng, 3), path)
    vd = tmp_path / "dist"
    vd.mkdir()
    (vd / "index.html").write_text("<html>viewer</html>")
    (vd / "app.js").write_text("console.log('hi')")
    app = create_app(path, viewer_dir=vd)
    with TestClient(app) as c:
        assert "viewer" in c.get("/").text
        assert c.get("/static/app.js").status_code == 200
        assert c.get("/static/../a.smoj").status_code == 404
