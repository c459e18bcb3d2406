import threading
import time

import numpy as np
import pytest

from smoj.stylizer import (
    MockStylizerServer,
    ServiceError,
    StylizeRequest,
    StylizeTimeout,
    apply_tint,
    decode_params,
    encode_params,
    run_mock_server,
    stylize,
)


def make_request(rng, size=24, prompt="lego style", **kw):
    rgb = rng.random((size, size, 3))
    return StylizeRequest.from_array(rgb, prompt=prompt, **kw)


def test_request_validation(rng):
    with pytest.raises(ValueError, match="prompt"):
        make_request(rng, prompt="")
    with pytest.raises(ValueError, match="style_strength"):
        make_request(rng, style_strength=1.5)
    with pytest.raises(ValueError, match="timeout"):
        make_request(rng, timeout=0)


def test_params_roundtrip(rng):
    req = make_request(rng, style_strength=0.25, edge_preservation=0.75,
                       identity_consistency=0.125, timeout=7.0)
    text = encode_params(req)
    again = decode_params(text, req.image_png, timeout=req.timeout)
    assert again == req


def test_echo_mode(rng):
    req = make_request(rng)
    with run_mock_server(mode="echo") as server:
        resp = stylize(req, server.endpoint)
    assert resp.image_png == req.image_png
    assert resp.metadata["X-Service-Mode"] == "echo"
    assert resp.latency >= 0


def test_tint_strength_zero_identity(rng):
    import io

    from PIL import Image

    req = make_request(rng, style_strength=0.0)
    with run_mock_server(mode="tint") as server:
        resp = stylize(req, server.endpoint)
    orig = np.asarray(Image.open(io.BytesIO(req.image_png)).convert("RGB"))
    out = np.asarray(Image.open(io.BytesIO(resp.image_png)).convert("RGB"))
    assert np.array_equal(orig, out)


def test_tint_strength_one_matches_formula(rng):
    import io

    from PIL import Image

    req = make_request(rng, style_strength=1.0)
    with run_mock_server(mode="tint") as server:
        resp = stylize(req, server.endpoint)
    orig = np.asarray(Image.open(io.BytesIO(req.image_png)).convert("RGB"))
    out = np.asarray(Image.open(io.BytesIO(resp.image_png)).convert("RGB"))
    assert np.array_equal(out, apply_tint(orig, 1.0))


def test_fail_mode(rng):
    req = make_request(rng)
    with run_mock_server(mode="fail") as server:
        with pytest.raises(ServiceError) as e:
            stylize(req, server.endpoint)
    assert e.value.status == 500


def test_slow_mode_times_out(rng):
    req = make_request(rng, timeout=1.0)
    with run_mock_server(mode="slow", slow_seconds=5.0) as server:
        start = time.monotonic()
        with pytest.raises(StylizeTimeout):
            stylize(req, server.endpoint)
        elapsed = time.monotonic() - start
    # never blocks past the timeout by more than 10%
    assert elapsed <= 1.1 * req.timeout


def test_concurrent_requests_independent(rng):
    with run_mock_server(mode="tint") as server:
        reqs = [make_request(np.random.default_rng(i), style_strength=1.0)
                for i in range(2)]
        results = [None, None]

        def go(i):
            results[i] = stylize(reqs[i], server.endpoint)

        threads = [threading.Thread(target=go, args=(i,)) for i in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    assert results[0].image_png != results[1].image_png
    for i in range(2):
        import io

        from PIL import Image

        orig = np.asarray(Image.open(io.BytesIO(reqs[i].image_png)).convert("RGB"))
        out = np.asarray(Image.open(io.BytesIO(results[i].image_png)).convert("RGB"))
        assert np.array_equal(out, apply_tint(orig, 1.0))


def test_port_busy():
    with run_mock_server() as server:
        with pytest.raises(OSError):
            MockStylizerServer(port=server.port)


def test_unknown_mode():
    with pytest.raises(ValueError):
        run_mock_server(mode="chaotic")
