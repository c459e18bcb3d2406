import json
import struct
import zlib

import numpy as np
import pytest

from smoj.animation import BlendTimeline, save_timeline
from smoj.assets import FACS_CHANNELS, load_asset, save_asset
from smoj.cli import EXIT_OK, EXIT_PARSE, EXIT_RUNTIME, EXIT_USAGE, EXIT_VALIDATION, main
from smoj.rendering import load_buffer
from smoj.synthetic import random_asset


@pytest.fixture
def asset_path(tmp_path, rng):
    path = tmp_path / "avatar.smoj"
    save_asset(random_asset(rng, 20), path)
    return path


def corrupt_opacity(path, value=1.5):
    """Patch the first rest-pose opacity in place, keeping the CRC valid."""
    blob = bytearray(path.read_bytes())
    names = sum(2 + len(c.encode()) for c in FACS_CHANNELS)
    payload_start = 20 + names
    m = struct.unpack_from("<I", blob, 8)[0]
    opacity_off = payload_start + (3 + 3 + 4 + 3) * m * 4
    struct.pack_into("<f", blob, opacity_off, value)
    struct.pack_into("<I", blob, len(blob) - 4,
                     zlib.crc32(bytes(blob[payload_start:-4])) & 0xFFFFFFFF)
    path.write_bytes(blob)


def test_inspect_valid(asset_path, capsys):
    assert main(["inspect", "--asset", str(asset_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "splats: 20" in out
    for name in FACS_CHANNELS:
        assert name in out
    assert "validation: ok" in out


def test_inspect_corrupted_magic(asset_path, capsys):
    blob = bytearray(asset_path.read_bytes())
    blob[1] = 0
    asset_path.write_bytes(blob)
    assert main(["inspect", "--asset", str(asset_path)]) == EXIT_PARSE
    assert "offset 0" in capsys.readouterr().err


def test_inspect_range_violation(asset_path, capsys):
    corrupt_opacity(asset_path)
    assert main(["inspect", "--asset", str(asset_path)]) == EXIT_VALIDATION
    assert "opacity-range" in capsys.readouterr().out


def test_usage_error_exit_code():
    assert main(["render"]) == EXIT_USAGE  # missing --asset
    assert main(["no-such-command"]) == EXIT_USAGE


def test_render_frontal(asset_path, tmp_path):
    out = tmp_path / "views"
    assert main(["render", "--asset", str(asset_path), "--out", str(out),
                 "--width", "48", "--height", "40"]) == EXIT_OK
    assert (out / "view_000.png").exists()
    rgb = load_buffer(out / "view_000.rgb.smim")
    assert rgb.shape == (40, 48, 3)
    assert (out / "cameras.txt").exists()


def test_render_turntable_writes_views_and_cameras(asset_path, tmp_path):
    out = tmp_path / "tt"
    assert main(["render", "--asset", str(asset_path), "--out", str(out),
                 "--width", "32", "--height", "32", "--turntable", "10"]) == EXIT_OK
    for i in range(10):
        assert (out / f"view_{i:03d}.png").exists()
    lines = (out / "cameras.txt").read_text().strip().splitlines()
    assert len(lines) == 10


def test_render_2dgs_emits_normals(asset_path, tmp_path):
    out = tmp_path / "n"
    assert main(["render", "--asset", str(asset_path), "--out", str(out),
                 "--width", "32", "--height", "32", "--mode", "2dgs"]) == EXIT_OK
    normal = load_buffer(out / "view_000.normal.smim")
    assert normal.shape == (32, 32, 3)


def test_animate_zero_timeline_matches_rest(asset_path, tmp_path):
    tl_path = tmp_path / "zero.csv"
    tl = BlendTimeline(times=[0.0, 0.2], weights=np.zeros((2, 16)))
    save_timeline(tl_path, tl, FACS_CHANNELS)
    frames = tmp_path / "frames"
    assert main(["animate", "--asset", str(asset_path), "--timeline", str(tl_path),
                 "--out", str(frames), "--fps", "10", "--width", "32",
                 "--height", "32"]) == EXIT_OK
    rest_dir = tmp_path / "rest"
    main(["render", "--asset", str(asset_path), "--out", str(rest_dir),
          "--width", "32", "--height", "32"])
    rest_rgb = load_buffer(rest_dir / "view_000.rgb.smim")
    for i in range(3):
        frame = load_buffer(frames / f"frame_{i:04d}.rgb.smim")
        assert np.array_equal(frame, rest_rgb)
    assert (frames / "timing.json").exists()


def test_animate_channel_mismatch(asset_path, tmp_path):
    tl_path = tmp_path / "bad.csv"
    names = ["ch%d" % i for i in range(16)]
    save_timeline(tl_path, BlendTimeline(times=[0.0], weights=np.zeros((1, 16))), names)
    assert main(["animate", "--asset", str(asset_path), "--timeline", str(tl_path),
                 "--out", str(tmp_path / "x")]) == EXIT_VALIDATION


def test_fit_round_trip(asset_path, tmp_path):
    targets = tmp_path / "targets"
    main(["render", "--asset", str(asset_path), "--out", str(targets),
          "--width", "32", "--height", "32", "--turntable", "2"])
    out = tmp_path / "fit"
    code = main(["fit", "--targets", str(targets), "--init-asset", str(asset_path),
                 "--iterations", "3", "--out", str(out), "--width", "32",
                 "--height", "32"])
    assert code == EXIT_OK
    fitted = load_asset(out / "fitted.smoj")
    assert fitted.m == 20 and fitted.k == 0
    log = (out / "fitted.log").read_text().strip().splitlines()
    assert log[0] == "iter,total,render,normal,dist"
    assert len(log) == 4
    history = json.loads((out / "fitted.history.json").read_text())
    assert len(history["history"]) == 3
    assert len(history["psnr_per_view"]) == 2


def test_fit_zero_iterations_identity(asset_path, tmp_path):
    targets = tmp_path / "targets"
    main(["render", "--asset", str(asset_path), "--out", str(targets),
          "--width", "24", "--height", "24", "--turntable", "1"])
    out = tmp_path / "fit0"
    assert main(["fit", "--targets", str(targets), "--init-asset", str(asset_path),
                 "--iterations", "0", "--out", str(out), "--width", "24",
                 "--height", "24"]) == EXIT_OK
    fitted = load_asset(out / "fitted.smoj")
    init = load_asset(asset_path)
    assert fitted.rest.allclose(init.rest)


def test_fit_missing_cameras(asset_path, tmp_path):
    assert main(["fit", "--targets", str(tmp_path / "nope"),
                 "--init-asset", str(asset_path), "--out", str(tmp_path / "y")]) \
        == EXIT_PARSE


def test_bench_schema(asset_path, capsys):
    assert main(["bench", "--asset", str(asset_path), "--resolutions", "32x32,64x64",
                 "--counts", "200", "--seconds", "0.1"]) == EXIT_OK
    table = json.loads(capsys.readouterr().out)
    assert len(table["cells"]) == 2
    for cell in table["cells"]:
        assert cell["fps"] > 0
        assert cell["frames"] >= 5
        assert set(cell) >= {"width", "height", "m", "blend_ms", "render_ms", "fps"}
    assert "floor" not in table  # floor cell not measured at this size


def test_env_beats_flags(asset_path, tmp_path, monkeypatch):
    out = tmp_path / "envtest"
    monkeypatch.setenv("SMOJ_WIDTH", "24")
    assert main(["render", "--asset", str(asset_path), "--out", str(out),
                 "--width", "64", "--height", "24"]) == EXIT_OK
    rgb = load_buffer(out / "view_000.rgb.smim")
    assert rgb.shape == (24, 24, 3)


def test_flags_beat_config_file(asset_path, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"width": 16, "height": 16}))
    out = tmp_path / "cfgtest"
    assert main(["render", "--asset", str(asset_path), "--out", str(out),
                 "--config", str(cfg), "--width", "32"]) == EXIT_OK
    rgb = load_buffer(out / "view_000.rgb.smim")
    # width from the flag, height from the config file
    assert rgb.shape == (16, 32, 3)


def test_stylize_subcommand(asset_path, tmp_path):
    from smoj.stylizer import run_mock_server

    view = tmp_path / "v"
    main(["render", "--asset", str(asset_path), "--out", str(view),
          "--width", "24", "--height", "24"])
    out_png = tmp_path / "styled.png"
    with run_mock_server(mode="echo") as server:
        code = main(["stylize", "--image", str(view / "view_000.png"),
                     "--endpoint", server.endpoint, "--prompt", "marble",
                     "--out", str(out_png)])
    assert code == EXIT_OK
    assert out_png.read_bytes() == (view / "view_000.png").read_bytes()


def test_stylize_failure_exit(asset_path, tmp_path):
    from smoj.stylizer import run_mock_server

    view = tmp_path / "v"
    main(["render", "--asset", str(asset_path), "--out", str(view),
          "--width", "16", "--height", "16"])
    with run_mock_server(mode="fail") as server:
        code = main(["stylize", "--image", str(view / "view_000.png"),
                     "--endpoint", server.endpoint, "--prompt", "x",
                     "--out", str(tmp_path / "o.png")])
    assert code == EXIT_RUNTIME
