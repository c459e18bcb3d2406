"""Operator command line: inspect, render, animate, fit, bench, stylize, serve.

Option values resolve with precedence env > flags > config file > defaults:
an SMOJ_<NAME> environment variable beats an explicit flag, which beats the
--config JSON file, which beats built-in defaults.

Exit codes: 0 success, 1 usage, 2 parse error, 3 validation failure,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import server
from .animation import blend, load_timeline
from .assets import (
    AvatarAsset,
    InvalidAssetError,
    SmojParseError,
    component_deltas,
    load_asset,
    load_cameras,
    save_asset,
    save_cameras,
    validate_asset,
)
from .fitting import FitConfig, FitDiverged, fit
from .losses import LossWeights
from .rendering import (
    RenderConfig,
    load_buffer,
    render,
    render_turntable,
    save_render,
)
from .stylizer import StylizeRequest, StylizerError, stylize
from .synthetic import frontal_camera, resize_asset

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

ENV_PREFIX = "SMOJ_"

DEFAULTS = {
    "out": "out",
    "mode": "3dgs",
    "width": 512,
    "height": 512,
    "turntable": 0,
    "fps": 30.0,
    "iterations": 2000,
    "seed": 0,
    "port": 8000,
    "resolutions": "256x256",
    "counts": "10000",
    "seconds": 1.5,
    "strength": 0.5,
    "edge": 0.5,
    "identity": 0.5,
    "timeout": 30.0,
}


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _Usage(message)


class Settings:
    """Layered option lookup: env > flag > config file > default."""

    def __init__(self, args: argparse.Namespace):
        self.flags = vars(args)
        self.file = {}
        cfg_path = self._env("config") or self.flags.get("config")
        if cfg_path:
            with open(cfg_path) as f:
                self.file = json.load(f)

    @staticmethod
    def _env(name: str):
        return os.environ.get(ENV_PREFIX + name.upper())

    def get(self, name: str, cast=None):
        default = DEFAULTS.get(name)
        cast = cast or (type(default) if default is not None else str)
        env = self._env(name)
        if env is not None:
            return cast(env)
        flag = self.flags.get(name)
        if flag is not None:
            return flag
        if name in self.file:
            return cast(self.file[name])
        return default


def build_parser() -> _Parser:
    p = _Parser(prog="smoj", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *names):
        if "asset" in names:
            sp.add_argument("--asset", required=False)
        if "out" in names:
            sp.add_argument("--out")
        if "render" in names:
            sp.add_argument("--mode", choices=["3dgs", "2dgs"])
            sp.add_argument("--width", type=int)
            sp.add_argument("--height", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--config")

    sp = sub.add_parser("inspect", help="print asset structure and validation report")
    common(sp, "asset")

    sp = sub.add_parser("render", help="render the rest pose (optionally a turntable)")
    common(sp, "asset", "out", "render")
    sp.add_argument("--turntable", type=int)

    sp = sub.add_parser("animate", help="render a blend-weight timeline to frames")
    common(sp, "asset", "out", "render")
    sp.add_argument("--timeline", required=True)
    sp.add_argument("--fps", type=float)

    sp = sub.add_parser("fit", help="fit a Gaussian set to rendered targets")
    common(sp, "out", "render")
    sp.add_argument("--targets", required=True, help="directory written by `smoj render`")
    sp.add_argument("--init-asset", help="SMOJ file whose rest pose seeds the fit")
    sp.add_argument("--iterations", type=int)

    sp = sub.add_parser("bench", help="measure blend+render throughput")
    common(sp, "asset", "out")
    sp.add_argument("--resolutions", help="comma list, e.g. 256x256,512x512")
    sp.add_argument("--counts", help="comma list of splat counts")
    sp.add_argument("--seconds", type=float, help="min measuring time per cell")
    sp.add_argument("--enforce-floor", action="store_true",
                    help="exit nonzero if the 256x256/10k cell misses 30 FPS")

    sp = sub.add_parser("stylize", help="send a render to a stylization service")
    common(sp, "out")
    sp.add_argument("--image", required=True)
    sp.add_argument("--endpoint", required=True)
    sp.add_argument("--prompt", required=True)
    sp.add_argument("--strength", type=float)
    sp.add_argument("--edge", type=float)
    sp.add_argument("--identity", type=float)
    sp.add_argument("--timeout", type=float)

    sp = sub.add_parser("serve", help="serve the viewer, the asset, and live-drive sockets")
    common(sp, "asset")
    sp.add_argument("--port", type=int)
    sp.add_argument("--viewer-dir")
    return p


def _require_asset(s: Settings) -> str:
    path = s.get("asset", str)
    if not path:
        raise _Usage("--asset is required (or set SMOJ_ASSET)")
    return path


def _render_cfg(s: Settings) -> RenderConfig:
    return RenderConfig(mode=s.get("mode"))


def cmd_inspect(s: Settings) -> int:
    path = _require_asset(s)
    asset = load_asset(path, validate=False)
    print(f"file: {path} ({os.path.getsize(path)} bytes)")
    print(f"splats: {asset.m}")
    print(f"components: {asset.k}")
    print("channels: " + ", ".join(asset.channel_names))
    print("component deltas (max|mean position delta):")
    for d in component_deltas(asset):
        print(f"  {d.name}: {d.max_abs['position']:.6g} | {d.mean_abs['position']:.6g}")
    report = validate_asset(asset)
    if report:
        print(f"validation: {len(report)} violation(s)")
        for v in report:
            print(f"  {v}")
        return EXIT_VALIDATION
    print("validation: ok")
    return EXIT_OK


def cmd_render(s: Settings) -> int:
    asset = load_asset(_require_asset(s))
    cfg = _render_cfg(s)
    out_dir = Path(s.get("out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    w, h = s.get("width"), s.get("height")
    n_views = s.get("turntable")
    rest = asset.rest
    if n_views and n_views > 0:
        center = rest.positions.astype(np.float64).mean(axis=0)
        spread = float(np.linalg.norm(
            rest.positions.astype(np.float64) - center, axis=1).max()) or 1.0
        outputs, cams = render_turntable(rest, n_views, radius=3.0 * spread,
                                         cfg=cfg, width=w, height=h)
    else:
        cams = [frontal_camera(w, h, distance=_frontal_distance(rest))]
        outputs = [render(rest, cams[0], cfg)]
    for i, out in enumerate(outputs):
        save_render(out_dir / f"view_{i:03d}", out, normals=cfg.mode == "2dgs")
    save_cameras(out_dir / "cameras.txt", cams)
    print(f"wrote {len(outputs)} view(s) to {out_dir}")
    return EXIT_OK


def _frontal_distance(rest) -> float:
    if rest.m == 0:
        return 3.0
    center = rest.positions.astype(np.float64).mean(axis=0)
    spread = float(np.linalg.norm(rest.positions.astype(np.float64) - center, axis=1).max())
    return 3.0 * spread + 1.0


def cmd_animate(s: Settings) -> int:
    asset = load_asset(_require_asset(s))
    timeline = load_timeline(s.flags["timeline"])
    if timeline.channel_names != list(asset.channel_names):
        print("error: timeline channel order does not match asset channels", file=sys.stderr)
        return EXIT_VALIDATION
    cfg = _render_cfg(s)
    out_dir = Path(s.get("out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    w, h = s.get("width"), s.get("height")
    cam = frontal_camera(w, h, distance=_frontal_distance(asset.rest))
    fps = s.get("fps")
    blend_ms, render_ms = [], []
    count = 0
    for i, t in enumerate(timeline.sample_times(fps)):
        t0 = time.perf_counter()
        posed = blend(asset, timeline.sample(t))
        t1 = time.perf_counter()
        out = render(posed, cam, cfg)
        t2 = time.perf_counter()
        blend_ms.append((t1 - t0) * 1e3)
        render_ms.append((t2 - t1) * 1e3)
        save_render(out_dir / f"frame_{i:04d}", out, png=True)
        count += 1
    report = {
        "frames": count,
        "fps_requested": fps,
        "blend_ms": _percentiles(blend_ms),
        "render_ms": _percentiles(render_ms),
    }
    with open(out_dir / "timing.json", "w") as f:
        json.dump(report, f, indent=2)
    print(json.dumps(report))
    return EXIT_OK


def _percentiles(xs):
    arr = np.asarray(xs)
    return {"mean": float(arr.mean()), "p50": float(np.percentile(arr, 50)),
            "p90": float(np.percentile(arr, 90)), "p99": float(np.percentile(arr, 99))}


def cmd_fit(s: Settings) -> int:
    target_dir = Path(s.flags["targets"])
    cam_file = target_dir / "cameras.txt"
    if not cam_file.exists():
        print(f"error: missing camera file {cam_file}", file=sys.stderr)
        return EXIT_PARSE
    cams = load_cameras(cam_file)
    targets = []
    for i in range(len(cams)):
        rgb = load_buffer(target_dir / f"view_{i:03d}.rgb.smim")
        alpha = load_buffer(target_dir / f"view_{i:03d}.alpha.smim")
        targets.append((rgb, alpha))
    if s.flags.get("init_asset"):
        init = load_asset(s.flags["init_asset"]).rest
    else:
        print("error: --init-asset is required", file=sys.stderr)
        return EXIT_USAGE
    cfg = FitConfig(iterations=s.get("iterations"), seed=s.get("seed"))
    out_path = Path(s.get("out"))
    if out_path.suffix != ".smoj":
        out_path.mkdir(parents=True, exist_ok=True)
        out_path = out_path / "fitted.smoj"
    log_lines = ["iter,total,render,normal,dist"]
    try:
        result = fit(targets, cams, init, cfg, LossWeights(), _render_cfg(s),
                     log_fn=lambda row: log_lines.append(row.line()))
    except FitDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    save_asset(AvatarAsset(rest=result.gaussians, components=[], channel_names=[]),
               out_path)
    log_path = out_path.with_suffix(".log")
    log_path.write_text("\n".join(log_lines) + "\n")
    with open(out_path.with_suffix(".history.json"), "w") as f:
        json.dump({"history": [row.__dict__ for row in result.history],
                   "psnr_per_view": result.psnr_per_view}, f)
    for i, v in enumerate(result.psnr_per_view):
        print(f"psnr view {i}: {v:.2f} dB")
    print(f"wrote {out_path}")
    return EXIT_OK


FLOOR_CELL = (256, 256, 10000)
FLOOR_FPS = 30.0


def cmd_bench(s: Settings) -> int:
    asset = load_asset(_require_asset(s))
    resolutions = []
    for token in str(s.get("resolutions")).split(","):
        w, _, h = token.strip().partition("x")
        resolutions.append((int(w), int(h)))
    counts = [int(t) for t in str(s.get("counts")).split(",")]
    seconds = s.get("seconds")
    seed = s.get("seed")
    cfg = _render_cfg(s)
    rng = np.random.default_rng(seed)
    cells = []
    for m in counts:
        sized = resize_asset(asset, m, seed=seed)
        for w, h in resolutions:
            cam = frontal_camera(w, h, distance=_frontal_distance(sized.rest))
            # warm up the jit and caches
            render(blend(sized, rng.uniform(0, 1, size=sized.k)), cam, cfg)
            frames = 0
            blend_t = render_t = 0.0
            start = time.perf_counter()
            while time.perf_counter() - start < seconds or frames < 5:
                weights = rng.uniform(0, 1, size=sized.k)
                t0 = time.perf_counter()
                posed = blend(sized, weights)
                t1 = time.perf_counter()
                render(posed, cam, cfg)
                t2 = time.perf_counter()
                blend_t += t1 - t0
                render_t += t2 - t1
                frames += 1
            total = blend_t + render_t
            cells.append({
                "width": w, "height": h, "m": m, "frames": frames,
                "blend_ms": blend_t / frames * 1e3,
                "render_ms": render_t / frames * 1e3,
                "fps": frames / total,
            })
    table = {"cells": cells, "seed": seed}
    # sanity: for a fixed splat count, more pixels should cost more time
    violations = []
    for m in counts:
        by_pixels = sorted((c for c in cells if c["m"] == m),
                           key=lambda c: c["width"] * c["height"])
        for prev, nxt in zip(by_pixels, by_pixels[1:]):
            if nxt["blend_ms"] + nxt["render_ms"] < prev["blend_ms"] + prev["render_ms"]:
                violations.append({"m": m, "slower": [prev["width"], prev["height"]],
                                   "faster": [nxt["width"], nxt["height"]]})
    table["monotonicity_violations"] = violations
    floor = next((c for c in cells
                  if (c["width"], c["height"], c["m"]) == FLOOR_CELL), None)
    if floor is not None:
        table["floor"] = {"required_fps": FLOOR_FPS, "achieved_fps": floor["fps"],
                          "pass": floor["fps"] >= FLOOR_FPS}
    print(json.dumps(table, indent=2))
    if s.flags.get("enforce_floor") and floor is not None and not table["floor"]["pass"]:
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_stylize(s: Settings) -> int:
    with open(s.flags["image"], "rb") as f:
        png = f.read()
    req = StylizeRequest(
        image_png=png, prompt=s.flags["prompt"],
        style_strength=s.get("strength"), edge_preservation=s.get("edge"),
        identity_consistency=s.get("identity"), timeout=s.get("timeout"))
    resp = stylize(req, s.flags["endpoint"])
    out = Path(s.get("out"))
    if out.suffix != ".png":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "stylized.png"
    out.write_bytes(resp.image_png)
    print(f"wrote {out} (latency {resp.latency:.3f}s, "
          f"mode {resp.metadata.get('X-Service-Mode', '?')})")
    return EXIT_OK


def cmd_serve(s: Settings) -> int:
    server.serve(_require_asset(s), port=s.get("port"),
                 viewer_dir=s.flags.get("viewer_dir"))
    return EXIT_OK


COMMANDS = {
    "inspect": cmd_inspect,
    "render": cmd_render,
    "animate": cmd_animate,
    "fit": cmd_fit,
    "bench": cmd_bench,
    "stylize": cmd_stylize,
    "serve": cmd_serve,
}


def _tune_allocator():
    """Keep glibc from unmapping large buffers freed every frame; interleaved
    blend+render otherwise spends tens of ms per frame on page faults."""
    try:
        import ctypes

        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        libc.mallopt(-3, 64 * 1024 * 1024)  # M_MMAP_THRESHOLD
        libc.mallopt(-1, 128 * 1024 * 1024)  # M_TRIM_THRESHOLD
    except Exception:
        pass  # non-glibc platform; purely a performance knob


def main(argv=None) -> int:
    _tune_allocator()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        settings = Settings(args)
        return COMMANDS[args.command](settings)
    except _Usage as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SmojParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except InvalidAssetError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, OSError, StylizerError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
