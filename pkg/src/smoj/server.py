"""Viewer server: static bundle, the avatar asset, and the live-drive relay.

Drive producers connect to /drive and send text frames "w1 ... w16"; every
well-formed frame is broadcast unchanged to all /viewers subscribers.
Malformed frames earn an "error:" frame on the producing connection, which
stays open.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, HTMLResponse, Response

FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>smoj viewer</title></head>
<body style="font-family: sans-serif">
<h1>smoj asset server</h1>
<p>The browser viewer bundle is not built. The asset is served at
<a href="/asset.smoj">/asset.smoj</a>; live weights flow from the
<code>/drive</code> WebSocket to <code>/viewers</code> subscribers.</p>
</body></html>"""


def parse_drive_frame(text: str, k: int = 16) -> list:
    """Parse a "w1 ... wk" frame; raises ValueError when malformed."""
    parts = text.split()
    if len(parts) != k:
        raise ValueError(f"expected {k} weights, got {len(parts)}")
    return [float(p) for p in parts]


class DriveHub:
    """Orders weight frames and fans them out to viewer sockets."""

    def __init__(self):
        self.viewers: set = set()

    async def subscribe(self, ws: WebSocket):
        await ws.accept()
        self.viewers.add(ws)

    def drop(self, ws: WebSocket):
        self.viewers.discard(ws)

    async def broadcast(self, text: str):
        dead = []
        for ws in list(self.viewers):
            try:
                await ws.send_text(text)
            except Exception:
                dead.append(ws)
        for ws in dead:
            self.drop(ws)


def create_app(asset_path, viewer_dir=None, k: int = 16) -> FastAPI:
    asset_path = Path(asset_path)
    app = FastAPI(title="smoj viewer server")
    hub = DriveHub()
    app.state.hub = hub

    viewer_root = Path(viewer_dir) if viewer_dir else None

    @app.get("/")
    async def index():
        if viewer_root and (viewer_root / "index.html").exists():
            return FileResponse(viewer_root / "index.html")
        return HTMLResponse(FALLBACK_PAGE)

    @app.get("/asset.smoj")
    async def asset():
        return Response(content=asset_path.read_bytes(),
                        media_type="application/octet-stream")

    @app.get("/static/{name:path}")
    async def static(name: str):
        if viewer_root is None:
            return Response(status_code=404)
        target = (viewer_root / name).resolve()
        if not str(target).startswith(str(viewer_root.resolve())) or not target.is_file():
            return Response(status_code=404)
        media = "text/javascript" if target.suffix in (".js", ".mjs") else None
        return FileResponse(target, media_type=media)

    @app.websocket("/drive")
    async def drive(ws: WebSocket):
        await ws.accept()
        try:
            while True:
                text = await ws.receive_text()
                try:
                    parse_drive_frame(text, k)
                except ValueError as e:
                    await ws.send_text(f"error: {e}")
                    continue
                await hub.broadcast(text)
        except WebSocketDisconnect:
            pass

    @app.websocket("/viewers")
    async def viewers(ws: WebSocket):
        await hub.subscribe(ws)
        try:
            while True:
                # subscribers may send pings/anything; ignore content
                await ws.receive_text()
        except WebSocketDisconnect:
            hub.drop(ws)

    return app


def serve(asset_path, port: int = 8000, viewer_dir=None, host: str = "127.0.0.1"):
    """Run the server until interrupted (raises OSError if the port is busy)."""
    import uvicorn

    app = create_app(asset_path, viewer_dir=viewer_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
