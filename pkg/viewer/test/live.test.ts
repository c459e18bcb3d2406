import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { blendInto } from "../src/blend.js";
import { emptyGaussianData, parseSmoj } from "../src/smoj.js";
import { DriveSocket, SocketLike } from "../src/socket.js";
import { ViewerState } from "../src/state.js";

const fixtureDir = fileURLToPath(new URL("./fixtures/", import.meta.url));
const raw = readFileSync(fixtureDir + "golden.smoj");
const avatar = parseSmoj(raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength));

/** Scriptable socket double implementing the browser WebSocket surface. */
class FakeSocket implements SocketLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  closed = false;

  open(): void {
    this.onopen?.();
  }

  push(text: string): void {
    this.onmessage?.({ data: text });
  }

  drop(): void {
    this.onclose?.();
  }

  close(): void {
    this.closed = true;
  }
}

function frame(k: number, fill: (i: number) => number): string {
  return Array.from({ length: k }, (_, i) => fill(i).toFixed(4)).join(" ");
}

describe("live drive", () => {
  it("applies a scripted 100-frame session with a positive FPS counter", () => {
    const state = new ViewerState();
    state.setAvatar(avatar);
    state.setDriveSource("socket");
    const posed = emptyGaussianData(avatar.m);

    const sockets: FakeSocket[] = [];
    const drive = new DriveSocket("ws://test/viewers",
      (text) => state.applySocketFrame(text),
      () => {},
      { factory: () => { const s = new FakeSocket(); sockets.push(s); return s; } });
    drive.connect();
    const sock = sockets[0];
    sock.open();
    expect(drive.status).toBe("open");

    let now = 0;
    state.tick(now);
    const fpsSamples: number[] = [];
    for (let f = 0; f < 100; f++) {
      sock.push(frame(avatar.k, (i) => 0.5 + 0.5 * Math.sin(0.07 * f + i)));
      // render-loop heartbeat at ~60 fps between frames
      now += 16.7;
      state.tick(now);
      if (state.weightsDirty) {
        blendInto(avatar, state.weights, posed);
        state.weightsDirty = false;
      }
      if (f >= 5) fpsSamples.push(state.fps);
    }
    expect(state.appliedFrames).toBe(100);
    expect(state.badFrames).toBe(0);
    expect(Math.min(...fpsSamples)).toBeGreaterThan(0);
    for (const v of posed.positions) {
      expect(Number.isFinite(v)).toBe(true);
    }
  });

  it("ignores malformed frames and keeps counting", () => {
    const state = new ViewerState();
    state.setAvatar(avatar);
    state.setDriveSource("socket");
    expect(state.applySocketFrame("0.1 0.2")).toBe(false);
    expect(state.applySocketFrame("junk ".repeat(avatar.k).trim())).toBe(false);
    expect(state.badFrames).toBe(2);
    expect(state.applySocketFrame(frame(avatar.k, () => 0))).toBe(true);
    expect(state.appliedFrames).toBe(1);
  });

  it("stops applying frames when the drive source returns to sliders", () => {
    const state = new ViewerState();
    state.setAvatar(avatar);
    state.setDriveSource("socket");
    state.applySocketFrame(frame(avatar.k, () => 1));
    expect(state.weights[0]).toBe(1);
    state.setDriveSource("sliders");
    state.applySocketFrame(frame(avatar.k, () => 0));
    expect(state.weights[0]).toBe(1); // socket frame not applied
    expect(state.badFrames).toBe(0); // and not an error either
  });

  it("reconnects with backoff after a drop", () => {
    const sockets: FakeSocket[] = [];
    const scheduled: Array<() => void> = [];
    const drive = new DriveSocket("ws://test/viewers", () => {}, () => {}, {
      factory: () => { const s = new FakeSocket(); sockets.push(s); return s; },
      schedule: (fn) => { scheduled.push(fn); return 0; },
    });
    drive.connect();
    sockets[0].open();
    sockets[0].drop();
    expect(drive.status).toBe("retrying");
    expect(scheduled).toHaveLength(1);
    scheduled[0]();
    expect(sockets).toHaveLength(2);
    sockets[1].open();
    expect(drive.status).toBe("open");
    expect(drive.retries).toBe(0); // reset after a successful open
    drive.close();
    expect(sockets[1].closed).toBe(true);
  });

  it("mirrors socket weights into the slider source of truth", () => {
    const state = new ViewerState();
    state.setAvatar(avatar);
    state.setDriveSource("socket");
    state.applySocketFrame(frame(avatar.k, (i) => i / 20));
    // sliders read state.weights directly; verify the values landed
    for (let i = 0; i < avatar.k; i++) {
      expect(state.weights[i]).toBeCloseTo(i / 20, 4);
    }
  });
});
