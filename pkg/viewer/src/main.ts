/** Browser entry point: load the served avatar, wire sliders, presets,
 * orbit controls, the live-drive socket, and the render loop.
 *
 * URL hash parameters: #drive=socket|sliders&yaw=..&pitch=..&dist=..
 */

import { OrbitCamera } from "./camera.js";
import { blendInto } from "./blend.js";
import { EMOTION_PRESETS, presetWeights } from "./presets.js";
import { SplatRenderer } from "./render.js";
import { emptyGaussianData, parseSmoj } from "./smoj.js";
import type { GaussianData } from "./smoj.js";
import { DriveSocket } from "./socket.js";
import { ViewerState } from "./state.js";

const state = new ViewerState();
const camera = new OrbitCamera();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function applyHashParams(): void {
  const params = new URLSearchParams(window.location.hash.slice(1));
  camera.yaw = Number(params.get("yaw") ?? 0) || 0;
  camera.pitch = Number(params.get("pitch") ?? 0) || 0;
  camera.distance = Number(params.get("dist") ?? 3) || 3;
  if (params.get("drive") === "socket") {
    state.setDriveSource("socket");
  }
}

async function boot(): Promise<void> {
  const statusEl = el<HTMLDivElement>("status");
  const canvas = el<HTMLCanvasElement>("view");
  applyHashParams();

  let posed: GaussianData;
  try {
    const resp = await fetch("/asset.smoj");
    if (!resp.ok) throw new Error(`asset fetch failed: HTTP ${resp.status}`);
    const avatar = parseSmoj(await resp.arrayBuffer());
    state.setAvatar(avatar);
    posed = emptyGaussianData(avatar.m);
    statusEl.textContent = `${avatar.m} splats, ${avatar.k} channels`;
  } catch (err) {
    statusEl.textContent = String(err);
    statusEl.classList.add("error");
    return;
  }

  const gl = canvas.getContext("webgl2", { premultipliedAlpha: true });
  if (!gl) {
    statusEl.textContent = "WebGL2 is not available";
    statusEl.classList.add("error");
    return;
  }
  let renderer = new SplatRenderer(gl);
  canvas.addEventListener("webglcontextlost", (ev) => {
    ev.preventDefault();
    statusEl.textContent = "GPU context lost; waiting for restore";
  });
  canvas.addEventListener("webglcontextrestored", () => {
    renderer = new SplatRenderer(gl);
    state.weightsDirty = true;
    statusEl.textContent = "GPU context restored";
  });

  // sliders, one per channel, mirroring the applied weights exactly
  const sliderBox = el<HTMLDivElement>("sliders");
  const sliders: HTMLInputElement[] = [];
  state.avatar!.channels.forEach((name, i) => {
    const row = document.createElement("label");
    row.className = "slider-row";
    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = "0";
    slider.max = "1";
    slider.step = "0.01";
    slider.value = "0";
    slider.addEventListener("input", () => {
      state.setDriveSource("sliders");
      driveSelect.value = "sliders";
      state.setWeight(i, Number(slider.value));
    });
    const caption = document.createElement("span");
    caption.textContent = name;
    row.append(caption, slider);
    sliderBox.append(row);
    sliders.push(slider);
  });

  const syncSliders = () => {
    sliders.forEach((slider, i) => {
      const v = state.weights[i] ?? 0;
      const clamped = Math.min(1, Math.max(0, v));
      if (Number(slider.value) !== clamped) slider.value = String(clamped);
    });
  };

  const presetSelect = el<HTMLSelectElement>("preset");
  for (const name of Object.keys(EMOTION_PRESETS)) {
    const opt = document.createElement("option");
    opt.value = name;
    opt.textContent = name;
    presetSelect.append(opt);
  }
  presetSelect.addEventListener("change", () => {
    state.setDriveSource("sliders");
    driveSelect.value = "sliders";
    state.setWeights(presetWeights(presetSelect.value, state.avatar!.channels));
    syncSliders();
  });

  const driveSelect = el<HTMLSelectElement>("drive");
  driveSelect.value = state.driveSource;
  driveSelect.addEventListener("change", () => {
    state.setDriveSource(driveSelect.value === "socket" ? "socket" : "sliders");
  });

  const badgeEl = el<HTMLSpanElement>("badge");
  const socketStatusEl = el<HTMLSpanElement>("socket-status");
  const proto = location.protocol === "https:" ? "wss" : "ws";
  const socket = new DriveSocket(
    `${proto}://${location.host}/viewers`,
    (text) => {
      state.applySocketFrame(text);
      badgeEl.textContent = state.badFrames ? `bad frames: ${state.badFrames}` : "";
    },
    (status, retries) => {
      socketStatusEl.textContent = retries ? `${status} (retry ${retries})` : status;
    },
  );
  socket.connect();

  // pointer orbit + wheel zoom
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    lastX = ev.clientX;
    lastY = ev.clientY;
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    camera.yaw -= (ev.clientX - lastX) * 0.008;
    camera.pitch = Math.min(1.4, Math.max(-1.4, camera.pitch + (ev.clientY - lastY) * 0.008));
    lastX = ev.clientX;
    lastY = ev.clientY;
  });
  canvas.addEventListener("pointerup", () => {
    dragging = false;
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    camera.distance = Math.min(20, Math.max(0.3, camera.distance * (1 + ev.deltaY * 0.001)));
  }, { passive: false });

  // center the orbit on the asset
  const avatar = state.avatar!;
  if (avatar.m > 0) {
    let sx = 0, sy = 0, sz = 0;
    for (let i = 0; i < avatar.m; i++) {
      sx += avatar.rest.positions[3 * i];
      sy += avatar.rest.positions[3 * i + 1];
      sz += avatar.rest.positions[3 * i + 2];
    }
    camera.target.set([sx / avatar.m, sy / avatar.m, sz / avatar.m]);
  }

  const fpsEl = el<HTMLSpanElement>("fps");
  const loop = (now: number) => {
    state.tick(now);
    fpsEl.textContent = `${state.fps.toFixed(0)} fps`;
    const w = canvas.clientWidth || 512;
    const h = canvas.clientHeight || 512;
    if (canvas.width !== w || canvas.height !== h) {
      canvas.width = w;
      canvas.height = h;
    }
    if (state.weightsDirty) {
      blendInto(avatar, state.weights, posed);
      state.weightsDirty = false;
    }
    syncSliders();
    renderer.prepare(posed, camera.pose(w, h), w, h);
    renderer.draw(w, h);
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

boot();
