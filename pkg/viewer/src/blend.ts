/** Blendshape posing, mirroring the runtime's equation and clamping rules:
 * out = rest + sum_i w_i (component_i - rest) accumulated in doubles and
 * stored as f32; quats renormalized (skipped when already unit within
 * tolerance, so one-hot blends reproduce components exactly); opacity
 * clamped to [0,1]; scales floored.
 */

import type { Avatar, GaussianData } from "./smoj.js";
import { emptyGaussianData } from "./smoj.js";

export const SCALE_FLOOR = 1e-6;
const QUAT_NORM_TOL = 1e-6;

export function blendInto(avatar: Avatar, weights: ArrayLike<number>, out: GaussianData): void {
  const m = avatar.m;
  const k = avatar.k;
  if (weights.length !== k) {
    throw new Error(`expected ${k} weights, got ${weights.length}`);
  }
  const rest = avatar.rest;
  const comps = avatar.components;

  const fields: Array<["positions" | "scales" | "colors" | "opacities", number]> = [
    ["positions", 3],
    ["scales", 3],
    ["colors", 3],
    ["opacities", 1],
  ];
  for (const [name, width] of fields) {
    const r = rest[name];
    const o = out[name];
    const n = m * width;
    for (let e = 0; e < n; e++) {
      let acc = r[e];
      for (let c = 0; c < k; c++) {
        const w = weights[c];
        if (w !== 0) {
          acc += w * (comps[c][name][e] - r[e]);
        }
      }
      o[e] = Math.fround(acc);
    }
  }

  const rq = rest.orientations;
  const oq = out.orientations;
  for (let j = 0; j < m; j++) {
    const base = 4 * j;
    let qw = rq[base];
    let qx = rq[base + 1];
    let qy = rq[base + 2];
    let qz = rq[base + 3];
    for (let c = 0; c < k; c++) {
      const w = weights[c];
      if (w !== 0) {
        const cq = comps[c].orientations;
        qw += w * (cq[base] - rq[base]);
        qx += w * (cq[base + 1] - rq[base + 1]);
        qy += w * (cq[base + 2] - rq[base + 2]);
        qz += w * (cq[base + 3] - rq[base + 3]);
      }
    }
    let sq = qw * qw + qx * qx + qy * qy + qz * qz;
    if (sq < 1e-12) {
      // cancelled blend: fall back to the rest orientation
      qw = rq[base];
      qx = rq[base + 1];
      qy = rq[base + 2];
      qz = rq[base + 3];
      sq = qw * qw + qx * qx + qy * qy + qz * qz;
    }
    if (Math.abs(sq - 1.0) > QUAT_NORM_TOL) {
      const inv = 1.0 / Math.sqrt(sq);
      qw *= inv;
      qx *= inv;
      qy *= inv;
      qz *= inv;
    }
    oq[base] = Math.fround(qw);
    oq[base + 1] = Math.fround(qx);
    oq[base + 2] = Math.fround(qy);
    oq[base + 3] = Math.fround(qz);
  }

  const op = out.opacities;
  for (let j = 0; j < m; j++) {
    if (op[j] < 0) op[j] = 0;
    else if (op[j] > 1) op[j] = 1;
  }
  const os = out.scales;
  for (let e = 0; e < 3 * m; e++) {
    if (os[e] < SCALE_FLOOR) os[e] = SCALE_FLOOR;
  }
}

export function blend(avatar: Avatar, weights: ArrayLike<number>): GaussianData {
  const out = emptyGaussianData(avatar.m);
  blendInto(avatar, weights, out);
  return out;
}
