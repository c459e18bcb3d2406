/** WebGL2 splat renderer: CPU projection + depth sort, GPU compositing.
 *
 * Each splat is projected to a screen-space covariance (the volumetric
 * variant with a 0.3 px^2 low-pass guard), decomposed into its principal
 * axes, and drawn as an instanced quad with a gaussian falloff; instances
 * are sorted back to front and composited with premultiplied alpha.
 */

import type { CameraPose } from "./camera.js";
import type { GaussianData } from "./smoj.js";

const CUTOFF = 8.0; // mahalanobis^2 / 2 beyond which a splat is transparent
const NEAR = 0.01;
const FLOATS_PER_INSTANCE = 10;

const VS = `#version 300 es
layout(location = 0) in vec2 corner;      // unit quad, [-1, 1]^2
layout(location = 1) in vec2 center;      // NDC
layout(location = 2) in vec4 axes;        // two NDC half-axis vectors
layout(location = 3) in vec4 color;       // rgb, opacity
out vec2 vLocal;
out vec4 vColor;
void main() {
  vLocal = corner;
  vColor = color;
  vec2 pos = center + corner.x * axes.xy + corner.y * axes.zw;
  gl_Position = vec4(pos, 0.0, 1.0);
}`;

const FS = `#version 300 es
precision highp float;
in vec2 vLocal;
in vec4 vColor;
out vec4 frag;
uniform float uCutoff;
void main() {
  float r2 = dot(vLocal, vLocal);
  if (r2 > 1.0) discard;
  float alpha = vColor.a * exp(-uCutoff * r2);
  frag = vec4(vColor.rgb * alpha, alpha);
}`;

export class SplatRenderer {
  private readonly gl: WebGL2RenderingContext;
  private readonly program: WebGLProgram;
  private readonly vao: WebGLVertexArrayObject;
  private readonly instanceBuffer: WebGLBuffer;
  private readonly cutoffLoc: WebGLUniformLocation;
  private instances = new Float32Array(0);
  private depths = new Float32Array(0);
  private order: Uint32Array = new Uint32Array(0);
  private count = 0;

  constructor(gl: WebGL2RenderingContext) {
    this.gl = gl;
    this.program = buildProgram(gl, VS, FS);
    this.cutoffLoc = gl.getUniformLocation(this.program, "uCutoff")!;

    const vao = gl.createVertexArray();
    if (!vao) throw new Error("failed to create VAO");
    this.vao = vao;
    gl.bindVertexArray(vao);

    const quad = gl.createBuffer()!;
    gl.bindBuffer(gl.ARRAY_BUFFER, quad);
    gl.bufferData(gl.ARRAY_BUFFER,
      new Float32Array([-1, -1, 1, -1, -1, 1, 1, 1]), gl.STATIC_DRAW);
    gl.enableVertexAttribArray(0);
    gl.vertexAttribPointer(0, 2, gl.FLOAT, false, 0, 0);

    this.instanceBuffer = gl.createBuffer()!;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.instanceBuffer);
    const stride = FLOATS_PER_INSTANCE * 4;
    gl.enableVertexAttribArray(1);
    gl.vertexAttribPointer(1, 2, gl.FLOAT, false, stride, 0);
    gl.vertexAttribDivisor(1, 1);
    gl.enableVertexAttribArray(2);
    gl.vertexAttribPointer(2, 4, gl.FLOAT, false, stride, 8);
    gl.vertexAttribDivisor(2, 1);
    gl.enableVertexAttribArray(3);
    gl.vertexAttribPointer(3, 4, gl.FLOAT, false, stride, 24);
    gl.vertexAttribDivisor(3, 1);
    gl.bindVertexArray(null);
  }

  /** Project, sort, and upload the posed splats for one camera. */
  prepare(set: GaussianData, cam: CameraPose, width: number, height: number): void {
    const m = set.count;
    if (this.instances.length < m * FLOATS_PER_INSTANCE) {
      this.instances = new Float32Array(m * FLOATS_PER_INSTANCE);
      this.depths = new Float32Array(m);
      this.order = new Uint32Array(m);
    }
    const R = cam.rotation;
    const t = cam.translation;
    const inst = this.instances;
    const scaleNdcX = 2 / width;
    const scaleNdcY = 2 / height;
    let n = 0;
    for (let i = 0; i < m; i++) {
      const px = set.positions[3 * i];
      const py = set.positions[3 * i + 1];
      const pz = set.positions[3 * i + 2];
      const x = R[0] * px + R[1] * py + R[2] * pz + t[0];
      const y = R[3] * px + R[4] * py + R[5] * pz + t[1];
      const z = R[6] * px + R[7] * py + R[8] * pz + t[2];
      if (z <= NEAR) continue;

      const qw = set.orientations[4 * i];
      const qx = set.orientations[4 * i + 1];
      const qy = set.orientations[4 * i + 2];
      const qz = set.orientations[4 * i + 3];
      const s0 = set.scales[3 * i];
      const s1 = set.scales[3 * i + 1];
      const s2 = set.scales[3 * i + 2];
      // world-space covariance via R(q) diag(s^2) R(q)^T
      const r00 = 1 - 2 * (qy * qy + qz * qz);
      const r01 = 2 * (qx * qy - qz * qw);
      const r02 = 2 * (qx * qz + qy * qw);
      const r10 = 2 * (qx * qy + qz * qw);
      const r11 = 1 - 2 * (qx * qx + qz * qz);
      const r12 = 2 * (qy * qz - qx * qw);
      const r20 = 2 * (qx * qz - qy * qw);
      const r21 = 2 * (qy * qz + qx * qw);
      const r22 = 1 - 2 * (qx * qx + qy * qy);
      const v0 = s0 * s0;
      const v1 = s1 * s1;
      const v2 = s2 * s2;
      const c00 = r00 * r00 * v0 + r01 * r01 * v1 + r02 * r02 * v2;
      const c01 = r00 * r10 * v0 + r01 * r11 * v1 + r02 * r12 * v2;
      const c02 = r00 * r20 * v0 + r01 * r21 * v1 + r02 * r22 * v2;
      const c11 = r10 * r10 * v0 + r11 * r11 * v1 + r12 * r12 * v2;
      const c12 = r10 * r20 * v0 + r11 * r21 * v1 + r12 * r22 * v2;
      const c22 = r20 * r20 * v0 + r21 * r21 * v1 + r22 * r22 * v2;
      // screen-space covariance: T cov T^T with T = J R_cam
      const jx = cam.fx / z;
      const jy = cam.fy / z;
      const jxz = -cam.fx * x / (z * z);
      const jyz = -cam.fy * y / (z * z);
      const t00 = jx * R[0] + jxz * R[6];
      const t01 = jx * R[1] + jxz * R[7];
      const t02 = jx * R[2] + jxz * R[8];
      const t10 = jy * R[3] + jyz * R[6];
      const t11 = jy * R[4] + jyz * R[7];
      const t12 = jy * R[5] + jyz * R[8];
      const u0 = t00 * c00 + t01 * c01 + t02 * c02;
      const u1 = t00 * c01 + t01 * c11 + t02 * c12;
      const u2 = t00 * c02 + t01 * c12 + t02 * c22;
      const a = u0 * t00 + u1 * t01 + u2 * t02 + 0.3;
      const b = u0 * t10 + u1 * t11 + u2 * t12;
      const w0 = t10 * c00 + t11 * c01 + t12 * c02;
      const w1 = t10 * c01 + t11 * c11 + t12 * c12;
      const w2 = t10 * c02 + t11 * c12 + t12 * c22;
      const c = w0 * t10 + w1 * t11 + w2 * t12 + 0.3;
      // principal axes of the 2x2 covariance
      const mid = 0.5 * (a + c);
      const half = Math.hypot(0.5 * (a - c), b);
      const lam1 = Math.max(mid + half, 1e-8);
      const lam2 = Math.max(mid - half, 1e-8);
      const theta = 0.5 * Math.atan2(2 * b, a - c);
      const e1 = Math.sqrt(2 * CUTOFF * lam1);
      const e2 = Math.sqrt(2 * CUTOFF * lam2);
      const ct = Math.cos(theta);
      const st = Math.sin(theta);

      const u = (x / z) * cam.fx + cam.cx;
      const v = (y / z) * cam.fy + cam.cy;
      const base = n * FLOATS_PER_INSTANCE;
      inst[base] = u * scaleNdcX - 1;
      inst[base + 1] = 1 - v * scaleNdcY;
      inst[base + 2] = e1 * ct * scaleNdcX;
      inst[base + 3] = -e1 * st * scaleNdcY;
      inst[base + 4] = -e2 * st * scaleNdcX;
      inst[base + 5] = -e2 * ct * scaleNdcY;
      inst[base + 6] = set.colors[3 * i];
      inst[base + 7] = set.colors[3 * i + 1];
      inst[base + 8] = set.colors[3 * i + 2];
      inst[base + 9] = set.opacities[i];
      this.depths[n] = z;
      this.order[n] = n;
      n += 1;
    }
    this.count = n;
    // back-to-front painter ordering
    const order = Array.from(this.order.subarray(0, n));
    const depths = this.depths;
    order.sort((p, q) => depths[q] - depths[p]);
    const sorted = new Float32Array(n * FLOATS_PER_INSTANCE);
    for (let j = 0; j < n; j++) {
      sorted.set(
        inst.subarray(order[j] * FLOATS_PER_INSTANCE, (order[j] + 1) * FLOATS_PER_INSTANCE),
        j * FLOATS_PER_INSTANCE);
    }
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.instanceBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, sorted, gl.DYNAMIC_DRAW);
  }

  draw(width: number, height: number): void {
    const gl = this.gl;
    gl.viewport(0, 0, width, height);
    gl.clearColor(0.07, 0.07, 0.09, 1.0);
    gl.clear(gl.COLOR_BUFFER_BIT);
    gl.disable(gl.DEPTH_TEST);
    gl.enable(gl.BLEND);
    gl.blendFunc(gl.ONE, gl.ONE_MINUS_SRC_ALPHA);
    gl.useProgram(this.program);
    gl.uniform1f(this.cutoffLoc, CUTOFF);
    gl.bindVertexArray(this.vao);
    gl.drawArraysInstanced(gl.TRIANGLE_STRIP, 0, 4, this.count);
    gl.bindVertexArray(null);
  }
}

function buildProgram(gl: WebGL2RenderingContext, vs: string, fs: string): WebGLProgram {
  const compile = (type: number, src: string): WebGLShader => {
    const shader = gl.createShader(type)!;
    gl.shaderSource(shader, src);
    gl.compileShader(shader);
    if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
      throw new Error(`shader compile failed: ${gl.getShaderInfoLog(shader)}`);
    }
    return shader;
  };
  const program = gl.createProgram()!;
  gl.attachShader(program, compile(gl.VERTEX_SHADER, vs));
  gl.attachShader(program, compile(gl.FRAGMENT_SHADER, fs));
  gl.linkProgram(program);
  if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
    throw new Error(`program link failed: ${gl.getProgramInfoLog(program)}`);
  }
  return program;
}
