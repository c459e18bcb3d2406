/** Orbit camera with the runtime's convention: x right, y down, z forward. */

export interface CameraPose {
  rotation: Float64Array; // 3x3 row-major world-to-camera
  translation: Float64Array; // 3
  fx: number;
  fy: number;
  cx: number;
  cy: number;
}

export class OrbitCamera {
  yaw = 0; // radians around world y
  pitch = 0; // radians, positive looks down
  distance = 3.0;
  target = new Float64Array(3);
  focal = 600;

  pose(width: number, height: number): CameraPose {
    const cy = Math.cos(this.yaw);
    const sy = Math.sin(this.yaw);
    const cp = Math.cos(this.pitch);
    const sp = Math.sin(this.pitch);
    // eye on the orbit sphere; frontal at yaw = pitch = 0 is +z
    const dir = [sy * cp, sp, cy * cp];
    const eye = [
      this.target[0] + this.distance * dir[0],
      this.target[1] + this.distance * dir[1],
      this.target[2] + this.distance * dir[2],
    ];
    const fwd = normalize([
      this.target[0] - eye[0],
      this.target[1] - eye[1],
      this.target[2] - eye[2],
    ]);
    let right = cross(fwd, [0, 1, 0]);
    if (norm(right) < 1e-8) {
      right = cross(fwd, [0, 0, 1]);
    }
    right = normalize(right);
    const down = cross(fwd, right);
    const rot = new Float64Array([
      right[0], right[1], right[2],
      down[0], down[1], down[2],
      fwd[0], fwd[1], fwd[2],
    ]);
    const translation = new Float64Array([
      -(rot[0] * eye[0] + rot[1] * eye[1] + rot[2] * eye[2]),
      -(rot[3] * eye[0] + rot[4] * eye[1] + rot[5] * eye[2]),
      -(rot[6] * eye[0] + rot[7] * eye[1] + rot[8] * eye[2]),
    ]);
    const scale = Math.min(width, height) / 512;
    return {
      rotation: rot,
      translation,
      fx: this.focal * scale,
      fy: this.focal * scale,
      cx: width / 2,
      cy: height / 2,
    };
  }
}

function cross(a: number[], b: number[]): number[] {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function norm(a: number[]): number {
  return Math.hypot(a[0], a[1], a[2]);
}

function normalize(a: number[]): number[] {
  const n = norm(a);
  return [a[0] / n, a[1] / n, a[2] / n];
}
