/** Viewer state: one source of truth for the applied blend weights.
 *
 * Sliders mirror `weights` exactly; socket frames replace `weights` only
 * while the drive source is "socket", so switching back to sliders stops
 * applying live frames without tearing the UI.
 */

import type { Avatar } from "./smoj.js";

export type DriveSource = "sliders" | "socket";

export class ViewerState {
  avatar: Avatar | null = null;
  weights = new Float64Array(16);
  driveSource: DriveSource = "sliders";
  appliedFrames = 0;
  badFrames = 0;
  weightsDirty = true;

  /** rolling 1-second FPS window */
  fps = 0;
  private frameTimes: number[] = [];

  setAvatar(avatar: Avatar): void {
    this.avatar = avatar;
    this.weights = new Float64Array(avatar.k);
    this.weightsDirty = true;
  }

  get k(): number {
    return this.avatar ? this.avatar.k : 16;
  }

  setWeight(index: number, value: number): void {
    if (index < 0 || index >= this.weights.length) {
      throw new Error(`channel index ${index} out of range`);
    }
    this.weights[index] = value;
    this.weightsDirty = true;
  }

  setWeights(values: ArrayLike<number>): void {
    if (values.length !== this.weights.length) {
      throw new Error(`expected ${this.weights.length} weights, got ${values.length}`);
    }
    this.weights.set(values);
    this.weightsDirty = true;
  }

  setDriveSource(source: DriveSource): void {
    this.driveSource = source;
  }

  /** Parse and apply one "w1 ... wk" socket frame.
   *
   * Returns true when applied. Malformed frames bump `badFrames` and leave
   * the current weights untouched; frames arriving while slider-driven are
   * ignored (not an error).
   */
  applySocketFrame(text: string): boolean {
    const parts = text.trim().split(/\s+/);
    if (parts.length !== this.weights.length) {
      this.badFrames += 1;
      return false;
    }
    const parsed = new Float64Array(parts.length);
    for (let i = 0; i < parts.length; i++) {
      const v = Number(parts[i]);
      if (!Number.isFinite(v)) {
        this.badFrames += 1;
        return false;
      }
      parsed[i] = v;
    }
    if (this.driveSource !== "socket") {
      return false;
    }
    this.weights.set(parsed);
    this.weightsDirty = true;
    this.appliedFrames += 1;
    return true;
  }

  /** Render-loop heartbeat; keeps the FPS readout averaged over 1 s. */
  tick(nowMs: number): void {
    this.frameTimes.push(nowMs);
    const cutoff = nowMs - 1000;
    while (this.frameTimes.length > 0 && this.frameTimes[0] < cutoff) {
      this.frameTimes.shift();
    }
    const span = nowMs - this.frameTimes[0];
    this.fps = this.frameTimes.length <= 1 ? 0 : (this.frameTimes.length - 1) / (span / 1000);
  }
}
