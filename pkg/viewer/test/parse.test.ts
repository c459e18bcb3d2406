import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { parseSmoj, SmojParseError } from "../src/smoj.js";

const fixtureDir = fileURLToPath(new URL("./fixtures/", import.meta.url));
const golden = () => {
  const raw = readFileSync(fixtureDir + "golden.smoj");
  return raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength);
};
const manifest = JSON.parse(readFileSync(fixtureDir + "golden.json", "utf-8"));

describe("SMOJ parser", () => {
  it("parses the golden asset to the manifest shape", () => {
    const avatar = parseSmoj(golden());
    expect(avatar.m).toBe(manifest.m);
    expect(avatar.k).toBe(manifest.k);
    expect(avatar.channels).toEqual(manifest.channels);
    expect(avatar.components).toHaveLength(manifest.k);
    expect(avatar.rest.positions).toHaveLength(3 * manifest.m);
    const p0 = manifest.rest_probe.position0;
    for (let c = 0; c < 3; c++) {
      expect(avatar.rest.positions[c]).toBeCloseTo(p0[c], 6);
    }
    expect(avatar.rest.opacities[manifest.m - 1]).toBeCloseTo(
      manifest.rest_probe.opacity_last, 6);
  });

  it("rejects bad magic at offset 0", () => {
    const buf = golden();
    new Uint8Array(buf)[0] = 0x58;
    expect(() => parseSmoj(buf)).toThrowError(SmojParseError);
    try {
      parseSmoj(buf);
    } catch (err) {
      expect((err as SmojParseError).offset).toBe(0);
    }
  });

  it("detects CRC corruption anywhere in the payload", () => {
    for (const back of [10, 100, 1000]) {
      const buf = golden();
      const bytes = new Uint8Array(buf);
      bytes[bytes.length - back] ^= 0xff;
      expect(() => parseSmoj(buf)).toThrowError(/CRC|truncated|non-finite/);
    }
  });

  it("rejects truncated files with the failing array named", () => {
    const buf = golden().slice(0, 2000);
    expect(() => parseSmoj(buf)).toThrowError(/truncated in/);
  });

  it("parses a zero-splat asset", () => {
    // header + 16 empty-name channels + empty payload + CRC(empty) = 0
    const names = new Uint8Array(16 * 2);
    const buf = new ArrayBuffer(20 + names.length + 4);
    const view = new DataView(buf);
    view.setUint32(0, 0x4a4f4d53, true);
    view.setUint32(4, 1, true);
    view.setUint32(8, 0, true);
    view.setUint32(12, 16, true);
    view.setUint32(16, 0, true);
    const avatar = parseSmoj(buf);
    expect(avatar.m).toBe(0);
    expect(avatar.k).toBe(16);
  });
});
