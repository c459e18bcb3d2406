/** SMOJ avatar parser, mirroring the Python loader byte for byte.
 *
 * Layout: "SMOJ" magic | u32 version | u32 M | u32 K | u32 flags |
 * name table (K x u16 length + UTF-8) | payload (rest then components:
 * positions, scales, orientations, colors, opacities as f32 LE) |
 * CRC32(payload) u32.
 */

export interface GaussianData {
  count: number;
  positions: Float32Array; // 3M
  scales: Float32Array; // 3M
  orientations: Float32Array; // 4M, scalar-first quats
  colors: Float32Array; // 3M
  opacities: Float32Array; // M
}

export interface Avatar {
  m: number;
  k: number;
  channels: string[];
  rest: GaussianData;
  components: GaussianData[];
}

export class SmojParseError extends Error {
  constructor(public offset: number, message: string) {
    super(`offset ${offset}: ${message}`);
  }
}

const MAGIC = 0x4a4f4d53; // "SMOJ" little-endian
const VERSION = 1;
const FLAG_DELTA = 1;

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(bytes: Uint8Array): number {
  let crc = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    crc = CRC_TABLE[(crc ^ bytes[i]) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

export function emptyGaussianData(m: number): GaussianData {
  return {
    count: m,
    positions: new Float32Array(3 * m),
    scales: new Float32Array(3 * m),
    orientations: new Float32Array(4 * m),
    colors: new Float32Array(3 * m),
    opacities: new Float32Array(m),
  };
}

export function parseSmoj(buf: ArrayBuffer): Avatar {
  const view = new DataView(buf);
  const bytes = new Uint8Array(buf);
  if (buf.byteLength < 20) {
    throw new SmojParseError(buf.byteLength, "truncated header");
  }
  if (view.getUint32(0, true) !== MAGIC) {
    throw new SmojParseError(0, "bad magic (not a SMOJ file)");
  }
  const version = view.getUint32(4, true);
  if (version !== VERSION) {
    throw new SmojParseError(4, `unsupported format version ${version}`);
  }
  const m = view.getUint32(8, true);
  const k = view.getUint32(12, true);
  const flags = view.getUint32(16, true);
  if (flags & FLAG_DELTA) {
    throw new SmojParseError(16, "delta-encoded components are reserved and not supported");
  }
  if (flags & ~FLAG_DELTA) {
    throw new SmojParseError(16, `unknown flag bits 0x${flags.toString(16)}`);
  }

  let off = 20;
  const channels: string[] = [];
  const decoder = new TextDecoder("utf-8", { fatal: true });
  for (let i = 0; i < k; i++) {
    if (off + 2 > buf.byteLength) {
      throw new SmojParseError(off, `truncated in name table entry ${i}`);
    }
    const len = view.getUint16(off, true);
    off += 2;
    if (off + len > buf.byteLength) {
      throw new SmojParseError(off, `truncated in name table entry ${i}`);
    }
    try {
      channels.push(decoder.decode(bytes.subarray(off, off + len)));
    } catch {
      throw new SmojParseError(off, `name table entry ${i} is not UTF-8`);
    }
    off += len;
  }

  const payloadStart = off;
  const fields: Array<[keyof GaussianData, number]> = [
    ["positions", 3],
    ["scales", 3],
    ["orientations", 4],
    ["colors", 3],
    ["opacities", 1],
  ];
  const readSet = (label: string): GaussianData => {
    const set = emptyGaussianData(m);
    for (const [name, width] of fields) {
      const count = m * width;
      const nbytes = count * 4;
      if (off + nbytes > buf.byteLength - 4) {
        throw new SmojParseError(off, `truncated in ${label}.${name}`);
      }
      const arr = new Float32Array(count);
      for (let i = 0; i < count; i++) {
        arr[i] = view.getFloat32(off + i * 4, true);
        if (!Number.isFinite(arr[i])) {
          throw new SmojParseError(off, `non-finite value in ${label}.${name}`);
        }
      }
      (set as unknown as Record<string, unknown>)[name as string] = arr;
      off += nbytes;
    }
    return set;
  };

  const rest = readSet("rest");
  const components: GaussianData[] = [];
  for (let i = 0; i < k; i++) {
    components.push(readSet(`component[${i}]`));
  }
  if (off + 4 !== buf.byteLength) {
    throw new SmojParseError(off, "trailing bytes after payload");
  }
  const stored = view.getUint32(off, true);
  const actual = crc32(bytes.subarray(payloadStart, off));
  if (stored !== actual) {
    throw new SmojParseError(off, `payload CRC mismatch (stored 0x${stored.toString(16)}, computed 0x${actual.toString(16)})`);
  }
  return { m, k, channels, rest, components };
}
