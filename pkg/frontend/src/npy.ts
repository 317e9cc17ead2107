/**
 * Minimal NPY v1.0 reader for the noise container tensor format:
 * little-endian float32/float64, C-contiguous.
 */

export type NpyData = Float32Array | Float64Array;

export interface NpyArray {
  data: NpyData;
  shape: number[];
  descr: "<f4" | "<f8";
}

const MAGIC = "\x93NUMPY";

function parseHeaderText(raw: string): { descr: string; fortranOrder: boolean; shape: number[] } {
  const descr = /'descr':\s*'([^']+)'/.exec(raw)?.[1] ?? "";
  const fortranOrder = /'fortran_order':\s*(True|False)/.exec(raw)?.[1] === "True";
  const shapeText = /'shape':\s*\(([^)]*)\)/.exec(raw)?.[1] ?? "";
  const shape = shapeText
    .split(",")
    .map((part) => part.trim())
    .filter((part) => part.length > 0)
    .map((part) => Number.parseInt(part, 10));
  return { descr, fortranOrder, shape };
}

export function parseNpy(bytes: Uint8Array): NpyArray {
  if (bytes.length < 10) {
    throw new Error("not an NPY file: too short");
  }
  const magic = String.fromCharCode(...bytes.subarray(0, 6));
  if (magic !== MAGIC) {
    throw new Error("not an NPY file: bad magic");
  }
  const major = bytes[6];
  const minor = bytes[7];
  if (major !== 1 || minor !== 0) {
    throw new Error(`unsupported NPY version ${major}.${minor}; containers use 1.0`);
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const headerLength = view.getUint16(8, true);
  const headerEnd = 10 + headerLength;
  if (bytes.length < headerEnd) {
    throw new Error("truncated NPY header");
  }
  const header = parseHeaderText(new TextDecoder("latin1").decode(bytes.subarray(10, headerEnd)));
  if (header.fortranOrder) {
    throw new Error("fortran-ordered tensors are not supported");
  }
  if (header.shape.some((s) => !Number.isFinite(s) || s < 1)) {
    throw new Error(`bad NPY shape (${header.shape.join(", ")})`);
  }
  const count = header.shape.reduce((acc, s) => acc * s, 1);
  const itemSize = header.descr === "<f4" ? 4 : header.descr === "<f8" ? 8 : 0;
  if (itemSize === 0) {
    throw new Error(`unsupported dtype ${header.descr || "unknown"}; expected <f4 or <f8`);
  }
  if (bytes.length - headerEnd !== count * itemSize) {
    throw new Error(
      `NPY payload is ${bytes.length - headerEnd} bytes, expected ${count * itemSize}`
    );
  }
  // Copy into a fresh buffer: guarantees alignment regardless of how the
  // file bytes were pooled.
  const payload = bytes.slice(headerEnd, headerEnd + count * itemSize);
  const data =
    itemSize === 4 ? new Float32Array(payload.buffer) : new Float64Array(payload.buffer);
  return { data, shape: header.shape, descr: header.descr as "<f4" | "<f8" };
}
