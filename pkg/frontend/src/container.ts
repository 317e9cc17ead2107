/**
 * Verified loading of noise containers: an NPY tensor plus a JSON sidecar
 * whose SHA-256 checksum must match the tensor file bytes.  Loading never
 * mutates the files and adds no randomness.
 */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

import { parseNpy, type NpyData } from "./npy.js";

export class IntegrityError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "IntegrityError";
  }
}

export class ShapeError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ShapeError";
  }
}

export interface SidecarRng {
  family: string;
  version: string;
  gaussian_transform: string;
}

export interface Sidecar {
  format_version: number;
  spec: { kind: string; k: number; d: number; [key: string]: unknown };
  seed: number;
  stream_id: number;
  rng: SidecarRng;
  created_unix_seconds: number;
  checksum: string;
  dtype: "float32" | "float64";
  shape: number[];
  refined?: boolean;
}

export interface LoadedBatch {
  /** Flattened tensor values in row-major order. */
  data: NpyData;
  /** Tensor shape as written: (k, d) or (k, C, H, W). */
  shape: number[];
  k: number;
  /** Flattened noise dimension (product of trailing dims). */
  d: number;
  dtype: "float32" | "float64";
  metadata: Sidecar;
}

export function sidecarPath(tensorPath: string): string {
  return `${tensorPath}.json`;
}

/** One noise vector of the batch as a copied Float64Array. */
export function vectorOf(batch: LoadedBatch, index: number): Float64Array {
  if (index < 0 || index >= batch.k) {
    throw new RangeError(`vector index ${index} out of range for k=${batch.k}`);
  }
  const out = new Float64Array(batch.d);
  for (let j = 0; j < batch.d; j += 1) {
    out[j] = batch.data[index * batch.d + j];
  }
  return out;
}

/** Cast to float64, warning when an actual conversion happens. */
export function asFloat64(batch: LoadedBatch): Float64Array {
  if (batch.data instanceof Float64Array) {
    return batch.data;
  }
  console.warn(
    `noisecouple-adapter: casting ${batch.dtype} container to float64 (${batch.shape.join("x")})`
  );
  return Float64Array.from(batch.data);
}

export function loadContainer(tensorPath: string): LoadedBatch {
  const payload = readFileSync(tensorPath);
  const sidecarRaw = readFileSync(sidecarPath(tensorPath), "utf-8");
  const sidecar = JSON.parse(sidecarRaw) as Sidecar;
  if (sidecar.format_version !== 1) {
    throw new IntegrityError(`unsupported container format_version ${sidecar.format_version}`);
  }
  const digest = createHash("sha256").update(payload).digest("hex");
  if (digest !== sidecar.checksum) {
    throw new IntegrityError(
      `checksum mismatch: tensor hashes to ${digest}, sidecar says ${sidecar.checksum}`
    );
  }
  const tensor = parseNpy(new Uint8Array(payload.buffer, payload.byteOffset, payload.byteLength));
  const declared = sidecar.dtype === "float32" ? "<f4" : sidecar.dtype === "float64" ? "<f8" : "";
  if (tensor.descr !== declared) {
    throw new ShapeError(`tensor dtype ${tensor.descr} does not match sidecar ${sidecar.dtype}`);
  }
  if (tensor.shape.join(",") !== sidecar.shape.join(",")) {
    throw new ShapeError(
      `tensor shape (${tensor.shape.join(", ")}) differs from sidecar (${sidecar.shape.join(", ")})`
    );
  }
  const k = tensor.shape[0];
  const d = tensor.shape.slice(1).reduce((acc, s) => acc * s, 1);
  if (k !== sidecar.spec.k) {
    throw new ShapeError(`tensor leading dim ${k} does not match spec k=${sidecar.spec.k}`);
  }
  if (d !== sidecar.spec.d) {
    throw new ShapeError(`tensor trailing dims give ${d}, spec says d=${sidecar.spec.d}`);
  }
  return { data: tensor.data, shape: tensor.shape, k, d, dtype: sidecar.dtype, metadata: sidecar };
}
