/**
 * Bridge a loaded noise batch into any pipeline that accepts initial latents.
 *
 * The adapter adds no randomness and performs no re-noising: the only
 * transformation it ever applies is an optional user-supplied scale factor,
 * which is recorded in the call log.  Some schedulers pre-scale initial
 * latents by a sigma of their own; the adapter never guesses one.
 */

import type { LoadedBatch } from "./container.js";

export interface Latents {
  /** One row per gallery member, flattened to length d. */
  vectors: Float64Array[];
  /** Tensor shape as exported, e.g. [k, C, H, W]. */
  shape: number[];
}

export type PipelineCallable<T> = (latents: Latents) => T;

export interface CallLogEntry {
  scale: number;
  shape: number[];
  seed: number;
  streamId: number;
  couplingKind: string;
}

export interface AdapterRun<T> {
  outputs: T;
  callLog: CallLogEntry;
}

export class PipelineInvocationError extends Error {
  readonly metadata: LoadedBatch["metadata"];

  constructor(message: string, metadata: LoadedBatch["metadata"], cause: unknown) {
    super(message);
    this.name = "PipelineInvocationError";
    this.metadata = metadata;
    (this as { cause?: unknown }).cause = cause;
  }
}

export interface AsLatentsOptions {
  /** Optional multiplicative factor applied to every coordinate. */
  scale?: number;
}

/**
 * Invoke the pipeline once with the whole gallery as initial latents.
 * Errors thrown by the callable are re-raised with the container metadata
 * attached.
 */
export function asLatents<T>(
  batch: LoadedBatch,
  pipeline: PipelineCallable<T>,
  options: AsLatentsOptions = {}
): AdapterRun<T> {
  const scale = options.scale ?? 1.0;
  const vectors: Float64Array[] = [];
  for (let i = 0; i < batch.k; i += 1) {
    const row = new Float64Array(batch.d);
    for (let j = 0; j < batch.d; j += 1) {
      row[j] = batch.data[i * batch.d + j] * scale;
    }
    vectors.push(row);
  }
  const latents: Latents = { vectors, shape: batch.shape };
  let outputs: T;
  try {
    outputs = pipeline(latents);
  } catch (err) {
    const reason = err instanceof Error ? err.message : String(err);
    throw new PipelineInvocationError(
      `pipeline callable failed on container (kind=${batch.metadata.spec.kind}, ` +
        `seed=${batch.metadata.seed}, shape=${batch.shape.join("x")}): ${reason}`,
      batch.metadata,
      err
    );
  }
  return {
    outputs,
    callLog: {
      scale,
      shape: batch.shape,
      seed: batch.metadata.seed,
      streamId: batch.metadata.stream_id,
      couplingKind: batch.metadata.spec.kind,
    },
  };
}

// ---------------------------------------------------------------------------
// Offline demo generator: a deterministic affine map x = a + J z with a
// diagonal J, built from a tiny seeded PRNG so no model weights are needed.
// ---------------------------------------------------------------------------

function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface SyntheticGenerator {
  (latents: Latents): Float64Array[];
  readonly gains: Float64Array;
  readonly offset: Float64Array;
}

/**
 * Deterministic synthetic "generator": per-coordinate gains in [0.5, 1.5)
 * plus an offset, both fixed by the seed.  Same latents in, same outputs
 * out, bit for bit.
 */
export function makeSyntheticGenerator(seed: number, d: number): SyntheticGenerator {
  const rand = mulberry32(seed);
  const gains = new Float64Array(d);
  const offset = new Float64Array(d);
  for (let j = 0; j < d; j += 1) {
    gains[j] = 0.5 + rand();
    offset[j] = 2.0 * rand() - 1.0;
  }
  const generator = ((latents: Latents) => {
    return latents.vectors.map((z) => {
      if (z.length !== d) {
        throw new ShapeMismatch(`latent has ${z.length} coordinates, generator expects ${d}`);
      }
      const x = new Float64Array(d);
      for (let j = 0; j < d; j += 1) {
        x[j] = offset[j] + gains[j] * z[j];
      }
      return x;
    });
  }) as SyntheticGenerator;
  Object.defineProperty(generator, "gains", { value: gains });
  Object.defineProperty(generator, "offset", { value: offset });
  return generator;
}

export class ShapeMismatch extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ShapeMismatch";
  }
}

/** Average pairwise squared distance of a gallery of output vectors. */
export function pairwiseSeparation(outputs: Float64Array[]): number {
  const k = outputs.length;
  if (k < 2) {
    throw new RangeError("pairwise separation needs at least two outputs");
  }
  let total = 0;
  for (let i = 0; i < k; i += 1) {
    for (let j = i + 1; j < k; j += 1) {
      let sq = 0;
      const a = outputs[i];
      const b = outputs[j];
      for (let l = 0; l < a.length; l += 1) {
        const diff = a[l] - b[l];
        sq += diff * diff;
      }
      total += sq;
    }
  }
  return (2 * total) / (k * (k - 1));
}
