import { execFileSync } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

/** The primary toolkit's CLI, reached through the module entry point. */
const PYTHON = process.env.NOISECOUPLE_PYTHON ?? "python3";

export function makeWorkDir(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix));
}

export interface SampleOptions {
  coupling: string;
  k: number;
  dim: number;
  seed: number;
  streamId?: number;
  out: string;
  dtype?: "f32" | "f64";
  shape?: string;
  c?: number;
}

export function sampleContainer(options: SampleOptions): string {
  const args = [
    "-m",
    "noisecouple",
    "sample",
    "--coupling",
    options.coupling,
    "--k",
    String(options.k),
    "--dim",
    String(options.dim),
    "--seed",
    String(options.seed),
    "--out",
    options.out,
    "--dtype",
    options.dtype ?? "f32",
  ];
  if (options.streamId !== undefined) {
    args.push("--stream-id", String(options.streamId));
  }
  if (options.shape) {
    args.push("--shape", options.shape);
  }
  if (options.c !== undefined) {
    args.push("--c", String(options.c));
  }
  execFileSync(PYTHON, args, { stdio: ["ignore", "pipe", "pipe"] });
  return options.out;
}
