export { parseNpy, type NpyArray, type NpyData } from "./npy.js";
export {
  IntegrityError,
  ShapeError,
  loadContainer,
  sidecarPath,
  vectorOf,
  asFloat64,
  type LoadedBatch,
  type Sidecar,
  type SidecarRng,
} from "./container.js";
export {
  asLatents,
  makeSyntheticGenerator,
  pairwiseSeparation,
  PipelineInvocationError,
  ShapeMismatch,
  type AdapterRun,
  type AsLatentsOptions,
  type CallLogEntry,
  type Latents,
  type PipelineCallable,
  type SyntheticGenerator,
} from "./adapter.js";
