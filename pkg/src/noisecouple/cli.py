"""Command-line surface: sample/export couplings, validate, analyze, optimize.

Everything on stdout is machine-readable (JSON, or CSV for sweeps); human
prose goes to stderr.  Exit codes: 0 success (and, for ``validate``, all
checks passed), 1 validation checks failed, 2 configuration or feasibility
error (JSON error document on stderr), 3 I/O failure, 4 container integrity
failure.  NOISECOUPLE_THREADS caps internal parallelism (0 = auto).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    LinearFeatureMap,
    RBFSimilaritySpec,
    coupling_effect_first_order,
    local_linear_prediction,
    pairwise_separation,
    rbf_similarity_closed_form,
    rbf_similarity_mc,
    separation_bound,
)
from .container import IntegrityError, load_container, write_container
from .core import (
    CouplingError,
    CouplingKind,
    CouplingMatrix,
    CouplingSpec,
    FeasibilityError,
    correlation_of,
    factor_correlation,
    feasible_interval,
)
from .generators import (
    make_brightness_surrogate,
    make_linear,
    make_random_feature,
    noise_objective,
    objective_brightness_cluster,
    objective_pairwise_l2,
    objective_rbf,
)
from .optimize import AmortizedConfig, RefineConfig, optimize_coupling, refine_noise, write_trajectory
from .samplers import RandomStream, sample, sample_many
from .validation import validate_cross_covariance, validate_marginals

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INTEGRITY = 4


class CliError(Exception):
    def __init__(self, message: str, **extra):
        super().__init__(message)
        self.extra = extra


def _emit(doc) -> None:
    json.dump(doc, sys.stdout)
    sys.stdout.write("\n")


def _fail(code: int, kind: str, message: str, **extra) -> int:
    json.dump({"error": kind, "message": message, **extra}, sys.stderr)
    sys.stderr.write("\n")
    return code


# ---------------------------------------------------------------------------
# Spec construction from flags
# ---------------------------------------------------------------------------


def add_coupling_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--coupling",
        choices=["identical", "independent", "antithetic", "repulsive", "equicorr", "matrix", "subspace"],
    )
    parser.add_argument("--k", type=int)
    parser.add_argument("--dim", type=int)
    parser.add_argument("--c", type=float, help="equicorrelation parameter")
    parser.add_argument("--matrix", type=Path, help="coupling matrix file (.npy or .json)")
    parser.add_argument("--subspace", type=Path, help="subspace description file (.json)")


def _load_matrix_file(path: Path) -> np.ndarray:
    if path.suffix == ".json":
        return np.asarray(json.loads(path.read_text(encoding="utf-8")), dtype=np.float64)
    return np.load(path)


def _subspace_basis(doc: dict, d: int) -> np.ndarray:
    if "basis" in doc:
        return np.asarray(doc["basis"], dtype=np.float64)
    if "coords" in doc:
        coords = [int(c) for c in doc["coords"]]
        basis = np.zeros((d, len(coords)))
        for j, c in enumerate(coords):
            basis[c, j] = 1.0
        return basis
    raise CliError("subspace file needs either 'basis' or 'coords'")


def _inner_spec(doc: dict, k: int, d: int) -> CouplingSpec:
    kind = doc.get("kind")
    if kind in (None, "subspace"):
        raise CliError(f"invalid component coupling kind {kind!r}")
    data = {"kind": kind, "k": k, "d": d}
    if "c" in doc:
        data["c"] = doc["c"]
    if "entries" in doc:
        data["entries"] = doc["entries"]
    return CouplingSpec.from_json_dict(data)


def spec_from_args(args) -> CouplingSpec:
    if args.coupling is None:
        raise CliError("--coupling is required")
    if args.k is None or args.dim is None:
        raise CliError("--k and --dim are required")
    k, d = args.k, args.dim
    kind = args.coupling
    if kind == "identical":
        return CouplingSpec.identical(k, d)
    if kind == "independent":
        return CouplingSpec.independent(k, d)
    if kind == "antithetic":
        if k != 2:
            raise CliError(f"antithetic coupling requires --k 2, got {k}")
        return CouplingSpec.antithetic(d)
    if kind == "repulsive":
        return CouplingSpec.repulsive(k, d)
    if kind == "equicorr":
        if args.c is None:
            raise CliError("--c is required for equicorr coupling")
        return CouplingSpec.equicorrelated(k, d, args.c)
    if kind == "matrix":
        if args.matrix is None:
            raise CliError("--matrix FILE is required for matrix coupling")
        entries = _load_matrix_file(args.matrix)
        return CouplingSpec.from_matrix(CouplingMatrix(entries), d)
    if kind == "subspace":
        if args.subspace is None:
            raise CliError("--subspace FILE is required for subspace coupling")
        doc = json.loads(args.subspace.read_text(encoding="utf-8"))
        basis = _subspace_basis(doc, d)
        inner = _inner_spec(doc.get("inner", {"kind": "identical"}), k, d)
        outer = _inner_spec(doc.get("outer", {"kind": "independent"}), k, d)
        return CouplingSpec.on_subspace(basis, inner, outer)
    raise CliError(f"unknown coupling {kind!r}")


def _parse_shape(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(part) for part in text.lower().split("x"))
    except ValueError:
        raise CliError(f"bad --shape {text!r}; expected CxHxW") from None
    if not dims or any(s < 1 for s in dims):
        raise CliError(f"bad --shape {text!r}; dims must be positive")
    return dims


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_sample(args) -> int:
    spec = spec_from_args(args)
    shape = _parse_shape(args.shape) if args.shape else None
    if shape is not None and int(np.prod(shape)) != spec.d:
        raise CliError(f"--shape {args.shape} is inconsistent with --dim {spec.d}")
    batch = sample(spec, RandomStream(args.seed, args.stream_id))
    dtype = {"f32": "float32", "f64": "float64"}[args.dtype]
    try:
        sidecar = write_container(batch, args.out, dtype=dtype, shape=shape)
    except OSError as exc:
        return _fail(EXIT_IO, "io", f"failed to write container: {exc}")
    _emit(
        {
            "tensor": str(args.out),
            "sidecar": str(args.out) + ".json",
            "checksum": sidecar["checksum"],
            "shape": sidecar["shape"],
            "dtype": sidecar["dtype"],
        }
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.infile is not None:
        loaded = load_container(args.infile)  # IntegrityError -> exit 4
        spec = loaded.batch.spec
        seed = args.seed if args.seed is not None else loaded.batch.seed
    else:
        spec = spec_from_args(args)
        seed = args.seed if args.seed is not None else 0
    stream = RandomStream(seed)
    marginals = validate_marginals(spec, stream, args.n)
    cross = validate_cross_covariance(spec, stream.child(1_000_000), args.n)
    ok = marginals.passed and cross.passed
    _emit(
        {
            "marginals": marginals.to_json_dict(),
            "cross_covariance": cross.to_json_dict(),
            "pass": ok,
        }
    )
    return EXIT_OK if ok else EXIT_FAIL


def cmd_feasibility(args) -> int:
    lo, hi = feasible_interval(args.k)
    _emit(
        {
            "k": args.k,
            "c": args.c,
            "feasible": bool(lo <= args.c <= hi),
            "interval": [lo, hi],
        }
    )
    return EXIT_OK


def _feature_map(args, d: int) -> LinearFeatureMap:
    if args.linear_J == "identity":
        m = args.m if args.m is not None else d
        if m != d:
            raise CliError(f"identity feature map needs --m equal to --dim ({d})")
        return LinearFeatureMap.identity(d)
    m = args.m if args.m is not None else 3
    rng = np.random.default_rng(args.feature_seed)
    return LinearFeatureMap(rng.standard_normal((m, d)))


def cmd_analyze(args) -> int:
    if args.task == "separation":
        if args.dim is None and args.linear_J == "identity" and args.m is not None:
            args.dim = args.m
        spec = spec_from_args(args)
        fmap = _feature_map(args, spec.d)
        batches = sample_many(spec, RandomStream(args.seed), args.n)
        est = pairwise_separation(batches, fmap)
        doc = {
            "task": "separation",
            "estimate": est.estimate,
            "stderr": est.stderr,
            "n": est.n,
            "bound": separation_bound(spec.k, fmap),
        }
        if spec.kind in (CouplingKind.EQUICORRELATED, CouplingKind.REPULSIVE):
            c = spec.c if spec.kind is CouplingKind.EQUICORRELATED else -1.0 / (spec.k - 1)
            doc["prediction"] = local_linear_prediction(spec.k, c, fmap)
        _emit(doc)
        return EXIT_OK
    if args.task == "rbf":
        spec = spec_from_args(args)
        fmap = _feature_map(args, spec.d)
        rbf = RBFSimilaritySpec(map=fmap, tau=args.tau)
        result = rbf_similarity_mc(spec, rbf, RandomStream(args.seed), args.n)
        _emit(
            {
                "task": "rbf",
                "mc": result.mc.to_json_dict(),
                "exact": result.exact,
                "closed_form_bound": rbf_similarity_closed_form(spec.k, rbf),
            }
        )
        return EXIT_OK
    if args.task == "effect":
        spec = spec_from_args(args)
        corr = correlation_of(spec)
        if spec.kind is CouplingKind.SUBSPACE:
            raise CliError("effect analysis needs a single sample correlation, not a subspace pair")
        objective = noise_objective(objective_pairwise_l2(spec.k, average=False))
        report = coupling_effect_first_order(
            objective, corr, spec.d, RandomStream(args.seed), args.n
        )
        _emit({"task": "effect", **report.to_json_dict()})
        return EXIT_OK
    if args.task == "sweep":
        if args.k is None or args.dim is None:
            raise CliError("--k and --dim are required for sweep")
        k, d = args.k, args.dim
        fmap = _feature_map(args, d)
        lo, _ = feasible_interval(k)
        grid = [frac * lo for frac in (0.0, 0.25, 0.5, 0.75, 1.0)]
        writer = sys.stdout
        writer.write("c,k,metric,estimate,stderr\n")
        for idx, c in enumerate(grid):
            spec = CouplingSpec.equicorrelated(k, d, c)
            batches = sample_many(spec, RandomStream(args.seed, idx * args.n), args.n)
            est = pairwise_separation(batches, fmap)
            writer.write(f"{c},{k},separation,{est.estimate},{est.stderr}\n")
        return EXIT_OK
    raise CliError(f"unknown analyze task {args.task!r}")


def _generator_from_config(doc: dict):
    kind = doc.get("type")
    if kind == "linear_identity":
        return make_linear(np.eye(int(doc["d"])))
    if kind == "linear":
        J = np.asarray(doc["J"], dtype=np.float64)
        a = np.asarray(doc["a"], dtype=np.float64) if "a" in doc else None
        return make_linear(J, a)
    if kind == "random_feature":
        return make_random_feature(
            seed=int(doc.get("seed", 0)),
            d=int(doc["d"]),
            m=int(doc["m"]),
            width=int(doc.get("width", 32)),
        )
    if kind == "brightness":
        return make_brightness_surrogate(seed=int(doc.get("seed", 0)), d=int(doc["d"]))
    raise CliError(f"unknown generator type {kind!r}")


def _objective_from_config(doc: dict, k: int):
    kind = doc.get("type")
    if kind == "pairwise_l2":
        return objective_pairwise_l2(k, average=bool(doc.get("average", True)))
    if kind == "rbf":
        return objective_rbf(k, tau=float(doc.get("tau", 1.0)))
    if kind == "brightness_cluster":
        return objective_brightness_cluster(lam=float(doc.get("lam", 0.35)), k=k)
    raise CliError(f"unknown objective type {kind!r}")


def cmd_optimize(args) -> int:
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.task == "amortized":
        k = int(doc["k"])
        generator = _generator_from_config(doc["generator"])
        cfg = AmortizedConfig(
            k=k,
            r=int(doc.get("r", k)),
            objective=_objective_from_config(doc["objective"], k),
            generator=generator,
            d=generator.d,
            maximize=doc.get("maximize"),
            steps=int(doc.get("steps", AmortizedConfig.steps)),
            step_size=float(doc.get("step_size", AmortizedConfig.step_size)),
            mc_batch=int(doc.get("mc_batch", AmortizedConfig.mc_batch)),
            seed=int(doc.get("seed", 0)),
            init=doc.get("init", "identity_rows"),
            cosine_decay=bool(doc.get("cosine_decay", True)),
            crn_steps=int(doc.get("crn_steps", 1)),
        )
        trajectory = optimize_coupling(cfg)
        out = doc.get("out", "trajectory.jsonl")
        try:
            write_trajectory(trajectory, out)
        except OSError as exc:
            return _fail(EXIT_IO, "io", f"failed to write trajectory: {exc}")
        final = trajectory[-1]
        _emit(
            {
                "task": "amortized",
                "out": str(out),
                "steps": final.step,
                "final_objective": final.objective_estimate,
                "final_correlation": (final.matrix.entries @ final.matrix.entries.T).tolist(),
            }
        )
        return EXIT_OK
    if args.task == "refine":
        loaded = load_container(doc["in"])
        generator = _generator_from_config(doc["generator"])
        target = doc.get("target")
        cfg = RefineConfig(
            generator=generator,
            optimize_coords=tuple(int(c) for c in doc["optimize_coords"]),
            steps=int(doc.get("steps", 100)),
            step_size=float(doc.get("step_size", 0.1)),
            target=np.asarray(target, dtype=np.float64) if target is not None else None,
            target_coords=(
                tuple(int(c) for c in doc["target_coords"]) if "target_coords" in doc else None
            ),
            objective=(
                _objective_from_config(doc["objective"], loaded.batch.k)
                if "objective" in doc
                else None
            ),
        )
        refined = refine_noise(loaded.batch, cfg)
        out = doc.get("out", str(doc["in"]) + ".refined.npy")
        try:
            sidecar = write_container(refined, out, dtype=loaded.dtype)
        except OSError as exc:
            return _fail(EXIT_IO, "io", f"failed to write container: {exc}")
        _emit({"task": "refine", "out": str(out), "checksum": sidecar["checksum"]})
        return EXIT_OK
    raise CliError(f"unknown optimize task {args.task!r}")


def cmd_export_matrix(args) -> int:
    spec = spec_from_args(args)
    if spec.kind is CouplingKind.SUBSPACE:
        raise CliError("subspace couplings have no single sample correlation to factor")
    corr = correlation_of(spec)
    r = args.r if args.r is not None else spec.k
    matrix = factor_correlation(corr, r)
    try:
        np.save(args.out, matrix.entries)
    except OSError as exc:
        return _fail(EXIT_IO, "io", f"failed to write matrix: {exc}")
    _emit({"out": str(args.out), "k": matrix.k, "r": matrix.r})
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisecouple",
        description="Design, sample, validate, and optimize Gaussian noise couplings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sample = sub.add_parser("sample", help="draw one coupled batch and export it")
    add_coupling_flags(p_sample)
    p_sample.add_argument("--shape", help="trailing tensor shape CxHxW (product must equal --dim)")
    p_sample.add_argument("--seed", type=int, required=True)
    p_sample.add_argument("--stream-id", type=int, default=0)
    p_sample.add_argument("--out", type=Path, required=True)
    p_sample.add_argument("--dtype", choices=["f32", "f64"], default="f32")
    p_sample.set_defaults(func=cmd_sample)

    p_val = sub.add_parser("validate", help="statistical validation of a coupling or container")
    add_coupling_flags(p_val)
    p_val.add_argument("--in", dest="infile", type=Path, help="container to verify and validate")
    p_val.add_argument("--n", type=int, default=200_000)
    p_val.add_argument("--seed", type=int)
    p_val.set_defaults(func=cmd_validate)

    p_feas = sub.add_parser("feasibility", help="equicorrelation feasibility interval")
    p_feas.add_argument("--k", type=int, required=True)
    p_feas.add_argument("--c", type=float, required=True)
    p_feas.set_defaults(func=cmd_feasibility)

    p_an = sub.add_parser("analyze", help="diversity and effect analyses")
    p_an.add_argument("--task", choices=["separation", "rbf", "effect", "sweep"], required=True)
    add_coupling_flags(p_an)
    p_an.add_argument("--linear-J", choices=["identity", "random"], default="identity")
    p_an.add_argument("--m", type=int, help="feature dimension")
    p_an.add_argument("--feature-seed", type=int, default=0)
    p_an.add_argument("--tau", type=float, default=1.0)
    p_an.add_argument("--n", type=int, default=20_000)
    p_an.add_argument("--seed", type=int, default=0)
    p_an.set_defaults(func=cmd_analyze)

    p_opt = sub.add_parser("optimize", help="amortized coupling learning / noise refinement")
    p_opt.add_argument("--task", choices=["amortized", "refine"], required=True)
    p_opt.add_argument("--config", type=Path, required=True)
    p_opt.set_defaults(func=cmd_optimize)

    p_exp = sub.add_parser("export-matrix", help="factor a spec's correlation into a coupling matrix")
    add_coupling_flags(p_exp)
    p_exp.add_argument("--r", type=int, help="factor width (default k)")
    p_exp.add_argument("--out", type=Path, required=True)
    p_exp.set_defaults(func=cmd_export_matrix)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FeasibilityError as exc:
        return _fail(EXIT_CONFIG, "feasibility", str(exc), interval=[exc.lower, exc.upper])
    except IntegrityError as exc:
        return _fail(EXIT_INTEGRITY, "integrity", str(exc))
    except (CliError,) as exc:
        return _fail(EXIT_CONFIG, "config", str(exc), **exc.extra)
    except (CouplingError, ValueError, KeyError, json.JSONDecodeError) as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, "io", str(exc))


if __name__ == "__main__":
    sys.exit(main())
