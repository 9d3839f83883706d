"""Command-line interface.

Subcommands: sample-target, design, evaluate, benchmark, sweep-time,
sweep-field, contour.  Exit codes: 0 success, 1 validation error,
2 numerical failure.  Every error is reported as a single JSON line on
stderr.  All runs are deterministic given the config and seed; output
files carry no timing metadata.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import fileio
from .benchmarking import (
    BenchmarkConfig,
    ErrorModel,
    MapImplementation,
    run_benchmark,
)
from .errors import NumericalError
from .grape import DesignConfig, design
from .objectives import DEFAULT_FIELD_RADIUS, PerturbationEnsemble
from .propagation import FieldTrajectory, total_unitary
from .spin_model import PhysicalParams, cesium
from .sweeps import (
    FieldGridSpec,
    TimeGridSpec,
    contour_area,
    sweep_field_grid,
    sweep_time_grid,
    symmetric_field_grid,
)
from .targets import RngStream, sample_target


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as validation errors (exit 1)."""

    def error(self, message):
        raise ValueError(message)


# ---------------------------------------------------------------------------
# run configuration

_DESIGN_KEYS = {
    "total_time", "dt", "target_fidelity", "max_iterations",
    "gradient_tolerance", "n_seeds", "method", "lbfgs_memory",
    "stop_on_success",
}

_ENSEMBLE_PRESETS = ("none", "two_point", "four_point", "custom")


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of a --config file plus CLI overrides."""

    params: PhysicalParams = field(default_factory=PhysicalParams)
    ensemble: PerturbationEnsemble = field(default_factory=PerturbationEnsemble.nominal)
    design: dict = field(default_factory=dict)
    benchmark: dict = field(default_factory=dict)
    sweep_time: dict = field(default_factory=dict)
    sweep_field: dict = field(default_factory=dict)
    rng_seed: int = 0
    workers: int = 1


def _reject_unknown(obj: dict, allowed: set[str], where: str):
    if not isinstance(obj, dict):
        raise ValueError(f"{where}: expected an object")
    unknown = obj.keys() - allowed
    if unknown:
        raise ValueError(f"{where}: unknown key {sorted(unknown)[0]!r}")


def _parse_ensemble(obj: dict, where: str) -> PerturbationEnsemble:
    _reject_unknown(obj, {"preset", "radius", "members"}, where)
    preset = obj.get("preset", "none")
    if preset not in _ENSEMBLE_PRESETS:
        raise ValueError(f"{where}.preset must be one of {_ENSEMBLE_PRESETS}")
    if preset == "custom":
        if "members" not in obj:
            raise ValueError(f"{where}: custom preset requires members")
        return fileio.ensemble_from_dict({"members": obj["members"]}, where)
    radius = float(obj.get("radius", DEFAULT_FIELD_RADIUS))
    if preset == "none":
        return PerturbationEnsemble.nominal()
    if preset == "two_point":
        return PerturbationEnsemble.two_point(radius)
    return PerturbationEnsemble.four_point(radius)


def load_run_config(path: str | None, *, seed: int | None, workers: int | None) -> RunConfig:
    obj = {}
    if path is not None:
        obj = fileio.load_json(path)
    _reject_unknown(
        obj,
        {"manifold", "params", "ensemble", "design", "benchmark",
         "sweep_time", "sweep_field", "rng_seed", "workers"},
        "config",
    )
    params_obj = dict(obj.get("params", {}))
    if "manifold" in obj:
        params_obj.setdefault("manifold", obj["manifold"])
    params = fileio.params_from_dict(params_obj, "config.params")
    ensemble = _parse_ensemble(obj.get("ensemble", {}), "config.ensemble")
    design_obj = obj.get("design", {})
    _reject_unknown(design_obj, _DESIGN_KEYS, "config.design")
    benchmark_obj = obj.get("benchmark", {})
    _reject_unknown(
        benchmark_obj,
        {"lengths", "n_per_length", "state_map", "error_model",
         "atom_number", "eps_s_samples"},
        "config.benchmark",
    )
    sweep_time_obj = obj.get("sweep_time", {})
    _reject_unknown(
        sweep_time_obj,
        {"t_values", "dt_values", "targets"},
        "config.sweep_time",
    )
    sweep_field_obj = obj.get("sweep_field", {})
    _reject_unknown(
        sweep_field_obj,
        {"dbi_values", "dbf_values", "radius", "multiples", "points"},
        "config.sweep_field",
    )
    rng_seed = obj.get("rng_seed", 0)
    if seed is not None:
        rng_seed = seed
    if not isinstance(rng_seed, int) or rng_seed < 0:
        raise ValueError("config.rng_seed must be a nonnegative integer")
    n_workers = obj.get("workers", 1)
    if workers is not None:
        n_workers = workers
    if not isinstance(n_workers, int) or n_workers < 1:
        raise ValueError("workers must be a positive integer")
    return RunConfig(
        params=params,
        ensemble=ensemble,
        design=dict(design_obj),
        benchmark=dict(benchmark_obj),
        sweep_time=dict(sweep_time_obj),
        sweep_field=dict(sweep_field_obj),
        rng_seed=rng_seed,
        workers=n_workers,
    )


def _design_config(cfg: RunConfig, **overrides) -> DesignConfig:
    settings = {
        "total_time": 600e-6,
        "dt": 4e-6,
        **cfg.design,
        **overrides,
    }
    return DesignConfig(
        params=cfg.params,
        ensemble=cfg.ensemble,
        rng_seed=cfg.rng_seed,
        **settings,
    )


def _state_map_config(cfg: RunConfig) -> DesignConfig | None:
    obj = cfg.benchmark.get("state_map", {})
    if obj is None:
        return None  # exact prep/readout maps
    _reject_unknown(obj, _DESIGN_KEYS, "config.benchmark.state_map")
    settings = {"total_time": 100e-6, "dt": 5e-6, **obj}
    return DesignConfig(
        params=cfg.params,
        ensemble=PerturbationEnsemble.nominal(),
        rng_seed=cfg.rng_seed,
        **settings,
    )


def _error_model(cfg: RunConfig) -> ErrorModel:
    obj = cfg.benchmark.get("error_model", {})
    _reject_unknown(
        obj, {"ensemble", "rabi_scale_sigma", "spam_error"}, "config.benchmark.error_model"
    )
    ensemble = PerturbationEnsemble.nominal()
    if "ensemble" in obj:
        ensemble = _parse_ensemble(obj["ensemble"], "config.benchmark.error_model.ensemble")
    return ErrorModel(
        field_ensemble=ensemble,
        rabi_scale_sigma=tuple(obj.get("rabi_scale_sigma", (0.0, 0.0, 0.0))),
        spam_error=float(obj.get("spam_error", 0.0)),
    )


def _parse_field_spec(spec: str) -> FieldTrajectory:
    parts = spec.split(":")
    try:
        if parts[0] == "static" and len(parts) == 2:
            return FieldTrajectory.static(float(parts[1]))
        if parts[0] == "ramp" and len(parts) == 3:
            return FieldTrajectory.linear_ramp(float(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise ValueError(f"bad field spec {spec!r}: {exc}") from exc
    raise ValueError(f"bad field spec {spec!r}; use static:X or ramp:A:B")


def _say(args, message: str):
    if not args.quiet:
        print(message)


# ---------------------------------------------------------------------------
# subcommands

def _cmd_sample_target(args) -> int:
    cfg = load_run_config(args.config, seed=args.seed, workers=None)
    manifold = cfg.params.manifold
    rng = RngStream(cfg.rng_seed)
    indices = None
    if args.indices:
        indices = tuple(int(s) for s in args.indices.split(","))
    target = sample_target(args.kind, manifold.dim, rng, p=args.p, indices=indices)
    sha = fileio.target_hash(target)
    fileio.write_target(
        target, args.out,
        provenance={"seed": cfg.rng_seed, "kind": args.kind, "sha256": sha},
    )
    _say(args, f"wrote {args.kind} target (dim {target.dim}, p {target.p}) to {args.out}")
    return 0


def _cmd_design(args) -> int:
    cfg = load_run_config(args.config, seed=args.seed, workers=args.workers)
    target = fileio.read_target(args.target)
    config = _design_config(cfg)
    report = design(target, config, workers=cfg.workers)
    sha = fileio.target_hash(target)
    out = Path(args.out)
    fileio.write_waveform(
        fileio.WaveformFile(
            waveform=report.best_waveform,
            params=cfg.params,
            ensemble=cfg.ensemble,
            provenance={
                "target_sha256": sha,
                "seed": report.best_seed,
                "rng_seed": cfg.rng_seed,
                "fidelity": report.best_fidelity,
            },
        ),
        out,
    )
    report_path = args.report or str(out.with_suffix("")) + ".report.json"
    fileio.write_design_report(report, config, sha, report_path)
    _say(
        args,
        f"designed waveform (fidelity {report.best_fidelity:.6f}, "
        f"seed {report.best_seed}) -> {out}",
    )
    if report.best_fidelity < config.target_fidelity:
        _say(args, "warning: no seed reached the target fidelity")
    return 0


def _cmd_evaluate(args) -> int:
    wf = fileio.read_waveform(args.waveform)
    target = fileio.read_target(args.target)
    trajectory = _parse_field_spec(args.field)
    value = fidelity(target, total_unitary(wf.waveform, wf.params, trajectory))
    print(repr(value))
    return 0


def _load_map_set(maps_dir: str) -> list[MapImplementation]:
    directory = Path(maps_dir)
    target_files = sorted(directory.glob("*.target.json"))
    if not target_files:
        raise ValueError(f"{maps_dir}: no *.target.json files found")
    map_set = []
    for tf in target_files:
        stem = tf.name[: -len(".target.json")]
        wf_path = directory / f"{stem}.waveform.json"
        if not wf_path.exists():
            raise ValueError(f"{maps_dir}: missing waveform for target {tf.name}")
        target = fileio.read_target(tf)
        wf = fileio.read_waveform(wf_path)
        map_set.append(MapImplementation(target, wf.waveform))
    return map_set


def _cmd_benchmark(args) -> int:
    cfg = load_run_config(args.config, seed=args.seed, workers=args.workers)
    map_set = _load_map_set(args.maps)
    model = _error_model(cfg)
    bench = BenchmarkConfig(
        rng=RngStream(cfg.rng_seed),
        params=cfg.params,
        lengths=tuple(cfg.benchmark.get("lengths", (1, 2, 3, 4, 6, 8))),
        n_per_length=int(cfg.benchmark.get("n_per_length", 10)),
        state_map_config=_state_map_config(cfg),
        atom_number=cfg.benchmark.get("atom_number"),
        eps_s_samples=int(cfg.benchmark.get("eps_s_samples", 20)),
    )
    result = run_benchmark(map_set, model, bench)
    fileio.write_benchmark_csv(result.rows, args.out_dataset)
    fileio.write_fit_json(
        result.fit,
        args.out_fit,
        extras={
            "eps_s": result.eps_s,
            "eps_b": result.eps_b,
            "ratio": result.ratio,
            "summary": [
                {"l": l, "mean": m, "stderr": s} for l, m, s in result.summary
            ],
            "rng_seed": cfg.rng_seed,
        },
    )
    _say(
        args,
        f"benchmark: eps_0 {result.fit.epsilon_0:.5f}, eps_b {result.eps_b:.5f}, "
        f"eps_s {result.eps_s:.5f}"
        + (f", ratio {result.ratio:.3f}" if result.ratio is not None else ""),
    )
    return 0


def _cmd_sweep_time(args) -> int:
    cfg = load_run_config(args.config, seed=args.seed, workers=args.workers)
    section = cfg.sweep_time
    if "t_values" not in section or "dt_values" not in section:
        raise ValueError("config.sweep_time requires t_values and dt_values")
    targets_obj = section.get("targets", {"kind": "full_unitary", "count": 3})
    _reject_unknown(targets_obj, {"kind", "count", "p"}, "config.sweep_time.targets")
    rng = RngStream(cfg.rng_seed, stream=1).generator()
    manifold_dim = cfg.params.manifold.dim
    targets = tuple(
        sample_target(
            targets_obj.get("kind", "full_unitary"),
            manifold_dim,
            rng,
            p=targets_obj.get("p"),
        )
        for _ in range(int(targets_obj.get("count", 3)))
    )
    spec = TimeGridSpec(
        t_values=tuple(section["t_values"]),
        dt_values=tuple(section["dt_values"]),
        targets=targets,
        base_config=_design_config(cfg),
    )
    grid = sweep_time_grid(spec, workers=cfg.workers)
    provenance = {"rng_seed": cfg.rng_seed, "sweep_time": section}
    fileio.write_grid_json(grid, args.out + ".json", provenance)
    fileio.write_grid_csv(grid, args.out + ".csv")
    _say(args, f"time sweep written to {args.out}.json / .csv")
    return 0


def _cmd_sweep_field(args) -> int:
    cfg = load_run_config(args.config, seed=args.seed, workers=args.workers)
    section = cfg.sweep_field
    if "dbi_values" in section or "dbf_values" in section:
        if not ("dbi_values" in section and "dbf_values" in section):
            raise ValueError("config.sweep_field needs both dbi_values and dbf_values")
        dbi = tuple(float(v) for v in section["dbi_values"])
        dbf = tuple(float(v) for v in section["dbf_values"])
    else:
        radius = float(section.get("radius", DEFAULT_FIELD_RADIUS))
        dbi = symmetric_field_grid(
            radius,
            multiples=float(section.get("multiples", 4.0)),
            points=int(section.get("points", 17)),
        )
        dbf = dbi
    map_set = _load_map_set(args.maps)
    spec = FieldGridSpec(
        dbi_values=dbi,
        dbf_values=dbf,
        maps=tuple((m.target, m.waveform) for m in map_set),
        params=cfg.params,
    )
    grid = sweep_field_grid(spec)
    provenance = {"rng_seed": cfg.rng_seed, "sweep_field": section, "maps": args.maps}
    fileio.write_grid_json(grid, args.out + ".json", provenance)
    fileio.write_grid_csv(grid, args.out + ".csv")
    _say(args, f"field sweep written to {args.out}.json / .csv")
    return 0


def _cmd_contour(args) -> int:
    grid = fileio.read_grid_json(args.grid)
    area = contour_area(grid, args.level)
    print(repr(area))
    return 0


# ---------------------------------------------------------------------------
# parser assembly

def build_parser() -> _Parser:
    parser = _Parser(prog="quditpulse", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="override rng seed")
    common.add_argument("--workers", type=int, default=None, help="worker processes")
    common.add_argument("--quiet", action="store_true", help="suppress status output")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-target", parents=[common],
                       help="draw a random target map and write it to a file")
    p.add_argument("--kind", required=True,
                   choices=("full_unitary", "subspace_map", "state_map"))
    p.add_argument("--p", type=int, default=None, help="subspace dimension")
    p.add_argument("--indices", default=None,
                   help="comma-separated basis indices pinning both subspaces")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample_target)

    p = sub.add_parser("design", parents=[common],
                       help="optimize a waveform for a target map")
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True, help="waveform file path")
    p.add_argument("--report", default=None, help="report path (default <out>.report.json)")
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("evaluate", parents=[common],
                       help="fidelity of a waveform file against a target file")
    p.add_argument("--waveform", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--field", default="static:0",
                   help="field trajectory: static:X or ramp:A:B (rad/s)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("benchmark", parents=[common],
                       help="simulate randomized benchmarking of a map-set directory")
    p.add_argument("--maps", required=True,
                   help="directory of *.target.json / *.waveform.json pairs")
    p.add_argument("--out-dataset", required=True, help="survival CSV path")
    p.add_argument("--out-fit", required=True, help="decay-fit JSON path")
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("sweep-time", parents=[common],
                       help="fidelity grid over control time and step duration")
    p.add_argument("--out", required=True, help="output base path (.json/.csv added)")
    p.set_defaults(func=_cmd_sweep_time)

    p = sub.add_parser("sweep-field", parents=[common],
                       help="fidelity grid over linear field-ramp endpoints")
    p.add_argument("--maps", required=True)
    p.add_argument("--out", required=True, help="output base path (.json/.csv added)")
    p.set_defaults(func=_cmd_sweep_field)

    p = sub.add_parser("contour", parents=[common],
                       help="area of the region at or above a fidelity level")
    p.add_argument("--grid", required=True, help="grid JSON file")
    p.add_argument("--level", type=float, required=True)
    p.set_defaults(func=_cmd_contour)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValueError as exc:
        print(json.dumps({"error": "validation", "message": str(exc)}), file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(json.dumps({"error": "numerical", "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
