"""Versioned file formats: waveforms, targets, reports, grids, datasets.

JSON is used for structured artifacts and CSV for bulk numeric tables.
Floats are serialized with Python's shortest round-trip representation
(at least 15 significant digits), so read(write(x)) reproduces every value
bit-exactly.  Every artifact embeds enough provenance (config snapshot,
seed, target hash) to re-run the command that produced it.  Readers are
strict: unknown keys, missing keys, and unsupported format versions are
rejected with the offending field named.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .benchmarking import DecayFit
from .errors import FileFormatError
from .objectives import TargetMap, PerturbationEnsemble
from .propagation import ControlWaveform, FieldTrajectory
from .spin_model import ManifoldStructure, PhysicalParams
from .sweeps import GridResult

FORMAT_VERSION = 1
SUPPORTED_VERSIONS = (1,)


# ---------------------------------------------------------------------------
# validation helpers

def _check_keys(obj: dict, required: set[str], optional: set[str], where: str):
    if not isinstance(obj, dict):
        raise FileFormatError(f"{where}: expected an object")
    missing = required - obj.keys()
    if missing:
        raise FileFormatError(f"{where}: missing field {sorted(missing)[0]!r}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise FileFormatError(f"{where}: unknown field {sorted(unknown)[0]!r}")


def _check_version(obj: dict, expected_kind: str, where: str):
    if not isinstance(obj, dict):
        raise FileFormatError(f"{where}: expected a JSON object")
    for key in ("format_version", "file_kind"):
        if key not in obj:
            raise FileFormatError(f"{where}: missing field {key!r}")
    version = obj["format_version"]
    if version not in SUPPORTED_VERSIONS:
        raise FileFormatError(
            f"{where}: unsupported format_version {version!r} "
            f"(supported: {', '.join(map(str, SUPPORTED_VERSIONS))})"
        )
    if obj["file_kind"] != expected_kind:
        raise FileFormatError(
            f"{where}: file_kind {obj['file_kind']!r}, expected {expected_kind!r}"
        )


def _float_list(values, where: str) -> list[float]:
    out = []
    for v in values:
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise FileFormatError(f"{where}: non-finite or non-numeric entry")
        out.append(float(v))
    return out


def load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: unreadable or invalid JSON ({exc})") from exc





def _dump_json(obj: dict, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# fragments shared by several formats

def manifold_to_dict(man: ManifoldStructure) -> dict:
    return {"nuclear_spin_doubled": man.nuclear_spin_doubled}


def manifold_from_dict(obj: dict, where: str = "manifold") -> ManifoldStructure:
    _check_keys(obj, {"nuclear_spin_doubled"}, set(), where)
    try:
        return ManifoldStructure(int(obj["nuclear_spin_doubled"]))
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"{where}: {exc}") from exc


_PARAM_FIELDS = ("larmor", "rf_rabi_x", "rf_rabi_y", "uw_rabi", "rf_detuning", "uw_detuning")


def params_to_dict(params: PhysicalParams) -> dict:
    out = {name: getattr(params, name) for name in _PARAM_FIELDS}
    out["manifold"] = manifold_to_dict(params.manifold)
    return out


def params_from_dict(obj: dict, where: str = "params") -> PhysicalParams:
    _check_keys(obj, set(), set(_PARAM_FIELDS) | {"manifold"}, where)
    kwargs = {}
    for name in _PARAM_FIELDS:
        if name in obj:
            if not isinstance(obj[name], (int, float)):
                raise FileFormatError(f"{where}.{name}: expected a number")
            kwargs[name] = float(obj[name])
    if "manifold" in obj:
        kwargs["manifold"] = manifold_from_dict(obj["manifold"], f"{where}.manifold")
    try:
        return PhysicalParams(**kwargs)
    except ValueError as exc:
        raise FileFormatError(f"{where}: {exc}") from exc


def trajectory_to_dict(traj: FieldTrajectory) -> dict:
    return {
        "kind": traj.kind,
        "offset_start": traj.offset_start,
        "offset_end": traj.offset_end,
    }


def trajectory_from_dict(obj: dict, where: str = "trajectory") -> FieldTrajectory:
    _check_keys(obj, {"kind", "offset_start", "offset_end"}, set(), where)
    try:
        return FieldTrajectory(str(obj["kind"]), float(obj["offset_start"]),
                               float(obj["offset_end"]))
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"{where}: {exc}") from exc


def ensemble_to_dict(ensemble: PerturbationEnsemble) -> dict:
    return {
        "members": [
            {"weight": w, **trajectory_to_dict(t)} for w, t in ensemble.members
        ]
    }


def ensemble_from_dict(obj: dict, where: str = "ensemble") -> PerturbationEnsemble:
    _check_keys(obj, {"members"}, set(), where)
    members = []
    for i, m in enumerate(obj["members"]):
        here = f"{where}.members[{i}]"
        _check_keys(m, {"weight", "kind", "offset_start", "offset_end"}, set(), here)
        traj = trajectory_from_dict(
            {k: m[k] for k in ("kind", "offset_start", "offset_end")}, here
        )
        members.append((float(m["weight"]), traj))
    try:
        return PerturbationEnsemble(tuple(members))
    except ValueError as exc:
        raise FileFormatError(f"{where}: {exc}") from exc


def _complex_matrix_out(m: np.ndarray) -> dict:
    return {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}


def _complex_matrix_in(obj: dict, where: str) -> np.ndarray:
    _check_keys(obj, {"re", "im"}, set(), where)
    try:
        re = np.array(obj["re"], dtype=float)
        im = np.array(obj["im"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"{where}: {exc}") from exc
    if re.shape != im.shape:
        raise FileFormatError(f"{where}: re/im shape mismatch")
    return re + 1j * im


# ---------------------------------------------------------------------------
# target files

def target_payload(target: TargetMap) -> dict:
    """The serializable target body (hashed for provenance)."""
    out = {"kind": target.kind, "dim": target.dim, "p": target.p}
    if target.kind == "state_map":
        out["psi_in"] = _complex_matrix_out(target.psi_in)
        out["psi_out"] = _complex_matrix_out(target.psi_out)
        return out
    out["w"] = _complex_matrix_out(target.w)
    if target.indices_in is not None:
        out["indices_in"] = list(target.indices_in)
        out["indices_out"] = list(target.indices_out)
    else:
        out["v_in"] = _complex_matrix_out(target.v_in)
        out["v_out"] = _complex_matrix_out(target.v_out)
    return out


def target_hash(target: TargetMap) -> str:
    canon = json.dumps(target_payload(target), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def target_from_payload(obj: dict, where: str = "target") -> TargetMap:
    _check_keys(
        obj,
        {"kind", "dim", "p"},
        {"w", "indices_in", "indices_out", "v_in", "v_out", "psi_in", "psi_out"},
        where,
    )
    kind = obj["kind"]
    dim = int(obj["dim"])
    try:
        if kind == "state_map":
            psi_in = _complex_matrix_in(obj["psi_in"], f"{where}.psi_in")
            psi_out = _complex_matrix_in(obj["psi_out"], f"{where}.psi_out")
            if psi_in.shape != (dim,):
                raise ValueError(f"psi_in shape {psi_in.shape} does not match dim {dim}")
            return TargetMap.state(psi_in, psi_out)
        w = _complex_matrix_in(obj["w"], f"{where}.w")
        if kind == "full_unitary":
            if w.shape != (dim, dim):
                raise ValueError(f"w shape {w.shape} does not match dim {dim}")
            return TargetMap.full(w)
        if kind == "subspace_map":
            if "indices_in" in obj:
                return TargetMap.subspace(
                    w, tuple(obj["indices_in"]), tuple(obj["indices_out"]), dim
                )
            v_in = _complex_matrix_in(obj["v_in"], f"{where}.v_in")
            v_out = _complex_matrix_in(obj["v_out"], f"{where}.v_out")
            return TargetMap.subspace_isometries(w, v_in, v_out, dim)
    except KeyError as exc:
        raise FileFormatError(f"{where}: missing field {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise FileFormatError(f"{where}: {exc}") from exc
    raise FileFormatError(f"{where}: unknown target kind {kind!r}")


def write_target(target: TargetMap, path, provenance: dict | None = None):
    obj = {
        "format_version": FORMAT_VERSION,
        "file_kind": "target",
        "target": target_payload(target),
        "provenance": provenance or {},
    }
    _dump_json(obj, path)


def read_target(path) -> TargetMap:
    obj = load_json(path)
    _check_version(obj, "target", str(path))
    _check_keys(obj, {"format_version", "file_kind", "target", "provenance"}, set(), str(path))
    return target_from_payload(obj["target"], f"{path}:target")


# ---------------------------------------------------------------------------
# waveform files

@dataclass(frozen=True, eq=False)
class WaveformFile:
    """A waveform plus the snapshot needed to reproduce and evaluate it."""

    waveform: ControlWaveform
    params: PhysicalParams
    ensemble: PerturbationEnsemble | None = None
    provenance: dict | None = None


def write_waveform(wf: WaveformFile, path):
    """Write a waveform file; phases are wrapped to [0, 2*pi) on export."""
    wrapped = wf.waveform.wrapped()
    obj = {
        "format_version": FORMAT_VERSION,
        "file_kind": "waveform",
        "manifold": manifold_to_dict(wf.params.manifold),
        "dt": wrapped.dt,
        "n_steps": wrapped.n_steps,
        "phi_x": wrapped.phi_x.tolist(),
        "phi_y": wrapped.phi_y.tolist(),
        "phi_uw": wrapped.phi_uw.tolist(),
        "label": wrapped.label,
        "params": params_to_dict(wf.params),
        "ensemble": None if wf.ensemble is None else ensemble_to_dict(wf.ensemble),
        "provenance": wf.provenance or {},
    }
    _dump_json(obj, path)


def read_waveform(path) -> WaveformFile:
    obj = load_json(path)
    _check_version(obj, "waveform", str(path))
    _check_keys(
        obj,
        {"format_version", "file_kind", "manifold", "dt", "n_steps",
         "phi_x", "phi_y", "phi_uw", "params", "ensemble", "provenance"},
        {"label"},
        str(path),
    )
    where = str(path)
    manifold = manifold_from_dict(obj["manifold"], f"{where}:manifold")
    params = params_from_dict(obj["params"], f"{where}:params")
    if params.manifold != manifold:
        raise FileFormatError(f"{where}: params.manifold disagrees with manifold")
    if not isinstance(obj["n_steps"], int) or obj["n_steps"] < 1:
        raise FileFormatError(f"{where}:n_steps must be a positive integer")
    phases = {}
    for name in ("phi_x", "phi_y", "phi_uw"):
        vals = _float_list(obj[name], f"{where}:{name}")
        if len(vals) != obj["n_steps"]:
            raise FileFormatError(f"{where}:{name} length differs from n_steps")
        phases[name] = np.array(vals)
    try:
        waveform = ControlWaveform(
            float(obj["dt"]), phases["phi_x"], phases["phi_y"], phases["phi_uw"],
            label=str(obj.get("label", "")),
        )
    except ValueError as exc:
        raise FileFormatError(f"{where}: {exc}") from exc
    ensemble = None
    if obj["ensemble"] is not None:
        ensemble = ensemble_from_dict(obj["ensemble"], f"{where}:ensemble")
    provenance = obj["provenance"]
    if not isinstance(provenance, dict):
        raise FileFormatError(f"{where}:provenance must be an object")
    return WaveformFile(waveform, params, ensemble, provenance)


# ---------------------------------------------------------------------------
# design reports

def write_design_report(report, config, target_sha: str, path):
    """Design outcome snapshot (deliberately excludes wall-clock timing)."""
    obj = {
        "format_version": FORMAT_VERSION,
        "file_kind": "design_report",
        "target_sha256": target_sha,
        "best_fidelity": report.best_fidelity,
        "best_seed": report.best_seed,
        "per_seed": [
            {
                "seed": r.seed,
                "fidelity": r.fidelity,
                "iterations": r.iterations,
                "reason": r.reason,
            }
            for r in report.per_seed
        ],
        "config": {
            "total_time": config.total_time,
            "dt": config.dt,
            "target_fidelity": config.target_fidelity,
            "max_iterations": config.max_iterations,
            "gradient_tolerance": config.gradient_tolerance,
            "n_seeds": config.n_seeds,
            "rng_seed": config.rng_seed,
            "method": config.method,
            "params": params_to_dict(config.params),
            "ensemble": ensemble_to_dict(config.ensemble),
        },
    }
    _dump_json(obj, path)


# ---------------------------------------------------------------------------
# grids

def write_grid_json(grid: GridResult, path, provenance: dict | None = None):
    obj = {
        "format_version": FORMAT_VERSION,
        "file_kind": "grid",
        "x_name": grid.x_name,
        "y_name": grid.y_name,
        "x_values": grid.x_values.tolist(),
        "y_values": grid.y_values.tolist(),
        "mean": [[None if not math.isfinite(v) else v for v in row] for row in grid.mean],
        "std": [[None if not math.isfinite(v) else v for v in row] for row in grid.std],
        "meta": [list(row) for row in grid.meta],
        "provenance": provenance or {},
    }
    _dump_json(obj, path)


def read_grid_json(path) -> GridResult:
    obj = load_json(path)
    _check_version(obj, "grid", str(path))
    _check_keys(
        obj,
        {"format_version", "file_kind", "x_name", "y_name", "x_values",
         "y_values", "mean", "std", "meta", "provenance"},
        set(),
        str(path),
    )
    where = str(path)
    x = np.array(_float_list(obj["x_values"], f"{where}:x_values"))
    y = np.array(_float_list(obj["y_values"], f"{where}:y_values"))

    def _grid_array(rows, name):
        try:
            arr = np.array(
                [[np.nan if v is None else float(v) for v in row] for row in rows]
            )
        except (TypeError, ValueError) as exc:
            raise FileFormatError(f"{where}:{name}: {exc}") from exc
        if arr.shape != (len(x), len(y)):
            raise FileFormatError(f"{where}:{name}: shape does not match axes")
        return arr

    mean = _grid_array(obj["mean"], "mean")
    std = _grid_array(obj["std"], "std")
    meta = tuple(tuple(row) for row in obj["meta"])
    return GridResult(str(obj["x_name"]), str(obj["y_name"]), x, y, mean, std, meta)


def write_grid_csv(grid: GridResult, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([grid.x_name, grid.y_name, "mean_fidelity", "std"])
        for ix, xv in enumerate(grid.x_values):
            for iy, yv in enumerate(grid.y_values):
                writer.writerow([
                    repr(float(xv)), repr(float(yv)),
                    repr(float(grid.mean[ix, iy])), repr(float(grid.std[ix, iy])),
                ])


# ---------------------------------------------------------------------------
# benchmark datasets and fits

def write_benchmark_csv(rows, path):
    """Rows of (l, sequence_id, survival)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["l", "sequence_id", "survival"])
        for l, seq_id, survival in rows:
            writer.writerow([int(l), int(seq_id), repr(float(survival))])


def read_benchmark_csv(path) -> list[tuple[int, int, float]]:
    rows = []
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["l", "sequence_id", "survival"]:
                raise FileFormatError(f"{path}: unexpected CSV header {header!r}")
            for line in reader:
                if len(line) != 3:
                    raise FileFormatError(f"{path}: malformed row {line!r}")
                rows.append((int(line[0]), int(line[1]), float(line[2])))
    except (OSError, ValueError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    return rows


def write_fit_json(fit: DecayFit, path, extras: dict | None = None):
    obj = {
        "format_version": FORMAT_VERSION,
        "file_kind": "decay_fit",
        "epsilon_0": fit.epsilon_0,
        "epsilon_b": fit.epsilon_b,
        "covariance": np.asarray(fit.covariance).tolist(),
        "residual_norm": fit.residual_norm,
        "extras": extras or {},
    }
    _dump_json(obj, path)
