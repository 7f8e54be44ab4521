"""Scenario kernels and the deterministic sweep runner.

A scenario names a kernel, a parameter template and one or more sweep axes.
Every grid cell merges the template with its axis values, calls the kernel
and records the requested outputs. Results go to one CSV per output and a
JSON manifest with hashes and provenance.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .compiler import GateSpec
from .error_model import (
    MHZ_PER_MEV,
    crosstalk_error,
    crosstalk_error_esr_cz,
    detuning_error,
    sample_feasible_donor_count,
)
from .fidelity import FidelityParams, gate_fidelity
from .spectrum import esr_frequency_table, min_detuning, nmr_frequency
from .spins import SpinSystem


class ConfigError(ValueError):
    """A scenario configuration failed schema or cross-reference checks."""

    def __init__(self, errors: list[str]):
        super().__init__("\n".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class Kernel:
    name: str
    func: Callable[[dict], dict]
    params: dict
    outputs: tuple[str, ...]
    doc: str = ""


KERNELS: dict[str, Kernel] = {}
REQUIRED = object()


def kernel(name: str, params: dict, outputs: tuple[str, ...]):
    def register(func):
        KERNELS[name] = Kernel(name, func, params, outputs, (func.__doc__ or "").strip().splitlines()[0])
        return func

    return register


def _combine(*errors: float) -> float:
    return 1.0 - float(np.prod([1.0 - e for e in errors]))


# fig3e
@kernel(
    "esr_crosstalk",
    {"rabi_mhz": 0.5, "delta_mhz": REQUIRED, "b0_t": 1.0, "steps_per_cycle": 50},
    ("e_ct", "e_ct_esr", "e_ct_sim"),
)
def _esr_crosstalk(p: dict) -> dict:
    """Crosstalk of a 2 pi ESR pulse versus detuning, closed form and simulated."""
    f, d = p["rabi_mhz"], p["delta_mhz"]
    out = {"e_ct": crosstalk_error(f, d), "e_ct_esr": crosstalk_error_esr_cz(f, d)}
    if "e_ct_sim" in p.get("_outputs", ()):
        out["e_ct_sim"] = simulated_crosstalk(f, d, b0_t=p["b0_t"], steps_per_cycle=p["steps_per_cycle"])
    return out


def simulated_crosstalk(rabi_mhz: float, delta_mhz: float, b0_t: float = 1.0, steps_per_cycle: int = 50) -> float:
    """Peak off-resonant electron transfer on a 1P cluster.

    The hyperfine coupling equals ``delta_mhz``, so the two ESR lines are
    ``delta_mhz`` apart. The carrier sits on the nuclear-up line and the
    electron population of the nuclear-down branch is traced over one
    generalized Rabi period.
    """
    from .dynamics import Pulse, evolve

    sys = SpinSystem.from_hyperfine([float(delta_mhz)], b0=b0_t)
    line = esr_frequency_table(sys).find("e0", "U")
    omega = math.hypot(rabi_mhz, delta_mhz)
    pulse = Pulse("ESR", line.freq_mhz, rabi_mhz, 1.0 / omega)
    res = evolve(sys, [pulse], initial="dD", record_every_us=1.0 / (200 * omega), propagator=False)
    up = res.labels.index("uD")
    return float(np.max(res.populations[:, up]))


# fig4a
@kernel(
    "nmr_crosstalk",
    {
        "a0_mhz": 60.0,
        "delta_a_mhz": REQUIRED,
        "delta_b_t": REQUIRED,
        "second_offset_mhz": 100.0,
        "b0_t": 1.35,
        "nmr_rabi_mhz": 0.03,
    },
    ("e_ct", "min_detuning_mhz"),
)
def _nmr_crosstalk(p: dict) -> dict:
    """Worst NMR crosstalk of a 1P-2P pair over all nuclear pairs."""
    a0, da = p["a0_mhz"], p["delta_a_mhz"]
    sys = SpinSystem.from_hyperfine([a0], [a0 + da, a0 + da + p["second_offset_mhz"]], b0=p["b0_t"], gradient_db=p["delta_b_t"])
    f = [nmr_frequency(sys, i) for i in range(sys.n_nuclei)]
    d = min(abs(x - y) for x, y in itertools.combinations(f, 2))
    return {"e_ct": crosstalk_error(p["nmr_rabi_mhz"], d), "min_detuning_mhz": d}


def _pair_layout(p: dict) -> SpinSystem:
    b = p["base_mhz"]
    return SpinSystem.from_hyperfine(
        list(p["neighbour_mhz"]),
        [b, b + p["delta_a_mhz"]],
        b0=p["b0_t"],
        j_exchange=p["j_mhz"],
        gradient_db=p["gradient_db_t"],
    )


_PAIR_PARAMS = {
    "neighbour_mhz": [117.0],
    "base_mhz": 60.0,
    "delta_a_mhz": REQUIRED,
    "j_mhz": REQUIRED,
    "b0_t": 1.35,
    "gradient_db_t": 0.0,
    "rabi_mhz": 0.5,
}


# fig4b
@kernel("intra_esr_crosstalk", dict(_PAIR_PARAMS), ("e_ct", "e_offres", "e_detuning", "nearest_mhz", "spread_mhz"))
def _intra_esr(p: dict) -> dict:
    """Worst intra-cluster ESR error on the 2P electron next to a 1P cluster.

    Each pulse must cover the lines of one local configuration for every
    neighbour configuration; the carrier sits at the centre of that group.
    Off-resonant crosstalk to the nearest other populated line and the
    detuning to the outermost covered line combine into ``e_ct``.
    """
    sys = _pair_layout(p)
    n_left = sys.clusters[0].n_donors
    lines = [e for e in esr_frequency_table(sys) if e.partner == "d"]
    f = p["rabi_mhz"]
    worst = None
    for cfg in sorted({e.controls[n_left:] for e in lines if e.driven == "e1"}):
        group = [e for e in lines if e.driven == "e1" and e.controls[n_left:] == cfg]
        fr = np.array([e.freq_mhz for e in group])
        carrier = 0.5 * (fr.min() + fr.max())
        spread = 0.5 * (fr.max() - fr.min())
        ids = {id(e) for e in group}
        nearest = float(np.min([abs(e.freq_mhz - carrier) for e in lines if id(e) not in ids]))
        e_off = crosstalk_error(f, nearest)
        e_det = detuning_error(f, spread)
        cell = {"e_ct": _combine(e_off, e_det), "e_offres": e_off, "e_detuning": e_det, "nearest_mhz": nearest, "spread_mhz": spread}
        if worst is None or cell["e_ct"] > worst["e_ct"]:
            worst = cell
    return worst


# fig4c
@kernel("inter_esr_crosstalk", {**_PAIR_PARAMS, "driven": "e0"}, ("e_ct", "min_detuning_mhz"))
def _inter_esr(p: dict) -> dict:
    """Worst inter-cluster ESR crosstalk over fully conditioned lines.

    Lines that coincide with the target for every exchange value (identical
    signed hyperfine sums) are accidental degeneracies and are skipped.
    """
    sys = _pair_layout(p)
    lines = [e for e in esr_frequency_table(sys) if e.partner == "d"]
    d = min(min_detuning(lines, e, exclude_degenerate=True) for e in lines if e.driven == p["driven"])
    return {"e_ct": crosstalk_error(p["rabi_mhz"], d), "min_detuning_mhz": d}


def _group_errors(target, populated, f):
    fr = np.array([e.freq_mhz for e in target])
    carrier = 0.5 * (fr.min() + fr.max())
    ids = {id(e) for e in target}
    others = [abs(e.freq_mhz - carrier) for e in populated if id(e) not in ids]
    nearest = float(min(others)) if others else math.inf
    e_ct = crosstalk_error_esr_cz(f, nearest) if math.isfinite(nearest) else 0.0
    spread = 0.5 * (fr.max() - fr.min())
    return e_ct, detuning_error(f, spread) if spread > 0 else 0.0


# figS3
@kernel("assisted_crosstalk", {**_PAIR_PARAMS, "scheme": REQUIRED}, ("e_ct", "e_ct_esr", "e_detuning"))
def _assisted(p: dict) -> dict:
    """Worst ESR error of the ESR- or NMR-assisted inter-cluster CZ.

    ESR-assisted: a pi pulse on the left electron conditioned on its own
    nuclei (covering every right configuration), then a 2 pi pulse on the
    right electron conditioned on its nuclei with the left electron up.
    NMR-assisted: single 2 pi pulses on the all-down and all-up reference
    configurations.
    """
    sys = _pair_layout(p)
    table = list(esr_frequency_table(sys))
    f = p["rabi_mhz"]
    n_left = sys.clusters[0].n_donors
    worst = (0.0, 0.0)
    if p["scheme"] == "esr":
        base = [e for e in table if e.partner == "d"]
        for cl in sorted({e.controls[:n_left] for e in base}):
            group = [e for e in base if e.driven == "e0" and e.controls[:n_left] == cl]
            worst = max(worst, _group_errors(group, base, f), key=lambda x: _combine(*x))
            # left electron up only for the transferred configuration
            populated = [
                e
                for e in table
                if (e.driven == "e1" and (e.partner == "u") == (e.controls[:n_left] == cl)) or (e.driven == "e0" and e.partner == "d")
            ]
            for cr in sorted({e.controls[n_left:] for e in base}):
                target = [e for e in populated if e.driven == "e1" and e.partner == "u" and e.controls == cl + cr]
                worst = max(worst, _group_errors(target, populated, f), key=lambda x: _combine(*x))
    elif p["scheme"] == "nmr":
        base = [e for e in table if e.partner == "d"]
        n = sys.n_nuclei
        for ref in ("D" * n, "U" * n):
            for drv in ("e0", "e1"):
                target = [e for e in base if e.driven == drv and e.controls == ref]
                d = min_detuning(base, target[0], exclude_degenerate=True)
                worst = max(worst, (crosstalk_error_esr_cz(f, d), 0.0), key=lambda x: _combine(*x))
    else:
        raise ValueError("scheme must be 'esr' or 'nmr'")
    return {"e_ct": _combine(*worst), "e_ct_esr": worst[0], "e_detuning": worst[1]}


def _resolve(values, p: dict) -> list[float]:
    return [float(p[v]) if isinstance(v, str) else float(v) for v in values]


# fig5, fig6, figS2
@kernel(
    "gate_infidelity",
    {
        "hyperfine_left": [60.0, 170.0],
        "hyperfine_right": ["a0_mhz", 120.0, 230.0],
        "a0_mhz": 15.0,
        "j_mhz": 0.0,
        "b0_t": 1.35,
        "gradient_db_t": 0.0,
        "gate": "CNOT",
        "controls": [0],
        "targets": [1],
        "esr_rabi_mhz": 0.5,
        "tau_esr_us": None,
        "nmr_b1_t": 1e-3,
        "t2n_us": 40_000.0,
        "t2e_us": 400.0,
        "delta_eps_mhz": 0.0,
        "t_c_mhz": 3600.0,
        "u_mev": 30.0,
        "worst_case": True,
        "crosstalk_lines": "driven",
        "driven_electron": None,
    },
    ("infidelity", "e_ct_max", "e_detuning_max", "e_t2e_total", "e_t2n", "delta_j_mhz", "n_esr", "n_nmr", "duration_us"),
)
def _gate_infidelity(p: dict) -> dict:
    """Composite infidelity of a directly compiled gate on a two-cluster system."""
    sys = SpinSystem.from_hyperfine(
        _resolve(p["hyperfine_left"], p),
        _resolve(p["hyperfine_right"], p),
        b0=p["b0_t"],
        j_exchange=p["j_mhz"],
        gradient_db=p["gradient_db_t"],
    )
    rabi = 1.0 / p["tau_esr_us"] if p["tau_esr_us"] else p["esr_rabi_mhz"]
    params = FidelityParams(
        esr_rabi_mhz=rabi,
        nmr_b1_t=p["nmr_b1_t"],
        t2n_us=p["t2n_us"],
        t2e_us=p["t2e_us"],
        delta_eps_mhz=p["delta_eps_mhz"],
        t_c_mhz=p["t_c_mhz"],
        u_mhz=p["u_mev"] * MHZ_PER_MEV,
        driven_electron=p["driven_electron"],
        crosstalk_lines=p["crosstalk_lines"],
    )
    gate = GateSpec(p["gate"], tuple(p["controls"]), tuple(p["targets"]))
    b = gate_fidelity(gate, sys, params, worst_case=bool(p["worst_case"]))
    return {
        "infidelity": b.infidelity,
        "e_ct_max": max(b.e_ct, default=0.0),
        "e_detuning_max": max(b.e_detuning, default=0.0),
        "e_t2e_total": _combine(*b.e_t2e),
        "e_t2n": b.e_t2n,
        "delta_j_mhz": b.delta_j_mhz,
        "n_esr": b.n_esr,
        "n_nmr": b.n_nmr,
        "duration_us": b.tau_total_us,
    }


@kernel(
    "donor_count",
    {"range_low_mhz": 0.6, "range_high_mhz": 304.0, "min_gap_mhz": 10.0, "trials": 1000, "max_count": 64},
    ("mean", "sd", "min", "max"),
)
def _donor_count(p: dict) -> dict:
    """Monte Carlo statistics of resolvable hyperfine couplings per cluster."""
    s = sample_feasible_donor_count(
        (p["range_low_mhz"], p["range_high_mhz"]), p["min_gap_mhz"], int(p["trials"]), p["_seed"], int(p["max_count"])
    )
    return {"mean": s.mean, "sd": s.sd, "min": s.min, "max": s.max}


# configuration


def load_schema() -> dict:
    return json.loads(resources.files("donorcluster").joinpath("scenario.schema.json").read_text())


def builtin_dir():
    return resources.files("donorcluster").joinpath("scenarios")


def list_scenarios() -> list[str]:
    return sorted(p.name[:-5] for p in builtin_dir().iterdir() if p.name.endswith(".json"))


def builtin_path(name: str):
    path = builtin_dir().joinpath(f"{name}.json")
    if not path.is_file():
        raise FileNotFoundError(f"no built-in scenario {name!r}")
    return path


def _line_of(text: str, path) -> int:
    """Best-effort line number of a JSON path, following keys in order."""
    pos = 0
    for elem in path:
        if isinstance(elem, str):
            key = json.dumps(elem)
            i = text.find(key + ":", pos)
            if i < 0:
                i = text.find(key, pos)
            if i < 0:
                break
            pos = i
    return text.count("\n", 0, pos) + 1


def validate_config(config: dict, text: str | None = None) -> list[str]:
    """Schema and cross-reference diagnostics; empty when the config is valid."""
    import jsonschema

    text = text if text is not None else json.dumps(config, indent=2)
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = []
    for err in sorted(validator.iter_errors(config), key=lambda e: (list(map(str, e.absolute_path)), e.message)):
        where = "/".join(map(str, err.absolute_path)) or "<root>"
        errors.append(f"line {_line_of(text, err.absolute_path)}: {where}: {err.message}")
    if errors:
        return errors
    k = KERNELS.get(config["kernel"])
    if k is None:
        return [f"line {_line_of(text, ['kernel'])}: kernel: unknown kernel {config['kernel']!r}"]
    template = config.get("template", {})
    for name in template:
        if name not in k.params:
            errors.append(f"line {_line_of(text, ['template', name])}: template/{name}: not a parameter of {k.name}")
    seen = set()
    for i, axis in enumerate(config["axes"]):
        name = axis["param"]
        line = _line_of(text, ["axes", name])
        if name in seen:
            errors.append(f"line {line}: axes/{i}: duplicate axis {name!r}")
        seen.add(name)
        if name not in k.params:
            errors.append(f"line {line}: axes/{i}: {name!r} is not a parameter of {k.name}")
        elif name not in template:
            errors.append(f"line {line}: axes/{i}: swept parameter {name!r} missing from template")
    for name, default in k.params.items():
        if default is REQUIRED and name not in template:
            errors.append(f"line {_line_of(text, ['template'])}: template: required parameter {name!r} missing")
    for out in config["outputs"]:
        if out not in k.outputs:
            errors.append(f"line {_line_of(text, ['outputs'])}: outputs: {out!r} is not an output of {k.name}")
    return errors


def load_config(source) -> tuple[dict, str]:
    """Read a scenario from a path, a built-in name or a traversable."""
    if isinstance(source, dict):
        return source, json.dumps(source, indent=2)
    if hasattr(source, "read_text") and not isinstance(source, (str, Path)):
        text = source.read_text()
    else:
        path = Path(source)
        if not path.exists() and str(source) in list_scenarios():
            text = builtin_path(str(source)).read_text()
        else:
            text = path.read_text()
    try:
        return json.loads(text), text
    except json.JSONDecodeError as exc:
        raise ConfigError([f"line {exc.lineno}: invalid JSON: {exc.msg}"]) from exc


def checked_config(source) -> dict:
    config, text = load_config(source)
    errors = validate_config(config, text)
    if errors:
        raise ConfigError(errors)
    return config


def axis_values(axis: dict) -> list:
    if "values" in axis:
        return list(axis["values"])
    return [float(v) for v in np.linspace(axis["start"], axis["stop"], axis["steps"])]


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def cell_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


# running


@dataclass
class CellResult:
    index: int
    values: dict | None
    error: str | None = None


def _run_cell(args) -> CellResult:
    kname, params, index = args
    try:
        out = KERNELS[kname].func(params)
        return CellResult(index, {k: float(v) for k, v in out.items()})
    except Exception as exc:  # recorded per cell; the sweep continues
        return CellResult(index, None, f"{type(exc).__name__}: {exc}")


@dataclass
class RunResult:
    name: str
    out_dir: Path
    files: dict[str, Path]
    manifest: dict
    failed: list[dict] = field(default_factory=list)

    @property
    def manifest_path(self) -> Path:
        return self.out_dir / "manifest.json"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_scenario(source, out_dir, seed: int | None = None, jobs: int | None = None) -> RunResult:
    """Run a scenario grid and write CSVs plus ``manifest.json`` into ``out_dir/<name>``.

    Raises :class:`ConfigError` before any computation if the config is
    invalid. Failed cells are recorded in the manifest and left out of the
    CSVs.
    """
    config = checked_config(source)
    k = KERNELS[config["kernel"]]
    seed = int(config.get("seed", 0) if seed is None else seed)
    jobs = int(config.get("jobs", 1) if jobs is None else jobs)
    axes = config["axes"]
    names = [a["param"] for a in axes]
    grids = [axis_values(a) for a in axes]
    base = {n: v for n, v in k.params.items() if v is not REQUIRED}
    base.update(config.get("template", {}))
    base["_outputs"] = tuple(config["outputs"])
    tasks = []
    for index, combo in enumerate(itertools.product(*grids)):
        params = dict(base, **dict(zip(names, combo)))
        params["_seed"] = cell_seed(seed, index)
        tasks.append((k.name, params, index))

    start = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_run_cell(t) for t in tasks]
    results.sort(key=lambda r: r.index)
    wall = time.perf_counter() - start

    out = Path(out_dir) / config["name"]
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    failed = [{"index": r.index, "params": {n: tasks[r.index][1][n] for n in names}, "error": r.error} for r in results if r.error]
    for quantity in config["outputs"]:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names + [quantity])
        for r in results:
            if r.values is None:
                continue
            params = tasks[r.index][1]
            writer.writerow([_fmt(params[n]) for n in names] + [repr(r.values[quantity])])
        path = out / f"{quantity}.csv"
        path.write_text(buf.getvalue())
        files[quantity] = path

    import scipy

    manifest = {
        "scenario": config["name"],
        "kernel": k.name,
        "config_sha256": config_hash(config),
        "config": config,
        "seed": seed,
        "jobs": jobs,
        "cells": len(tasks),
        "failed_cells": failed,
        "wall_time_s": wall,
        "versions": {
            "donorcluster": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "files": [
            {"path": p.name, "sha256": _sha256(p), "rows": p.read_text().count("\n") - 1} for p in files.values()
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunResult(config["name"], out, files, manifest, failed)


# reading results back


@dataclass
class Grid:
    """A 2D result map: ``values[i, j]`` at ``x[i]`` (first axis), ``y[j]``."""

    x_name: str
    y_name: str
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray

    def region(self, threshold: float) -> np.ndarray:
        return self.values < threshold

    def extent(self, threshold: float) -> dict:
        """Axis ranges covered by cells below ``threshold`` (NaN if none)."""
        mask = self.region(threshold)
        if not mask.any():
            return {f"{n}_{s}": math.nan for n in (self.x_name, self.y_name) for s in ("min", "max")}
        xs = self.x[mask.any(axis=1)]
        ys = self.y[mask.any(axis=0)]
        return {
            f"{self.x_name}_min": float(xs.min()),
            f"{self.x_name}_max": float(xs.max()),
            f"{self.y_name}_min": float(ys.min()),
            f"{self.y_name}_max": float(ys.max()),
        }

    def at(self, x: float, y: float) -> float:
        i = int(np.argmin(np.abs(self.x - x)))
        j = int(np.argmin(np.abs(self.y - y)))
        return float(self.values[i, j])


def read_grid(path) -> Grid:
    """Load a two-axis CSV written by :func:`run_scenario` (missing cells are NaN)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if len(header) != 3:
        raise ValueError("expected two axes and one value column")
    data = np.array([[float(v) for v in r] for r in body])
    x = np.unique(data[:, 0])
    y = np.unique(data[:, 1])
    values = np.full((x.size, y.size), np.nan)
    for a, b, v in data:
        values[np.searchsorted(x, a), np.searchsorted(y, b)] = v
    return Grid(header[0], header[1], x, y, values)

