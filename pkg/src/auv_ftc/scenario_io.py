"""Scenario files, run outputs and plot scripts.

Scenario files are YAML mappings whose keys carry their units (``dt_s``,
``max_thrust_n`` ...).  Omitted keys take the defaults of :class:`Scenario`.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import (
    MissingLogError,
    OutputError,
    ScenarioParseError,
    ScenarioValidationError,
    WeightError,
)
from .harness import (
    ConstantReference,
    ControllerSpec,
    FilterSpec,
    HelixReference,
    NoiseSpec,
    Scenario,
    SimLog,
    pair_fault_space,
)
from .lqt import CostWeights
from .vehicle import BodyState, Thruster, VehicleParams, fault_coefficients

BUNDLED = ("default", "shift")


@dataclass(frozen=True)
class RunConfig:
    command: str
    scenario_path: Path | None = None
    output_dir: Path = Path("out")
    seed: int | None = None
    format: str = "csv"
    intervals: tuple[float, ...] = (0.1, 1.0, 5.0, 10.0)
    jobs: int = 1


def bundled_scenario_path(name: str = "default") -> Path:
    """Path of a scenario file shipped with the package ("default" or "shift")."""
    if name not in BUNDLED:
        raise ValueError(f"no bundled scenario {name!r}; choose from {BUNDLED}")
    return Path(str(resources.files("auv_ftc") / "data" / f"{name}.yaml"))


# --------------------------------------------------------------------------
# parsing

def _line_index(node, prefix="", out=None):
    """Map dotted key paths to 1-based source lines."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _line_index(v, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = v.start_mark.line + 1
            _line_index(v, path, out)
    return out


class _Reader:
    """Typed access to the parsed mapping; every failure names line and field."""

    def __init__(self, data: dict, lines: dict):
        self.data, self.lines = data, lines

    def fail(self, path, message):
        raise ScenarioParseError(message, line=self.lines.get(path), field=path)

    def section(self, path, allowed):
        d = self._get(path, {}) if path else self.data
        if not isinstance(d, dict):
            self.fail(path, "expected a mapping")
        for key in d:
            if key not in allowed:
                full = f"{path}.{key}" if path else str(key)
                self.fail(full, f"unknown key {key!r}")
        return d

    def _get(self, path, default):
        d = self.data
        for part in path.split("."):
            if not isinstance(d, dict) or part not in d:
                return default
            d = d[part]
        return d

    def has(self, path):
        return self._get(path, _MISSING) is not _MISSING

    def number(self, path, default=None, integer=False):
        v = self._get(path, _MISSING)
        if v is _MISSING:
            return default
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, f"expected a number, got {v!r}")
        if integer:
            if float(v) != int(v):
                self.fail(path, f"expected an integer, got {v!r}")
            return int(v)
        return float(v)

    def vector(self, path, length=None, default=None):
        v = self._get(path, _MISSING)
        if v is _MISSING:
            return default
        if not isinstance(v, list) or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            self.fail(path, f"expected a list of numbers, got {v!r}")
        if length is not None and len(v) != length:
            self.fail(path, f"expected {length} values, got {len(v)}")
        return tuple(float(x) for x in v)

    def choice(self, path, options, default):
        v = self._get(path, _MISSING)
        if v is _MISSING:
            return default
        if v not in options:
            self.fail(path, f"expected one of {', '.join(map(str, options))}, got {v!r}")
        return v

    def flag(self, path, default):
        v = self._get(path, _MISSING)
        if v is _MISSING:
            return default
        if not isinstance(v, bool):
            self.fail(path, f"expected true/false, got {v!r}")
        return v

    def index_set(self, path, v):
        if not isinstance(v, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
            self.fail(path, f"expected a list of thruster indices, got {v!r}")
        return frozenset(v)


_MISSING = object()

_TOP = {"name", "duration_s", "dt_s", "seed", "vehicle", "model_space", "initial_priors",
        "fault_schedule", "noise", "weights", "eps_floor", "reference", "baseline",
        "controller", "filter", "initial_state", "abort_bound_m", "saturation"}
_VEHICLE = {"dry_mass_kg", "fluid_density_kg_m3", "added_mass_linear_kg",
            "added_mass_rotational_kg_m2", "rotational_inertia_kg_m2", "restoring_arm_z_m",
            "max_thrust_n", "horizontal_thruster_angle_deg", "linear_damping",
            "quadratic_damping", "thrusters", "gravity_m_s2"}


def _vehicle(rd: _Reader, problems: list) -> VehicleParams:
    rd.section("vehicle", _VEHICLE)
    base = VehicleParams()
    kw = {}
    for key, attr, conv in (
        ("dry_mass_kg", "dry_mass", rd.number),
        ("fluid_density_kg_m3", "fluid_density", rd.number),
        ("restoring_arm_z_m", "restoring_arm_z", rd.number),
        ("max_thrust_n", "max_thrust", rd.number),
        ("gravity_m_s2", "gravity", rd.number),
    ):
        v = conv(f"vehicle.{key}")
        if v is not None:
            kw[attr] = v
    for key, attr, n in (
        ("added_mass_linear_kg", "added_mass_linear", 3),
        ("added_mass_rotational_kg_m2", "added_mass_rotational", 3),
        ("rotational_inertia_kg_m2", "rotational_inertia", 3),
        ("linear_damping", "linear_damping", 6),
        ("quadratic_damping", "quadratic_damping", 6),
    ):
        v = rd.vector(f"vehicle.{key}", n)
        if v is not None:
            kw[attr] = v
    ang = rd.number("vehicle.horizontal_thruster_angle_deg")
    if ang is not None:
        kw["horizontal_thruster_angle"] = math.radians(ang)
    thr = rd._get("vehicle.thrusters", _MISSING)
    if thr is not _MISSING:
        if not isinstance(thr, list):
            rd.fail("vehicle.thrusters", "expected a list")
        out = []
        for i, t in enumerate(thr):
            path = f"vehicle.thrusters[{i}]"
            if not isinstance(t, dict) or set(t) != {"position_m", "direction"}:
                rd.fail(path, "expected keys position_m and direction")
            pos = _vec3(rd, path, t, "position_m")
            d = _vec3(rd, path, t, "direction")
            try:
                out.append(Thruster(pos, d))
            except ValueError as exc:
                problems.append((path, str(exc)))
        kw["thrusters"] = tuple(out)
    try:
        return replace(base, **kw)
    except ValueError as exc:
        problems.append(("vehicle", str(exc)))
        return base


def _vec3(rd, path, mapping, key):
    v = mapping[key]
    if not isinstance(v, list) or len(v) != 3 or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        rd.fail(f"{path}.{key}", f"expected 3 numbers, got {v!r}")
    return tuple(float(x) for x in v)


def _model_space(rd: _Reader, problems: list):
    v = rd._get("model_space", _MISSING)
    if v is _MISSING or v == "pairs":
        return tuple(pair_fault_space())
    if not isinstance(v, list):
        rd.fail("model_space", "expected a list of failed-thruster sets or 'pairs'")
    out = []
    for i, f in enumerate(v):
        failed = rd.index_set(f"model_space[{i}]", f)
        try:
            out.append(fault_coefficients(failed, i))
        except ValueError as exc:
            problems.append((f"model_space[{i}]", str(exc)))
            out.append(fault_coefficients((), i))
    return tuple(out)


def _schedule(rd: _Reader):
    v = rd._get("fault_schedule", _MISSING)
    if v is _MISSING:
        return Scenario.__dataclass_fields__["fault_schedule"].default
    if not isinstance(v, list):
        rd.fail("fault_schedule", "expected a list of {time_s, failed} entries")
    out = []
    for i, e in enumerate(v):
        path = f"fault_schedule[{i}]"
        if not isinstance(e, dict) or set(e) != {"time_s", "failed"}:
            rd.fail(path, "expected keys time_s and failed")
        t = e["time_s"]
        if isinstance(t, bool) or not isinstance(t, (int, float)):
            rd.fail(f"{path}.time_s", f"expected a number, got {t!r}")
        out.append((float(t), rd.index_set(f"{path}.failed", e["failed"])))
    return tuple(out)


def _reference(rd: _Reader):
    rd.section("reference", {"type", "radius_m", "rate_rad_s", "climb_m_s", "setpoint"})
    kind = rd.choice("reference.type", ("helix", "constant"), "helix")
    if kind == "helix":
        d = HelixReference()
        return HelixReference(rd.number("reference.radius_m", d.radius),
                              rd.number("reference.rate_rad_s", d.rate),
                              rd.number("reference.climb_m_s", d.climb))
    return ConstantReference(rd.vector("reference.setpoint", 6, (0.0,) * 6))


def parse_scenario_text(text: str, source: str = "<string>") -> Scenario:
    """Parse scenario YAML text; see :func:`parse_scenario`."""
    try:
        root = yaml.compose(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ScenarioParseError(f"{source}: {exc.problem}",
                                 line=mark.line + 1 if mark else None) from None
    if root is None:
        raise ScenarioParseError(f"{source}: empty scenario file")
    if not isinstance(root, yaml.MappingNode):
        raise ScenarioParseError(f"{source}: top level must be a mapping", line=1)
    data = yaml.safe_load(text)
    rd = _Reader(data, _line_index(root))
    rd.section("", _TOP)
    problems: list[tuple[str, str]] = []

    d = Scenario.__dataclass_fields__
    kw = {}
    name = data.get("name", "scenario")
    if not isinstance(name, str):
        rd.fail("name", "expected a string")
    kw["name"] = name
    kw["duration_s"] = rd.number("duration_s", d["duration"].default)
    kw["dt_s"] = rd.number("dt_s", d["dt"].default)
    kw["seed"] = rd.number("seed", 0, integer=True)
    kw["params"] = _vehicle(rd, problems)
    kw["model_space"] = _model_space(rd, problems)
    priors = rd.vector("initial_priors")
    if priors is None:
        M = len(kw["model_space"])
        priors = d["initial_priors"].default if M == 6 else (1.0 / M,) * M
    kw["initial_priors"] = priors
    kw["fault_schedule"] = _schedule(rd)

    rd.section("noise", {"process_std", "measurement_std_m"})
    kw["noise"] = NoiseSpec(rd.number("noise.process_std", 0.02),
                            rd.number("noise.measurement_std_m", 0.02))

    rd.section("weights", {"q", "r"})
    q = rd.vector("weights.q", 6, (100.0,) * 5 + (0.01,))
    r_raw = rd._get("weights.r", _MISSING)
    r = rd.vector("weights.r", 8) if isinstance(r_raw, list) else rd.number("weights.r", 100.0)
    try:
        kw["weights"] = CostWeights.diagonal(q, r)
    except WeightError as exc:
        problems.append(("weights", str(exc)))
        kw["weights"] = d["weights"].default_factory()

    kw["eps_floor"] = rd.number("eps_floor", d["eps_floor"].default)
    kw["reference"] = _reference(rd)
    rd.section("baseline", {"detection_interval_s"})
    kw["baseline"] = rd.number("baseline.detection_interval_s")

    rd.section("controller", {"horizon_steps", "resolve_every_steps", "jacobian", "heading",
                              "saturate_each"})
    c = ControllerSpec()
    kw["controller"] = ControllerSpec(
        rd.number("controller.horizon_steps", c.horizon_steps, integer=True),
        rd.number("controller.resolve_every_steps", c.resolve_every, integer=True),
        rd.choice("controller.jacobian", ("analytic", "fd"), c.jacobian),
        rd.flag("controller.saturate_each", c.saturate_each),
        rd.choice("controller.heading", ("reference", "estimate"), c.heading),
    )
    rd.section("filter", {"initial_cov", "model_error_velocity", "model_error_pose", "propagation"})
    f = FilterSpec()
    kw["filter"] = FilterSpec(
        initial_cov=rd.number("filter.initial_cov", f.initial_cov),
        model_error_velocity=rd.number("filter.model_error_velocity", f.model_error_velocity),
        model_error_pose=rd.number("filter.model_error_pose", f.model_error_pose),
        propagation=rd.choice("filter.propagation", ("nonlinear", "linear"), f.propagation),
    )
    rd.section("initial_state", {"nu", "eta"})
    if rd.has("initial_state"):
        try:
            kw["initial_state"] = BodyState(np.array(rd.vector("initial_state.nu", 6, (0.0,) * 6)),
                                            np.array(rd.vector("initial_state.eta", 6, (0.0,) * 6)))
        except Exception as exc:  # noqa: BLE001 - reported as a violation
            problems.append(("initial_state", str(exc)))
    kw["abort_bound_m"] = rd.number("abort_bound_m", d["abort_bound"].default)
    kw["saturation"] = rd.choice("saturation", ("clamp", "scale", "error"), d["saturation"].default)
    return _build(kw, problems)


def _build(kw: dict, problems: list) -> Scenario:
    args = dict(
        name=kw["name"], duration=kw["duration_s"], dt=kw["dt_s"], seed=kw["seed"],
        params=kw["params"], model_space=kw["model_space"], initial_priors=kw["initial_priors"],
        fault_schedule=kw["fault_schedule"], noise=kw["noise"], weights=kw["weights"],
        eps_floor=kw["eps_floor"], reference=kw["reference"], baseline=kw["baseline"],
        controller=kw["controller"], filter=kw["filter"], abort_bound=kw["abort_bound_m"],
        saturation=kw["saturation"],
    )
    if "initial_state" in kw:
        args["initial_state"] = kw["initial_state"]
    try:
        s = Scenario(**args)
    except ScenarioValidationError as exc:
        problems = problems + exc.violations
        s = None
    if problems:
        raise ScenarioValidationError(problems)
    return s


def parse_scenario(path) -> Scenario:
    """Read and validate a scenario file.

    Raises :class:`ScenarioParseError` (with line and field where known) for
    malformed input and :class:`ScenarioValidationError` listing every
    violated constraint.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_scenario_text(text, str(path))


# --------------------------------------------------------------------------
# outputs

POSE = ("x", "y", "z", "phi", "theta", "psi")


def csv_header(n_models: int) -> list[str]:
    return (["t"] + list(POSE) + [f"ref_{c}" for c in POSE] + ["err_n", "err_e", "err_d"]
            + [f"p_{i}" for i in range(1, n_models + 1)]
            + [f"u_{i}" for i in range(1, 9)] + ["true_model"])


def log_table(log: SimLog) -> np.ndarray:
    """Numeric columns in :func:`csv_header` order (``u`` = applied force)."""
    return np.column_stack([log.t, log.eta, log.ref, log.error, log.posterior,
                            log.applied, log.true_model])


def log_to_csv(log: SimLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(log.posterior.shape[1]))
    for row in log_table(log):
        w.writerow([format(float(x), ".17g") for x in row[:-1]] + [str(int(row[-1]))])
    return buf.getvalue()


def read_csv_log(path) -> dict[str, np.ndarray]:
    """Columns of a CSV log written by :func:`write_outputs`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    return {h: body[:, i] for i, h in enumerate(header)}


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write ({exc.strerror})", path) from None
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_outputs(log: SimLog, metrics: dict, config: RunConfig, stem: str = "run") -> list[Path]:
    """Write the log (CSV or JSON per ``config.format``) and the metrics JSON."""
    out = Path(config.output_dir)
    paths = []
    if config.format == "csv":
        paths.append(_write(out / f"{stem}.csv", log_to_csv(log)))
    elif config.format == "json":
        cols = dict(zip(csv_header(log.posterior.shape[1]), log_table(log).T))
        cols["true_model"] = cols["true_model"].astype(int)
        doc = {"model_labels": log.model_labels, "columns": _jsonable(cols)}
        paths.append(_write(out / f"{stem}.json", json.dumps(doc)))
    else:
        raise ValueError(f"unknown output format {config.format!r}")
    paths.append(_write(out / f"{stem}_metrics.json",
                        json.dumps(_jsonable(metrics), indent=2, sort_keys=True) + "\n"))
    return paths


# --------------------------------------------------------------------------
# plot script

_PLOT_HEAD = '''"""Plots for {names}. Run from anywhere: python {script}"""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent


def load(name):
    with open(HERE / name, newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    return {{h: [float(r[i]) for r in rows[1:]] for i, h in enumerate(head)}}

'''

_PLOT_BLOCKS = {
    "posteriors": '''fig, ax = plt.subplots()
for k in [c for c in d if c.startswith("p_")]:
    ax.plot(d["t"], d[k], label=k)
ax.set_xlabel("t [s]"); ax.set_ylabel("posterior"); ax.legend()
fig.savefig(HERE / "{stem}_posteriors.png")
''',
    "trajectory": '''fig = plt.figure()
ax = fig.add_subplot(projection="3d")
ax.plot(d["x"], d["y"], d["z"], label="vehicle")
ax.plot(d["ref_x"], d["ref_y"], d["ref_z"], "--", label="reference")
ax.set_xlabel("x [m]"); ax.set_ylabel("y [m]"); ax.set_zlabel("z [m]"); ax.legend()
fig.savefig(HERE / "{stem}_trajectory.png")
''',
    "errors": '''fig, ax = plt.subplots()
for k in ("err_n", "err_e", "err_d"):
    ax.plot(d["t"], d[k], label=k)
ax.set_xlabel("t [s]"); ax.set_ylabel("error [m]"); ax.legend()
fig.savefig(HERE / "{stem}_errors.png")
''',
    "thrusts": '''fig, ax = plt.subplots()
for k in [c for c in d if c.startswith("u_")]:
    ax.plot(d["t"], d[k], label=k)
ax.set_xlabel("t [s]"); ax.set_ylabel("thrust [N]"); ax.legend()
fig.savefig(HERE / "{stem}_thrusts.png")
''',
}


def emit_plot_script(log_paths, output_dir, name: str = "plot.py") -> Path:
    """Write a standalone matplotlib script for the given CSV logs.

    Each log gets four blocks (posteriors, trajectory, errors, thrusts);
    several logs additionally get one overlay block of the planar error
    with one series per log.  Logs are referenced relative to the script.
    """
    log_paths = [Path(p) for p in log_paths]
    if not log_paths:
        raise MissingLogError("no logs given")
    for p in log_paths:
        if not p.is_file():
            raise MissingLogError(f"log not found: {p}")
    out = Path(output_dir)
    script = out / name
    rel = [Path(_relpath(p, out)).as_posix() for p in log_paths]
    parts = [_PLOT_HEAD.format(names=", ".join(rel), script=name)]
    for r in rel:
        stem = Path(r).stem
        parts.append(f'd = load("{r}")\n')
        for block, body in _PLOT_BLOCKS.items():
            parts.append(f"# --- block: {block} [{r}]\n" + body.format(stem=stem))
    if len(rel) > 1:
        body = ["# --- block: overlay [planar error]", "fig, ax = plt.subplots()"]
        for r in rel:
            body.append(f'd = load("{r}")')
            body.append('ax.plot(d["t"], [(a * a + b * b) ** 0.5 for a, b in zip(d["err_n"], d["err_e"])], '
                        f'label="{Path(r).stem}")  # series')
        body.append('ax.set_xlabel("t [s]"); ax.set_ylabel("planar error [m]"); ax.legend()')
        body.append('fig.savefig(HERE / "overlay_planar_error.png")')
        parts.append("\n".join(body) + "\n")
    return _write(script, "\n".join(parts))


def _relpath(path: Path, start: Path) -> str:
    return os.path.relpath(path.resolve(), start.resolve())
