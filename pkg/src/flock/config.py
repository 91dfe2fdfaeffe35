"""Scenario configuration: JSON schema, validation and built-in presets.

Agent and edge indices are 0-based in configs and in the API. CSV column
names are 1-based (``q_1_x`` is agent 0).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import network as nw
from .control import Gains
from .errors import ConfigParseError, InvariantError, SchemaError
from .gp import KernelParams
from .metrics import DEFAULT_CELL_CAP
from .sim import DisturbanceSpec, ForceTerm, SimSettings

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ControlSpec:
    mode: str = "nominal"
    gains: Gains = field(default_factory=Gains)
    prior: DisturbanceSpec | None = None


@dataclass(frozen=True)
class GPSpec:
    kernel: KernelParams = field(default_factory=KernelParams)
    fit_at_freeze: bool = False


@dataclass(frozen=True)
class BoundSpec:
    epsilon: float = 0.95
    rkhs: Any = "surrogate"
    omega: Any = "auto"
    grid_points_per_axis: int = 5
    rkhs_safety_factor: float = 2.0
    cell_cap: int = DEFAULT_CELL_CAP


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    framework: nw.Framework
    initial_positions: tuple[tuple[float, ...], ...]
    initial_velocities: tuple[tuple[float, ...], ...]
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    control: ControlSpec = field(default_factory=ControlSpec)
    gp: GPSpec = field(default_factory=GPSpec)
    sim: SimSettings = field(default_factory=SimSettings)
    bound: BoundSpec = field(default_factory=BoundSpec)

    @classmethod
    def minimal(cls, fw, q0, v0, t_end=30.0, dt=1e-3, gains=Gains(), disturbance=None, mode="nominal"):
        return cls(
            name="custom",
            framework=fw,
            initial_positions=_rows(q0, fw.d),
            initial_velocities=_rows(v0, fw.d),
            disturbance=disturbance or DisturbanceSpec(),
            control=ControlSpec(mode=mode, gains=gains),
            sim=SimSettings(dt=dt, t_end=t_end),
        )

    def with_mode(self, mode: str) -> "ScenarioConfig":
        return replace(self, control=replace(self.control, mode=mode))

    def without_disturbance(self) -> "ScenarioConfig":
        return replace(self, disturbance=DisturbanceSpec())

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, sim=replace(self.sim, seed=seed))


def _rows(x, d) -> tuple[tuple[float, ...], ...]:
    arr = np.asarray(x, dtype=float).reshape(-1, d)
    return tuple(tuple(float(c) for c in row) for row in arr)


# -- serialization -----------------------------------------------------------


def _terms_to_json(spec: DisturbanceSpec | None):
    if spec is None:
        return []
    return [
        {"agent": t.agent, "component": t.component, "amplitude": t.amplitude,
         "trig": t.trig, "frequency": t.frequency, "input_component": t.input_component}
        for t in spec.terms
    ]


def to_dict(cfg: ScenarioConfig) -> dict:
    fw = cfg.framework
    k = cfg.gp.kernel
    s = cfg.sim
    b = cfg.bound
    return {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "framework": {
            "n": fw.n,
            "d": fw.d,
            "edges": [list(e) for e in fw.edges],
            "desired_lengths": list(fw.desired_lengths),
        },
        "initial": {
            "positions": [list(r) for r in cfg.initial_positions],
            "velocities": [list(r) for r in cfg.initial_velocities],
        },
        "disturbance": _terms_to_json(cfg.disturbance),
        "control": {
            "mode": cfg.control.mode,
            "gains": {"align": cfg.control.gains.align, "shape": cfg.control.gains.shape},
            "prior": _terms_to_json(cfg.control.prior),
        },
        "gp": {
            "lengthscale": list(k.lengthscale) if isinstance(k.lengthscale, tuple) else k.lengthscale,
            "signal_variance": k.signal_variance,
            "noise_variance": k.noise_variance,
            "fit_at_freeze": cfg.gp.fit_at_freeze,
        },
        "sim": {
            "dt": s.dt,
            "t_end": s.t_end,
            "sample_interval": s.sample_interval,
            "freeze_time": s.freeze_time,
            "accel_noise_sigma": s.accel_noise_sigma,
            "seed": s.seed,
            "max_samples": s.max_samples,
        },
        "bound": {
            "epsilon": b.epsilon,
            "rkhs": b.rkhs if isinstance(b.rkhs, str) else _plain(b.rkhs),
            "omega": b.omega if isinstance(b.omega, str) else _plain(b.omega),
            "grid_points_per_axis": b.grid_points_per_axis,
            "rkhs_safety_factor": b.rkhs_safety_factor,
            "cell_cap": b.cell_cap,
        },
    }


def _plain(x):
    if isinstance(x, (tuple, list)):
        return [_plain(v) for v in x]
    return x


def serialize(cfg: ScenarioConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2) + "\n"


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(serialize(cfg))


# -- parsing -----------------------------------------------------------------

_SECTIONS = {"schema_version", "name", "framework", "initial", "disturbance", "control", "gp", "sim", "bound"}


def _obj(d, path, allowed, required=()):
    if not isinstance(d, dict):
        raise SchemaError(path, f"expected an object, got {type(d).__name__}")
    extra = set(d) - set(allowed)
    if extra:
        raise SchemaError(f"{path}.{sorted(extra)[0]}", "unknown field")
    for key in required:
        if key not in d:
            raise SchemaError(f"{path}.{key}", "required field is missing")
    return d


def _num(x, path, *, positive=False, nonneg=False, integer=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise SchemaError(path, f"expected a number, got {json.dumps(x)}")
    if integer and not (isinstance(x, int) or float(x).is_integer()):
        raise SchemaError(path, f"expected an integer, got {x}")
    x = int(x) if integer else float(x)
    if not math.isfinite(x):
        raise SchemaError(path, "must be finite")
    if positive and not x > 0:
        raise InvariantError(path, f"must be > 0, got {x}")
    if nonneg and not x >= 0:
        raise InvariantError(path, f"must be >= 0, got {x}")
    return x


def _list(x, path, length=None):
    if not isinstance(x, list):
        raise SchemaError(path, f"expected a list, got {type(x).__name__}")
    if length is not None and len(x) != length:
        raise InvariantError(path, f"expected {length} entries, got {len(x)}")
    return x


def _terms(raw, path, n, d) -> DisturbanceSpec:
    out = []
    for k, t in enumerate(_list(raw, path)):
        p = f"{path}[{k}]"
        _obj(t, p, {"agent", "component", "amplitude", "trig", "frequency", "input_component"},
             ("agent", "component", "amplitude"))
        agent = _num(t["agent"], f"{p}.agent", integer=True)
        comp = _num(t["component"], f"{p}.component", integer=True)
        inp = _num(t.get("input_component", 0), f"{p}.input_component", integer=True)
        if not 0 <= agent < n:
            raise InvariantError(f"{p}.agent", f"must lie in [0, {n}), got {agent}")
        for name, val in (("component", comp), ("input_component", inp)):
            if not 0 <= val < d:
                raise InvariantError(f"{p}.{name}", f"must lie in [0, {d}), got {val}")
        trig = t.get("trig", "const")
        if trig not in ("sin", "cos", "const"):
            raise SchemaError(f"{p}.trig", f"must be 'sin', 'cos' or 'const', got {trig!r}")
        out.append(ForceTerm(agent, comp, _num(t["amplitude"], f"{p}.amplitude"), trig,
                             _num(t.get("frequency", 0.0), f"{p}.frequency"), inp))
    return DisturbanceSpec(tuple(out))


def _points(raw, path, n, d):
    rows = _list(raw, path, n)
    out = []
    for i, r in enumerate(rows):
        r = _list(r, f"{path}[{i}]", d)
        out.append(tuple(_num(x, f"{path}[{i}][{j}]") for j, x in enumerate(r)))
    return tuple(out)


def from_dict(raw: dict) -> ScenarioConfig:
    _obj(raw, "config", _SECTIONS, ("schema_version", "framework", "initial"))
    version = raw["schema_version"]
    if version != SCHEMA_VERSION:
        raise SchemaError("schema_version", f"unsupported version {version!r}; expected {SCHEMA_VERSION}")
    name = raw.get("name", "custom")
    if not isinstance(name, str):
        raise SchemaError("name", "expected a string")

    f = _obj(raw["framework"], "framework", {"n", "d", "edges", "desired_lengths"},
             ("n", "d", "edges", "desired_lengths"))
    n = _num(f["n"], "framework.n", integer=True)
    d = _num(f["d"], "framework.d", integer=True)
    edges = []
    for k, e in enumerate(_list(f["edges"], "framework.edges")):
        e = _list(e, f"framework.edges[{k}]", 2)
        edges.append(tuple(_num(x, f"framework.edges[{k}]", integer=True) for x in e))
    lengths = [_num(x, f"framework.desired_lengths[{k}]", positive=True)
               for k, x in enumerate(_list(f["desired_lengths"], "framework.desired_lengths", len(edges)))]
    try:
        fw = nw.Framework(n=n, d=d, edges=tuple(edges), desired_lengths=tuple(lengths))
    except nw.FrameworkError as exc:
        raise InvariantError("framework", str(exc)) from None

    ini = _obj(raw["initial"], "initial", {"positions", "velocities"}, ("positions",))
    q0 = _points(ini["positions"], "initial.positions", n, d)
    v0 = _points(ini.get("velocities", [[0.0] * d for _ in range(n)]), "initial.velocities", n, d)
    for i in range(n):
        for j in range(i):
            if q0[i] == q0[j]:
                raise InvariantError("initial.positions", f"agents {j} and {i} start at the same point")

    disturbance = _terms(raw.get("disturbance", []), "disturbance", n, d)

    c = _obj(raw.get("control", {}), "control", {"mode", "gains", "prior"})
    mode = c.get("mode", "nominal")
    if mode not in ("nominal", "learning"):
        raise SchemaError("control.mode", f"must be 'nominal' or 'learning', got {mode!r}")
    g = _obj(c.get("gains", {}), "control.gains", {"align", "shape"})
    gains = Gains(_num(g.get("align", 1.0), "control.gains.align", positive=True),
                  _num(g.get("shape", 1.0), "control.gains.shape", positive=True))
    prior_terms = _terms(c.get("prior", []), "control.prior", n, d)
    control = ControlSpec(mode, gains, prior_terms if prior_terms.terms else None)

    gsec = _obj(raw.get("gp", {}), "gp", {"lengthscale", "signal_variance", "noise_variance", "fit_at_freeze"})
    ls_raw = gsec.get("lengthscale", 1.0)
    if isinstance(ls_raw, list):
        ls = tuple(_num(x, f"gp.lengthscale[{j}]", positive=True)
                   for j, x in enumerate(_list(ls_raw, "gp.lengthscale", 2 * d)))
    else:
        ls = _num(ls_raw, "gp.lengthscale", positive=True)
    fit = gsec.get("fit_at_freeze", False)
    if not isinstance(fit, bool):
        raise SchemaError("gp.fit_at_freeze", "expected true or false")
    kernel = KernelParams(ls, _num(gsec.get("signal_variance", 1e4), "gp.signal_variance", positive=True),
                          _num(gsec.get("noise_variance", 1.0), "gp.noise_variance", nonneg=True))
    gpspec = GPSpec(kernel, fit)

    ssec = _obj(raw.get("sim", {}), "sim", {"dt", "t_end", "sample_interval", "freeze_time",
                                            "accel_noise_sigma", "seed", "max_samples"})
    dt = _num(ssec.get("dt", 1e-3), "sim.dt", positive=True)
    t_end = _num(ssec.get("t_end", 30.0), "sim.t_end", positive=True)
    si = ssec.get("sample_interval")
    ft = ssec.get("freeze_time")
    ms = ssec.get("max_samples")
    try:
        sim = SimSettings(
            dt=dt, t_end=t_end,
            sample_interval=None if si is None else _num(si, "sim.sample_interval", positive=True),
            freeze_time=None if ft is None else _num(ft, "sim.freeze_time", positive=True),
            accel_noise_sigma=_num(ssec.get("accel_noise_sigma", 0.0), "sim.accel_noise_sigma", nonneg=True),
            seed=_num(ssec.get("seed", 0), "sim.seed", integer=True),
            max_samples=None if ms is None else _num(ms, "sim.max_samples", positive=True, integer=True),
        )
    except ValueError as exc:
        raise InvariantError("sim", str(exc)) from None

    bsec = _obj(raw.get("bound", {}), "bound", {"epsilon", "rkhs", "omega", "grid_points_per_axis",
                                                "rkhs_safety_factor", "cell_cap"})
    eps = _num(bsec.get("epsilon", 0.95), "bound.epsilon")
    if not 0 < eps < 1:
        raise InvariantError("bound.epsilon", f"must lie strictly inside (0, 1), got {eps}")
    rkhs = bsec.get("rkhs", "surrogate")
    if isinstance(rkhs, str):
        if rkhs != "surrogate":
            raise SchemaError("bound.rkhs", f"expected 'surrogate' or numbers, got {rkhs!r}")
    elif isinstance(rkhs, list):
        if rkhs and isinstance(rkhs[0], list):
            rkhs = tuple(tuple(_num(x, f"bound.rkhs[{i}][{j}]", positive=True)
                               for j, x in enumerate(_list(r, f"bound.rkhs[{i}]", d)))
                         for i, r in enumerate(_list(rkhs, "bound.rkhs", n)))
        else:
            rkhs = tuple(_num(x, f"bound.rkhs[{j}]", positive=True)
                         for j, x in enumerate(_list(rkhs, "bound.rkhs", d)))
    else:
        rkhs = _num(rkhs, "bound.rkhs", positive=True)
    omega = bsec.get("omega", "auto")
    if isinstance(omega, str):
        if omega != "auto":
            raise SchemaError("bound.omega", f"expected 'auto' or a list of [lo, hi], got {omega!r}")
    else:
        pairs = []
        for j, pr in enumerate(_list(omega, "bound.omega", 2 * d * n)):
            lo, hi = (_num(x, f"bound.omega[{j}]") for x in _list(pr, f"bound.omega[{j}]", 2))
            if not lo <= hi:
                raise InvariantError(f"bound.omega[{j}]", f"empty interval [{lo}, {hi}]")
            pairs.append((lo, hi))
        omega = tuple(pairs)
    grid = _num(bsec.get("grid_points_per_axis", 5), "bound.grid_points_per_axis", integer=True)
    if grid < 2:
        raise InvariantError("bound.grid_points_per_axis", f"must be >= 2, got {grid}")
    bound = BoundSpec(eps, rkhs, omega, grid,
                      _num(bsec.get("rkhs_safety_factor", 2.0), "bound.rkhs_safety_factor", positive=True),
                      _num(bsec.get("cell_cap", DEFAULT_CELL_CAP), "bound.cell_cap", positive=True, integer=True))

    return ScenarioConfig(name, fw, q0, v0, disturbance, control, gpspec, sim, bound)


def parse_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParseError(str(path), f"cannot read file: {exc.strerror}") from None
    return parse_string(text, str(path))


def parse_string(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(source, f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return from_dict(raw)


# -- presets -----------------------------------------------------------------

SIDE = 200.0
_H = SIDE * math.sqrt(3.0) / 2.0

# Reference layouts fix the desired lengths, which are not given with the scenarios.
TRIANGLE_LAYOUT = [(0.0, 0.0), (SIDE, 0.0), (SIDE / 2, _H)]
TRIANGLE_EDGES = [(0, 1), (1, 2), (2, 0)]

# Zig-zag strip of four equilateral triangles; every edge has length SIDE.
HEXAD_LAYOUT = [(0.0, 0.0), (SIDE / 2, _H), (SIDE, 0.0), (1.5 * SIDE, _H), (2 * SIDE, 0.0), (2.5 * SIDE, _H)]
HEXAD_EDGES = [(0, 1), (1, 2), (0, 2), (2, 3), (1, 3), (3, 4), (2, 4), (4, 5), (3, 5)]

TETRA_LAYOUT = [
    (0.0, 0.0, 0.0),
    (SIDE, 0.0, 0.0),
    (SIDE / 2, _H, 0.0),
    (SIDE / 2, _H / 3, SIDE * math.sqrt(2.0 / 3.0)),
]
TETRA_EDGES = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def _term(agent, comp, amp, trig="const", freq=0.0, inp=0):
    return ForceTerm(agent, comp, float(amp), trig, float(freq), inp)


X, Y, Z = 0, 1, 2

DISTURBANCES = {
    # Two agents pushed apart: cohesion loss.
    "cohesion": DisturbanceSpec((
        _term(0, X, -300, "sin", 0.01, Y), _term(0, X, -50), _term(0, Y, -300),
        _term(2, X, 300, "sin", 0.01, Y), _term(2, Y, 300),
    )),
    "alignment": DisturbanceSpec((
        _term(0, X, -300, "sin", 0.01, Y), _term(0, X, -100),
        _term(0, Y, -300, "sin", 0.01, X), _term(0, Y, -100),
    )),
    "alignment_weak": DisturbanceSpec((
        _term(0, X, -200, "sin", 0.01, Y), _term(0, Y, -200, "sin", 0.01, X),
    )),
    # Agent 2's force is read as a function of its own velocity.
    "separation": DisturbanceSpec((
        _term(1, X, -30, "sin", 0.01, Y), _term(1, Y, 100, "sin", 0.01, X), _term(1, Y, 50),
        _term(2, X, -300, "sin", 0.01, X), _term(2, X, -200), _term(2, Y, 300),
    )),
    "hexad": DisturbanceSpec((
        _term(0, X, 300, "sin", 0.2, Y), _term(0, Y, -200),
        _term(2, X, 300, "sin", 0.2, Y), _term(2, Y, -200),
        _term(3, X, -300, "sin", 0.2, Y), _term(3, Y, 300, "cos", 0.2, X),
    )),
    "tetra": DisturbanceSpec((
        _term(0, X, 300, "sin", 0.2, Y), _term(0, Y, 300, "cos", 0.2, X), _term(0, Z, 10),
        _term(2, X, 300, "sin", 0.2, Y), _term(2, Y, -200), _term(2, Z, 300, "sin", 0.2, Y),
    )),
}


# Gains and kernels are per preset. With sides of 200 the unit-gain law is so
# stiff that the forces barely deform the shape, so the shape gain is lowered.
# Forces depend on velocity only, hence the very long position lengthscales.


def _triangle(disturbance: str) -> ScenarioConfig:
    return ScenarioConfig(
        name="triangle2d" if disturbance == "cohesion" else "triangle2d-" + disturbance.replace("_", "-"),
        framework=nw.Framework.from_layout(TRIANGLE_EDGES, TRIANGLE_LAYOUT),
        initial_positions=((0.0, 0.0), (215.0, -10.0), (90.0, 185.0)),
        initial_velocities=((10.0, 5.0), (12.0, 3.0), (9.0, 6.0)),
        disturbance=DISTURBANCES[disturbance],
        control=ControlSpec("learning", Gains(align=1.0, shape=1e-3)),
        gp=GPSpec(KernelParams((1e6, 1e6, 50.0, 50.0), 1e4, 1e-2)),
        sim=SimSettings(dt=1e-3, t_end=30.0, sample_interval=0.1, freeze_time=15.0),
    )


def _hexad() -> ScenarioConfig:
    return ScenarioConfig(
        name="hexad2d",
        framework=nw.Framework.from_layout(HEXAD_EDGES, HEXAD_LAYOUT),
        initial_positions=((450.0, 200.0), (510.0, 100.0), (590.0, 300.0),
                           (450.0, 0.0), (250.0, 650.0), (265.0, 400.0)),
        initial_velocities=tuple((0.0, 0.0) for _ in range(6)),
        disturbance=DISTURBANCES["hexad"],
        control=ControlSpec("learning", Gains(align=1.0, shape=1e-3)),
        gp=GPSpec(KernelParams((1e6, 1e6, 12.0, 12.0), 1e4, 1e-2)),
        sim=SimSettings(dt=1e-3, t_end=30.0, sample_interval=0.1, freeze_time=15.0),
    )


def _tetra() -> ScenarioConfig:
    return ScenarioConfig(
        name="tetra3d",
        framework=nw.Framework.from_layout(TETRA_EDGES, TETRA_LAYOUT),
        initial_positions=((100.0, 0.0, 0.0), (0.0, 0.0, 200.0), (0.0, -300.0, 0.0), (100.0, 0.0, -300.0)),
        initial_velocities=tuple((0.0, 0.0, 0.0) for _ in range(4)),
        disturbance=DISTURBANCES["tetra"],
        control=ControlSpec("learning", Gains(align=0.5, shape=1e-5)),
        gp=GPSpec(KernelParams((1e6, 1e6, 1e6, 12.0, 12.0, 12.0), 1e4, 1e-2)),
        sim=SimSettings(dt=1e-3, t_end=30.0, sample_interval=0.1, freeze_time=15.0),
    )


PRESETS = {
    "triangle2d": lambda: _triangle("cohesion"),
    "triangle2d-alignment": lambda: _triangle("alignment"),
    "triangle2d-alignment-weak": lambda: _triangle("alignment_weak"),
    "triangle2d-separation": lambda: _triangle("separation"),
    "hexad2d": _hexad,
    "tetra3d": _tetra,
}

PRESET_LAYOUTS = {
    "triangle2d": TRIANGLE_LAYOUT,
    "hexad2d": HEXAD_LAYOUT,
    "tetra3d": TETRA_LAYOUT,
}


def preset(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise SchemaError("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
