"""Configuration ingestion, validation and the bundled experiment presets.

Configs are YAML documents with five sections: converters, lines, comm_links,
controller and scenario. Quantities are plain numbers (already in SI base
units) or strings "value unit" with unit suffixes from
{V, kV, A, F, uF, ohm, S, s, ms}. The comm_links section is either a list of
{i, j, gain} entries or the directive "mirror_lines", which sets the
communication gain of every line edge to 1/R.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np
import yaml

from .controllers import DistributedController, DroopController
from .errors import ValidationError
from .grid_graph import GridTopology
from .mtdc_model import (
    DEFAULT_REGULATOR_GAIN,
    ConverterParams,
    assemble_distributed_loop,
    assemble_droop_loop,
)
from .simulator import Scenario

__all__ = [
    "ConverterSpec",
    "LineSpec",
    "CommLinkSpec",
    "ControllerSpec",
    "ScenarioSpec",
    "ConfigDocument",
    "parse_config",
    "parse_config_text",
    "dump_config",
    "config_to_text",
    "preset",
    "preset_names",
    "PAPER_4TERM",
]

_UNIT_FACTORS = {
    "V": 1.0,
    "kV": 1e3,
    "A": 1.0,
    "F": 1.0,
    "uF": 1e-6,
    "ohm": 1.0,
    "S": 1.0,
    "s": 1.0,
    "ms": 1e-3,
}

_ALLOWED_UNITS = {
    "capacitance": ("F", "uF"),
    "kp": ("S",),
    "resistance": ("ohm",),
    "gain": ("S",),
    "vnom": ("V", "kV"),
    "kv": ("S", "s"),  # regulator integral gain; accepted bare as 1/s
    "injection": ("A",),
    "time": ("s", "ms"),
    "gamma": (),
}


def _quantity(raw, field: str, context: str) -> float:
    """Convert a number or "value unit" string to SI base units."""
    if isinstance(raw, bool):
        raise ValidationError(f"{context}: expected a quantity, got boolean")
    if isinstance(raw, (int, float)):
        return float(raw)
    if isinstance(raw, str):
        parts = raw.strip().split()
        if len(parts) != 2:
            raise ValidationError(
                f"{context}: quantity string must be 'value unit', got {raw!r}"
            )
        try:
            value = float(parts[0])
        except ValueError:
            raise ValidationError(f"{context}: cannot parse number in {raw!r}") from None
        unit = parts[1]
        if unit not in _UNIT_FACTORS:
            raise ValidationError(f"{context}: unknown unit {unit!r}")
        allowed = _ALLOWED_UNITS.get(field)
        if allowed is not None and unit not in allowed:
            raise ValidationError(
                f"{context}: unit {unit!r} is not valid for {field} (allowed: {allowed})"
            )
        return value * _UNIT_FACTORS[unit]
    raise ValidationError(f"{context}: expected number or 'value unit' string, got {raw!r}")


@dataclass(frozen=True)
class ConverterSpec:
    id: int
    capacitance: float  # F
    kp: float  # S
    regulator: bool = False


@dataclass(frozen=True)
class LineSpec:
    i: int
    j: int
    resistance: float  # ohm


@dataclass(frozen=True)
class CommLinkSpec:
    i: int
    j: int
    gain: float


@dataclass(frozen=True)
class ControllerSpec:
    kind: str  # droop | distributed
    vnom: float  # V
    gamma: float = 0.0
    tau: float = 0.0  # s
    kv: float = DEFAULT_REGULATOR_GAIN  # 1/s, regulator integral gain


@dataclass(frozen=True)
class ScenarioSpec:
    pre_step_injections: tuple
    post_step_injections: tuple
    step_time: float = 0.0
    horizon: float = 10.0
    sample_interval: float = 1e-3


@dataclass(frozen=True)
class ConfigDocument:
    converters: tuple
    lines: tuple
    controller: ControllerSpec
    scenario: ScenarioSpec
    comm_links: tuple = ()
    mirror_lines: bool = False

    # -- derived model inputs ------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.converters)

    def line_topology(self) -> GridTopology:
        return GridTopology(
            self.n, tuple((ln.i, ln.j, 1.0 / ln.resistance) for ln in self.lines)
        )

    def comm_topology(self) -> GridTopology:
        if self.mirror_lines:
            return self.line_topology()
        return GridTopology(
            self.n, tuple((lk.i, lk.j, lk.gain) for lk in self.comm_links)
        )

    def converter_params(self) -> ConverterParams:
        regulators = [c.id for c in self.converters if c.regulator]
        return ConverterParams(
            capacitance=np.array([c.capacitance for c in self.converters]),
            droop_gain=np.array([c.kp for c in self.converters]),
            nominal_voltage=self.controller.vnom,
            regulator_node=regulators[0] if regulators else 1,
        )

    def build_controller(self):
        params = self.converter_params()
        if self.controller.kind == "droop":
            return DroopController(
                droop_gain=params.droop_gain, nominal_voltage=params.nominal_voltage
            )
        return DistributedController(
            droop_gain=params.droop_gain,
            regulator_flag=params.regulator_flag,
            gamma=self.controller.gamma,
            comm_topology=self.comm_topology(),
            nominal_voltage=params.nominal_voltage,
            delay=self.controller.tau,
            regulator_gain=self.controller.kv,
        )

    def system_builder(self):
        """Callable mapping an injection vector to the assembled closed loop."""
        params = self.converter_params()
        line = self.line_topology()
        if self.controller.kind == "droop":
            return lambda injections: assemble_droop_loop(line, params, injections)
        comm = self.comm_topology()
        gamma = self.controller.gamma
        kv = self.controller.kv
        return lambda injections: assemble_distributed_loop(
            line, comm, params, gamma, injections, regulator_gain=kv
        )

    def build_scenario(self, tau=None, horizon=None) -> Scenario:
        spec = self.scenario
        return Scenario(
            pre_step_injections=np.array(spec.pre_step_injections),
            post_step_injections=np.array(spec.post_step_injections),
            step_time=spec.step_time,
            horizon=horizon if horizon is not None else spec.horizon,
            delay=tau if tau is not None else self.controller.tau,
            sample_interval=spec.sample_interval,
        )

    def with_overrides(self, kind=None, tau=None) -> "ConfigDocument":
        ctl = self.controller
        if kind is not None:
            ctl = replace(ctl, kind=kind)
        if tau is not None:
            ctl = replace(ctl, tau=float(tau))
        return replace(self, controller=ctl)


def _require(mapping, key, context):
    if not isinstance(mapping, dict):
        raise ValidationError(f"{context}: expected a mapping, got {type(mapping).__name__}")
    if key not in mapping:
        raise ValidationError(f"{context}: missing required field {key!r}")
    return mapping[key]


def _injection_vector(raw, n, context):
    if not isinstance(raw, (list, tuple)) or len(raw) != n:
        raise ValidationError(f"{context}: expected a list of {n} injections")
    return tuple(
        _quantity(v, "injection", f"{context}[{k}]") for k, v in enumerate(raw)
    )


def parse_config_text(text: str, source: str = "<string>") -> ConfigDocument:
    """Parse and validate a YAML config document; all units converted to SI."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"{source}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError(f"{source}: config must be a mapping of sections")

    converters_raw = _require(raw, "converters", source)
    if not isinstance(converters_raw, list) or not converters_raw:
        raise ValidationError(f"{source}: converters must be a non-empty list")
    converters = []
    for idx, entry in enumerate(converters_raw):
        ctx = f"{source}: converters[{idx}]"
        cid = int(_require(entry, "id", ctx))
        converters.append(
            ConverterSpec(
                id=cid,
                capacitance=_quantity(_require(entry, "capacitance", ctx), "capacitance", ctx),
                kp=_quantity(_require(entry, "kp", ctx), "kp", ctx),
                regulator=bool(entry.get("regulator", False)),
            )
        )
    n = len(converters)
    ids = sorted(c.id for c in converters)
    if ids != list(range(1, n + 1)):
        raise ValidationError(f"{source}: converter ids must be exactly 1..{n}, got {ids}")
    converters.sort(key=lambda c: c.id)
    if sum(c.regulator for c in converters) > 1:
        raise ValidationError(f"{source}: at most one converter may set regulator: true")

    lines_raw = _require(raw, "lines", source)
    if not isinstance(lines_raw, list) or not lines_raw and n > 1:
        raise ValidationError(f"{source}: lines must be a non-empty list")
    lines = []
    for idx, entry in enumerate(lines_raw):
        ctx = f"{source}: lines[{idx}]"
        resistance = _quantity(_require(entry, "resistance", ctx), "resistance", ctx)
        if not resistance > 0.0:
            raise ValidationError(f"{ctx}: resistance must be positive")
        lines.append(
            LineSpec(i=int(_require(entry, "i", ctx)), j=int(_require(entry, "j", ctx)),
                     resistance=resistance)
        )

    comm_raw = raw.get("comm_links", "mirror_lines")
    mirror = False
    comm_links = ()
    if isinstance(comm_raw, str):
        if comm_raw != "mirror_lines":
            raise ValidationError(
                f"{source}: comm_links string must be 'mirror_lines', got {comm_raw!r}"
            )
        mirror = True
    elif isinstance(comm_raw, list):
        parsed = []
        for idx, entry in enumerate(comm_raw):
            ctx = f"{source}: comm_links[{idx}]"
            gain = _quantity(_require(entry, "gain", ctx), "gain", ctx)
            parsed.append(
                CommLinkSpec(i=int(_require(entry, "i", ctx)), j=int(_require(entry, "j", ctx)),
                             gain=gain)
            )
        comm_links = tuple(parsed)
    else:
        raise ValidationError(f"{source}: comm_links must be a list or 'mirror_lines'")

    controller_raw = _require(raw, "controller", source)
    ctx = f"{source}: controller"
    kind = _require(controller_raw, "kind", ctx)
    if kind not in ("droop", "distributed"):
        raise ValidationError(f"{ctx}: kind must be 'droop' or 'distributed', got {kind!r}")
    controller = ControllerSpec(
        kind=kind,
        vnom=_quantity(_require(controller_raw, "vnom", ctx), "vnom", ctx),
        gamma=float(controller_raw.get("gamma", 0.0)),
        tau=_quantity(controller_raw.get("tau", 0.0), "time", ctx),
        kv=_quantity(controller_raw.get("kv", DEFAULT_REGULATOR_GAIN), "kv", ctx),
    )
    if kind == "distributed" and not controller.gamma > 0.0:
        raise ValidationError(f"{ctx}: distributed controller needs gamma > 0")

    scenario_raw = _require(raw, "scenario", source)
    ctx = f"{source}: scenario"
    scenario = ScenarioSpec(
        pre_step_injections=_injection_vector(
            _require(scenario_raw, "pre_step_injections", ctx), n, f"{ctx}.pre_step_injections"
        ),
        post_step_injections=_injection_vector(
            _require(scenario_raw, "post_step_injections", ctx), n, f"{ctx}.post_step_injections"
        ),
        step_time=_quantity(scenario_raw.get("step_time", 0.0), "time", ctx),
        horizon=_quantity(scenario_raw.get("horizon", 10.0), "time", ctx),
        sample_interval=_quantity(scenario_raw.get("sample_interval", 1e-3), "time", ctx),
    )

    doc = ConfigDocument(
        converters=tuple(converters),
        lines=tuple(lines),
        comm_links=comm_links,
        mirror_lines=mirror,
        controller=controller,
        scenario=scenario,
    )
    # surface structural problems (duplicate edges, disconnection, bad params)
    # at parse time with the config as context
    try:
        doc.line_topology()
        if kind == "distributed":
            doc.comm_topology()
        doc.converter_params()
        doc.build_scenario()
    except ValidationError as exc:
        raise ValidationError(f"{source}: {exc}") from exc
    return doc


def parse_config(path) -> ConfigDocument:
    """Read, parse and validate a YAML config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def config_to_text(doc: ConfigDocument) -> str:
    """Serialize a validated config back to YAML (SI base units, no suffixes)."""
    payload = {
        "converters": [asdict(c) for c in doc.converters],
        "lines": [asdict(ln) for ln in doc.lines],
        "comm_links": "mirror_lines" if doc.mirror_lines else [asdict(l) for l in doc.comm_links],
        "controller": asdict(doc.controller),
        "scenario": {
            "pre_step_injections": list(doc.scenario.pre_step_injections),
            "post_step_injections": list(doc.scenario.post_step_injections),
            "step_time": doc.scenario.step_time,
            "horizon": doc.scenario.horizon,
            "sample_interval": doc.scenario.sample_interval,
        },
    }
    return yaml.safe_dump(payload, sort_keys=False)


def dump_config(doc: ConfigDocument, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_text(doc))


def _paper_4term() -> ConfigDocument:
    """Bundled four-terminal benchmark: 100 kV ring, mirrored comm topology."""
    text = """
converters:
  - {id: 1, capacitance: "123.79 uF", kp: "10 S", regulator: true}
  - {id: 2, capacitance: "123.79 uF", kp: "10 S"}
  - {id: 3, capacitance: "123.79 uF", kp: "10 S"}
  - {id: 4, capacitance: "123.79 uF", kp: "10 S"}
lines:
  - {i: 1, j: 2, resistance: "0.0154 ohm"}
  - {i: 1, j: 3, resistance: "0.0015 ohm"}
  - {i: 2, j: 4, resistance: "0.0015 ohm"}
  - {i: 3, j: 4, resistance: "0.0154 ohm"}
comm_links: mirror_lines
controller:
  kind: distributed
  gamma: 0.005
  vnom: "100 kV"
  tau: "0 s"
  kv: 10.0
scenario:
  pre_step_injections: ["300 A", "200 A", "-100 A", "-400 A"]
  post_step_injections: ["300 A", "200 A", "-300 A", "-400 A"]
  step_time: "0 s"
  horizon: "10 s"
  sample_interval: "1 ms"
"""
    return parse_config_text(text, source="<preset paper_4term>")


PAPER_4TERM = "paper_4term"
_PRESETS = {PAPER_4TERM: _paper_4term}


def preset_names():
    return sorted(_PRESETS)


def preset(name: str) -> ConfigDocument:
    """Bundled configuration by name."""
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise ValidationError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        ) from None
    return factory()
