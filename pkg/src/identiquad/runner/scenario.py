"""YAML scenario files.

Example::

    name: three_module_fig8
    module: {mass: 0.5}
    assembly: {n: 3, alpha: 4*pi/9, beta: pi/9, layout: chain}
    trajectory: {type: figure_eight, l: 0.2, period: 5.0}
    battery: [1.0, 1.0, 1.0]
    failures:
      - {time: 1.0, module: 2, rotor: 3}
    duration: 10.0
    dt: 0.002

Angles may be given as arithmetic over ``pi`` (``4*pi/9``).  See
``scenarios/README.md`` for every key.
"""

import ast
import operator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..assembly import AssemblyError, ConnectionGraph, Edge, ModuleParams
from ..dynamics import FailureEvent


class ScenarioError(ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = f"{path}:" if path else ""
        where += f"line {line}: " if line else ""
        super().__init__(where + message)


_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}


def eval_number(value):
    """Float from a number or an arithmetic expression over ``pi``."""
    if isinstance(value, bool):
        raise ValueError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"expected a number, got {value!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return np.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {value!r}")

    try:
        return float(ev(ast.parse(value.strip(), mode="eval")))
    except SyntaxError:
        raise ValueError(f"cannot parse number {value!r}") from None


def _line_map(node, prefix="", out=None):
    """Map dotted key paths to 1-based line numbers of a composed YAML node."""
    if out is None:
        out = {}
    out[prefix] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
            out[key] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, f"{prefix}[{i}]", out)
    return out


@dataclass
class Scenario:
    name: str
    params: ModuleParams
    graph: ConnectionGraph
    trajectory: dict
    gains: dict = field(default_factory=dict)
    allocation: dict = field(default_factory=dict)
    battery: list = None
    failures: list = field(default_factory=list)
    duration: float = 10.0
    dt: float = 0.002
    control_rate: float = 500.0
    reaction_delay: float = 0.002
    k_batt: float = 2e-3
    output: dict = field(default_factory=dict)
    source: str = None

    @property
    def control_period(self):
        return 1.0 / self.control_rate

    @property
    def n(self):
        return self.graph.n


_TOP_KEYS = {"name", "module", "assembly", "gains", "trajectory", "allocation", "battery", "failures",
             "duration", "dt", "control_rate", "reaction_delay", "k_batt", "output"}
_MODULE_KEYS = {"mass", "arm_half_span", "frame_arm_length", "J0", "c_F", "c_M", "u_max", "alpha"}
_TRAJ_KEYS = {"figure_eight": {"type", "l", "period", "origin", "yaw", "pitch", "roll"},
              "roll_sweep": {"type", "duration", "origin", "axis"},
              "hover": {"type", "origin", "yaw", "pitch", "roll"}}
_GAIN_KEYS = {"kp", "kd", "kr", "kw", "K_P", "K_D", "K_R", "K_omega"}
_ALLOC_KEYS = {"delta", "w", "negative"}
_OUTPUT_KEYS = {"plots", "csv"}


def loads(text, source=None):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                            line=mark.line + 1 if mark else None, path=source) from None
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping", line=1, path=source)
    lines = _line_map(node)

    def fail(key, msg):
        raise ScenarioError(f"{key}: {msg}", line=lines.get(key), path=source)

    def num(key, value):
        try:
            return eval_number(value)
        except ValueError as exc:
            fail(key, str(exc))

    def check_keys(prefix, mapping, allowed):
        if not isinstance(mapping, dict):
            fail(prefix, "expected a mapping")
        for k in mapping:
            if k not in allowed:
                fail(f"{prefix}.{k}" if prefix else k, f"unknown key (allowed: {', '.join(sorted(allowed))})")

    check_keys("", data, _TOP_KEYS)
    if "name" not in data:
        fail("", "missing 'name'")
    if "assembly" not in data:
        fail("", "missing 'assembly'")
    if "trajectory" not in data:
        fail("", "missing 'trajectory'")

    # module parameters; alpha may also sit under assembly
    module = dict(data.get("module") or {})
    check_keys("module", module, _MODULE_KEYS)
    asm = data["assembly"]
    check_keys("assembly", asm, {"n", "alpha", "beta", "layout", "edges"})
    kwargs = {}
    for k, v in module.items():
        if k == "J0":
            try:
                kwargs[k] = np.array([[eval_number(x) for x in row] for row in v]) if isinstance(v[0], list) \
                    else np.diag([eval_number(x) for x in v])
            except (ValueError, TypeError, IndexError) as exc:
                fail("module.J0", f"expected 3 diagonal entries or a 3x3 matrix ({exc})")
        else:
            kwargs[k] = num(f"module.{k}", v)
    if "alpha" in asm:
        kwargs["alpha"] = num("assembly.alpha", asm["alpha"])
    try:
        params = ModuleParams(**kwargs)
    except AssemblyError as exc:
        fail("module" if "alpha" not in asm else "assembly.alpha", str(exc))

    if "n" not in asm:
        fail("assembly", "missing 'n'")
    n = asm["n"]
    if not isinstance(n, int) or n < 1:
        fail("assembly.n", "must be a positive integer")
    try:
        if "edges" in asm:
            edges = []
            for i, e in enumerate(asm["edges"] or []):
                if not isinstance(e, list) or len(e) not in (4, 5):
                    fail(f"assembly.edges[{i}]", "expected [parent, parent_connector, child, child_connector, beta]")
                beta = num(f"assembly.edges[{i}]", e[4]) if len(e) == 5 else 0.0
                edges.append(Edge(int(e[0]), int(e[1]), int(e[2]), int(e[3]), beta))
            graph = ConnectionGraph(n, edges)
        else:
            beta = num("assembly.beta", asm.get("beta", 0.0))
            graph = ConnectionGraph.from_layout(asm.get("layout", "chain"), n, beta)
        graph.validate()
    except AssemblyError as exc:
        fail("assembly", str(exc))

    traj = dict(data["trajectory"])
    ttype = traj.get("type")
    if ttype not in _TRAJ_KEYS:
        fail("trajectory.type", f"expected one of {', '.join(sorted(_TRAJ_KEYS))}")
    check_keys("trajectory", traj, _TRAJ_KEYS[ttype])
    for k, v in list(traj.items()):
        if k == "origin":
            if not isinstance(v, list) or len(v) != 3:
                fail("trajectory.origin", "expected [x, y, z]")
            traj[k] = [num("trajectory.origin", x) for x in v]
        elif k not in ("type", "axis"):
            traj[k] = num(f"trajectory.{k}", v)

    gains = dict(data.get("gains") or {})
    check_keys("gains", gains, _GAIN_KEYS)
    for k, v in gains.items():
        if isinstance(v, list):
            gains[k] = [num(f"gains.{k}", x) for x in v]
        else:
            gains[k] = num(f"gains.{k}", v)

    alloc = dict(data.get("allocation") or {})
    check_keys("allocation", alloc, _ALLOC_KEYS)
    for k in ("delta", "w"):
        if k in alloc:
            alloc[k] = num(f"allocation.{k}", alloc[k])
    if alloc.get("negative", "clamp") not in ("clamp", "nnls"):
        fail("allocation.negative", "expected clamp or nnls")
    if alloc.get("delta", 1.0) <= 0:
        fail("allocation.delta", "must be positive")
    if alloc.get("w", 1.0) < 0:
        fail("allocation.w", "must be non-negative")

    battery = data.get("battery")
    if battery is None:
        battery = [1.0] * n
    if not isinstance(battery, list) or len(battery) != n:
        fail("battery", f"expected a list of {n} voltages")
    battery = [num("battery", v) for v in battery]
    if any(not 0.0 < v <= 1.0 for v in battery):
        fail("battery", "voltages must lie in (0, 1]")

    failures = []
    for i, f in enumerate(data.get("failures") or []):
        key = f"failures[{i}]"
        if not isinstance(f, dict) or set(f) != {"time", "module", "rotor"}:
            fail(key, "expected {time, module, rotor}")
        t = num(key, f["time"])
        if t < 0:
            fail(key, "time must be non-negative")
        if not (isinstance(f["module"], int) and 1 <= f["module"] <= n):
            fail(key, f"module must be in 1..{n}")
        if f["rotor"] not in (1, 2, 3, 4):
            fail(key, "rotor must be in 1..4")
        failures.append(FailureEvent(t, f["module"], f["rotor"]))
    failures.sort(key=lambda e: (e.time, e.module, e.rotor))

    scalars = {}
    for k, default in (("duration", 10.0), ("dt", 0.002), ("control_rate", 500.0),
                       ("reaction_delay", 0.002), ("k_batt", 2e-3)):
        scalars[k] = num(k, data[k]) if k in data else default
    if scalars["duration"] <= 0:
        fail("duration", "must be positive")
    if not 0 < scalars["dt"] <= 0.01:
        fail("dt", "must lie in (0, 0.01]")
    if scalars["control_rate"] <= 0:
        fail("control_rate", "must be positive")
    ratio = (1.0 / scalars["control_rate"]) / scalars["dt"]
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        fail("dt", "must divide the control period")
    if scalars["reaction_delay"] < 0:
        fail("reaction_delay", "must be non-negative")

    output = dict(data.get("output") or {})
    check_keys("output", output, _OUTPUT_KEYS)

    name = data["name"]
    if not isinstance(name, str) or not name:
        fail("name", "must be a non-empty string")
    return Scenario(name=name, params=params, graph=graph, trajectory=traj, gains=gains,
                    allocation=alloc, battery=battery, failures=failures, output=output,
                    source=source, **scalars)


def load(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}", path=str(path)) from None
    return loads(text, source=str(path))
