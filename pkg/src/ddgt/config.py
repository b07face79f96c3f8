"""Experiment configuration: a JSON document parsed into dataclasses.

Every field has a default except ``graph``; :func:`resolved_dict` echoes the
complete resolved configuration so runs can be reproduced from their output.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .errors import ConfigError

GRAPH_KINDS = ("random", "edge_list", "complete", "ring")
COST_KINDS = ("quadratic", "quartic")
ALGORITHMS = ("ddgt", "ppg_dual", "oracle")


@dataclass
class GraphSpec:
    kind: str
    n: int | None = None
    p: float = 0.05
    seed: int = 1
    path: str | None = None


@dataclass
class CostSpec:
    """Cost family plus parameter distributions.

    ``a`` and ``c`` are ``[low, high]`` of a uniform law; ``b`` and ``d`` are
    ``[mean, variance]`` of a normal law.
    """

    kind: str = "quadratic"
    dim: int = 1
    seed: int = 0
    a: tuple[float, float] = (0.0, 1.0)
    b: tuple[float, float] = (0.0, 4.0)
    c: tuple[float, float] = (0.0, 10.0)
    d: tuple[float, float] = (0.0, 4.0)


@dataclass
class ExperimentSpec:
    graph: GraphSpec
    costs: CostSpec = field(default_factory=CostSpec)
    box: tuple[float, float] | None = None
    total_demand: float | list = 50.0
    demand_mode: str = "local"
    alpha: float | str = "auto"
    alpha_grid: list[float] | None = None
    iters: int = 1000
    tol: float = 1e-12
    algorithms: tuple[str, ...] = ("ddgt", "oracle")
    output_dir: str = "out"


def _pair(value, path: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(path, "expected a two-element list")
    try:
        return float(value[0]), float(value[1])
    except (TypeError, ValueError):
        raise ConfigError(path, "entries must be numbers") from None


def _take(raw: dict, allowed: set[str], path: str) -> None:
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    extra = set(raw) - allowed
    if extra:
        raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown field")


def _int(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, "expected an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}")
    return value


def _parse_graph(raw, base_dir: str | None) -> GraphSpec:
    _take(raw, {"kind", "n", "p", "seed", "path"}, "graph")
    kind = raw.get("kind")
    if kind not in GRAPH_KINDS:
        raise ConfigError("graph.kind", f"must be one of {GRAPH_KINDS}")
    g = GraphSpec(kind=kind)
    if kind == "edge_list":
        path = raw.get("path")
        if not isinstance(path, str):
            raise ConfigError("graph.path", "edge_list graphs need a path")
        if base_dir and not os.path.isabs(path):
            path = os.path.normpath(os.path.join(base_dir, path))
        g.path = path
    else:
        g.n = _int(raw.get("n"), "graph.n", minimum=1 if kind == "complete" else 2)
    if "p" in raw:
        p = raw["p"]
        if not isinstance(p, (int, float)) or not 0 <= p <= 1:
            raise ConfigError("graph.p", "must be a probability")
        g.p = float(p)
    if "seed" in raw:
        g.seed = _int(raw["seed"], "graph.seed")
    return g


def _parse_costs(raw) -> CostSpec:
    _take(raw, {"kind", "dim", "seed", "a", "b", "c", "d"}, "costs")
    c = CostSpec()
    if "kind" in raw:
        if raw["kind"] not in COST_KINDS:
            raise ConfigError("costs.kind", f"must be one of {COST_KINDS}")
        c.kind = raw["kind"]
    if "dim" in raw:
        c.dim = _int(raw["dim"], "costs.dim", minimum=1)
    if c.kind == "quartic" and c.dim != 1:
        raise ConfigError("costs.dim", "quartic costs are scalar (dim must be 1)")
    if "seed" in raw:
        c.seed = _int(raw["seed"], "costs.seed")
    for key in ("a", "b", "c", "d"):
        if key in raw:
            setattr(c, key, _pair(raw[key], f"costs.{key}"))
    lo, hi = c.a
    if not 0 <= lo < hi:
        raise ConfigError("costs.a", "need 0 <= low < high")
    if c.c[0] < 0 or c.c[0] > c.c[1]:
        raise ConfigError("costs.c", "need 0 <= low <= high")
    for key in ("b", "d"):
        if getattr(c, key)[1] < 0:
            raise ConfigError(f"costs.{key}", "variance must be nonnegative")
    return c


def parse_config(text: str, base_dir: str | None = None) -> ExperimentSpec:
    """Parse and validate a JSON experiment description.

    Relative ``graph.path`` entries are resolved against ``base_dir``.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    _take(raw, {f for f in ExperimentSpec.__dataclass_fields__}, "<root>")
    if "graph" not in raw:
        raise ConfigError("graph", "required")
    spec = ExperimentSpec(graph=_parse_graph(raw["graph"], base_dir))
    if "costs" in raw:
        spec.costs = _parse_costs(raw["costs"])

    if raw.get("box") is not None:
        lo, hi = _pair(raw["box"], "box")
        if lo > hi:
            raise ConfigError("box", "lower must not exceed upper")
        spec.box = (lo, hi)

    if "total_demand" in raw:
        td = raw["total_demand"]
        if isinstance(td, bool) or not isinstance(td, (int, float, list)):
            raise ConfigError("total_demand", "expected a number or a per-node list")
        if isinstance(td, list):
            try:
                json.dumps(td)
                spec.total_demand = [
                    [float(v) for v in x] if isinstance(x, list) else float(x) for x in td
                ]
            except (TypeError, ValueError):
                raise ConfigError("total_demand", "entries must be numbers") from None
        else:
            spec.total_demand = float(td)

    if "demand_mode" in raw:
        if raw["demand_mode"] not in ("local", "shared"):
            raise ConfigError("demand_mode", "must be 'local' or 'shared'")
        spec.demand_mode = raw["demand_mode"]

    if "alpha" in raw:
        a = raw["alpha"]
        if isinstance(a, str):
            if a not in ("auto", "bound"):
                raise ConfigError("alpha", "string values must be 'auto' or 'bound'")
        elif isinstance(a, bool) or not isinstance(a, (int, float)) or not a > 0:
            raise ConfigError("alpha", "must be positive")
        else:
            a = float(a)
        spec.alpha = a

    if raw.get("alpha_grid") is not None:
        grid = raw["alpha_grid"]
        if not isinstance(grid, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in grid
        ):
            raise ConfigError("alpha_grid", "expected a list of positive numbers")
        spec.alpha_grid = [float(v) for v in grid]

    if "iters" in raw:
        spec.iters = _int(raw["iters"], "iters", minimum=0)
    if "tol" in raw:
        tol = raw["tol"]
        if not isinstance(tol, (int, float)) or not tol > 0:
            raise ConfigError("tol", "must be positive")
        spec.tol = float(tol)
    if "algorithms" in raw:
        algos = raw["algorithms"]
        if not isinstance(algos, list) or not algos or any(a not in ALGORITHMS for a in algos):
            raise ConfigError("algorithms", f"expected a non-empty subset of {ALGORITHMS}")
        spec.algorithms = tuple(dict.fromkeys(algos))
    if "output_dir" in raw:
        if not isinstance(raw["output_dir"], str):
            raise ConfigError("output_dir", "expected a path string")
        spec.output_dir = raw["output_dir"]
    return spec


def load_config(path) -> ExperimentSpec:
    with open(path) as fh:
        return parse_config(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))


def resolved_dict(spec: ExperimentSpec) -> dict:
    d = asdict(spec)
    d["algorithms"] = list(spec.algorithms)
    for key in ("a", "b", "c", "d"):
        d["costs"][key] = list(d["costs"][key])
    if spec.box is not None:
        d["box"] = list(spec.box)
    return d
