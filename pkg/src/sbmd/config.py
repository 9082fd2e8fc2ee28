"""INI-style experiment configuration.

Example::

    [problem]
    name = p1
    n = 16
    b = 4
    delta = 0.5
    box = -1, 1
    center = 0.5

    [algorithm]
    plan = nonsmooth-a

    [experiment]
    N = 100, 400, 1600
    trials = 50
    seed = 1

Values are ints, floats, comma-separated float lists, or ``none``.
"""

from __future__ import annotations

import configparser
import inspect
import math
import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError, SBMDError
from .plans import COMPOSITE_KINDS, NONSMOOTH_KINDS
from .problems import (
    COMPOSITE, COMPOSITE_STRONG, NONCONVEX, NONSMOOTH, NONSMOOTH_STRONG, ZOO, StochasticProblem, make_problem,
)

PLAN_ALIASES = {"strongly": "strongly-convex"}
ALGORITHMS = ("sbmd", "md-sa")

# problem tags each plan kind accepts
COMPATIBLE = {
    "nonsmooth-a": (NONSMOOTH, NONSMOOTH_STRONG),
    "nonsmooth-b": (NONSMOOTH, NONSMOOTH_STRONG),
    "strongly-convex": (NONSMOOTH_STRONG,),
    "composite": (COMPOSITE, COMPOSITE_STRONG),
    "composite-strongly": (COMPOSITE_STRONG,),
    "nonconvex": (NONCONVEX,),
}

ALGORITHM_KEYS = {"plan", "algorithm", "x1", "D_tilde", "L_scale", "T"}
EXPERIMENT_KEYS = {"N", "trials", "seed", "checkpoints", "slope_min", "slope_max"}
OUTPUT_KEYS = {"csv", "json"}
SECTIONS = ("problem", "algorithm", "experiment", "output")


@dataclass
class ExperimentConfig:
    problem: str
    problem_params: dict
    plan: str
    algorithm: str = "sbmd"
    x1: Optional[list] = None
    D_tilde: Optional[float] = None
    L_scale: float = 1.0
    T: Optional[int] = None
    N_grid: list = field(default_factory=list)
    trials: int = 1
    seed: int = 0
    checkpoints: str = "geometric"
    slope_range: Optional[tuple] = None
    csv_name: str = "trajectory.csv"
    json_name: str = "summary.json"

    def build_problem(self) -> StochasticProblem:
        return make_problem(self.problem, **self.problem_params)


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    if "," in raw:
        return [float(t) for t in raw.split(",") if t.strip()]
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def _line_index(text: str) -> dict:
    """``(section, key) -> line number`` for error messages."""
    index, section = {}, None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = lineno
            continue
        key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
        index.setdefault((section, key), lineno)
    return index


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration document; raise ``ConfigError`` on any problem."""
    parser = configparser.ConfigParser(strict=True, interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"line {e.lineno}: duplicate key {e.option!r} in section [{e.section}]") from None
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"line {e.lineno}: duplicate section [{e.section}]") from None
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    lines = _line_index(text)

    def where(section, key=None):
        return f"line {lines.get((section, key), '?')}"

    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{where(section)}: unknown section [{section}]")
    for section in ("problem", "algorithm", "experiment"):
        if not parser.has_section(section):
            raise ConfigError(f"missing section [{section}]")

    prob = dict(parser["problem"])
    if "name" not in prob:
        raise ConfigError(f"{where('problem')}: [problem] needs 'name'")
    name = prob.pop("name").strip()
    if name not in ZOO:
        raise ConfigError(f"{where('problem', 'name')}: unknown problem {name!r}; known: {sorted(ZOO)}")
    allowed = set(inspect.signature(ZOO[name][0]).parameters)
    params = {}
    for key, raw in prob.items():
        if key not in allowed:
            raise ConfigError(f"{where('problem', key)}: unknown key {key!r} for problem {name!r}")
        params[key] = _parse_value(raw)
    for key in ("n", "b"):
        if isinstance(params.get(key), float):
            raise ConfigError(f"{where('problem', key)}: {key} must be an integer")

    cfg = ExperimentConfig(problem=name, problem_params=params, plan="")
    alg = parser["algorithm"]
    _reject_unknown(alg, ALGORITHM_KEYS, "algorithm", where)
    if "plan" not in alg:
        raise ConfigError(f"{where('algorithm')}: [algorithm] needs 'plan'")
    plan = alg["plan"].strip()
    plan = PLAN_ALIASES.get(plan, plan)
    if plan not in COMPATIBLE:
        raise ConfigError(f"{where('algorithm', 'plan')}: unknown plan kind {plan!r}")
    cfg.plan = plan
    cfg.algorithm = alg.get("algorithm", "sbmd").strip()
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError(f"{where('algorithm', 'algorithm')}: unknown algorithm {cfg.algorithm!r}")
    if cfg.algorithm == "md-sa" and plan not in NONSMOOTH_KINDS:
        raise ConfigError(f"{where('algorithm', 'algorithm')}: md-sa needs a nonsmooth plan")
    if "x1" in alg:
        x1 = _parse_value(alg["x1"])
        cfg.x1 = x1 if isinstance(x1, list) else [float(x1)]
    cfg.D_tilde = _float_opt(alg, "D_tilde", where, "algorithm", positive=True)
    scale = _float_opt(alg, "L_scale", where, "algorithm", positive=True)
    cfg.L_scale = 1.0 if scale is None else scale
    if "T" in alg:
        T = alg["T"].strip()
        if T != "auto":
            cfg.T = _int(T, where("algorithm", "T"), "T", minimum=1)

    exp = parser["experiment"]
    _reject_unknown(exp, EXPERIMENT_KEYS, "experiment", where)
    if "N" not in exp:
        raise ConfigError(f"{where('experiment')}: [experiment] needs 'N'")
    grid = [_int(t, where("experiment", "N"), "N", minimum=1) for t in exp["N"].split(",") if t.strip()]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError(f"{where('experiment', 'N')}: N grid must be nonempty and strictly increasing")
    cfg.N_grid = grid
    cfg.trials = _int(exp.get("trials", "1"), where("experiment", "trials"), "trials", minimum=1)
    cfg.seed = _int(exp.get("seed", "0"), where("experiment", "seed"), "seed", minimum=0)
    cfg.checkpoints = exp.get("checkpoints", "geometric").strip()
    if cfg.checkpoints not in ("geometric", "final"):
        raise ConfigError(f"{where('experiment', 'checkpoints')}: checkpoints must be 'geometric' or 'final'")
    lo = _float_opt(exp, "slope_min", where, "experiment")
    hi = _float_opt(exp, "slope_max", where, "experiment")
    if (lo is None) != (hi is None):
        raise ConfigError(f"{where('experiment')}: give both slope_min and slope_max or neither")
    if lo is not None:
        if lo >= hi:
            raise ConfigError(f"{where('experiment', 'slope_min')}: slope_min must be below slope_max")
        cfg.slope_range = (lo, hi)

    if parser.has_section("output"):
        out = parser["output"]
        _reject_unknown(out, OUTPUT_KEYS, "output", where)
        cfg.csv_name = out.get("csv", cfg.csv_name).strip()
        cfg.json_name = out.get("json", cfg.json_name).strip()

    try:
        problem = cfg.build_problem()
    except (SBMDError, TypeError) as e:
        raise ConfigError(f"{where('problem')}: invalid problem parameters: {e}") from None
    if problem.tag not in COMPATIBLE[plan]:
        raise ConfigError(
            f"{where('algorithm', 'plan')}: plan {plan!r} is incompatible with problem tag {problem.tag!r}"
        )
    if plan == "nonsmooth-a" and not problem.setup.bounded:
        raise ConfigError(f"{where('algorithm', 'plan')}: plan 'nonsmooth-a' needs a bounded feasible set")
    if cfg.x1 is not None and len(cfg.x1) not in (1, problem.structure.n):
        raise ConfigError(f"{where('algorithm', 'x1')}: x1 needs 1 or {problem.structure.n} values")
    if plan != "nonconvex" and cfg.T is not None:
        raise ConfigError(f"{where('algorithm', 'T')}: minibatch size only applies to the nonconvex plan")
    if plan not in ("nonsmooth-b",) + COMPOSITE_KINDS and cfg.D_tilde is not None:
        raise ConfigError(f"{where('algorithm', 'D_tilde')}: D_tilde does not apply to plan {plan!r}")
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _reject_unknown(section, allowed, name, where):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{where(name, key)}: unknown key {key!r} in [{name}]")


def _int(raw, loc, name, minimum=None) -> int:
    try:
        val = int(str(raw).strip())
    except ValueError:
        raise ConfigError(f"{loc}: {name} must be an integer, got {raw!r}") from None
    if minimum is not None and val < minimum:
        raise ConfigError(f"{loc}: {name} must be >= {minimum}, got {val}")
    return val


def _float_opt(section, key, where, name, positive=False) -> Optional[float]:
    if key not in section:
        return None
    try:
        val = float(section[key])
    except ValueError:
        raise ConfigError(f"{where(name, key)}: {key} must be a number") from None
    if not math.isfinite(val) or (positive and val <= 0):
        raise ConfigError(f"{where(name, key)}: {key} must be {'positive and ' if positive else ''}finite")
    return val
