"""JSON run configurations.

A config has four sections::

    {
      "problem": {"domain": [lo, hi],
                  "level_set": {"expression": "..."} | {"file": "phi.raw"},
                  "mu_minus": "...", "mu_plus": "...", "k_minus": "...", "k_plus": "...",
                  "f_minus": "...", "f_plus": "...", "alpha": "...", "beta": "...", "g": "..."},
      "train": {TrainConfig fields},
      "eval": {"M": 64, "exact_minus": "...", "exact_plus": "..."},
      "output_dir": "runs/name"
    }

``level_set`` may add ``"sampled_resolution": Nc`` to sample an analytic level
set onto a coarse grid. Relative file paths resolve against the config file.
Errors carry a JSON pointer to the offending entry.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigError, ParseError
from .expr import Expression, parse
from .geometry import AnalyticLevelSet, SampledLevelSet
from .kernel import ProblemSpec
from .surrogate import hash_text
from .training import TrainConfig

FIELDS = ("mu_minus", "mu_plus", "k_minus", "k_plus", "f_minus", "f_plus", "alpha", "beta", "g")
BUILTIN = ("sphere_jump", "poisson_smooth", "linear_jump_oracle")
_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}


@dataclass
class EvalConfig:
    M: int = 64
    exact_minus: Expression | None = None
    exact_plus: Expression | None = None

    @property
    def has_exact(self) -> bool:
        return self.exact_minus is not None and self.exact_plus is not None


@dataclass
class RunConfig:
    problem: ProblemSpec
    train: TrainConfig
    eval: EvalConfig
    output_dir: Path
    raw: dict
    path: Path | None = None

    @property
    def problem_hash(self) -> str:
        return hash_text(json.dumps(self.raw.get("problem", {}), sort_keys=True))


def builtin_path(name: str):
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in BUILTIN:
        return None
    return resources.files("neuroboot.problems").joinpath(f"{stem}.json")


def resolve_config_path(path) -> Path:
    """Existing file path, else a built-in config by name; FileNotFoundError otherwise."""
    p = Path(path)
    if p.is_file():
        return p
    ref = builtin_path(str(path))
    if ref is not None and ref.is_file():
        return Path(str(ref))
    raise FileNotFoundError(f"config file not found: {path}")


def _expr(section: dict, key: str, pointer: str) -> Expression:
    if key not in section:
        raise ConfigError(f"missing expression '{key}'", pointer)
    src = section[key]
    if isinstance(src, (int, float)) and not isinstance(src, bool):
        src = repr(float(src))
    if not isinstance(src, str):
        raise ConfigError(f"expression '{key}' must be a string", pointer)
    try:
        return parse(src)
    except ParseError as exc:
        raise ConfigError(f"cannot parse '{key}': {exc.message} at offset {exc.offset}", pointer) from exc


def _level_set(spec, base: Path, domain):
    ptr = "/problem/level_set"
    if isinstance(spec, str):
        spec = {"expression": spec}
    if not isinstance(spec, dict):
        raise ConfigError("level_set must be an object", ptr)
    if "file" in spec:
        fpath = Path(spec["file"])
        if not fpath.is_absolute():
            fpath = base / fpath
        if not fpath.is_file():
            raise ConfigError(f"level-set file not found: {fpath}", ptr + "/file")
        try:
            return SampledLevelSet.load(fpath)
        except ValueError as exc:
            raise ConfigError(str(exc), ptr + "/file") from exc
    ls = AnalyticLevelSet(_expr(spec, "expression", ptr + "/expression"))
    nc = spec.get("sampled_resolution")
    if nc is not None:
        if not isinstance(nc, int) or nc < 1:
            raise ConfigError("sampled_resolution must be a positive integer", ptr + "/sampled_resolution")
        return SampledLevelSet.from_level_set(ls, nc, domain)
    return ls


def build_run_config(doc: dict, base_dir=".", path=None) -> RunConfig:
    base = Path(base_dir)
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    prob = doc.get("problem")
    if not isinstance(prob, dict):
        raise ConfigError("missing 'problem' section", "/problem")
    domain = prob.get("domain", [-1.0, 1.0])
    if not (isinstance(domain, list) and len(domain) == 2 and float(domain[0]) < float(domain[1])):
        raise ConfigError("domain must be [lo, hi] with lo < hi", "/problem/domain")
    domain = (float(domain[0]), float(domain[1]))
    exprs = {k: _expr(prob, k, f"/problem/{k}") for k in FIELDS}
    ls = _level_set(prob.get("level_set"), base, domain)
    problem = ProblemSpec(level_set=ls, domain=domain, **exprs)
    try:
        problem.check_coefficients()
    except ValueError as exc:
        name = str(exc).split()[0]
        raise ConfigError(str(exc), f"/problem/{name}") from exc
    except ArithmeticError as exc:
        raise ConfigError(f"coefficient evaluation failed: {exc}", "/problem") from exc

    train_doc = doc.get("train", {})
    unknown = set(train_doc) - _TRAIN_FIELDS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown train setting '{key}'", f"/train/{key}")
    try:
        train = TrainConfig(**train_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "/train") from exc

    ev = doc.get("eval", {})
    m = ev.get("M", 64)
    if not isinstance(m, int) or m < 2:
        raise ConfigError("M must be an integer >= 2", "/eval/M")
    eval_cfg = EvalConfig(
        m,
        _expr(ev, "exact_minus", "/eval/exact_minus") if "exact_minus" in ev else None,
        _expr(ev, "exact_plus", "/eval/exact_plus") if "exact_plus" in ev else None,
    )
    out = Path(doc.get("output_dir", "runs/out"))
    return RunConfig(problem, train, eval_cfg, out, doc, Path(path) if path else None)


def load_run_config(path) -> RunConfig:
    """Load from a file path or built-in name (``sphere_jump``, ...)."""
    p = resolve_config_path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from exc
    return build_run_config(doc, p.parent, p)
