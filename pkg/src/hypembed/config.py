"""Flat ``key = value`` run configuration with line-numbered validation.

Schema (UTF-8; ``#`` starts a comment; unknown keys are errors):

    kappa = 1.0              # ambient curvature scale, > 0
    level = 4                # icosphere subdivision level
    metric = harmonic_bump   # round | constant | harmonic_bump | two_bump | csv
    metric_value = 0.1       # constant family height
    metric_terms = 2:0:0.25  # harmonic_bump l:m:amplitude, comma separated
    metric_bumps = 0:0:1:0.3:0.5, 1:0:0:-0.25:0.6   # x:y:z:amp:width
    metric_csv = u.csv       # csv family input
    s = zero                 # time profile for ads subcommands, same families
    s_value = 0.3
    s_terms = 1:1:0.1
    s_bumps = ...
    s_csv = s.csv
    roundness_tol = 1e-3
    step_tol = 1e-3
    fp_tol = 1e-8
    solver_rtol = 1e-10
    deterministic = true
    verbosity = 1            # 0, 1 or 2
    threads = 1
    output_dir = out

All keys are optional; defaults reproduce the reference end-to-end run.
``parse_config`` reports every violation at once, each tagged with its line.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .metrics import FAMILY_NAMES


class ConfigError(ValueError):
    """Invalid run configuration; ``problems`` lists every violation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


DEFAULT_BUMPS = ((0.0, 0.0, 1.0, 0.3, 0.5), (1.0, 0.0, 0.0, -0.25, 0.6))


@dataclass(frozen=True)
class RunConfig:
    kappa: float = 1.0
    level: int = 4
    metric: str = "round"
    metric_value: float = 0.0
    metric_terms: tuple = ((2, 0, 0.25),)
    metric_bumps: tuple = DEFAULT_BUMPS
    metric_csv: str | None = None
    s: str = "zero"
    s_value: float = 0.0
    s_terms: tuple = ((1, 1, 0.1),)
    s_bumps: tuple = DEFAULT_BUMPS
    s_csv: str | None = None
    roundness_tol: float = 1e-3
    step_tol: float = 1e-3
    fp_tol: float = 1e-8
    solver_rtol: float = 1e-10
    deterministic: bool = True
    verbosity: int = 1
    threads: int = 1
    output_dir: str = "out"


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got '{text}'")


def _parse_terms(text):
    out = []
    for piece in text.split(","):
        piece = piece.strip()
        if not piece:
            continue
        parts = piece.split(":")
        if len(parts) != 3:
            raise ValueError(f"term '{piece}' must be l:m:amplitude")
        out.append((int(parts[0]), int(parts[1]), float(parts[2])))
    if not out:
        raise ValueError("empty term list")
    return tuple(out)


def _parse_bumps(text):
    out = []
    for piece in text.split(","):
        piece = piece.strip()
        if not piece:
            continue
        parts = piece.split(":")
        if len(parts) != 5:
            raise ValueError(f"bump '{piece}' must be x:y:z:amplitude:width")
        out.append(tuple(float(p) for p in parts))
    if not out:
        raise ValueError("empty bump list")
    return tuple(out)


_CONVERTERS = {
    "kappa": float,
    "level": int,
    "metric": str,
    "metric_value": float,
    "metric_terms": _parse_terms,
    "metric_bumps": _parse_bumps,
    "metric_csv": str,
    "s": str,
    "s_value": float,
    "s_terms": _parse_terms,
    "s_bumps": _parse_bumps,
    "s_csv": str,
    "roundness_tol": float,
    "step_tol": float,
    "fp_tol": float,
    "solver_rtol": float,
    "deterministic": _parse_bool,
    "verbosity": int,
    "threads": int,
    "output_dir": str,
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises ConfigError listing every problem found."""
    problems = []
    values = {}
    seen_lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value', got '{raw.strip()}'")
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONVERTERS:
            problems.append(f"line {lineno}: unknown key '{key}'")
            continue
        if key in seen_lines:
            problems.append(
                f"line {lineno}: duplicate key '{key}' (first set on line {seen_lines[key]})"
            )
            continue
        seen_lines[key] = lineno
        try:
            values[key] = _CONVERTERS[key](value)
        except ValueError as exc:
            problems.append(f"line {lineno}: {key}: {exc}")

    cfg = RunConfig(**values) if not problems else RunConfig(
        **{k: v for k, v in values.items()}
    )

    def where(key):
        return f"line {seen_lines[key]}: " if key in seen_lines else ""

    if not cfg.kappa > 0:
        problems.append(f"{where('kappa')}kappa must be positive, got {cfg.kappa}")
    if not 0 <= cfg.level <= 7:
        problems.append(f"{where('level')}level must be in 0..7, got {cfg.level}")
    for key in ("roundness_tol", "step_tol", "fp_tol", "solver_rtol"):
        if not getattr(cfg, key) > 0:
            problems.append(f"{where(key)}{key} must be positive, got {getattr(cfg, key)}")
    if cfg.threads < 1:
        problems.append(f"{where('threads')}threads must be >= 1, got {cfg.threads}")
    if cfg.verbosity not in (0, 1, 2):
        problems.append(f"{where('verbosity')}verbosity must be 0, 1 or 2, got {cfg.verbosity}")
    for key in ("metric", "s"):
        name = getattr(cfg, key)
        if name not in FAMILY_NAMES:
            problems.append(
                f"{where(key)}{key} family '{name}' unknown (choose from {', '.join(FAMILY_NAMES)})"
            )
        elif name == "csv" and not getattr(cfg, f"{key}_csv"):
            problems.append(f"{where(key)}{key} = csv needs {key}_csv to point at a field file")

    if problems:
        raise ConfigError(problems)
    return cfg


def config_as_dict(cfg: RunConfig) -> dict:
    """Plain-JSON view of the configuration for run summaries."""
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = [list(item) if isinstance(item, tuple) else item for item in v]
        out[f.name] = v
    return out
