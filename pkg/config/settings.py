"""
Application configuration settings
"""
import json
import os
from typing import Literal

from pydantic import BaseModel, Field, ValidationError

# --- Paths ---
_base_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
APP_CONFIG_PATH = os.path.join(_base_dir, "data", "config.json")
LOG_PATH = os.path.join(_base_dir, "data", "mapdist.log")


class MetricSettings(BaseModel):
    alpha: float = Field(default=1.0, gt=0)
    equivalence_tol: float = Field(default=1e-9, ge=0)


class ConvergenceSettings(BaseModel):
    cauchy_threshold: float = Field(default=1e-6, ge=0)
    window: float = Field(default=0.25, gt=0, le=1)
    stall_ratio: float = Field(default=0.9, gt=0, le=1)
    cell_tol: float = Field(default=1e-9, gt=0)
    min_tail: int = Field(default=3, ge=1)
    limit_surrogate: Literal["last", "median"] = "last"


class RuntimeSettings(BaseModel):
    jobs: int = Field(default=1, ge=1)
    seed: int = 0
    log_level: str = "INFO"


_SECTIONS = {
    "metric": MetricSettings,
    "convergence": ConvergenceSettings,
    "runtime": RuntimeSettings,
}


def load_app_config():
    """Load application configuration from data/config.json"""
    if not os.path.exists(APP_CONFIG_PATH):
        return {}
    try:
        with open(APP_CONFIG_PATH, 'r', encoding='utf-8') as f:
            return json.load(f)
    except Exception:
        return {}


def _default_app_config() -> dict:
    return {name: model().model_dump() for name, model in _SECTIONS.items()}


def _merge_defaults(cfg: dict) -> dict:
    base = _default_app_config()
    if not isinstance(cfg, dict):
        return base

    out = base
    for k, v in cfg.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k].update(v)
        else:
            out[k] = v
    return out


def validate_config(cfg: dict) -> tuple[dict, list[str]]:
    """Validate every known section, falling back to defaults on error.

    Returns the validated section models keyed by name plus the list of
    problems found.
    """
    errors: list[str] = []
    sections: dict = {}
    for name, model in _SECTIONS.items():
        raw = cfg.get(name)
        if not isinstance(raw, dict):
            errors.append(f"Invalid config.{name} (expected object)")
            sections[name] = model()
            continue
        try:
            sections[name] = model(**raw)
        except ValidationError as e:
            errors.append(f"Invalid config.{name}: {e.error_count()} field(s) rejected. Using defaults.")
            sections[name] = model()
    return sections, errors


# Load application configuration
config = _merge_defaults(load_app_config())
_sections, CONFIG_ERRORS = validate_config(config)

metric_cfg: MetricSettings = _sections["metric"]
convergence_cfg: ConvergenceSettings = _sections["convergence"]
runtime_cfg: RuntimeSettings = _sections["runtime"]

# Metric Configuration
ALPHA = metric_cfg.alpha
EQUIVALENCE_TOL = metric_cfg.equivalence_tol

# Convergence Configuration
CAUCHY_THRESHOLD = convergence_cfg.cauchy_threshold
WINDOW = convergence_cfg.window
STALL_RATIO = convergence_cfg.stall_ratio
CELL_TOL = convergence_cfg.cell_tol
MIN_TAIL = convergence_cfg.min_tail
LIMIT_SURROGATE = convergence_cfg.limit_surrogate

# Runtime Configuration
JOBS = runtime_cfg.jobs
LOG_LEVEL = runtime_cfg.log_level.upper()

_seed_env = os.environ.get("MAPDIST_SEED")
SEED = runtime_cfg.seed
if _seed_env is not None:
    try:
        SEED = int(_seed_env)
    except ValueError:
        CONFIG_ERRORS.append(f"Invalid MAPDIST_SEED {_seed_env!r}. Using config seed {SEED}.")

CONFIG_VALID = len(CONFIG_ERRORS) == 0
