"""Campaign configuration: TOML file plus command-line overrides."""

from __future__ import annotations

import re
from . import _toml as tomllib
from dataclasses import dataclass, field
from pathlib import Path

EPSILON_MIN = 1e-3
EPSILON_MAX = 1e-1


class ConfigError(ValueError):
    pass


@dataclass
class CampaignConfig:
    apis: list[str] = field(default_factory=list)  # empty: every corpus API
    corpus_dir: Path = Path("corpus")
    fixtures_dir: Path = Path("fixtures")
    backend: str = "recorded"  # recorded | mock | live | failing
    epsilon: float = 0.1
    seed: int | None = 42
    iterations: int = 10000
    budget_seconds: float | None = None
    out_dir: Path = Path("out")
    api_target: str = "toy-buggy"
    counterpart_target: str = "toy-ref"
    library: str = "toy"
    counterpart_library: str = "ref"
    targets_file: Path | None = None
    jobs: int = 1
    infer: bool = True
    error_patterns: list[tuple[re.Pattern, str]] = field(default_factory=list)

    def validate(self):
        if not (EPSILON_MIN <= self.epsilon <= EPSILON_MAX):
            raise ConfigError(
                f"epsilon {self.epsilon} outside [{EPSILON_MIN}, {EPSILON_MAX}]"
            )
        if self.backend in ("recorded", "mock") and self.seed is None:
            raise ConfigError("a seed is mandatory for recorded and mock runs")
        if self.backend == "recorded" and not Path(self.fixtures_dir).is_dir():
            raise ConfigError(f"fixtures directory {self.fixtures_dir} does not exist")
        if self.iterations <= 0 and self.budget_seconds is None:
            raise ConfigError("campaign needs an iteration or wall-clock budget")


def load_config(path: str | Path | None) -> CampaignConfig:
    cfg = CampaignConfig()
    if path is None:
        return cfg
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    section = doc.get("campaign", {})
    base = Path(path).parent

    def respath(value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base / p

    if "apis" in section:
        cfg.apis = list(section["apis"])
    if "corpus" in section:
        cfg.corpus_dir = respath(section["corpus"])
    if "fixtures" in section:
        cfg.fixtures_dir = respath(section["fixtures"])
    if "backend" in section:
        cfg.backend = str(section["backend"])
    if "epsilon" in section:
        cfg.epsilon = float(section["epsilon"])
    if "seed" in section:
        cfg.seed = int(section["seed"])
    if "iterations" in section:
        cfg.iterations = int(section["iterations"])
    if "budget_seconds" in section:
        cfg.budget_seconds = float(section["budget_seconds"])
    if "out" in section:
        cfg.out_dir = respath(section["out"])
    if "api_target" in section:
        cfg.api_target = str(section["api_target"])
    if "counterpart_target" in section:
        cfg.counterpart_target = str(section["counterpart_target"])
    if "library" in section:
        cfg.library = str(section["library"])
    if "counterpart_library" in section:
        cfg.counterpart_library = str(section["counterpart_library"])
    if "targets_file" in section:
        cfg.targets_file = respath(section["targets_file"])
    if "jobs" in section:
        cfg.jobs = int(section["jobs"])
    if "infer" in section:
        cfg.infer = bool(section["infer"])
    for entry in doc.get("error_patterns", []):
        try:
            cfg.error_patterns.append((re.compile(entry["regex"]), entry["constraint"]))
        except (KeyError, re.error) as exc:
            raise ConfigError(f"bad error_patterns entry: {exc}") from exc
    return cfg
