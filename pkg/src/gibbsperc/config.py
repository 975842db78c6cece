"""Experiment configuration (flat INI sections per module) and run manifests.

The config document is the experiment provenance: equal documents hash to
equal manifests and reproduce byte-identical result files.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .models import (
    GibbsModel,
    area_interaction,
    attractive_tail,
    hard_core,
    poisson,
    strauss_hard_core,
)

__version__ = "0.1.0"


class ConfigError(ValueError):
    """Invalid experiment configuration, with section/field diagnostics."""

    def __init__(self, section: str, key: str, message: str):
        self.section = section
        self.key = key
        super().__init__(f"[{section}] {key}: {message}")


MODEL_KINDS = ("poisson", "hard_core", "strauss_hard_core", "attractive_tail", "area")

_MODEL_PARAMS = {
    "poisson": (),
    "hard_core": ("r",),
    "strauss_hard_core": ("r", "r_max", "level"),
    "attractive_tail": ("r",),
    "area": ("gamma", "r0"),
}


@dataclass
class ExperimentConfig:
    """Parsed and validated experiment document."""

    text: str
    model_kind: str
    model_params: dict
    sections: dict = field(default_factory=dict)

    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def get(self, section: str, key: str, cast, default=None, required=False):
        sec = self.sections.get(section, {})
        if key not in sec:
            if required:
                raise ConfigError(section, key, "required key is missing")
            return default
        raw = sec[key]
        try:
            return cast(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(section, key, f"cannot parse {raw!r}: {exc}") from exc

    def float_list(self, section: str, key: str, default=None, required=False):
        def cast(raw: str):
            vals = [float(v) for v in raw.replace(",", " ").split()]
            if not vals:
                raise ValueError("empty list")
            return vals

        return self.get(section, key, cast, default=default, required=required)

    def build_model(self, beta: float | None = None) -> GibbsModel:
        """Instantiate the configured model, optionally overriding beta."""
        p = dict(self.model_params)
        if beta is not None:
            p["beta"] = beta
        if "beta" not in p:
            raise ConfigError("model", "beta", "required key is missing")
        kind = self.model_kind
        try:
            if kind == "poisson":
                return poisson(p["beta"])
            if kind == "hard_core":
                return hard_core(p["beta"], p["r"])
            if kind == "strauss_hard_core":
                return strauss_hard_core(p["beta"], p["r"], p["r_max"], p["level"])
            if kind == "attractive_tail":
                return attractive_tail(p["beta"], p["r"])
            if kind == "area":
                return area_interaction(p["beta"], p["gamma"], p["r0"])
        except ValueError as exc:
            raise ConfigError("model", kind, str(exc)) from exc
        raise ConfigError("model", "kind", f"unknown model kind {kind!r}")


def parse_config(source) -> ExperimentConfig:
    """Parse and validate an experiment document from a path or raw text."""
    if isinstance(source, (str, Path)) and Path(str(source)).exists():
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raise ConfigError("-", "-", f"cannot read config from {source!r}")

    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # preserve key case (R vs r are distinct constants)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("-", "-", f"malformed config: {exc}") from exc

    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    if "model" not in sections:
        raise ConfigError("model", "-", "missing [model] section")
    model = sections["model"]
    kind = model.get("kind")
    if kind not in MODEL_KINDS:
        raise ConfigError("model", "kind", f"must be one of {MODEL_KINDS}, got {kind!r}")

    params: dict = {}
    for key in ("beta",) + _MODEL_PARAMS[kind]:
        if key in model:
            try:
                params[key] = float(model[key])
            except ValueError as exc:
                raise ConfigError("model", key, f"cannot parse {model[key]!r}") from exc
        elif key != "beta":
            raise ConfigError("model", key, f"required for kind={kind}")
    cfg = ExperimentConfig(text=text, model_kind=kind, model_params=params, sections=sections)
    cfg.build_model(beta=params.get("beta", 1.0))  # validates parameter ranges
    return cfg


@dataclass
class RunManifest:
    """Provenance record: one manifest per run, referenced by every result."""

    config_sha256: str
    version: str
    command: str
    master_seed: int
    task_seeds: list[int]
    created_at: float

    @classmethod
    def create(cls, cfg: ExperimentConfig, command: str, master_seed: int, n_tasks: int):
        return cls(
            config_sha256=cfg.sha256(),
            version=__version__,
            command=command,
            master_seed=master_seed,
            task_seeds=[master_seed + i for i in range(n_tasks)],
            created_at=time.time(),
        )

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.__dict__, indent=2), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)
