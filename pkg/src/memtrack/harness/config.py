"""JSON run and scene configuration.

Both documents carry a ``schema`` field naming their version. Unknown keys
anywhere are rejected so typos fail loudly instead of silently reverting to
defaults.
"""
import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional, Tuple

from ..encoder import AGGREGATIONS
from ..losses import LossWeights
from ..tracker import TrackerConfig
from .synth import SceneConfig

RUN_SCHEMA = "memtrack.run/1"
SCENE_SCHEMA = "memtrack.scene/1"


class ConfigError(ValueError):
    pass


def _check_keys(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _build(cls, doc, where):
    names = [f.name for f in dataclasses.fields(cls) if f.init]
    _check_keys(doc, names, where)
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class ModelConfig:
    kind: str = "identity"  # "identity" or "random"
    path: str = "oracle"  # "oracle" proposals or "learned" features
    d: int = 64
    beta: float = 10.0
    n_heads: int = 4
    n_queries: int = 50
    svp_levels: int = 0
    grid: Tuple[int, int] = (16, 16)
    params: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        self.grid = tuple(int(v) for v in self.grid)
        if self.kind not in ("identity", "random"):
            raise ValueError(f"model kind must be 'identity' or 'random', got {self.kind!r}")
        if self.path not in ("oracle", "learned"):
            raise ValueError(f"model path must be 'oracle' or 'learned', got {self.path!r}")
        if self.path == "learned" and self.kind != "random":
            raise ValueError("the learned path needs a proposal network, use kind 'random' or a params file")
        if self.d < 8 or self.d % 8:
            raise ValueError("model width d must be a positive multiple of 8")


@dataclass
class RunConfig:
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    losses: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)
    aggregation: str = "ours"
    image_size: Tuple[int, int] = (1920, 1080)  # for detection files
    scene: Optional[SceneConfig] = None

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        self.image_size = tuple(int(v) for v in self.image_size)

    def to_dict(self):
        doc = {"schema": RUN_SCHEMA}
        doc.update(dataclasses.asdict(self))
        doc["model"]["grid"] = list(self.model.grid)
        doc["image_size"] = list(self.image_size)
        doc["scene"] = self.scene.to_dict() if self.scene else None
        return doc


def _check_schema(doc, expected, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a JSON object")
    if doc.get("schema") != expected:
        raise ConfigError(f"{where}: schema must be {expected!r}, got {doc.get('schema')!r}")


def scene_from_dict(doc, where="scene"):
    _check_schema(doc, SCENE_SCHEMA, where)
    body = {k: v for k, v in doc.items() if k != "schema"}
    return _build(SceneConfig, body, where)


def scene_to_dict(cfg):
    doc = {"schema": SCENE_SCHEMA}
    doc.update(cfg.to_dict())
    return doc


def run_from_dict(doc, where="config"):
    _check_schema(doc, RUN_SCHEMA, where)
    allowed = ["schema", "tracker", "losses", "model", "aggregation", "image_size", "scene"]
    _check_keys(doc, allowed, where)
    kw = {}
    if "tracker" in doc:
        kw["tracker"] = _build(TrackerConfig, doc["tracker"], f"{where}.tracker")
    if "losses" in doc:
        kw["losses"] = _build(LossWeights, doc["losses"], f"{where}.losses")
    if "model" in doc:
        kw["model"] = _build(ModelConfig, doc["model"], f"{where}.model")
    for key in ("aggregation", "image_size"):
        if key in doc:
            kw[key] = doc[key]
    if doc.get("scene") is not None:
        kw["scene"] = scene_from_dict(doc["scene"], f"{where}.scene")
    return RunConfig(**kw)


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def load_run_config(path):
    return run_from_dict(load_json(path), str(path))


def load_scene_config(path):
    return scene_from_dict(load_json(path), str(path))
