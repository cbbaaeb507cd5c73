"""Run configuration: one JSON document holding every stage's settings."""

import json
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass

from .cluster import ClusterConfig
from .consistency import ConsistencyConfig
from .estimate import MODES, PipelineConfig, RansacConfig
from .evaluation import SuccessThresholds
from .featnet import NetConfig
from .prune import PruneConfig
from .scenegen import GenConfig
from .seeding import derive_seed
from .trainer import LossConfig

ENV_VAR = "MIREG_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    mode: str = "deep"
    num_correspondences: int = 1000
    skip_pruning: bool = False
    gen: GenConfig = field(default_factory=GenConfig)
    net: NetConfig = field(default_factory=NetConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    consistency: ConsistencyConfig = field(default_factory=ConsistencyConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    thresholds: SuccessThresholds = field(default_factory=SuccessThresholds)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.num_correspondences < 1:
            raise ConfigError("num_correspondences must be >= 1")

    def pipeline(self):
        return PipelineConfig(
            consistency=self.consistency,
            prune=self.prune,
            cluster=self.cluster,
            ransac=self.ransac,
            num_correspondences=self.num_correspondences,
            skip_pruning=self.skip_pruning,
        )

    def scene_config(self, stream, index):
        """Generator config for scene ``index`` of a named seed stream ("train", "test")."""
        d = asdict(self.gen)
        d["seed"] = derive_seed(self.seed, stream, index)
        return GenConfig(**d)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        return _build(cls, d, "config")


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(d) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    defaults = cls()
    for name, value in d.items():
        sub = getattr(defaults, name)
        if is_dataclass(sub):
            kwargs[name] = _build(type(sub), value, f"{where}.{name}")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path=None, seed=None):
    """Load a RunConfig from ``path`` (or $MIREG_CONFIG); defaults if neither is set."""
    path = path or os.environ.get(ENV_VAR)
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = RunConfig.from_dict(data)
    else:
        cfg = RunConfig()
    if seed is not None:
        cfg.seed = int(seed)
    return cfg
