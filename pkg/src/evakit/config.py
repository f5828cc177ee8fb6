"""Tool configuration: TOML file sections mirror the modules; command-line flags win."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .core import DEFAULT_FRAME, EvakitError, ReferenceFrame
from .eva.control import VarianceController
from .eva.glimpse import GlimpseConfig
from .eva.weights import EvaDims
from .gcs import GcsConfig
from .metrics import MetricConfig

SEED_ENV = "SCANPATH_SEED"
DEFAULT_SEED = 1


@dataclass(frozen=True)
class ToolConfig:
    frame: ReferenceFrame = DEFAULT_FRAME
    metric: MetricConfig = field(default_factory=MetricConfig)
    gcs: GcsConfig = field(default_factory=GcsConfig)
    glimpse: GlimpseConfig = field(default_factory=GlimpseConfig)
    variance: VarianceController = field(default_factory=VarianceController)
    dims: EvaDims = field(default_factory=EvaDims)
    seed: int = DEFAULT_SEED

    def with_metric(self, **kw) -> "ToolConfig":
        metric = replace(self.metric, **kw)
        return replace(self, metric=metric, gcs=replace(self.gcs, metric=metric))

    def to_dict(self) -> dict:
        gcs = asdict(self.gcs)
        gcs.pop("metric")
        return {
            "frame": str(self.frame),
            "metric": asdict(self.metric),
            "gcs": gcs,
            "glimpse": asdict(self.glimpse),
            "variance": {k: v for k, v in asdict(self.variance).items() if k in ("tau_long", "tau_short", "alpha_gain", "sigma_min", "sigma_max")},
            "dims": asdict(self.dims),
            "seed": self.seed,
        }


_SECTIONS = {
    "metrics": ("metric", MetricConfig),
    "gcs": ("gcs", GcsConfig),
    "eva": ("glimpse", GlimpseConfig),
    "variance": ("variance", VarianceController),
    "dims": ("dims", EvaDims),
}


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def config_from_dict(data: dict, base: ToolConfig | None = None) -> ToolConfig:
    cfg = base or ToolConfig()
    try:
        core = data.get("core", {})
        if "frame" in core:
            cfg = replace(cfg, frame=ReferenceFrame.parse(str(core["frame"])))
        if "seed" in data.get("run", {}):
            cfg = replace(cfg, seed=int(data["run"]["seed"]))
        for section, (attr, _cls) in _SECTIONS.items():
            if section in data:
                values = _tuples(data[section])
                if section == "gcs" and "lambda" in values:
                    values["lam"] = values.pop("lambda")
                cfg = replace(cfg, **{attr: replace(getattr(cfg, attr), **values)})
        cfg = replace(cfg, gcs=replace(cfg.gcs, metric=cfg.metric))
    except (TypeError, ValueError) as exc:
        raise EvakitError(f"bad config: {exc}") from exc
    return cfg


def load_config(path=None) -> ToolConfig:
    """Defaults, then the TOML file (if any), then ``SCANPATH_SEED`` when no seed was set."""
    data = {}
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise EvakitError(f"cannot read config {path}: {exc}") from exc
    cfg = config_from_dict(data)
    if "seed" not in data.get("run", {}) and os.environ.get(SEED_ENV):
        try:
            cfg = replace(cfg, seed=int(os.environ[SEED_ENV]))
        except ValueError as exc:
            raise EvakitError(f"{SEED_ENV} must be an integer") from exc
    return cfg
