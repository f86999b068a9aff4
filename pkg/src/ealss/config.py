"""Run configuration: one JSON file drives every CLI command.

Defaults reproduce the reference hyperparameters (block size 7, focal
gamma 2.0 / alpha 0.25, 40 depth bins over [1, 60) meters, 6 views of
256 x 704, a +/-50 m BEV grid at 0.5 m). Unknown keys are rejected at
every nesting level; a silent typo in a hyperparameter is the main
reproducibility hazard this guards against.

All randomness in the package flows from the single `seed` through
numpy's PCG64 (`np.random.default_rng`).
"""

import json
from dataclasses import dataclass

from .eadf import EadfConfig
from .losses import DepthBinning, FocalParams
from .splat import GridSpec


@dataclass(frozen=True)
class StackShape:
    """Number of views and per-view image size."""

    n_views: int = 6
    height: int = 256
    width: int = 704

    def __post_init__(self):
        for name in ("n_views", "height", "width"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"shape.{name} must be a positive integer, got {value}")
            object.__setattr__(self, name, int(value))

    def as_tuple(self):
        return (self.n_views, self.height, self.width)


@dataclass(frozen=True)
class RunConfig:
    k: int = 7
    binning: DepthBinning = DepthBinning(1.0, 60.0, 40)
    focal: FocalParams = FocalParams(0.25, 2.0)
    shape: StackShape = StackShape()
    grid: GridSpec = GridSpec()
    seed: int = 0

    def __post_init__(self):
        EadfConfig(k=self.k)  # reuses its validation
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def eadf(self) -> EadfConfig:
        return EadfConfig(k=self.k)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "binning": {
                "d_min": self.binning.d_min,
                "d_max": self.binning.d_max,
                "n_bins": self.binning.n_bins,
            },
            "focal": {"alpha": self.focal.alpha, "gamma": self.focal.gamma},
            "shape": {
                "n_views": self.shape.n_views,
                "height": self.shape.height,
                "width": self.shape.width,
            },
            "grid": {
                "x_min": self.grid.x_min,
                "x_max": self.grid.x_max,
                "y_min": self.grid.y_min,
                "y_max": self.grid.y_max,
                "z_min": self.grid.z_min,
                "z_max": self.grid.z_max,
                "resolution": self.grid.resolution,
            },
            "seed": self.seed,
        }


def _take(section: dict, context: str, fields: dict) -> dict:
    """Pop known fields, applying defaults; reject anything left over."""
    if not isinstance(section, dict):
        raise ValueError(f"config: {context} must be an object")
    unknown = set(section) - set(fields)
    if unknown:
        raise ValueError(
            f"config: unknown key(s) {sorted(unknown)} in {context}"
        )
    out = {}
    for name, default in fields.items():
        out[name] = section.get(name, default)
    return out


def config_from_dict(raw: dict) -> RunConfig:
    defaults = RunConfig()
    top = _take(raw, "top level", {
        "k": defaults.k,
        "binning": {},
        "focal": {},
        "shape": {},
        "grid": {},
        "seed": defaults.seed,
    })
    b = _take(top["binning"], "binning", {
        "d_min": defaults.binning.d_min,
        "d_max": defaults.binning.d_max,
        "n_bins": defaults.binning.n_bins,
    })
    f = _take(top["focal"], "focal", {
        "alpha": defaults.focal.alpha,
        "gamma": defaults.focal.gamma,
    })
    s = _take(top["shape"], "shape", {
        "n_views": defaults.shape.n_views,
        "height": defaults.shape.height,
        "width": defaults.shape.width,
    })
    g = _take(top["grid"], "grid", {
        "x_min": defaults.grid.x_min,
        "x_max": defaults.grid.x_max,
        "y_min": defaults.grid.y_min,
        "y_max": defaults.grid.y_max,
        "z_min": defaults.grid.z_min,
        "z_max": defaults.grid.z_max,
        "resolution": defaults.grid.resolution,
    })
    try:
        return RunConfig(
            k=top["k"],
            binning=DepthBinning(**b),
            focal=FocalParams(**f),
            shape=StackShape(**s),
            grid=GridSpec(**g),
            seed=top["seed"],
        )
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config: {exc}") from None


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config: {path} is not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ValueError(f"config: {path} must hold a JSON object")
    return config_from_dict(raw)


def save_config(path, config: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")
