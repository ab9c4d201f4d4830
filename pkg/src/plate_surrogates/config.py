"""One JSON run configuration with dotted ``section.key=value`` overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .dataio import DEFAULT_FRACTIONS
from .evaluator import grid_cells
from .models import DEFAULT_GRU_WIDTH, FAMILIES
from .plate_sim import Excitation, PlateConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


DATA_DEFAULTS = dict(dataset=None, fractions=list(DEFAULT_FRACTIONS), split_rule="floor",
                     standardize=True, trim=True, threshold=0.0)
GRID_DEFAULTS = dict(families=list(FAMILIES), s_values=[10, 50, 100, 200], h_values=[1, 2, 4, 6],
                     n_runs=3, gru_width=DEFAULT_GRU_WIDTH, family_overrides={})
# desk benchmark: heavy damping keeps each pulse response inside a 100-sample
# window, and log-spread pulse amplitudes exercise the saturation
PLATE_DEFAULTS = dict(alpha=200.0)
EXCITATION_DEFAULTS = dict(duration_s=60.0, amplitude_decades=2.0)
SECTIONS = ("plate", "excitation", "data", "train", "grid", "output_dir")


def _merge(base: dict, extra: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k not in out:
            raise ConfigError(f"unknown key {where}.{k}")
        out[k] = v
    return out


@dataclass
class RunConfig:
    plate: PlateConfig = field(default_factory=lambda: PlateConfig(**PLATE_DEFAULTS))
    excitation: Excitation = field(default_factory=lambda: Excitation(**EXCITATION_DEFAULTS))
    data: dict = field(default_factory=lambda: copy.deepcopy(DATA_DEFAULTS))
    train: TrainConfig = field(default_factory=TrainConfig)
    grid: dict = field(default_factory=lambda: copy.deepcopy(GRID_DEFAULTS))
    output_dir: str = "runs/default"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            plate = dict(PLATE_DEFAULTS, **d.get("plate", {}))
            if "fs" in plate:
                plate["dt"] = 1.0 / float(plate.pop("fs"))
            for key in ("s0", "sensor_pt"):
                if key in plate:
                    plate[key] = tuple(plate[key])
            cfg = cls(
                plate=PlateConfig.from_dict(plate),
                excitation=Excitation.from_dict(dict(EXCITATION_DEFAULTS, **d.get("excitation", {}))),
                data=_merge(DATA_DEFAULTS, d.get("data", {}), "data"),
                train=TrainConfig.from_dict(d.get("train", {})),
                grid=_merge(GRID_DEFAULTS, d.get("grid", {}), "grid"),
                output_dir=str(d.get("output_dir", "runs/default")),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        g = self.grid
        try:
            grid_cells(g["families"], g["s_values"], g["h_values"])
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from exc
        if int(g["n_runs"]) < 1:
            raise ConfigError("grid.n_runs must be >= 1")
        for fam, over in g["family_overrides"].items():
            if fam.upper() not in FAMILIES:
                raise ConfigError(f"grid.family_overrides: unknown family {fam!r}")
            try:
                TrainConfig.from_dict(dict(self.train.to_dict(), **over))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"grid.family_overrides.{fam}: {exc}") from exc
        if self.data["split_rule"] not in ("floor", "holdout"):
            raise ConfigError("data.split_rule must be 'floor' or 'holdout'")
        if len(self.data["fractions"]) != 3:
            raise ConfigError("data.fractions needs three entries")

    def to_dict(self) -> dict:
        return dict(plate=self.plate.to_dict(), excitation=self.excitation.to_dict(),
                    data=copy.deepcopy(self.data), train=self.train.to_dict(),
                    grid=copy.deepcopy(self.grid), output_dir=self.output_dir)

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    @property
    def dataset_path(self) -> Path:
        return Path(self.data["dataset"]) if self.data["dataset"] else self.out / "dataset.csv"


def parse_value(text: str):
    """JSON literal if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, assignments) -> dict:
    """Apply ``a.b.c=value`` strings to a nested dict (copied)."""
    out = copy.deepcopy(raw)
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, value = item.split("=", 1)
        keys = [k for k in path.strip().split(".") if k]
        if not keys:
            raise ConfigError(f"override {item!r} has an empty key")
        node = out
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {k} is not a section")
        node[keys[-1]] = parse_value(value)
    return out


def load_config(path=None, overrides=()) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
    return RunConfig.from_dict(apply_overrides(raw, overrides))
