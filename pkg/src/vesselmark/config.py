"""Run configuration: a flat, commented key-value file mapped onto the
module parameter objects. Every tunable constant appears in the default
template so deviations are visible in diffs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from vesselmark.errors import VesselmarkError
from vesselmark.filters import RegionGrowParams, VesselnessParams
from vesselmark.grower import GrowConfig

DEFAULT_ORGAN_FILL = {
    "stomach": 0.0,
    "small_intestine": 20.0,
    "duodenum": 40.0,
    "colon": 60.0,
}


class ConfigError(VesselmarkError):
    """Configuration file is malformed or holds an unknown key."""


@dataclass
class RunConfig:
    grow: GrowConfig = field(default_factory=GrowConfig)
    vesselness: VesselnessParams = field(default_factory=VesselnessParams)
    region_grow: RegionGrowParams = field(default_factory=RegionGrowParams)
    phantom_master_seed: int = 0
    phantom_count: int = 50
    organ_fill: dict = field(default_factory=lambda: dict(DEFAULT_ORGAN_FILL))
    volume_format: str = ".nii.gz"
    threads: int = 1


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def parse_config_text(text: str) -> RunConfig:
    """Parse `key = value` lines (# comments allowed) over the defaults."""
    cfg = RunConfig()
    grow_items = cfg.grow.to_items()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        try:
            _apply_key(cfg, grow_items, key, raw)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    cfg.grow = GrowConfig.from_items(grow_items)
    return cfg


def _apply_key(cfg: RunConfig, grow_items: dict, key: str, raw: str):
    if key.startswith("grow."):
        sub = key[len("grow."):]
        if sub not in grow_items:
            raise ConfigError(f"unknown config key {key!r}")
        grow_items[sub] = raw
    elif key == "vesselness.scales":
        cfg.vesselness = VesselnessParams(
            tuple(float(v) for v in raw.split(",")),
            cfg.vesselness.alpha, cfg.vesselness.beta,
            cfg.vesselness.c, cfg.vesselness.bright_on_dark,
        )
    elif key == "vesselness.alpha":
        cfg.vesselness.alpha = float(raw)
    elif key == "vesselness.beta":
        cfg.vesselness.beta = float(raw)
    elif key == "vesselness.c":
        cfg.vesselness.c = None if raw.strip().lower() == "auto" else float(raw)
    elif key == "vesselness.bright_on_dark":
        cfg.vesselness.bright_on_dark = _parse_bool(raw)
    elif key == "region_grow.threshold":
        cfg.region_grow.threshold = float(raw)
    elif key == "region_grow.connectivity":
        cfg.region_grow = RegionGrowParams(
            cfg.region_grow.threshold, int(raw), cfg.region_grow.max_voxels
        )
    elif key == "region_grow.max_voxels":
        cfg.region_grow = RegionGrowParams(
            cfg.region_grow.threshold, cfg.region_grow.connectivity, int(raw)
        )
    elif key == "phantom.master_seed":
        cfg.phantom_master_seed = int(raw)
    elif key == "phantom.count":
        cfg.phantom_count = int(raw)
    elif key.startswith("organ_fill."):
        cfg.organ_fill[key[len("organ_fill."):]] = float(raw)
    elif key == "io.volume_format":
        fmt = raw.strip()
        if not fmt.startswith("."):
            fmt = "." + fmt
        if fmt not in (".nii.gz", ".nii", ".raw"):
            raise ConfigError(f"unsupported volume format {raw!r}")
        cfg.volume_format = fmt
    elif key == "run.threads":
        cfg.threads = int(raw)
    else:
        raise ConfigError(f"unknown config key {key!r}")


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    return parse_config_text(path.read_text())


def default_config_text() -> str:
    """Template listing every constant with its default."""
    cfg = RunConfig()
    lines = ["# sphere grower"]
    for key, value in cfg.grow.to_items().items():
        lines.append(f"grow.{key} = {value}")
    lines += [
        "",
        "# multiscale tubularity filter",
        "vesselness.scales = " + ",".join(repr(s) for s in cfg.vesselness.scales),
        f"vesselness.alpha = {cfg.vesselness.alpha!r}",
        f"vesselness.beta = {cfg.vesselness.beta!r}",
        "vesselness.c = auto",
        "vesselness.bright_on_dark = true",
        "",
        "# mask region growing",
        f"region_grow.threshold = {cfg.region_grow.threshold!r}",
        f"region_grow.connectivity = {cfg.region_grow.connectivity}",
        f"region_grow.max_voxels = {cfg.region_grow.max_voxels}",
        "",
        "# phantom synthesis",
        f"phantom.master_seed = {cfg.phantom_master_seed}",
        f"phantom.count = {cfg.phantom_count}",
        "",
        "# organ intensity overwrite (HU)",
    ]
    for name, fill in cfg.organ_fill.items():
        lines.append(f"organ_fill.{name} = {fill!r}")
    lines += [
        "",
        "# i/o",
        "io.volume_format = nii.gz",
        f"run.threads = {cfg.threads}",
    ]
    return "\n".join(lines) + "\n"
