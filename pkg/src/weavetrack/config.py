"""Flat key-value configuration with one section per pipeline stage.

Files are INI-style; unknown sections or keys are rejected, and every value
is validated against the owning module's preconditions at load time.
Serialization is canonical, so load -> save -> load is the identity.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .features import MserParams
from .geometry import MsacParams

__all__ = [
    "Config",
    "ConfigError",
    "MserSettings",
    "DescriptorSettings",
    "LatticeSettings",
    "TrackerSettings",
    "load_config",
    "save_config",
]


class ConfigError(ValueError):
    """Malformed configuration file or out-of-range value."""


@dataclass
class MserSettings:
    delta: int = 8
    min_area: int = 12
    max_area_frac: float = 0.01
    max_variation: float = 0.15
    min_diversity: float = 0.2
    polarity: str = "bright"

    def validate(self):
        if not (0.0 < self.max_area_frac <= 1.0):
            raise ConfigError("mser.max_area_frac must lie in (0, 1]")
        try:
            self.params_for_area(256 * 256)
        except ValueError as exc:
            raise ConfigError(f"mser: {exc}") from exc

    def params_for_area(self, image_area: int) -> MserParams:
        max_area = max(int(self.max_area_frac * image_area), self.min_area + 1)
        return MserParams(
            delta=self.delta,
            min_area=self.min_area,
            max_area=max_area,
            max_variation=self.max_variation,
            min_diversity=self.min_diversity,
            polarity=self.polarity,
        )


@dataclass
class DescriptorSettings:
    match_threshold: int = 120
    oriented: bool = False
    scale_factor: float = 10.0

    def validate(self):
        if not (0 <= self.match_threshold <= 512):
            raise ConfigError("descriptor.match_threshold must lie in [0, 512]")
        if self.scale_factor <= 0:
            raise ConfigError("descriptor.scale_factor must be positive")


@dataclass
class LatticeSettings:
    w: float = 0.5
    ncc_min: float = 0.6
    angular_tolerance: float = 15.0
    min_separation: float = 30.0
    mask_radius: int = 3
    search_radius: float = 0.0  # 0 = derive from the spectrum pitch estimate
    mm_per_thread: float = 0.33

    def validate(self):
        if self.w < 0:
            raise ConfigError("lattice.w must be nonnegative")
        if not (0.0 < self.ncc_min < 1.0):
            raise ConfigError("lattice.ncc_min must lie in (0, 1)")
        if not (0.0 < self.angular_tolerance <= 90.0):
            raise ConfigError("lattice.angular_tolerance must lie in (0, 90]")
        if not (0.0 < self.min_separation <= 90.0):
            raise ConfigError("lattice.min_separation must lie in (0, 90]")
        if self.mask_radius < 1:
            raise ConfigError("lattice.mask_radius must be >= 1")
        if self.search_radius < 0:
            raise ConfigError("lattice.search_radius must be nonnegative")
        if self.mm_per_thread <= 0:
            raise ConfigError("lattice.mm_per_thread must be positive")


@dataclass
class TrackerSettings:
    refresh_period: int = 10
    fft_crop: int = 256
    border_margin: int = 16
    rotation_cache_deg: float = 0.05

    def validate(self):
        if self.refresh_period < 1:
            raise ConfigError("tracker.refresh_period must be >= 1")
        crop = self.fft_crop
        if crop < 16 or (crop & (crop - 1)) != 0:
            raise ConfigError("tracker.fft_crop must be a power of two >= 16")
        if self.border_margin < 0:
            raise ConfigError("tracker.border_margin must be nonnegative")
        if self.rotation_cache_deg < 0:
            raise ConfigError("tracker.rotation_cache_deg must be nonnegative")


@dataclass
class MsacSettings:
    inlier_threshold: float = 1.5
    confidence: float = 0.99
    max_iterations: int = 2000
    min_inliers: int = 6

    def validate(self):
        try:
            self.params()
        except ValueError as exc:
            raise ConfigError(f"msac: {exc}") from exc

    def params(self) -> MsacParams:
        return MsacParams(
            inlier_threshold=self.inlier_threshold,
            confidence=self.confidence,
            max_iterations=self.max_iterations,
            min_inliers=self.min_inliers,
        )


@dataclass
class Config:
    seed: int = 0
    mser: MserSettings = field(default_factory=MserSettings)
    descriptor: DescriptorSettings = field(default_factory=DescriptorSettings)
    msac: MsacSettings = field(default_factory=MsacSettings)
    lattice: LatticeSettings = field(default_factory=LatticeSettings)
    tracker: TrackerSettings = field(default_factory=TrackerSettings)

    def validate(self):
        for section in (self.mser, self.descriptor, self.msac, self.lattice, self.tracker):
            section.validate()
        return self


_SECTIONS = {
    "mser": MserSettings,
    "descriptor": DescriptorSettings,
    "msac": MsacSettings,
    "lattice": LatticeSettings,
    "tracker": TrackerSettings,
}


def _parse_value(raw: str, kind: type):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"expected {kind.__name__}, got {raw!r}") from exc


def load_config(path: str | Path) -> Config:
    """Load and validate a config file; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    text = Path(path).read_text()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc

    cfg = Config()
    for section in parser.sections():
        if section == "run":
            for key, raw in parser.items(section):
                if key != "seed":
                    raise ConfigError(f"unknown key [run] {key}")
                cfg.seed = _parse_value(raw, int)
            continue
        cls = _SECTIONS.get(section)
        if cls is None:
            raise ConfigError(f"unknown config section [{section}]")
        target = getattr(cfg, section)
        known = {f.name: f.type for f in fields(cls)}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key [{section}] {key}")
            kind = type(getattr(target, key))
            setattr(target, key, _parse_value(raw, kind))
    cfg.validate()
    return cfg


def save_config(cfg: Config, path: str | Path) -> None:
    """Write the config in canonical section and key order."""
    lines = ["[run]", f"seed = {cfg.seed}", ""]
    for name in ("mser", "descriptor", "msac", "lattice", "tracker"):
        section = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in fields(section):
            value = getattr(section, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        lines.append("")
    Path(path).write_text("\n".join(lines))
