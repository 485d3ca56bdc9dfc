"""
Run configuration: descriptor geometry, detection, training and sampling
settings resolved from a preset, an optional flat config file, and explicit
command-line overrides (in that order).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

from hogscan import kv
from hogscan.detect import DetectParams
from hogscan.errors import ConfigError, ParameterError
from hogscan.hog import PRESETS, HogConfig, descriptor_len
from hogscan.svm import TrainParams

HOG_KEYS = (
    "window_width",
    "window_height",
    "cell_size",
    "block_size",
    "block_stride",
    "bin_count",
    "bin_width_degrees",
    "epsilon",
    "gamma",
    "gradient_filter",
)
DETECT_KEYS = ("tau", "scale_step", "nms_overlap", "nms_enabled", "window_stride")
TRAIN_KEYS = ("C", "epochs", "step_offset", "seed")
SAMPLING_KEYS = ("negatives_per_image",)
DERIVED_KEYS = ("descriptor_len",)
KNOWN_KEYS = frozenset(HOG_KEYS + DETECT_KEYS + TRAIN_KEYS + SAMPLING_KEYS + DERIVED_KEYS)


@dataclass(frozen=True)
class Settings:
    """Fully resolved configuration of one run."""

    hog: HogConfig = field(default_factory=HogConfig)
    detect: DetectParams = field(default_factory=DetectParams)
    train: TrainParams = field(default_factory=TrainParams)
    negatives_per_image: int = 10

    def __post_init__(self) -> None:
        if self.negatives_per_image < 1:
            raise ConfigError(f"negatives_per_image: must be >= 1, got {self.negatives_per_image!r}")

    def to_pairs(self) -> List[Tuple[str, str]]:
        pairs = list(self.hog.to_pairs())
        pairs.append(("descriptor_len", str(descriptor_len(self.hog))))
        pairs += self.detect.to_pairs()
        pairs += self.train.to_pairs()
        pairs.append(("negatives_per_image", str(self.negatives_per_image)))
        return pairs

    def to_text(self) -> str:
        return kv.format_key_values(self.to_pairs())


def _detect_from(values: Mapping[str, str], base: DetectParams) -> DetectParams:
    changes: Dict[str, object] = {}
    if "tau" in values:
        changes["tau"] = kv.parse_float("tau", values["tau"])
    if "scale_step" in values:
        changes["scale_step"] = kv.parse_float("scale_step", values["scale_step"])
    if "nms_overlap" in values:
        changes["nms_overlap"] = kv.parse_float("nms_overlap", values["nms_overlap"])
    if "nms_enabled" in values:
        changes["nms_enabled"] = kv.parse_bool("nms_enabled", values["nms_enabled"])
    if "window_stride" in values:
        text = values["window_stride"]
        changes["window_stride"] = None if text.lower() == "auto" else kv.parse_int("window_stride", text)
    return replace(base, **changes)


def _train_from(values: Mapping[str, str], base: TrainParams) -> TrainParams:
    changes: Dict[str, object] = {}
    if "C" in values:
        changes["C"] = kv.parse_float("C", values["C"])
    if "epochs" in values:
        changes["epochs"] = kv.parse_int("epochs", values["epochs"])
    if "step_offset" in values:
        changes["step_offset"] = kv.parse_float("step_offset", values["step_offset"])
    if "seed" in values:
        changes["seed"] = kv.parse_int("seed", values["seed"])
    return replace(base, **changes)


def apply_values(settings: Settings, values: Mapping[str, str], source: str = "config") -> Settings:
    """
    Overlay text values on settings.

    Raises:
        ConfigError: On an unknown key or a value that breaks an invariant.
    """
    unknown = sorted(set(values) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}")
    try:
        hog = HogConfig.from_mapping(values, base=settings.hog)
        detect = _detect_from(values, settings.detect)
        train = _train_from(values, settings.train)
    except ParameterError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if "descriptor_len" in values:
        declared = kv.parse_int("descriptor_len", values["descriptor_len"])
        expected = descriptor_len(hog)
        if declared != expected:
            raise ConfigError(f"{source}: descriptor_len {declared} does not match the geometry ({expected})")
    negatives = settings.negatives_per_image
    if "negatives_per_image" in values:
        negatives = kv.parse_int("negatives_per_image", values["negatives_per_image"])
    return Settings(hog=hog, detect=detect, train=train, negatives_per_image=negatives)


def load_settings(
    path: Optional[Union[str, Path]] = None,
    preset: str = "realtime",
    overrides: Optional[Mapping[str, str]] = None,
) -> Settings:
    """Resolve preset, then config file, then explicit overrides."""
    if preset not in PRESETS:
        raise ConfigError(f"preset: expected one of {', '.join(PRESETS)}, got {preset!r}")
    settings = Settings(hog=PRESETS[preset])
    if path is not None:
        path = Path(path)
        settings = apply_values(settings, kv.parse_key_values(path.read_text(encoding="utf-8"), str(path)), str(path))
    if overrides:
        settings = apply_values(settings, overrides, "command line")
    return settings
