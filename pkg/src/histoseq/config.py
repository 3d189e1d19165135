"""Pipeline configuration: flat key-value text with one section per stage.

Unset keys fall back to the reference defaults: scan2 scanning, learning
rate 1e-4, patience 5, 30 epochs, and an optimizer/dropout pairing picked
by class count (rmsprop + 0.5 for three classes, adam + 0.6 for four).
All validation problems in a file are reported together, not one at a
time.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .errors import ValidationError
from .scanning import SCAN_STRATEGIES
from .training import TrainConfig

DEFAULT_CLASSES = ["Benign", "InSitu", "Invasive"]
EXTRACTORS = ("toy", "manifest")


@dataclass
class PipelineConfig:
    classes: List[str] = field(default_factory=lambda: list(DEFAULT_CLASSES))
    seed: int = 0
    patch_side: int = 256
    scan_strategy: str = "scan2"
    extractor: str = "toy"
    hidden_units: int = 64
    bidirectional: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    ratios: Tuple[float, float, float] = (0.7, 0.15, 0.15)
    folds: int = 10
    stratified: bool = True
    val_fraction: float = 0.15

    @property
    def class_count(self) -> int:
        return len(self.classes)

    def as_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "seed": self.seed,
            "patch_side": self.patch_side,
            "scan_strategy": self.scan_strategy,
            "extractor": self.extractor,
            "hidden_units": self.hidden_units,
            "bidirectional": self.bidirectional,
            "train": dict(self.train.__dict__),
            "ratios": list(self.ratios),
            "folds": self.folds,
            "stratified": self.stratified,
            "val_fraction": self.val_fraction,
        }


def default_optimizer_settings(class_count: int) -> Tuple[str, float]:
    """Winning optimizer/dropout pair by task size: 4-class favors adam."""
    if class_count == 4:
        return "adam", 0.6
    return "rmsprop", 0.5


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def load_config(path: Optional[str] = None) -> PipelineConfig:
    """Read a config file (or defaults when path is None); all errors at once."""
    config = PipelineConfig()
    problems: List[str] = []
    explicit_optimizer = False
    explicit_dropout = False

    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ValidationError(f"config file not found: {path}")

        def take(section: str, key: str, cast, assign):
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    assign(cast(raw))
                except (ValueError, TypeError) as exc:
                    problems.append(f"[{section}] {key} = {raw!r}: {exc}")

        take("pipeline", "classes", lambda r: [c.strip() for c in r.split(",") if c.strip()],
             lambda v: setattr(config, "classes", v))
        take("pipeline", "seed", int, lambda v: setattr(config, "seed", v))
        take("pipeline", "patch_side", int, lambda v: setattr(config, "patch_side", v))
        take("scan", "strategy", str.strip, lambda v: setattr(config, "scan_strategy", v))
        take("features", "extractor", str.strip, lambda v: setattr(config, "extractor", v))
        take("model", "hidden_units", int, lambda v: setattr(config, "hidden_units", v))
        take("model", "bidirectional", _parse_bool,
             lambda v: setattr(config, "bidirectional", v))

        def set_train(key):
            return lambda v: setattr(config.train, key, v)

        if parser.has_option("train", "optimizer"):
            explicit_optimizer = True
        if parser.has_option("train", "dropout_rate"):
            explicit_dropout = True
        take("train", "optimizer", str.strip, set_train("optimizer"))
        take("train", "learning_rate", float, set_train("learning_rate"))
        take("train", "momentum", float, set_train("momentum"))
        take("train", "squared_grad_decay", float, set_train("squared_grad_decay"))
        take("train", "grad_decay", float, set_train("grad_decay"))
        take("train", "epsilon", float, set_train("epsilon"))
        take("train", "max_epochs", int, set_train("max_epochs"))
        take("train", "patience",
             lambda r: None if r.strip().lower() in ("none", "off") else int(r),
             set_train("patience"))
        take("train", "dropout_rate", float, set_train("dropout_rate"))
        take("train", "clip_norm",
             lambda r: None if r.strip().lower() in ("none", "off") else float(r),
             set_train("clip_norm"))
        take("split", "ratios",
             lambda r: tuple(float(x) for x in r.split(",")),
             lambda v: setattr(config, "ratios", v))
        take("split", "folds", int, lambda v: setattr(config, "folds", v))
        take("split", "stratified", _parse_bool,
             lambda v: setattr(config, "stratified", v))
        take("split", "val_fraction", float,
             lambda v: setattr(config, "val_fraction", v))

    if not explicit_optimizer or not explicit_dropout:
        optimizer, dropout = default_optimizer_settings(config.class_count)
        if not explicit_optimizer:
            config.train.optimizer = optimizer
        if not explicit_dropout:
            config.train.dropout_rate = dropout

    config.train.seed = config.seed

    if not config.classes:
        problems.append("[pipeline] classes must be non-empty")
    if len(set(config.classes)) != len(config.classes):
        problems.append("[pipeline] classes contains duplicates")
    if config.patch_side < 1:
        problems.append(f"[pipeline] patch_side must be >= 1, got {config.patch_side}")
    if config.scan_strategy not in SCAN_STRATEGIES:
        problems.append(
            f"[scan] strategy {config.scan_strategy!r} not one of {SCAN_STRATEGIES}"
        )
    if config.extractor not in EXTRACTORS:
        problems.append(f"[features] extractor {config.extractor!r} not one of {EXTRACTORS}")
    if config.hidden_units < 1:
        problems.append(f"[model] hidden_units must be >= 1, got {config.hidden_units}")
    if len(config.ratios) != 3 or abs(sum(config.ratios) - 1.0) > 1e-9:
        problems.append(f"[split] ratios must be three values summing to 1, got {config.ratios}")
    if config.folds != 0 and config.folds < 2:
        problems.append(f"[split] folds must be 0 (disabled) or >= 2, got {config.folds}")
    if not 0.0 < config.val_fraction < 1.0:
        problems.append(f"[split] val_fraction must be in (0, 1), got {config.val_fraction}")
    try:
        config.train.validate()
    except ValidationError as exc:
        problems.append(str(exc))

    if problems:
        raise ValidationError("invalid configuration:\n  " + "\n  ".join(problems))
    return config
