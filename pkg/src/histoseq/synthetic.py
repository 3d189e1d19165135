"""Synthetic class-separable sequence datasets for tests and demos.

Each class owns a fixed random centroid in feature space. A sequence of
length m drawn for that class carries the centroid plus white noise in
either every column (``spread``) or only the first few columns
(``head``); the rest is pure noise. Head-mode sequences are deliberately
hard for a forward-only reader: the informative columns sit at the far
end of a long noise tail, right where the backward stream starts.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from .errors import ValidationError
from .features import FeatureSequence

SIGNAL_MODES = ("spread", "head")


def make_synthetic_dataset(
    class_count: int = 3,
    per_class: int = 20,
    dim: int = 96,
    m_range: Tuple[int, int] = (8, 48),
    seed: int = 0,
    signal: str = "spread",
    signal_scale: float = 1.0,
    noise_scale: float = 0.5,
    head_columns: int = 3,
) -> List[FeatureSequence]:
    """Build per_class sequences per class with lengths drawn from m_range."""
    if signal not in SIGNAL_MODES:
        raise ValidationError(f"unknown signal mode {signal!r}; expected {SIGNAL_MODES}")
    if class_count < 2 or per_class < 1 or dim < 1:
        raise ValidationError("need class_count >= 2, per_class >= 1, dim >= 1")
    lo, hi = m_range
    if lo < 1 or hi < lo:
        raise ValidationError(f"bad m_range {m_range}")
    rng = np.random.default_rng(seed)
    centroids = rng.normal(scale=signal_scale, size=(class_count, dim))
    sequences: List[FeatureSequence] = []
    for label in range(class_count):
        for index in range(per_class):
            m = int(rng.integers(lo, hi + 1))
            columns = rng.normal(scale=noise_scale, size=(dim, m))
            if signal == "spread":
                columns += centroids[label][:, None]
            else:
                take = min(head_columns, m)
                columns[:, :take] += centroids[label][:, None]
            sequences.append(
                FeatureSequence(
                    features=columns.astype(np.float32),
                    label=label,
                    region_id=f"c{label}_{index}",
                )
            )
    return sequences
