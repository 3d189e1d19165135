"""Per-patch feature extraction and D-by-m sequence assembly.

A region's ordered patches become one matrix with a column per patch;
the region label applies to the whole sequence. Extraction is pluggable:
the built-in toy extractor computes block statistics, and externally
computed features (e.g. 1024-dim CNN descriptors) come in through a
JSON + CSV manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import DataError, ValidationError
from .scanning import Patch

TOY_BLOCKS = 4  # 4x4 block partition -> 96 values for an RGB patch


@dataclass
class FeatureSequence:
    """One training example: D x m feature matrix plus its region label."""

    features: np.ndarray  # shape (D, m), column t = feature of patch t
    label: int
    region_id: str

    @property
    def dim(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]


class ToyBlockStatsExtractor:
    """Deterministic stand-in for a CNN descriptor.

    Splits the patch into a 4x4 grid of blocks and emits per-block,
    per-channel mean/255 and population std/128, giving D = 96 for RGB.
    Feature order: block row, then block column, then channel, then
    (mean, std).
    """

    name = "toy"

    def __init__(self, blocks: int = TOY_BLOCKS, channels: int = 3):
        self.blocks = blocks
        self.dim = blocks * blocks * channels * 2

    def extract(self, patch: Patch) -> np.ndarray:
        pixels = patch.pixels
        if pixels.ndim != 3:
            raise ValidationError(
                f"toy extractor expects a 3-channel patch, got shape {pixels.shape}"
            )
        h, w, channels = pixels.shape
        if h % self.blocks or w % self.blocks:
            raise ValidationError(
                f"patch {h}x{w} does not split into {self.blocks}x{self.blocks} blocks"
            )
        bh, bw = h // self.blocks, w // self.blocks
        data = pixels.astype(np.float64)
        grid = data.reshape(self.blocks, bh, self.blocks, bw, channels)
        means = grid.mean(axis=(1, 3)) / 255.0  # (blocks, blocks, channels)
        stds = grid.std(axis=(1, 3)) / 128.0
        stacked = np.stack([means, stds], axis=-1)
        return stacked.reshape(-1).astype(np.float32)


def build_sequence(
    patches: Sequence[Patch], extractor, label: int, region_id: str = ""
) -> FeatureSequence:
    """Stack per-patch features as columns, in the order given."""
    if len(patches) < 1:
        raise ValidationError("cannot build a feature sequence from zero patches")
    columns = []
    for patch in patches:
        vec = np.asarray(extractor.extract(patch))
        if vec.ndim != 1 or vec.shape[0] != extractor.dim:
            raise ValidationError(
                f"extractor {extractor.name!r} returned shape {vec.shape}, expected ({extractor.dim},)"
            )
        if not np.all(np.isfinite(vec)):
            raise DataError(
                f"region {region_id or '?'}: non-finite feature from patch {patch.sequence_pos}"
            )
        columns.append(vec.astype(np.float32))
    return FeatureSequence(
        features=np.stack(columns, axis=1), label=int(label), region_id=str(region_id)
    )


def write_feature_manifest(
    sequences: List[FeatureSequence],
    directory: Path,
    classes: Optional[List[str]] = None,
) -> Path:
    """Write one CSV per region plus a JSON index; returns the index path.

    CSV layout: D rows, m columns, 9-significant-digit decimals (enough
    for single-precision values to round-trip exactly).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dims = {seq.dim for seq in sequences}
    if len(dims) > 1:
        raise DataError(f"mixed feature dimensions across regions: {sorted(dims)}")
    regions = []
    for seq in sequences:
        filename = f"features_{seq.region_id}.csv"
        np.savetxt(directory / filename, seq.features, delimiter=",", fmt="%.9g")
        regions.append(
            {"id": seq.region_id, "label": seq.label, "m": seq.m, "file": filename}
        )
    manifest: Dict = {"dim": dims.pop() if dims else 0, "regions": regions}
    if classes is not None:
        manifest["classes"] = list(classes)
    path = directory / "features.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_feature_manifest(path: Path) -> List[FeatureSequence]:
    """Load sequences listed in a manifest, enforcing one D for the dataset."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"feature manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"feature manifest {path} is not valid JSON: {exc}") from exc
    dim = int(manifest.get("dim", 0))
    sequences: List[FeatureSequence] = []
    for entry in manifest.get("regions", []):
        region_id = str(entry["id"])
        file_path = path.parent / entry["file"]
        if not file_path.exists():
            raise DataError(f"region {region_id}: feature file missing: {file_path}")
        matrix = np.loadtxt(file_path, delimiter=",", dtype=np.float32, ndmin=2)
        if matrix.shape[0] != dim:
            raise DataError(
                f"region {region_id}: feature dimension {matrix.shape[0]} "
                f"does not match dataset dimension {dim}"
            )
        if matrix.shape[1] != int(entry["m"]):
            raise DataError(
                f"region {region_id}: manifest says m={entry['m']} but file has {matrix.shape[1]} columns"
            )
        bad = np.argwhere(~np.isfinite(matrix))
        if bad.size:
            r, c = bad[0]
            raise DataError(f"region {region_id}: non-finite feature at ({r}, {c})")
        sequences.append(
            FeatureSequence(features=matrix, label=int(entry["label"]), region_id=region_id)
        )
    return sequences
