"""Stage orchestration over an on-disk workspace.

Each stage reads the artifacts of the previous one, writes its own under
a fixed directory layout, and records a reproducibility entry (config
snapshot, seed, toolkit version) under ``runs/``. Timestamps live only in
those run records, so the metric reports under ``reports/`` are
byte-identical across reruns with the same inputs.

  regions/   per-region normalized image + mask + index.json
  tiles/     per-region patch rasters + scan manifest + index.json
  features/  features.json + one CSV per region
  model/     checkpoint.npz + training.json
  reports/   evaluate.json/.txt, cross_validate.json/.txt
  runs/      one record per stage execution
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
from PIL import Image

from . import __version__
from .annotations import parse_annotations, region_bounding_box
from .bilstm import init_model, load_model, save_model
from .config import PipelineConfig
from .errors import DataError, ValidationError
from .evaluation import ModelSpec, evaluate_model, split_dataset
from . import evaluation
from .features import (
    FeatureSequence,
    ToyBlockStatsExtractor,
    build_sequence,
    load_feature_manifest,
    write_feature_manifest,
)
from .regions import normalize_rotation, rasterize_mask
from .scanning import Patch, grid_dims, scan_order, tile_region
from . import training


@dataclass
class Workspace:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def regions_dir(self) -> Path:
        return self.root / "regions"

    @property
    def regions_index(self) -> Path:
        return self.regions_dir / "index.json"

    @property
    def tiles_dir(self) -> Path:
        return self.root / "tiles"

    @property
    def tiles_index(self) -> Path:
        return self.tiles_dir / "index.json"

    @property
    def features_dir(self) -> Path:
        return self.root / "features"

    @property
    def features_manifest(self) -> Path:
        return self.features_dir / "features.json"

    @property
    def model_dir(self) -> Path:
        return self.root / "model"

    @property
    def checkpoint(self) -> Path:
        return self.model_dir / "checkpoint.npz"

    @property
    def training_record(self) -> Path:
        return self.model_dir / "training.json"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def runs_dir(self) -> Path:
        return self.root / "runs"


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _read_json(path: Path, producer: str) -> dict:
    if not path.exists():
        raise ValidationError(
            f"{path} not found; run the {producer} stage first"
        )
    return json.loads(path.read_text())


def _write_run_record(ws: Workspace, stage: str, config: PipelineConfig,
                      inputs: dict, outputs: dict) -> None:
    record = {
        "stage": stage,
        "toolkit_version": __version__,
        "seed": config.seed,
        "config": config.as_dict(),
        "inputs": inputs,
        "outputs": outputs,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    _write_json(ws.runs_dir / f"{stage}.json", record)


def load_slide_image(path) -> np.ndarray:
    """Slide raster as HxWx3 uint8; PNG/TIFF via Pillow, or .raw + sidecar.

    The raw form is flat 8-bit pixel data with a JSON sidecar next to it
    (same name, .json suffix) holding height, width and channels.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"image file not found: {path}")
    if path.suffix.lower() == ".raw":
        sidecar = path.with_suffix(".json")
        if not sidecar.exists():
            raise ValidationError(f"raw image {path} is missing its sidecar {sidecar}")
        dims = json.loads(sidecar.read_text())
        try:
            h, w, ch = int(dims["height"]), int(dims["width"]), int(dims.get("channels", 3))
        except KeyError as exc:
            raise DataError(f"sidecar {sidecar} is missing {exc}") from exc
        data = np.fromfile(path, dtype=np.uint8)
        if data.size != h * w * ch:
            raise DataError(
                f"raw image {path} holds {data.size} bytes, expected {h * w * ch}"
            )
        image = data.reshape(h, w, ch)
        if ch == 1:
            image = np.repeat(image, 3, axis=2)
        return image[:, :, :3]
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _save_png(path: Path, array: np.ndarray) -> None:
    Image.fromarray(array).save(path)


def _load_png(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img)


def extract_regions(config: PipelineConfig, workspace, xml_path, image_path) -> dict:
    """Parse annotations, rasterize, deskew, write one directory per region."""
    ws = Workspace(Path(workspace))
    xml_path = Path(xml_path)
    if not xml_path.exists():
        raise ValidationError(f"annotation file not found: {xml_path}")
    report = parse_annotations(xml_path.read_bytes(), known_labels=config.classes)
    slide = load_slide_image(image_path)
    slide_h, slide_w = slide.shape[:2]

    ws.regions_dir.mkdir(parents=True, exist_ok=True)
    entries: List[dict] = []
    skipped: List[dict] = []
    errors: List[str] = list(report.errors)
    used_ids: Dict[str, int] = {}

    for record in report.records:
        region_id = f"r{record.region_id}"
        if region_id in used_ids:
            used_ids[region_id] += 1
            region_id = f"{region_id}_{used_ids[region_id]}"
        else:
            used_ids[region_id] = 0
        if not record.label_known:
            skipped.append(
                {"id": region_id, "label": record.label, "reason": "label not in configured classes"}
            )
            continue
        bbox = region_bounding_box(record)
        if bbox.min_x < 0 or bbox.min_y < 0 or bbox.max_x > slide_w or bbox.max_y > slide_h:
            errors.append(
                f"region {region_id}: polygon bounds {tuple(bbox)} fall outside "
                f"the {slide_h}x{slide_w} image"
            )
            continue
        try:
            mask = rasterize_mask(record, bbox)
            crop = slide[bbox.min_y : bbox.max_y, bbox.min_x : bbox.max_x]
            normalized = normalize_rotation(crop, mask, config.patch_side)
        except DataError as exc:
            errors.append(f"region {region_id}: {exc}")
            continue

        region_dir = ws.regions_dir / f"region_{region_id}"
        region_dir.mkdir(parents=True, exist_ok=True)
        _save_png(region_dir / "image.png", normalized.image)
        _save_png(region_dir / "mask.png", normalized.mask.bits.astype(np.uint8) * 255)
        meta = {
            "region_id": region_id,
            "label": record.label,
            "label_index": config.classes.index(record.label),
            "rotation_deg": normalized.rotation_deg,
            "degenerate": normalized.degenerate,
            "bbox": list(normalized.bbox),
            "height": int(normalized.image.shape[0]),
            "width": int(normalized.image.shape[1]),
            "area_px": record.area_px,
        }
        _write_json(region_dir / "region.json", meta)
        entries.append({**meta, "dir": region_dir.name})

    if not entries:
        raise DataError(
            f"no usable regions in {xml_path}: "
            + ("; ".join(errors) if errors else "all regions skipped")
        )

    index = {
        "classes": list(config.classes),
        "patch_side": config.patch_side,
        "regions": entries,
        "skipped": skipped,
        "errors": errors,
    }
    _write_json(ws.regions_index, index)
    summary = {
        "stage": "extract-regions",
        "regions": len(entries),
        "skipped": len(skipped),
        "errors": len(errors),
        "index": str(ws.regions_index),
    }
    _write_run_record(ws, "extract-regions", config,
                      {"xml": str(xml_path), "image": str(image_path)},
                      summary)
    return summary


def tile(config: PipelineConfig, workspace) -> dict:
    """Cut each normalized region into ordered patches on disk."""
    ws = Workspace(Path(workspace))
    index = _read_json(ws.regions_index, "extract-regions")
    patch_side = int(index.get("patch_side", config.patch_side))
    entries = []
    total_patches = 0
    for region in index["regions"]:
        region_dir = ws.regions_dir / region["dir"]
        image = _load_png(region_dir / "image.png")
        dims = grid_dims(image.shape[0], image.shape[1], patch_side)
        order = scan_order(dims, config.scan_strategy)
        patches = tile_region(image, order, patch_side)
        out_dir = ws.tiles_dir / region["dir"]
        out_dir.mkdir(parents=True, exist_ok=True)
        files = []
        for patch in patches:
            r, c = patch.grid_pos
            name = f"patch_{patch.sequence_pos:04d}_r{r:02d}_c{c:02d}.png"
            _save_png(out_dir / name, patch.pixels)
            files.append(name)
        manifest = {
            "region_id": region["region_id"],
            "label": region["label"],
            "label_index": region["label_index"],
            "strategy": config.scan_strategy,
            "patch_side": patch_side,
            "rows": dims.rows,
            "cols": dims.cols,
            "visits": [list(v) for v in order.visits],
            "files": files,
        }
        _write_json(out_dir / "manifest.json", manifest)
        entries.append(
            {
                "id": region["region_id"],
                "dir": region["dir"],
                "label": region["label"],
                "label_index": region["label_index"],
                "rows": dims.rows,
                "cols": dims.cols,
                "m": len(patches),
            }
        )
        total_patches += len(patches)
    tiles_index = {
        "strategy": config.scan_strategy,
        "patch_side": patch_side,
        "regions": entries,
    }
    _write_json(ws.tiles_index, tiles_index)
    summary = {
        "stage": "tile",
        "regions": len(entries),
        "patches": total_patches,
        "strategy": config.scan_strategy,
        "index": str(ws.tiles_index),
    }
    _write_run_record(ws, "tile", config, {"regions_index": str(ws.regions_index)}, summary)
    return summary


def extract_features(config: PipelineConfig, workspace) -> dict:
    """Turn ordered patches into per-region feature sequences."""
    ws = Workspace(Path(workspace))
    if config.extractor == "manifest":
        if not ws.features_manifest.exists():
            raise ValidationError(
                f"{ws.features_manifest} not found; with extractor=manifest the "
                "feature files must be supplied by an external extractor"
            )
        sequences = load_feature_manifest(ws.features_manifest)
        summary = {
            "stage": "extract-features",
            "regions": len(sequences),
            "dim": sequences[0].dim if sequences else 0,
            "extractor": "manifest",
            "manifest": str(ws.features_manifest),
        }
        _write_run_record(ws, "extract-features", config,
                          {"manifest": str(ws.features_manifest)}, summary)
        return summary

    index = _read_json(ws.tiles_index, "tile")
    extractor = ToyBlockStatsExtractor()
    sequences = []
    for region in index["regions"]:
        manifest = json.loads((ws.tiles_dir / region["dir"] / "manifest.json").read_text())
        patches = []
        for seq_pos, (name, visit) in enumerate(zip(manifest["files"], manifest["visits"])):
            pixels = _load_png(ws.tiles_dir / region["dir"] / name)
            patches.append(Patch(pixels=pixels, grid_pos=tuple(visit), sequence_pos=seq_pos))
        sequences.append(
            build_sequence(patches, extractor, region["label_index"], region["id"])
        )
    manifest_path = write_feature_manifest(sequences, ws.features_dir, classes=config.classes)
    summary = {
        "stage": "extract-features",
        "regions": len(sequences),
        "dim": sequences[0].dim if sequences else 0,
        "extractor": config.extractor,
        "manifest": str(manifest_path),
    }
    _write_run_record(ws, "extract-features", config,
                      {"tiles_index": str(ws.tiles_index)}, summary)
    return summary


def _load_dataset(ws: Workspace, class_count: int) -> List[FeatureSequence]:
    if not ws.features_manifest.exists():
        raise ValidationError(
            f"feature manifest not found at {ws.features_manifest}; "
            "run the extract-features stage first"
        )
    sequences = load_feature_manifest(ws.features_manifest)
    for seq in sequences:
        if not 0 <= seq.label < class_count:
            raise DataError(
                f"region {seq.region_id}: label {seq.label} outside the "
                f"{class_count} configured classes"
            )
    return sequences


def train(config: PipelineConfig, workspace) -> dict:
    """Fit the sequence classifier on the train split; checkpoint the best epoch."""
    ws = Workspace(Path(workspace))
    sequences = _load_dataset(ws, config.class_count)
    plan = split_dataset(
        sequences,
        ratios=config.ratios,
        seed=config.seed,
        stratified=config.stratified,
        class_count=config.class_count,
    )
    by_id = {seq.region_id: seq for seq in sequences}
    train_set = [by_id[i] for i in plan.train]
    val_set = [by_id[i] for i in plan.validation]
    model = init_model(
        input_size=sequences[0].dim,
        hidden_units=config.hidden_units,
        class_count=config.class_count,
        dropout_rate=config.train.dropout_rate,
        seed=config.seed,
        bidirectional=config.bidirectional,
    )
    model, history = training.train(model, train_set, val_set, config.train)
    ws.model_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, ws.checkpoint)
    record = {
        "config": config.as_dict(),
        "input_size": sequences[0].dim,
        "class_count": config.class_count,
        "split": {
            "seed": plan.seed,
            "stratified": plan.stratified,
            "train": plan.train,
            "validation": plan.validation,
            "test": plan.test,
        },
        "history": {
            "stop_reason": history.stop_reason,
            "best_epoch": history.best_epoch,
            "epochs": [
                {
                    "epoch": e.epoch,
                    "train_loss": e.train_loss,
                    "val_loss": e.val_loss,
                    "val_accuracy": e.val_accuracy,
                }
                for e in history.epochs
            ],
        },
    }
    _write_json(ws.training_record, record)
    summary = {
        "stage": "train",
        "epochs_run": len(history.epochs),
        "best_epoch": history.best_epoch,
        "stop_reason": history.stop_reason,
        "train_size": len(train_set),
        "validation_size": len(val_set),
        "test_size": len(plan.test),
        "checkpoint": str(ws.checkpoint),
    }
    _write_run_record(ws, "train", config, {"manifest": str(ws.features_manifest)}, summary)
    return summary


def _render_report_text(report: dict, classes: Sequence[str]) -> str:
    width = max(len("class"), *(len(c) for c in classes))

    def cell(value) -> str:
        return "n/a" if value is None else f"{value:.4f}"

    lines = [f"{'class':<{width}}  sensitivity  specificity"]
    for idx, name in enumerate(classes):
        se = cell(report["sensitivity"][idx])
        sp = cell(report["specificity"][idx])
        lines.append(f"{name:<{width}}  {se:>11}  {sp:>11}")
    lines.append("")
    lines.append(f"accuracy: {cell(report['accuracy'])}  (n = {report['support']})")
    return "\n".join(lines) + "\n"


def evaluate(config: PipelineConfig, workspace) -> dict:
    """Score the held-out test split with the trained checkpoint."""
    ws = Workspace(Path(workspace))
    if not ws.checkpoint.exists():
        raise ValidationError(
            f"model checkpoint not found at {ws.checkpoint}; run the train stage first"
        )
    training_record = _read_json(ws.training_record, "train")
    classes = training_record["config"]["classes"]
    sequences = _load_dataset(ws, len(classes))
    by_id = {seq.region_id: seq for seq in sequences}
    test_ids = training_record["split"]["test"]
    missing = [i for i in test_ids if i not in by_id]
    if missing:
        raise DataError(f"test regions missing from the feature manifest: {missing}")
    if not test_ids:
        raise DataError("recorded test split is empty; nothing to evaluate")
    model = load_model(ws.checkpoint)
    report = evaluate_model(model, [by_id[i] for i in test_ids])
    payload = {**report.as_dict(), "classes": list(classes), "support": report.confusion.total}
    ws.reports_dir.mkdir(parents=True, exist_ok=True)
    _write_json(ws.reports_dir / "evaluate.json", payload)
    (ws.reports_dir / "evaluate.txt").write_text(_render_report_text(payload, classes))
    summary = {
        "stage": "evaluate",
        "accuracy": payload["accuracy"],
        "support": payload["support"],
        "report": str(ws.reports_dir / "evaluate.json"),
    }
    _write_run_record(ws, "evaluate", config,
                      {"checkpoint": str(ws.checkpoint)}, summary)
    return summary


def cross_validate(config: PipelineConfig, workspace) -> dict:
    """K-fold cross-validation from the feature manifest; fresh model per fold."""
    ws = Workspace(Path(workspace))
    sequences = _load_dataset(ws, config.class_count)
    spec = ModelSpec(hidden_units=config.hidden_units, bidirectional=config.bidirectional)
    reports, aggregate, histories = evaluation.cross_validate(
        sequences,
        config.class_count,
        spec,
        config.train,
        k=config.folds,
        stratified=config.stratified,
        val_fraction=config.val_fraction,
    )
    payload = {
        "classes": list(config.classes),
        "folds": [
            {**r.as_dict(), "support": r.confusion.total} for r in reports
        ],
        "aggregate": aggregate,
        "histories": [
            {"stop_reason": h.stop_reason, "best_epoch": h.best_epoch, "epochs_run": len(h.epochs)}
            for h in histories
        ],
    }
    ws.reports_dir.mkdir(parents=True, exist_ok=True)
    _write_json(ws.reports_dir / "cross_validate.json", payload)
    lines = [
        f"fold {i}: accuracy {r.accuracy:.4f} (n = {r.confusion.total})"
        for i, r in enumerate(reports)
    ]
    mean = aggregate["accuracy_mean"]
    se = aggregate["accuracy_se"]
    lines.append("")
    lines.append(f"mean accuracy: {mean:.4f} +/- {se:.4f} (SE over {len(reports)} folds)")
    (ws.reports_dir / "cross_validate.txt").write_text("\n".join(lines) + "\n")
    summary = {
        "stage": "cross-validate",
        "folds": len(reports),
        "mean_accuracy": mean,
        "standard_error": se,
        "report": str(ws.reports_dir / "cross_validate.json"),
    }
    _write_run_record(ws, "cross-validate", config,
                      {"manifest": str(ws.features_manifest)}, summary)
    return summary


def run_all(config: PipelineConfig, workspace, xml_path, image_path) -> dict:
    """Chain every stage with one config; equals running them one by one."""
    stages = {
        "extract-regions": extract_regions(config, workspace, xml_path, image_path),
        "tile": tile(config, workspace),
        "extract-features": extract_features(config, workspace),
        "train": train(config, workspace),
        "evaluate": evaluate(config, workspace),
    }
    if config.folds >= 2:
        stages["cross-validate"] = cross_validate(config, workspace)
    return {"stage": "run-all", "stages": stages}
