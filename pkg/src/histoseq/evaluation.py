"""Metrics, data splits, majority voting, and k-fold cross-validation.

Sensitivity and specificity are one-vs-rest per class; denominators that
come out zero yield None rather than a silent 0 so small-fold reports
stay honest. Splits are seeded and stratified by default, falling back
to unstratified (with a warning) when a class is too thin.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bilstm import init_model
from .errors import ValidationError
from .features import FeatureSequence
from .training import TrainConfig, TrainHistory, classify, train


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C), rows = true class, cols = predicted

    @property
    def class_count(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(
    predictions: Sequence[int], labels: Sequence[int], class_count: int
) -> ConfusionMatrix:
    if len(predictions) != len(labels):
        raise ValidationError(
            f"got {len(predictions)} predictions for {len(labels)} labels"
        )
    counts = np.zeros((class_count, class_count), dtype=np.int64)
    for pred, true in zip(predictions, labels):
        if not (0 <= true < class_count and 0 <= pred < class_count):
            raise ValidationError(f"class index out of range: pred={pred}, true={true}")
        counts[true, pred] += 1
    return ConfusionMatrix(counts=counts)


def sensitivity(cm: ConfusionMatrix, cls: int) -> Optional[float]:
    """TP / (TP + FN) for one class against the rest; None when undefined."""
    tp = int(cm.counts[cls, cls])
    fn = int(cm.counts[cls].sum()) - tp
    if tp + fn == 0:
        return None
    return tp / (tp + fn)


def specificity(cm: ConfusionMatrix, cls: int) -> Optional[float]:
    """TN / (TN + FP) for one class against the rest; None when undefined."""
    fp = int(cm.counts[:, cls].sum()) - int(cm.counts[cls, cls])
    tn = cm.total - int(cm.counts[cls].sum()) - fp
    if tn + fp == 0:
        return None
    return tn / (tn + fp)


def accuracy(cm: ConfusionMatrix) -> Optional[float]:
    if cm.total == 0:
        return None
    return float(np.trace(cm.counts)) / cm.total


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: Optional[float]
    sensitivity: List[Optional[float]]
    specificity: List[Optional[float]]
    fold_id: Optional[int] = None

    def as_dict(self) -> dict:
        return {
            "fold_id": self.fold_id,
            "confusion_matrix": self.confusion.counts.tolist(),
            "accuracy": self.accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
        }


def evaluate_predictions(
    predictions: Sequence[int],
    labels: Sequence[int],
    class_count: int,
    fold_id: Optional[int] = None,
) -> EvalReport:
    cm = confusion_matrix(predictions, labels, class_count)
    return EvalReport(
        confusion=cm,
        accuracy=accuracy(cm),
        sensitivity=[sensitivity(cm, c) for c in range(class_count)],
        specificity=[specificity(cm, c) for c in range(class_count)],
        fold_id=fold_id,
    )


def evaluate_model(model, dataset: Sequence[FeatureSequence], fold_id=None) -> EvalReport:
    predictions = [classify(model, seq) for seq in dataset]
    labels = [seq.label for seq in dataset]
    return evaluate_predictions(predictions, labels, model.class_count, fold_id=fold_id)


@dataclass
class SplitPlan:
    seed: int
    train: List[str] = field(default_factory=list)
    validation: List[str] = field(default_factory=list)
    test: List[str] = field(default_factory=list)
    folds: List[List[str]] = field(default_factory=list)
    stratified: bool = True


def _by_class(dataset: Sequence[FeatureSequence]) -> Dict[int, List[str]]:
    groups: Dict[int, List[str]] = {}
    for seq in dataset:
        groups.setdefault(seq.label, []).append(seq.region_id)
    return groups


def split_dataset(
    dataset: Sequence[FeatureSequence],
    ratios: Tuple[float, float, float] = (0.7, 0.15, 0.15),
    seed: int = 0,
    stratified: bool = True,
    class_count: Optional[int] = None,
) -> SplitPlan:
    """Seeded shuffle then contiguous train/validation/test partition."""
    if len(dataset) < 3:
        raise ValidationError(f"need at least 3 items to split, got {len(dataset)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"split ratios must sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    if stratified and class_count is not None:
        present = _by_class(dataset)
        for cls in range(class_count):
            if len(present.get(cls, [])) == 0:
                warnings.warn(
                    f"class {cls} has no members; falling back to unstratified split"
                )
                stratified = False
                break
    plan = SplitPlan(seed=seed, stratified=stratified)
    groups = _by_class(dataset) if stratified else {0: [s.region_id for s in dataset]}
    for label in sorted(groups):
        ids = sorted(groups[label])
        order = rng.permutation(len(ids))
        shuffled = [ids[i] for i in order]
        n = len(shuffled)
        cut1 = int(round(n * ratios[0]))
        cut2 = min(n, cut1 + int(round(n * ratios[1])))
        plan.train.extend(shuffled[:cut1])
        plan.validation.extend(shuffled[cut1:cut2])
        plan.test.extend(shuffled[cut2:])
    return plan


def k_fold(
    dataset: Sequence[FeatureSequence],
    k: int = 10,
    seed: int = 0,
    stratified: bool = True,
    class_count: Optional[int] = None,
) -> SplitPlan:
    """Partition region ids into k folds of near-equal size.

    Stratified dealing keeps per-class counts within one of each other
    across folds; it requires every class to hold at least k members and
    otherwise falls back to plain shuffled chunks with a warning.
    """
    n = len(dataset)
    if k < 2 or n < k:
        raise ValidationError(f"need 2 <= k <= dataset size; got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    groups = _by_class(dataset)
    if class_count is not None:
        for cls in range(class_count):
            if len(groups.get(cls, [])) == 0:
                warnings.warn(
                    f"class {cls} has no members; falling back to unstratified folds"
                )
                stratified = False
    if stratified and any(len(ids) < k for ids in groups.values()):
        warnings.warn(
            f"some class has fewer than {k} members; falling back to unstratified folds"
        )
        stratified = False

    plan = SplitPlan(seed=seed, stratified=stratified, folds=[[] for _ in range(k)])
    if stratified:
        cursor = 0
        for label in sorted(groups):
            ids = sorted(groups[label])
            order = rng.permutation(len(ids))
            for i in order:
                plan.folds[cursor % k].append(ids[i])
                cursor += 1
    else:
        ids = sorted(seq.region_id for seq in dataset)
        order = rng.permutation(n)
        shuffled = [ids[i] for i in order]
        for fold, chunk in enumerate(np.array_split(np.arange(n), k)):
            plan.folds[fold] = [shuffled[i] for i in chunk]
    return plan


def majority_vote(
    patch_predictions: Sequence[int],
    probabilities: Optional[Sequence[Sequence[float]]] = None,
) -> int:
    """Modal class; ties go to the largest summed probability, then lowest index."""
    if len(patch_predictions) == 0:
        raise ValidationError("majority vote needs at least one prediction")
    tallies: Dict[int, int] = {}
    for pred in patch_predictions:
        tallies[pred] = tallies.get(pred, 0) + 1
    top = max(tallies.values())
    tied = sorted(cls for cls, count in tallies.items() if count == top)
    if len(tied) == 1 or probabilities is None:
        return tied[0]
    sums = {cls: 0.0 for cls in tied}
    for pred, probs in zip(patch_predictions, probabilities):
        if pred in sums:
            sums[pred] += float(probs[pred])
    best = max(sums.values())
    return min(cls for cls, value in sums.items() if value == best)


def standard_error(values: Sequence[float]) -> float:
    """Sample standard deviation over sqrt(n); 0 for a single value."""
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))


def aggregate_reports(reports: List[EvalReport]) -> dict:
    accuracies = [r.accuracy for r in reports if r.accuracy is not None]
    class_count = reports[0].confusion.class_count if reports else 0
    out = {
        "folds": len(reports),
        "accuracy_mean": float(np.mean(accuracies)) if accuracies else None,
        "accuracy_se": standard_error(accuracies),
        "sensitivity_mean": [],
        "sensitivity_se": [],
        "specificity_mean": [],
        "specificity_se": [],
    }
    for cls in range(class_count):
        for metric in ("sensitivity", "specificity"):
            values = [
                getattr(r, metric)[cls]
                for r in reports
                if getattr(r, metric)[cls] is not None
            ]
            out[f"{metric}_mean"].append(float(np.mean(values)) if values else None)
            out[f"{metric}_se"].append(standard_error(values) if values else None)
    return out


@dataclass
class ModelSpec:
    hidden_units: int = 32
    bidirectional: bool = True


def _carve_validation(
    train_pool: List[FeatureSequence], fraction: float, seed: int
) -> Tuple[List[FeatureSequence], List[FeatureSequence]]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(train_pool))
    count = max(1, int(round(len(train_pool) * fraction))) if len(train_pool) > 1 else 0
    val_idx = set(order[:count].tolist())
    train = [train_pool[i] for i in range(len(train_pool)) if i not in val_idx]
    val = [train_pool[i] for i in sorted(val_idx)]
    return train, val


def cross_validate(
    dataset: Sequence[FeatureSequence],
    class_count: int,
    spec: ModelSpec,
    config: TrainConfig,
    k: int = 10,
    stratified: bool = True,
    val_fraction: float = 0.15,
) -> Tuple[List[EvalReport], dict, List[TrainHistory]]:
    """Train one fresh model per fold; returns per-fold reports + aggregate.

    Fold i trains with seed config.seed + i (model init and shuffling),
    leaving each fold an independent, reproducible experiment.
    """
    plan = k_fold(dataset, k=k, seed=config.seed, stratified=stratified, class_count=class_count)
    by_id = {seq.region_id: seq for seq in dataset}
    dim = dataset[0].dim
    reports: List[EvalReport] = []
    histories: List[TrainHistory] = []
    for fold_id, fold_ids in enumerate(plan.folds):
        fold_seed = config.seed + fold_id
        test_ids = set(fold_ids)
        test_set = [by_id[r] for r in fold_ids]
        pool = [by_id[r] for ids in plan.folds for r in ids if r not in test_ids]
        train_set, val_set = _carve_validation(pool, val_fraction, fold_seed)
        fold_config = replace(config, seed=fold_seed)
        model = init_model(
            input_size=dim,
            hidden_units=spec.hidden_units,
            class_count=class_count,
            dropout_rate=fold_config.dropout_rate,
            seed=fold_seed,
            bidirectional=spec.bidirectional,
        )
        model, history = train(model, train_set, val_set, fold_config)
        reports.append(evaluate_model(model, test_set, fold_id=fold_id))
        histories.append(history)
    return reports, aggregate_reports(reports), histories
