"""
Repeated stratified k-fold evaluation and the feature-set ablation.

Augmentation happens per split on the training portion only; test folds
always hold original, unperturbed samples.
"""

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .config import classifier_settings, config_value, resolve
from .errors import EmptyClass, FallRiskError, FoldTrainingError, InvalidParams, InvariantViolation, TooFewSamples
from .feature_engineering import (
    DEFAULT_NOISE_SIGMA,
    DatasetRecord,
    FeatureSet,
    Label,
    LabeledSample,
    balance_dataset,
    samples_from_records,
    stack_features,
)
from .gbdt_classifier import Hyperparams, fit, predict_proba_batch
from .geometry_core import DEFAULT_SIDE_CONFIDENCE

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CvConfig:
    k: int = 10
    repeats: int = 10
    seed: int = 42
    feature_set: FeatureSet = FeatureSet.KEYPOINTS_KNEE_HEAD
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    threshold: float = 0.5
    min_side_confidence: float = DEFAULT_SIDE_CONFIDENCE

    def __post_init__(self):
        if self.k < 2:
            raise InvalidParams(f"k must be >= 2, got {self.k}")
        if self.repeats < 1:
            raise InvalidParams(f"repeats must be >= 1, got {self.repeats}")
        if self.seed < 0:
            raise InvalidParams(f"seed must be >= 0, got {self.seed}")
        if self.noise_sigma < 0:
            raise InvalidParams(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @classmethod
    def from_config(
        cls,
        config: Dict[str, Any],
        feature_set: FeatureSet,
        k: Optional[int] = None,
        repeats: Optional[int] = None,
        seed: Optional[int] = None,
        noise_sigma: Optional[float] = None,
        **classifier_overrides: Any
    ) -> 'CvConfig':
        """Settings from the loaded config; non-None arguments take precedence."""
        return cls(
            k=resolve(k, config, 'evaluation.folds'),
            repeats=resolve(repeats, config, 'evaluation.repeats'),
            seed=resolve(seed, config, 'evaluation.seed'),
            feature_set=feature_set,
            hyperparams=Hyperparams.from_dict(classifier_settings(config, **classifier_overrides)),
            noise_sigma=resolve(noise_sigma, config, 'features.noise_sigma'),
            min_side_confidence=config_value(config, 'geometry.min_side_confidence', DEFAULT_SIDE_CONFIDENCE),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'k': self.k,
            'repeats': self.repeats,
            'seed': self.seed,
            'feature_set': self.feature_set.value,
            'hyperparams': self.hyperparams.to_dict(),
            'noise_sigma': self.noise_sigma,
            'threshold': self.threshold,
            'min_side_confidence': self.min_side_confidence,
        }


@dataclass(frozen=True)
class FoldResult:
    repeat: int
    fold: int
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int
    n_train: int
    n_test: int


@dataclass
class CvReport:
    """
    Attributes:
        mean_accuracy: Mean of per_repeat_means
        per_fold_accuracies: Test accuracy of every split, (repeat, fold) order
        per_repeat_means: Mean fold accuracy of each repeat
        confusion_totals: Summed (tp, fp, tn, fn) over all test evaluations
        pooled_accuracy: Correct test predictions / all test predictions
        std_accuracy: Std of the per-fold accuracies
        n_samples: Frames usable for the feature set
        n_skipped: Frames dropped because landmarks could not be resolved
        partition_digest: SHA-256 of every split's test source ids
    """

    feature_set: FeatureSet
    mean_accuracy: float
    per_fold_accuracies: List[float]
    per_repeat_means: List[float]
    confusion_totals: Tuple[int, int, int, int]
    pooled_accuracy: float
    std_accuracy: float
    n_samples: int
    n_skipped: int
    partition_digest: str
    feature_names: List[str]
    config: Dict[str, Any]
    folds: List[FoldResult] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        tp, fp, tn, fn = self.confusion_totals
        return {
            'feature_set': self.feature_set.value,
            'mean_accuracy': self.mean_accuracy,
            'pooled_accuracy': self.pooled_accuracy,
            'std_accuracy': self.std_accuracy,
            'per_repeat_means': self.per_repeat_means,
            'per_fold_accuracies': self.per_fold_accuracies,
            'confusion_totals': {'tp': tp, 'fp': fp, 'tn': tn, 'fn': fn},
            'n_samples': self.n_samples,
            'n_skipped': self.n_skipped,
            'partition_digest': self.partition_digest,
            'feature_names': self.feature_names,
            'config': self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'


def _targets(labels: Sequence[Any]) -> np.ndarray:
    return np.array([l.target if isinstance(l, Label) else int(l) for l in labels], dtype=int)


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def kfold_split(
    labels: Sequence[Any],
    k: int,
    seed: int,
    repeat_index: int = 0
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Stratified k-fold partition.

    Each class is shuffled with a generator seeded by (seed, repeat_index,
    class) and dealt round-robin into the folds. The second class continues
    dealing where the first stopped, so overall fold sizes also differ by at
    most one.

    Args:
        labels: Label per sample (Label or 0/1)
        k: Number of folds
        seed: Base seed
        repeat_index: Repeat number

    Returns:
        k (train indices, test indices) pairs, indices sorted

    Raises:
        TooFewSamples: If a class has fewer than k samples
    """
    if k < 2:
        raise InvalidParams(f"k must be >= 2, got {k}")
    y = _targets(labels)
    fold_of = np.empty(len(y), dtype=int)
    offset = 0
    for cls in (1, 0):
        members = np.flatnonzero(y == cls)
        if len(members) < k:
            raise TooFewSamples(f"Class {cls} has {len(members)} samples, fewer than k={k}")
        shuffled = np.random.default_rng([seed, repeat_index, cls]).permutation(members)
        fold_of[shuffled] = (np.arange(len(shuffled)) + offset) % k
        offset = (offset + len(shuffled)) % k
    return [(np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f)) for f in range(k)]


def audit_leakage(training: Sequence[LabeledSample], train_ids: set, test_ids: set):
    """
    Check that augmented duplicates come only from the training portion.

    Raises:
        InvariantViolation: If a duplicate's source id is absent from the
            training portion or present in the test fold
    """
    for sample in training:
        if not sample.augmented:
            continue
        if sample.source_id in test_ids or sample.source_id not in train_ids:
            raise InvariantViolation(f"Augmented sample '{sample.source_id}' leaked across the split")


def cross_validate_samples(
    samples: Sequence[LabeledSample],
    cfg: CvConfig,
    n_skipped: int = 0,
    progress: bool = True
) -> CvReport:
    """
    Run repeated stratified cross-validation on prepared samples.

    Args:
        samples: Original (non-augmented) samples with unique source ids
        cfg: Evaluation settings
        n_skipped: Echoed into the report
        progress: Show a tqdm progress bar

    Returns:
        CvReport

    Raises:
        EmptyClass: If a class is missing
        TooFewSamples: If a class has fewer than k samples
        FoldTrainingError: If training fails inside a split
    """
    X, y = stack_features(samples)
    if y.min() == y.max():
        raise EmptyClass("Cross-validation needs both classes")
    source_ids = [s.source_id for s in samples]
    if len(set(source_ids)) != len(source_ids):
        raise InvalidParams("Sample source ids must be unique")

    digest = hashlib.sha256()
    folds: List[FoldResult] = []
    total = cfg.k * cfg.repeats
    with tqdm(total=total, desc=f"CV {cfg.feature_set.value}", disable=not progress) as bar:
        for r in range(cfg.repeats):
            for f, (train, test) in enumerate(kfold_split(y, cfg.k, cfg.seed, r)):
                test_ids = [source_ids[i] for i in test]
                digest.update(f"{r}/{f}:".encode('utf-8'))
                digest.update(','.join(test_ids).encode('utf-8'))

                training = balance_dataset([samples[i] for i in train], cfg.noise_sigma, _derived_seed(cfg.seed, r, f))
                audit_leakage(training, {source_ids[i] for i in train}, set(test_ids))
                try:
                    forest = fit(training, cfg.hyperparams, cfg.seed)
                except FallRiskError as e:
                    logger.error(f"Training failed in repeat {r}, fold {f}: {e}")
                    raise FoldTrainingError(r, f, e) from e

                predicted = predict_proba_batch(forest, X[test]) >= cfg.threshold
                actual = y[test] == 1
                tp = int(np.sum(predicted & actual))
                fp = int(np.sum(predicted & ~actual))
                tn = int(np.sum(~predicted & ~actual))
                fn = int(np.sum(~predicted & actual))
                folds.append(FoldResult(r, f, (tp + tn) / len(test), tp, fp, tn, fn, len(training), len(test)))
                bar.update(1)

    per_fold = [fr.accuracy for fr in folds]
    per_repeat = [float(np.mean(per_fold[r * cfg.k:(r + 1) * cfg.k])) for r in range(cfg.repeats)]
    confusion = tuple(int(sum(getattr(fr, name) for fr in folds)) for name in ('tp', 'fp', 'tn', 'fn'))
    evaluations = sum(fr.n_test for fr in folds)
    if sum(confusion) != evaluations:
        raise InvariantViolation(f"Confusion totals {sum(confusion)} != {evaluations} test evaluations")

    report = CvReport(
        feature_set=cfg.feature_set,
        mean_accuracy=float(np.mean(per_repeat)),
        per_fold_accuracies=per_fold,
        per_repeat_means=per_repeat,
        confusion_totals=confusion,
        pooled_accuracy=(confusion[0] + confusion[2]) / evaluations,
        std_accuracy=float(np.std(per_fold)),
        n_samples=len(samples),
        n_skipped=n_skipped,
        partition_digest=digest.hexdigest(),
        feature_names=cfg.feature_set.feature_names(),
        config=cfg.to_dict(),
        folds=folds,
    )
    logger.info(
        f"{cfg.feature_set.value}: mean accuracy {report.mean_accuracy:.4f} "
        f"(pooled {report.pooled_accuracy:.4f}, std {report.std_accuracy:.4f})"
    )
    return report


def cross_validate(records: Sequence[DatasetRecord], cfg: CvConfig, progress: bool = True) -> CvReport:
    """
    Recompute features for cfg.feature_set and cross-validate.

    Frames whose head or knees cannot be resolved are skipped and counted
    in the report.
    """
    samples, skipped = samples_from_records(records, cfg.feature_set, cfg.min_side_confidence)
    return cross_validate_samples(samples, cfg, len(skipped), progress)


def ablation_table(
    records: Sequence[DatasetRecord],
    base_cfg: CvConfig,
    progress: bool = True
) -> List[Tuple[FeatureSet, CvReport]]:
    """
    Cross-validate every feature set with the same seed.

    Every feature set needs the head and both knees, so all rows use the
    same frames and therefore the same fold partitions.

    Returns:
        (feature set, report) in FeatureSet order
    """
    rows = []
    for feature_set in FeatureSet:
        logger.info(f"Ablation row: {feature_set.description}")
        rows.append((feature_set, cross_validate(records, dataclasses.replace(base_cfg, feature_set=feature_set), progress)))

    digests = {report.partition_digest for _, report in rows}
    if len(digests) != 1:
        raise InvariantViolation("Ablation rows were evaluated on different fold partitions")
    return rows


def ablation_frame(rows: Sequence[Tuple[FeatureSet, CvReport]]) -> pd.DataFrame:
    return pd.DataFrame([
        {
            'feature_set': fs.value,
            'features': fs.description,
            'dimension': fs.dimension,
            'mean_accuracy': report.mean_accuracy,
            'pooled_accuracy': report.pooled_accuracy,
            'std_accuracy': report.std_accuracy,
            'tp': report.confusion_totals[0],
            'fp': report.confusion_totals[1],
            'tn': report.confusion_totals[2],
            'fn': report.confusion_totals[3],
        }
        for fs, report in rows
    ])


def format_ablation_table(rows: Sequence[Tuple[FeatureSet, CvReport]]) -> str:
    """Aligned plain-text table, accuracies in percent."""
    df = ablation_frame(rows)
    table = pd.DataFrame({
        'Features': df['features'],
        'Dim': df['dimension'],
        'Mean acc (%)': (df['mean_accuracy'] * 100).map('{:.2f}'.format),
        'Pooled acc (%)': (df['pooled_accuracy'] * 100).map('{:.2f}'.format),
        'Std (%)': (df['std_accuracy'] * 100).map('{:.2f}'.format),
        'FP': df['fp'],
        'FN': df['fn'],
    })
    return table.to_string(index=False)


def fold_rows_frame(reports: Sequence[CvReport]) -> pd.DataFrame:
    """One row per (repeat, fold, feature set)."""
    return pd.DataFrame([
        {
            'repeat': fr.repeat,
            'fold': fr.fold,
            'feature_set': report.feature_set.value,
            'accuracy': fr.accuracy,
            'tp': fr.tp,
            'fp': fr.fp,
            'tn': fr.tn,
            'fn': fr.fn,
        }
        for report in reports
        for fr in report.folds
    ], columns=['repeat', 'fold', 'feature_set', 'accuracy', 'tp', 'fp', 'tn', 'fn'])


def save_fold_csv(reports: Sequence[CvReport], path: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fold_rows_frame(reports).to_csv(path, index=False)
    logger.info(f"Saved per-fold rows to: {path}")


def save_report(report: CvReport, path: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        f.write(report.to_json())
    logger.info(f"Saved report to: {path}")


def save_ablation(rows: Sequence[Tuple[FeatureSet, CvReport]], path: str):
    """Machine-readable ablation table: one JSON document with every row's report."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    document = {'rows': [report.to_dict() for _, report in rows]}
    with open(path, 'w') as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write('\n')
    logger.info(f"Saved ablation table to: {path}")
