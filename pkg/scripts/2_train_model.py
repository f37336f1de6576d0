"""
Step 2: train the boosted-tree classifier on a dataset file.

Usage:
    python scripts/2_train_model.py --data data/processed/synthetic.ndjson --feature-set kp-knee-head --seed 42 --out-model data/models/model.json
"""

import argparse
import sys
import traceback
from pathlib import Path
import logging

import numpy as np
import pandas as pd


sys.path.append(str(Path(__file__).parent.parent))

from utils.config import classifier_settings, config_value, load_config, resolve
from utils.errors import EXIT_INTERNAL, exit_code_for
from utils.feature_engineering import FeatureSet, balance_dataset, read_dataset, samples_from_records, stack_features
from utils.gbdt_classifier import Hyperparams, count_leaves, feature_importance, fit, predict_proba_batch, save_model


logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def train_model(
    data_path: str,
    model_path: str,
    feature_set: FeatureSet = FeatureSet.KEYPOINTS_KNEE_HEAD,
    hyperparams: Hyperparams = Hyperparams(),
    seed: int = 42,
    noise_sigma: float = 2.0,
    min_side_confidence: float = 0.05
):
    """
    Train a forest on every usable frame of a dataset and save it.

    The minority class is oversampled with perturbed duplicates before
    training. A per-feature gain table is written next to the model.

    Args:
        data_path: Dataset file
        model_path: Output model file
        feature_set: Feature layout to train on
        hyperparams: Booster hyperparameters
        seed: Seed for balancing (recorded in the model)
        noise_sigma: Duplicate perturbation std (px)
        min_side_confidence: Confidence gate for head/knee landmarks

    Returns:
        Trained Forest
    """
    logger.info("=" * 60)
    logger.info("Step 2: Train Classifier")
    logger.info("=" * 60)

    logger.info(f"Loading dataset from: {data_path}")
    _, records = read_dataset(data_path)

    samples, skipped = samples_from_records(records, feature_set, min_side_confidence)
    logger.info(f"Feature set: {feature_set.value} ({feature_set.description}), {feature_set.dimension} features")
    logger.info(f"Usable samples: {len(samples)} (skipped {len(skipped)})")

    training = balance_dataset(samples, noise_sigma, seed)
    logger.info(f"Balanced training set: {len(training)} samples")
    logger.info(
        f"Hyperparameters: lr={hyperparams.learning_rate}, trees={hyperparams.n_trees}, "
        f"leaves={hyperparams.max_leaves}, min_leaf={hyperparams.min_samples_leaf}"
    )

    forest = fit(training, hyperparams, seed)

    X, y = stack_features(samples)
    accuracy = float(np.mean((predict_proba_batch(forest, X) >= 0.5) == (y == 1)))
    leaves = [count_leaves(tree) for tree in forest.trees]
    logger.info(f"Training accuracy on original samples: {accuracy:.4f}")
    logger.info(f"Leaves per tree: min {min(leaves)}, max {max(leaves)}, mean {np.mean(leaves):.1f}")

    output_dir = Path(model_path).parent
    output_dir.mkdir(parents=True, exist_ok=True)
    with open(model_path, 'wb') as f:
        f.write(save_model(forest))
    logger.info(f"Successfully saved model to {model_path}")

    importance_df = pd.DataFrame({
        'feature': feature_set.feature_names(),
        'total_gain': feature_importance(forest),
    }).sort_values('total_gain', ascending=False, kind='mergesort')
    importance_path = str(Path(model_path).with_suffix('')) + '_importance.csv'
    importance_df.to_csv(importance_path, index=False)
    logger.info(f"Saved feature importance to: {importance_path}")

    logger.info("\nTop features by total gain:")
    for _, row in importance_df.head(5).iterrows():
        logger.info(f"  {row['feature']}: {row['total_gain']:.4f}")

    return forest


def add_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--data', type=str, required=True, help='Path to dataset file')
    parser.add_argument(
        '--feature-set',
        type=str,
        choices=[fs.value for fs in FeatureSet],
        default=None,
        help='Feature layout'
    )
    parser.add_argument('--seed', type=int, default=None, help='Seed for balancing')
    parser.add_argument(
        '--out-model',
        type=str,
        default='data/models/model.json',
        help='Path to output model file'
    )
    parser.add_argument('--lr', type=float, default=None, help='Learning rate')
    parser.add_argument('--trees', type=int, default=None, help='Number of boosting rounds')
    parser.add_argument('--leaves', type=int, default=None, help='Maximum leaves per tree')
    parser.add_argument('--min-leaf', type=int, default=None, help='Minimum samples per leaf')
    parser.add_argument('--noise-sigma', type=float, default=None, help='Oversampling noise std (px)')


def run_from_args(args: argparse.Namespace, config: dict):
    hyperparams = Hyperparams.from_dict(classifier_settings(
        config,
        learning_rate=args.lr,
        n_trees=args.trees,
        max_leaves=args.leaves,
        min_samples_leaf=args.min_leaf
    ))
    return train_model(
        args.data,
        args.out_model,
        feature_set=FeatureSet.from_tag(resolve(args.feature_set, config, 'features.feature_set')),
        hyperparams=hyperparams,
        seed=resolve(args.seed, config, 'evaluation.seed'),
        noise_sigma=resolve(args.noise_sigma, config, 'features.noise_sigma'),
        min_side_confidence=config_value(config, 'geometry.min_side_confidence', 0.05)
    )


def main():
    """Main function."""
    parser = argparse.ArgumentParser(
        description='Train the fall-risk classifier'
    )
    parser.add_argument('--config', type=str, default=None, help='YAML file with config overrides')
    add_arguments(parser)

    args = parser.parse_args()

    try:
        run_from_args(args, load_config(args.config))
        logger.info("=" * 60)
        logger.info("Step 2 completed!")
        logger.info("=" * 60)
    except Exception as e:
        logger.error(f"Error in Step 2: {e}")
        if exit_code_for(e) == EXIT_INTERNAL:
            traceback.print_exc()
        sys.exit(exit_code_for(e))


if __name__ == '__main__':
    main()
