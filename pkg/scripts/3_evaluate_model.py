"""
Step 3: repeated stratified k-fold evaluation of one feature set.

Usage:
    python scripts/3_evaluate_model.py --data data/processed/synthetic.ndjson --feature-set kp-knee-head --folds 10 --repeats 10 --seed 42 --emit-csv data/output/folds.csv
"""

import argparse
import sys
import traceback
from pathlib import Path
import logging


sys.path.append(str(Path(__file__).parent.parent))

from utils.config import load_config, resolve
from utils.errors import EXIT_INTERNAL, exit_code_for
from utils.eval_harness import CvConfig, cross_validate, format_ablation_table, save_fold_csv, save_report
from utils.feature_engineering import FeatureSet, read_dataset


logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def evaluate_model(
    data_path: str,
    cfg: CvConfig,
    report_path: str = 'data/output/cv_report.json',
    csv_path: str = None,
    progress: bool = True
):
    """
    Cross-validate one feature set and write the report.

    Args:
        data_path: Dataset file
        cfg: Evaluation settings
        report_path: Output JSON report
        csv_path: Optional per-fold CSV
        progress: Show a progress bar

    Returns:
        CvReport
    """
    logger.info("=" * 60)
    logger.info("Step 3: Cross-Validate Classifier")
    logger.info("=" * 60)

    logger.info(f"Loading dataset from: {data_path}")
    _, records = read_dataset(data_path)
    logger.info(f"{cfg.k}-fold x {cfg.repeats} repeats, seed {cfg.seed}, feature set {cfg.feature_set.value}")

    report = cross_validate(records, cfg, progress=progress)

    tp, fp, tn, fn = report.confusion_totals
    logger.info("\nCross-Validation Results:")
    logger.info(f"  Mean accuracy (mean of repeats): {report.mean_accuracy:.4f}")
    logger.info(f"  Pooled accuracy: {report.pooled_accuracy:.4f}")
    logger.info(f"  Std over folds: {report.std_accuracy:.4f}")
    logger.info(f"  Confusion totals: tp={tp} fp={fp} tn={tn} fn={fn}")
    logger.info(f"  Samples: {report.n_samples} (skipped {report.n_skipped})")

    save_report(report, report_path)
    if csv_path:
        save_fold_csv([report], csv_path)

    print(format_ablation_table([(cfg.feature_set, report)]))
    return report


def add_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--data', type=str, required=True, help='Path to dataset file')
    parser.add_argument(
        '--feature-set',
        type=str,
        choices=[fs.value for fs in FeatureSet],
        default=None,
        help='Feature layout'
    )
    parser.add_argument('--folds', type=int, default=None, help='Number of folds')
    parser.add_argument('--repeats', type=int, default=None, help='Number of repeats')
    parser.add_argument('--seed', type=int, default=None, help='Seed for folds and balancing')
    parser.add_argument('--lr', type=float, default=None, help='Learning rate')
    parser.add_argument('--trees', type=int, default=None, help='Number of boosting rounds')
    parser.add_argument('--leaves', type=int, default=None, help='Maximum leaves per tree')
    parser.add_argument('--min-leaf', type=int, default=None, help='Minimum samples per leaf')
    parser.add_argument('--noise-sigma', type=float, default=None, help='Oversampling noise std (px)')
    parser.add_argument(
        '--report',
        type=str,
        default='data/output/cv_report.json',
        help='Path to output JSON report'
    )
    parser.add_argument('--emit-csv', type=str, default=None, help='Write per-fold rows to this CSV')


def run_from_args(args: argparse.Namespace, config: dict):
    feature_set = FeatureSet.from_tag(resolve(args.feature_set, config, 'features.feature_set'))
    return evaluate_model(
        args.data,
        CvConfig.from_config(
            config,
            feature_set,
            k=args.folds,
            repeats=args.repeats,
            seed=args.seed,
            noise_sigma=args.noise_sigma,
            learning_rate=args.lr,
            n_trees=args.trees,
            max_leaves=args.leaves,
            min_samples_leaf=args.min_leaf
        ),
        report_path=args.report,
        csv_path=args.emit_csv,
        progress=not getattr(args, 'quiet', False)
    )


def main():
    """Main function."""
    parser = argparse.ArgumentParser(
        description='Cross-validate the fall-risk classifier'
    )
    parser.add_argument('--config', type=str, default=None, help='YAML file with config overrides')
    add_arguments(parser)

    args = parser.parse_args()

    try:
        run_from_args(args, load_config(args.config))
        logger.info("=" * 60)
        logger.info("Step 3 completed!")
        logger.info("=" * 60)
    except Exception as e:
        logger.error(f"Error in Step 3: {e}")
        if exit_code_for(e) == EXIT_INTERNAL:
            traceback.print_exc()
        sys.exit(exit_code_for(e))


if __name__ == '__main__':
    main()
