"""
Step 4: cross-validate all four feature sets on shared folds.

Usage:
    python scripts/4_ablate_features.py --data data/processed/synthetic.ndjson --seed 42 --output data/output/ablation.json
"""

import argparse
import sys
import traceback
from pathlib import Path
import logging


sys.path.append(str(Path(__file__).parent.parent))

from utils.config import load_config
from utils.errors import EXIT_INTERNAL, exit_code_for
from utils.eval_harness import (
    CvConfig,
    ablation_frame,
    ablation_table,
    format_ablation_table,
    save_ablation,
    save_fold_csv,
)
from utils.feature_engineering import FeatureSet, read_dataset


logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def ablate_features(
    data_path: str,
    base_cfg: CvConfig,
    output_path: str = 'data/output/ablation.json',
    csv_path: str = None,
    progress: bool = True
):
    """
    Run the feature-set ablation and write the table.

    Writes the full reports (JSON) and a summary CSV next to it; the aligned
    table goes to standard output.

    Args:
        data_path: Dataset file
        base_cfg: Evaluation settings; feature_set is overridden per row
        output_path: Output JSON
        csv_path: Optional per-fold CSV across all rows
        progress: Show progress bars

    Returns:
        List of (FeatureSet, CvReport)
    """
    logger.info("=" * 60)
    logger.info("Step 4: Feature-Set Ablation")
    logger.info("=" * 60)

    logger.info(f"Loading dataset from: {data_path}")
    _, records = read_dataset(data_path)
    logger.info(f"{base_cfg.k}-fold x {base_cfg.repeats} repeats, seed {base_cfg.seed}")

    rows = ablation_table(records, base_cfg, progress=progress)

    save_ablation(rows, output_path)
    summary_path = str(Path(output_path).with_suffix('.csv'))
    ablation_frame(rows).to_csv(summary_path, index=False)
    logger.info(f"Saved ablation summary to: {summary_path}")
    if csv_path:
        save_fold_csv([report for _, report in rows], csv_path)

    first, last = rows[0][1], rows[-1][1]
    logger.info(
        f"Row 4 vs row 1 mean accuracy: {last.mean_accuracy:.4f} vs {first.mean_accuracy:.4f} "
        f"({(last.mean_accuracy - first.mean_accuracy) * 100:+.2f} pts)"
    )

    print(format_ablation_table(rows))
    return rows


def add_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--data', type=str, required=True, help='Path to dataset file')
    parser.add_argument('--seed', type=int, default=None, help='Seed for folds and balancing')
    parser.add_argument('--folds', type=int, default=None, help='Number of folds')
    parser.add_argument('--repeats', type=int, default=None, help='Number of repeats')
    parser.add_argument(
        '--output',
        type=str,
        default='data/output/ablation.json',
        help='Path to output JSON table'
    )
    parser.add_argument('--emit-csv', type=str, default=None, help='Write per-fold rows to this CSV')


def run_from_args(args: argparse.Namespace, config: dict):
    base_cfg = CvConfig.from_config(
        config,
        FeatureSet.KEYPOINTS_KNEE_HEAD,
        k=args.folds,
        repeats=args.repeats,
        seed=args.seed
    )
    return ablate_features(
        args.data,
        base_cfg,
        output_path=args.output,
        csv_path=args.emit_csv,
        progress=not getattr(args, 'quiet', False)
    )


def main():
    """Main function."""
    parser = argparse.ArgumentParser(
        description='Cross-validate every feature set on shared folds'
    )
    parser.add_argument('--config', type=str, default=None, help='YAML file with config overrides')
    add_arguments(parser)

    args = parser.parse_args()

    try:
        run_from_args(args, load_config(args.config))
        logger.info("=" * 60)
        logger.info("Step 4 completed!")
        logger.info("=" * 60)
    except Exception as e:
        logger.error(f"Error in Step 4: {e}")
        if exit_code_for(e) == EXIT_INTERNAL:
            traceback.print_exc()
        sys.exit(exit_code_for(e))


if __name__ == '__main__':
    main()
