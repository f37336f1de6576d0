"""
Step 6: figures for the dataset, the ablation and a monitor run.

Usage:
    python scripts/6_visualize_results.py --data data/processed/synthetic.ndjson --ablation data/output/ablation.json --output data/output/figures/
"""

import argparse
import json
import sys
import traceback
from pathlib import Path
import logging

import pandas as pd


sys.path.append(str(Path(__file__).parent.parent))

from utils.errors import EXIT_INTERNAL, exit_code_for
from utils.feature_engineering import FeatureSet, Label, read_dataset
from utils.visualization_utils import plot_ablation_results, plot_alert_timeline, plot_scene


logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def load_ablation_frame(ablation_path: str) -> pd.DataFrame:
    """Read the JSON written by step 4 into the ablation_frame layout."""
    with open(ablation_path, 'r') as f:
        document = json.load(f)
    return pd.DataFrame([
        {
            'feature_set': row['feature_set'],
            'features': FeatureSet.from_tag(row['feature_set']).description,
            'mean_accuracy': row['mean_accuracy'],
            'std_accuracy': row['std_accuracy'],
        }
        for row in document['rows']
    ])


def visualize_results(
    data_path: str = None,
    ablation_path: str = None,
    monitor_path: str = None,
    output_dir: str = 'data/output/figures/',
    n_scenes: int = 4,
    threshold: float = 0.5
):
    """
    Create every figure whose input is available.

    Args:
        data_path: Dataset file; the first scenes of each class are drawn
        ablation_path: Ablation JSON from step 4
        monitor_path: Monitor output records from step 5
        output_dir: Directory for PNG files
        n_scenes: Scenes drawn per class
        threshold: Threshold line on the alert timeline
    """
    logger.info("=" * 60)
    logger.info("Step 6: Visualize Results")
    logger.info("=" * 60)

    output = Path(output_dir)
    output.mkdir(parents=True, exist_ok=True)

    if data_path:
        logger.info(f"Loading dataset from: {data_path}")
        _, records = read_dataset(data_path)
        for label in Label:
            chosen = [r for r in records if r.label is label][:n_scenes]
            for record in chosen:
                plot_scene(record.frame, str(output / f"scene_{record.source_id}.png"), label=record.label)
            logger.info(f"Drew {len(chosen)} {label.value} scenes")

    if ablation_path:
        if not Path(ablation_path).exists():
            logger.error(f"Ablation file not found: {ablation_path}")
            raise FileNotFoundError(f"Ablation file not found: {ablation_path}")
        plot_ablation_results(load_ablation_frame(ablation_path), str(output / 'ablation_accuracy.png'))

    if monitor_path:
        if not Path(monitor_path).exists():
            logger.error(f"Monitor output not found: {monitor_path}")
            raise FileNotFoundError(f"Monitor output not found: {monitor_path}")
        with open(monitor_path, 'r') as f:
            records = [json.loads(line) for line in f if line.strip()]
        plot_alert_timeline(records, str(output / 'alert_timeline.png'), threshold=threshold)

    logger.info(f"Figures saved to: {output}")


def main():
    """Main function."""
    parser = argparse.ArgumentParser(
        description='Create figures for the dataset, ablation and monitor output'
    )
    parser.add_argument('--data', type=str, default=None, help='Path to dataset file')
    parser.add_argument('--ablation', type=str, default=None, help='Path to ablation JSON')
    parser.add_argument('--monitor-output', type=str, default=None, help='Path to monitor output records')
    parser.add_argument('--output', type=str, default='data/output/figures/', help='Output directory')
    parser.add_argument('--scenes', type=int, default=4, help='Scenes drawn per class')
    parser.add_argument('--threshold', type=float, default=0.5, help='Threshold line on the timeline')

    args = parser.parse_args()

    try:
        visualize_results(
            args.data,
            args.ablation,
            args.monitor_output,
            args.output,
            n_scenes=args.scenes,
            threshold=args.threshold
        )
        logger.info("=" * 60)
        logger.info("Step 6 completed!")
        logger.info("=" * 60)
    except Exception as e:
        logger.error(f"Error in Step 6: {e}")
        if exit_code_for(e) == EXIT_INTERNAL:
            traceback.print_exc()
        sys.exit(exit_code_for(e))


if __name__ == '__main__':
    main()
