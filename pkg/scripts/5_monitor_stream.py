"""
Step 5: score a frame stream and emit debounced alerts.

Usage:
    python scripts/5_monitor_stream.py --model data/models/model.json --input frames.ndjson --raise 3 --clear 5 --threshold 0.5
    cat frames.ndjson | python scripts/5_monitor_stream.py --model data/models/model.json --input -
"""

import argparse
import sys
import traceback
from contextlib import ExitStack
from pathlib import Path
import logging


sys.path.append(str(Path(__file__).parent.parent))

from utils.config import config_value, load_config, resolve
from utils.errors import EXIT_INTERNAL, exit_code_for
from utils.gbdt_classifier import load_model
from utils.monitor import MonitorConfig, run_monitor, write_output


logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def monitor_stream(
    model_path: str,
    input_path: str = '-',
    output_path: str = '-',
    cfg: MonitorConfig = MonitorConfig()
):
    """
    Run the monitor over a file or standard input.

    Args:
        model_path: Trained model file
        input_path: Frame records, '-' for standard input
        output_path: Output records, '-' for standard output
        cfg: Monitor settings

    Returns:
        Count of emitted records per type
    """
    logger.info("=" * 60)
    logger.info("Step 5: Monitor Frame Stream")
    logger.info("=" * 60)

    logger.info(f"Loading model from: {model_path}")
    if not Path(model_path).exists():
        logger.error(f"Model file not found: {model_path}")
        raise FileNotFoundError(f"Model file not found: {model_path}")
    with open(model_path, 'rb') as f:
        forest = load_model(f.read())
    feature_set = forest.feature_set.value if forest.feature_set is not None else 'none'
    logger.info(f"Model: {len(forest.trees)} trees, feature set {feature_set}")
    logger.info(f"Debounce: raise after {cfg.raise_after}, clear after {cfg.clear_after}, threshold {cfg.threshold}")

    if input_path != '-' and not Path(input_path).exists():
        logger.error(f"Input file not found: {input_path}")
        raise FileNotFoundError(f"Input file not found: {input_path}")

    with ExitStack() as stack:
        source = sys.stdin if input_path == '-' else stack.enter_context(open(input_path, 'r'))
        if output_path == '-':
            sink = sys.stdout
        else:
            Path(output_path).parent.mkdir(parents=True, exist_ok=True)
            sink = stack.enter_context(open(output_path, 'w'))
        counts = write_output(run_monitor(source, forest, cfg), sink)

    logger.info(f"Emitted {counts['score']} scores, {counts['alert']} alerts, {counts['diagnostic']} diagnostics")
    return counts


def add_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--model', type=str, required=True, help='Path to model file')
    parser.add_argument('--input', type=str, default='-', help="Frame records file, '-' for stdin")
    parser.add_argument('--output', type=str, default='-', help="Output records file, '-' for stdout")
    parser.add_argument('--raise', dest='raise_after', type=int, default=None,
                        help='Consecutive at-risk frames that raise an alert')
    parser.add_argument('--clear', dest='clear_after', type=int, default=None,
                        help='Consecutive safe frames that clear an alert')
    parser.add_argument('--threshold', type=float, default=None, help='At-risk probability threshold')
    parser.add_argument('--echo-features', action='store_true', default=None,
                        help='Include feature vectors in score records')


def run_from_args(args: argparse.Namespace, config: dict):
    cfg = MonitorConfig(
        raise_after=resolve(args.raise_after, config, 'monitor.raise'),
        clear_after=resolve(args.clear_after, config, 'monitor.clear'),
        threshold=resolve(args.threshold, config, 'monitor.threshold'),
        echo_features=bool(resolve(args.echo_features, config, 'monitor.echo_features')),
        min_side_confidence=config_value(config, 'geometry.min_side_confidence', 0.05),
        crop_to_bed=bool(config_value(config, 'roi.crop_to_bed', False)),
        bed_margin=config_value(config, 'roi.bed_margin', 0.15),
    )
    return monitor_stream(args.model, args.input, args.output, cfg)


def main():
    """Main function."""
    parser = argparse.ArgumentParser(
        description='Score a frame stream and emit debounced fall-risk alerts'
    )
    parser.add_argument('--config', type=str, default=None, help='YAML file with config overrides')
    add_arguments(parser)

    args = parser.parse_args()

    try:
        run_from_args(args, load_config(args.config))
        logger.info("=" * 60)
        logger.info("Step 5 completed!")
        logger.info("=" * 60)
    except Exception as e:
        logger.error(f"Error in Step 5: {e}")
        if exit_code_for(e) == EXIT_INTERNAL:
            traceback.print_exc()
        sys.exit(exit_code_for(e))


if __name__ == '__main__':
    main()
