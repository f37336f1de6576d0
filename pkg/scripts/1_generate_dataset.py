"""
Step 1: generate a labeled synthetic dataset.

Usage:
    python scripts/1_generate_dataset.py --n 2000 --class-mix 0.5 --seed 42 --out data/processed/synthetic.ndjson
"""

import argparse
import sys
import traceback
from pathlib import Path
import logging


sys.path.append(str(Path(__file__).parent.parent))

from utils.config import load_config, resolve
from utils.errors import EXIT_INTERNAL, exit_code_for
from utils.feature_engineering import write_dataset
from utils.synthetic_scene import generate_dataset


logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def generate(
    output_path: str,
    n: int = 2000,
    class_mix: float = 0.5,
    seed: int = 42,
    tau: float = 0.0,
    keypoint_noise: float = 2.0,
    dropout: float = 0.02,
    contour_jitter: float = 1.0,
    label_noise: float = 0.0,
    progress: bool = True
):
    """
    Generate synthetic scenes and write the dataset file.

    Args:
        output_path: Path to the output dataset (newline-delimited JSON)
        n: Number of scenes
        class_mix: Fraction of at-risk scenes
        seed: Generator seed
        tau: Knee-distance threshold of the labeling rule (px)
        keypoint_noise: Keypoint jitter std (px)
        dropout: Keypoint dropout probability
        contour_jitter: Bed contour jitter std (px)
        label_noise: Label flip probability
        progress: Show a progress bar

    Returns:
        List of generated DatasetRecord
    """
    logger.info("=" * 60)
    logger.info("Step 1: Generate Synthetic Dataset")
    logger.info("=" * 60)

    logger.info(f"Scenes: {n}, class mix: {class_mix}, seed: {seed}, tau: {tau} px")
    logger.info(f"Keypoint noise: {keypoint_noise} px, dropout: {dropout}, contour jitter: {contour_jitter} px")

    header, records = generate_dataset(
        n, class_mix, seed,
        tau=tau,
        keypoint_noise=keypoint_noise,
        dropout=dropout,
        contour_jitter=contour_jitter,
        label_noise=label_noise,
        progress=progress
    )

    write_dataset(output_path, records, header)
    logger.info(f"Successfully saved dataset to {output_path}")
    return records


def add_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--n', type=int, default=None, help='Number of scenes')
    parser.add_argument('--class-mix', type=float, default=None, help='Fraction of at-risk scenes')
    parser.add_argument('--seed', type=int, default=None, help='Generator seed')
    parser.add_argument('--tau', type=float, default=None, help='Labeling threshold on the lower knee distance (px)')
    parser.add_argument('--noise', type=float, default=None, help='Keypoint noise std (px)')
    parser.add_argument('--dropout', type=float, default=None, help='Keypoint dropout probability')
    parser.add_argument('--contour-jitter', type=float, default=None, help='Bed contour jitter std (px)')
    parser.add_argument('--label-noise', type=float, default=None, help='Label flip probability')
    parser.add_argument(
        '--out',
        type=str,
        default='data/processed/synthetic.ndjson',
        help='Path to output dataset file'
    )


def run_from_args(args: argparse.Namespace, config: dict):
    return generate(
        args.out,
        n=resolve(args.n, config, 'synthetic.n'),
        class_mix=resolve(args.class_mix, config, 'synthetic.class_mix'),
        seed=resolve(args.seed, config, 'synthetic.seed'),
        tau=resolve(args.tau, config, 'synthetic.tau'),
        keypoint_noise=resolve(args.noise, config, 'synthetic.keypoint_noise'),
        dropout=resolve(args.dropout, config, 'synthetic.dropout'),
        contour_jitter=resolve(args.contour_jitter, config, 'synthetic.contour_jitter'),
        label_noise=resolve(args.label_noise, config, 'synthetic.label_noise'),
        progress=not getattr(args, 'quiet', False)
    )


def main():
    """Main function."""
    parser = argparse.ArgumentParser(
        description='Generate a labeled synthetic bed-scene dataset'
    )
    parser.add_argument('--config', type=str, default=None, help='YAML file with config overrides')
    add_arguments(parser)

    args = parser.parse_args()

    try:
        run_from_args(args, load_config(args.config))
        logger.info("=" * 60)
        logger.info("Step 1 completed!")
        logger.info("=" * 60)
    except Exception as e:
        logger.error(f"Error in Step 1: {e}")
        if exit_code_for(e) == EXIT_INTERNAL:
            traceback.print_exc()
        sys.exit(exit_code_for(e))


if __name__ == '__main__':
    main()
