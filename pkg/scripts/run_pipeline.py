"""
Complete Pipeline Runner

Generates a synthetic dataset, trains a model, runs the feature-set
ablation, replays part of the dataset through the monitor and draws the
figures.

Usage:
    python scripts/run_pipeline.py --output data/output/ --n 2000 --seed 42
"""

import argparse
import sys
import traceback
from pathlib import Path
import logging


sys.path.append(str(Path(__file__).parent.parent))


import importlib.util

def load_module(module_path, module_name):
    """Load a module from a file path."""
    spec = importlib.util.spec_from_file_location(module_name, module_path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


generate_module = load_module(
    Path(__file__).parent / "1_generate_dataset.py",
    "generate_dataset_step"
)
train_module = load_module(
    Path(__file__).parent / "2_train_model.py",
    "train_model_step"
)
ablate_module = load_module(
    Path(__file__).parent / "4_ablate_features.py",
    "ablate_features_step"
)
monitor_module = load_module(
    Path(__file__).parent / "5_monitor_stream.py",
    "monitor_stream_step"
)
visualize_module = load_module(
    Path(__file__).parent / "6_visualize_results.py",
    "visualize_results_step"
)

generate = generate_module.generate
train_model = train_module.train_model
ablate_features = ablate_module.ablate_features
monitor_stream = monitor_module.monitor_stream
visualize_results = visualize_module.visualize_results

from utils.config import classifier_settings, config_value, load_config
from utils.errors import EXIT_INTERNAL, exit_code_for
from utils.eval_harness import CvConfig
from utils.feature_engineering import FeatureSet
from utils.frame_records import write_frames
from utils.gbdt_classifier import Hyperparams
from utils.monitor import MonitorConfig


logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def run_pipeline(
    output_dir: str = 'data/output/',
    n: int = 2000,
    seed: int = 42,
    stream_frames: int = 200,
    config_path: str = None
):
    """
    Run the complete pipeline.

    Args:
        output_dir: Output directory
        n: Number of synthetic scenes
        seed: Seed for generation, training and evaluation
        stream_frames: Dataset frames replayed through the monitor
        config_path: Optional YAML overrides
    """
    logger.info("=" * 60)
    logger.info("Fall-Risk Assessment Pipeline")
    logger.info("=" * 60)

    config = load_config(config_path)

    output_path = Path(output_dir)
    processed_dir = output_path.parent / 'processed'
    models_dir = output_path.parent / 'models'
    for directory in (output_path, processed_dir, models_dir):
        directory.mkdir(parents=True, exist_ok=True)

    logger.info("\n" + "=" * 60)
    logger.info("Step 1: Generate Synthetic Dataset")
    logger.info("=" * 60)

    dataset_path = processed_dir / "synthetic.ndjson"
    synthetic = config_value(config, 'synthetic', {})
    records = generate(
        str(dataset_path),
        n=n,
        class_mix=synthetic['class_mix'],
        seed=seed,
        tau=synthetic['tau'],
        keypoint_noise=synthetic['keypoint_noise'],
        dropout=synthetic['dropout'],
        contour_jitter=synthetic['contour_jitter'],
        label_noise=synthetic['label_noise']
    )

    logger.info("\n" + "=" * 60)
    logger.info("Step 2: Train Classifier")
    logger.info("=" * 60)

    feature_set = FeatureSet.from_tag(config_value(config, 'features.feature_set'))
    model_path = models_dir / "model.json"
    train_model(
        str(dataset_path),
        str(model_path),
        feature_set=feature_set,
        hyperparams=Hyperparams.from_dict(classifier_settings(config)),
        seed=seed,
        noise_sigma=config_value(config, 'features.noise_sigma'),
        min_side_confidence=config_value(config, 'geometry.min_side_confidence')
    )

    logger.info("\n" + "=" * 60)
    logger.info("Step 3: Feature-Set Ablation")
    logger.info("=" * 60)

    ablation_path = output_path / "ablation.json"
    try:
        ablate_features(
            str(dataset_path),
            CvConfig.from_config(config, feature_set, seed=seed),
            output_path=str(ablation_path),
            csv_path=str(output_path / "ablation_folds.csv")
        )
    except Exception as e:
        logger.error(f"Error in ablation: {e}")
        ablation_path = None

    logger.info("\n" + "=" * 60)
    logger.info("Step 4: Monitor Replay")
    logger.info("=" * 60)

    stream_path = processed_dir / "replay_frames.ndjson"
    monitor_path = output_path / "monitor_output.ndjson"
    write_frames([r.frame for r in records[:stream_frames]], str(stream_path))
    monitor_cfg = MonitorConfig(
        raise_after=config_value(config, 'monitor.raise'),
        clear_after=config_value(config, 'monitor.clear'),
        threshold=config_value(config, 'monitor.threshold')
    )
    try:
        monitor_stream(str(model_path), str(stream_path), str(monitor_path), monitor_cfg)
    except Exception as e:
        logger.error(f"Error in monitor replay: {e}")
        monitor_path = None

    logger.info("\n" + "=" * 60)
    logger.info("Step 5: Visualize Results")
    logger.info("=" * 60)

    try:
        visualize_results(
            str(dataset_path),
            str(ablation_path) if ablation_path else None,
            str(monitor_path) if monitor_path else None,
            str(output_path / "figures"),
            threshold=monitor_cfg.threshold
        )
        logger.info("Visualization completed")
    except Exception as e:
        logger.error(f"Error creating visualizations: {e}")

    logger.info("\n" + "=" * 60)
    logger.info("Pipeline completed successfully!")
    logger.info("=" * 60)
    logger.info(f"Results saved to: {output_path}")


def main():
    """Main function."""
    parser = argparse.ArgumentParser(
        description='Run the complete fall-risk pipeline on synthetic data'
    )
    parser.add_argument(
        '--output',
        type=str,
        default='data/output/',
        help='Output directory'
    )
    parser.add_argument('--n', type=int, default=2000, help='Number of synthetic scenes')
    parser.add_argument('--seed', type=int, default=42, help='Seed for every step')
    parser.add_argument('--stream-frames', type=int, default=200, help='Frames replayed through the monitor')
    parser.add_argument('--config', type=str, default=None, help='YAML file with config overrides')

    args = parser.parse_args()

    try:
        run_pipeline(
            args.output,
            n=args.n,
            seed=args.seed,
            stream_frames=args.stream_frames,
            config_path=args.config
        )
    except Exception as e:
        logger.error(f"Pipeline error: {e}")
        if exit_code_for(e) == EXIT_INTERNAL:
            traceback.print_exc()
        sys.exit(exit_code_for(e))


if __name__ == '__main__':
    main()
