"""
Fall-risk command-line interface.

Exposes the pipeline steps as subcommands sharing one config file:

    python scripts/fallrisk.py generate --n 2000 --class-mix 0.5 --seed 42 --tau 0 --noise 2 --out data/processed/synthetic.ndjson
    python scripts/fallrisk.py train --data data/processed/synthetic.ndjson --feature-set kp-knee-head --seed 42 --out-model data/models/model.json
    python scripts/fallrisk.py evaluate --data data/processed/synthetic.ndjson --feature-set kp-knee-head --folds 10 --repeats 10 --seed 42
    python scripts/fallrisk.py ablate --data data/processed/synthetic.ndjson --seed 42
    python scripts/fallrisk.py monitor --model data/models/model.json --input - --raise 3 --clear 5 --threshold 0.5

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 internal invariant violation.
"""

import argparse
import importlib.util
import logging
import sys
import traceback
from pathlib import Path


sys.path.append(str(Path(__file__).parent.parent))

from utils.config import load_config
from utils.errors import EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, exit_code_for


logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def load_module(module_path, module_name):
    """Load a module from a file path."""
    spec = importlib.util.spec_from_file_location(module_name, module_path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


SUBCOMMANDS = {
    'generate': ("1_generate_dataset.py", 'Generate a labeled synthetic dataset'),
    'train': ("2_train_model.py", 'Train the classifier on a dataset'),
    'evaluate': ("3_evaluate_model.py", 'Repeated stratified k-fold evaluation'),
    'ablate': ("4_ablate_features.py", 'Cross-validate all four feature sets'),
    'monitor': ("5_monitor_stream.py", 'Score a frame stream and emit alerts'),
}


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    """
    Build the top-level parser with one subparser per step.

    Returns:
        (parser, {subcommand: step module})
    """
    parser = CliArgumentParser(
        prog='fallrisk',
        description='In-bed fall-risk assessment from bed contours and body keypoints'
    )
    parser.add_argument('--config', type=str, default=None, help='YAML file with config overrides')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', action='store_true', help='Debug logging')
    verbosity.add_argument('--quiet', action='store_true', help='Warnings only, no progress bars')

    subparsers = parser.add_subparsers(dest='command', parser_class=CliArgumentParser)
    subparsers.required = True

    modules = {}
    scripts_dir = Path(__file__).parent
    for name, (filename, description) in SUBCOMMANDS.items():
        module = load_module(scripts_dir / filename, f"{name}_step")
        subparser = subparsers.add_parser(name, help=description, description=description)
        module.add_arguments(subparser)
        modules[name] = module

    return parser, modules


def main(argv=None):
    """
    Parse arguments, run the selected step and return its exit code.

    Args:
        argv: Argument list, defaults to sys.argv[1:]

    Returns:
        Process exit code
    """
    parser, modules = build_parser()
    args = parser.parse_args(argv)

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    elif args.quiet:
        logging.getLogger().setLevel(logging.WARNING)

    try:
        config = load_config(args.config)
        modules[args.command].run_from_args(args, config)
    except Exception as e:
        logger.error(f"Error in {args.command}: {e}")
        if exit_code_for(e) == EXIT_INTERNAL:
            traceback.print_exc()
        return exit_code_for(e)

    logger.debug(f"{args.command} completed")
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
