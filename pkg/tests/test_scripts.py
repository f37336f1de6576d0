"""
End-to-end tests of the command-line steps on small synthetic data.
"""

import json

import matplotlib
import pytest

from conftest import ROOT, load_module

matplotlib.use('Agg')

from utils.errors import EXIT_DATA, EXIT_OK, EXIT_USAGE


TINY_TRAIN = ['--trees', '5', '--min-leaf', '5']


@pytest.fixture
def dataset_path(tmp_path, fallrisk_cli):
    path = tmp_path / 'data.ndjson'
    argv = ['--quiet', 'generate', '--n', '120', '--seed', '3', '--out', str(path)]
    assert fallrisk_cli.main(argv) == EXIT_OK
    return path


@pytest.fixture
def model_path(tmp_path, dataset_path, fallrisk_cli):
    path = tmp_path / 'model.json'
    argv = ['--quiet', 'train', '--data', str(dataset_path), '--feature-set', 'knee', '--out-model', str(path)]
    assert fallrisk_cli.main(argv + TINY_TRAIN) == EXIT_OK
    return path


def test_generate_is_deterministic(tmp_path, dataset_path, fallrisk_cli):
    again = tmp_path / 'again.ndjson'
    assert fallrisk_cli.main(['--quiet', 'generate', '--n', '120', '--seed', '3', '--out', str(again)]) == EXIT_OK
    assert again.read_bytes() == dataset_path.read_bytes()
    header = json.loads(again.read_text().splitlines()[0])
    assert header['seed'] == 3 and header['params']['n'] == 120


def test_train_is_deterministic(tmp_path, dataset_path, model_path, fallrisk_cli):
    again = tmp_path / 'again.json'
    argv = ['--quiet', 'train', '--data', str(dataset_path), '--feature-set', 'knee', '--out-model', str(again)]
    assert fallrisk_cli.main(argv + TINY_TRAIN) == EXIT_OK
    assert again.read_bytes() == model_path.read_bytes()
    assert (tmp_path / 'model_importance.csv').exists()


def test_evaluate_writes_report(tmp_path, dataset_path, fallrisk_cli):
    report = tmp_path / 'report.json'
    folds = tmp_path / 'folds.csv'
    argv = [
        '--quiet', 'evaluate', '--data', str(dataset_path), '--feature-set', 'knee-head',
        '--folds', '3', '--repeats', '2', '--report', str(report), '--emit-csv', str(folds),
    ]
    assert fallrisk_cli.main(argv + TINY_TRAIN) == EXIT_OK
    document = json.loads(report.read_text())
    assert document['feature_set'] == 'knee-head'
    assert len(document['per_fold_accuracies']) == 6
    assert len(folds.read_text().strip().splitlines()) == 7


def test_monitor_replays_frames(tmp_path, dataset_path, model_path, fallrisk_cli):
    frames = tmp_path / 'frames.ndjson'
    output = tmp_path / 'out.ndjson'
    lines = dataset_path.read_text().splitlines()[1:21]
    frames.write_text('\n'.join(json.dumps(json.loads(line)['frame']) for line in lines) + '\n')
    argv = ['--quiet', 'monitor', '--model', str(model_path), '--input', str(frames), '--output', str(output)]
    assert fallrisk_cli.main(argv) == EXIT_OK
    records = [json.loads(line) for line in output.read_text().splitlines()]
    assert sum(r['type'] == 'score' for r in records) == 20
    assert all(r['type'] != 'diagnostic' for r in records)


def test_evaluate_is_deterministic(tmp_path, dataset_path, fallrisk_cli):
    outputs = []
    for run in ('a', 'b'):
        report, folds = tmp_path / f'report_{run}.json', tmp_path / f'folds_{run}.csv'
        argv = [
            '--quiet', 'evaluate', '--data', str(dataset_path), '--feature-set', 'knee',
            '--folds', '3', '--repeats', '2', '--seed', '8', '--report', str(report), '--emit-csv', str(folds),
        ]
        assert fallrisk_cli.main(argv + TINY_TRAIN) == EXIT_OK
        outputs.append((report.read_bytes(), folds.read_bytes()))
    assert outputs[0] == outputs[1]


def test_monitor_is_deterministic(tmp_path, dataset_path, model_path, fallrisk_cli):
    frames = tmp_path / 'frames.ndjson'
    lines = dataset_path.read_text().splitlines()[1:41]
    frames.write_text('\n'.join(json.dumps(json.loads(line)['frame']) for line in lines) + '\nnot json\n')
    outputs = []
    for run in ('a', 'b'):
        output = tmp_path / f'out_{run}.ndjson'
        argv = ['--quiet', 'monitor', '--model', str(model_path), '--input', str(frames), '--output', str(output)]
        assert fallrisk_cli.main(argv) == EXIT_OK
        outputs.append(output.read_bytes())
    assert outputs[0] == outputs[1]
    assert outputs[0].count(b'"type":"diagnostic"') == 1


def test_config_file_overrides(tmp_path, fallrisk_cli):
    config = tmp_path / 'override.yaml'
    config.write_text('synthetic:\n  n: 40\n  seed: 9\n')
    out = tmp_path / 'data.ndjson'
    assert fallrisk_cli.main(['--quiet', '--config', str(config), 'generate', '--out', str(out)]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 41


def test_missing_required_flag_is_usage_error(fallrisk_cli):
    with pytest.raises(SystemExit) as excinfo:
        fallrisk_cli.main(['train'])
    assert excinfo.value.code == EXIT_USAGE


def test_unknown_subcommand_is_usage_error(fallrisk_cli):
    with pytest.raises(SystemExit) as excinfo:
        fallrisk_cli.main(['predict'])
    assert excinfo.value.code == EXIT_USAGE


def test_missing_dataset_is_data_error(tmp_path, fallrisk_cli):
    argv = ['--quiet', 'train', '--data', str(tmp_path / 'nope.ndjson'), '--out-model', str(tmp_path / 'm.json')]
    assert fallrisk_cli.main(argv) == EXIT_DATA


def test_corrupt_model_is_data_error(tmp_path, fallrisk_cli):
    model = tmp_path / 'model.json'
    model.write_bytes(b'{"format": "fallrisk-forest", "format_vers')
    frames = tmp_path / 'frames.ndjson'
    frames.write_text('')
    argv = ['--quiet', 'monitor', '--model', str(model), '--input', str(frames), '--output', str(tmp_path / 'o')]
    assert fallrisk_cli.main(argv) == EXIT_DATA


def test_invalid_parameter_is_data_error(tmp_path, fallrisk_cli):
    argv = ['--quiet', 'generate', '--n', '10', '--class-mix', '1.0', '--out', str(tmp_path / 'd.ndjson')]
    assert fallrisk_cli.main(argv) == EXIT_DATA


@pytest.mark.slow
def test_pipeline_produces_outputs(tmp_path):
    config = tmp_path / 'small.yaml'
    config.write_text(
        'classifier:\n  n_trees: 5\n  min_samples_leaf: 5\n'
        'evaluation:\n  folds: 3\n  repeats: 1\n'
    )
    pipeline = load_module(ROOT / 'scripts' / 'run_pipeline.py', 'run_pipeline_under_test')
    output = tmp_path / 'output'
    pipeline.run_pipeline(str(output), n=150, seed=5, stream_frames=30, config_path=str(config))

    assert (tmp_path / 'processed' / 'synthetic.ndjson').exists()
    assert (tmp_path / 'models' / 'model.json').exists()
    assert (output / 'ablation.json').exists()
    monitor_lines = (output / 'monitor_output.ndjson').read_text().splitlines()
    assert sum(json.loads(line)['type'] == 'score' for line in monitor_lines) == 30
    assert (output / 'figures' / 'ablation_accuracy.png').exists()
