#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import json

import pytest

from cli import (EXIT_INVALID_CONFIG, EXIT_MISSING_ARTIFACT, EXIT_OK, EXIT_USAGE, dispatch)

SMALL_CONFIG = {
    'n_t': 8,
    'n_c': 8,
    'gamma': '1/16',
    'crblock_width': 2,
    'counts': {'train': 20, 'val': 5, 'test': 5},
    'datasets': ['dataset1'],
    'seeds': [0],
}


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _write_config(directory, config=None):
    path = directory / 'config.json'
    path.write_text(json.dumps(config or SMALL_CONFIG), encoding='utf-8')
    return str(path)


def _stdout_lines(capsys, prefix=''):
    return [line for line in capsys.readouterr().out.splitlines() if line.startswith(prefix)]


def _json_lines(capsys):
    return [json.loads(line) for line in _stdout_lines(capsys, '{')]


def test_flops_prints_total(workdir, capsys):
    assert dispatch(['flops']) == EXIT_OK
    assert _stdout_lines(capsys)[-1] == '601984'
    assert dispatch(['flops', '--gamma', '1/32']) == EXIT_OK
    assert _stdout_lines(capsys)[-1] == '339904'


def test_flops_per_layer(workdir, capsys):
    assert dispatch(['flops', '--per-layer']) == EXIT_OK
    lines = _stdout_lines(capsys)
    assert lines[-3:] == ['conv 77824', 'dense 524160', '601984']


def test_help_and_usage_errors(workdir):
    assert dispatch(['--help']) == EXIT_OK
    assert dispatch(['launch']) == EXIT_USAGE
    assert dispatch([]) == EXIT_USAGE
    assert dispatch(['flops', '--gamma', '1/3']) == EXIT_INVALID_CONFIG


def test_bad_config_is_rejected(workdir):
    config = _write_config(workdir, dict(SMALL_CONFIG, learning_rate=0.5))
    assert dispatch(['gen-data', '--workdir', str(workdir), '--config', config]) == EXIT_INVALID_CONFIG


def test_missing_explicit_config(workdir):
    missing = str(workdir / 'absent.json')
    assert dispatch(['gen-data', '--workdir', str(workdir), '--config', missing]) == EXIT_MISSING_ARTIFACT


def test_default_config_is_created(workdir):
    assert dispatch(['eval', '--workdir', str(workdir)]) == EXIT_MISSING_ARTIFACT
    assert (workdir / 'data' / 'config.json').exists()
    assert (workdir / 'logs' / 'csikd.log').exists()


def test_dataset_digest_is_reproducible(tmp_path, monkeypatch, capsys):
    digests = []
    for name in ('first', 'second'):
        directory = tmp_path / name
        directory.mkdir()
        monkeypatch.chdir(directory)
        config = _write_config(directory)
        assert dispatch(['gen-data', '--workdir', str(directory), '--config', config]) == EXIT_OK
        lines = _stdout_lines(capsys, 'dataset1 ')
        assert len(lines) == 1
        digests.append(lines[0].split()[1])
        assert (directory / 'data' / 'datasets' / 'dataset1.csid').exists()
    assert digests[0] == digests[1]
    assert len(digests[0]) == 64


def test_train_then_eval(workdir, capsys):
    config = _write_config(workdir)
    common = ['--workdir', str(workdir), '--config', config]
    assert dispatch(['train', '--max-epochs', '1'] + common) == EXIT_OK
    result = _json_lines(capsys)[-1]
    assert (result['regime'], result['seed'], result['test_samples']) == ('vanilla', 0, 5)
    assert (workdir / 'runs' / 'vanilla' / '0' / 'manifest.json').exists()

    assert dispatch(['eval', '--domain', 'both'] + common) == EXIT_OK
    angular, spatial = _json_lines(capsys)
    assert angular['domain'] == 'angular-delay'
    assert spatial['domain'] == 'spatial-frequency'
    assert spatial['nmse_linear'] == pytest.approx(angular['nmse_linear'], rel=1e-9)
    assert angular['nmse_linear'] == pytest.approx(result['nmse_linear'], rel=1e-12)


def test_invalid_distillation_weight(workdir):
    config = _write_config(workdir)
    assert dispatch(['distill', '--alpha', '2', '--workdir', str(workdir), '--config', config]) == EXIT_INVALID_CONFIG


def test_variant_steps_need_their_inputs(workdir):
    config = _write_config(workdir)
    common = ['--workdir', str(workdir), '--config', config]
    assert dispatch(['variant-distill', '--step', 'student-encoder'] + common) == EXIT_MISSING_ARTIFACT
    assert dispatch(['variant-distill', '--step', 'decoder-finetune'] + common) == EXIT_MISSING_ARTIFACT
    assert not (workdir / 'runs' / 'teacher').exists()
