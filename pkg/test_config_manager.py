#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import json

import pytest

from config_manager import (BACKUP_FILE, ExperimentConfigManager, create_default_config, load_config,
                            save_config_with_backup)


def test_missing_config_is_created(tmp_path):
    path = tmp_path / 'config.json'
    data = load_config(str(path))
    assert data == create_default_config()
    assert json.loads(path.read_text(encoding='utf-8')) == data


def test_missing_config_without_default(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / 'config.json'), create_missing=False)


def test_corrupt_config_falls_back_to_backup(tmp_path):
    path = str(tmp_path / 'config.json')
    first = dict(create_default_config(), regime='encoder_kd')
    save_config_with_backup(first, path)
    save_config_with_backup(create_default_config(), path)
    assert (tmp_path / BACKUP_FILE).exists()
    (tmp_path / 'config.json').write_text('{"seed": ', encoding='utf-8')
    assert load_config(path)['regime'] == 'encoder_kd'


def test_corrupt_config_without_backup(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text('not json', encoding='utf-8')
    with pytest.raises(ValueError):
        load_config(str(path))


def test_default_config_resolves():
    experiment = ExperimentConfigManager(create_default_config()).resolve()
    assert experiment.n_s == 128
    assert [s.name for s in experiment.scenarios] == ['dataset1', 'dataset2']
    assert [s.los for s in experiment.scenarios] == [True, False]
    assert [s.seed for s in experiment.scenarios] == [0, 1]
    assert experiment.scenario('dataset2').max_delay == pytest.approx(4 / 70e6)
    assert experiment.train.max_epochs == 200


def test_unknown_keys_are_rejected():
    for key, value in (('learning_rate', 0.1), ('dataset1_colour', 'red'), ('dataset9_los', False)):
        with pytest.raises(ValueError):
            ExperimentConfigManager(dict(create_default_config(), **{key: value})).resolve()
    config = create_default_config()
    config['train']['momentum'] = 0.9
    with pytest.raises(ValueError):
        ExperimentConfigManager(config).resolve()


def test_string_overrides_are_converted():
    config = dict(create_default_config(), dataset1_n_clusters='5', dataset1_los='false',
                  dataset2_bandwidth='20e6')
    experiment = ExperimentConfigManager(config).resolve()
    first, second = experiment.scenarios
    assert (first.n_clusters, first.los) == (5, False)
    assert second.bandwidth == 20e6
    assert second.n_clusters == 3


def test_bad_values_are_reported():
    with pytest.raises(ValueError):
        ExperimentConfigManager(dict(create_default_config(), dataset1_los='maybe')).resolve()
    with pytest.raises(ValueError):
        ExperimentConfigManager(dict(create_default_config(), gamma='1/3')).resolve()
    with pytest.raises(ValueError):
        ExperimentConfigManager(dict(create_default_config(), regime='pretrain')).resolve()


def test_explicit_dataset_seed():
    experiment = ExperimentConfigManager(dict(create_default_config(), dataset2_seed=42)).resolve()
    assert [s.seed for s in experiment.scenarios] == [0, 42]


def test_overrides_leave_original_untouched():
    manager = ExperimentConfigManager(create_default_config())
    tuned = manager.with_overrides(**{'train.max_epochs': 5, 'gamma': '1/32', 'regime': None})
    assert tuned.resolve().train.max_epochs == 5
    assert tuned.resolve().n_s == 64
    assert tuned.config['regime'] == 'vanilla'
    assert manager.config['train']['max_epochs'] == 200
    assert manager.config['gamma'] == '1/16'
