#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import json
import logging
import os
import shutil
from typing import Any, Dict, List

from models import REGIMES, ExperimentConfig, KdConfig, ScenarioConfig, TrainConfig

logger = logging.getLogger(__name__)

CONFIG_FILE = 'config.json'
BACKUP_FILE = 'config_backup.json'

_EXPERIMENT_KEYS = ('seed', 'seeds', 'n_t', 'n_c', 'gamma', 'crblock_width', 'counts', 'train', 'kd',
                    'regime', 'output_dir', 'workers')
_SCENARIO_DEFAULTS = ScenarioConfig().to_dict()
# Shape comes from n_t / n_c; name from the dataset list
_SCENARIO_FIELDS = tuple(k for k in _SCENARIO_DEFAULTS if k not in ('name', 'n_tx_antennas', 'n_subcarriers'))


def create_default_config():
    """Default experiment: a LOS dataset and its NLOS counterpart, desk-scale counts"""
    return {
        'seed': 0,
        'seeds': [0, 1, 2],
        'n_t': 32,
        'n_c': 32,
        'gamma': '1/16',
        'crblock_width': 8,
        'counts': {'train': 4000, 'val': 1000, 'test': 1000},
        'regime': 'vanilla',
        'output_dir': 'runs',
        'workers': 1,
        'train': TrainConfig().to_dict(),
        'kd': KdConfig().to_dict(),
        'datasets': ['dataset1', 'dataset2'],
        # max_delay is left out so it follows each dataset's bandwidth
        'scenario': {field: _SCENARIO_DEFAULTS[field] for field in _SCENARIO_FIELDS if field != 'max_delay'},
        'dataset2_los': False,
    }


def save_config_with_backup(config_data, config_file):
    """Save config, copying the previous file to the backup first"""
    directory = os.path.dirname(os.path.abspath(config_file))
    os.makedirs(directory, exist_ok=True)
    backup_file = os.path.join(directory, BACKUP_FILE)
    try:
        if os.path.exists(config_file):
            try:
                shutil.copy2(config_file, backup_file)
            except OSError as backup_err:
                logger.warning(f"⚠️ Could not create backup: {str(backup_err)}")
        with open(config_file, 'w', encoding='utf-8') as f:
            json.dump(config_data, f, indent=2, ensure_ascii=False)
        logger.info(f"💾 Configuration saved to {config_file}")
    except Exception as e:
        logger.error(f"❌ Error saving config: {str(e)}")
        raise


def _read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        content = f.read().strip()
    if not content:
        raise ValueError(f"{path} is empty")
    try:
        return json.loads(content)
    except json.JSONDecodeError as e:
        raise ValueError(f"JSON decode error in {path}: {str(e)}")


def load_config(config_file, create_missing=True):
    """
    Read the raw experiment config

    A missing file is replaced by the default config; a corrupt one falls back to
    the backup next to it.

    Raises:
        FileNotFoundError: Missing file and create_missing is False
        ValueError: Corrupt file without a usable backup
    """
    if not os.path.exists(config_file):
        if not create_missing:
            raise FileNotFoundError(f"Config file not found: {config_file}")
        logger.warning(f"⚠️ Config file {config_file} does not exist, creating default")
        config_data = create_default_config()
        save_config_with_backup(config_data, config_file)
        return config_data
    try:
        return _read_json(config_file)
    except ValueError as e:
        logger.error(f"❌ {str(e)}")
        backup_file = os.path.join(os.path.dirname(os.path.abspath(config_file)), BACKUP_FILE)
        if not os.path.exists(backup_file):
            raise
        config_data = _read_json(backup_file)
        logger.warning(f"⚠️ Loaded config from backup {backup_file}")
        return config_data


def _convert(value, default):
    if isinstance(default, bool):
        if isinstance(value, str):
            lowered = value.strip().lower()
            if lowered in ('true', '1', 'yes'):
                return True
            if lowered in ('false', '0', 'no'):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if isinstance(value, (bool, int)):
            return bool(value)
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        converted = int(float(value))
        if converted != float(value):
            raise ValueError(f"not an integer: {value!r}")
        return converted
    if isinstance(default, float):
        return float(value)
    return value


class ExperimentConfigManager:
    """
    Resolves a raw JSON experiment config into a validated ExperimentConfig.
    Each dataset's scenario starts from the global 'scenario' block and applies
    its own '<dataset>_<field>' keys.
    """

    def __init__(self, config: Dict[str, Any]):
        self.config = dict(config)
        self.datasets = list(self.config.get('datasets', ['dataset1']))

    def scenario_config(self, dataset: str, errors: List[str] = None) -> ScenarioConfig:
        """
        Scenario for one dataset with per-dataset overrides

        Args:
            dataset (str): Dataset name (e.g. 'dataset2')
            errors (list): Collects conversion problems instead of raising

        Returns:
            ScenarioConfig: Resolved scenario
        """
        collect = errors is not None
        errors = errors if collect else []
        base = self.config.get('scenario', {})
        # Datasets get consecutive seeds unless one is given explicitly
        offset = self.datasets.index(dataset) if dataset in self.datasets else 0
        values = {'name': dataset,
                  'n_tx_antennas': self.config.get('n_t', 32),
                  'n_subcarriers': self.config.get('n_c', 32),
                  'seed': base.get('seed', 0) + offset}
        for field in _SCENARIO_FIELDS:
            key = f'{dataset}_{field}'
            if key in self.config:
                raw = self.config[key]
            elif field != 'seed' and field in base:
                raw = base[field]
            else:
                continue
            try:
                values[field] = _convert(raw, _SCENARIO_DEFAULTS[field])
            except (TypeError, ValueError) as e:
                errors.append(f"{key}: {str(e)}")
        if not collect and errors:
            raise ValueError('; '.join(errors))
        return ScenarioConfig(**values)

    def schema_errors(self) -> List[str]:
        errors = []
        dataset_prefixes = tuple(f'{d}_' for d in self.datasets)
        for key in self.config:
            if key in _EXPERIMENT_KEYS or key in ('datasets', 'scenario'):
                continue
            if key.startswith(dataset_prefixes):
                field = next(key[len(p):] for p in dataset_prefixes if key.startswith(p))
                if field in _SCENARIO_FIELDS:
                    continue
            errors.append(f"unknown config key '{key}'")
        for field in self.config.get('scenario', {}):
            if field not in _SCENARIO_FIELDS:
                errors.append(f"unknown scenario field '{field}'")
        for section, known in (('train', TrainConfig().to_dict()), ('kd', KdConfig().to_dict())):
            for field in self.config.get(section, {}):
                if field not in known:
                    errors.append(f"unknown {section} field '{field}'")
        if not self.datasets or len(set(self.datasets)) != len(self.datasets):
            errors.append(f"datasets must be a non-empty list of unique names (got {self.datasets!r})")
        if self.config.get('regime', 'vanilla') not in REGIMES:
            errors.append(f"regime must be one of {', '.join(REGIMES)}")
        return errors

    def resolve(self) -> ExperimentConfig:
        """
        Build and validate the experiment config

        Raises:
            ValueError: Listing every schema and value problem found
        """
        errors = self.schema_errors()
        scenarios = [self.scenario_config(d, errors) for d in self.datasets]
        experiment = ExperimentConfig(**{k: self.config[k] for k in _EXPERIMENT_KEYS if k in self.config},
                                      scenarios=[s.to_dict() for s in scenarios])
        try:
            errors.extend(experiment.validate())
        except (TypeError, ValueError) as e:
            errors.append(str(e))
        if errors:
            for error in errors:
                logger.error(f"❌ Config: {error}")
            raise ValueError(f"Invalid config ({len(errors)} problem(s)): " + '; '.join(errors))

        logger.info(f"📊 Experiment config: {experiment.n_t}x{experiment.n_c}, gamma {experiment.gamma} "
                    f"(N_s={experiment.n_s}), regime {experiment.regime}")
        for scenario in scenarios:
            logger.info(f"   📡 {scenario.name}: LOS={scenario.los}, {scenario.n_clusters} clusters, "
                        f"{scenario.bandwidth / 1e6:g} MHz, seed {scenario.seed}")
        return experiment

    def with_overrides(self, **overrides) -> 'ExperimentConfigManager':
        """Copy with top-level or dotted ('train.max_epochs') keys replaced"""
        data = json.loads(json.dumps(self.config))
        for key, value in overrides.items():
            if value is None:
                continue
            if '.' in key:
                section, field = key.split('.', 1)
                data.setdefault(section, {})[field] = value
            else:
                data[key] = value
        return ExperimentConfigManager(data)
