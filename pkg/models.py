#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import math
from fractions import Fraction


class ScenarioConfig:
    """Cluster channel scenario used to synthesize one dataset"""

    def __init__(self, **kwargs):
        self.name = kwargs.get('name', 'dataset1')
        self.n_tx_antennas = kwargs.get('n_tx_antennas', 32)
        self.n_subcarriers = kwargs.get('n_subcarriers', 32)
        self.n_clusters = kwargs.get('n_clusters', 3)
        self.n_subpaths_per_cluster = kwargs.get('n_subpaths_per_cluster', 10)
        self.center_frequency = kwargs.get('center_frequency', 2.655e9)
        self.bandwidth = kwargs.get('bandwidth', 70e6)
        self.antenna_spacing_over_wavelength = kwargs.get('antenna_spacing_over_wavelength', 0.5)
        self.los = kwargs.get('los', True)
        self.rician_k_factor = kwargs.get('rician_k_factor', 9.0)
        self.angle_spread = kwargs.get('angle_spread', 0.05)
        # Default: four delay taps at the configured bandwidth
        self.max_delay = kwargs.get('max_delay', 4.0 / self.bandwidth if self.bandwidth else 0.0)
        self.angle_center_low = kwargs.get('angle_center_low', -math.pi / 3)
        self.angle_center_high = kwargs.get('angle_center_high', math.pi / 3)
        self.seed = kwargs.get('seed', 0)

    @property
    def delay_taps(self):
        return self.max_delay * self.bandwidth

    def validate(self):
        """
        Check scenario invariants

        Returns:
            list: Human readable problems, empty when the scenario is valid
        """
        errors = []
        for field in ('n_tx_antennas', 'n_subcarriers', 'n_clusters', 'n_subpaths_per_cluster'):
            value = getattr(self, field)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                errors.append(f"{self.name}.{field} must be an integer >= 1 (got {value!r})")
        if not self.bandwidth > 0:
            errors.append(f"{self.name}.bandwidth must be > 0 (got {self.bandwidth!r})")
        if not self.max_delay >= 0:
            errors.append(f"{self.name}.max_delay must be >= 0 (got {self.max_delay!r})")
        if not self.antenna_spacing_over_wavelength > 0:
            errors.append(f"{self.name}.antenna_spacing_over_wavelength must be > 0 "
                          f"(got {self.antenna_spacing_over_wavelength!r})")
        if not self.angle_spread >= 0:
            errors.append(f"{self.name}.angle_spread must be >= 0 (got {self.angle_spread!r})")
        if not (-math.pi / 2 <= self.angle_center_low <= self.angle_center_high <= math.pi / 2):
            errors.append(f"{self.name}.angle_center range must lie inside [-pi/2, pi/2]")
        if not 0 <= int(self.seed) < 2 ** 64:
            errors.append(f"{self.name}.seed must fit in 64 bits (got {self.seed!r})")
        return errors

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return ScenarioConfig(**data)

    def to_dict(self):
        return {
            'name': self.name,
            'n_tx_antennas': self.n_tx_antennas,
            'n_subcarriers': self.n_subcarriers,
            'n_clusters': self.n_clusters,
            'n_subpaths_per_cluster': self.n_subpaths_per_cluster,
            'center_frequency': self.center_frequency,
            'bandwidth': self.bandwidth,
            'antenna_spacing_over_wavelength': self.antenna_spacing_over_wavelength,
            'los': self.los,
            'rician_k_factor': self.rician_k_factor,
            'angle_spread': self.angle_spread,
            'max_delay': self.max_delay,
            'angle_center_low': self.angle_center_low,
            'angle_center_high': self.angle_center_high,
            'seed': self.seed,
        }

    @staticmethod
    def from_dict(data):
        return ScenarioConfig(**data)

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.to_dict() == other.to_dict()


class TrainConfig:
    """Optimization schedule shared by every training regime"""

    def __init__(self, **kwargs):
        self.initial_lr = kwargs.get('initial_lr', 1e-3)
        self.lr_drop_epoch = kwargs.get('lr_drop_epoch', 100)
        self.dropped_lr = kwargs.get('dropped_lr', 1e-4)
        self.patience = kwargs.get('patience', 50)
        self.batch_size = kwargs.get('batch_size', 200)
        self.max_epochs = kwargs.get('max_epochs', 200)
        self.seed = kwargs.get('seed', 0)
        self.fine_tune_fraction = kwargs.get('fine_tune_fraction', 0.15)
        self.fine_tune_lr = kwargs.get('fine_tune_lr', 1e-4)
        self.precision = kwargs.get('precision', 'float64')

    def validate(self):
        errors = []
        if not 0 < self.dropped_lr <= self.initial_lr:
            errors.append(f"train.dropped_lr must satisfy 0 < dropped_lr <= initial_lr "
                          f"(got {self.dropped_lr!r}, {self.initial_lr!r})")
        if not self.fine_tune_lr > 0:
            errors.append(f"train.fine_tune_lr must be > 0 (got {self.fine_tune_lr!r})")
        if int(self.patience) < 1:
            errors.append(f"train.patience must be >= 1 (got {self.patience!r})")
        if int(self.batch_size) < 2:
            errors.append(f"train.batch_size must be >= 2 (got {self.batch_size!r})")
        if int(self.max_epochs) < 0:
            errors.append(f"train.max_epochs must be >= 0 (got {self.max_epochs!r})")
        if int(self.lr_drop_epoch) < 0:
            errors.append(f"train.lr_drop_epoch must be >= 0 (got {self.lr_drop_epoch!r})")
        if not 0 <= self.fine_tune_fraction <= 1:
            errors.append(f"train.fine_tune_fraction must lie in [0, 1] (got {self.fine_tune_fraction!r})")
        if self.precision not in ('float32', 'float64'):
            errors.append(f"train.precision must be float32 or float64 (got {self.precision!r})")
        return errors

    def resolved(self, n_train):
        """
        Apply the desk-scale rules to the configured schedule

        Args:
            n_train (int): Number of training samples

        Returns:
            TrainConfig: Copy with lr_drop_epoch scaled for short runs and a
            smaller batch for small datasets
        """
        data = self.to_dict()
        if self.max_epochs < 200:
            data['lr_drop_epoch'] = max(1, int(round(self.lr_drop_epoch * self.max_epochs / 200)))
        if n_train < 1000 and self.batch_size == 200:
            data['batch_size'] = 32
        return TrainConfig(**data)

    def fine_tune_budget(self, distill_epochs):
        if self.fine_tune_fraction <= 0 or distill_epochs <= 0:
            return 0
        return max(1, int(math.ceil(self.fine_tune_fraction * distill_epochs)))

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return TrainConfig(**data)

    def to_dict(self):
        return {
            'initial_lr': self.initial_lr,
            'lr_drop_epoch': self.lr_drop_epoch,
            'dropped_lr': self.dropped_lr,
            'patience': self.patience,
            'batch_size': self.batch_size,
            'max_epochs': self.max_epochs,
            'seed': self.seed,
            'fine_tune_fraction': self.fine_tune_fraction,
            'fine_tune_lr': self.fine_tune_lr,
            'precision': self.precision,
        }

    @staticmethod
    def from_dict(data):
        return TrainConfig(**data)


class KdConfig:
    """Distillation balance (alpha) and softmax temperature"""

    def __init__(self, **kwargs):
        self.alpha = kwargs.get('alpha', 0.3)
        self.temperature = kwargs.get('temperature', 5.0)

    def validate(self):
        errors = []
        if not 0 <= self.alpha <= 1:
            errors.append(f"kd.alpha must lie in [0, 1] (got {self.alpha!r})")
        if not self.temperature > 0:
            errors.append(f"kd.temperature must be > 0 (got {self.temperature!r})")
        return errors

    def to_dict(self):
        return {'alpha': self.alpha, 'temperature': self.temperature}

    @staticmethod
    def from_dict(data):
        return KdConfig(**data)


REGIMES = ('vanilla', 'autoencoder_kd', 'encoder_kd', 'variant_encoder_kd', 'sequential')


def parse_gamma(gamma):
    """
    Parse a compression ratio given as '1/16', 0.0625 or a Fraction

    Returns:
        Fraction: Exact compression ratio
    """
    if isinstance(gamma, Fraction):
        return gamma
    if isinstance(gamma, str):
        return Fraction(gamma.strip())
    return Fraction(gamma).limit_denominator(1 << 20)


class ExperimentConfig:
    """Everything one experiment run needs: datasets, networks, schedule and regime"""

    def __init__(self, **kwargs):
        self.seed = kwargs.get('seed', 0)
        self.seeds = kwargs.get('seeds', [0, 1, 2])
        self.n_t = kwargs.get('n_t', 32)
        self.n_c = kwargs.get('n_c', 32)
        self.gamma = kwargs.get('gamma', '1/16')
        self.crblock_width = kwargs.get('crblock_width', 8)
        self.counts = kwargs.get('counts', {'train': 4000, 'val': 1000, 'test': 1000})
        self.scenarios = [s if isinstance(s, ScenarioConfig) else ScenarioConfig(**s)
                          for s in kwargs.get('scenarios', [])]
        train = kwargs.get('train', {})
        self.train = train if isinstance(train, TrainConfig) else TrainConfig(**train)
        kd = kwargs.get('kd', {})
        self.kd = kd if isinstance(kd, KdConfig) else KdConfig(**kd)
        self.regime = kwargs.get('regime', 'vanilla')
        self.output_dir = kwargs.get('output_dir', 'runs')
        self.workers = kwargs.get('workers', 1)

    @property
    def n_s(self):
        return int(2 * self.n_t * self.n_c * parse_gamma(self.gamma))

    def validate(self):
        errors = []
        for field in ('n_t', 'n_c', 'crblock_width', 'workers'):
            value = getattr(self, field)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                errors.append(f"{field} must be an integer >= 1 (got {value!r})")
        if isinstance(self.crblock_width, int) and self.crblock_width < 2:
            errors.append(f"crblock_width must be >= 2 (got {self.crblock_width!r})")
        try:
            gamma = parse_gamma(self.gamma)
            n_s = 2 * self.n_t * self.n_c * gamma
            if not 0 < gamma <= 1:
                errors.append(f"gamma must lie in (0, 1] (got {self.gamma!r})")
            elif n_s.denominator != 1:
                errors.append(f"gamma {self.gamma!r} does not give an integer codeword length")
        except (TypeError, ValueError, ZeroDivisionError):
            errors.append(f"gamma is not a valid ratio (got {self.gamma!r})")
        for split in ('train', 'val', 'test'):
            count = self.counts.get(split) if isinstance(self.counts, dict) else None
            if not isinstance(count, int) or count < 1:
                errors.append(f"counts.{split} must be an integer >= 1 (got {count!r})")
        if self.regime not in REGIMES:
            errors.append(f"regime must be one of {', '.join(REGIMES)} (got {self.regime!r})")
        if not self.scenarios:
            errors.append("at least one scenario is required")
        for scenario in self.scenarios:
            errors.extend(scenario.validate())
            if (scenario.n_tx_antennas, scenario.n_subcarriers) != (self.n_t, self.n_c):
                errors.append(f"{scenario.name} shape {scenario.n_tx_antennas}x{scenario.n_subcarriers} "
                              f"does not match n_t x n_c = {self.n_t}x{self.n_c}")
        if not self.seeds or not all(isinstance(s, int) and s >= 0 for s in self.seeds):
            errors.append(f"seeds must be a non-empty list of non-negative integers (got {self.seeds!r})")
        errors.extend(self.train.validate())
        errors.extend(self.kd.validate())
        return errors

    def scenario(self, name=None):
        if name is None:
            return self.scenarios[0]
        for scenario in self.scenarios:
            if scenario.name == name:
                return scenario
        raise ValueError(f"Unknown scenario '{name}'")

    def to_dict(self):
        return {
            'seed': self.seed,
            'seeds': list(self.seeds),
            'n_t': self.n_t,
            'n_c': self.n_c,
            'gamma': str(self.gamma),
            'crblock_width': self.crblock_width,
            'counts': dict(self.counts),
            'scenarios': [s.to_dict() for s in self.scenarios],
            'train': self.train.to_dict(),
            'kd': self.kd.to_dict(),
            'regime': self.regime,
            'output_dir': self.output_dir,
            'workers': self.workers,
        }

    @staticmethod
    def from_dict(data):
        return ExperimentConfig(**data)
