#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Statistical orderings over three seeds at desk scale (hours of CPU time).
Enabled with CSIKD_RUN_DESK=1.
"""

import numpy as np
import pytest

from config_manager import ExperimentConfigManager, create_default_config
from experiments import reproduce, run_generalization

pytestmark = pytest.mark.desk


@pytest.fixture(scope='module')
def desk_experiment():
    return ExperimentConfigManager(create_default_config()).resolve()


@pytest.fixture(scope='module')
def desk_tables(desk_experiment, tmp_path_factory):
    return reproduce(desk_experiment, str(tmp_path_factory.mktemp('desk')), 'desk', benchmark=False)


def test_distilled_students_beat_vanilla(desk_tables):
    checks = {row['check']: row['passed'] for row in desk_tables['orderings']}
    assert checks['teacher < encoder_kd']
    assert checks['encoder_kd < vanilla']
    assert checks['autoencoder_kd < vanilla']


def test_variant_beats_sequential(desk_tables):
    checks = {row['check']: row['passed'] for row in desk_tables['orderings']}
    assert checks['variant_encoder_kd < sequential']


def test_encoder_kd_trains_faster(desk_tables):
    rows = desk_tables['training_time']
    assert len(rows) == 3
    encoder_seconds = np.median([r['encoder_kd_s'] + r['fine_tune_s'] for r in rows])
    assert encoder_seconds < np.median([r['autoencoder_kd_s'] for r in rows])
    ratios = [r['measured_speedup'] / r['predicted_speedup'] for r in rows]
    assert 0.5 <= np.median(ratios) <= 2.0


def test_mixed_teacher_generalizes(desk_experiment, tmp_path):
    rows = run_generalization(desk_experiment, str(tmp_path), 'scenario')
    assert np.median([r['d2_gain_db'] for r in rows]) > 0
