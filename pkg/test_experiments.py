#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import logging

import pytest

import autodiff as ad
from analysis import nmse
from channel_model import NormalizationMeta, renormalize
from config_manager import ExperimentConfigManager
from experiments import SUITE_REGIMES, TEACHER, ExperimentRunner, evaluate_shifted, median, ordering_checks

SMALL_CONFIG = {
    'n_t': 8,
    'n_c': 8,
    'gamma': '1/16',
    'crblock_width': 2,
    'counts': {'train': 20, 'val': 5, 'test': 5},
    'datasets': ['dataset1'],
    'seeds': [0],
    'train': {'max_epochs': 1},
}


def _experiment(**changes):
    return ExperimentConfigManager(dict(SMALL_CONFIG, **changes)).resolve()


class _Identity:
    def forward(self, x, training=None):
        return ad.Tensor(x)


class TestTeacherCache:

    def test_cached_teacher_is_reused(self, tmp_path, caplog):
        first = ExperimentRunner(_experiment(), str(tmp_path)).teacher(0)
        with caplog.at_level(logging.INFO):
            again = ExperimentRunner(_experiment(), str(tmp_path)).teacher(0)
        assert again == first
        assert 'Reusing teacher checkpoint' in caplog.text
        assert 'Retraining teacher' not in caplog.text

    def test_teacher_is_retrained_for_another_architecture(self, tmp_path, caplog):
        first = ExperimentRunner(_experiment(), str(tmp_path)).teacher(0)
        runner = ExperimentRunner(_experiment(gamma='1/8'), str(tmp_path))
        with caplog.at_level(logging.WARNING):
            teacher = runner.teacher(0)
        specs = runner.specs()
        assert teacher.encoder.spec_hash == specs['teacher_encoder'].spec_hash()
        assert teacher.decoder.spec_hash == specs['decoder'].spec_hash()
        assert teacher.encoder.spec_hash != first.encoder.spec_hash
        assert 'Retraining teacher' in caplog.text

    def test_teacher_is_retrained_for_another_schedule(self, tmp_path):
        ExperimentRunner(_experiment(), str(tmp_path)).teacher(0)
        runner = ExperimentRunner(_experiment(train={'max_epochs': 2}), str(tmp_path))
        runner.teacher(0)
        assert runner.load_result(TEACHER, 0)['timing']['vanilla']['epochs'] == 2


class TestOrderingChecks:

    @staticmethod
    def _results(**db):
        return [{'regime': regime, 'seed': 0, 'nmse_db': value} for regime, value in db.items()]

    def test_teacher_is_compared_with_every_student(self):
        rows = ordering_checks(self._results(teacher=-20.0, vanilla=-10.0, autoencoder_kd=-12.0, encoder_kd=-13.0,
                                             variant_encoder_kd=-14.0, sequential=-11.0))
        labels = [row['check'] for row in rows]
        assert labels[:len(SUITE_REGIMES)] == [f"teacher < {regime}" for regime in SUITE_REGIMES]
        assert len(rows) == len(SUITE_REGIMES) + 3
        assert all(row['passed'] for row in rows)

    def test_student_beating_the_teacher_fails(self):
        rows = ordering_checks(self._results(teacher=-20.0, vanilla=-10.0, autoencoder_kd=-12.0, encoder_kd=-13.0,
                                             variant_encoder_kd=-14.0, sequential=-25.0))
        failed = [row['check'] for row in rows if not row['passed']]
        assert failed == ['teacher < sequential', 'variant_encoder_kd < sequential']

    def test_missing_regime_fails(self):
        rows = ordering_checks(self._results(teacher=-20.0, vanilla=-10.0))
        assert not {row['check']: row['passed'] for row in rows}['teacher < encoder_kd']


class TestShiftedEvaluation:

    def test_same_normalization_is_lossless(self, tiny_dataset):
        result = evaluate_shifted(_Identity(), tiny_dataset, tiny_dataset.meta)
        assert result.linear == pytest.approx(0.0, abs=1e-20)
        assert result.count == len(tiny_dataset.test)

    def test_reference_is_not_clamped(self, tiny_dataset):
        meta = tiny_dataset.meta
        narrow = NormalizationMeta(meta.global_min / 4, meta.global_max / 4)
        clamped = renormalize(tiny_dataset, narrow)
        assert nmse(clamped.test, clamped.test, narrow).linear == 0.0
        assert evaluate_shifted(_Identity(), tiny_dataset, narrow).linear > 1e-6


def test_median_of_runs():
    assert median([-3.0, -1.0, -2.0]) == -2.0
    assert median([-4.0, -2.0]) == -3.0
    assert median([]) != median([])
