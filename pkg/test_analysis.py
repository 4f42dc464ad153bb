#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import math
import os
from fractions import Fraction

import numpy as np
import pandas as pd
import pytest

from analysis import (compare_domains, emit_report, flops_conv2d, flops_dense, flops_ratio, inference_benchmark,
                      model_flops, nmse, training_time_model)
from channel_model import SPATIAL_FREQUENCY, NormalizationMeta
from networks import Network, build_decoder, build_student_encoder, build_teacher_encoder


class TestFlops:

    def test_unit_layers(self):
        assert flops_conv2d(1, 1, 1, 1, 1, 1) == 4
        assert flops_dense(1, 1) == 1

    def test_reference_layers(self):
        assert flops_conv2d(32, 32, 2, 2, 3, 3) == 77824
        assert flops_dense(2048, 128) == 524160
        assert flops_dense(2048, 64) == 262080

    def test_student_encoder_totals(self):
        report = model_flops(build_student_encoder(32, 32, 128))
        assert report.total == 601984
        assert [layer for layer, _ in report.layers] == ['conv', 'dense']
        assert model_flops(build_student_encoder(32, 32, 64)).total == 339904

    @pytest.mark.parametrize('args', [(0, 1, 1, 1, 1, 1), (1, 1, 1, 1, 1, -3), (1, 1, True, 1, 1, 1),
                                      (1.5, 1, 1, 1, 1, 1)])
    def test_invalid_conv_counts(self, args):
        with pytest.raises(ValueError):
            flops_conv2d(*args)

    def test_invalid_dense_counts(self):
        with pytest.raises(ValueError):
            flops_dense(0, 4)

    def test_teacher_encoder_costs_more(self):
        student = model_flops(build_student_encoder(32, 32, 128))
        teacher = model_flops(build_teacher_encoder(32, 32, 128))
        assert teacher.total > student.total
        ratio = flops_ratio(student, teacher)
        assert ratio == Fraction(student.total, teacher.total)
        assert ratio < 1

    def test_batch_norm_and_activations_are_free(self):
        report = model_flops(build_decoder(8, 8, 8, crblock_width=2))
        names = [layer for layer, _ in report.layers]
        assert 'head_conv5x5_bn' not in names
        assert 'head_conv5x5' in names and 'dense' in names
        assert report.to_frame()['flops'].sum() == report.total


class TestNmse:

    def test_perfect_reconstruction(self, rng):
        x = rng.uniform(0, 1, (4, 2, 4, 4))
        result = nmse(x, x.copy())
        assert result.linear == 0.0
        assert result.db == -math.inf
        assert result.db_text == '-inf'

    def test_zero_reconstruction_is_zero_db(self, rng):
        x = rng.uniform(0.1, 1, (4, 2, 4, 4))
        result = nmse(x, np.zeros_like(x))
        assert result.linear == pytest.approx(1.0)
        assert result.db == pytest.approx(0.0, abs=1e-12)

    def test_half_reconstruction(self, rng):
        x = rng.uniform(0.1, 1, (4, 2, 4, 4))
        result = nmse(x, x / 2)
        assert result.linear == pytest.approx(0.25)
        assert result.db == pytest.approx(-6.0206, abs=1e-4)
        assert result.db_text == '-6.02'

    def test_scale_invariance(self, rng):
        x = rng.uniform(0, 1, (5, 2, 4, 4))
        y = x + 0.1 * rng.standard_normal(x.shape)
        assert nmse(3.0 * x, 3.0 * y).linear == pytest.approx(nmse(x, y).linear, rel=1e-12)

    def test_metadata_denormalizes_first(self, rng):
        meta = NormalizationMeta(-2.0, 2.0)
        x = rng.uniform(0, 1, (5, 2, 4, 4))
        y = np.clip(x + 0.05 * rng.standard_normal(x.shape), 0, 1)
        expected = nmse(meta.denormalize(x), meta.denormalize(y)).linear
        assert nmse(x, y, meta).linear == pytest.approx(expected, rel=1e-12)
        assert nmse(x, y, meta).linear != pytest.approx(nmse(x, y).linear, rel=1e-3)

    def test_zero_energy_samples_are_excluded(self, rng):
        x = rng.uniform(0.1, 1, (3, 2, 4, 4))
        x[1] = 0.0
        result = nmse(x, x / 2)
        assert (result.count, result.excluded) == (2, 1)
        assert result.linear == pytest.approx(0.25)

    def test_all_zero_reference(self):
        with pytest.raises(ValueError):
            nmse(np.zeros((2, 2, 4, 4)), np.ones((2, 2, 4, 4)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            nmse(np.ones((2, 2, 4, 4)), np.ones((2, 2, 4, 2)))

    def test_domains_agree(self, rng):
        x = rng.uniform(0, 1, (6, 2, 8, 8))
        y = x + 0.1 * rng.standard_normal(x.shape)
        result = compare_domains(x, y, NormalizationMeta(-1.0, 1.0))
        assert result['agree']
        assert result['spatial_frequency'].domain == SPATIAL_FREQUENCY
        assert result['spatial_frequency'].linear == pytest.approx(result['angular_delay'].linear, rel=1e-9)

    def test_dataset_against_itself(self, tiny_dataset):
        assert nmse(tiny_dataset.test, tiny_dataset.test, tiny_dataset.meta).db_text == '-inf'


class TestTimingAndCost:

    def test_benchmark_report(self):
        network = Network(build_student_encoder(8, 8, 8))
        report = inference_benchmark(network, repetitions=5, warmups=2)
        assert len(report.samples) == 5
        assert report.p95 >= report.median > 0
        assert report.component == network.spec.name
        assert report.host
        assert inference_benchmark(network.to_checkpoint(), repetitions=1, warmups=0).repetitions == 1

    def test_benchmark_arguments(self):
        network = Network(build_student_encoder(8, 8, 8))
        with pytest.raises(ValueError):
            inference_benchmark(network, repetitions=0)
        with pytest.raises(ValueError):
            inference_benchmark(network, repetitions=2, warmups=-1)

    def test_training_time_model(self):
        assert training_time_model(100, 100, 15, 1.0, 9.0, 9.0) == pytest.approx(4.0)
        assert training_time_model(50, 50, 0, 2.0, 6.0, 60.0) == pytest.approx(4.0)
        assert training_time_model(200, 200, 30, 601984, 5e6, 5e6) > 1

    @pytest.mark.parametrize('args', [(-1, 10, 1, 1.0, 1.0, 1.0), (10, 10, 1, 0.0, 1.0, 1.0),
                                      (10, 0, 0, 1.0, 1.0, 1.0), (10, 10, 1, 1.0, -2.0, 1.0)])
    def test_training_time_model_errors(self, args):
        with pytest.raises(ValueError):
            training_time_model(*args)


def test_emit_report(tmp_path):
    results = {
        'nmse': [{'regime': 'vanilla', 'nmse_db': -12.345678901234567},
                 {'regime': 'encoder_kd', 'nmse_db': float('-inf')}],
        'flops': pd.DataFrame([{'model': 'student_encoder', 'flops': 601984}]),
    }
    written = emit_report(results, str(tmp_path), title='Smoke results')
    assert [os.path.basename(p) for p in written] == ['nmse.csv', 'flops.csv', 'summary.md']

    table = pd.read_csv(tmp_path / 'nmse.csv', float_precision='round_trip')
    assert table['regime'].tolist() == ['vanilla', 'encoder_kd']
    assert table['nmse_db'][0] == -12.345678901234567
    assert pd.read_csv(tmp_path / 'flops.csv')['flops'].tolist() == [601984]

    summary = (tmp_path / 'summary.md').read_text(encoding='utf-8')
    assert summary.startswith('# Smoke results')
    assert '| vanilla | -12.35 |' in summary
    assert '| encoder_kd | -inf |' in summary
    assert '| student_encoder | 601984 |' in summary
