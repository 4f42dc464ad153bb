#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import json
import os
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

import autodiff as ad
from conftest import tiny_autoencoder
from exchange_validator import BS_SIDE, UE_SIDE, ExchangeValidator, IsolationViolation
from models import KdConfig
from networks import Network, build_decoder, build_student_encoder, build_teacher_encoder, encode, run_inference
from training import (STUDENT_ENCODER, STUDENT_PAIRS_FILE, TEACHER_ENCODER, TEACHER_PAIRS_FILE, CodewordPairDataset,
                      TrainingDivergedError, distill_autoencoder, distill_encoder, fine_tune_decoder_only,
                      fine_tune_end_to_end, generate_codeword_pairs, kd_loss, load_pairs, run_encoder_kd,
                      run_sequential_training, run_variant_encoder_kd, save_pairs, train_encoder_on_pairs,
                      train_vanilla, variant_student_encoder)


def _same_params(first, second):
    return (list(first.params) == list(second.params)
            and all(np.array_equal(v, second.params[k]) for k, v in first.params.items()))


def _losses(report):
    return [(row['epoch'], row['train_loss'], row['val_loss']) for row in report.history]


class TestKdLoss:

    def test_alpha_one_is_plain_mse(self, rng):
        x = rng.uniform(0, 1, (4, 2, 4, 4))
        out = ad.Tensor(rng.uniform(0, 1, (4, 2, 4, 4)), requires_grad=True)
        teacher_probs = ad.softmax_t(ad.Tensor(rng.uniform(0, 1, (4, 32))), 5.0).values
        value = kd_loss(out, x, teacher_probs, KdConfig(alpha=1.0)).item()
        assert value == ad.mse_loss(out, x).item()

    def test_alpha_zero_is_soft_term_only(self, rng):
        x = rng.uniform(0, 1, (3, 2, 4, 4))
        teacher_out = rng.uniform(0, 1, (3, 32))
        teacher_probs = ad.softmax_t(ad.Tensor(teacher_out), 2.0).values
        out = ad.Tensor(x.copy())
        expected = ad.soft_cross_entropy(teacher_probs, ad.softmax_t(ad.flatten(out), 2.0)).item()
        assert kd_loss(out, x, teacher_probs, KdConfig(alpha=0.0, temperature=2.0)).item() == pytest.approx(expected)


class TestVanillaAndAutoencoderKd:

    def test_alpha_one_distillation_matches_vanilla_training(self, tiny_dataset, tiny_train_config):
        vanilla_ckpt, vanilla_report = train_vanilla(tiny_autoencoder(), tiny_dataset, tiny_train_config)
        kd_ckpt, kd_report = distill_autoencoder(tiny_autoencoder(teacher=True, seed=5), tiny_autoencoder(),
                                                 tiny_dataset, tiny_train_config, KdConfig(alpha=1.0))
        assert _losses(vanilla_report) == _losses(kd_report)
        assert vanilla_ckpt == kd_ckpt

    def test_training_is_deterministic(self, tiny_dataset, tiny_train_config):
        first_ckpt, first = train_vanilla(tiny_autoencoder(), tiny_dataset, tiny_train_config)
        second_ckpt, second = train_vanilla(tiny_autoencoder(), tiny_dataset, tiny_train_config)
        assert first.history == second.history
        assert first_ckpt == second_ckpt

    def test_report_tracks_best_epoch(self, tiny_dataset, tiny_train_config):
        checkpoint, report = train_vanilla(tiny_autoencoder(), tiny_dataset, tiny_train_config)
        val_losses = [row['val_loss'] for row in report.history]
        assert list(report.phases) == ['vanilla']
        assert 1 <= report.epochs('vanilla') <= tiny_train_config.max_epochs
        assert report.best_val_loss == min(val_losses)
        assert report.history[report.best_epoch - 1]['val_loss'] == report.best_val_loss
        for part in (checkpoint.encoder, checkpoint.decoder):
            assert part.metadata == {'seed': 0, 'best_epoch': report.best_epoch,
                                     'best_val_loss': report.best_val_loss}

    def test_best_weights_are_restored(self, tiny_dataset, tiny_train_config):
        checkpoint, report = train_vanilla(tiny_autoencoder(), tiny_dataset, tiny_train_config)
        x_val = tiny_dataset.val
        diff = run_inference(checkpoint.build(), x_val) - x_val
        assert float(np.mean(diff * diff)) == report.best_val_loss

    def test_invalid_alpha(self, tiny_dataset, tiny_train_config):
        with pytest.raises(ValueError):
            distill_autoencoder(tiny_autoencoder(teacher=True), tiny_autoencoder(), tiny_dataset,
                                tiny_train_config, KdConfig(alpha=1.5))

    def test_non_finite_loss_raises(self, tiny_train_config):
        nan_block = np.full((8, 2, 8, 8), np.nan)
        dataset = SimpleNamespace(train=nan_block, val=nan_block[:4])
        with pytest.raises(TrainingDivergedError) as info:
            train_vanilla(tiny_autoencoder(), dataset, tiny_train_config)
        assert (info.value.phase, info.value.epoch) == ('vanilla', 1)


class TestCodewordPairs:

    def test_pairs_cover_train_and_val(self, tiny_dataset):
        encoder = Network(build_teacher_encoder(8, 8, 8), seed=3)
        pairs = generate_codeword_pairs(encoder, tiny_dataset)
        assert len(pairs) == 64
        assert pairs.n_train == 48
        assert pairs.producer == TEACHER_ENCODER
        x_train, s_train = pairs.split('train')
        x_val, s_val = pairs.split('val')
        assert np.array_equal(x_train, tiny_dataset.train)
        assert np.array_equal(s_train, encode(encoder, tiny_dataset.train))
        assert np.array_equal(s_val, encode(encoder, tiny_dataset.val))
        assert len(x_val) == 16

    def test_pair_file_round_trip(self, tiny_dataset, tmp_path):
        pairs = generate_codeword_pairs(Network(build_student_encoder(8, 8, 8)), tiny_dataset, STUDENT_ENCODER)
        save_pairs(pairs, tmp_path / 'pairs.csip')
        assert load_pairs(tmp_path / 'pairs.csip') == pairs
        with pytest.raises(FileNotFoundError):
            load_pairs(tmp_path / 'absent.csip')

    def test_pair_validation(self, rng):
        with pytest.raises(ValueError):
            CodewordPairDataset(rng.uniform(0, 1, (4, 2, 8, 8)), rng.standard_normal((4, 8)), 'decoder')
        with pytest.raises(ValueError):
            CodewordPairDataset(rng.uniform(0, 1, (4, 2, 8, 8)), rng.standard_normal((3, 8)), TEACHER_ENCODER)

    def test_encoder_on_pairs_restores_best_weights(self, tiny_dataset, tiny_train_config):
        pairs = generate_codeword_pairs(Network(build_teacher_encoder(8, 8, 8), seed=3), tiny_dataset)
        checkpoint, report = train_encoder_on_pairs(Network(build_student_encoder(8, 8, 8), seed=4), pairs,
                                                    tiny_train_config)
        x_val, s_val = pairs.split('val')
        diff = run_inference(Network.from_checkpoint(checkpoint), x_val) - s_val
        assert float(np.mean(diff * diff)) == report.best_val_loss
        assert list(report.phases) == ['encoder_on_pairs']

    def test_reencoding_one_sample_reproduces_its_codeword(self, tiny_dataset):
        encoder = Network(build_teacher_encoder(8, 8, 8), seed=3)
        pairs = generate_codeword_pairs(encoder, tiny_dataset)
        for i in (0, 17, 47, 63):
            assert np.array_equal(encode(encoder, pairs.csi[i:i + 1])[0], pairs.codewords[i])

    def test_encoder_distillation_equals_training_on_teacher_pairs(self, tiny_dataset, tiny_train_config):
        teacher = tiny_autoencoder(teacher=True)
        distilled, distilled_report = distill_encoder(teacher, Network(build_student_encoder(8, 8, 8), seed=4),
                                                      tiny_dataset, tiny_train_config)
        pairs = generate_codeword_pairs(teacher.encoder, tiny_dataset)
        from_pairs, pairs_report = train_encoder_on_pairs(Network(build_student_encoder(8, 8, 8), seed=4), pairs,
                                                          tiny_train_config)
        assert distilled == from_pairs
        assert _losses(distilled_report) == _losses(pairs_report)

    def test_student_identical_to_teacher_has_zero_codeword_loss(self, tiny_dataset):
        teacher = tiny_autoencoder(teacher=True)
        pairs = generate_codeword_pairs(teacher.encoder, tiny_dataset)
        student = teacher.encoder.copy()
        for split in ('train', 'val'):
            x, s = pairs.split(split)
            diff = encode(student, x) - s
            assert float(np.mean(diff * diff)) == 0.0

    def test_codeword_length_must_match(self, tiny_dataset, tiny_train_config):
        with pytest.raises(ValueError):
            distill_encoder(tiny_autoencoder(teacher=True), Network(build_student_encoder(8, 8, 4)),
                            tiny_dataset, tiny_train_config)


class TestFineTuning:

    def test_zero_budget_leaves_weights_unchanged(self, tiny_dataset, tiny_train_config):
        autoencoder = tiny_autoencoder()
        before = autoencoder.to_checkpoint()
        checkpoint, report = fine_tune_end_to_end(autoencoder, tiny_dataset, tiny_train_config, 0)
        assert _same_params(checkpoint.encoder, before.encoder)
        assert _same_params(checkpoint.decoder, before.decoder)
        assert report.epochs('fine_tune') == 0

    def test_zero_budget_decoder_fine_tune(self, tiny_dataset, tiny_train_config):
        decoder = Network(build_decoder(8, 8, 8, crblock_width=2), seed=1)
        before = decoder.to_checkpoint()
        pairs = generate_codeword_pairs(Network(build_student_encoder(8, 8, 8)), tiny_dataset, STUDENT_ENCODER)
        checkpoint, _ = fine_tune_decoder_only(decoder, pairs, tiny_train_config, 0)
        assert _same_params(checkpoint, before)

    def test_fine_tuning_uses_fixed_rate(self, tiny_dataset, tiny_train_config):
        _, report = fine_tune_end_to_end(tiny_autoencoder(), tiny_dataset, tiny_train_config, 2)
        assert [row['lr'] for row in report.history] == [1e-4, 1e-4]

    def test_decoder_shape_is_checked(self, tiny_dataset, tiny_train_config):
        pairs = generate_codeword_pairs(Network(build_student_encoder(8, 8, 8)), tiny_dataset, STUDENT_ENCODER)
        with pytest.raises(ValueError):
            fine_tune_decoder_only(Network(build_decoder(8, 8, 4, crblock_width=2)), pairs, tiny_train_config, 1)


class TestRegimes:

    def test_encoder_kd_phases(self, tiny_dataset, tiny_train_config):
        teacher = tiny_autoencoder(teacher=True)
        decoder_before = teacher.decoder.to_checkpoint()
        student = Network(build_student_encoder(8, 8, 8), seed=4)
        checkpoint, report = run_encoder_kd(teacher, student, tiny_dataset, tiny_train_config)
        assert report.regime == 'encoder_kd'
        assert list(report.phases) == ['encoder_kd', 'fine_tune']
        assert report.epochs('fine_tune') == tiny_train_config.fine_tune_budget(report.epochs('encoder_kd'))
        assert checkpoint.encoder.spec_hash == student.spec.spec_hash()
        assert _same_params(teacher.decoder.to_checkpoint(), decoder_before)

    def test_variant_exchanges_two_pair_files(self, tiny_dataset, tiny_train_config, tmp_path):
        teacher = tiny_autoencoder(teacher=True)
        student = Network(build_student_encoder(8, 8, 8), seed=4)
        student_ckpt, decoder_ckpt, report = run_variant_encoder_kd(teacher, student, tiny_dataset,
                                                                    tiny_train_config, exchange_dir=str(tmp_path))
        assert sorted(os.listdir(tmp_path)) == sorted([STUDENT_PAIRS_FILE, TEACHER_PAIRS_FILE])
        teacher_pairs = load_pairs(tmp_path / TEACHER_PAIRS_FILE)
        student_pairs = load_pairs(tmp_path / STUDENT_PAIRS_FILE)
        assert (teacher_pairs.producer, student_pairs.producer) == (TEACHER_ENCODER, STUDENT_ENCODER)
        assert np.array_equal(student_pairs.codewords, encode(student_ckpt, teacher_pairs.csi))
        assert np.array_equal(student_pairs.codewords[7], encode(student_ckpt, teacher_pairs.csi[7:8])[0])
        assert report.regime == 'variant_encoder_kd'
        assert list(report.phases) == ['encoder_on_pairs', 'decoder_fine_tune']
        assert student_ckpt.spec_hash == student.spec.spec_hash()
        assert decoder_ckpt.spec_hash == teacher.decoder.spec.spec_hash()

    def test_ue_step_refuses_bs_models(self, tiny_train_config, tmp_path):
        teacher = tiny_autoencoder(teacher=True)
        validator = ExchangeValidator()
        validator.register(BS_SIDE, teacher.encoder, teacher.decoder)
        validator.register(UE_SIDE, Network(build_student_encoder(8, 8, 8)))
        with pytest.raises(IsolationViolation):
            variant_student_encoder(teacher.encoder, str(tmp_path / TEACHER_PAIRS_FILE), tiny_train_config,
                                    str(tmp_path), validator)

    def test_sequential_training(self, tiny_dataset, tiny_train_config):
        bs_specs = (build_teacher_encoder(8, 8, 8), build_decoder(8, 8, 8, crblock_width=2))
        deploy_spec = build_student_encoder(8, 8, 8)
        checkpoint, report = run_sequential_training(bs_specs, deploy_spec, tiny_dataset, tiny_train_config)
        assert report.regime == 'sequential'
        assert list(report.phases) == ['vanilla', 'encoder_on_pairs']
        assert checkpoint.encoder.spec_hash == deploy_spec.spec_hash()
        assert checkpoint.decoder.spec_hash == bs_specs[1].spec_hash()


def test_report_files(tiny_dataset, tiny_train_config, tmp_path):
    _, report = train_vanilla(tiny_autoencoder(), tiny_dataset, tiny_train_config)
    report.save(tmp_path)
    assert sorted(os.listdir(tmp_path)) == ['losses.csv', 'report.json', 'timing.csv']
    with open(tmp_path / 'report.json', encoding='utf-8') as f:
        data = json.load(f)
    assert 'seconds' not in data['phases']['vanilla']
    assert data['best_epoch'] == report.best_epoch
    losses = pd.read_csv(tmp_path / 'losses.csv', float_precision='round_trip')
    assert len(losses) == len(report.history)
    assert losses['val_loss'].tolist() == [row['val_loss'] for row in report.history]
