#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Training regimes for CSI feedback autoencoders: vanilla training, autoencoder
distillation, encoder distillation with end-to-end fine-tuning, the pair-exchange
variant of encoder distillation and the sequential-training baseline
"""

import json
import logging
import math
import os
import tempfile
import time
from collections import OrderedDict

import numpy as np
import pandas as pd

import autodiff as ad
from binary_format import BinaryReader, BinaryWriter
from exchange_validator import BS_SIDE, PAIR_MAGIC, PAIR_VERSION, UE_SIDE, ExchangeValidator
from models import KdConfig, TrainConfig
from networks import (Autoencoder, AutoencoderCheckpoint, Checkpoint, Network, combine, derive_seed,
                      run_inference)
from schedule_manager import ScheduleManager

logger = logging.getLogger(__name__)

TEACHER_ENCODER = 'teacher_encoder'
STUDENT_ENCODER = 'student_encoder'
PRODUCERS = (TEACHER_ENCODER, STUDENT_ENCODER)

TEACHER_PAIRS_FILE = 'teacher_pairs.csip'
STUDENT_PAIRS_FILE = 'student_pairs.csip'


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss"""

    def __init__(self, phase, epoch, loss):
        super().__init__(f"Training diverged in phase '{phase}' at epoch {epoch} (loss={loss})")
        self.phase = phase
        self.epoch = epoch
        self.loss = loss


class CodewordPairDataset:
    """
    CSI samples aligned with the codewords an encoder produced for them.
    The first `n_train` pairs form the training split, the rest the validation split.
    """

    def __init__(self, csi, codewords, producer, n_train=None):
        csi = np.asarray(csi, dtype=np.float64)
        codewords = np.asarray(codewords, dtype=np.float64)
        if producer not in PRODUCERS:
            raise ValueError(f"Unknown pair producer '{producer}' (expected one of {PRODUCERS})")
        if csi.ndim != 4 or csi.shape[1] != 2:
            raise ValueError(f"CSI block must be N x 2 x N_t x N_c, got {csi.shape}")
        if codewords.ndim != 2 or len(codewords) != len(csi):
            raise ValueError(f"{len(csi)} CSI samples but codeword block of shape {codewords.shape}")
        self.csi = csi
        self.codewords = codewords
        self.producer = producer
        self.n_train = len(csi) if n_train is None else int(n_train)
        if not 0 <= self.n_train <= len(csi):
            raise ValueError(f"n_train={self.n_train} outside [0, {len(csi)}]")
        self.csi.setflags(write=False)
        self.codewords.setflags(write=False)

    @property
    def n_s(self):
        return self.codewords.shape[1]

    @property
    def sample_shape(self):
        return self.csi.shape[1:]

    def __len__(self):
        return len(self.csi)

    def split(self, name):
        if name == 'train':
            return self.csi[:self.n_train], self.codewords[:self.n_train]
        if name == 'val':
            return self.csi[self.n_train:], self.codewords[self.n_train:]
        raise ValueError(f"Unknown pair split '{name}'")

    def __eq__(self, other):
        return (isinstance(other, CodewordPairDataset)
                and self.producer == other.producer and self.n_train == other.n_train
                and np.array_equal(self.csi, other.csi) and np.array_equal(self.codewords, other.codewords))


def save_pairs(pairs: CodewordPairDataset, path):
    """
    Write a pair file: header (n_s, producer, count, N_t, N_c, n_train), then
    per pair the CSI planes followed by the codeword, all f64
    """
    _, n_t, n_c = pairs.sample_shape
    writer = BinaryWriter(PAIR_MAGIC, PAIR_VERSION)
    writer.pack('I', pairs.n_s)
    writer.text(pairs.producer)
    writer.pack('QIIQ', len(pairs), n_t, n_c, pairs.n_train)
    writer.array(np.concatenate([pairs.csi.reshape(len(pairs), -1), pairs.codewords], axis=1))
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    writer.write(path)
    logger.info(f"💾 Saved {len(pairs)} {pairs.producer} pairs (N_s={pairs.n_s}) to {path}")


def load_pairs(path) -> CodewordPairDataset:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Pair dataset not found: {path}")
    reader = BinaryReader.from_file(path, PAIR_MAGIC, PAIR_VERSION)
    (n_s,) = reader.unpack('I')
    producer = reader.text()
    count, n_t, n_c, n_train = reader.unpack('QIIQ')
    plane = 2 * n_t * n_c
    block = reader.array((count, plane + n_s))
    reader.expect_end()
    csi = block[:, :plane].reshape(count, 2, n_t, n_c)
    return CodewordPairDataset(csi, block[:, plane:], producer, n_train)


class TrainReport:
    """Per-epoch losses and per-phase outcome of a training run"""

    def __init__(self, regime):
        self.regime = regime
        self.history = []
        self.phases = OrderedDict()
        self.final_nmse_db = None

    def add_phase(self, phase, rows, schedule: ScheduleManager, seconds):
        best = schedule.best_loss if math.isfinite(schedule.best_loss) else None
        self.history.extend(rows)
        self.phases[phase] = {
            'epochs': len(rows),
            'best_epoch': schedule.best_epoch,
            'best_val_loss': best,
            'stop_reason': schedule.stop_reason,
            'seconds': seconds,
        }

    def extend(self, other: 'TrainReport'):
        self.history.extend(other.history)
        for name, phase in other.phases.items():
            self.phases[name] = dict(phase)
        return self

    def _last(self, key):
        if not self.phases:
            return None
        return next(reversed(self.phases.values()))[key]

    @property
    def best_epoch(self):
        return self._last('best_epoch')

    @property
    def best_val_loss(self):
        return self._last('best_val_loss')

    @property
    def stop_reason(self):
        return self._last('stop_reason')

    def epochs(self, phase):
        return self.phases[phase]['epochs'] if phase in self.phases else 0

    def seconds(self, phase=None):
        if phase is not None:
            return self.phases[phase]['seconds'] if phase in self.phases else 0.0
        return sum(p['seconds'] for p in self.phases.values())

    def to_dict(self, include_timing=False):
        phases = OrderedDict()
        for name, phase in self.phases.items():
            phases[name] = {k: v for k, v in phase.items() if include_timing or k != 'seconds'}
        return {
            'regime': self.regime,
            'phases': phases,
            'best_epoch': self.best_epoch,
            'best_val_loss': self.best_val_loss,
            'stop_reason': self.stop_reason,
            'final_nmse_db': self.final_nmse_db,
            'history': self.history,
        }

    def to_json(self, include_timing=False):
        """Deterministic JSON; wall-clock seconds only when asked for"""
        return json.dumps(self.to_dict(include_timing), indent=2)

    def losses_frame(self):
        return pd.DataFrame(self.history, columns=['phase', 'epoch', 'lr', 'train_loss', 'val_loss'])

    def timing_frame(self):
        return pd.DataFrame([{'phase': name, 'epochs': p['epochs'], 'seconds': p['seconds']}
                             for name, p in self.phases.items()])

    def save(self, directory):
        """report.json and losses.csv are reproducible; timing.csv holds wall-clock data"""
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, 'report.json'), 'w', encoding='utf-8') as f:
            f.write(self.to_json())
        self.losses_frame().to_csv(os.path.join(directory, 'losses.csv'), index=False, float_format='%.17g')
        self.timing_frame().to_csv(os.path.join(directory, 'timing.csv'), index=False, float_format='%.17g')
        logger.info(f"💾 Saved {self.regime} report to {directory}")


def _snapshot(networks):
    return [net.to_checkpoint() for net in networks]


def _restore(networks, snapshot):
    for net, checkpoint in zip(networks, snapshot):
        net.load_checkpoint(checkpoint)


def _fit(phase, networks, train_step, val_loss_fn, n_train, config: TrainConfig, max_epochs=None, fixed_lr=None):
    """
    Shared epoch loop: seeded shuffling, Adam updates, validation, early stopping
    and restoration of the best-validation weights

    Args:
        phase (str): Name used in logs and reports
        networks (list): Networks whose parameters are trained
        train_step (callable): Batch index array -> scalar loss Tensor
        val_loss_fn (callable): () -> validation loss (float), run in eval mode
        n_train (int): Number of training samples
        config (TrainConfig): Schedule
        max_epochs (int): Epoch cap overriding config.max_epochs
        fixed_lr (float): Constant learning rate instead of the step schedule

    Returns:
        tuple: (history rows, ScheduleManager, seconds)
    """
    params = [p for net in networks for p in net.parameters()]
    schedule = ScheduleManager(config, max_epochs, fixed_lr, phase)
    optimizer = ad.Adam(params, lr=config.initial_lr if fixed_lr is None else fixed_lr)
    rng = np.random.default_rng(config.seed)
    best_state = _snapshot(networks)
    rows = []
    batch_size = int(config.batch_size)
    start = time.perf_counter()

    logger.info(f"🚀 [{phase}] Training {sum(p.values.size for p in params)} parameters on {n_train} samples "
                f"(batch {batch_size}, up to {schedule.max_epochs} epochs)")
    for epoch in schedule.epochs():
        optimizer.lr = schedule.learning_rate(epoch)
        for net in networks:
            net.train()
        order = rng.permutation(n_train)
        total, seen = 0.0, 0
        for begin in range(0, n_train, batch_size):
            idx = order[begin:begin + batch_size]
            if len(idx) < 2:
                continue
            optimizer.zero_grad()
            loss = train_step(idx)
            value = loss.item()
            if not math.isfinite(value):
                logger.error(f"❌ [{phase}] Non-finite loss at epoch {epoch}")
                raise TrainingDivergedError(phase, epoch, value)
            ad.backward(loss)
            optimizer.step()
            total += value * len(idx)
            seen += len(idx)
            logger.debug(f"[{phase}] epoch {epoch} batch {begin // batch_size}: {value:.6g}")
        for net in networks:
            net.eval()
        val_loss = float(val_loss_fn())
        if not math.isfinite(val_loss):
            logger.error(f"❌ [{phase}] Non-finite validation loss at epoch {epoch}")
            raise TrainingDivergedError(phase, epoch, val_loss)
        train_loss = total / seen if seen else float('nan')
        if schedule.record(epoch, val_loss):
            best_state = _snapshot(networks)
        rows.append({'phase': phase, 'epoch': epoch, 'lr': optimizer.lr,
                     'train_loss': train_loss, 'val_loss': val_loss})
        logger.info(f"📊 [{phase}] epoch {epoch}: train {train_loss:.6g} val {val_loss:.6g} "
                    f"(best {schedule.best_loss:.6g} @ {schedule.best_epoch})")

    _restore(networks, best_state)
    seconds = time.perf_counter() - start
    logger.info(f"✅ [{phase}] Done after {len(rows)} epochs ({schedule.stop_reason}), "
                f"best val {schedule.best_loss:.6g} at epoch {schedule.best_epoch}")
    return rows, schedule, seconds


def _as_autoencoder(model):
    if isinstance(model, Autoencoder):
        return model
    if isinstance(model, AutoencoderCheckpoint):
        return model.build()
    raise ValueError(f"Expected an autoencoder, got {type(model).__name__}")


def _as_network(model):
    return Network.from_checkpoint(model) if isinstance(model, Checkpoint) else model


def _teacher_encoder(teacher):
    if isinstance(teacher, (Autoencoder, AutoencoderCheckpoint)):
        return _as_network(teacher.encoder)
    return _as_network(teacher)


def _mean_squared_error(pred, target):
    diff = pred - target
    return float(np.mean(diff * diff))


def _reconstruction_val_loss(autoencoder, x_val):
    return lambda: _mean_squared_error(run_inference(autoencoder, x_val), x_val)


def _checkpoint_metadata(config: TrainConfig, schedule: ScheduleManager):
    best = schedule.best_loss if math.isfinite(schedule.best_loss) else None
    return {'seed': config.seed, 'best_epoch': schedule.best_epoch, 'best_val_loss': best}


def _check_codeword_length(encoder, n_s, what):
    if encoder.output_shape != (n_s,):
        raise ValueError(f"{encoder.spec.name} emits codewords of shape {encoder.output_shape}, "
                         f"but {what} has length {n_s}")


def kd_loss(student_out, target, teacher_probs, kd: KdConfig):
    """
    alpha * MSE(target, student) + (1 - alpha) * H(softmax_t(teacher), softmax_t(student))

    Args:
        student_out (Tensor): Student reconstructions, B x 2 x N_t x N_c
        target: Ground-truth normalized CSI batch
        teacher_probs: Temperature softmax of the flattened teacher reconstructions, B x L
        kd (KdConfig): alpha and temperature
    """
    hard = ad.mse_loss(student_out, target)
    soft = ad.soft_cross_entropy(teacher_probs, ad.softmax_t(ad.flatten(student_out), kd.temperature))
    return ad.add(ad.scale(hard, kd.alpha), ad.scale(soft, 1.0 - kd.alpha))


def train_vanilla(autoencoder, dataset, config: TrainConfig):
    """
    Train an autoencoder from scratch on the reconstruction MSE

    Returns:
        tuple: (AutoencoderCheckpoint of the best-validation weights, TrainReport)
    """
    autoencoder = _as_autoencoder(autoencoder)
    x_train, x_val = dataset.train, dataset.val

    def step(idx):
        x = x_train[idx]
        return ad.mse_loss(autoencoder.forward(x, training=True), x)

    rows, schedule, seconds = _fit('vanilla', [autoencoder.encoder, autoencoder.decoder], step,
                                   _reconstruction_val_loss(autoencoder, x_val), len(x_train), config)
    report = TrainReport('vanilla')
    report.add_phase('vanilla', rows, schedule, seconds)
    return autoencoder.to_checkpoint(**_checkpoint_metadata(config, schedule)), report


def distill_autoencoder(teacher, student_autoencoder, dataset, config: TrainConfig, kd: KdConfig):
    """
    Autoencoder distillation: the student reconstruction is pulled toward the ground
    truth and toward the teacher's temperature-softened reconstruction
    """
    errors = kd.validate()
    if errors:
        raise ValueError('; '.join(errors))
    teacher = _as_autoencoder(teacher)
    student = _as_autoencoder(student_autoencoder)
    x_train, x_val = dataset.train, dataset.val
    teacher_out = run_inference(teacher, x_train)
    if teacher_out.shape != x_train.shape:
        raise ValueError(f"Teacher reconstructs shape {teacher_out.shape[1:]}, data is {x_train.shape[1:]}")
    with ad.no_grad():
        teacher_probs = ad.softmax_t(ad.Tensor(teacher_out.reshape(len(teacher_out), -1)), kd.temperature).values
    logger.info(f"🎓 Autoencoder distillation with alpha={kd.alpha}, t={kd.temperature}")

    def step(idx):
        x = x_train[idx]
        return kd_loss(student.forward(x, training=True), x, teacher_probs[idx], kd)

    rows, schedule, seconds = _fit('autoencoder_kd', [student.encoder, student.decoder], step,
                                   _reconstruction_val_loss(student, x_val), len(x_train), config)
    report = TrainReport('autoencoder_kd')
    report.add_phase('autoencoder_kd', rows, schedule, seconds)
    return student.to_checkpoint(**_checkpoint_metadata(config, schedule)), report


def generate_codeword_pairs(encoder, source, producer=TEACHER_ENCODER, splits=('train', 'val')):
    """
    Encode every CSI sample of a dataset (or of another pair dataset)

    Args:
        encoder: Encoder Network or Checkpoint, run in eval mode
        source: CsiDataset or CodewordPairDataset providing the CSI
        producer (str): Tag stored with the pairs
        splits (tuple): Dataset splits to include, in order; the first one is the training split

    Returns:
        CodewordPairDataset
    """
    encoder = _as_network(encoder)
    if isinstance(source, CodewordPairDataset):
        blocks = [source.split('train')[0], source.split('val')[0]]
    else:
        blocks = [source.split(name) for name in splits]
    codewords = [run_inference(encoder, block) for block in blocks]
    pairs = CodewordPairDataset(np.concatenate(blocks), np.concatenate(codewords), producer, len(blocks[0]))
    logger.info(f"📦 Generated {len(pairs)} {producer} pairs ({pairs.n_train} train) with {encoder.spec.name}")
    return pairs


def _train_encoder(phase, student_encoder, pairs: CodewordPairDataset, config: TrainConfig):
    student = _as_network(student_encoder)
    _check_codeword_length(student, pairs.n_s, 'the pair dataset')
    x_train, s_train = pairs.split('train')
    x_val, s_val = pairs.split('val')
    if len(x_val) == 0:
        raise ValueError("Pair dataset has no validation pairs")

    def step(idx):
        return ad.mse_loss(student.forward(x_train[idx], training=True), s_train[idx])

    def val_loss():
        return _mean_squared_error(run_inference(student, x_val), s_val)

    rows, schedule, seconds = _fit(phase, [student], step, val_loss, len(x_train), config)
    report = TrainReport(phase)
    report.add_phase(phase, rows, schedule, seconds)
    return student.to_checkpoint(**_checkpoint_metadata(config, schedule)), report


def distill_encoder(teacher, student_encoder, dataset, config: TrainConfig):
    """
    Encoder distillation: regress the teacher's codewords; no decoder is involved

    Returns:
        tuple: (student encoder Checkpoint, TrainReport)
    """
    teacher_encoder = _teacher_encoder(teacher)
    _check_codeword_length(_as_network(student_encoder), teacher_encoder.output_shape[0], 'the teacher codeword')
    pairs = generate_codeword_pairs(teacher_encoder, dataset, TEACHER_ENCODER)
    return _train_encoder('encoder_kd', student_encoder, pairs, config)


def train_encoder_on_pairs(student_encoder, pairs: CodewordPairDataset, config: TrainConfig):
    """Fit a student encoder to a pair dataset; no teacher model is available here"""
    return _train_encoder('encoder_on_pairs', student_encoder, pairs, config)


def fine_tune_end_to_end(autoencoder, dataset, config: TrainConfig, epochs_budget):
    """Short reconstruction-MSE training of a combined network at the fine-tuning rate"""
    autoencoder = _as_autoencoder(autoencoder)
    x_train, x_val = dataset.train, dataset.val

    def step(idx):
        x = x_train[idx]
        return ad.mse_loss(autoencoder.forward(x, training=True), x)

    rows, schedule, seconds = _fit('fine_tune', [autoencoder.encoder, autoencoder.decoder], step,
                                   _reconstruction_val_loss(autoencoder, x_val), len(x_train), config,
                                   max_epochs=epochs_budget, fixed_lr=config.fine_tune_lr)
    report = TrainReport('fine_tune')
    report.add_phase('fine_tune', rows, schedule, seconds)
    return autoencoder.to_checkpoint(**_checkpoint_metadata(config, schedule)), report


def fine_tune_decoder_only(decoder, pairs: CodewordPairDataset, config: TrainConfig, epochs_budget):
    """Fine-tune a decoder on (codeword, CSI) pairs produced by the deployed encoder"""
    decoder = _as_network(decoder)
    if decoder.input_shape != (pairs.n_s,):
        raise ValueError(f"{decoder.spec.name} expects codewords of shape {decoder.input_shape}, "
                         f"pairs have length {pairs.n_s}")
    if decoder.output_shape != pairs.sample_shape:
        raise ValueError(f"{decoder.spec.name} reconstructs {decoder.output_shape}, pairs hold {pairs.sample_shape}")
    if pairs.producer != STUDENT_ENCODER:
        logger.warning(f"⚠️ Decoder fine-tuning on pairs produced by {pairs.producer}")
    x_train, s_train = pairs.split('train')
    x_val, s_val = pairs.split('val')

    def step(idx):
        return ad.mse_loss(decoder.forward(s_train[idx], training=True), x_train[idx])

    def val_loss():
        return _mean_squared_error(run_inference(decoder, s_val), x_val)

    rows, schedule, seconds = _fit('decoder_fine_tune', [decoder], step, val_loss, len(x_train), config,
                                   max_epochs=epochs_budget, fixed_lr=config.fine_tune_lr)
    report = TrainReport('decoder_fine_tune')
    report.add_phase('decoder_fine_tune', rows, schedule, seconds)
    return decoder.to_checkpoint(**_checkpoint_metadata(config, schedule)), report


def run_encoder_kd(teacher, student_encoder, dataset, config: TrainConfig):
    """Encoder distillation followed by end-to-end fine-tuning with the teacher decoder"""
    teacher = _as_autoencoder(teacher)
    student_ckpt, report = distill_encoder(teacher, student_encoder, dataset, config)
    combined = combine(student_ckpt, teacher.decoder.copy())
    budget = config.fine_tune_budget(report.epochs('encoder_kd'))
    checkpoint, tune_report = fine_tune_end_to_end(combined, dataset, config, budget)
    report.regime = 'encoder_kd'
    return checkpoint, report.extend(tune_report)


def variant_teacher_pairs(teacher, dataset, exchange_dir, validator: ExchangeValidator):
    """BS side, first exchange: publish (CSI, teacher codeword) pairs"""
    teacher = _as_autoencoder(teacher)
    validator.require(BS_SIDE, teacher.encoder)
    validator.require(BS_SIDE, dataset)
    path = os.path.join(exchange_dir, TEACHER_PAIRS_FILE)
    save_pairs(generate_codeword_pairs(teacher.encoder, dataset, TEACHER_ENCODER), path)
    return path


def variant_student_encoder(student_encoder, teacher_pairs_path, config: TrainConfig, exchange_dir,
                            validator: ExchangeValidator):
    """UE side: train on the published pairs, then publish (CSI, student codeword) pairs"""
    student = _as_network(student_encoder)
    validator.require(UE_SIDE, student)
    validator.require(UE_SIDE, teacher_pairs_path)
    pairs = load_pairs(teacher_pairs_path)
    checkpoint, report = train_encoder_on_pairs(student, pairs, config)
    path = os.path.join(exchange_dir, STUDENT_PAIRS_FILE)
    save_pairs(generate_codeword_pairs(checkpoint, pairs, STUDENT_ENCODER), path)
    return checkpoint, report, path


def variant_decoder_fine_tune(decoder, student_pairs_path, config: TrainConfig, epochs_budget,
                              validator: ExchangeValidator):
    """BS side, second exchange: adapt the teacher decoder to the student's codewords"""
    decoder = _as_network(decoder)
    validator.require(BS_SIDE, decoder)
    validator.require(BS_SIDE, student_pairs_path)
    return fine_tune_decoder_only(decoder, load_pairs(student_pairs_path), config, epochs_budget)


def run_variant_encoder_kd(teacher, student_encoder, dataset, config: TrainConfig, exchange_dir=None):
    """
    Pair-exchange encoder distillation. The student side only ever reads the teacher
    pair file; the decoder side only ever reads the student pair file.

    Returns:
        tuple: (student encoder Checkpoint, fine-tuned decoder Checkpoint, TrainReport)
    """
    teacher = _as_autoencoder(teacher)
    student = _as_network(student_encoder)
    validator = ExchangeValidator()
    validator.register(BS_SIDE, teacher.encoder, teacher.decoder)
    validator.register(UE_SIDE, student)

    with tempfile.TemporaryDirectory(prefix='csikd_exchange_') as scratch:
        exchange_dir = exchange_dir or scratch
        os.makedirs(exchange_dir, exist_ok=True)
        teacher_pairs = variant_teacher_pairs(teacher, dataset, exchange_dir, validator)
        student_ckpt, report, student_pairs = variant_student_encoder(student, teacher_pairs, config,
                                                                      exchange_dir, validator)
        budget = config.fine_tune_budget(report.epochs('encoder_on_pairs'))
        decoder_ckpt, tune_report = variant_decoder_fine_tune(teacher.decoder.copy(), student_pairs, config,
                                                              budget, validator)
    report.regime = 'variant_encoder_kd'
    report.extend(tune_report)
    logger.info(f"✅ Variant encoder KD finished: {report.epochs('encoder_on_pairs')} encoder epochs, "
                f"{report.epochs('decoder_fine_tune')} decoder epochs")
    return student_ckpt, decoder_ckpt, report


def run_sequential_training(bs_specs, deploy_encoder_spec, dataset, config: TrainConfig):
    """
    Sequential-training baseline: the BS trains its own autoencoder, publishes pairs,
    and the deployed encoder is trained on those pairs. No decoder fine-tuning.

    Args:
        bs_specs (tuple): (encoder ModelSpec, decoder ModelSpec) trained at the BS
        deploy_encoder_spec (ModelSpec): Encoder deployed at the UE

    Returns:
        tuple: (AutoencoderCheckpoint of deployed encoder + BS decoder, TrainReport)
    """
    encoder_spec, decoder_spec = bs_specs
    bs_autoencoder = Autoencoder(Network(encoder_spec, derive_seed(config.seed, 'bs_encoder')),
                                 Network(decoder_spec, derive_seed(config.seed, 'bs_decoder')))
    bs_checkpoint, report = train_vanilla(bs_autoencoder, dataset, config)
    pairs = generate_codeword_pairs(bs_checkpoint.encoder, dataset, TEACHER_ENCODER)
    deploy = Network(deploy_encoder_spec, derive_seed(config.seed, 'deploy_encoder'))
    deploy_ckpt, encoder_report = train_encoder_on_pairs(deploy, pairs, config)
    report.regime = 'sequential'
    report.extend(encoder_report)
    return AutoencoderCheckpoint(deploy_ckpt, bs_checkpoint.decoder), report
