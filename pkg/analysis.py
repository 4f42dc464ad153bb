#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
FLOPs accounting, NMSE evaluation, inference timing, the training-time model
and report emission
"""

import logging
import math
import os
import platform
import time
from fractions import Fraction
from typing import Dict, List

import numpy as np
import pandas as pd

import autodiff as ad
from channel_model import ANGULAR_DELAY, SPATIAL_FREQUENCY, batch_to_spatial_frequency
from networks import Checkpoint, ModelSpec, Network

logger = logging.getLogger(__name__)

DEGENERATE_ENERGY = 1e-30
CSV_FLOAT_FORMAT = '%.17g'


def _check_counts(**values):
    for name, value in values.items():
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
            raise ValueError(f"{name} must be an integer >= 1, got {value!r}")


def flops_conv2d(h_out, w_out, c_in, c_out, k_h, k_w):
    """2 * H_out * W_out * (C_in * K_H * K_W + 1) * C_out"""
    _check_counts(h_out=h_out, w_out=w_out, c_in=c_in, c_out=c_out, k_h=k_h, k_w=k_w)
    return 2 * int(h_out) * int(w_out) * (int(c_in) * int(k_h) * int(k_w) + 1) * int(c_out)


def flops_dense(l_in, l_out):
    """(2 * L_in - 1) * L_out"""
    _check_counts(l_in=l_in, l_out=l_out)
    return (2 * int(l_in) - 1) * int(l_out)


class FlopsReport:
    """Per-layer FLOPs of one network; batch norm and activations count as zero"""

    def __init__(self, name, role, layers):
        self.name = name
        self.role = role
        self.layers = list(layers)

    @property
    def total(self):
        return sum(count for _, count in self.layers)

    def to_dict(self):
        return {'name': self.name, 'role': self.role, 'total': self.total,
                'layers': [{'layer': layer, 'flops': count} for layer, count in self.layers]}

    def to_frame(self):
        frame = pd.DataFrame(self.layers, columns=['layer', 'flops'])
        frame.insert(0, 'model', self.name)
        return frame


def model_flops(spec: ModelSpec) -> FlopsReport:
    shapes = spec.infer_shapes()
    layers = []
    for layer in spec.layers:
        p = layer.params
        if layer.kind == 'conv2d':
            _, h_out, w_out = shapes[layer.name]
            k_h, k_w = p['kernel']
            layers.append((layer.name, flops_conv2d(h_out, w_out, p['in_channels'], p['out_channels'], k_h, k_w)))
        elif layer.kind == 'dense':
            layers.append((layer.name, flops_dense(p['in_features'], p['out_features'])))
    report = FlopsReport(spec.name, spec.role, layers)
    logger.debug(f"📊 {spec.name}: {report.total} FLOPs over {len(layers)} conv/dense layers")
    return report


def flops_ratio(student: FlopsReport, teacher: FlopsReport) -> Fraction:
    if teacher.total == 0:
        raise ValueError(f"{teacher.name} has no countable FLOPs")
    return Fraction(student.total, teacher.total)


class NmseResult:
    """Normalized MSE of a reconstruction batch"""

    def __init__(self, linear, count, excluded=0, domain=ANGULAR_DELAY):
        if linear < 0:
            raise ValueError(f"NMSE cannot be negative, got {linear}")
        self.linear = float(linear)
        self.count = int(count)
        self.excluded = int(excluded)
        self.domain = domain

    @property
    def db(self):
        return -math.inf if self.linear == 0 else 10.0 * math.log10(self.linear)

    @property
    def db_text(self):
        return '-inf' if self.linear == 0 else f"{self.db:.2f}"

    def to_dict(self):
        return {'nmse_linear': self.linear, 'nmse_db': self.db_text if self.linear == 0 else self.db,
                'count': self.count, 'excluded': self.excluded, 'domain': self.domain}

    def __repr__(self):
        return f"NmseResult({self.db_text} dB, n={self.count}, domain={self.domain})"


def nmse(reference, reconstruction, meta=None, domain=ANGULAR_DELAY) -> NmseResult:
    """
    Mean over samples of ||H - H_hat||^2 / ||H||^2

    Args:
        reference: (B, 2, N_t, N_c) ground-truth batch
        reconstruction: Batch of the same shape
        meta (NormalizationMeta): When given, both batches are de-normalized first
        domain (str): 'angular-delay' or 'spatial-frequency'

    Returns:
        NmseResult
    """
    reference = np.asarray(reference, dtype=np.float64)
    reconstruction = np.asarray(reconstruction, dtype=np.float64)
    if reference.shape != reconstruction.shape:
        raise ValueError(f"NMSE shape mismatch: {reference.shape} vs {reconstruction.shape}")
    if domain not in (ANGULAR_DELAY, SPATIAL_FREQUENCY):
        raise ValueError(f"Unknown NMSE domain '{domain}'")
    if meta is not None:
        reference = meta.denormalize(reference)
        reconstruction = meta.denormalize(reconstruction)
    if domain == SPATIAL_FREQUENCY:
        reference = batch_to_spatial_frequency(reference)
        reconstruction = batch_to_spatial_frequency(reconstruction)

    axes = tuple(range(1, reference.ndim))
    energy = np.sum(reference ** 2, axis=axes)
    error = np.sum((reference - reconstruction) ** 2, axis=axes)
    valid = energy >= DEGENERATE_ENERGY
    excluded = int(np.count_nonzero(~valid))
    if not valid.any():
        raise ValueError(f"All {len(reference)} reference samples have (near) zero energy")
    if excluded:
        logger.warning(f"⚠️ Excluded {excluded} zero-energy samples from NMSE")
    return NmseResult(np.mean(error[valid] / energy[valid]), int(valid.sum()), excluded, domain)


def compare_domains(reference, reconstruction, meta=None, rtol=1e-9):
    """
    NMSE in the angular-delay and the spatial-frequency domain

    Returns:
        dict: {'angular_delay', 'spatial_frequency', 'agree'}
    """
    angular = nmse(reference, reconstruction, meta, ANGULAR_DELAY)
    spatial = nmse(reference, reconstruction, meta, SPATIAL_FREQUENCY)
    scale = max(abs(angular.linear), abs(spatial.linear))
    agree = abs(angular.linear - spatial.linear) <= rtol * scale
    if not agree:
        logger.warning(f"⚠️ NMSE differs across domains: {angular.linear!r} vs {spatial.linear!r}")
    return {'angular_delay': angular, 'spatial_frequency': spatial, 'agree': agree}


def host_descriptor():
    threads = os.environ.get('OMP_NUM_THREADS', 'unset')
    return (f"{platform.system()} {platform.release()} {platform.machine()}; "
            f"python {platform.python_version()}; numpy {np.__version__}; threads {threads}")


class TimingReport:
    """Batch-1 forward timings; raw samples are kept for audit"""

    def __init__(self, component, samples, repetitions, warmups, host=None):
        self.component = component
        self.samples = [float(s) for s in samples]
        self.repetitions = int(repetitions)
        self.warmups = int(warmups)
        self.host = host or host_descriptor()

    @property
    def median(self):
        return float(np.median(self.samples))

    @property
    def mean(self):
        return float(np.mean(self.samples))

    @property
    def p95(self):
        return float(np.percentile(self.samples, 95))

    def to_dict(self):
        return {'component': self.component, 'repetitions': self.repetitions, 'warmups': self.warmups,
                'median_s': self.median, 'mean_s': self.mean, 'p95_s': self.p95,
                'host': self.host, 'samples_s': self.samples}


def inference_benchmark(model, repetitions=100, warmups=10, component=None, seed=0) -> TimingReport:
    """
    Time eval-mode forward passes on one fixed random sample

    Args:
        model: Network, Checkpoint or Autoencoder
        repetitions (int): Timed passes
        warmups (int): Discarded passes before timing
    """
    _check_counts(repetitions=repetitions)
    if warmups < 0:
        raise ValueError(f"warmups must be >= 0, got {warmups}")
    if isinstance(model, Checkpoint):
        model = Network.from_checkpoint(model)
    model.eval()
    input_shape = model.input_shape if isinstance(model, Network) else model.encoder.input_shape
    name = component or (model.spec.name if isinstance(model, Network) else 'autoencoder')
    fixture = np.random.default_rng(seed).random((1,) + tuple(input_shape))

    samples = []
    with ad.no_grad():
        for i in range(warmups + repetitions):
            start = time.perf_counter()
            model.forward(fixture, training=False)
            elapsed = time.perf_counter() - start
            if i >= warmups:
                samples.append(elapsed)
    report = TimingReport(name, samples, repetitions, warmups)
    logger.info(f"⏱️ {name}: median {report.median * 1e3:.3f} ms, p95 {report.p95 * 1e3:.3f} ms "
                f"over {repetitions} runs")
    return report


def training_time_model(n_au1, n_en1, n_en2, c_en_s, c_de_s, c_de_t):
    """
    Predicted speedup of encoder distillation over autoencoder distillation

    Args:
        n_au1 (int): Autoencoder distillation epochs
        n_en1 (int): Encoder distillation epochs
        n_en2 (int): Fine-tuning epochs
        c_en_s, c_de_s, c_de_t: Per-sample costs of the student encoder, student decoder
            and teacher decoder (e.g. FLOPs)

    Returns:
        float: n_au1 (c_en_s + c_de_s) / (n_en1 c_en_s + n_en2 (c_en_s + c_de_t))
    """
    for name, value in (('n_au1', n_au1), ('n_en1', n_en1), ('n_en2', n_en2)):
        if value < 0:
            raise ValueError(f"{name} must be >= 0, got {value}")
    for name, value in (('c_en_s', c_en_s), ('c_de_s', c_de_s), ('c_de_t', c_de_t)):
        if not value > 0:
            raise ValueError(f"{name} must be > 0, got {value}")
    autoencoder_cost = n_au1 * (c_en_s + c_de_s)
    encoder_cost = n_en1 * c_en_s + n_en2 * (c_en_s + c_de_t)
    if encoder_cost == 0:
        raise ValueError("Encoder distillation cost is zero (no epochs)")
    return autoencoder_cost / encoder_cost


def _markdown_cell(value):
    if isinstance(value, (float, np.floating)):
        if math.isinf(value):
            return '-inf' if value < 0 else 'inf'
        return f"{value:.2f}"
    return str(value)


def _markdown_table(frame: pd.DataFrame):
    lines = ['| ' + ' | '.join(str(c) for c in frame.columns) + ' |',
             '|' + '|'.join('---' for _ in frame.columns) + '|']
    for row in frame.itertuples(index=False):
        lines.append('| ' + ' | '.join(_markdown_cell(v) for v in row) + ' |')
    return '\n'.join(lines)


def emit_report(results: Dict[str, object], path, title='CSI feedback distillation results') -> List[str]:
    """
    Write one CSV per table plus a markdown summary

    Args:
        results (dict): Table name -> DataFrame or list of row dicts, in display order
        path (str): Output directory

    Returns:
        List[str]: Paths written
    """
    os.makedirs(path, exist_ok=True)
    written, sections = [], [f"# {title}", '']
    for table, rows in results.items():
        frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
        csv_path = os.path.join(path, f"{table}.csv")
        frame.to_csv(csv_path, index=False, float_format=CSV_FLOAT_FORMAT)
        written.append(csv_path)
        sections += [f"## {table}", '', _markdown_table(frame), '']
    summary = os.path.join(path, 'summary.md')
    with open(summary, 'w', encoding='utf-8') as f:
        f.write('\n'.join(sections))
    written.append(summary)
    logger.info(f"💾 Report with {len(results)} tables written to {path}")
    return written
