#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Shared pytest fixtures: tiny scenarios, tiny datasets and short schedules
"""

import logging
import os

import numpy as np
import pytest

import autodiff as ad
from channel_model import build_dataset
from models import ScenarioConfig, TrainConfig
from networks import Autoencoder, Network, build_decoder, build_student_encoder, build_teacher_encoder

TINY_COUNTS = {'train': 48, 'val': 16, 'test': 16}


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: end-to-end runs, enabled with CSIKD_RUN_SLOW=1')
    config.addinivalue_line('markers', 'desk: multi-hour desk-scale acceptance runs, enabled with CSIKD_RUN_DESK=1')


def pytest_collection_modifyitems(config, items):
    gates = (('slow', 'CSIKD_RUN_SLOW'), ('desk', 'CSIKD_RUN_DESK'))
    for marker, variable in gates:
        if os.environ.get(variable) == '1':
            continue
        skip = pytest.mark.skip(reason=f"set {variable}=1 to run")
        for item in items:
            if marker in item.keywords:
                item.add_marker(skip)


@pytest.fixture(autouse=True)
def float64_tensors():
    ad.set_default_dtype('float64')
    yield
    ad.set_default_dtype('float64')


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()


def make_scenario(**changes):
    values = dict(name='tiny', n_tx_antennas=8, n_subcarriers=8, n_clusters=2, n_subpaths_per_cluster=4, seed=7)
    values.update(changes)
    return ScenarioConfig(**values)


@pytest.fixture
def tiny_scenario():
    return make_scenario()


@pytest.fixture(scope='session')
def tiny_dataset():
    return build_dataset(make_scenario(), TINY_COUNTS)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(max_epochs=3, patience=2, batch_size=16, lr_drop_epoch=2, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_autoencoder(teacher=False, seed=0, n_s=8):
    build_encoder = build_teacher_encoder if teacher else build_student_encoder
    return Autoencoder(Network(build_encoder(8, 8, n_s), seed=seed),
                       Network(build_decoder(8, 8, n_s, crblock_width=2), seed=seed + 1))
