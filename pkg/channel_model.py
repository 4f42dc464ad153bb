#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Cluster-model CSI synthesis, angular-delay transforms and normalized datasets
"""

import json
import logging
import os
import struct
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from binary_format import BinaryReader, BinaryWriter, file_digest
from models import ScenarioConfig

logger = logging.getLogger(__name__)

SPATIAL_FREQUENCY = 'spatial-frequency'
ANGULAR_DELAY = 'angular-delay'

DATASET_MAGIC = b'CSID'
DATASET_VERSION = 1
SPLITS = ('train', 'val', 'test')

# name, then every ScenarioConfig field in declaration order
_SCENARIO_BLOCK = '32sIIIIdddBdddddQ'


class PathSet:
    """Multipath components of one channel realization"""

    def __init__(self, complex_gain, departure_angle, delay):
        self.complex_gain = np.asarray(complex_gain, dtype=np.complex128)
        self.departure_angle = np.asarray(departure_angle, dtype=np.float64)
        self.delay = np.asarray(delay, dtype=np.float64)
        if not (self.complex_gain.shape == self.departure_angle.shape == self.delay.shape):
            raise ValueError("Path gain, angle and delay arrays must have one shape")

    def __len__(self):
        return self.complex_gain.size

    def __eq__(self, other):
        return (isinstance(other, PathSet)
                and np.array_equal(self.complex_gain, other.complex_gain)
                and np.array_equal(self.departure_angle, other.departure_angle)
                and np.array_equal(self.delay, other.delay))


class CsiSample:
    """Real/imaginary planes of one CSI matrix, shape 2 x N_t x N_c"""

    def __init__(self, values, domain, normalized=False):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3 or values.shape[0] != 2:
            raise ValueError(f"CSI sample must have shape 2 x N_t x N_c, got {values.shape}")
        if domain not in (SPATIAL_FREQUENCY, ANGULAR_DELAY):
            raise ValueError(f"Unknown CSI domain tag '{domain}'")
        self.values = values
        self.domain = domain
        self.normalized = normalized

    @classmethod
    def from_complex(cls, matrix, domain):
        matrix = np.asarray(matrix)
        return cls(np.stack([matrix.real, matrix.imag]), domain)

    def as_complex(self):
        return self.values[0] + 1j * self.values[1]

    @property
    def shape(self):
        return self.values.shape


class NormalizationMeta:
    """Global min-max extrema taken from one split"""

    def __init__(self, global_min, global_max, computed_over='train'):
        if not global_max > global_min:
            raise ValueError(f"Degenerate normalization range: min={global_min}, max={global_max}")
        self.global_min = float(global_min)
        self.global_max = float(global_max)
        self.computed_over = computed_over

    def normalize(self, values):
        return (values - self.global_min) / (self.global_max - self.global_min)

    def denormalize(self, values):
        return values * (self.global_max - self.global_min) + self.global_min

    def to_dict(self):
        return {'global_min': self.global_min, 'global_max': self.global_max,
                'computed_over': self.computed_over}

    def __eq__(self, other):
        return isinstance(other, NormalizationMeta) and self.to_dict() == other.to_dict()


class CsiDataset:
    """
    Normalized angular-delay CSI splits. Arrays are (sample, plane, antenna,
    subcarrier) and read-only once the dataset is built.
    """

    def __init__(self, train, val, test, meta, scenario, provenance=None, clamp_counts=None):
        arrays = [np.array(a, dtype=np.float64) for a in (train, val, test)]
        shapes = {a.shape[1:] for a in arrays}
        if len(shapes) != 1:
            raise ValueError(f"All splits must share one sample shape, got {sorted(shapes)}")
        for array in arrays:
            array.setflags(write=False)
        self.train, self.val, self.test = arrays
        self.meta = meta
        self.scenario = scenario
        self.provenance = list(provenance or [scenario.name])
        self.clamp_counts = dict(clamp_counts or {'val': 0, 'test': 0})
        self.domain = ANGULAR_DELAY

    @property
    def sample_shape(self):
        return self.train.shape[1:]

    @property
    def split_sizes(self):
        return {name: len(getattr(self, name)) for name in SPLITS}

    def split(self, name):
        if name not in SPLITS:
            raise ValueError(f"Unknown split '{name}'")
        return getattr(self, name)

    def samples(self, split='train'):
        return [CsiSample(v, ANGULAR_DELAY, normalized=True) for v in self.split(split)]

    def __len__(self):
        return sum(self.split_sizes.values())

    def __eq__(self, other):
        return (isinstance(other, CsiDataset)
                and self.meta == other.meta
                and self.scenario == other.scenario
                and all(np.array_equal(self.split(s), other.split(s)) for s in SPLITS))


def steering_vector(theta, n_antennas, d_over_lambda):
    """
    ULA steering vector a(theta)

    Args:
        theta (float): Departure angle in radians
        n_antennas (int): Array size
        d_over_lambda (float): Antenna spacing in wavelengths

    Returns:
        np.ndarray: Complex vector of length n_antennas, first element exactly 1
    """
    if n_antennas < 1:
        raise ValueError(f"n_antennas must be >= 1, got {n_antennas}")
    k = np.arange(n_antennas)
    return np.exp(1j * 2 * np.pi * k * d_over_lambda * np.sin(theta))


def sample_rng(seed, index):
    """Independent RNG stream for sample `index` of a dataset seeded with `seed`"""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample_path_set(scenario: ScenarioConfig, rng) -> PathSet:
    """
    Draw cluster centers, Laplacian subpath offsets, uniform delays and
    per-cluster normalized Gaussian gains; LOS adds one zero-delay path.
    """
    n_c, n_s = scenario.n_clusters, scenario.n_subpaths_per_cluster
    centers = rng.uniform(scenario.angle_center_low, scenario.angle_center_high, size=n_c)
    if scenario.angle_spread > 0:
        offsets = rng.laplace(0.0, scenario.angle_spread, size=(n_c, n_s))
    else:
        offsets = np.zeros((n_c, n_s))
    angles = np.clip(centers[:, None] + offsets, -np.pi / 2, np.pi / 2)
    delays = rng.uniform(0.0, scenario.max_delay, size=(n_c, n_s))
    gains = (rng.standard_normal((n_c, n_s)) + 1j * rng.standard_normal((n_c, n_s))) / np.sqrt(2)

    # Every cluster carries 1/n_clusters of the NLOS power
    cluster_power = np.sum(np.abs(gains) ** 2, axis=1, keepdims=True)
    gains = gains * np.sqrt((1.0 / n_c) / cluster_power)

    gains, angles, delays = gains.ravel(), angles.ravel(), delays.ravel()
    if scenario.los:
        k_linear = 10.0 ** (scenario.rician_k_factor / 10.0)
        nlos_power = float(np.sum(np.abs(gains) ** 2))
        los_angle = rng.uniform(scenario.angle_center_low, scenario.angle_center_high)
        los_phase = rng.uniform(0.0, 2 * np.pi)
        los_gain = np.sqrt(k_linear * nlos_power) * np.exp(1j * los_phase)
        gains = np.concatenate([[los_gain], gains])
        angles = np.concatenate([[los_angle], angles])
        delays = np.concatenate([[0.0], delays])
    return PathSet(gains, angles, delays)


def subcarrier_frequencies(scenario: ScenarioConfig):
    spacing = scenario.bandwidth / scenario.n_subcarriers
    return np.arange(scenario.n_subcarriers) * spacing


def generate_csi(path_set: PathSet, scenario: ScenarioConfig) -> CsiSample:
    """Sum every path's delay-phased, steered contribution per subcarrier"""
    k = np.arange(scenario.n_tx_antennas)
    steering = np.exp(1j * 2 * np.pi * scenario.antenna_spacing_over_wavelength
                      * np.outer(k, np.sin(path_set.departure_angle)))
    freqs = subcarrier_frequencies(scenario)
    phases = np.exp(-1j * 2 * np.pi * np.outer(path_set.delay, freqs))
    matrix = steering @ (path_set.complex_gain[:, None] * phases)
    return CsiSample.from_complex(matrix, SPATIAL_FREQUENCY)


def to_angular_delay(sample: CsiSample) -> CsiSample:
    """H = F_a H~ F_d with unitary DFT matrices"""
    if sample.domain != SPATIAL_FREQUENCY:
        raise ValueError(f"to_angular_delay expects a {SPATIAL_FREQUENCY} sample, got {sample.domain}")
    return CsiSample.from_complex(np.fft.fft2(sample.as_complex(), norm='ortho'), ANGULAR_DELAY)


def inverse_transform(sample: CsiSample) -> CsiSample:
    if sample.domain != ANGULAR_DELAY:
        raise ValueError(f"inverse_transform expects an {ANGULAR_DELAY} sample, got {sample.domain}")
    return CsiSample.from_complex(np.fft.ifft2(sample.as_complex(), norm='ortho'), SPATIAL_FREQUENCY)


def batch_to_spatial_frequency(batch):
    """Inverse transform for a (B, 2, N_t, N_c) angular-delay array"""
    batch = np.asarray(batch, dtype=np.float64)
    spatial = np.fft.ifft2(batch[:, 0] + 1j * batch[:, 1], norm='ortho')
    return np.stack([spatial.real, spatial.imag], axis=1)


def synthesize_samples(scenario: ScenarioConfig, indices):
    """Un-normalized angular-delay arrays for the given global sample indices"""
    out = np.empty((len(indices), 2, scenario.n_tx_antennas, scenario.n_subcarriers))
    for row, index in enumerate(indices):
        rng = sample_rng(scenario.seed, index)
        sample = to_angular_delay(generate_csi(sample_path_set(scenario, rng), scenario))
        out[row] = sample.values
    return out


def _synthesize_chunk(args):
    scenario_dict, indices = args
    return synthesize_samples(ScenarioConfig(**scenario_dict), indices)


def _synthesize(scenario, total, workers):
    indices = list(range(total))
    if workers <= 1 or total < 2 * workers:
        return synthesize_samples(scenario, indices)
    chunk = int(np.ceil(total / workers))
    jobs = [(scenario.to_dict(), indices[i:i + chunk]) for i in range(0, total, chunk)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_synthesize_chunk, jobs))
    return np.concatenate(parts)


def _normalize_splits(raw_splits, meta):
    normalized, clamp_counts = {}, {}
    for name in SPLITS:
        values = meta.normalize(raw_splits[name])
        if name == 'train':
            normalized[name] = values
            continue
        outside = int(np.count_nonzero((values < 0.0) | (values > 1.0)))
        clamp_counts[name] = outside
        if outside:
            logger.info(f"📊 Clamped {outside} {name} entries into [0, 1]")
        normalized[name] = np.clip(values, 0.0, 1.0)
    return normalized, clamp_counts


def build_dataset(scenario: ScenarioConfig, counts, workers=1) -> CsiDataset:
    """
    Generate, transform and min-max normalize a dataset

    Args:
        scenario (ScenarioConfig): Channel scenario, seed included
        counts (dict): Sample counts for 'train', 'val' and 'test'
        workers (int): Worker processes used for synthesis

    Returns:
        CsiDataset: Normalized angular-delay dataset
    """
    errors = scenario.validate()
    if errors:
        raise ValueError("Invalid scenario: " + "; ".join(errors))
    sizes = [int(counts[name]) for name in SPLITS]
    if min(sizes) < 1:
        raise ValueError(f"Every split needs at least one sample, got {dict(zip(SPLITS, sizes))}")

    logger.info(f"Generating {sum(sizes)} samples for {scenario.name} "
                f"({scenario.n_tx_antennas}x{scenario.n_subcarriers}, seed {scenario.seed})")
    raw = _synthesize(scenario, sum(sizes), workers)
    bounds = np.cumsum([0] + sizes)
    raw_splits = {name: raw[bounds[i]:bounds[i + 1]] for i, name in enumerate(SPLITS)}

    meta = NormalizationMeta(raw_splits['train'].min(), raw_splits['train'].max(), 'train')
    normalized, clamp_counts = _normalize_splits(raw_splits, meta)
    logger.info(f"✅ Dataset {scenario.name} ready: train={sizes[0]} val={sizes[1]} test={sizes[2]}, "
                f"range [{meta.global_min:.6g}, {meta.global_max:.6g}]")
    return CsiDataset(normalized['train'], normalized['val'], normalized['test'],
                      meta, scenario, clamp_counts=clamp_counts)


def renormalize(dataset: CsiDataset, meta: NormalizationMeta) -> CsiDataset:
    """Express a dataset under another dataset's normalization"""
    raw_splits = {name: dataset.meta.denormalize(dataset.split(name)) for name in SPLITS}
    clamped = {}
    for name in SPLITS:
        values = meta.normalize(raw_splits[name])
        clamped[name] = int(np.count_nonzero((values < 0.0) | (values > 1.0)))
        raw_splits[name] = np.clip(values, 0.0, 1.0)
    if any(clamped.values()):
        logger.info(f"📊 Renormalizing {dataset.scenario.name} clamped {clamped}")
    return CsiDataset(raw_splits['train'], raw_splits['val'], raw_splits['test'], meta,
                      dataset.scenario, provenance=dataset.provenance,
                      clamp_counts={'val': clamped['val'], 'test': clamped['test']})


def merge_datasets(first: CsiDataset, second: CsiDataset, seed=0) -> CsiDataset:
    """
    Mix two datasets split by split; normalization is recomputed over the
    merged training split and the merged splits are shuffled deterministically
    """
    if first.sample_shape != second.sample_shape:
        raise ValueError(f"Cannot merge datasets of shapes {first.sample_shape} and {second.sample_shape}")
    rng = np.random.default_rng(seed)
    raw_splits = {}
    for name in SPLITS:
        merged = np.concatenate([first.meta.denormalize(first.split(name)),
                                 second.meta.denormalize(second.split(name))])
        raw_splits[name] = merged[rng.permutation(len(merged))]
    meta = NormalizationMeta(raw_splits['train'].min(), raw_splits['train'].max(), 'train')
    normalized, clamp_counts = _normalize_splits(raw_splits, meta)
    scenario = first.scenario.replace(name=f"{first.scenario.name}+{second.scenario.name}")
    logger.info(f"✅ Merged {first.scenario.name} and {second.scenario.name}: "
                f"{len(first) + len(second)} samples")
    return CsiDataset(normalized['train'], normalized['val'], normalized['test'], meta, scenario,
                      provenance=first.provenance + second.provenance, clamp_counts=clamp_counts)


def _pack_scenario(scenario: ScenarioConfig):
    name = scenario.name.encode('utf-8')
    if len(name) > 32:
        raise ValueError(f"Scenario name '{scenario.name}' exceeds 32 bytes")
    return (name, scenario.n_tx_antennas, scenario.n_subcarriers, scenario.n_clusters,
            scenario.n_subpaths_per_cluster, float(scenario.center_frequency),
            float(scenario.bandwidth), float(scenario.antenna_spacing_over_wavelength),
            1 if scenario.los else 0, float(scenario.rician_k_factor), float(scenario.angle_spread),
            float(scenario.max_delay), float(scenario.angle_center_low),
            float(scenario.angle_center_high), int(scenario.seed))


def _unpack_scenario(values):
    (name, n_tx, n_sub, n_clusters, n_subpaths, center_frequency, bandwidth, spacing, los,
     k_factor, angle_spread, max_delay, low, high, seed) = values
    return ScenarioConfig(
        name=name.rstrip(b'\x00').decode('utf-8'), n_tx_antennas=n_tx, n_subcarriers=n_sub,
        n_clusters=n_clusters, n_subpaths_per_cluster=n_subpaths, center_frequency=center_frequency,
        bandwidth=bandwidth, antenna_spacing_over_wavelength=spacing, los=bool(los),
        rician_k_factor=k_factor, angle_spread=angle_spread, max_delay=max_delay,
        angle_center_low=low, angle_center_high=high, seed=seed)


def dataset_header(dataset: CsiDataset):
    n_t, n_c = dataset.sample_shape[1:]
    return {
        'magic': DATASET_MAGIC.decode('ascii'),
        'version': DATASET_VERSION,
        'n_t': n_t,
        'n_c': n_c,
        'split_sizes': dataset.split_sizes,
        'normalization': dataset.meta.to_dict(),
        'scenario': dataset.scenario.to_dict(),
        'provenance': dataset.provenance,
        'clamp_counts': dataset.clamp_counts,
    }


def save_dataset(dataset: CsiDataset, path):
    """Write the binary dataset plus its JSON sidecar"""
    n_t, n_c = dataset.sample_shape[1:]
    writer = BinaryWriter(DATASET_MAGIC, DATASET_VERSION)
    writer.pack('II', n_t, n_c)
    writer.pack('QQQ', *(dataset.split_sizes[name] for name in SPLITS))
    writer.pack('dd', dataset.meta.global_min, dataset.meta.global_max)
    writer.pack(_SCENARIO_BLOCK, *_pack_scenario(dataset.scenario))
    for name in SPLITS:
        writer.array(dataset.split(name))
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    writer.write(path)
    with open(f"{path}.json", 'w', encoding='utf-8') as f:
        json.dump(dataset_header(dataset), f, indent=2, sort_keys=True)
    logger.info(f"💾 Saved dataset {dataset.scenario.name} to {path}")


def load_dataset(path) -> CsiDataset:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Dataset file not found: {path}")
    reader = BinaryReader.from_file(path, DATASET_MAGIC, DATASET_VERSION)
    n_t, n_c = reader.unpack('II')
    sizes = reader.unpack('QQQ')
    global_min, global_max = reader.unpack('dd')
    try:
        scenario = _unpack_scenario(reader.unpack(_SCENARIO_BLOCK))
    except (struct.error, UnicodeDecodeError) as e:
        raise ValueError(f"{path}: corrupt scenario block ({e})")
    splits = [reader.array((size, 2, n_t, n_c)) for size in sizes]
    reader.expect_end()
    meta = NormalizationMeta(global_min, global_max, 'train')

    provenance, clamp_counts = None, None
    sidecar = f"{path}.json"
    if os.path.exists(sidecar):
        try:
            with open(sidecar, 'r', encoding='utf-8') as f:
                header = json.load(f)
            provenance = header.get('provenance')
            clamp_counts = header.get('clamp_counts')
        except json.JSONDecodeError as e:
            logger.warning(f"⚠️ Ignoring unreadable sidecar {sidecar}: {str(e)}")
    return CsiDataset(*splits, meta, scenario, provenance=provenance, clamp_counts=clamp_counts)


def dataset_digest(path) -> str:
    """SHA-256 hex digest of a dataset file"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Dataset file not found: {path}")
    return file_digest(path)
