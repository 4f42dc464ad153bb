#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Experiment orchestration: per-regime runs with on-disk artifacts and manifests,
the multi-seed reproduction suite, hyperparameter sweeps and generalization recipes
"""

import hashlib
import json
import logging
import math
import os

import numpy as np

import autodiff as ad
from analysis import emit_report, flops_ratio, inference_benchmark, model_flops, nmse, training_time_model
from binary_format import file_digest
from channel_model import build_dataset, load_dataset, merge_datasets, renormalize, save_dataset
from exchange_validator import BS_SIDE, UE_SIDE, ExchangeValidator
from models import ExperimentConfig, KdConfig, parse_gamma
from networks import (Autoencoder, AutoencoderCheckpoint, Network, build_decoder, build_student_encoder,
                      build_teacher_encoder, derive_seed, load_checkpoint, run_inference, save_checkpoint)
from training import (STUDENT_PAIRS_FILE, TEACHER_PAIRS_FILE, distill_autoencoder, run_encoder_kd,
                      run_sequential_training, run_variant_encoder_kd, train_vanilla, variant_decoder_fine_tune,
                      variant_student_encoder, variant_teacher_pairs)

logger = logging.getLogger(__name__)

TEACHER = 'teacher'
SUITE_REGIMES = ('vanilla', 'autoencoder_kd', 'encoder_kd', 'variant_encoder_kd', 'sequential')
FLOPS_GAMMAS = ('1/4', '1/8', '1/16', '1/32')
VARIANT_STEPS = ('all', 'teacher-pairs', 'student-encoder', 'decoder-finetune')
GENERALIZATION_KINDS = ('scenario', 'environment', 'bandwidth')

SCALES = {
    'smoke': {'n_t': 8, 'n_c': 8, 'counts': {'train': 240, 'val': 60, 'test': 60}, 'seeds': [0],
              'train': {'max_epochs': 6, 'patience': 3}},
    'desk': {},
    'full': {'counts': {'train': 100000, 'val': 30000, 'test': 20000},
             'train': {'max_epochs': 1000, 'lr_drop_epoch': 100, 'batch_size': 200}},
}


def scaled_config(experiment: ExperimentConfig, scale: str) -> ExperimentConfig:
    """Apply a named scale preset on top of an experiment config"""
    if scale not in SCALES:
        raise ValueError(f"Unknown scale '{scale}' (expected one of {', '.join(SCALES)})")
    data = experiment.to_dict()
    preset = SCALES[scale]
    for key, value in preset.items():
        if isinstance(value, dict) and key == 'train':
            data['train'].update(value)
        else:
            data[key] = value
    for scenario in data['scenarios']:
        scenario['n_tx_antennas'] = data['n_t']
        scenario['n_subcarriers'] = data['n_c']
    scaled = ExperimentConfig.from_dict(data)
    errors = scaled.validate()
    if errors:
        raise ValueError(f"Scale '{scale}' gives an invalid config: " + '; '.join(errors))
    return scaled


def median(values):
    return float(np.median(values)) if len(values) else float('nan')


def evaluate(autoencoder, dataset, split='test'):
    """NMSE of an autoencoder on a dataset split, on de-normalized CSI"""
    if isinstance(autoencoder, AutoencoderCheckpoint):
        autoencoder = autoencoder.build()
    reference = dataset.split(split)
    return nmse(reference, run_inference(autoencoder, reference), dataset.meta)


def evaluate_shifted(autoencoder, dataset, meta, split='test'):
    """
    NMSE of an autoencoder trained under normalization `meta` on another dataset.
    Inputs are clamped into the model's range; the reference is the unclamped CSI.
    """
    if isinstance(autoencoder, AutoencoderCheckpoint):
        autoencoder = autoencoder.build()
    raw = dataset.meta.denormalize(dataset.split(split))
    inputs = np.clip(meta.normalize(raw), 0.0, 1.0)
    return nmse(raw, meta.denormalize(run_inference(autoencoder, inputs)))


class ExperimentRunner:
    """
    Runs training regimes for one experiment config and stores every artifact
    under <workdir>/<output_dir>/<regime>/<seed>/
    """

    def __init__(self, experiment: ExperimentConfig, workdir='.'):
        self.experiment = experiment
        self.workdir = workdir
        self.output_root = os.path.join(workdir, experiment.output_dir)
        self.dataset_dir = os.path.join(workdir, 'data', 'datasets')
        self._datasets = {}
        self._teachers = {}
        ad.set_default_dtype(experiment.train.precision)

    @property
    def n_s(self):
        return self.experiment.n_s

    def specs(self):
        e = self.experiment
        return {
            'teacher_encoder': build_teacher_encoder(e.n_t, e.n_c, e.n_s),
            'student_encoder': build_student_encoder(e.n_t, e.n_c, e.n_s),
            'decoder': build_decoder(e.n_t, e.n_c, e.n_s, e.crblock_width),
        }

    def dataset_path(self, name):
        return os.path.join(self.dataset_dir, f"{name}.csid")

    def dataset(self, name=None):
        """Load a cached dataset matching the config, or generate and save it"""
        scenario = self.experiment.scenario(name)
        if scenario.name in self._datasets:
            return self._datasets[scenario.name]
        path = self.dataset_path(scenario.name)
        dataset = None
        if os.path.exists(path):
            try:
                cached = load_dataset(path)
                if cached.scenario == scenario and cached.split_sizes == self.experiment.counts:
                    dataset = cached
                    logger.info(f"📂 Reusing dataset {path}")
            except ValueError as e:
                logger.warning(f"⚠️ Regenerating unreadable dataset {path}: {str(e)}")
        if dataset is None:
            dataset = build_dataset(scenario, self.experiment.counts, self.experiment.workers)
            save_dataset(dataset, path)
            logger.info(f"💾 {scenario.name} digest {file_digest(path)}")
        self._datasets[scenario.name] = dataset
        return dataset

    def train_config(self, dataset, seed):
        return self.experiment.train.resolved(len(dataset.train)).replace(seed=seed)

    def run_dir(self, regime, seed):
        return os.path.join(self.output_root, regime, str(seed))

    def new_autoencoder(self, encoder_key, seed, label):
        specs = self.specs()
        return Autoencoder(Network(specs[encoder_key], derive_seed(seed, f"{label}_encoder")),
                           Network(specs['decoder'], derive_seed(seed, f"{label}_decoder")))

    def new_student_encoder(self, seed):
        return Network(self.specs()['student_encoder'], derive_seed(seed, 'student_encoder'))

    def teacher(self, seed, dataset=None, tag=TEACHER):
        """
        Pretrained teacher autoencoder, trained once per seed and cached on disk.
        A cached teacher is reused only if its architecture, training data and
        schedule match the current config.
        """
        key = (tag, seed)
        if key in self._teachers:
            return self._teachers[key]
        dataset = dataset or self.dataset()
        config = self.train_config(dataset, seed)
        inputs = self.teacher_inputs(dataset, config)
        directory = os.path.join(self.run_dir(tag, seed), 'autoencoder')
        checkpoint = self._cached_teacher(tag, seed, directory, inputs)
        if checkpoint is None:
            autoencoder = self.new_autoencoder('teacher_encoder', seed, tag)
            checkpoint, report = train_vanilla(autoencoder, dataset, config)
            result = self._finish(tag, seed, checkpoint, report, dataset, inputs=inputs)
            logger.info(f"🎓 Teacher {tag} seed {seed}: {result['nmse_db']} dB")
        self._teachers[key] = checkpoint
        return checkpoint

    def teacher_inputs(self, dataset, config):
        """What a teacher checkpoint depends on: both specs, the training data and the schedule"""
        specs = self.specs()
        digest = hashlib.sha256()
        for block in (dataset.train, dataset.val):
            digest.update(np.ascontiguousarray(block, dtype=np.float64).tobytes())
        inputs = {'encoder_spec': specs['teacher_encoder'].spec_hash().hex(),
                  'decoder_spec': specs['decoder'].spec_hash().hex(),
                  'data_sha256': digest.hexdigest(),
                  'train': config.to_dict()}
        # compared against the JSON stored in the manifest
        return json.loads(json.dumps(inputs, sort_keys=True))

    def _cached_teacher(self, tag, seed, directory, inputs):
        manifest_path = os.path.join(self.run_dir(tag, seed), 'manifest.json')
        if not os.path.exists(os.path.join(directory, AutoencoderCheckpoint.ENCODER_FILE)):
            return None
        try:
            checkpoint = AutoencoderCheckpoint.load(directory)
            with open(manifest_path, 'r', encoding='utf-8') as f:
                stored = json.load(f).get('inputs')
        except (OSError, ValueError) as e:
            logger.warning(f"⚠️ Retraining teacher {tag}/{seed}: cached checkpoint unreadable ({str(e)})")
            return None
        hashes_match = (checkpoint.encoder.spec_hash.hex() == inputs['encoder_spec']
                        and checkpoint.decoder.spec_hash.hex() == inputs['decoder_spec'])
        if not hashes_match or stored != inputs:
            logger.warning(f"⚠️ Retraining teacher {tag}/{seed}: cached checkpoint was built for another "
                           f"architecture, dataset or schedule")
            return None
        logger.info(f"📂 Reusing teacher checkpoint {directory}")
        return checkpoint

    def _finish(self, regime, seed, checkpoint: AutoencoderCheckpoint, report, dataset, extra=None, inputs=None):
        directory = self.run_dir(regime, seed)
        checkpoint.save(os.path.join(directory, 'autoencoder'))
        result = evaluate(checkpoint, dataset)
        report.final_nmse_db = result.db_text if result.linear == 0 else result.db
        report.save(directory)
        row = {'regime': regime, 'seed': seed, 'nmse_linear': result.linear,
               'nmse_db': report.final_nmse_db, 'test_samples': result.count}
        row.update(extra or {})
        timing = {name: {'epochs': p['epochs'], 'seconds': p['seconds']} for name, p in report.phases.items()}
        self.write_manifest(regime, seed, row, inputs)
        return dict(row, timing=timing)

    def write_manifest(self, regime, seed, result, inputs=None):
        directory = self.run_dir(regime, seed)
        artifacts = {}
        for root, _, files in os.walk(directory):
            for name in sorted(files):
                if name in ('manifest.json', 'timing.csv'):
                    continue
                path = os.path.join(root, name)
                artifacts[os.path.relpath(path, directory)] = file_digest(path)
        manifest = {'regime': regime, 'seed': seed, 'result': result,
                    'artifacts': dict(sorted(artifacts.items())),
                    'config': self.experiment.to_dict()}
        if inputs is not None:
            manifest['inputs'] = inputs
        with open(os.path.join(directory, 'manifest.json'), 'w', encoding='utf-8') as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
        logger.info(f"💾 Manifest for {regime}/{seed}: {len(artifacts)} artifacts")

    def run(self, regime, seed, kd: KdConfig = None, dataset=None, tag=None):
        """
        Train one regime for one seed, evaluate on the test split and write artifacts

        Returns:
            dict: Result row (regime, seed, NMSE) plus per-phase timing
        """
        dataset = dataset or self.dataset()
        config = self.train_config(dataset, seed)
        name = tag or regime
        logger.info(f"🚀 Running {name} (seed {seed})")
        if regime == TEACHER:
            self.teacher(seed, dataset)
            return self.load_result(TEACHER, seed)
        if regime == 'vanilla':
            checkpoint, report = train_vanilla(self.new_autoencoder('student_encoder', seed, 'student'),
                                               dataset, config)
        elif regime == 'autoencoder_kd':
            kd = kd or self.experiment.kd
            checkpoint, report = distill_autoencoder(self.teacher(seed, dataset),
                                                     self.new_autoencoder('student_encoder', seed, 'student'),
                                                     dataset, config, kd)
        elif regime == 'encoder_kd':
            checkpoint, report = run_encoder_kd(self.teacher(seed, dataset), self.new_student_encoder(seed),
                                                dataset, config)
        elif regime == 'variant_encoder_kd':
            exchange = os.path.join(self.run_dir(name, seed), 'exchange')
            encoder_ckpt, decoder_ckpt, report = run_variant_encoder_kd(
                self.teacher(seed, dataset), self.new_student_encoder(seed), dataset, config, exchange)
            checkpoint = AutoencoderCheckpoint(encoder_ckpt, decoder_ckpt)
        elif regime == 'sequential':
            specs = self.specs()
            checkpoint, report = run_sequential_training((specs['teacher_encoder'], specs['decoder']),
                                                         specs['student_encoder'], dataset, config)
        else:
            raise ValueError(f"Unknown regime '{regime}'")
        extra = {'alpha': kd.alpha, 'temperature': kd.temperature} if kd is not None else None
        return self._finish(name, seed, checkpoint, report, dataset, extra)

    def load_result(self, regime, seed):
        with open(os.path.join(self.run_dir(regime, seed), 'manifest.json'), 'r', encoding='utf-8') as f:
            result = json.load(f)['result']
        with open(os.path.join(self.run_dir(regime, seed), 'report.json'), 'r', encoding='utf-8') as f:
            phases = json.load(f)['phases']
        return dict(result, timing={k: {'epochs': v['epochs'], 'seconds': float('nan')} for k, v in phases.items()})

    def variant_step(self, step, seed, budget=None):
        """
        Run one side of the pair-exchange protocol on its own, exchanging files
        through <run_dir>/exchange

        Args:
            step (str): 'teacher-pairs' (BS), 'student-encoder' (UE) or 'decoder-finetune' (BS)
            seed (int): Run seed
            budget (int): Decoder fine-tuning epochs; defaults to the configured fraction of max_epochs

        Returns:
            str: Path of the artifact written by this step
        """
        directory = self.run_dir('variant_encoder_kd', seed)
        exchange = os.path.join(directory, 'exchange')
        os.makedirs(exchange, exist_ok=True)
        specs = self.specs()
        validator = ExchangeValidator()
        if step == 'teacher-pairs':
            dataset = self.dataset()
            teacher = self.teacher(seed, dataset)
            validator.register(BS_SIDE, teacher.encoder, teacher.decoder)
            return variant_teacher_pairs(teacher, dataset, exchange, validator)
        if step == 'student-encoder':
            student = self.new_student_encoder(seed)
            validator.register(UE_SIDE, student)
            pairs_path = os.path.join(exchange, TEACHER_PAIRS_FILE)
            if not os.path.exists(pairs_path):
                raise FileNotFoundError(f"Teacher pairs not found: {pairs_path} (run the teacher-pairs step)")
            n_train = self.experiment.counts['train']
            config = self.experiment.train.resolved(n_train).replace(seed=seed)
            checkpoint, report, _ = variant_student_encoder(student, pairs_path, config, exchange, validator)
            path = os.path.join(directory, 'student', 'encoder.csik')
            save_checkpoint(checkpoint, path)
            report.save(os.path.join(directory, 'student'))
            return path
        if step == 'decoder-finetune':
            pairs_path = os.path.join(exchange, STUDENT_PAIRS_FILE)
            if not os.path.exists(pairs_path):
                raise FileNotFoundError(f"Student pairs not found: {pairs_path} (run the student-encoder step)")
            dataset = self.dataset()
            teacher = self.teacher(seed, dataset)
            validator.register(BS_SIDE, teacher.encoder, teacher.decoder)
            config = self.train_config(dataset, seed)
            if budget is None:
                budget = config.fine_tune_budget(config.max_epochs)
            checkpoint, report = variant_decoder_fine_tune(teacher.decoder, pairs_path, config, budget, validator)
            path = os.path.join(directory, 'decoder', 'decoder.csik')
            save_checkpoint(checkpoint, path)
            report.save(os.path.join(directory, 'decoder'))
            encoder_path = os.path.join(directory, 'student', 'encoder.csik')
            if os.path.exists(encoder_path):
                combined = AutoencoderCheckpoint(load_checkpoint(encoder_path, specs['student_encoder']), checkpoint)
                result = evaluate(combined, dataset)
                logger.info(f"📊 Variant encoder KD (separate steps) NMSE {result.db_text} dB")
            return path
        raise ValueError(f"Unknown variant step '{step}' (expected one of {', '.join(VARIANT_STEPS)})")


def flops_table(experiment: ExperimentConfig, gammas=FLOPS_GAMMAS):
    """Encoder/decoder FLOPs across compression ratios"""
    rows = []
    for gamma in gammas:
        n_s = 2 * experiment.n_t * experiment.n_c * parse_gamma(gamma)
        if n_s.denominator != 1:
            continue
        n_s = int(n_s)
        student = model_flops(build_student_encoder(experiment.n_t, experiment.n_c, n_s))
        teacher = model_flops(build_teacher_encoder(experiment.n_t, experiment.n_c, n_s))
        decoder = model_flops(build_decoder(experiment.n_t, experiment.n_c, n_s, experiment.crblock_width))
        rows.append({'gamma': str(gamma), 'n_s': n_s, 'student_encoder': student.total,
                     'teacher_encoder': teacher.total, 'decoder': decoder.total,
                     'student_over_teacher_pct': float(flops_ratio(student, teacher)) * 100})
    return rows


def _summarize(results, regimes):
    rows = []
    for regime in regimes:
        values = [r['nmse_db'] for r in results if r['regime'] == regime and isinstance(r['nmse_db'], float)]
        row = {'regime': regime, 'median_nmse_db': median(values)}
        for r in results:
            if r['regime'] == regime:
                row[f"seed_{r['seed']}_nmse_db"] = r['nmse_db']
        rows.append(row)
    return rows


def _training_time_rows(runner: ExperimentRunner, results):
    specs = runner.specs()
    c_en_s = model_flops(specs['student_encoder']).total
    c_de = model_flops(specs['decoder']).total
    rows = []
    for seed in runner.experiment.seeds:
        by_regime = {r['regime']: r['timing'] for r in results if r['seed'] == seed}
        if 'autoencoder_kd' not in by_regime or 'encoder_kd' not in by_regime:
            continue
        au = by_regime['autoencoder_kd']['autoencoder_kd']
        en1 = by_regime['encoder_kd']['encoder_kd']
        en2 = by_regime['encoder_kd'].get('fine_tune', {'epochs': 0, 'seconds': 0.0})
        predicted = training_time_model(au['epochs'], en1['epochs'], en2['epochs'], c_en_s, c_de, c_de)
        encoder_total = en1['seconds'] + en2['seconds']
        measured = au['seconds'] / encoder_total if encoder_total > 0 else float('nan')
        rows.append({'seed': seed, 'autoencoder_kd_epochs': au['epochs'], 'autoencoder_kd_s': au['seconds'],
                     'encoder_kd_epochs': en1['epochs'], 'encoder_kd_s': en1['seconds'],
                     'fine_tune_epochs': en2['epochs'], 'fine_tune_s': en2['seconds'],
                     'predicted_speedup': predicted, 'measured_speedup': measured,
                     'within_factor_2': bool(0.5 <= measured / predicted <= 2.0) if predicted else False})
    return rows


def ordering_checks(results):
    """Median-over-seeds orderings between regimes (more negative dB is better)"""
    medians = {r['regime']: r['median_nmse_db'] for r in _summarize(results, (TEACHER,) + SUITE_REGIMES)}
    checks = [(f"teacher < {regime}", TEACHER, regime) for regime in SUITE_REGIMES]
    checks += [
        ('encoder_kd < vanilla', 'encoder_kd', 'vanilla'),
        ('autoencoder_kd < vanilla', 'autoencoder_kd', 'vanilla'),
        ('variant_encoder_kd < sequential', 'variant_encoder_kd', 'sequential'),
    ]
    rows = []
    for label, better, worse in checks:
        a, b = medians.get(better, float('nan')), medians.get(worse, float('nan'))
        rows.append({'check': label, 'better_db': a, 'worse_db': b,
                     'passed': bool(not math.isnan(a) and not math.isnan(b) and a < b)})
    return rows


def reproduce(experiment: ExperimentConfig, workdir='.', scale='desk', regimes=SUITE_REGIMES, benchmark=True):
    """
    Full suite: teacher and every regime for each seed, then NMSE, FLOPs,
    ordering and timing tables

    Returns:
        dict: Table name -> rows, plus 'checks'
    """
    experiment = scaled_config(experiment, scale)
    runner = ExperimentRunner(experiment, workdir)
    dataset = runner.dataset()
    results = []
    for seed in experiment.seeds:
        runner.teacher(seed, dataset)
        results.append(runner.load_result(TEACHER, seed))
        for regime in regimes:
            results.append(runner.run(regime, seed, dataset=dataset))

    tables = {
        'nmse_by_regime': _summarize(results, (TEACHER,) + tuple(regimes)),
        'nmse_per_run': [{k: v for k, v in r.items() if k != 'timing'} for r in results],
        'flops': flops_table(experiment),
        'orderings': ordering_checks(results),
    }
    report_dir = os.path.join(runner.output_root, 'report')
    emit_report(tables, report_dir)

    timing = {'training_time': _training_time_rows(runner, results)}
    if benchmark:
        specs = runner.specs()
        timing['inference_time'] = [
            inference_benchmark(Network(specs[key]), repetitions=50, warmups=5, component=key).to_dict()
            for key in ('student_encoder', 'teacher_encoder')]
        for row in timing['inference_time']:
            row.pop('samples_s')
    emit_report(timing, os.path.join(report_dir, 'timing'), title='Wall-clock measurements')

    failed = [c['check'] for c in tables['orderings'] if not c['passed']]
    if failed:
        logger.warning(f"⚠️ Ordering checks not met at {scale} scale: {', '.join(failed)}")
    else:
        logger.info(f"✅ All ordering checks passed at {scale} scale")
    return dict(tables, **timing)


def _sweep(runner: ExperimentRunner, field, values, seed):
    dataset = runner.dataset()
    rows = []
    for value in values:
        kd = KdConfig(**dict(runner.experiment.kd.to_dict(), **{field: value}))
        result = runner.run('autoencoder_kd', seed, kd=kd, dataset=dataset, tag=f"autoencoder_kd_{field}_{value:g}")
        rows.append({field: value, 'nmse_db': result['nmse_db'], 'nmse_linear': result['nmse_linear']})
    best = min(rows, key=lambda r: r['nmse_linear'])
    logger.info(f"📊 Best {field} at this scale: {best[field]:g} ({best['nmse_db']} dB)")
    return rows


def sweep_alpha(runner: ExperimentRunner, alphas=None, seed=0):
    alphas = alphas if alphas is not None else [round(0.1 * i, 1) for i in range(11)]
    return _sweep(runner, 'alpha', alphas, seed)


def sweep_temperature(runner: ExperimentRunner, temperatures=None, seed=0):
    temperatures = temperatures if temperatures is not None else list(range(1, 11))
    return _sweep(runner, 'temperature', [float(t) for t in temperatures], seed)


def generalization_scenarios(base, kind):
    """
    Dataset 1 and a shifted Dataset 2 for one generalization experiment

    Args:
        base (ScenarioConfig): Dataset 1
        kind (str): 'scenario' (LOS vs NLOS), 'environment' (other cluster angle region)
            or 'bandwidth' (40 MHz vs 10 MHz)
    """
    if kind == 'scenario':
        return base.replace(name='dataset1', los=True), base.replace(name='dataset2', los=False, seed=base.seed + 1)
    if kind == 'environment':
        return (base.replace(name='dataset1', angle_center_low=-math.pi / 3, angle_center_high=0.0),
                base.replace(name='dataset2', angle_center_low=0.0, angle_center_high=math.pi / 3,
                             seed=base.seed + 1))
    if kind == 'bandwidth':
        return (base.replace(name='dataset1', bandwidth=40e6, max_delay=4.0 / 40e6),
                base.replace(name='dataset2', bandwidth=10e6, max_delay=4.0 / 40e6, seed=base.seed + 1))
    raise ValueError(f"Unknown generalization kind '{kind}' (expected one of {', '.join(GENERALIZATION_KINDS)})")


def run_generalization(experiment: ExperimentConfig, workdir='.', kind='scenario'):
    """
    Teacher on mixed Dataset 1+2, variant encoder KD with Dataset 1 only, compared on
    Dataset 2 against a vanilla student trained on Dataset 1 only

    Returns:
        list: One row per seed
    """
    first, second = generalization_scenarios(experiment.scenario(), kind)
    data = experiment.to_dict()
    data['scenarios'] = [first.to_dict(), second.to_dict()]
    data['output_dir'] = os.path.join(experiment.output_dir, f"generalization_{kind}")
    runner = ExperimentRunner(ExperimentConfig.from_dict(data), workdir)
    d1, d2 = runner.dataset('dataset1'), runner.dataset('dataset2')
    mixed = merge_datasets(d1, d2, seed=experiment.seed)
    d1_mixed = renormalize(d1, mixed.meta)

    rows = []
    for seed in experiment.seeds:
        teacher = runner.teacher(seed, mixed, tag='teacher_mixed')
        student_ckpt, decoder_ckpt, _ = run_variant_encoder_kd(
            teacher, runner.new_student_encoder(seed), d1_mixed, runner.train_config(d1_mixed, seed),
            os.path.join(runner.run_dir('variant_dataset1', seed), 'exchange'))
        variant = AutoencoderCheckpoint(student_ckpt, decoder_ckpt)
        variant.save(os.path.join(runner.run_dir('variant_dataset1', seed), 'autoencoder'))
        baseline = runner.run('vanilla', seed, dataset=d1, tag='vanilla_dataset1')
        baseline_ckpt = AutoencoderCheckpoint.load(os.path.join(runner.run_dir('vanilla_dataset1', seed), 'autoencoder'))
        row = {
            'kind': kind, 'seed': seed,
            'variant_d1_db': evaluate_shifted(variant, d1, mixed.meta).db,
            'variant_d2_db': evaluate_shifted(variant, d2, mixed.meta).db,
            'vanilla_d1_db': baseline['nmse_db'],
            'vanilla_d2_db': evaluate_shifted(baseline_ckpt, d2, d1.meta).db,
        }
        row['d2_gain_db'] = row['vanilla_d2_db'] - row['variant_d2_db']
        rows.append(row)
        logger.info(f"📊 Generalization ({kind}) seed {seed}: Dataset-2 gain {row['d2_gain_db']:.2f} dB")
    emit_report({f"generalization_{kind}": rows}, os.path.join(runner.output_root, 'report'))
    gains = [r['d2_gain_db'] for r in rows]
    if median(gains) > 0:
        logger.info(f"✅ Dataset-2 NMSE improves with the mixed teacher (median gain {median(gains):.2f} dB)")
    else:
        logger.warning(f"⚠️ No Dataset-2 improvement (median gain {median(gains):.2f} dB)")
    return rows
