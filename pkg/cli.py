#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Command-line entry point: dataset generation, every training regime,
evaluation, FLOPs, benchmarks, sweeps and the reproduction suite
"""

import argparse
import json
import logging
import os
import sys

from dotenv import load_dotenv

# Thread counts must be fixed before numpy is imported
load_dotenv()
_THREADS = os.environ.get('CSIKD_NUM_THREADS', '1')
for _var in ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS'):
    os.environ.setdefault(_var, _THREADS)

from analysis import compare_domains, inference_benchmark, model_flops, nmse  # noqa: E402
from channel_model import ANGULAR_DELAY, SPATIAL_FREQUENCY, dataset_digest  # noqa: E402
from config_manager import CONFIG_FILE, ExperimentConfigManager, load_config  # noqa: E402
from exchange_validator import IsolationViolation  # noqa: E402
from experiments import (GENERALIZATION_KINDS, SCALES, VARIANT_STEPS, ExperimentRunner,  # noqa: E402
                         reproduce, run_generalization, scaled_config, sweep_alpha, sweep_temperature)
from models import KdConfig, parse_gamma  # noqa: E402
from networks import (AutoencoderCheckpoint, Network, build_decoder, build_student_encoder,  # noqa: E402
                      build_teacher_encoder, load_checkpoint, run_inference)
from training import TrainingDivergedError  # noqa: E402

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_INVALID_CONFIG = 3
EXIT_MISSING_ARTIFACT = 4
EXIT_DIVERGED = 5

MODEL_BUILDERS = {
    'student-encoder': lambda n_t, n_c, n_s, width: build_student_encoder(n_t, n_c, n_s),
    'teacher-encoder': lambda n_t, n_c, n_s, width: build_teacher_encoder(n_t, n_c, n_s),
    'decoder': build_decoder,
}


class InvalidConfig(ValueError):
    """Experiment config failed schema or value validation"""


def setup_logging(workdir, level='INFO'):
    log_dir = os.path.join(workdir, 'logs')
    os.makedirs(log_dir, exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(os.path.join(log_dir, 'csikd.log'), encoding='utf-8'),
            logging.StreamHandler(sys.stdout)
        ],
        force=True
    )


def load_experiment(args):
    """Read, override and validate the experiment config named by the arguments"""
    default_path = os.path.join(args.workdir, 'data', CONFIG_FILE)
    path = args.config or default_path
    try:
        raw = load_config(path, create_missing=(args.config is None))
        manager = ExperimentConfigManager(raw).with_overrides(**{
            'seed': getattr(args, 'seed', None),
            'train.max_epochs': getattr(args, 'max_epochs', None),
            'output_dir': getattr(args, 'output_dir', None),
        })
        experiment = manager.resolve()
    except ValueError as e:
        raise InvalidConfig(str(e))
    return experiment


def _seed(args, experiment):
    return experiment.seed if args.seed is None else args.seed


def cmd_gen_data(args):
    experiment = load_experiment(args)
    runner = ExperimentRunner(experiment, args.workdir)
    for scenario in experiment.scenarios:
        runner.dataset(scenario.name)
        path = runner.dataset_path(scenario.name)
        print(f"{scenario.name} {dataset_digest(path)}")
    return EXIT_OK


def _print_result(result):
    print(json.dumps({k: v for k, v in result.items() if k != 'timing'}, sort_keys=True))


def cmd_train(args):
    experiment = load_experiment(args)
    runner = ExperimentRunner(experiment, args.workdir)
    regime = 'teacher' if args.model == 'teacher' else 'vanilla'
    _print_result(runner.run(regime, _seed(args, experiment)))
    return EXIT_OK


def cmd_distill(args):
    experiment = load_experiment(args)
    kd = KdConfig(alpha=experiment.kd.alpha if args.alpha is None else args.alpha,
                  temperature=experiment.kd.temperature if args.temperature is None else args.temperature)
    errors = kd.validate()
    if errors:
        raise InvalidConfig('; '.join(errors))
    runner = ExperimentRunner(experiment, args.workdir)
    _print_result(runner.run('autoencoder_kd', _seed(args, experiment), kd=kd))
    return EXIT_OK


def cmd_encoder_distill(args):
    experiment = load_experiment(args)
    _print_result(ExperimentRunner(experiment, args.workdir).run('encoder_kd', _seed(args, experiment)))
    return EXIT_OK


def cmd_variant_distill(args):
    experiment = load_experiment(args)
    runner = ExperimentRunner(experiment, args.workdir)
    seed = _seed(args, experiment)
    if args.step == 'all':
        _print_result(runner.run('variant_encoder_kd', seed))
    else:
        print(runner.variant_step(args.step, seed, budget=args.budget))
    return EXIT_OK


def cmd_seq_train(args):
    experiment = load_experiment(args)
    _print_result(ExperimentRunner(experiment, args.workdir).run('sequential', _seed(args, experiment)))
    return EXIT_OK


def cmd_eval(args):
    experiment = load_experiment(args)
    runner = ExperimentRunner(experiment, args.workdir)
    seed = _seed(args, experiment)
    directory = args.checkpoint or os.path.join(runner.run_dir(args.regime, seed), 'autoencoder')
    if not os.path.exists(os.path.join(directory, AutoencoderCheckpoint.ENCODER_FILE)):
        raise FileNotFoundError(f"No autoencoder checkpoint in {directory}")
    dataset = runner.dataset(args.dataset)
    reference = dataset.split(args.split)
    reconstruction = run_inference(AutoencoderCheckpoint.load(directory).build(), reference)
    if args.domain == 'both':
        outcome = compare_domains(reference, reconstruction, dataset.meta)
        for key in ('angular_delay', 'spatial_frequency'):
            print(json.dumps(outcome[key].to_dict(), sort_keys=True))
        return EXIT_OK if outcome['agree'] else EXIT_RUNTIME
    print(json.dumps(nmse(reference, reconstruction, dataset.meta, args.domain).to_dict(), sort_keys=True))
    return EXIT_OK


def _model_spec(args):
    n_s = 2 * args.n_t * args.n_c * parse_gamma(args.gamma)
    if n_s.denominator != 1:
        raise InvalidConfig(f"gamma {args.gamma} does not give an integer codeword length for "
                            f"{args.n_t}x{args.n_c}")
    return MODEL_BUILDERS[args.model](args.n_t, args.n_c, int(n_s), args.crblock_width)


def cmd_flops(args):
    report = model_flops(_model_spec(args))
    if args.per_layer:
        for layer, count in report.layers:
            print(f"{layer} {count}")
    print(report.total)
    return EXIT_OK


def cmd_bench(args):
    if args.checkpoint:
        model = Network.from_checkpoint(load_checkpoint(args.checkpoint))
    else:
        model = Network(_model_spec(args))
    report = inference_benchmark(model, args.repetitions, args.warmups, component=args.model)
    print(json.dumps({k: v for k, v in report.to_dict().items() if k != 'samples_s'}, sort_keys=True))
    return EXIT_OK


def cmd_reproduce(args):
    experiment = load_experiment(args)
    tables = reproduce(experiment, args.workdir, args.scale, benchmark=not args.no_bench)
    failed = [row['check'] for row in tables['orderings'] if not row['passed']]
    for row in tables['orderings']:
        print(f"{'PASS' if row['passed'] else 'FAIL'} {row['check']}")
    return EXIT_OK if not failed or not args.strict else EXIT_RUNTIME


def cmd_sweep(args):
    experiment = load_experiment(args)
    if args.scale:
        experiment = scaled_config(experiment, args.scale)
    runner = ExperimentRunner(experiment, args.workdir)
    seed = _seed(args, experiment)
    if args.param == 'alpha':
        rows = sweep_alpha(runner, args.values, seed)
    else:
        rows = sweep_temperature(runner, args.values, seed)
    for row in rows:
        print(json.dumps(row, sort_keys=True))
    return EXIT_OK


def cmd_generalize(args):
    experiment = load_experiment(args)
    if args.scale:
        experiment = scaled_config(experiment, args.scale)
    for row in run_generalization(experiment, args.workdir, args.kind):
        print(json.dumps(row, sort_keys=True))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog='csikd', description='Knowledge distillation for CSI feedback autoencoders')
    parser.add_argument('--log-level', default='INFO', help='Logging level (default INFO)')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--workdir', default=os.environ.get('CSIKD_WORKDIR', '.'),
                        help='Directory holding data/, logs/ and run outputs (env CSIKD_WORKDIR)')
    common.add_argument('--config', help='Experiment config JSON (default <workdir>/data/config.json)')
    common.add_argument('--seed', type=int, help='Run seed (default: config seed)')
    common.add_argument('--max-epochs', type=int, help='Override train.max_epochs')
    common.add_argument('--output-dir', help='Override the run output directory (relative to workdir)')

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument('--model', choices=sorted(MODEL_BUILDERS), default='student-encoder', help='Network to build')
    model.add_argument('--gamma', default='1/16', help='Compression ratio, e.g. 1/16')
    model.add_argument('--n-t', type=int, default=32, help='Transmit antennas')
    model.add_argument('--n-c', type=int, default=32, help='Subcarriers')
    model.add_argument('--crblock-width', type=int, default=8, help='CRBlock branch width (decoder)')

    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('gen-data', parents=[common], help='Generate and save the configured datasets')
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser('train', parents=[common], help='Train an autoencoder from scratch (MSE)')
    p.add_argument('--model', choices=('student', 'teacher'), default='student', help='Architecture to train')
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser('distill', parents=[common], help='Autoencoder distillation')
    p.add_argument('--alpha', type=float, help='Weight of the ground-truth MSE term')
    p.add_argument('--temperature', type=float, help='Softmax temperature')
    p.set_defaults(handler=cmd_distill)

    p = sub.add_parser('encoder-distill', parents=[common], help='Encoder distillation plus end-to-end fine-tuning')
    p.set_defaults(handler=cmd_encoder_distill)

    p = sub.add_parser('variant-distill', parents=[common], help='Pair-exchange encoder distillation')
    p.add_argument('--step', choices=VARIANT_STEPS, default='all', help='Protocol step to run (default all)')
    p.add_argument('--budget', type=int, help='Decoder fine-tuning epochs for --step decoder-finetune')
    p.set_defaults(handler=cmd_variant_distill)

    p = sub.add_parser('seq-train', parents=[common], help='Sequential-training baseline')
    p.set_defaults(handler=cmd_seq_train)

    p = sub.add_parser('eval', parents=[common], help='NMSE of a trained autoencoder')
    p.add_argument('--regime', default='vanilla', help='Run whose checkpoint is evaluated')
    p.add_argument('--checkpoint', help='Autoencoder checkpoint directory (overrides --regime)')
    p.add_argument('--dataset', help='Dataset name (default: first configured)')
    p.add_argument('--split', choices=('train', 'val', 'test'), default='test', help='Dataset split')
    p.add_argument('--domain', choices=(ANGULAR_DELAY, SPATIAL_FREQUENCY, 'both'), default=ANGULAR_DELAY,
                   help='Domain the NMSE is computed in')
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser('flops', parents=[model], help='FLOPs of a network')
    p.add_argument('--per-layer', action='store_true', help='Also print per-layer counts')
    p.set_defaults(handler=cmd_flops)

    p = sub.add_parser('bench', parents=[model], help='Batch-1 inference timing')
    p.add_argument('--checkpoint', help='Network checkpoint file (default: freshly initialized network)')
    p.add_argument('--repetitions', type=int, default=100, help='Timed forward passes')
    p.add_argument('--warmups', type=int, default=10, help='Discarded forward passes')
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser('reproduce', parents=[common], help='Run the full multi-seed suite and emit reports')
    p.add_argument('--scale', choices=sorted(SCALES), default='desk', help='Dataset and epoch preset')
    p.add_argument('--no-bench', action='store_true', help='Skip inference timing')
    p.add_argument('--strict', action='store_true', help='Exit nonzero when an ordering check fails')
    p.set_defaults(handler=cmd_reproduce)

    p = sub.add_parser('sweep', parents=[common], help='Sweep alpha or temperature of autoencoder distillation')
    p.add_argument('--param', choices=('alpha', 'temperature'), required=True, help='Hyperparameter to sweep')
    p.add_argument('--values', type=float, nargs='+', help='Values to try (default: full grid)')
    p.add_argument('--scale', choices=sorted(SCALES), help='Optional dataset and epoch preset')
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser('generalize', parents=[common], help='Mixed-dataset teacher generalization recipe')
    p.add_argument('--kind', choices=GENERALIZATION_KINDS, default='scenario', help='Dataset shift to test')
    p.add_argument('--scale', choices=sorted(SCALES), help='Optional dataset and epoch preset')
    p.set_defaults(handler=cmd_generalize)
    return parser


def dispatch(argv=None):
    """
    Parse arguments and run one subcommand

    Returns:
        int: 0 success, 1 runtime failure, 2 usage, 3 invalid config,
        4 missing artifact, 5 training divergence
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging(getattr(args, 'workdir', os.environ.get('CSIKD_WORKDIR', '.')), args.log_level)
    try:
        return args.handler(args)
    except InvalidConfig as e:
        logger.error(f"❌ Invalid config: {str(e)}")
        return EXIT_INVALID_CONFIG
    except FileNotFoundError as e:
        logger.error(f"❌ Missing artifact: {str(e)}")
        return EXIT_MISSING_ARTIFACT
    except TrainingDivergedError as e:
        logger.error(f"❌ {str(e)}")
        return EXIT_DIVERGED
    except IsolationViolation as e:
        logger.error(f"❌ Isolation violation: {str(e)}")
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"❌ {args.command} failed: {str(e)}")
        logger.debug('Traceback', exc_info=True)
        return EXIT_RUNTIME


def main():
    sys.exit(dispatch())


if __name__ == '__main__':
    main()
