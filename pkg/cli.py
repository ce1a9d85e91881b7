"""Command-line entry point: simulate | fit | evaluate | bench | plot.

Every flag shadows a key of the JSON run configuration given with --config.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

import last_folder_helper
from bench import bench_iteration_time, ratio_spread
from cascades import (atomic_write_bytes, atomic_write_text, bundle, corpus_from_sequences, load_corpus, save_corpus,
                      to_sequence)
from errors import CorpusError, HawkesError, UsageError
from exp_baseline import exp_fit_result, fit_exp_mle
from fit_result import FitResult
from hawkes_core import ObservationWindow, simulate_hawkes
from metrics import evaluate_fit, evaluation_table, summarise, table_csv
from plot_fit import render_png, render_svg
from run_config import RunConfig, apply_overrides, dump_config, load_config
from samplers import em_hawkes, gibbs_hawkes

log = logging.getLogger('cli')

default_sizes = '2000,5000,10000,20000'

flag_keys = {
    'model': 'model.kind', 'truth': 'model.kind', 'mu': 'model.mu', 'a1': 'model.a1', 'a2': 'model.a2',
    'end': 'model.end', 'n': 'data.sequences', 'seed': 'seed', 'jobs': 'jobs', 'method': 'method',
    'iterations': 'sampler.iterations', 'burn_in': 'sampler.burn_in', 'truncation': 'sampler.truncation',
    'K': 'sampler.basis.K', 'a': 'sampler.basis.a', 'b': 'sampler.basis.b',
    'em_samples': 'sampler.em_branching_samples', 'em_max_iters': 'sampler.em_max_iters',
    'em_tolerance': 'sampler.em_tolerance', 'em_expectation': 'sampler.em_expectation',
    'grid_points': 'sampler.grid_points', 'starts': 'sampler.optimizer.starts',
    'group_size': 'data.group_size', 'split_prob': 'data.split_prob', 'similarity': 'data.similarity',
    'rescale': 'data.rescale', 'category': 'data.category', 'corpus': 'paths.corpus', 'fits': 'paths.fits',
    'test_corpus': 'paths.test_corpus', 'out': 'paths.out',
}
sampler_only = ('iterations', 'burn_in', 'truncation', 'no_truncation', 'K', 'a', 'b', 'em_samples',
                'em_max_iters', 'em_tolerance', 'em_expectation')


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def add_common(parser):
    parser.add_argument('--config', help="JSON run configuration")
    parser.add_argument('--seed', type=int)
    parser.add_argument('--out', help="output folder (default: last folder used)")
    parser.add_argument('-v', '--verbose', action='count', default=0)
    parser.add_argument('-q', '--quiet', action='store_true')


def add_model(parser, flag):
    parser.add_argument(flag, choices=['cos', 'exp', 'custom'])
    parser.add_argument('--mu', type=float)
    parser.add_argument('--a1', type=float)
    parser.add_argument('--a2', type=float)


def build_parser():
    parser = ArgumentParser(prog='cli.py', description="Non-parametric Bayesian Hawkes kernel estimation.")
    commands = parser.add_subparsers(dest='command', required=True, parser_class=ArgumentParser)

    p = commands.add_parser('simulate', help="simulate a toy corpus")
    add_common(p)
    add_model(p, '--model')
    p.add_argument('--n', type=int, help="number of sequences")
    p.add_argument('--end', type=float, help="window end T")
    p.set_defaults(handler=cmd_simulate)

    p = commands.add_parser('fit', help="fit every training group of a corpus")
    add_common(p)
    p.add_argument('--corpus')
    p.add_argument('--method', choices=['gibbs', 'em', 'exp-mle'])
    p.add_argument('--jobs', type=int)
    p.add_argument('--iterations', type=int)
    p.add_argument('--burn-in', type=int)
    p.add_argument('--truncation', type=float, help="tail-mass tolerance of the parent horizon")
    p.add_argument('--no-truncation', action='store_true')
    p.add_argument('--K', type=int)
    p.add_argument('--a', type=float)
    p.add_argument('--b', type=float)
    p.add_argument('--em-samples', type=int)
    p.add_argument('--em-max-iters', type=int)
    p.add_argument('--em-tolerance', type=float)
    p.add_argument('--em-expectation', choices=['sampled', 'exact'])
    p.add_argument('--grid-points', type=int)
    p.add_argument('--starts', type=int)
    p.add_argument('--group-size', type=int)
    p.add_argument('--split-prob', type=float)
    p.add_argument('--similarity', choices=['by-size', 'sequential'])
    p.add_argument('--rescale', choices=['auto', 'none', 'last', 'horizon'])
    p.add_argument('--category')
    p.add_argument('--timings', action='store_true', help="keep per-iteration timings in the documents")
    p.add_argument('--no-progress', action='store_true')
    p.set_defaults(handler=cmd_fit)

    p = commands.add_parser('evaluate', help="L2 and held-out log-likelihood table")
    add_common(p)
    p.add_argument('--fits', help="folder of FitResult documents")
    add_model(p, '--truth')
    p.add_argument('--test-corpus')
    p.set_defaults(handler=cmd_evaluate)

    p = commands.add_parser('bench', help="per-iteration wall-clock against event count")
    add_common(p)
    p.add_argument('--mode', choices=['branching', 'gibbs'], default='branching')
    p.add_argument('--sizes', default=default_sizes)
    p.add_argument('--repeats', type=int, default=3)
    p.add_argument('--truncated-only', action='store_true')
    p.set_defaults(handler=cmd_bench)

    p = commands.add_parser('plot', help="SVG band plot per FitResult")
    add_common(p)
    p.add_argument('--fits', help="FitResult document or folder of them")
    add_model(p, '--truth')
    p.add_argument('--png', action='store_true', help="also write a PNG preview")
    p.set_defaults(handler=cmd_plot)
    return parser


def configure_logging(args):
    level = logging.ERROR if args.quiet else (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def resolve_config(args):
    config = load_config(args.config)
    values = vars(args)
    overrides = {key: values[flag] for flag, key in flag_keys.items() if values.get(flag) is not None}
    config = apply_overrides(config, overrides)
    if values.get('no_truncation'):
        data = config.model_dump()
        data['sampler']['truncation'] = None
        config = RunConfig.model_validate(data)
    return config


def output_folder(config: RunConfig):
    folder = config.paths.out or last_folder_helper.get_last_folder() or '.'
    out = Path(folder).expanduser()
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args, config):
    try:
        model = config.model.build()
    except ValueError as e:
        raise UsageError(f"invalid model: {e}") from e
    window = ObservationWindow(0.0, config.model.end)
    count = config.data.sequences
    if count == 0:
        log.warning("--n 0: writing an empty corpus")
    streams = np.random.SeedSequence(config.seed).spawn(count)
    sequences = [simulate_hawkes(model, window, np.random.default_rng(s))[0] for s in streams]
    provenance = {'model': config.model.kind, 'mu': repr(model.mu), 'seed': str(config.seed)}
    provenance.update({k: repr(v) for k, v in model.kernel.params().items()})
    out = output_folder(config)
    save_corpus(corpus_from_sequences(sequences, window.end, provenance), out / 'corpus.txt')
    manifest = {'model': config.model.model_dump(), 'kernel': model.kernel.kind, 'sequences': count,
                'events': sum(len(s) for s in sequences), 'seed': config.seed, 'window_end': window.end}
    atomic_write_text(out / 'manifest.json', json.dumps(manifest, indent=2, sort_keys=True) + '\n')
    print(f"corpus.txt: {count} sequences, {manifest['events']} events")
    return out


def run_method(method, sequences, config: RunConfig, seed, progress=False):
    if method == 'gibbs':
        return gibbs_hawkes(sequences, config.sampler, progress, seed)
    if method == 'em':
        return em_hawkes(sequences, config.sampler, progress, seed)
    model = fit_exp_mle(sequences, settings=config.sampler.optimizer, seed=seed)
    return exp_fit_result(sequences, model, config.sampler.grid_points)


def fit_group(task):
    method, index, sequences, config, seed, progress = task
    try:
        fit = run_method(method, list(sequences), config, seed, progress)
    except (HawkesError, ValueError) as e:
        return index, None, str(e)
    return index, fit.model_copy(update={'group': index}), None


def corpus_sequences(config: RunConfig, corpus_path):
    corpus, report = load_corpus(corpus_path)
    if report.rejected:
        print(f"{Path(corpus_path).name}: {report.summary()}")
    corpus = corpus.select(config.data.category)
    if config.data.category is not None and not len(corpus):
        raise CorpusError(f"no cascades with category '{config.data.category}'")
    sequences = []
    for k, cascade in enumerate(corpus.cascades):
        try:
            sequences.append(to_sequence(cascade, corpus.window_end, config.data.rescale))
        except ValueError as e:
            log.warning("cascade %d skipped: %s", k + 1, e)
    return sequences


def cmd_fit(args, config):
    corpus_path = config.paths.corpus
    if corpus_path is None:
        raise UsageError("fit needs --corpus (or paths.corpus in the config)")
    method = config.method
    if method == 'exp-mle' and any(vars(args).get(flag) for flag in sampler_only):
        log.warning("exp-mle ignores sampler-only flags")
    sequences = corpus_sequences(config, corpus_path)
    train, test, _ = bundle(sequences, config.data.group_size, config.data.split_prob, config.seed,
                            config.data.similarity)
    if not train:
        raise CorpusError(f"corpus has fewer than {config.data.group_size} training sequences")
    out = output_folder(config)
    prefix = f"fit_{method}" + (f"_{config.data.category}" if config.data.category else '')
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(config.seed).spawn(len(train))]
    progress = config.jobs == 1 and not args.no_progress and not args.quiet
    tasks = [(method, g.index, g.sequences, config, seed, progress) for g, seed in zip(train, seeds)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(fit_group, tasks))
    else:
        results = map(fit_group, tasks)
    succeeded, failed = 0, 0
    for index, fit, error in results:
        name = f"{prefix}_{index:03d}.json"
        if fit is None:
            print(f"{name}: failed: {error}")
            failed += 1
            continue
        atomic_write_text(out / name, fit.to_json(include_timings=args.timings) + '\n')
        print(f"{name}: mu={fit.mu:.4g}, {fit.n_events} events")
        succeeded += 1
    if test:
        held_out = [seq for g in test for seq in g.sequences]
        save_corpus(corpus_from_sequences(held_out, provenance={'role': 'test'}), out / 'heldout.txt')
    atomic_write_text(out / 'run_config.json', dump_config(config) + '\n')
    print(f"Processed {len(train)} groups: {succeeded} succeeded, {failed} failed")
    return out, (3 if failed else 0)


def fit_documents(path):
    if path is None:
        raise UsageError("--fits is required")
    path = Path(path)
    files = [path] if path.is_file() else sorted(path.glob('fit_*.json'))
    if not files:
        raise UsageError(f"no FitResult documents under {path}")
    documents = []
    for file in files:
        try:
            documents.append((file, FitResult.load(file)))
        except (OSError, ValueError) as e:
            raise CorpusError(f"{file.name}: {e}") from e
    return documents


def truth_model(args, config):
    if getattr(args, 'truth', None) is None:
        return None
    try:
        return config.model.build()
    except ValueError as e:
        raise UsageError(f"invalid truth model: {e}") from e


def cmd_evaluate(args, config):
    documents = fit_documents(config.paths.fits)
    truth = truth_model(args, config)
    test_group = None
    if config.paths.test_corpus:
        corpus, _ = load_corpus(config.paths.test_corpus)
        test_group = corpus.sequences(config.data.rescale)
    if truth is None and not test_group:
        raise UsageError("evaluate needs --truth or --test-corpus")
    rows = []
    for file, fit in documents:
        row = evaluate_fit(fit, truth, test_group)
        rows.append(row)
        print(f"{file.name}: l2_phi={row['l2_phi']:.4g} l2_mu={row['l2_mu']:.4g} heldout_ll={row['heldout_ll']:.4g}")
    table = evaluation_table(rows)
    out = output_folder(config)
    atomic_write_text(out / 'evaluation.csv', table_csv(table))
    for method, means in summarise(table).iterrows():
        print(f"{method}: mean l2_phi={means['l2_phi']:.4g} l2_mu={means['l2_mu']:.4g} heldout_ll={means['heldout_ll']:.4g}")
    return out


def cmd_bench(args, config):
    try:
        sizes = [int(s) for s in args.sizes.split(',') if s.strip()]
    except ValueError as e:
        raise UsageError(f"invalid --sizes: {e}") from e
    out = output_folder(config)
    variants = [True] if args.truncated_only else [True, False]
    for truncated in variants:
        try:
            table = bench_iteration_time(args.mode, sizes, args.repeats, config.seed, truncated, config.sampler)
        except ValueError as e:
            raise UsageError(str(e)) from e
        name = f"bench_{args.mode}_{'truncated' if truncated else 'full'}.csv"
        atomic_write_text(out / name, table_csv(table))
        print(f"{name}: ratio spread {ratio_spread(table):.2f}")
    return out


def cmd_plot(args, config):
    documents = fit_documents(config.paths.fits)
    truth = truth_model(args, config)
    out = output_folder(config)
    for file, fit in documents:
        atomic_write_bytes(out / f"{file.stem}.svg", render_svg(fit, truth and truth.kernel))
        if args.png:
            atomic_write_bytes(out / f"{file.stem}.png", render_png(fit, truth and truth.kernel))
        print(f"{file.stem}.svg: {fit.method}, {len(fit.grid)} grid points")
    return out


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args)
        config = resolve_config(args)
        result = args.handler(args, config)
    except HawkesError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    out, code = result if isinstance(result, tuple) else (result, 0)
    last_folder_helper.save_last_folder(str(out))
    return code


if __name__ == "__main__":
    sys.exit(main())
