# pylint:disable=line-too-long

import argparse
import logging
import sys
from typing import List, Optional

import pandas as pd
from credmark.cmf.model.errors import (ModelDataError, ModelInputError,
                                       ModelRunError)
from models.dtos.scenario import (BoundsInput, DiscardQualityInput,
                                  RunStatus, SampleSchedule)
from models.scenario.bounds import bounds_report
from models.scenario.config import build_config
from models.scenario.harness import (certify, discard_quality,
                                     run_experiment, run_repetition,
                                     write_report_csv)
from models.scenario.problem import resolve_problem
from pydantic import ValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUN_ERROR = 1
EXIT_USAGE = 2
EXIT_ALL_FAILED = 3


def _theta(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(',') if x.strip() != '']
    except ValueError as err:
        raise argparse.ArgumentTypeError(f'theta must be comma-separated numbers, got {text!r}') from err


def _add_experiment_flags(parser: argparse.ArgumentParser):
    # None means "not given", so manifest values survive
    parser.add_argument('--config', type=str, help='Flat YAML experiment manifest')
    parser.add_argument('--problem', type=str, help='toy-max or uncertain-lp')
    parser.add_argument('--ntheta', type=int, help='Decision dimension (uncertain-lp)')
    parser.add_argument('--spread', type=float, help='Perturbation scale (uncertain-lp)')
    parser.add_argument('--problem-seed', type=int, help='Instance seed (uncertain-lp)')
    parser.add_argument('--algorithm', choices=['full', 'partial', 'oneshot', 'oneshot-discarded'])
    parser.add_argument('--epsilon', type=float)
    parser.add_argument('--delta', type=float)
    parser.add_argument('--kt', type=int, help='Termination parameter')
    parser.add_argument('--alpha', type=float)
    parser.add_argument('--r', type=int, help='Discarded constraints')
    parser.add_argument('--mode', choices=['greedy', 'prefix'])
    parser.add_argument('--seed', type=int, help='Master seed')
    parser.add_argument('--tol', type=float, help='Violation tolerance of the indicator')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='scenario-dev',
                                     description='Sequential randomized algorithms for the scenario approach')
    parser.add_argument('-v', '--verbose', action='store_true', default=False, help='Debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    bounds = sub.add_parser('bounds', help='Sample bounds and validation schedules')
    bounds.add_argument('--epsilon', type=float, required=True)
    bounds.add_argument('--delta', type=float, required=True)
    bounds.add_argument('--ntheta', type=int, required=True)
    bounds.add_argument('--r', type=int, default=0)
    bounds.add_argument('--kt', type=int, default=None)
    bounds.add_argument('--alpha', type=float, default=0.1)
    bounds.add_argument('--json', action='store_true', default=False)

    run = sub.add_parser('run', help='One run of an algorithm')
    _add_experiment_flags(run)
    run.add_argument('--run-id', type=int, default=0, help='Repetition index of the streams')
    run.add_argument('--json', action='store_true', default=False)

    benchmark = sub.add_parser('benchmark', help='Repeated runs aggregated into a CSV report')
    _add_experiment_flags(benchmark)
    benchmark.add_argument('--reps', type=int, help='Repetitions')
    benchmark.add_argument('--out', type=str, help='CSV output path')
    benchmark.add_argument('--workers', type=int, help='Worker processes')
    benchmark.add_argument('--timing', action='store_const', const=True, default=None,
                           help='Record wall time in the CSV')

    cert = sub.add_parser('certify', help='A posteriori certification of a fixed design')
    cert.add_argument('--problem', type=str, default='toy-max')
    cert.add_argument('--ntheta', type=int, default=None)
    cert.add_argument('--spread', type=float, default=0.1)
    cert.add_argument('--problem-seed', type=int, default=0)
    cert.add_argument('--theta', type=_theta, required=True, help='Comma-separated design')
    cert.add_argument('--epsilon', type=float, required=True)
    cert.add_argument('--delta', type=float, required=True)
    cert.add_argument('--seed', type=int, default=0)
    cert.add_argument('--margin', type=float, default=None)
    cert.add_argument('--json', action='store_true', default=False)

    check = sub.add_parser('discard-check', help='Greedy against exhaustive constraint removal')
    check.add_argument('--instances', type=int, default=20)
    check.add_argument('--ntheta', type=int, default=2)
    check.add_argument('--samples', type=int, default=12)
    check.add_argument('--r', type=int, default=2)
    check.add_argument('--seed', type=int, default=0)
    return parser


def _schedule_table(schedule: SampleSchedule) -> str:
    df = pd.DataFrame({'k': range(1, schedule.k_t + 1),
                       'N_k': schedule.design_sizes,
                       'N_k_r': schedule.constrained_sizes,
                       'M_k': schedule.validation_sizes + [0]})
    return df.to_string(index=False)


def _cmd_bounds(args) -> int:
    report = bounds_report(BoundsInput(epsilon=args.epsilon, delta=args.delta, n_theta=args.ntheta,
                                       r=args.r, k_t=args.kt, alpha=args.alpha))
    if args.json:
        print(report.json(indent=2))
        return EXIT_OK

    print(f'epsilon={report.epsilon} delta={report.delta} n_theta={report.n_theta} r={report.r}')
    print(f'scenario N (delta)            {report.scenario_N}')
    if report.discarded_N is not None:
        print(f'scenario N with r discarded   {report.discarded_N}')
    print(f'sequential N_final (delta/2)  {report.sequential_N_final}')
    print(f'beta_w                        {report.beta_w:.6g}')
    if report.beta_v is not None:
        print(f'beta_v                        {report.beta_v:.6g}')
    print(f'max termination parameter     {report.max_termination_parameter}')
    for name, schedule in (('full', report.full_schedule), ('partial', report.partial_schedule)):
        if schedule is not None:
            worst = schedule.worst_case_samples()
            print(f'\n{name} schedule (worst case: {worst["design"]} design, {worst["validation"]} validation)')
            print(_schedule_table(schedule))
    return EXIT_OK


def _experiment_overrides(args) -> dict:
    overrides = {'problem': args.problem, 'n_theta': args.ntheta, 'spread': args.spread,
                 'problem_seed': args.problem_seed, 'algorithm': args.algorithm,
                 'epsilon': args.epsilon, 'delta': args.delta, 'kt': args.kt, 'alpha': args.alpha,
                 'r': args.r, 'mode': args.mode, 'seed': args.seed, 'tol': args.tol}
    for flag, key in (('reps', 'repetitions'), ('out', 'out'), ('workers', 'workers'), ('timing', 'timing')):
        overrides[key] = getattr(args, flag, None)
    return overrides


def _cmd_run(args) -> int:
    config = build_config(args.config, **_experiment_overrides(args))
    result = run_repetition(config, args.run_id)
    if args.json:
        print(result.json(indent=2))
    else:
        print(f'{result.algorithm.value}: {result.status.value} via {result.exit_path.value} '
              f'at iteration {result.exit_iteration}')
        print(f'theta_sol={result.theta_sol} objective={result.objective}')
        print(f'design samples at exit {result.design_samples_at_exit}, '
              f'validation samples at exit {result.validation_samples_at_exit}, '
              f'cumulative {result.cumulative_design_samples}/{result.cumulative_validation_samples}')
        if result.note:
            print(result.note)
    return EXIT_OK if result.status == RunStatus.solution else EXIT_ALL_FAILED


def _cmd_benchmark(args) -> int:
    config = build_config(args.config, **_experiment_overrides(args))
    report = run_experiment(config)
    if config.out is not None:
        write_report_csv(report, config.out)
        logger.info(f'Wrote {len(report.rows)} rows to {config.out}')

    print(f'{config.algorithm.value} on {config.problem}: {report.completed} completed, '
          f'{report.excluded} excluded, one-shot N={report.oneshot_samples}')
    if report.summary:
        print(pd.DataFrame({metric: s.dict() for metric, s in report.summary.items()}).T.to_string())
    if report.guarantee is not None:
        g = report.guarantee
        print(f'violation rate {g.rate:.4f} over {g.runs} runs (bound {g.bound:.4f}): '
              f'{"holds" if g.holds else "VIOLATED"}')
    return EXIT_OK if report.completed > 0 else EXIT_ALL_FAILED


def _cmd_certify(args) -> int:
    problem = resolve_problem(args.problem, args.ntheta, args.spread, args.problem_seed)
    result = certify(problem, args.theta, args.epsilon, args.delta, args.seed, args.margin)
    print(result.json(indent=2) if args.json else f'{result.status.value}: {result.statement}')
    return EXIT_OK


def _cmd_discard_check(args) -> int:
    report = discard_quality(DiscardQualityInput(instances=args.instances, n_theta=args.ntheta,
                                                 samples=args.samples, r=args.r, seed=args.seed))
    print(f'{report.instances} instances, {report.samples} samples, r={report.r}')
    print(f'monotone {report.monotone}; exact matches {report.matches} ({report.match_fraction:.0%}); '
          f'within 5% {report.within_5pct_fraction:.0%}')
    return EXIT_OK if report.monotone else EXIT_RUN_ERROR


COMMANDS = {
    'bounds': _cmd_bounds,
    'run': _cmd_run,
    'benchmark': _cmd_benchmark,
    'certify': _cmd_certify,
    'discard-check': _cmd_discard_check,
}


def run_command(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger('models').setLevel(logging.DEBUG)
    try:
        return COMMANDS[args.command](args)
    except (ModelInputError, ValidationError, ModelDataError) as err:
        logger.error(str(err))
        return EXIT_USAGE
    except ModelRunError as err:
        logger.error(str(err))
        return EXIT_RUN_ERROR


def main(argv: Optional[List[str]] = None):
    logging.basicConfig(
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        level='INFO')
    sys.exit(run_command(argv))


if __name__ == '__main__':
    main()
