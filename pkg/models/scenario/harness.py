# pylint:disable=invalid-name,too-many-locals

import logging
import math
from multiprocessing import Pool
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from credmark.cmf.model.errors import ModelDataError, ModelInputError
from models.dtos.scenario import (Algorithm, CertificationResult,
                                  CertificationStatus, DiscardMode,
                                  DiscardQualityInput, DiscardQualityReport,
                                  ExperimentConfig, ExperimentReport,
                                  GuaranteeCheck, MetricSummary,
                                  ProbabilisticLevels, Purpose, RunResult,
                                  RunRow, RunStatus, StreamLabel)
from models.scenario.bounds import smallest_discarded_N, smallest_scenario_N
from models.scenario.problem import (UncertainProblem, draw,
                                     empirical_violation, resolve_problem,
                                     uncertain_lp_problem)
from models.scenario.sequential import run_algorithm
from models.scenario.solver import (exhaustive_discarding, solve_scenario,
                                    solve_with_discarding)
from statsmodels.stats.proportion import proportion_confint
from tqdm import tqdm

logger = logging.getLogger(__name__)

CSV_COLUMNS = ['epsilon', 'delta', 'kt', 'alpha', 'r', 'algorithm', 'repetition', 'status',
               'exit_iteration', 'design_samples', 'validation_samples', 'cumulative_design',
               'cumulative_validation', 'objective', 'wall_time_s']

SUMMARY_METRICS = ['design_samples', 'validation_samples', 'cumulative_design',
                   'cumulative_validation', 'objective', 'exit_iteration', 'wall_time_s']

GUARANTEE_SIGMAS = 5
DISCARD_MATCH_RTOL = 1e-7
DISCARD_NEAR_RTOL = 0.05
DISCARD_SPREAD = 0.2


def config_problem(config: ExperimentConfig) -> UncertainProblem:
    return resolve_problem(config.problem, config.n_theta, config.spread, config.problem_seed)


def run_repetition(config: ExperimentConfig, repetition: int) -> RunResult:
    problem = config_problem(config)
    return run_algorithm(problem,
                         config.levels(),
                         config.schedule_params(problem.n_theta),
                         config.algorithm,
                         config.mode,
                         config.seed,
                         run_id=repetition,
                         tol=config.tol)


def _run_repetition_args(args: Tuple[dict, int]) -> RunResult:
    config, repetition = args
    return run_repetition(ExperimentConfig(**config), repetition)


def result_row(config: ExperimentConfig, repetition: int, result: RunResult) -> RunRow:
    return RunRow(epsilon=config.epsilon,
                  delta=config.delta,
                  kt=config.kt,
                  alpha=config.alpha,
                  r=config.r,
                  algorithm=config.algorithm.value,
                  repetition=repetition,
                  status=result.status.value,
                  exit_iteration=result.exit_iteration,
                  design_samples=result.design_samples_at_exit,
                  validation_samples=result.validation_samples_at_exit,
                  cumulative_design=result.cumulative_design_samples,
                  cumulative_validation=result.cumulative_validation_samples,
                  objective=result.objective,
                  wall_time_s=result.wall_time if config.timing else None,
                  true_violation=result.true_violation)


def summarize(rows: List[RunRow]) -> Dict[str, MetricSummary]:
    """
    Mean, sample standard deviation and worst case (maximum) of each metric over
    the runs that returned a solution.
    """
    df = pd.DataFrame([row.dict() for row in rows], columns=list(RunRow.__fields__))
    df = df.loc[df.status == RunStatus.solution.value]
    summary = {}
    for metric in SUMMARY_METRICS:
        values = df[metric].dropna().astype(float)
        if values.empty:
            continue
        summary[metric] = MetricSummary(
            mean=float(values.mean()),
            std=float(values.std(ddof=1)) if len(values) > 1 else 0.0,
            worst=float(values.max()))
    return summary


def guarantee_check(rows: List[RunRow], levels: ProbabilisticLevels) -> Optional[GuaranteeCheck]:
    """Fraction of solution runs with V(theta_sol) > epsilon against delta plus a binomial slack."""
    violations = [row.true_violation for row in rows
                  if row.status == RunStatus.solution.value and row.true_violation is not None]
    if not violations:
        return None
    n = len(violations)
    violating = sum(v > levels.epsilon for v in violations)
    bound = levels.delta + GUARANTEE_SIGMAS * math.sqrt(levels.delta * (1 - levels.delta) / n)
    return GuaranteeCheck(runs=n, violating=violating, rate=violating / n,
                          bound=bound, holds=violating / n <= bound)


def oneshot_samples(config: ExperimentConfig, n_theta: int) -> int:
    if config.r > 0 and config.algorithm in (Algorithm.partial, Algorithm.oneshot_discarded):
        return smallest_discarded_N(config.levels(), n_theta, config.r)
    return smallest_scenario_N(config.levels(), n_theta)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """
    Run config.repetitions independent repetitions and aggregate them.

    Repetition i uses run id i for all of its streams, so the rows do not depend
    on the number of workers; the pool returns them in repetition order.
    """
    problem = config_problem(config)
    levels = config.levels()
    jobs = [(config.dict(), repetition) for repetition in range(config.repetitions)]

    if config.workers > 1:
        with Pool(config.workers) as pool:
            results = list(tqdm(pool.imap(_run_repetition_args, jobs),
                                total=len(jobs), desc='benchmark', disable=None))
    else:
        results = [_run_repetition_args(job)
                   for job in tqdm(jobs, desc='benchmark', disable=None)]

    rows = [result_row(config, repetition, result)
            for repetition, result in enumerate(results)]
    excluded_statuses: Dict[str, int] = {}
    for row in rows:
        if row.status != RunStatus.solution.value:
            excluded_statuses[row.status] = excluded_statuses.get(row.status, 0) + 1
    excluded = sum(excluded_statuses.values())
    if excluded > 0:
        logger.warning(f'{excluded} of {len(rows)} runs excluded from the aggregates: {excluded_statuses}')

    return ExperimentReport(config=config,
                            rows=rows,
                            summary=summarize(rows),
                            completed=len(rows) - excluded,
                            excluded=excluded,
                            excluded_statuses=excluded_statuses,
                            oneshot_samples=oneshot_samples(config, problem.n_theta),
                            guarantee=guarantee_check(rows, levels))


def report_frame(report: ExperimentReport) -> pd.DataFrame:
    return pd.DataFrame([row.dict() for row in report.rows], columns=list(RunRow.__fields__))[CSV_COLUMNS]


def summary_lines(report: ExperimentReport) -> List[str]:
    lines = [f'# completed,{report.completed}',
             f'# excluded,{report.excluded}']
    lines += [f'# excluded_{status},{count}' for status, count in sorted(report.excluded_statuses.items())]
    lines.append('# metric,mean,std,worst')
    lines += [f'# {metric},{s.mean!r},{s.std!r},{s.worst!r}' for metric, s in report.summary.items()]
    lines.append(f'# oneshot_samples,{report.oneshot_samples}')
    if report.guarantee is not None:
        g = report.guarantee
        lines.append(f'# guarantee,runs={g.runs},violating={g.violating},rate={g.rate!r},'
                     f'bound={g.bound!r},holds={g.holds}')
    return lines


def write_report_csv(report: ExperimentReport, path: str):
    try:
        with open(path, 'w', encoding='utf-8', newline='') as fh:
            report_frame(report).to_csv(fh, index=False, lineterminator='\n')
            fh.write('\n'.join(summary_lines(report)) + '\n')
    except OSError as err:
        raise ModelDataError(f'Cannot write report to {path}: {err}',
                             ModelDataError.Codes.NO_DATA) from err


def read_report_rows(path: str) -> pd.DataFrame:
    """Raw rows of a report CSV, with the summary block skipped."""
    try:
        return pd.read_csv(path, comment='#')
    except (OSError, pd.errors.ParserError) as err:
        raise ModelDataError(f'Cannot read report {path}: {err}',
                             ModelDataError.Codes.NO_DATA) from err


def certification_size(delta: float, margin: float) -> int:
    return math.ceil(math.log(1 / delta) / (2 * margin ** 2))


def certify(problem: UncertainProblem, theta, epsilon: float, delta: float,
            master_seed: int, margin: Optional[float] = None) -> CertificationResult:
    """
    A posteriori check of a fixed design on fresh samples.

    With M = ceil(ln(1/delta) / (2 margin^2)) points, Hoeffding's inequality
    gives V(theta) <= V_hat + margin with confidence at least 1 - delta, so
    V_hat <= epsilon - margin certifies V(theta) <= epsilon at that confidence.
    """
    levels = ProbabilisticLevels(epsilon=epsilon, delta=delta)
    margin = epsilon / 4 if margin is None else margin
    if not 0 < margin <= epsilon:
        raise ModelInputError(f'margin must lie in (0, epsilon], got {margin}')
    if len(theta) != problem.n_theta:
        raise ModelInputError(f'theta has {len(theta)} entries, {problem.name} needs {problem.n_theta}')

    M = certification_size(levels.delta, margin)
    samples = draw(problem, M, StreamLabel(purpose=Purpose.certify), master_seed)
    observed = empirical_violation(problem, theta, samples)
    _, upper = proportion_confint(observed.violated, M, alpha=min(2 * levels.delta, 1.0), method='beta')

    certified = observed.value <= levels.epsilon - margin
    status = CertificationStatus.certified if certified else CertificationStatus.refuted
    statement = (f'{M} fresh samples, {observed.violated} violations (V_hat={observed.value:.6g}). '
                 f'With confidence at least {1 - levels.delta:.6g}, V(theta) <= V_hat + {margin:.6g}'
                 f' = {observed.value + margin:.6g}; '
                 + (f'certified V(theta) <= {levels.epsilon:.6g}.' if certified
                    else f'no certificate at epsilon={levels.epsilon:.6g}.'))
    return CertificationResult(status=status,
                               epsilon=levels.epsilon,
                               delta=levels.delta,
                               margin=margin,
                               samples=M,
                               violations=observed.violated,
                               empirical_violation=observed.value,
                               upper_confidence=float(upper),
                               statement=statement)


def discard_quality(quality_input: DiscardQualityInput) -> DiscardQualityReport:
    """
    Greedy removal against exhaustive removal on random small LP instances.

    Monotonicity (greedy never above the full program) is a hard property; the
    fraction of exact matches is a tracked metric.
    """
    if quality_input.instances < 1:
        raise ModelInputError(f'instances must be at least 1, got {quality_input.instances}')

    greedy_objectives, exact_objectives, full_objectives = [], [], []
    for instance in range(quality_input.instances):
        problem = uncertain_lp_problem(n_theta=quality_input.n_theta,
                                       spread=DISCARD_SPREAD,
                                       seed=quality_input.seed + instance)
        samples = draw(problem, quality_input.samples,
                       StreamLabel(run=instance, purpose=Purpose.design), quality_input.seed)
        full = solve_scenario(problem, samples)
        greedy = solve_with_discarding(problem, samples, quality_input.r, DiscardMode.greedy)
        exact = exhaustive_discarding(problem, samples, quality_input.r)
        if not (full.is_feasible and greedy.is_feasible and exact.is_feasible):
            logger.warning(f'Instance {instance} skipped: {full.status}, {greedy.status}, {exact.status}')
            continue
        full_objectives.append(full.objective)
        greedy_objectives.append(greedy.objective)
        exact_objectives.append(exact.objective)

    greedy_arr = np.array(greedy_objectives)
    exact_arr = np.array(exact_objectives)
    full_arr = np.array(full_objectives)
    scale = np.maximum(1.0, np.abs(exact_arr))
    gap = greedy_arr - exact_arr
    matches = int(np.count_nonzero(gap <= DISCARD_MATCH_RTOL * scale))
    near = int(np.count_nonzero(gap <= DISCARD_NEAR_RTOL * np.abs(exact_arr) + DISCARD_MATCH_RTOL * scale))
    solved = max(1, len(greedy_objectives))

    return DiscardQualityReport(
        instances=len(greedy_objectives),
        samples=quality_input.samples,
        r=quality_input.r,
        monotone=bool(np.all(greedy_arr <= full_arr + DISCARD_MATCH_RTOL * np.maximum(1.0, np.abs(full_arr)))),
        matches=matches,
        match_fraction=matches / solved,
        within_5pct_fraction=near / solved,
        greedy_objectives=greedy_objectives,
        exact_objectives=exact_objectives,
        full_objectives=full_objectives)
