# pylint:disable=invalid-name,too-many-arguments,too-many-locals

import logging
import time
from typing import Optional

from credmark.cmf.model.errors import ModelInputError
from models.dtos.scenario import (Algorithm, DiscardMode, ExitPath,
                                  IterationRecord, ProbabilisticLevels,
                                  RunResult, RunStatus, SampleSchedule,
                                  ScheduleFlavor, ScheduleParams, SolveOutcome,
                                  SolveStatus, StreamLabel, Purpose)
from models.scenario.bounds import (acceptance_threshold, build_schedule,
                                    smallest_discarded_N, smallest_scenario_N)
from models.scenario.problem import (UncertainProblem, all_satisfied, draw,
                                     empirical_violation)
from models.scenario.solver import (LinearBackend, solve_scenario,
                                    solve_with_discarding)

logger = logging.getLogger(__name__)


def _failure_status(outcome: SolveOutcome):
    if outcome.status == SolveStatus.infeasible:
        return RunStatus.infeasible_declared, ExitPath.infeasible
    return RunStatus.numeric_failure, ExitPath.numeric_failure


def _true_violation(problem: UncertainProblem, theta) -> Optional[float]:
    if problem.analytic_violation is None or theta is None:
        return None
    return problem.analytic_violation(theta)


def _check_dimension(problem: UncertainProblem, n_theta: Optional[int]):
    if n_theta is not None and n_theta != problem.n_theta:
        raise ModelInputError(f'{problem.name} has n_theta={problem.n_theta}, got {n_theta}')


def _sequential_run(problem: UncertainProblem,
                    schedule: SampleSchedule,
                    algorithm: Algorithm,
                    master_seed: int,
                    run_id: int,
                    tol: float,
                    mode: DiscardMode,
                    backend: Optional[LinearBackend]) -> RunResult:
    _check_dimension(problem, schedule.params.n_theta)
    started = time.perf_counter()
    k_t = schedule.k_t
    trace = []
    cumulative_design = cumulative_validation = 0

    def finish(status, exit_path, k, outcome, validation_at_exit=0, note=''):
        theta = outcome.theta if status == RunStatus.solution else None
        return RunResult(algorithm=algorithm,
                         status=status,
                         exit_path=exit_path,
                         theta_sol=theta,
                         objective=outcome.objective if theta is not None else None,
                         exit_iteration=k,
                         design_samples_at_exit=schedule.design_size(k),
                         validation_samples_at_exit=validation_at_exit,
                         cumulative_design_samples=cumulative_design,
                         cumulative_validation_samples=cumulative_validation,
                         N_final=schedule.N_final,
                         trace=trace,
                         wall_time=time.perf_counter() - started,
                         true_violation=_true_violation(problem, theta),
                         note=note)

    for k in range(1, k_t + 1):
        design_label = StreamLabel(run=run_id, iteration=k, purpose=Purpose.design)
        N_k = schedule.design_size(k)
        samples = draw(problem, N_k, design_label, master_seed)
        cumulative_design += N_k

        if schedule.flavor == ScheduleFlavor.full:
            outcome = solve_scenario(problem, samples, backend=backend)
        else:
            discard = N_k - schedule.constrained_size(k)
            if discard > 0 and discard >= N_k - problem.n_theta:
                discard = max(0, N_k - problem.n_theta - 1)
                logger.debug(f'Discard budget at {k=} reduced to {discard} for {N_k} samples')
            outcome = solve_with_discarding(problem, samples, discard, mode, backend=backend)

        record = IterationRecord(iteration=k,
                                 design_samples=N_k,
                                 enforced_samples=N_k - len(outcome.discarded),
                                 discarded=len(outcome.discarded),
                                 design_stream=str(design_label),
                                 solve_status=outcome.status,
                                 objective=outcome.objective)

        if not outcome.is_feasible:
            trace.append(record)
            status, exit_path = _failure_status(outcome)
            note = ('Sampled program infeasible: the original problem is declared infeasible '
                    'on sampled evidence' if status == RunStatus.infeasible_declared
                    else outcome.message)
            logger.info(f'run {run_id} stopped at {k=}: {status.value}')
            return finish(status, exit_path, k, outcome, note=note)

        if k == k_t:
            record.accepted = True
            trace.append(record)
            return finish(RunStatus.solution, ExitPath.final_iteration, k, outcome)

        validation_label = StreamLabel(run=run_id, iteration=k, purpose=Purpose.validation)
        M_k = schedule.validation_size(k)
        validation = draw(problem, M_k, validation_label, master_seed)
        cumulative_validation += M_k
        record.validation_samples = M_k
        record.validation_stream = str(validation_label)

        if schedule.flavor == ScheduleFlavor.full:
            accepted, evaluated = all_satisfied(problem, outcome.theta, validation, tol)
            record.threshold = 0.0
            record.evaluated = evaluated
            if accepted:
                record.violations = 0
                record.empirical_violation = 0.0
        else:
            observed = empirical_violation(problem, outcome.theta, validation, tol)
            record.threshold = acceptance_threshold(k, schedule.beta_v, schedule.levels.epsilon)
            record.evaluated = M_k
            record.violations = observed.violated
            record.empirical_violation = observed.value
            accepted = observed.value <= record.threshold

        record.accepted = accepted
        trace.append(record)
        logger.debug(f'run {run_id} {k=}: N_k={N_k} M_k={M_k} '
                     f'{"accepted" if accepted else "rejected"}')
        if accepted:
            return finish(RunStatus.solution, ExitPath.validation, k, outcome,
                          validation_at_exit=M_k)

    raise AssertionError('unreachable: the final iteration always exits')


def run_full(problem: UncertainProblem,
             levels: ProbabilisticLevels,
             params: ScheduleParams,
             master_seed: int,
             run_id: int = 0,
             tol: float = 0.0,
             backend: Optional[LinearBackend] = None) -> RunResult:
    """
    Sequential design with full constraint satisfaction.

    Each iteration solves on fresh design samples and accepts when every fresh
    validation point is satisfied; the last iteration accepts unconditionally
    with the delta/2 scenario bound as its sample size.
    """
    if params.r != 0:
        raise ModelInputError(f'Full constraint satisfaction discards nothing, got r={params.r}')
    schedule = build_schedule(levels, params, ScheduleFlavor.full)
    return _sequential_run(problem, schedule, Algorithm.full, master_seed, run_id,
                           tol, DiscardMode.greedy, backend)


def run_partial(problem: UncertainProblem,
                levels: ProbabilisticLevels,
                params: ScheduleParams,
                mode: DiscardMode,
                master_seed: int,
                run_id: int = 0,
                tol: float = 0.0,
                backend: Optional[LinearBackend] = None) -> RunResult:
    """
    Sequential design with partial constraint satisfaction: a candidate passes
    when its empirical violation on the validation set stays below
    (1 - (k beta_v)^(-1/2)) epsilon.
    """
    schedule = build_schedule(levels, params, ScheduleFlavor.partial)
    return _sequential_run(problem, schedule, Algorithm.partial, master_seed, run_id,
                           tol, DiscardMode(mode), backend)


def _oneshot(problem: UncertainProblem, algorithm: Algorithm, N: int, r: int,
             mode: DiscardMode, master_seed: int, run_id: int,
             backend: Optional[LinearBackend]) -> RunResult:
    started = time.perf_counter()
    label = StreamLabel(run=run_id, iteration=1, purpose=Purpose.design)
    samples = draw(problem, N, label, master_seed)
    outcome = solve_with_discarding(problem, samples, r, mode, backend=backend)

    record = IterationRecord(iteration=1,
                             design_samples=N,
                             enforced_samples=N - len(outcome.discarded),
                             discarded=len(outcome.discarded),
                             design_stream=str(label),
                             solve_status=outcome.status,
                             objective=outcome.objective,
                             accepted=outcome.is_feasible)
    if outcome.is_feasible:
        status, exit_path = RunStatus.solution, ExitPath.final_iteration
    else:
        status, exit_path = _failure_status(outcome)
    theta = outcome.theta if outcome.is_feasible else None

    return RunResult(algorithm=algorithm,
                     status=status,
                     exit_path=exit_path,
                     theta_sol=theta,
                     objective=outcome.objective if theta is not None else None,
                     exit_iteration=1,
                     design_samples_at_exit=N,
                     validation_samples_at_exit=0,
                     cumulative_design_samples=N,
                     cumulative_validation_samples=0,
                     N_final=N,
                     trace=[record],
                     wall_time=time.perf_counter() - started,
                     true_violation=_true_violation(problem, theta),
                     note='' if outcome.is_feasible else outcome.message)


def run_oneshot(problem: UncertainProblem,
                levels: ProbabilisticLevels,
                master_seed: int,
                n_theta: Optional[int] = None,
                run_id: int = 0,
                backend: Optional[LinearBackend] = None) -> RunResult:
    """Solve once at the one-shot scenario bound for (epsilon, delta)."""
    _check_dimension(problem, n_theta)
    N = smallest_scenario_N(levels, problem.n_theta)
    return _oneshot(problem, Algorithm.oneshot, N, 0, DiscardMode.greedy,
                    master_seed, run_id, backend)


def run_oneshot_discarded(problem: UncertainProblem,
                          levels: ProbabilisticLevels,
                          r: int,
                          mode: DiscardMode,
                          master_seed: int,
                          n_theta: Optional[int] = None,
                          run_id: int = 0,
                          backend: Optional[LinearBackend] = None) -> RunResult:
    _check_dimension(problem, n_theta)
    N = smallest_discarded_N(levels, problem.n_theta, r)
    if r > 0 and r >= N - problem.n_theta:
        raise ModelInputError(f'r={r} must be below N - n_theta = {N - problem.n_theta}')
    return _oneshot(problem, Algorithm.oneshot_discarded, N, r, DiscardMode(mode),
                    master_seed, run_id, backend)


def run_algorithm(problem: UncertainProblem,
                  levels: ProbabilisticLevels,
                  params: ScheduleParams,
                  algorithm: Algorithm,
                  mode: DiscardMode,
                  master_seed: int,
                  run_id: int = 0,
                  tol: float = 0.0,
                  backend: Optional[LinearBackend] = None) -> RunResult:
    algorithm = Algorithm(algorithm)
    if algorithm == Algorithm.full:
        return run_full(problem, levels, params, master_seed, run_id, tol, backend)
    if algorithm == Algorithm.partial:
        return run_partial(problem, levels, params, mode, master_seed, run_id, tol, backend)
    if algorithm == Algorithm.oneshot:
        return run_oneshot(problem, levels, master_seed, params.n_theta, run_id, backend)
    return run_oneshot_discarded(problem, levels, params.r, mode, master_seed,
                                 params.n_theta, run_id, backend)
