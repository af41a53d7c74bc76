# pylint:disable=invalid-name

import math

import numpy as np
from credmark.cmf.model.errors import ModelInputError
from models.dtos.scenario import (Algorithm, DiscardMode, ExitPath,
                                  ProbabilisticLevels, Purpose, RunStatus,
                                  ScheduleFlavor, ScheduleParams, StreamLabel)
from models.scenario.bounds import (build_schedule, smallest_discarded_N,
                                    smallest_scenario_N)
from models.scenario.problem import (draw, toy_max_problem,
                                     uncertain_lp_problem)
from models.scenario.sequential import (run_algorithm, run_full,
                                        run_oneshot, run_oneshot_discarded,
                                        run_partial)
from models.scenario.solver import HighsBackend
from scenario_test import FailingBackend, ScenarioTest

TOY_LEVELS = ProbabilisticLevels(epsilon=0.1, delta=0.1)
TOY_PARAMS = ScheduleParams(n_theta=1, k_t=5)


def slack_bound(delta: float, runs: int) -> float:
    return delta + 5 * math.sqrt(delta * (1 - delta) / runs)


class TestSequential(ScenarioTest):
    def assert_consistent(self, result, schedule):
        self.assertLessEqual(result.exit_iteration, schedule.k_t)
        self.assertEqual(result.design_samples_at_exit, schedule.design_size(result.exit_iteration))
        self.assertEqual(len(result.trace), result.exit_iteration)
        self.assertEqual(result.cumulative_design_samples,
                         sum(schedule.design_sizes[:result.exit_iteration]))
        if result.exit_path == ExitPath.validation:
            self.assertLess(result.exit_iteration, schedule.k_t)
            self.assertTrue(result.trace[-1].accepted)
            self.assertEqual(result.validation_samples_at_exit, schedule.validation_size(result.exit_iteration))
        elif result.exit_path == ExitPath.final_iteration:
            self.assertEqual(result.exit_iteration, schedule.k_t)
            self.assertEqual(result.trace[-1].design_samples, schedule.N_final)
        self.assertTrue(all(not record.accepted for record in result.trace[:-1]))

        streams = [record.design_stream for record in result.trace]
        streams += [record.validation_stream for record in result.trace if record.validation_stream]
        self.assertEqual(len(streams), len(set(streams)))

    def test_full_is_deterministic(self):
        self.title('Sequential - replay under a fixed seed')
        first = run_full(toy_max_problem(), TOY_LEVELS, TOY_PARAMS, master_seed=42, run_id=7)
        second = run_full(toy_max_problem(), TOY_LEVELS, TOY_PARAMS, master_seed=42, run_id=7)
        self.assertEqual(first.dict(exclude={'wall_time'}), second.dict(exclude={'wall_time'}))

    def test_full_trace(self):
        schedule = build_schedule(TOY_LEVELS, TOY_PARAMS, ScheduleFlavor.full)
        paths = set()
        for run_id in range(60):
            result = run_full(toy_max_problem(), TOY_LEVELS, TOY_PARAMS, master_seed=3, run_id=run_id)
            self.assertEqual(result.status, RunStatus.solution)
            self.assert_consistent(result, schedule)
            self.assertAlmostEqual(result.true_violation, 1 - result.theta_sol[0])

            k = result.exit_iteration
            samples = draw(toy_max_problem(), schedule.design_size(k),
                           StreamLabel(run=run_id, iteration=k, purpose=Purpose.design), 3)
            self.assertAlmostEqual(result.theta_sol[0], samples.points.max(), places=12)
            paths.add(result.exit_path)
        self.assertEqual(paths, {ExitPath.validation, ExitPath.final_iteration})

    def test_full_rejects_discards(self):
        with self.assertRaises(ModelInputError):
            run_full(toy_max_problem(), TOY_LEVELS, ScheduleParams(n_theta=1, k_t=5, r=1), 0)
        with self.assertRaises(ModelInputError):
            run_full(toy_max_problem(), TOY_LEVELS, ScheduleParams(n_theta=2, k_t=5), 0)

    def test_forced_infeasibility(self):
        forced = toy_max_problem().with_bounds(0.0, 0.5).with_sampler(
            lambda rng, count: rng.uniform(0.6, 1.0, size=(count, 1)))
        result = run_full(forced, TOY_LEVELS, TOY_PARAMS, master_seed=0)
        self.assertEqual(result.status, RunStatus.infeasible_declared)
        self.assertEqual(result.exit_path, ExitPath.infeasible)
        self.assertEqual(result.exit_iteration, 1)
        self.assertIsNone(result.theta_sol)
        self.assertIn('sampled evidence', result.note)

    def test_numeric_failure_aborts(self):
        result = run_full(toy_max_problem(), TOY_LEVELS, TOY_PARAMS, master_seed=0, backend=FailingBackend())
        self.assertEqual(result.status, RunStatus.numeric_failure)
        self.assertEqual(result.exit_path, ExitPath.numeric_failure)
        self.assertIsNone(result.theta_sol)

    def test_full_guarantee(self):
        self.title('Sequential - full satisfaction violation rate over 1000 runs')
        runs = 1000
        violating = 0
        for run_id in range(runs):
            result = run_full(toy_max_problem(), TOY_LEVELS, TOY_PARAMS, master_seed=2024, run_id=run_id)
            self.assertEqual(result.status, RunStatus.solution)
            violating += result.true_violation > TOY_LEVELS.epsilon
        self.assertLessEqual(violating / runs, slack_bound(TOY_LEVELS.delta, runs))

    def test_partial_guarantee(self):
        self.title('Sequential - partial satisfaction violation rate over 1000 runs')
        runs = 1000
        violating = 0
        for run_id in range(runs):
            result = run_partial(toy_max_problem(), TOY_LEVELS, TOY_PARAMS, DiscardMode.greedy,
                                 master_seed=2025, run_id=run_id)
            self.assertEqual(result.status, RunStatus.solution)
            violating += result.true_violation > TOY_LEVELS.epsilon
        self.assertLessEqual(violating / runs, slack_bound(TOY_LEVELS.delta, runs))

    def test_partial_trace(self):
        schedule = build_schedule(TOY_LEVELS, TOY_PARAMS, ScheduleFlavor.partial)
        for run_id in range(30):
            result = run_partial(toy_max_problem(), TOY_LEVELS, TOY_PARAMS, DiscardMode.greedy,
                                 master_seed=5, run_id=run_id)
            self.assert_consistent(result, schedule)
            for record in result.trace:
                if record.empirical_violation is not None:
                    self.assertEqual(record.evaluated, record.validation_samples)
                    self.assertEqual(record.accepted, record.empirical_violation <= record.threshold)
            first = result.trace[0]
            if first.validation_samples:
                self.assertEqual(first.threshold, 0.0)

    def test_partial_with_discards(self):
        lp = uncertain_lp_problem(n_theta=2, spread=0.2, seed=1)
        levels = ProbabilisticLevels(epsilon=0.2, delta=0.05)
        params = ScheduleParams(n_theta=2, k_t=4, r=2)
        schedule = build_schedule(levels, params, ScheduleFlavor.partial)
        for mode in (DiscardMode.greedy, DiscardMode.prefix):
            result = run_partial(lp, levels, params, mode, master_seed=9)
            self.assertEqual(result.status, RunStatus.solution)
            self.assert_consistent(result, schedule)
            for record in result.trace:
                self.assertLessEqual(record.discarded, 2)
                self.assertEqual(record.enforced_samples + record.discarded, record.design_samples)

    def test_oneshot(self):
        self.title('Sequential - one-shot baselines')
        levels = ProbabilisticLevels(epsilon=0.1, delta=0.01)
        result = run_oneshot(toy_max_problem(), levels, master_seed=4, n_theta=1)
        N = smallest_scenario_N(levels, 1)
        self.assertEqual(N, 64)
        self.assertEqual(result.design_samples_at_exit, N)
        self.assertEqual(result.exit_iteration, 1)
        self.assertEqual(result.validation_samples_at_exit, 0)
        samples = draw(toy_max_problem(), N, StreamLabel(run=0, iteration=1, purpose=Purpose.design), 4)
        self.assertAlmostEqual(result.theta_sol[0], samples.points.max(), places=12)

        with self.assertRaises(ModelInputError):
            run_oneshot(toy_max_problem(), levels, master_seed=4, n_theta=3)

    def test_oneshot_discarded(self):
        levels = ProbabilisticLevels(epsilon=0.1, delta=0.01)
        plain = run_oneshot(toy_max_problem(), levels, master_seed=8)
        same = run_oneshot_discarded(toy_max_problem(), levels, 0, DiscardMode.greedy, master_seed=8)
        self.assertEqual(plain.theta_sol, same.theta_sol)
        self.assertEqual(plain.design_samples_at_exit, same.design_samples_at_exit)

        one = run_oneshot_discarded(toy_max_problem(), levels, 1, DiscardMode.greedy, master_seed=8)
        N = smallest_discarded_N(levels, 1, 1)
        self.assertEqual(one.design_samples_at_exit, N)
        points = np.sort(draw(toy_max_problem(), N, StreamLabel(run=0, iteration=1), 8).points[:, 0])
        self.assertAlmostEqual(one.theta_sol[0], points[-2], places=12)
        self.assertEqual(one.trace[0].discarded, 1)

    def test_oneshot_without_uncertainty(self):
        lp = uncertain_lp_problem(n_theta=3, spread=0.0, seed=5)
        result = run_oneshot(lp, ProbabilisticLevels(epsilon=0.2, delta=0.05), master_seed=1)
        A, b = lp.affine_rows(np.zeros((1, 16)))
        nominal = HighsBackend().solve(lp.objective, A[0], b[0], lp.lower, lp.upper)
        self.assertAlmostEqual(result.objective, float(lp.objective @ nominal.x), places=7)

    def test_dispatch(self):
        levels = ProbabilisticLevels(epsilon=0.2, delta=0.05)
        for algorithm in Algorithm:
            params = ScheduleParams(n_theta=1, k_t=3, r=1 if algorithm == Algorithm.oneshot_discarded else 0)
            result = run_algorithm(toy_max_problem(), levels, params, algorithm, DiscardMode.greedy,
                                   master_seed=1, run_id=2)
            self.assertEqual(result.algorithm, algorithm)
            self.assertEqual(result.status, RunStatus.solution)
