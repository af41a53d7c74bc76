from fractions import Fraction

import numpy as np
from credmark.cmf.model.errors import ModelInputError
from models.dtos.scenario import Purpose, StreamLabel
from models.scenario.problem import (Multisample, all_satisfied, draw,
                                     empirical_violation, indicator,
                                     resolve_problem, toy_max_problem,
                                     uncertain_lp_problem)
from models.utils.streams import stream_generator
from scenario_test import ScenarioTest


def fixed_samples(values) -> Multisample:
    return Multisample(points=np.asarray(values, dtype=float).reshape(-1, 1),
                       label=StreamLabel(),
                       master_seed=0)


class TestProblem(ScenarioTest):
    def test_streams_are_reproducible(self):
        self.title('Problem - random streams')
        toy = toy_max_problem()
        label = StreamLabel(run=3, iteration=2, purpose=Purpose.design)
        first = draw(toy, 50, label, master_seed=11)
        second = draw(toy, 50, label, master_seed=11)
        np.testing.assert_array_equal(first.points, second.points)
        self.assertEqual(first.seed_lineage, (11, 3, 2, 'design'))

        other_purpose = draw(toy, 50, StreamLabel(run=3, iteration=2, purpose=Purpose.validation), 11)
        other_run = draw(toy, 50, StreamLabel(run=4, iteration=2, purpose=Purpose.design), 11)
        other_seed = draw(toy, 50, label, master_seed=12)
        for other in (other_purpose, other_run, other_seed):
            self.assertFalse(np.array_equal(first.points, other.points))

    def test_stream_prefix(self):
        toy = toy_max_problem()
        label = StreamLabel(run=1, iteration=1)
        np.testing.assert_array_equal(draw(toy, 10, label, 5).points,
                                      draw(toy, 20, label, 5).points[:10])

    def test_stream_label(self):
        self.assertEqual(str(StreamLabel(run=2, iteration=5, purpose=Purpose.validation)), 'run2/k5/validation')
        with self.assertRaises(ModelInputError):
            stream_generator(-1, StreamLabel())

    def test_draw_count(self):
        with self.assertRaises(ModelInputError):
            draw(toy_max_problem(), 0, StreamLabel())

    def test_toy_constraint(self):
        toy = toy_max_problem()
        self.assertAlmostEqual(toy.constraint([0.5], [0.7]), 0.2)
        self.assertEqual(indicator(toy, [0.5], [0.7]), 1)
        self.assertEqual(indicator(toy, [0.5], [0.3]), 0)
        self.assertEqual(indicator(toy, [0.5], [0.5]), 0)
        self.assertEqual(indicator(toy, [0.5], [0.55], tol=0.1), 0)
        self.assertAlmostEqual(toy.analytic_violation([0.7]), 0.3)
        self.assertEqual(toy.analytic_violation([1.2]), 0.0)

    def test_empirical_violation(self):
        toy = toy_max_problem()
        observed = empirical_violation(toy, [0.5], fixed_samples([0.1, 0.6, 0.9, 0.4]))
        self.assertEqual(observed.ratio, Fraction(1, 2))
        self.assertEqual(observed.value, 0.5)
        with self.assertRaises(ModelInputError):
            empirical_violation(toy, [0.5], fixed_samples([]))

    def test_empirical_violation_converges(self):
        toy = toy_max_problem()
        samples = draw(toy, 20000, StreamLabel(purpose=Purpose.certify), master_seed=1)
        observed = empirical_violation(toy, [0.7], samples)
        # 5 sigma of a binomial proportion at p = 0.3
        self.assertLess(abs(observed.value - 0.3), 5 * np.sqrt(0.3 * 0.7 / 20000))

    def test_uniform_draw_mean(self):
        samples = draw(toy_max_problem(), 10**6, StreamLabel(run=2), master_seed=4)
        self.assertEqual(samples.points.shape, (10**6, 1))
        # 5 sigma of the mean of U(0, 1)
        self.assertLess(abs(samples.points.mean() - 0.5), 5 * np.sqrt(1 / 12 / 10**6))
        self.assertGreaterEqual(samples.points.min(), 0.0)
        self.assertLess(samples.points.max(), 1.0)

    def test_all_satisfied_stops_early(self):
        toy = toy_max_problem()
        values = np.full(600, 0.1)
        values[300] = 0.9
        self.assertEqual(all_satisfied(toy, [0.5], fixed_samples(values), chunk=256), (False, 301))
        self.assertEqual(all_satisfied(toy, [0.95], fixed_samples(values), chunk=256), (True, 600))

    def test_uncertain_lp(self):
        self.title('Problem - uncertain LP instances')
        lp = uncertain_lp_problem(n_theta=3, spread=0.4, seed=2)
        self.assertEqual(lp.n_theta, 3)
        self.assertTrue(np.all(lp.objective < 0))
        samples = draw(lp, 200, StreamLabel(), master_seed=0)
        self.assertEqual(samples.points.shape, (200, 4 * 4))
        # theta = 0 satisfies every sampled constraint below the spread limit
        self.assertTrue(np.all(lp.constraint_values(np.zeros(3), samples.points) < 0))

        again = uncertain_lp_problem(n_theta=3, spread=0.4, seed=2)
        np.testing.assert_array_equal(lp.objective, again.objective)
        self.assertIsNone(lp.analytic_violation)

        with self.assertRaises(ModelInputError):
            uncertain_lp_problem(n_theta=1)
        with self.assertRaises(ModelInputError):
            uncertain_lp_problem(spread=0.5)

    def test_derived_problems(self):
        toy = toy_max_problem()
        narrow = toy.with_bounds(0.0, 0.5)
        np.testing.assert_array_equal(narrow.upper, [0.5])
        self.assertIsNone(narrow.analytic_violation)
        self.assertIsNotNone(toy.analytic_violation)

        constant = toy.with_sampler(lambda rng, count: np.full((count, 1), 0.9))
        self.assertTrue(np.all(draw(constant, 5, StreamLabel()).points == 0.9))

    def test_resolve_problem(self):
        self.assertEqual(resolve_problem('toy-max').name, 'toy-max')
        self.assertEqual(resolve_problem('uncertain-lp', n_theta=4).n_theta, 4)
        with self.assertRaises(ModelInputError):
            resolve_problem('toy-max', n_theta=2)
        with self.assertRaises(ModelInputError):
            resolve_problem('unknown')
