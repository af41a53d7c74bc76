# pylint:disable=invalid-name

import math
import os
import tempfile

import pydantic
from credmark.cmf.model.errors import ModelDataError, ModelInputError
from models.dtos.scenario import (CertificationStatus, DiscardQualityInput,
                                  ExperimentConfig, ProbabilisticLevels,
                                  RunRow)
from models.scenario.bounds import smallest_scenario_N
from models.scenario.config import build_config, load_config
from models.scenario.harness import (CSV_COLUMNS, certify, discard_quality,
                                     guarantee_check, read_report_rows,
                                     run_experiment, summarize,
                                     write_report_csv)
from models.scenario.problem import toy_max_problem
from scenario_test import ScenarioTest


def toy_config(**kwargs) -> ExperimentConfig:
    values = dict(problem='toy-max', algorithm='full', epsilon=0.1, delta=0.1, kt=5,
                  repetitions=20, seed=11)
    values.update(kwargs)
    return ExperimentConfig(**values)


def row(repetition: int, status: str = 'solution', design: int = 10, objective=0.9) -> RunRow:
    return RunRow(epsilon=0.1, delta=0.1, kt=5, alpha=0.1, r=0, algorithm='full',
                  repetition=repetition, status=status, exit_iteration=1,
                  design_samples=design, validation_samples=41, cumulative_design=design,
                  cumulative_validation=41, objective=objective if status == 'solution' else None,
                  true_violation=1 - objective if status == 'solution' else None)


class TestHarness(ScenarioTest):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name: str) -> str:
        return os.path.join(self.tmp.name, name)

    def test_single_repetition(self):
        report = run_experiment(toy_config(repetitions=1))
        self.assertEqual(len(report.rows), 1)
        for summary in report.summary.values():
            self.assertEqual(summary.mean, summary.worst)
            self.assertEqual(summary.std, 0.0)
        self.assertNotIn('wall_time_s', report.summary)

    def test_csv_is_byte_identical(self):
        self.title('Harness - deterministic CSV, serial and parallel')
        first, second, parallel = self.path('a.csv'), self.path('b.csv'), self.path('c.csv')
        write_report_csv(run_experiment(toy_config()), first)
        write_report_csv(run_experiment(toy_config()), second)
        write_report_csv(run_experiment(toy_config(workers=2)), parallel)
        with open(first, 'rb') as f1, open(second, 'rb') as f2, open(parallel, 'rb') as f3:
            content = f1.read()
            self.assertEqual(content, f2.read())
            self.assertEqual(content, f3.read())

    def test_csv_schema(self):
        path = self.path('report.csv')
        report = run_experiment(toy_config(timing=True))
        write_report_csv(report, path)
        with open(path, 'r', encoding='utf-8') as fh:
            lines = fh.read().splitlines()
        self.assertEqual(lines[0].split(','), CSV_COLUMNS)
        body = lines[1:1 + len(report.rows)]
        self.assertTrue(all(not line.startswith('#') for line in body))
        self.assertTrue(all(line.startswith('#') for line in lines[1 + len(report.rows):]))
        self.assertIn('wall_time_s', report.summary)

        rows = read_report_rows(path)
        self.assertEqual(list(rows.columns), CSV_COLUMNS)
        solved = rows[rows.status == 'solution']
        for metric in ('design_samples', 'validation_samples', 'objective', 'exit_iteration'):
            summary = report.summary[metric]
            self.assertAlmostEqual(summary.mean, solved[metric].mean(), places=12)
            self.assertAlmostEqual(summary.std, solved[metric].std(ddof=1), places=12)
            self.assertAlmostEqual(summary.worst, solved[metric].max(), places=12)
            self.assertGreaterEqual(summary.worst, summary.mean)

    def test_missing_report(self):
        with self.assertRaises(ModelDataError):
            read_report_rows(self.path('missing.csv'))

    def test_failures_are_excluded(self):
        rows = [row(0, design=10), row(1, status='numeric_failure'), row(2, design=20)]
        summary = summarize(rows)
        self.assertEqual(summary['design_samples'].mean, 15.0)
        self.assertEqual(summary['design_samples'].worst, 20.0)
        self.assertAlmostEqual(summary['design_samples'].std, math.sqrt(50.0))

        check = guarantee_check(rows, ProbabilisticLevels(epsilon=0.1, delta=0.1))
        self.assertEqual(check.runs, 2)
        self.assertEqual(check.violating, 0)
        self.assertTrue(check.holds)

    def test_sample_savings(self):
        self.title('Harness - sequential design samples against the one-shot bound')
        config = toy_config(delta=0.01, kt=10, repetitions=200, seed=3)
        report = run_experiment(config)
        self.assertEqual(report.completed, 200)
        self.assertEqual(report.oneshot_samples, smallest_scenario_N(config.levels(), 1))
        self.assertLess(report.summary['design_samples'].mean, report.oneshot_samples)
        self.assertTrue(report.guarantee.holds)

    def test_config_overrides(self):
        path = self.path('toy.yaml')
        with open(path, 'w', encoding='utf-8') as fh:
            fh.write('problem: toy-max\nepsilon: 0.1\ndelta: 0.1\nkt: 5\nrepetitions: 7\n')
        self.assertEqual(load_config(path)['kt'], 5)
        config = build_config(path, kt=6, seed=None)
        self.assertEqual(config.kt, 6)
        self.assertEqual(config.repetitions, 7)
        self.assertEqual(config.seed, 0)

        with open(path, 'w', encoding='utf-8') as fh:
            fh.write('epsilon: 0.1\ndelta: 0.1\nbogus: 1\n')
        with self.assertRaises(ModelInputError):
            build_config(path)
        with self.assertRaises(ModelInputError):
            build_config(None, epsilon=0.1, delta=0.1, repetitions=0)
        with self.assertRaises(ModelDataError):
            load_config(self.path('missing.yaml'))

    def test_pydantic_v1_declared(self):
        root = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..')
        with open(os.path.join(root, 'requirements.txt'), 'r', encoding='utf-8') as fh:
            self.assertIn('pydantic>=1.9,<2', fh.read().splitlines())
        with open(os.path.join(root, 'pyproject.toml'), 'r', encoding='utf-8') as fh:
            self.assertIn('pydantic = ">=1.9,<2"', fh.read().splitlines())
        self.assertTrue(pydantic.VERSION.startswith('1.'))

    def test_certify(self):
        self.title('Harness - a posteriori certification')
        toy = toy_max_problem()
        safe = certify(toy, [1.0], 0.2, 0.01, master_seed=0)
        self.assertEqual(safe.status, CertificationStatus.certified)
        self.assertEqual(safe.empirical_violation, 0.0)
        self.assertEqual(safe.samples, math.ceil(math.log(100) / (2 * 0.05 ** 2)))

        unsafe = certify(toy, [0.0], 0.2, 0.01, master_seed=0)
        self.assertEqual(unsafe.status, CertificationStatus.refuted)
        self.assertEqual(unsafe.empirical_violation, 1.0)

        edge = certify(toy, [0.9], 0.2, 0.01, master_seed=0)
        self.assertEqual(edge.status, CertificationStatus.certified)
        self.assertLessEqual(abs(edge.empirical_violation - 0.1), edge.margin)
        self.assertGreaterEqual(edge.upper_confidence, edge.empirical_violation)
        self.assertIn('confidence', edge.statement)

        with self.assertRaises(ModelInputError):
            certify(toy, [0.5], 0.2, 0.01, master_seed=0, margin=0.3)
        with self.assertRaises(ModelInputError):
            certify(toy, [0.5, 0.5], 0.2, 0.01, master_seed=0)

    def test_discard_quality(self):
        self.title('Harness - greedy against exhaustive discarding')
        report = discard_quality(DiscardQualityInput(instances=20, n_theta=2, samples=12, r=2, seed=0))
        self.assertEqual(report.instances, 20)
        self.assertTrue(report.monotone)
        self.assertGreaterEqual(report.within_5pct_fraction, report.match_fraction)
        for greedy, exact in zip(report.greedy_objectives, report.exact_objectives):
            self.assertLessEqual(exact, greedy + 1e-9)
