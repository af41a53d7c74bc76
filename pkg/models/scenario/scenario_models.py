from credmark.cmf.model import Model, ModelDataErrorDesc
from credmark.cmf.model.errors import ModelDataError, ModelRunError
from models.dtos.scenario import (BoundsInput, BoundsOutput,
                                  CertificationResult, CertifyInput,
                                  DiscardQualityInput, DiscardQualityReport,
                                  ExperimentConfig, ExperimentReport,
                                  RunInput, RunResult, SampleSchedule,
                                  ScheduleInput)
from models.scenario.bounds import bounds_report, build_schedule
from models.scenario.harness import (certify, discard_quality,
                                     run_experiment, run_repetition,
                                     write_report_csv)
from models.scenario.problem import resolve_problem


@Model.describe(slug='scenario.bounds',
                version='1.0',
                display_name='Scenario sample bounds',
                description='One-shot and sequential sample bounds, beta parameters and '
                            'the advisory termination parameter',
                developer='Credmark',
                category='scenario',
                input=BoundsInput,
                output=BoundsOutput)
class ScenarioBounds(Model):
    def run(self, input: BoundsInput) -> BoundsOutput:
        return bounds_report(input)


@Model.describe(slug='scenario.schedule',
                version='1.0',
                display_name='Sequential sample schedule',
                description='Design and validation sample sizes per iteration',
                developer='Credmark',
                category='scenario',
                input=ScheduleInput,
                output=SampleSchedule)
class ScenarioSchedule(Model):
    def run(self, input: ScheduleInput) -> SampleSchedule:
        return build_schedule(input.levels, input.params, input.flavor)


@Model.describe(slug='scenario.run',
                version='1.0',
                display_name='Sequential randomized run',
                description='One traced run of the full, partial or one-shot algorithm',
                developer='Credmark',
                category='scenario',
                input=RunInput,
                output=RunResult)
class ScenarioRun(Model):
    def run(self, input: RunInput) -> RunResult:
        result = run_repetition(input, input.run_id)
        self.logger.info(f'{result.algorithm.value} run {input.run_id}: {result.status.value} '
                         f'at iteration {result.exit_iteration}')
        return result


@Model.describe(slug='scenario.benchmark',
                version='1.0',
                display_name='Scenario benchmark',
                description='Repeated runs aggregated as mean, standard deviation and worst case',
                developer='Credmark',
                category='scenario',
                input=ExperimentConfig,
                output=ExperimentReport,
                errors=ModelDataErrorDesc(code=ModelDataError.Codes.NO_DATA,
                                          code_desc='Report file cannot be written'))
class ScenarioBenchmark(Model):
    def run(self, input: ExperimentConfig) -> ExperimentReport:
        report = run_experiment(input)
        if report.completed == 0:
            raise ModelRunError(f'All {report.excluded} runs failed: {report.excluded_statuses}')
        if input.out is not None:
            write_report_csv(report, input.out)
        return report


@Model.describe(slug='scenario.certify',
                version='1.0',
                display_name='A posteriori certification',
                description='Empirical violation of a fixed design on fresh samples',
                developer='Credmark',
                category='scenario',
                input=CertifyInput,
                output=CertificationResult)
class ScenarioCertify(Model):
    def run(self, input: CertifyInput) -> CertificationResult:
        problem = resolve_problem(input.problem, input.n_theta, input.spread, input.problem_seed)
        return certify(problem, input.theta, input.epsilon, input.delta, input.seed, input.margin)


@Model.describe(slug='scenario.discard-quality',
                version='1.0',
                display_name='Greedy discarding quality',
                description='Greedy constraint removal against exhaustive removal on small LPs',
                developer='Credmark',
                category='scenario',
                input=DiscardQualityInput,
                output=DiscardQualityReport)
class ScenarioDiscardQuality(Model):
    def run(self, input: DiscardQualityInput) -> DiscardQualityReport:
        report = discard_quality(input)
        if not report.monotone:
            self.logger.warning('Greedy discarding exceeded the full-program objective')
        return report
