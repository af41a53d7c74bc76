# pylint:disable=invalid-name,no-self-argument

import math
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional

from credmark.dto import DTO, DTOField
from pydantic import validator


class ScheduleFlavor(str, Enum):
    full = 'full'
    partial = 'partial'


class Purpose(str, Enum):
    design = 'design'
    validation = 'validation'
    certify = 'certify'
    instance = 'instance'


class DiscardMode(str, Enum):
    greedy = 'greedy'
    prefix = 'prefix'


class Algorithm(str, Enum):
    full = 'full'
    partial = 'partial'
    oneshot = 'oneshot'
    oneshot_discarded = 'oneshot-discarded'


class SolveStatus(str, Enum):
    feasible = 'feasible'
    infeasible = 'infeasible'
    numeric_failure = 'numeric_failure'


class RunStatus(str, Enum):
    solution = 'solution'
    infeasible_declared = 'infeasible_declared'
    numeric_failure = 'numeric_failure'


class ExitPath(str, Enum):
    validation = 'validation'
    final_iteration = 'final_iteration'
    infeasible = 'infeasible'
    numeric_failure = 'numeric_failure'


class CertificationStatus(str, Enum):
    certified = 'certified'
    refuted = 'refuted'


class ProbabilisticLevels(DTO):
    epsilon: float = DTOField(description='Accuracy: admissible probability of violation')
    delta: float = DTOField(description='Confidence complement: 1 - delta is the confidence')

    @validator('epsilon', 'delta')
    def _in_open_unit_interval(cls, value, field):
        if not 0 < value < 1:
            raise ValueError(f'{field.name} must lie in (0, 1), got {value}')
        return value

    def halved(self) -> 'ProbabilisticLevels':
        """
        Levels for the sequential final-iteration bound, where half of the
        confidence budget is reserved for the validation steps.
        """
        return ProbabilisticLevels(epsilon=self.epsilon, delta=self.delta / 2)

    class Config:
        schema_extra = {
            'examples': [{'epsilon': 0.2, 'delta': 0.01},
                         {'epsilon': 0.05, 'delta': 1e-6}]
        }


class ScheduleParams(DTO):
    n_theta: int = DTOField(description='Number of design variables')
    k_t: int = DTOField(20, description='Termination parameter (maximum iteration count)')
    alpha: float = DTOField(0.1, description='Tuning exponent of the validation schedule')
    r: int = DTOField(0, description='Number of discarded constraints')

    @validator('n_theta')
    def _positive_dimension(cls, value):
        if value < 1:
            raise ValueError(f'n_theta must be at least 1, got {value}')
        return value

    @validator('k_t')
    def _at_least_two_iterations(cls, value):
        if value < 2:
            raise ValueError(f'k_t must be at least 2, got {value}')
        return value

    @validator('alpha')
    def _positive_alpha(cls, value):
        if value <= 0:
            raise ValueError(f'alpha must be positive, got {value}')
        return value

    @validator('r')
    def _nonnegative_r(cls, value):
        if value < 0:
            raise ValueError(f'r must be nonnegative, got {value}')
        return value


class SampleSchedule(DTO):
    """
    Per-iteration sample sizes of one sequential run.

    design_sizes[k-1] is N_k, constrained_sizes[k-1] is N_{k,r} (equal to N_k
    when nothing is discarded) and validation_sizes[k-1] is M_k for k < k_t.
    """
    flavor: ScheduleFlavor
    levels: ProbabilisticLevels
    params: ScheduleParams
    N_final: int = DTOField(description='Final-iteration scenario bound at delta/2')
    design_sizes: List[int]
    constrained_sizes: List[int]
    validation_sizes: List[int]
    beta_w: float
    beta_v: float

    @property
    def k_t(self) -> int:
        return self.params.k_t

    def design_size(self, k: int) -> int:
        return self.design_sizes[k - 1]

    def constrained_size(self, k: int) -> int:
        return self.constrained_sizes[k - 1]

    def validation_size(self, k: int) -> int:
        return self.validation_sizes[k - 1]

    def misclassification_budget(self) -> float:
        """
        Probability budget spent by the k_t - 1 validation steps; at most delta/2.

        Full: sum of (1 - eps)^M_k. Partial: sum of the Chernoff lower-tail bounds
        exp(-M_k eps / (2 k beta_v)) for the threshold (1 - (k beta_v)^(-1/2)) eps.
        """
        epsilon = self.levels.epsilon
        if self.flavor == ScheduleFlavor.full:
            return sum((1 - epsilon) ** m for m in self.validation_sizes)
        return sum(math.exp(-m * epsilon / (2 * k * self.beta_v))
                   for k, m in enumerate(self.validation_sizes, start=1))

    def worst_case_samples(self) -> Dict[str, int]:
        return {'design': sum(self.design_sizes),
                'validation': sum(self.validation_sizes)}


class StreamLabel(DTO):
    run: int = DTOField(0, description='Repetition index')
    iteration: int = DTOField(0, description='Iteration counter k (0 outside the sequential loop)')
    purpose: Purpose = DTOField(Purpose.design)

    def __str__(self):
        purpose = self.purpose.value if isinstance(self.purpose, Purpose) else self.purpose
        return f'run{self.run}/k{self.iteration}/{purpose}'


class EmpiricalViolation(DTO):
    violated: int
    total: int

    @property
    def value(self) -> float:
        return self.violated / self.total

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.violated, self.total)


class SolveOutcome(DTO):
    status: SolveStatus
    theta: Optional[List[float]] = None
    objective: Optional[float] = None
    active_set: List[int] = DTOField([], description='Sample indices tight at the solution')
    discarded: List[int] = DTOField([], description='Sample indices removed before solving')
    message: str = ''

    @property
    def is_feasible(self) -> bool:
        return self.status == SolveStatus.feasible


class IterationRecord(DTO):
    iteration: int
    design_samples: int
    enforced_samples: int
    discarded: int = 0
    validation_samples: int = 0
    design_stream: str
    validation_stream: Optional[str] = None
    solve_status: SolveStatus
    objective: Optional[float] = None
    violations: Optional[int] = None
    evaluated: int = 0
    empirical_violation: Optional[float] = None
    threshold: Optional[float] = None
    accepted: bool = False


class RunResult(DTO):
    algorithm: Algorithm
    status: RunStatus
    exit_path: ExitPath
    theta_sol: Optional[List[float]] = None
    objective: Optional[float] = None
    exit_iteration: int
    design_samples_at_exit: int
    validation_samples_at_exit: int
    cumulative_design_samples: int
    cumulative_validation_samples: int
    N_final: int
    trace: List[IterationRecord] = []
    wall_time: float = 0.0
    true_violation: Optional[float] = None
    note: str = ''


class ExperimentConfig(DTO):
    problem: str = DTOField('toy-max', description='Benchmark name: toy-max or uncertain-lp')
    n_theta: Optional[int] = DTOField(None, description='Decision dimension (uncertain-lp)')
    spread: float = DTOField(0.1, description='Perturbation scale (uncertain-lp)')
    problem_seed: int = DTOField(0, description='Instance seed (uncertain-lp)')
    algorithm: Algorithm = Algorithm.full
    epsilon: float
    delta: float
    kt: int = 20
    alpha: float = 0.1
    r: int = 0
    mode: DiscardMode = DiscardMode.greedy
    repetitions: int = 100
    seed: int = DTOField(0, description='Master seed of every random stream')
    out: Optional[str] = None
    workers: int = 1
    tol: float = DTOField(0.0, description='Violation tolerance of the indicator')
    timing: bool = DTOField(False, description='Record wall time in the CSV')

    @validator('repetitions', 'workers')
    def _at_least_one(cls, value, field):
        if value < 1:
            raise ValueError(f'{field.name} must be at least 1, got {value}')
        return value

    @validator('seed', 'problem_seed', 'r')
    def _nonnegative(cls, value, field):
        if value < 0:
            raise ValueError(f'{field.name} must be nonnegative, got {value}')
        return value

    @validator('tol')
    def _nonnegative_tol(cls, value):
        if value < 0:
            raise ValueError(f'tol must be nonnegative, got {value}')
        return value

    def levels(self) -> ProbabilisticLevels:
        return ProbabilisticLevels(epsilon=self.epsilon, delta=self.delta)

    def schedule_params(self, n_theta: int) -> ScheduleParams:
        return ScheduleParams(n_theta=n_theta, k_t=self.kt, alpha=self.alpha, r=self.r)

    class Config:
        schema_extra = {
            'examples': [{'problem': 'toy-max', 'algorithm': 'full',
                          'epsilon': 0.1, 'delta': 0.1, 'kt': 5, 'repetitions': 200}]
        }


class RunInput(ExperimentConfig):
    run_id: int = DTOField(0, description='Repetition index used to derive the streams')


class RunRow(DTO):
    epsilon: float
    delta: float
    kt: int
    alpha: float
    r: int
    algorithm: str
    repetition: int
    status: str
    exit_iteration: int
    design_samples: int
    validation_samples: int
    cumulative_design: int
    cumulative_validation: int
    objective: Optional[float] = None
    wall_time_s: Optional[float] = None
    true_violation: Optional[float] = None


class MetricSummary(DTO):
    mean: float
    std: float
    worst: float


class GuaranteeCheck(DTO):
    runs: int
    violating: int
    rate: float
    bound: float
    holds: bool


class ExperimentReport(DTO):
    config: ExperimentConfig
    rows: List[RunRow]
    summary: Dict[str, MetricSummary]
    completed: int
    excluded: int
    excluded_statuses: Dict[str, int] = {}
    oneshot_samples: int = DTOField(description='One-shot scenario bound at the same levels')
    guarantee: Optional[GuaranteeCheck] = None


class CertifyInput(DTO):
    problem: str = 'toy-max'
    n_theta: Optional[int] = None
    spread: float = 0.1
    problem_seed: int = 0
    theta: List[float]
    epsilon: float
    delta: float
    seed: int = 0
    margin: Optional[float] = DTOField(None, description='Additive margin, default epsilon/4')


class CertificationResult(DTO):
    status: CertificationStatus
    epsilon: float
    delta: float
    margin: float
    samples: int
    violations: int
    empirical_violation: float
    upper_confidence: float = DTOField(
        description='Clopper-Pearson upper limit on V(theta) at confidence 1 - delta')
    statement: str


class BoundsInput(DTO):
    epsilon: float
    delta: float
    n_theta: int
    r: int = 0
    k_t: Optional[int] = None
    alpha: float = 0.1


class BoundsOutput(DTO):
    epsilon: float
    delta: float
    n_theta: int
    r: int
    scenario_N: int = DTOField(description='One-shot bound at delta')
    discarded_N: Optional[int] = DTOField(None, description='One-shot bound with r discarded')
    sequential_N_final: int = DTOField(description='Final-iteration bound at delta/2')
    beta_w: float
    beta_v: Optional[float] = None
    max_termination_parameter: int
    full_schedule: Optional[SampleSchedule] = None
    partial_schedule: Optional[SampleSchedule] = None


class ScheduleInput(DTO):
    levels: ProbabilisticLevels
    params: ScheduleParams
    flavor: ScheduleFlavor = ScheduleFlavor.full


class DiscardQualityInput(DTO):
    instances: int = 20
    n_theta: int = 2
    samples: int = 12
    r: int = 2
    seed: int = 0


class DiscardQualityReport(DTO):
    instances: int
    samples: int
    r: int
    monotone: bool = DTOField(description='Greedy never worse than keeping every constraint')
    matches: int
    match_fraction: float
    within_5pct_fraction: float
    greedy_objectives: List[float]
    exact_objectives: List[float]
    full_objectives: List[float]
