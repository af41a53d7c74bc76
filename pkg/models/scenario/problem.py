import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from credmark.cmf.model.errors import ModelInputError
from models.dtos.scenario import EmpiricalViolation, Purpose, StreamLabel
from models.utils.streams import stream_generator

# (generator, count) -> points of shape (count, d)
Sampler = Callable[[np.random.Generator, int], np.ndarray]
# points -> (A of shape (count, m, n_theta), b of shape (count, m)); f(theta, q) = max_j A_j theta - b_j
AffineRows = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]

VALIDATION_CHUNK = 256
LP_THETA_MAX = 10.0
LP_SPREAD_LIMIT = 0.5


@dataclass(frozen=True, eq=False)
class UncertainProblem:
    """
    min c^T theta over the box [lower, upper] subject to f(theta, q) <= 0 for all q.

    The constraint is affine in theta for fixed q and is given by its rows; a
    sample with several rows is the max-of-constraints reduction of a finite
    family of constraints to one scalar f.
    """
    name: str
    n_theta: int
    objective: np.ndarray
    sampler: Sampler
    affine_rows: AffineRows
    lower: np.ndarray
    upper: np.ndarray
    analytic_violation: Optional[Callable[[np.ndarray], float]] = None

    def constraint_values(self, theta, points: np.ndarray) -> np.ndarray:
        A, b = self.affine_rows(points)
        return np.max(A @ np.asarray(theta, dtype=float) - b, axis=1)

    def constraint(self, theta, q) -> float:
        return float(self.constraint_values(theta, np.atleast_2d(q))[0])

    def with_bounds(self, lower, upper) -> 'UncertainProblem':
        return dataclasses.replace(self,
                                   lower=np.broadcast_to(np.asarray(lower, dtype=float),
                                                         (self.n_theta,)).copy(),
                                   upper=np.broadcast_to(np.asarray(upper, dtype=float),
                                                         (self.n_theta,)).copy(),
                                   analytic_violation=None)

    def with_sampler(self, sampler: Sampler) -> 'UncertainProblem':
        return dataclasses.replace(self, sampler=sampler, analytic_violation=None)


@dataclass(frozen=True, eq=False)
class Multisample:
    points: np.ndarray
    label: StreamLabel
    master_seed: int

    def __len__(self):
        return self.points.shape[0]

    @property
    def seed_lineage(self) -> Tuple[int, int, int, str]:
        return (self.master_seed, self.label.run, self.label.iteration,
                Purpose(self.label.purpose).value)

    def subset(self, indices) -> 'Multisample':
        return Multisample(points=self.points[np.asarray(indices, dtype=int)],
                           label=self.label,
                           master_seed=self.master_seed)


def draw(problem: UncertainProblem, count: int, label: StreamLabel,
         master_seed: int = 0) -> Multisample:
    if count < 1:
        raise ModelInputError(f'At least one sample must be drawn, got {count=}')
    rng = stream_generator(master_seed, label)
    points = np.asarray(problem.sampler(rng, count), dtype=float)
    if points.ndim == 1:
        points = points[:, np.newaxis]
    if points.shape[0] != count:
        raise ModelInputError(f'Sampler of {problem.name} returned {points.shape[0]} points, '
                              f'expected {count}')
    return Multisample(points=points, label=label, master_seed=master_seed)


def indicator(problem: UncertainProblem, theta, q, tol: float = 0.0) -> int:
    return int(problem.constraint(theta, q) > tol)


def empirical_violation(problem: UncertainProblem, theta, samples: Multisample,
                        tol: float = 0.0) -> EmpiricalViolation:
    if len(samples) == 0:
        raise ModelInputError('Empirical violation needs a nonempty multisample')
    violated = int(np.count_nonzero(problem.constraint_values(theta, samples.points) > tol))
    return EmpiricalViolation(violated=violated, total=len(samples))


def all_satisfied(problem: UncertainProblem, theta, samples: Multisample,
                  tol: float = 0.0, chunk: int = VALIDATION_CHUNK) -> Tuple[bool, int]:
    """
    Whether every point satisfies the constraint, and how many points were
    evaluated. Stops after the first chunk holding a violation.
    """
    for start in range(0, len(samples), chunk):
        values = problem.constraint_values(theta, samples.points[start:start + chunk])
        violating = np.flatnonzero(values > tol)
        if violating.size > 0:
            return False, start + int(violating[0]) + 1
    return True, len(samples)


def toy_max_problem(lower: float = 0.0, upper: float = 1.0) -> UncertainProblem:
    """
    min theta s.t. theta >= q, q ~ Uniform[0, 1]; f(theta, q) = q - theta.

    The scenario solution is the sample maximum and V(theta) = 1 - theta on [0, 1].
    """
    def sampler(rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(0.0, 1.0, size=(count, 1))

    def affine_rows(points: np.ndarray):
        count = points.shape[0]
        return -np.ones((count, 1, 1)), -points[:, :1]

    def violation(theta) -> float:
        return float(np.clip(1.0 - np.asarray(theta, dtype=float)[0], 0.0, 1.0))

    return UncertainProblem(name='toy-max',
                            n_theta=1,
                            objective=np.ones(1),
                            sampler=sampler,
                            affine_rows=affine_rows,
                            lower=np.array([lower], dtype=float),
                            upper=np.array([upper], dtype=float),
                            analytic_violation=violation)


def uncertain_lp_problem(n_theta: int = 2, spread: float = 0.1, seed: int = 0,
                         n_rows: Optional[int] = None) -> UncertainProblem:
    """
    min c^T theta s.t. (A0 + spread Q_A) theta <= b0 + spread q_b, theta in [0, 10]^n.

    A0 has entries in [0.5, 1.5], b0 = 1 and c < 0, all fixed by seed; the
    uncertainty (Q_A, q_b) is uniform on [-1, 1]. Below spread 0.5 every row
    stays positive with a positive right side, so theta = 0 satisfies every
    sampled constraint and each sampled program is feasible.
    """
    if n_theta < 2:
        raise ModelInputError(f'uncertain-lp needs n_theta >= 2, got {n_theta}')
    if not 0 <= spread < LP_SPREAD_LIMIT:
        raise ModelInputError(f'spread must lie in [0, {LP_SPREAD_LIMIT}), got {spread}')
    m = n_rows or n_theta + 1

    rng = stream_generator(seed, StreamLabel(purpose=Purpose.instance))
    A0 = rng.uniform(0.5, 1.5, size=(m, n_theta))
    b0 = np.ones(m)
    c = -rng.uniform(0.5, 1.5, size=n_theta)

    def sampler(gen: np.random.Generator, count: int) -> np.ndarray:
        return gen.uniform(-1.0, 1.0, size=(count, m * (n_theta + 1)))

    def affine_rows(points: np.ndarray):
        count = points.shape[0]
        q_A = points[:, :m * n_theta].reshape(count, m, n_theta)
        q_b = points[:, m * n_theta:]
        return A0 + spread * q_A, b0 + spread * q_b

    return UncertainProblem(name='uncertain-lp',
                            n_theta=n_theta,
                            objective=c,
                            sampler=sampler,
                            affine_rows=affine_rows,
                            lower=np.zeros(n_theta),
                            upper=np.full(n_theta, LP_THETA_MAX))


def resolve_problem(name: str, n_theta: Optional[int] = None, spread: float = 0.1,
                    problem_seed: int = 0) -> UncertainProblem:
    if name == 'toy-max':
        if n_theta not in (None, 1):
            raise ModelInputError(f'toy-max has n_theta = 1, got {n_theta}')
        return toy_max_problem()
    if name == 'uncertain-lp':
        return uncertain_lp_problem(n_theta=n_theta or 2, spread=spread, seed=problem_seed)
    raise ModelInputError(f'Unknown problem {name!r}; choose toy-max or uncertain-lp')
