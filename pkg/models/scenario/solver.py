"""
Reduced-size scenario programs.

A backend solves min c^T x s.t. A x <= b, lower <= x <= upper and returns a
BackendResult. The built-in SimplexBackend is a dense two-phase tableau method
with Bland's rule; HighsBackend adapts scipy's HiGHS solver to the same
contract. Uniqueness of the returned optimizer is enforced above the backend by
a lexicographic tie-break, so it holds for any backend.
"""

import itertools
import logging
import math
from typing import NamedTuple, Optional, Protocol, Sequence

import numpy as np
from credmark.cmf.model.errors import ModelInputError
from models.dtos.scenario import DiscardMode, SolveOutcome, SolveStatus
from models.scenario.problem import Multisample, UncertainProblem
from scipy.optimize import linprog

logger = logging.getLogger(__name__)

SOLVER_RTOL = 1e-8
OBJECTIVE_RTOL = 1e-9
EXHAUSTIVE_LIMIT = 100_000


class BackendResult(NamedTuple):
    status: SolveStatus
    x: Optional[np.ndarray] = None
    message: str = ''


class LinearBackend(Protocol):
    def solve(self, c: np.ndarray, A_ub: np.ndarray, b_ub: np.ndarray,
              lower: np.ndarray, upper: np.ndarray) -> BackendResult:
        ...


def _pivot(T: np.ndarray, row: int, col: int):
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])


class SimplexBackend:
    """
    Dense tableau simplex. Entering column is the lowest index with a negative
    reduced cost; among tied ratios the leaving row is the one whose basic
    variable has the lowest index (Bland), so the pivot path is deterministic.
    """

    def __init__(self, tol: float = 1e-10, max_pivots: int = 50_000):
        self.tol = tol
        self.max_pivots = max_pivots

    def _iterate(self, T: np.ndarray, basis: np.ndarray) -> str:
        for _ in range(self.max_pivots):
            entering = np.flatnonzero(T[-1, :-1] < -self.tol)
            if entering.size == 0:
                return 'optimal'
            col = int(entering[0])

            column = T[:-1, col]
            rows = np.flatnonzero(column > self.tol)
            if rows.size == 0:
                return 'unbounded'
            ratios = T[rows, -1] / column[rows]
            best = ratios.min()
            ties = rows[ratios <= best + self.tol * max(1.0, abs(best))]
            row = int(ties[np.argmin(basis[ties])])

            _pivot(T, row, col)
            basis[row] = col
        return 'pivot_cap'

    def solve(self, c, A_ub, b_ub, lower, upper) -> BackendResult:
        c = np.asarray(c, dtype=float)
        n = c.shape[0]
        width = upper - lower
        if np.any(width < 0):
            return BackendResult(SolveStatus.infeasible, message='Empty box')

        # x = theta - lower, 0 <= x <= width
        G = np.vstack([np.asarray(A_ub, dtype=float).reshape(-1, n), np.eye(n)])
        h = np.concatenate([b_ub - A_ub.reshape(-1, n) @ lower, width])
        m = G.shape[0]
        negative = h < 0
        art_rows = np.flatnonzero(negative)
        k = art_rows.size

        with np.errstate(divide='raise', invalid='raise', over='raise'):
            try:
                T = np.zeros((m + 1, n + m + k + 1))
                T[:m, :n] = G
                T[:m, n:n + m] = np.eye(m)
                T[:m, -1] = h
                T[:m][negative] *= -1
                basis = np.arange(n, n + m)
                for j, i in enumerate(art_rows):
                    T[i, n + m + j] = 1.0
                    basis[i] = n + m + j

                feas_tol = 1e-9 * max(1.0, float(np.abs(h).max(initial=0.0)))
                if k > 0:
                    T[-1, n + m:n + m + k] = 1.0
                    for i in art_rows:
                        T[-1] -= T[i]
                    state = self._iterate(T, basis)
                    if state != 'optimal':
                        return BackendResult(SolveStatus.numeric_failure,
                                             message=f'Phase one stopped: {state}')
                    if -T[-1, -1] > feas_tol:
                        return BackendResult(SolveStatus.infeasible,
                                             message=f'Phase one optimum {-T[-1, -1]:.3g}')

                    keep = np.ones(m, dtype=bool)
                    for i in range(m):
                        if basis[i] >= n + m:
                            candidates = np.flatnonzero(np.abs(T[i, :n + m]) > self.tol)
                            if candidates.size == 0:
                                keep[i] = False
                            else:
                                _pivot(T, i, int(candidates[0]))
                                basis[i] = int(candidates[0])
                    T = np.vstack([T[:m][keep], T[-1:]])
                    basis = basis[keep]
                    T = np.delete(T, np.s_[n + m:n + m + k], axis=1)

                T[-1] = 0.0
                T[-1, :n] = c
                for i, j in enumerate(basis):
                    if T[-1, j] != 0.0:
                        T[-1] -= T[-1, j] * T[i]
                state = self._iterate(T, basis)
            except FloatingPointError as err:
                return BackendResult(SolveStatus.numeric_failure, message=str(err))

        if state != 'optimal':
            return BackendResult(SolveStatus.numeric_failure, message=f'Phase two stopped: {state}')

        x = np.zeros(n)
        for i, j in enumerate(basis):
            if j < n:
                x[j] = T[i, -1]
        return BackendResult(SolveStatus.feasible, x=lower + np.clip(x, 0.0, width))


class HighsBackend:
    """Adapter over scipy's HiGHS solver following the backend contract."""

    def solve(self, c, A_ub, b_ub, lower, upper) -> BackendResult:
        c = np.asarray(c, dtype=float)
        A_ub = np.asarray(A_ub, dtype=float).reshape(-1, c.shape[0])
        res = linprog(c,
                      A_ub=A_ub if A_ub.shape[0] > 0 else None,
                      b_ub=b_ub if A_ub.shape[0] > 0 else None,
                      bounds=list(zip(lower, upper)),
                      method='highs')
        if res.status == 0:
            return BackendResult(SolveStatus.feasible, x=np.asarray(res.x, dtype=float))
        if res.status == 2:
            return BackendResult(SolveStatus.infeasible, message=res.message)
        return BackendResult(SolveStatus.numeric_failure, message=res.message)


DEFAULT_BACKEND = SimplexBackend()


def _lexicographic_solve(backend: LinearBackend, c: np.ndarray, A: np.ndarray, b: np.ndarray,
                         lower: np.ndarray, upper: np.ndarray) -> BackendResult:
    """
    Optimize c, then minimize theta_1, theta_2, ... in turn over the optimal face,
    which picks the lexicographically smallest optimizer.
    """
    result = backend.solve(c, A, b, lower, upper)
    n = c.shape[0]
    if result.status != SolveStatus.feasible or (n == 1 and c[0] != 0):
        return result

    x = result.x
    z = float(c @ x)
    A_lex = np.vstack([A, c])
    b_lex = np.append(b, z + OBJECTIVE_RTOL * max(1.0, abs(z)))
    for j in range(n):
        unit = np.zeros(n)
        unit[j] = 1.0
        stage = backend.solve(unit, A_lex, b_lex, lower, upper)
        if stage.status != SolveStatus.feasible:
            logger.debug(f'Tie-break stage {j} returned {stage.status}; keeping the previous optimizer')
            break
        x = stage.x
        A_lex = np.vstack([A_lex, unit])
        b_lex = np.append(b_lex, x[j] + OBJECTIVE_RTOL * max(1.0, abs(x[j])))
    return BackendResult(SolveStatus.feasible, x=x)


def solve_scenario(problem: UncertainProblem, samples: Multisample,
                   enforced: Optional[Sequence[int]] = None,
                   backend: Optional[LinearBackend] = None) -> SolveOutcome:
    """
    Minimize c^T theta over the box and the sampled constraints at the indices
    in enforced (all of them by default).
    """
    backend = backend or DEFAULT_BACKEND
    if len(samples) == 0:
        raise ModelInputError('The scenario program needs a nonempty multisample')
    indices = np.arange(len(samples)) if enforced is None else np.asarray(enforced, dtype=int)
    points = samples.points[indices]

    n = problem.n_theta
    A, b = problem.affine_rows(points)
    A = np.asarray(A, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).reshape(-1)

    result = _lexicographic_solve(backend, problem.objective, A, b, problem.lower, problem.upper)
    if result.status != SolveStatus.feasible:
        return SolveOutcome(status=result.status, message=result.message)

    theta = result.x
    scale = max(1.0,
                float(np.abs(b).max(initial=0.0)),
                float(np.abs(A).max(initial=0.0)) * float(np.abs(theta).max(initial=0.0)))
    tol = SOLVER_RTOL * scale
    values = (problem.constraint_values(theta, points) if len(indices) > 0
              else np.zeros(0))
    if values.size > 0 and values.max() > tol:
        return SolveOutcome(status=SolveStatus.numeric_failure,
                            message=f'Backend optimizer violates a sampled constraint by {values.max():.3g}')

    return SolveOutcome(status=SolveStatus.feasible,
                        theta=theta.tolist(),
                        objective=float(problem.objective @ theta),
                        active_set=indices[values >= -tol].tolist())


def _check_discard_budget(problem: UncertainProblem, samples: Multisample, r: int):
    if r < 0:
        raise ModelInputError(f'r must be nonnegative, got {r}')
    if r > 0 and r >= len(samples) - problem.n_theta:
        raise ModelInputError(f'r={r} must be below count - n_theta = {len(samples) - problem.n_theta}')


def solve_with_discarding(problem: UncertainProblem, samples: Multisample, r: int,
                          mode: DiscardMode = DiscardMode.greedy,
                          backend: Optional[LinearBackend] = None) -> SolveOutcome:
    """
    Solve after removing r sampled constraints.

    greedy: r times, drop the currently active sample whose removal lowers the
    objective most (lowest index on ties) and re-solve.
    prefix: enforce only the first count - r samples.
    """
    _check_discard_budget(problem, samples, r)
    if r == 0:
        return solve_scenario(problem, samples, backend=backend)

    count = len(samples)
    if DiscardMode(mode) == DiscardMode.prefix:
        outcome = solve_scenario(problem, samples, enforced=range(count - r), backend=backend)
        outcome.discarded = list(range(count - r, count))
        return outcome

    enforced = list(range(count))
    discarded = []
    outcome = solve_scenario(problem, samples, backend=backend)
    for _ in range(r):
        if not outcome.is_feasible:
            break
        candidates = [i for i in outcome.active_set if i in set(enforced)]
        if not candidates:
            logger.warning(f'No active sample left to discard after {len(discarded)} of {r} removals')
            break

        best_index, best = None, None
        for i in sorted(candidates):
            trial = solve_scenario(problem, samples,
                                   enforced=[j for j in enforced if j != i],
                                   backend=backend)
            if trial.status == SolveStatus.numeric_failure:
                return trial
            if best is None or trial.objective < best.objective - OBJECTIVE_RTOL * max(1.0, abs(best.objective)):
                best_index, best = i, trial
        enforced.remove(best_index)
        discarded.append(best_index)
        outcome = best

    outcome.discarded = discarded
    return outcome


def exhaustive_discarding(problem: UncertainProblem, samples: Multisample, r: int,
                          backend: Optional[LinearBackend] = None) -> SolveOutcome:
    """Best removal of r samples by enumeration of all r-subsets."""
    _check_discard_budget(problem, samples, r)
    count = len(samples)
    if math.comb(count, r) > EXHAUSTIVE_LIMIT:
        raise ModelInputError(f'C({count}, {r}) subsets exceed the enumeration limit {EXHAUSTIVE_LIMIT}')

    best = None
    for removed in itertools.combinations(range(count), r):
        kept = [i for i in range(count) if i not in removed]
        trial = solve_scenario(problem, samples, enforced=kept, backend=backend)
        if not trial.is_feasible:
            continue
        if best is None or trial.objective < best.objective - OBJECTIVE_RTOL * max(1.0, abs(best.objective)):
            trial.discarded = list(removed)
            best = trial
    return best or solve_scenario(problem, samples, backend=backend)
