# pylint:disable=invalid-name

import logging
import math
from fractions import Fraction
from typing import Callable, Tuple

import numpy as np
from credmark.cmf.model.errors import ModelInputError, ModelRunError
from models.dtos.scenario import (BoundsInput, BoundsOutput,
                                  ProbabilisticLevels, SampleSchedule,
                                  ScheduleFlavor, ScheduleParams)
from models.utils.math import ceil_div, ceil_tol, log_binomials, log_comb
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

SEARCH_CAP = 10**9
LAMBERT_W_MAX_ITER = 50
BUDGET_RTOL = 1e-9
EXACT_BAND = 1e-9


def _check_epsilon(epsilon: float):
    if not 0 < epsilon < 1:
        raise ModelInputError(f'epsilon must lie in (0, 1), got {epsilon}')


def log_binomial_tail(N: int, n: int, epsilon: float) -> float:
    """
    log of sum_{i=0}^{n} C(N, i) eps^i (1 - eps)^(N - i), combined by log-sum-exp.
    """
    _check_epsilon(epsilon)
    if N < 1 or n < 0:
        raise ModelInputError(f'Binomial tail needs N >= 1 and n >= 0, got {N=} {n=}')
    if n > N:
        raise ModelInputError(f'Binomial tail needs n <= N, got {N=} {n=}')
    if n == N:
        return 0.0

    i = np.arange(n + 1)
    log_terms = (log_binomials(N, n)
                 + i * math.log(epsilon)
                 + (N - i) * math.log1p(-epsilon))
    return min(0.0, float(logsumexp(log_terms)))


def binomial_tail(N: int, n: int, epsilon: float) -> float:
    return math.exp(log_binomial_tail(N, n, epsilon))


def discarded_bound_lhs(N: int, n_theta: int, r: int, epsilon: float) -> float:
    """Left side of the discarded-constraints bound, C(r + n, r) * tail(N, r + n)."""
    return math.exp(log_comb(r + n_theta, r) + log_binomial_tail(N, r + n_theta, epsilon))


def _exact_tail(N: int, n: int, epsilon: float) -> Fraction:
    eps = Fraction(epsilon)
    return sum(math.comb(N, i) * eps ** i * (1 - eps) ** (N - i) for i in range(n + 1))


def _bound_holds(N: int, n_theta: int, r: int, levels: ProbabilisticLevels) -> bool:
    """
    C(r + n, r) * tail(N, r + n) <= delta.

    The log-domain value decides unless it lands within EXACT_BAND of log(delta);
    there the sum is redone in rationals on the binary values of epsilon and delta.
    """
    support = r + n_theta
    gap = (log_comb(support, r) + log_binomial_tail(N, support, levels.epsilon)
           - math.log(levels.delta))
    if abs(gap) > EXACT_BAND:
        return gap < 0
    exact = math.comb(support, r) * _exact_tail(N, support, levels.epsilon)
    return exact <= Fraction(levels.delta)


def _smallest_satisfying(holds: Callable[[int], bool], lower: int, cap: int) -> int:
    """
    Smallest N > lower with holds(N), given that holds(lower) is False and holds
    is monotone in N: bracket by doubling the step, then bisect.
    """
    lo, hi, step = lower, lower + 1, 1
    while not holds(hi):
        if hi >= cap:
            raise ModelRunError(f'No sample size up to the search cap {cap} satisfies the bound')
        lo = hi
        step *= 2
        hi = min(lower + step, cap)

    while hi - lo > 1:
        mid = (lo + hi) // 2
        if holds(mid):
            hi = mid
        else:
            lo = mid
    return hi


def smallest_scenario_N(levels: ProbabilisticLevels, n_theta: int,
                        cap: int = SEARCH_CAP) -> int:
    """
    Minimal N with binomial_tail(N, n_theta, eps) <= delta (one-shot scenario bound).

    Pass levels.halved() for the final-iteration bound of the sequential algorithms.
    """
    if n_theta < 1:
        raise ModelInputError(f'n_theta must be at least 1, got {n_theta}')
    return _smallest_satisfying(lambda N: _bound_holds(N, n_theta, 0, levels),
                                lower=n_theta, cap=cap)


def smallest_discarded_N(levels: ProbabilisticLevels, n_theta: int, r: int,
                         cap: int = SEARCH_CAP) -> int:
    """
    Minimal N with C(r + n, r) * binomial_tail(N, r + n, eps) <= delta and r < N - n.
    """
    if n_theta < 1:
        raise ModelInputError(f'n_theta must be at least 1, got {n_theta}')
    if r < 0:
        raise ModelInputError(f'r must be nonnegative, got {r}')
    return _smallest_satisfying(lambda N: _bound_holds(N, n_theta, r, levels),
                                lower=r + n_theta, cap=cap)


def hyperharmonic(m: int, alpha: float) -> float:
    if m < 1:
        raise ModelInputError(f'Hyperharmonic sum needs m >= 1, got {m}')
    return float(np.sum(np.arange(1, m + 1, dtype=float) ** -alpha))


def _check_validation_iteration(k: int, k_t: int):
    if not 1 <= k <= k_t - 1:
        raise ModelInputError(f'Validation runs for 1 <= k <= k_t - 1, got {k=} {k_t=}')


def validation_size_full(k: int, params: ScheduleParams, levels: ProbabilisticLevels) -> int:
    _check_validation_iteration(k, params.k_t)
    numerator = (params.alpha * math.log(k)
                 + math.log(hyperharmonic(params.k_t - 1, params.alpha))
                 + math.log(2 / levels.delta))
    return ceil_tol(numerator / -math.log1p(-levels.epsilon))


def beta_params(levels: ProbabilisticLevels, k_t: int) -> Tuple[float, float]:
    if k_t < 2:
        raise ModelInputError(f'k_t must be at least 2, got {k_t}')
    beta_w = math.log(1 / levels.delta) / (4 * levels.epsilon)
    beta_v = max(1.0, beta_w / (k_t * math.log(2 * k_t / levels.delta)))
    return beta_w, beta_v


def validation_size_partial(k: int, params: ScheduleParams, levels: ProbabilisticLevels,
                            beta_v: float) -> int:
    _check_validation_iteration(k, params.k_t)
    if beta_v < 1:
        raise ModelInputError(f'beta_v must be at least 1, got {beta_v}')
    return ceil_tol(2 * k * beta_v / levels.epsilon * math.log(2 * params.k_t / levels.delta))


def acceptance_threshold(k: int, beta_v: float, epsilon: float) -> float:
    """Largest empirical violation accepted at iteration k by the partial algorithm."""
    return (1 - (k * beta_v) ** -0.5) * epsilon


def design_size(k: int, k_t: int, N_final: int, r: int = 0) -> Tuple[int, int]:
    if not 1 <= k <= k_t:
        raise ModelInputError(f'Design runs for 1 <= k <= k_t, got {k=} {k_t=}')
    if r >= N_final:
        raise ModelInputError(f'r must be below N_final, got {r=} {N_final=}')
    return ceil_div(N_final * k, k_t), ceil_div((N_final - r) * k, k_t)


def lambert_w(x: float) -> float:
    """
    Principal branch of W(x) for x >= 0, the solution of W exp(W) = x.

    Halley iteration started from log1p(x) below e and from the asymptotic
    log(x) - log(log(x)) expansion above.
    """
    if not x >= 0 or math.isinf(x):
        raise ModelInputError(f'lambert_w needs a finite x >= 0, got {x}')
    if x == 0:
        return 0.0

    if x <= math.e:
        w = math.log1p(x)
    else:
        l1 = math.log(x)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1

    for _ in range(LAMBERT_W_MAX_ITER):
        ew = math.exp(w)
        f = w * ew - x
        w1 = w + 1
        dw = f / (ew * w1 - (w + 2) * f / (2 * w1))
        w -= dw
        if f == 0 or abs(dw) <= 1e-15 * abs(w):
            return w
    raise ModelRunError(f'lambert_w did not converge for {x=} in {LAMBERT_W_MAX_ITER} iterations')


def max_termination_parameter(levels: ProbabilisticLevels) -> int:
    """Largest k_t for which the unclamped beta_v stays at or above one."""
    beta_w, _ = beta_params(levels, 2)
    return max(1, math.floor(beta_w / lambert_w(2 * beta_w / levels.delta)))


def build_schedule(levels: ProbabilisticLevels, params: ScheduleParams,
                   flavor: ScheduleFlavor) -> SampleSchedule:
    """
    Per-iteration design and validation sizes of a sequential run.

    The final-iteration bound always uses delta/2; the other half of the
    confidence budget pays for the validation steps.
    """
    k_t = params.k_t
    beta_w, beta_v = beta_params(levels, k_t)

    if flavor == ScheduleFlavor.full:
        if params.r != 0:
            raise ModelInputError(f'The full-satisfaction schedule discards nothing, got r={params.r}')
        N_final = smallest_scenario_N(levels.halved(), params.n_theta)
        validation_sizes = [validation_size_full(k, params, levels) for k in range(1, k_t)]
    else:
        N_final = smallest_discarded_N(levels.halved(), params.n_theta, params.r)
        if params.r >= N_final - params.n_theta:
            raise ModelInputError(f'r={params.r} must be below N - n_theta = {N_final - params.n_theta}')
        validation_sizes = [validation_size_partial(k, params, levels, beta_v)
                            for k in range(1, k_t)]
        k_t_max = max_termination_parameter(levels)
        if k_t > k_t_max:
            logger.warning(f'{k_t=} exceeds the advisory bound {k_t_max} for {levels}; '
                           'beta_v is clamped to 1')

    sizes = [design_size(k, k_t, N_final, params.r) for k in range(1, k_t + 1)]
    schedule = SampleSchedule(flavor=flavor,
                              levels=levels,
                              params=params,
                              N_final=N_final,
                              design_sizes=[n for n, _ in sizes],
                              constrained_sizes=[n_r for _, n_r in sizes],
                              validation_sizes=validation_sizes,
                              beta_w=beta_w,
                              beta_v=beta_v)

    budget = schedule.misclassification_budget()
    if budget > levels.delta / 2 * (1 + BUDGET_RTOL):
        raise ModelRunError(f'Validation budget {budget} exceeds delta/2 = {levels.delta / 2}')
    return schedule


def bounds_report(bounds_input: BoundsInput) -> BoundsOutput:
    levels = ProbabilisticLevels(epsilon=bounds_input.epsilon, delta=bounds_input.delta)
    n_theta, r = bounds_input.n_theta, bounds_input.r

    beta_w, beta_v = beta_params(levels, bounds_input.k_t or 2)
    full_schedule = partial_schedule = None
    if bounds_input.k_t is not None:
        if r == 0:
            full_schedule = build_schedule(
                levels, ScheduleParams(n_theta=n_theta, k_t=bounds_input.k_t,
                                       alpha=bounds_input.alpha),
                ScheduleFlavor.full)
        partial_schedule = build_schedule(
            levels, ScheduleParams(n_theta=n_theta, k_t=bounds_input.k_t,
                                   alpha=bounds_input.alpha, r=r),
            ScheduleFlavor.partial)

    return BoundsOutput(
        epsilon=levels.epsilon,
        delta=levels.delta,
        n_theta=n_theta,
        r=r,
        scenario_N=smallest_scenario_N(levels, n_theta),
        discarded_N=smallest_discarded_N(levels, n_theta, r) if r > 0 else None,
        sequential_N_final=(smallest_scenario_N(levels.halved(), n_theta) if r == 0
                            else smallest_discarded_N(levels.halved(), n_theta, r)),
        beta_w=beta_w,
        beta_v=beta_v if bounds_input.k_t is not None else None,
        max_termination_parameter=max_termination_parameter(levels),
        full_schedule=full_schedule,
        partial_schedule=partial_schedule)
