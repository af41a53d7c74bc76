#pylint: disable=invalid-name

import math

import numpy as np
from scipy.special import gammaln

CEIL_RTOL = 1e-12


def ceil_tol(x: float, rtol: float = CEIL_RTOL) -> int:
    """
    Smallest integer >= x, ignoring round-off of relative size rtol so that
    bounds evaluating to an exact integer are not bumped by one.
    """
    return math.ceil(x - rtol * max(1.0, abs(x)))


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def log_comb(n: int, k: int) -> float:
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def log_binomials(N: int, n: int) -> np.ndarray:
    """
    log C(N, i) for i = 0..n.

    The falling factorial is summed term by term instead of differencing
    gammaln(N + 1) - gammaln(N - i + 1), which loses digits once N is large.
    """
    i = np.arange(n + 1)
    falling = np.concatenate([[0.0], np.cumsum(np.log(N - np.arange(n, dtype=float)))])
    return falling - gammaln(i + 1)
