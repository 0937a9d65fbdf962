"""Modified Bessel functions of the first kind, integer order.

Power series for x <= 15; above that, Miller's backward recurrence normalised
with exp(x) = I_0(x) + 2 sum_k I_k(x), which yields exp(-x) I_n(x) directly.
"""
import math

SERIES_LIMIT = 15.0
_RESCALE = 1e250


def _series(n, x):
    if x == 0:
        return 1.0 if n == 0 else 0.0
    half = 0.5 * x
    term = math.exp(n * math.log(half) - math.lgamma(n + 1))
    total = term
    q = half * half
    k = 0
    while term > 1e-17 * total:
        k += 1
        term *= q / (k * (n + k))
        total += term
    return total


def _miller_scaled(n, x):
    start = n + int(math.sqrt(80.0 * x)) + 30
    start += start % 2
    b_next, b = 0.0, 1e-30
    norm = 0.0
    result = 0.0
    for k in range(start, 0, -1):
        b_prev = b_next + (2.0 * k / x) * b
        b_next, b = b, b_prev
        # b now holds the unnormalised I_{k-1}
        if k - 1 == n:
            result = b
        if k - 1 > 0:
            norm += 2.0 * b
        else:
            norm += b
        if b > _RESCALE:
            b /= _RESCALE
            b_next /= _RESCALE
            norm /= _RESCALE
            result /= _RESCALE
    return result / norm


def bessel_i_scaled(n, x):
    """exp(-x) I_n(x) for integer n >= 0 and x >= 0."""
    n = abs(int(n))
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x <= SERIES_LIMIT:
        return _series(n, x) * math.exp(-x)
    return _miller_scaled(n, x)


def modified_bessel(n, x):
    """I_n(x); overflows to inf past x ~ 713 (use :func:`bessel_i_scaled`)."""
    n = abs(int(n))
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x <= SERIES_LIMIT:
        return _series(n, x)
    s = _miller_scaled(n, x)
    if s == 0.0:
        return 0.0
    log_val = x + math.log(s)
    return math.exp(log_val) if log_val < 709.78 else math.inf


def bessel_ratio(x, n=1):
    """I_n(x) / I_0(x), evaluated without overflow."""
    if x == 0:
        return 1.0 if n == 0 else 0.0
    return bessel_i_scaled(n, x) / bessel_i_scaled(0, x)
