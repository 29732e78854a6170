"""Modified Bessel functions I0, I1, K0 for real non-negative arguments.

I0 and I1 are evaluated by their ascending power series, which has no
cancellation (all terms positive) and converges fast enough over the working
range [0, 50].  K0 uses the log-series for moderate arguments and the
exponentially damped asymptotic expansion beyond, switching where both are
at their best; relative accuracy is ~1e-8 near the switch point (the
minimum-term floor of the asymptotic series) and much better elsewhere.
"""

import math

from .errors import InvalidArgumentError

_EULER_GAMMA = 0.57721566490153286060651209008240243
_K0_SWITCH = 9.0
_MAX_TERMS = 400


def bessel_i0(x):
    """Modified Bessel function of the first kind, order 0."""
    if x < 0:
        raise InvalidArgumentError(f"bessel_i0 requires x >= 0, got {x}")
    q = 0.25 * x * x
    term = 1.0
    total = 1.0
    for k in range(1, _MAX_TERMS):
        term *= q / (k * k)
        total += term
        if term < total * 1e-18:
            break
    return total


def bessel_i1(x):
    """Modified Bessel function of the first kind, order 1."""
    if x < 0:
        raise InvalidArgumentError(f"bessel_i1 requires x >= 0, got {x}")
    q = 0.25 * x * x
    term = 0.5 * x
    total = term
    for k in range(1, _MAX_TERMS):
        term *= q / (k * (k + 1))
        total += term
        if term < total * 1e-18:
            break
    return total


def _k0_series(x):
    # K0 = -(ln(x/2) + gamma) I0(x) + sum_{k>=1} H_k (x^2/4)^k / (k!)^2
    q = 0.25 * x * x
    term = 1.0
    harmonic = 0.0
    acc = 0.0
    for k in range(1, _MAX_TERMS):
        term *= q / (k * k)
        harmonic += 1.0 / k
        contrib = term * harmonic
        acc += contrib
        if contrib < (abs(acc) + 1.0) * 1e-18:
            break
    return -(math.log(0.5 * x) + _EULER_GAMMA) * bessel_i0(x) + acc


def _k0_asymptotic(x):
    # K0 ~ sqrt(pi/(2x)) e^{-x} sum_k (-1)^k a_k / x^k, truncated at the
    # smallest term.
    total = 1.0
    term = 1.0
    k = 0
    while k < 80:
        k += 1
        nxt = term * (-((2 * k - 1) ** 2) / (8.0 * x * k))
        if abs(nxt) >= abs(term):
            break  # divergent tail reached; stop at the smallest term
        term = nxt
        total += term
        if abs(term) < 1e-18 * abs(total):
            break
    return math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) * total


def bessel_k0(x):
    """Modified Bessel function of the second kind, order 0 (x > 0)."""
    if x <= 0:
        raise InvalidArgumentError(f"bessel_k0 requires x > 0, got {x}")
    if x <= _K0_SWITCH:
        return _k0_series(x)
    return _k0_asymptotic(x)
