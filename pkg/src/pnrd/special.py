"""Special functions used by the photocount closed forms.

The regularized incomplete gamma functions are evaluated with the usual
series / Lentz continued-fraction split. For integer order they double as the
Poisson CDF through ``exp(-x) * e_n(x) = Q(n + 1, x)``.
"""

from __future__ import annotations

import math

_EPS = 1e-17
_TINY = 1e-300
_MAX_ITER = 100_000


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) by the power series; converges quickly for x < a + 1.
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:  # pragma: no cover - would need a pathological argument
        raise ArithmeticError(f"incomplete gamma series did not converge (a={a}, x={x})")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_continued_fraction(a: float, x: float) -> float:
    # Q(a, x) by the modified Lentz method; converges quickly for x > a + 1.
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:  # pragma: no cover
        raise ArithmeticError(f"incomplete gamma fraction did not converge (a={a}, x={x})")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_p(a: float, x: float) -> float:
    """Lower regularized incomplete gamma function P(a, x)."""
    if a <= 0:
        raise DomainError(f"order must be positive, got {a}")
    if x < 0:
        raise DomainError(f"argument must be nonnegative, got {x}")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_continued_fraction(a, x)


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma function Q(a, x) = 1 - P(a, x)."""
    if a <= 0:
        raise DomainError(f"order must be positive, got {a}")
    if x < 0:
        raise DomainError(f"argument must be nonnegative, got {x}")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_continued_fraction(a, x)


def poisson_cdf(n: int, x: float) -> float:
    """``exp(-x) * e_n(x)``, i.e. P(K <= n) for K ~ Poisson(x).

    Negative ``n`` gives 0 (empty exponential sum).
    """
    if n < 0:
        return 0.0
    return regularized_gamma_q(n + 1.0, x)


def poisson_sf(n: int, x: float) -> float:
    """``1 - exp(-x) * e_n(x)`` without cancellation, i.e. P(K > n)."""
    if n < 0:
        return 1.0
    return regularized_gamma_p(n + 1.0, x)


def exp_sum(n: int, x: float) -> float:
    """Truncated exponential series ``sum_{k=0}^{n} x**k / k!``.

    ``n = -1`` is the empty sum and returns 0.
    """
    if n < -1:
        raise DomainError(f"order must be >= -1, got {n}")
    total = 0.0
    term = 1.0
    for k in range(n + 1):
        if k:
            term *= x / k
        total += term
    return total


def pochhammer(a: float, k: int) -> float:
    """Rising factorial (a)_k."""
    out = 1.0
    for j in range(k):
        out *= a + j
    return out


def terminating_hypergeometric(a: float, b: int, c: float, z: float) -> float:
    """Gauss 2F1(a, b; c; z) for a nonpositive integer ``b``.

    The series stops after ``-b + 1`` terms, so the value is an exact finite
    sum. Pochhammer ratios are accumulated term to term.
    """
    if b != int(b) or b > 0:
        raise DomainError(f"series only terminates for nonpositive integer b, got {b}")
    if c <= 0 and c == int(c):
        raise DomainError(f"c must not be a nonpositive integer, got {c}")
    b = int(b)
    total = 1.0
    term = 1.0
    for k in range(-b):
        term *= (a + k) * (b + k) * z / ((c + k) * (k + 1))
        total += term
    return total
