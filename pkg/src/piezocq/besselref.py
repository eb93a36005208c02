"""Reference modified Bessel functions in extended precision.

Independent of the production kernel (which calls scipy): ascending power
series for moderate arguments, the Hankel asymptotic expansion for large
ones. Used by the validation suite and the tests as an oracle.
"""

from __future__ import annotations

import mpmath

SERIES_LIMIT = 30.0


def _harmonic(k):
    return mpmath.fsum(mpmath.mpf(1) / j for j in range(1, k + 1))


def bessel_i(n: int, z, dps: int = 30):
    """I_n(z) from its power series."""
    n = abs(int(n))
    with mpmath.workdps(dps + int(abs(z)) // 2 + 10):
        z = mpmath.mpc(z)
        q = (z / 2) ** 2
        term = (z / 2) ** n / mpmath.factorial(n)
        total = term
        k = 0
        while True:
            k += 1
            term = term * q / (k * (k + n))
            total += term
            if abs(term) < abs(total) * mpmath.mpf(10) ** (-(dps + 5)) and k > abs(z):
                break
        return total


def _k_series(n: int, z, dps: int):
    """K_n(z), n = 0 or 1, from the ascending series (with log term)."""
    # the series cancels like exp(2|z|); add enough working digits
    extra = int(abs(z) * 0.87) + 10
    with mpmath.workdps(dps + extra):
        z = mpmath.mpc(z)
        half = z / 2
        q = half**2
        lg = mpmath.log(half) + mpmath.euler
        if n == 0:
            term = mpmath.mpf(1)
            total = -lg * term
            k = 0
            while True:
                k += 1
                term = term * q / (k * k)
                add = term * (_harmonic(k) - lg)
                total += add
                if abs(add) < abs(total) * mpmath.mpf(10) ** (-(dps + extra)) and k > abs(z):
                    break
            return total
        # n == 1: K1 = 1/z + ln(z/2) I1(z) - (z/4) sum (psi(k+1)+psi(k+2)) (q^k / (k!(k+1)!))
        i1 = bessel_i(1, z, dps + extra)
        s = mpmath.mpf(0)
        term = mpmath.mpf(1)  # q^k / (k! (k+1)!)
        k = 0
        while True:
            add = term * (mpmath.digamma(k + 1) + mpmath.digamma(k + 2))
            s += add
            k += 1
            term = term * q / (k * (k + 1))
            if abs(add) < abs(s) * mpmath.mpf(10) ** (-(dps + extra)) and k > abs(z):
                break
        return 1 / z + mpmath.log(half) * i1 - (z / 4) * s


def _k_asymptotic(n: int, z, dps: int):
    """Hankel expansion of K_n(z), truncated at its smallest term."""
    with mpmath.workdps(dps + 10):
        z = mpmath.mpc(z)
        mu = 4 * n * n
        term = mpmath.mpf(1)
        total = term
        k = 0
        best = abs(term)
        while True:
            k += 1
            nxt = term * (mu - (2 * k - 1) ** 2) / (k * 8 * z)
            if abs(nxt) > best or k > 400:
                break
            term = nxt
            best = abs(term)
            total += term
            if best < mpmath.mpf(10) ** (-(dps + 5)):
                break
        return mpmath.sqrt(mpmath.pi / (2 * z)) * mpmath.exp(-z) * total


def bessel_k(n: int, z, dps: int = 30):
    """K_n(z) for n in {0, 1} and Re z > 0."""
    if n not in (0, 1):
        raise ValueError("only K0 and K1 are provided")
    if abs(z) <= SERIES_LIMIT:
        return _k_series(n, z, dps)
    return _k_asymptotic(n, z, dps)


def bessel_k_int(n: int, z, dps: int = 30):
    """K_n(z) for integer n >= 0 via the upward recurrence from K0, K1."""
    n = abs(int(n))
    k0 = bessel_k(0, z, dps + 10)
    if n == 0:
        return k0
    k1 = bessel_k(1, z, dps + 10)
    with mpmath.workdps(dps + 10):
        z = mpmath.mpc(z)
        for m in range(1, n):
            k0, k1 = k1, k0 + 2 * m / z * k1
    return k1


def kernel_reference(s, r, dps: int = 30) -> complex:
    """K0(s r) / (2 pi) to about ``dps`` digits."""
    val = bessel_k(0, mpmath.mpc(s) * r, dps) / (2 * mpmath.pi)
    return complex(val)
