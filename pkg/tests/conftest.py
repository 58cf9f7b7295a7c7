from fractions import Fraction

import mpmath
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_criteria: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    _criteria[number] = (passed, detail)
    print(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        passed, detail = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")


def laplace_quantile_mp(u: Fraction, mu=0, beta=1, prec: int = 256):
    """Closed-form Laplace quantile with mpmath at ``prec`` bits."""
    with mpmath.workprec(prec):
        uu = mpmath.mpf(u.numerator) / u.denominator
        mu, beta = Fraction(mu), Fraction(beta)
        mu_ = mpmath.mpf(mu.numerator) / mu.denominator
        beta_ = mpmath.mpf(beta.numerator) / beta.denominator
        if uu <= mpmath.mpf(1) / 2:
            return mu_ + beta_ * mpmath.log(2 * uu)
        return mu_ - beta_ * mpmath.log(2 * (1 - uu))


def mpf_to_fraction(x) -> Fraction:
    man, exp = x.man_exp
    man = abs(int(man)) * (-1 if x < 0 else 1)
    return Fraction(man) * Fraction(2) ** int(exp)


def ceil_to_double(q: Fraction) -> float:
    """Smallest double >= q, using only float() and nextafter."""
    import math

    f = float(q)
    if Fraction(f) < q:
        f = math.nextafter(f, math.inf)
    return f + 0.0


@pytest.fixture
def quantile_mp():
    return laplace_quantile_mp
