"""Special functions used by the characteristic-function pricers.

``norm_cdf`` / ``norm_pdf`` cover the standard normal distribution,
``gamma_real`` is the real gamma function with explicit pole detection,
and ``bessel_k`` evaluates the modified Bessel function of the second
kind K_nu at complex argument with Re(z) > 0 (the region reached by the
generalized-hyperbolic characteristic function for admissible
parameters). ``bessel_k_integral`` keeps the Laplace-type integral
representation available as an independent reference path.
"""

import math

import numpy as np
from scipy.integrate import quad
from scipy.special import kv as _kv

from .errors import DomainError

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

__all__ = [
    "norm_cdf",
    "norm_pdf",
    "gamma_real",
    "bessel_k",
    "bessel_k_array",
    "bessel_k_integral",
]


def norm_cdf(x: float) -> float:
    """Standard normal CDF via erfc (accurate in both tails)."""
    return 0.5 * math.erfc(-x / _SQRT2)


def norm_pdf(x: float) -> float:
    """Standard normal density exp(-x^2/2)/sqrt(2*pi)."""
    return math.exp(-0.5 * x * x) / _SQRT2PI


def gamma_real(x: float) -> float:
    """Gamma function on the reals, rejecting the poles at 0, -1, -2, ...

    Raises
    ------
    DomainError
        If ``x`` is a nonpositive integer.
    """
    if x <= 0.0 and x == math.floor(x):
        raise DomainError(f"gamma_real: pole at nonpositive integer x={x}")
    return math.gamma(x)


def bessel_k(order: float, z: complex) -> complex:
    """Modified Bessel function of the second kind K_nu(z), Re(z) > 0.

    Symmetric in the order: K_{-nu}(z) = K_nu(z). Principal branch.
    """
    z = complex(z)
    if not (z.real > 0.0):
        raise DomainError(f"bessel_k: requires Re(z) > 0, got z={z}")
    return complex(_kv(order, z))


def bessel_k_array(order: float, z: np.ndarray) -> np.ndarray:
    """Vectorized K_nu over an array of complex arguments with Re(z) > 0."""
    z = np.asarray(z, dtype=np.complex128)
    if np.any(z.real <= 0.0):
        bad = z[z.real <= 0.0][0]
        raise DomainError(f"bessel_k: requires Re(z) > 0, got z={bad}")
    return _kv(order, z)


def _integral_cutoff(re_z: float, nu_abs: float) -> float:
    # smallest t with re_z*cosh(t) - nu_abs*t > 750, so the integrand tail
    # is below double-precision underflow
    t = math.acosh(max(750.0 / re_z, 1.0) + 1.0)
    for _ in range(8):
        t = math.acosh(max((750.0 + nu_abs * t) / re_z, 1.0) + 1.0)
    return t


def bessel_k_integral(order: float, z: complex, rtol: float = 1e-11) -> complex:
    """Reference K_nu(z) via the integral representation.

    K_nu(z) = integral_0^inf exp(-z*cosh(t)) * cosh(nu*t) dt for Re(z) > 0,
    evaluated with adaptive quadrature on the real and imaginary parts.
    Slower but independent of the library evaluation path.
    """
    z = complex(z)
    if not (z.real > 0.0):
        raise DomainError(f"bessel_k_integral: requires Re(z) > 0, got z={z}")
    t_max = _integral_cutoff(z.real, abs(order))

    def f_re(t: float) -> float:
        w = -z * math.cosh(t)
        return math.exp(w.real) * math.cos(w.imag) * math.cosh(order * t)

    def f_im(t: float) -> float:
        w = -z * math.cosh(t)
        return math.exp(w.real) * math.sin(w.imag) * math.cosh(order * t)

    re, _ = quad(f_re, 0.0, t_max, epsabs=0.0, epsrel=rtol, limit=800)
    im, _ = quad(f_im, 0.0, t_max, epsabs=0.0, epsrel=rtol, limit=800)
    return complex(re, im)
