"""Independent reference implementations used only by the tests.

Everything here is written from the model definitions in arbitrary precision
(mpmath) or with plain numpy linear algebra, sharing no code with ``volfit``.
"""

from __future__ import annotations

import mpmath as mp
import numpy as np

mp.mp.dps = 40


def _mp(x):
    """Decimal reading of a float, so 0.2 means 1/5 rather than its binary neighbour."""
    return x if isinstance(x, mp.mpf) else mp.mpf(repr(x))


def black_call_by_quadrature(f, k, tau, vol):
    """E[(F_T - K)^+] for lognormal F_T with E[F_T] = f, by integrating the payoff density."""
    f, k, s = _mp(f), _mp(k), _mp(vol) * mp.sqrt(_mp(tau))
    mu = mp.log(f) - s * s / 2

    def integrand(x):  # x = log F_T
        return (mp.exp(x) - k) * mp.npdf(x, mu, s)

    return mp.quad(integrand, [mp.log(k), mu + 3 * s, mu + 12 * s, mp.inf])


def _chi(z, rho):
    return mp.log((mp.sqrt(1 - 2 * rho * z + z * z) - rho + z) / (1 - rho))


def hagan_lognormal(alpha, rho, nu, f, k, tau):
    alpha, rho, nu, f, k, tau = (_mp(x) for x in (alpha, rho, nu, f, k, tau))
    zeta = nu / alpha * mp.log(f / k)
    ratio = mp.mpf(1) if zeta == 0 else zeta / _chi(zeta, rho)
    i1 = rho * nu * alpha / 4 + (2 - 3 * rho * rho) * nu * nu / 24
    return alpha * ratio * (1 + i1 * tau)


def general_local_vol_formula(alpha, rho, nu, f, k, tau, c, dc, d2c):
    """I0 (1 + I1 tau) for dF = a C(F) dW1, da = nu a dW2, from the integral definitions.

    ``c``, ``dc`` and ``d2c`` must accept and return mpmath numbers.
    """
    alpha, rho, nu, f, k, tau = (_mp(x) for x in (alpha, rho, nu, f, k, tau))
    integral = mp.quad(lambda x: 1 / c(x), [k, f])
    zeta = nu / alpha * integral
    f_ave = mp.sqrt(f * k)
    g1 = dc(f_ave) / c(f_ave)
    g2 = d2c(f_ave) / c(f_ave)
    i0 = alpha * mp.log(f / k) / integral * zeta / _chi(zeta, rho)
    i1 = ((2 * g2 - g1 * g1 + 1 / (f_ave * f_ave)) / 24 * alpha**2 * c(f_ave) ** 2
          + rho * nu * alpha * g1 * c(f_ave) / 4
          + (2 - 3 * rho * rho) / 24 * nu * nu)
    return i0 * (1 + i1 * tau)


def skew_dynamics_vol(alpha, rho, nu, m, f, k, tau):
    """Implied vol of dF = Y gamma F dW1, dY = (nu/2) Y dW2 through the general formula."""
    alpha, nu, m = _mp(alpha), _mp(nu), _mp(m)
    gamma = (alpha + m) / alpha
    return general_local_vol_formula(
        alpha, rho, nu / 2, f, k, tau,
        lambda x: gamma * x, lambda x: gamma, lambda x: mp.mpf(0),
    )


def skew_coefficients_by_expansion(alpha, rho, nu, m, tau):
    """(slope, level) at the forward of sigma(alpha+m, rho, nu/2) - sigma(alpha, rho, nu) in log-moneyness.

    Obtained by numerically differentiating the arbitrary-precision closed form,
    which is how the skew and level coefficients are defined.
    """
    alpha, rho, nu, m, tau = (_mp(x) for x in (alpha, rho, nu, m, tau))
    f = mp.mpf(100)

    def gap(x):
        k = f * mp.exp(x)
        return hagan_lognormal(alpha + m, rho, nu / 2, f, k, tau) - hagan_lognormal(alpha, rho, nu, f, k, tau)

    return mp.diff(gap, 0, h=mp.mpf("1e-15")), gap(0)


def skew_coefficients_printed(alpha, rho, nu, m, tau):
    """The closed-form coefficients transcribed term by term at 40 digits."""
    a, r, v, m, t = (_mp(x) for x in (alpha, rho, nu, m, tau))
    u, w = v / 2, -v / 2

    def i1(al, nu_):
        return r * nu_ * al / 4 + (2 - 3 * r * r) / 24 * nu_ * nu_

    d_i1 = r * w * a / 4 + (2 - 3 * r * r) / 24 * (2 * v * w + w * w)
    c_star = r * w / 2 + (r * w / 2 * i1(a, u) + r * r * u * u * m / 8 + r * v / 2 * d_i1) * t
    d_star = m + (m * i1(a + m, u) + a * r * u * m / 4 + a * d_i1) * t
    return c_star, d_star


# ---------------------------------------------------------------- splines

def cox_de_boor(knots: np.ndarray, degree: int, x: np.ndarray) -> np.ndarray:
    """B-spline basis matrix (len(x), n_basis) by the Cox-de Boor recursion.

    The right end point is assigned to the last non-empty knot span.
    """
    t = np.asarray(knots, dtype=float)
    x = np.asarray(x, dtype=float)
    n_basis = len(t) - degree - 1
    last = np.max(np.nonzero(t[:-1] < t[1:])[0])
    basis = np.zeros((len(x), len(t) - 1))
    for j in range(len(t) - 1):
        if t[j] < t[j + 1]:
            inside = (t[j] <= x) & (x < t[j + 1])
            if j == last:
                inside |= x == t[j + 1]
            basis[inside, j] = 1.0
    for p in range(1, degree + 1):
        nxt = np.zeros((len(x), len(t) - 1 - p))
        for j in range(len(t) - 1 - p):
            left = t[j + p] - t[j]
            right = t[j + p + 1] - t[j + 1]
            term = np.zeros(len(x))
            if left > 0:
                term += (x - t[j]) / left * basis[:, j]
            if right > 0:
                term += (t[j + p + 1] - x) / right * basis[:, j + 1]
            nxt[:, j] = term
        basis = nxt
    return basis[:, :n_basis]


def lsq_spline_normal_equations(x, y, knots, degree=3) -> np.ndarray:
    """Coefficients minimising ||B c - y||^2 via the normal equations."""
    b = cox_de_boor(knots, degree, x)
    return np.linalg.solve(b.T @ b, b.T @ np.asarray(y, dtype=float))
