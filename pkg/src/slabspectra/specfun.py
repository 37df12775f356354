"""Exponential-integral family E_j, the entire remainder theta, and branch-correct logs.

Scalar kernel of the whole library.  E_j(s) = int_1^inf exp(-s*t) t^(-j-1) dt for
Re s > 0, continued analytically to the plane cut along the negative reals via

    E_0(s) = -ln(s) - gamma + theta(s),    theta(s) = -sum_{m>=1} (-s)^m / (m! m),

with theta entire.  Higher orders follow the integration-by-parts recurrence
E_{j+1}(s) = (exp(-s) - s E_j(s)) / (j+1).

All operator kernels downstream are functions of ln(-i z) and E_j(-i z |x-y|),
where z ranges over the plane cut along the negative imaginary axis; the branch
of ln(-i z) is the principal one, real on the positive imaginary axis and
continuous onto the real axis from above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

EULER_GAMMA = float(np.euler_gamma)

#: |s| at or below which the power series is used for E_0 and theta.
SERIES_RADIUS = 4.0

#: hard cap on series terms before declaring non-convergence
SERIES_MAX_TERMS = 200

#: largest |arg s| accepted by the large-|s| quadrature path (the rotated-ray
#: integral degrades only very close to the cut; nothing downstream gets there)
QUAD_MAX_ARG = 2.6

_LAGUERRE_N = 80
_lag_nodes, _lag_weights = np.polynomial.laguerre.laggauss(_LAGUERRE_N)


class BranchCutError(ValueError):
    """Argument sits on (or at the tip of) the excluded branch cut."""


class ConvergenceError(RuntimeError):
    """A series or quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class BranchedLog:
    """Result of ln(-i z) on the branch that is real for z on the positive
    imaginary axis and continuous across the positive real axis from above."""

    value: complex
    z: complex


@dataclass(frozen=True)
class ExpIntValue:
    """One evaluation of E_j, tagged with the regime that produced it."""

    order: int
    argument: complex
    value: complex
    regime: str  # 'series' | 'quadrature' | 'recurrence'


def log_branch(z: complex) -> BranchedLog:
    """ln(-i z) with the cut along the negative imaginary axis.

    For z = k + i0, k > 0 this gives ln k - i pi/2; for z = i d, d > 0 it is
    the real number ln d.  Raises BranchCutError for z on {-i t : t >= 0}.
    """
    z = complex(z)
    _check_branch(np.asarray(z))
    return BranchedLog(value=complex(np.log(-1j * z)), z=z)


def log_branch_array(z) -> np.ndarray:
    """Vectorized ln(-i z); same branch and domain checks as log_branch."""
    z = np.asarray(z, dtype=complex)
    _check_branch(z)
    return np.log(-1j * z)


def _check_branch(z: np.ndarray) -> None:
    on_cut = (z.real == 0.0) & (z.imag <= 0.0)
    if np.any(on_cut):
        raise BranchCutError(
            "argument on the negative imaginary axis (arg z = -pi/2): "
            "the log branch is not defined there"
        )


def theta_series(s: complex, tol: float = 1e-15, radius: float = 30.0) -> complex:
    """Entire remainder theta(s) by its alternating power series.

    Truncates once the next term drops below tol * max(1, |partial sum|).
    Raises ConvergenceError when |s| exceeds ``radius`` (the series still
    converges but loses too many digits to cancellation; use the quadrature
    regime instead) or when the 200-term cap is hit.
    """
    s = complex(s)
    if abs(s) > radius:
        raise ConvergenceError(
            f"|s| = {abs(s):.3g} exceeds the series radius {radius}; "
            "evaluate via the quadrature regime instead"
        )
    if s == 0:
        return 0.0 + 0.0j
    term = s
    total = s
    for m in range(2, SERIES_MAX_TERMS):
        term = term * (-s) * (m - 1) / (m * m)
        total += term
        if abs(term) < tol * max(1.0, abs(total)):
            return total
    raise ConvergenceError(f"theta series did not converge within {SERIES_MAX_TERMS} terms")


def _theta_series_arr(s: np.ndarray, tol: float = 1e-16) -> np.ndarray:
    """Series evaluation of theta on an array with |s| <= SERIES_RADIUS."""
    term = s.astype(complex).copy()
    total = term.copy()
    for m in range(2, SERIES_MAX_TERMS):
        term = term * (-s) * (m - 1) / (m * m)
        total += term
        if np.all(np.abs(term) < tol * np.maximum(1.0, np.abs(total))):
            return total
    raise ConvergenceError("vector theta series hit the term cap")


def _e0_quadrature_arr(s: np.ndarray) -> np.ndarray:
    """E_0 for |s| > SERIES_RADIUS by fixed Gauss-Laguerre on a rotated ray.

    Uses E_0(s) = exp(-s) int_0^inf exp(-s u)/(1+u) du with the ray of
    integration turned to arg u = -arg(s)/2, which makes the decay real and
    keeps the pole at u = -1 away for every |arg s| < pi.
    """
    alpha = np.angle(s)
    if np.any(np.abs(alpha) > QUAD_MAX_ARG):
        raise ConvergenceError(
            "quadrature path for E_0 requires |arg s| <= "
            f"{QUAD_MAX_ARG} (got {np.abs(alpha).max():.3f})"
        )
    phi = -alpha / 2.0
    lam = np.abs(s) * np.cos(alpha / 2.0)
    tau = np.tan(alpha / 2.0)
    x = _lag_nodes[:, None]
    g = np.exp(-1j * x * tau[None, :]) / (1.0 + np.exp(1j * phi)[None, :] * x / lam[None, :])
    return np.exp(-s) * np.exp(1j * phi) / lam * (_lag_weights[:, None] * g).sum(axis=0)


def e0_array(s) -> np.ndarray:
    """E_0 on an array of complex arguments off the cut (-inf, 0]."""
    s = np.asarray(s, dtype=complex)
    flat = s.ravel()
    on_cut = (flat.real <= 0.0) & (flat.imag == 0.0)
    if np.any(on_cut):
        raise BranchCutError("E_0 is not defined on the negative real axis or at 0")
    out = np.empty_like(flat)
    small = np.abs(flat) <= SERIES_RADIUS
    if small.any():
        ssm = flat[small]
        out[small] = -np.log(ssm) - EULER_GAMMA + _theta_series_arr(ssm)
    big = ~small
    if big.any():
        out[big] = _e0_quadrature_arr(flat[big])
    return out.reshape(s.shape)


def theta_array(s) -> np.ndarray:
    """theta(s) on an array: series inside SERIES_RADIUS, E_0-based outside.

    Unlike e0_array this is fine with s = 0 (theta(0) = 0) but still needs the
    quadrature regime, hence the cut restriction, once |s| > SERIES_RADIUS.
    """
    s = np.asarray(s, dtype=complex)
    flat = s.ravel()
    out = np.empty_like(flat)
    small = np.abs(flat) <= SERIES_RADIUS
    if small.any():
        out[small] = _theta_series_arr(flat[small])
    big = ~small
    if big.any():
        sb = flat[big]
        on_cut = (sb.real <= 0.0) & (sb.imag == 0.0)
        if np.any(on_cut):
            raise BranchCutError("theta beyond the series radius needs s off (-inf, 0]")
        out[big] = _e0_quadrature_arr(sb) + np.log(sb) + EULER_GAMMA
    return out.reshape(s.shape)


def exp_int_family(jmax: int, s) -> np.ndarray:
    """Stack [E_0(s), ..., E_jmax(s)] on an array, by upward recurrence.

    Entries with s = 0 are filled with the exact limits E_j(0) = 1/j (and nan
    for j = 0, where E_0 diverges logarithmically).
    """
    s = np.asarray(s, dtype=complex)
    out = np.empty((jmax + 1,) + s.shape, dtype=complex)
    zero = s == 0
    safe = np.where(zero, 1.0, s)
    e_prev = e0_array(safe) if not np.all(zero) else np.zeros_like(safe)
    e_prev = np.where(zero, np.nan + 0j, e_prev)
    out[0] = e_prev
    if jmax == 0:
        return out
    expms = np.exp(-safe)
    for j in range(jmax):
        e_next = (expms - safe * out[j]) / (j + 1)
        out[j + 1] = np.where(zero, 1.0 / (j + 1), e_next)
    return out


def exp_int(j: int, s: complex) -> ExpIntValue:
    """E_j(s) for a nonnegative integer order with regime bookkeeping.

    j = 0 requires s off the cut (-inf, 0]; j >= 1 additionally admits s = 0
    where E_j(0) = 1/j.
    """
    if j < 0 or int(j) != j:
        raise ValueError("order must be a nonnegative integer")
    j = int(j)
    s = complex(s)
    if s == 0:
        if j == 0:
            raise BranchCutError("E_0 diverges at s = 0")
        return ExpIntValue(order=j, argument=s, value=1.0 / j, regime="series")
    regime = "series" if abs(s) <= SERIES_RADIUS else "quadrature"
    if j == 0:
        value = complex(e0_array(np.array([s]))[0])
        return ExpIntValue(order=0, argument=s, value=value, regime=regime)
    fam = exp_int_family(j, np.array([s]))
    return ExpIntValue(order=j, argument=s, value=complex(fam[j, 0]), regime="recurrence")


def exp_int_oracle(j: int, s: complex, tol: float = 1e-12) -> complex:
    """Independent check value: adaptive quadrature of the defining integral.

    Only valid for Re s > 0, where int_1^inf exp(-s t) t^(-j-1) dt converges
    absolutely.  Raises ConvergenceError when the quadrature error estimate
    exceeds ``tol``.
    """
    s = complex(s)
    if s.real <= 0:
        raise ValueError("oracle requires Re s > 0")

    def integrand_re(t):
        return (np.exp(-s * t) * t ** (-j - 1)).real

    def integrand_im(t):
        return (np.exp(-s * t) * t ** (-j - 1)).imag

    re, ere = quad(integrand_re, 1.0, np.inf, epsabs=tol / 4, epsrel=tol / 4, limit=400)
    im, eim = quad(integrand_im, 1.0, np.inf, epsabs=tol / 4, epsrel=tol / 4, limit=400)
    if ere + eim > tol:
        raise ConvergenceError(
            f"oracle quadrature achieved {ere + eim:.2e}, requested {tol:.2e}"
        )
    return complex(re, im)
