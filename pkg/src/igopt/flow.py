"""Continuous-time natural-gradient flow: exact preference weights, exact
right-hand sides for enumerable families, fixed-step ODE integration, and
the closed-form reference constants for linear objectives.

The flow is d(theta)/dt = I(theta)^{-1} E[ W(x) d ln P(x)/d theta ] where W
maps each point to a weight through the quantile its objective value
occupies under the current distribution.  The sampled algorithm is the
Euler discretization of this ODE with Monte-Carlo averages, which the
consistency tests check directly.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import gammainc
from scipy.stats import ncx2

from . import fisher as fisher_mod
from . import objectives as objectives_mod
from .families.base import CapabilityError
from .normal import Phi_inv, phi

__all__ = [
    "FlowState",
    "LinearFlowConstants",
    "exact_weight",
    "exact_weights_all",
    "flow_rhs",
    "integrate",
    "lyapunov_monitor",
    "gaussian_linear_constants",
    "critical_dt",
    "f_quantile",
    "batch_quantile",
    "SphereFlow",
]


@dataclass
class FlowState:
    t: float
    theta: np.ndarray


@dataclass
class LinearFlowConstants:
    """Closed-form rates of the isotropic-Gaussian flow on a linear objective.

    With truncation weighting at quantile q0, log-sigma grows linearly at
    rate alpha (positive iff q0 < 1/2) and the mean drifts at sigma * beta
    per unit time with beta < 0 for q0 < 1.
    """

    alpha: float
    beta: float
    q0: float
    d: int

    def sigma_at(self, t, sigma0):
        return sigma0 * math.exp(self.alpha * t)

    def mean_at(self, t, m0, sigma0):
        # Initial-condition-consistent solution of m' = sigma(t) * beta;
        # expm1 keeps the alpha -> 0 limit (linear drift) accurate.
        if self.alpha == 0.0:
            return m0 + sigma0 * self.beta * t
        return m0 + sigma0 * self.beta / self.alpha * math.expm1(self.alpha * t)


def _values_for(family, objective, points):
    if callable(objective):
        return np.asarray(objective(family.points_of(points)), dtype=float)
    return objectives_mod.evaluate(objective, family.points_of(points))


def exact_weights_all(family, theta, objective, scheme):
    """Preference weight of every enumerated point under P_theta.

    Returns (points, probabilities, values, weights).  For a group of
    points sharing an objective value with lower/upper quantiles q- < q+,
    the weight is the average of w over [q-, q+].
    """
    points = family.enumerate_points()
    probs = np.exp(family.log_density(theta, points))
    values = _values_for(family, objective, points)
    w = np.empty_like(values)
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    sorted_probs = probs[order]
    boundaries = np.nonzero(np.diff(sorted_vals))[0] + 1
    start = 0
    cum = 0.0
    for stop in list(boundaries) + [len(sorted_vals)]:
        mass = sorted_probs[start:stop].sum()
        q_minus, q_plus = cum, min(1.0, cum + mass)
        if mass > 0.0:
            w_val = scheme.integral(q_minus, q_plus) / (q_plus - q_minus)
        else:
            w_val = scheme(q_plus)
        w[order[start:stop]] = w_val
        cum = q_plus
        start = stop
    return points, probs, values, w


def exact_weight(family, theta, objective, scheme, x):
    """W(x): exact quantile-rewritten preference of a single point."""
    points = family.enumerate_points()
    probs = np.exp(family.log_density(theta, points))
    values = _values_for(family, objective, points)
    fx = float(_values_for(family, objective, _single(family, x))[0])
    q_minus = float(probs[values < fx].sum())
    q_plus = float(probs[values <= fx].sum())
    if q_plus == q_minus:
        return float(scheme(q_plus))
    return scheme.integral(q_minus, q_plus) / (q_plus - q_minus)


def _single(family, x):
    if isinstance(x, tuple):
        return tuple(np.atleast_2d(part) for part in x)
    return np.atleast_2d(x)


def flow_rhs(family, theta, objective, scheme, *, use_closed_form=True):
    """Exact d(theta)/dt at theta, by enumeration."""
    points, probs, _, w = exact_weights_all(family, theta, objective, scheme)
    mass = probs * w
    if use_closed_form:
        try:
            return mass @ family.natural_grad_log_density(theta, points)
        except CapabilityError:
            pass
    grad = mass @ family.grad_log_density(theta, points)
    return fisher_mod.solve(fisher_mod.exact_fisher(family, theta), grad)


def integrate(rhs, theta0, horizon, step, method="rk4"):
    """Fixed-step integration of d(theta)/dt = rhs(theta) over [0, horizon].

    The Euler method is kept deliberately: the sampled algorithm *is* the
    Euler scheme of this ODE, and the correspondence is tested.  rk4 is the
    default for accurate reference trajectories.
    """
    if method not in ("euler", "rk4"):
        raise ValueError(f"unknown integration method: {method!r}")
    n_steps = int(round(horizon / step))
    theta = np.asarray(theta0, dtype=float).copy()
    out = [FlowState(0.0, theta.copy())]
    for k in range(n_steps):
        if method == "euler":
            theta = theta + step * rhs(theta)
        else:
            k1 = rhs(theta)
            k2 = rhs(theta + 0.5 * step * k1)
            k3 = rhs(theta + 0.5 * step * k2)
            k4 = rhs(theta + step * k3)
            theta = theta + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out.append(FlowState((k + 1) * step, theta.copy()))
    return out


def lyapunov_monitor(theta, alpha_coeffs, scheme=None, c=0.0):
    """sum_i alpha_i d(theta_i)/dt for the Bernoulli flow on c - alpha . x.

    Non-negative along the flow, and zero exactly at the all-zeros /
    all-ones corners.
    """
    from .families.bernoulli import BernoulliFamily
    from .weights import truncation

    alpha_coeffs = np.asarray(alpha_coeffs, dtype=float)
    scheme = truncation(0.5) if scheme is None else scheme
    family = BernoulliFamily(alpha_coeffs.size)
    obj = objectives_mod.linear(alpha_coeffs, c, space="bits")
    rhs = flow_rhs(family, np.asarray(theta, dtype=float), obj, scheme)
    return float(alpha_coeffs @ rhs)


# -- quantile reporting --------------------------------------------------------

def f_quantile(values, probs, q):
    """q-quantile of a discrete value distribution, midpoint-interpolated.

    The inverse cdf is interpolated through the midpoints of its risers
    (lower-midpoint tie-break at the ends), which makes the reported
    quantile move continuously as mass shifts between atoms; on an atomless
    distribution it coincides with the usual quantile.
    """
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    order = np.argsort(values, kind="stable")
    v = values[order]
    p = probs[order] / probs.sum()
    keep = p > 0.0
    v, p = v[keep], p[keep]
    # merge duplicates
    uniq, inv = np.unique(v, return_inverse=True)
    mass = np.zeros_like(uniq)
    np.add.at(mass, inv, p)
    cum = np.cumsum(mass)
    mid = cum - 0.5 * mass
    if q <= mid[0]:
        return float(uniq[0])
    if q >= mid[-1]:
        return float(uniq[-1])
    return float(np.interp(q, mid, uniq))


def batch_quantile(values, q):
    """Empirical q-quantile of a batch, same midpoint convention."""
    values = np.asarray(values, dtype=float)
    return f_quantile(values, np.full(values.size, 1.0 / values.size), q)


# -- closed-form constants for linear objectives ------------------------------

def _adaptive_simpson(f, a, b, tol, max_depth=48):
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth >= max_depth or abs(left + right - whole) < 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(a, m, fa, flm, fm, left, tol / 2.0, depth + 1) + \
            recurse(m, b, fm, frm, fb, right, tol / 2.0, depth + 1)

    return recurse(a, b, fa, fm, fb, whole, tol, 0)


_TAIL_CUT = 1e-10


def _quantile_square_integral(q0, tol=1e-10):
    """integral over [0, q0] of Phi_inv(u)^2, adaptive Simpson.

    The integrand has a logarithmic singularity at 0; below u = 1e-10 the
    asymptotic expansion Phi_inv(u)^2 ~ 2L - ln(2L) - ln(2 pi), L = ln(1/u),
    is integrated in closed form (the neglected terms contribute O(1e-11)).
    """
    eps = min(_TAIL_CUT, 0.5 * q0)
    L = math.log(1.0 / eps)
    tail = 2.0 * eps * (L + 1.0) - eps * math.log(2.0 * math.pi) \
        - eps * math.log(2.0 * L) - eps / L
    body = _adaptive_simpson(lambda u: Phi_inv(u) ** 2, eps, q0, tol)
    return tail + body


def gaussian_linear_constants(q0, d, tol=1e-10):
    """Growth and drift rates of the isotropic-Gaussian flow on a linear f.

    beta = E[Z 1{Z <= Phi_inv(q0)}] = -phi(Phi_inv(q0));
    alpha = (1/(2d)) (integral_0^q0 Phi_inv(u)^2 du - q0), by quadrature.
    """
    if not 0.0 < q0 <= 1.0:
        raise ValueError("q0 must be in (0, 1]")
    if q0 == 1.0:
        # Everything selected: the full-normal moments give 0 exactly.
        return LinearFlowConstants(alpha=0.0, beta=0.0, q0=q0, d=d)
    beta = -phi(Phi_inv(q0))
    alpha = (_quantile_square_integral(q0, tol) - q0) / (2.0 * d)
    return LinearFlowConstants(alpha=alpha, beta=beta, q0=q0, d=d)


def critical_dt(q, j):
    """Largest step size below which the variance still grows on a linear
    objective, for the update family indexed by j (truncation quantile q).

    j = 0 -> infinite for q < 1/2; j = 1 -> q b sqrt(2 pi) exp(b^2 / 2) with
    b the upper-q percentile; j = 2 -> sqrt(1 + dt_crit(1)) - 1;
    j = inf -> 0.  For q >= 1/2 every variant has critical step 0.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("selection quantile must be in (0, 1)")
    if q >= 0.5:
        return 0.0
    if j == 0:
        return math.inf
    b = Phi_inv(1.0 - q)
    dt1 = q * b * math.sqrt(2.0 * math.pi) * math.exp(0.5 * b * b)
    if j == 1:
        return dt1
    if j == 2:
        return math.sqrt(1.0 + dt1) - 1.0
    if j == math.inf:
        return 0.0
    raise ValueError("j must be one of 0, 1, 2, inf")


# -- exact flow for the sphere under isotropic Gaussians ----------------------

class SphereFlow:
    """Reduced exact flow of N(m, sigma^2 I) on f(x) = |x - center|^2.

    By symmetry the mean moves along the line through the center, so the
    state reduces to (r, log sigma) with r the signed distance of the mean
    from the center.  Writing f = (r + sigma z)^2 + sigma^2 Q with z
    standard normal and Q ~ chi2(d-1), the truncation-weight expectations
    become one-dimensional integrals in z, evaluated by adaptive quadrature:

        dr/dt          = sigma * Int z phi(z) F_k(tau(z)) dz
        dlog(sigma)/dt = (1/2d) Int phi(z) [(z^2 - d) F_k(tau(z))
                                            + k F_{k+2}(tau(z))] dz

    with tau(z) = y_q / sigma^2 - (r/sigma + z)^2, y_q the q0-quantile of f
    (a scaled noncentral chi-square quantile), and F_k the chi2(k) cdf.
    """

    def __init__(self, d, q0):
        if d < 2:
            raise ValueError("reduced sphere flow needs d >= 2")
        self.d = int(d)
        self.q0 = float(q0)

    def _tau_parts(self, state):
        r, s = state
        sigma = math.exp(s)
        lam = (r / sigma) ** 2
        y_over_s2 = ncx2.ppf(self.q0, self.d, lam)
        return r, sigma, y_over_s2

    def rhs(self, state):
        r, sigma, y = self._tau_parts(state)
        k = self.d - 1
        mu = r / sigma
        root = math.sqrt(y)
        z_lo, z_hi = -mu - root, -mu + root

        def cdf_k(tau):
            return gammainc(0.5 * k, 0.5 * tau)

        def cdf_k2(tau):
            return gammainc(0.5 * (k + 2), 0.5 * tau)

        def drift(z):
            tau = y - (mu + z) ** 2
            return z * phi(z) * cdf_k(tau)

        def radial(z):
            tau = y - (mu + z) ** 2
            return phi(z) * ((z * z - self.d) * cdf_k(tau) + k * cdf_k2(tau))

        i_drift = sp_integrate.quad(drift, z_lo, z_hi, limit=200)[0]
        i_radial = sp_integrate.quad(radial, z_lo, z_hi, limit=200)[0]
        return np.array([sigma * i_drift, i_radial / (2.0 * self.d)])

    def median_f(self, state):
        """Exact median of f under the current state (scaled ncx2 median)."""
        r, sigma, _ = self._tau_parts(state)
        return sigma**2 * ncx2.ppf(0.5, self.d, (r / sigma) ** 2)

    def speed(self, state):
        """Fisher norm of d(theta)/dt in (m, log sigma) coordinates."""
        rhs = self.rhs(state)
        _, sigma, _ = self._tau_parts(state)
        return math.sqrt((rhs[0] / sigma) ** 2 + 2.0 * self.d * rhs[1] ** 2)
