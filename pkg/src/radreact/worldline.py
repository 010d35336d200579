"""Worldline states, numerical jets of sampled curves, and proper-time
functionals.

Two proper times are provided: the usual Minkowski arc length, and the one
induced by the conformal metric g = (1 - eps) eta where eps compares the
curve's proper acceleration against a maximal value. The latter is
parameterization invariant because eps is computed from the intrinsic
(arc-length) second derivative, not from the raw parameter jets.
"""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainBreach, InsufficientSamples, NotMonotone, NotTimelike
from .minkowski import eta_dot


@dataclass
class WorldlineState:
    """Jets of a worldline at one parameter value (position/velocity/accel,
    optionally jerk for third-order models)."""

    x: np.ndarray
    u: np.ndarray
    a: np.ndarray
    jerk: Optional[np.ndarray] = None
    tau: float = 0.0

    def copy(self):
        return WorldlineState(
            x=self.x.copy(), u=self.u.copy(), a=self.a.copy(),
            jerk=None if self.jerk is None else self.jerk.copy(),
            tau=self.tau)


@dataclass
class SampledCurve:
    """A worldline sampled at strictly increasing parameter values.

    t has shape (n,), x has shape (n, 4).
    """

    t: np.ndarray
    x: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.t.ndim != 1 or self.x.shape != (self.t.size, 4):
            raise ValueError("need t of shape (n,) and x of shape (n, 4)")
        if self.t.size < 5:
            raise InsufficientSamples("curves need at least 5 samples")
        if np.any(np.diff(self.t) <= 0):
            raise NotMonotone("curve parameter must be strictly increasing")

    @classmethod
    def from_function(cls, fn, t, label=""):
        t = np.asarray(t, dtype=float)
        return cls(t, np.array([fn(ti) for ti in t], dtype=float), label)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x0", "x1", "x2", "x3"])
            for ti, xi in zip(self.t, self.x):
                w.writerow(["%.17g" % v for v in (ti, *xi)])

    @classmethod
    def from_csv(cls, path, label=""):
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        return cls(data[:, 0], data[:, 1:5], label)


def fornberg_weights(z, grid, order):
    """Finite-difference weights for derivatives 0..order at point z on an
    arbitrary one-dimensional grid (Fornberg's recurrence).

    Returns an array of shape (order+1, len(grid)).
    """
    n = len(grid)
    w = np.zeros((order + 1, n))
    c1, c4 = 1.0, grid[0] - z
    w[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, grid[i] - z
        for j in range(i):
            c3 = grid[i] - grid[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    w[k, i] = c1 * (k * w[k - 1, i - 1] - c5 * w[k, i - 1]) / c2
                w[0, i] = -c1 * c5 * w[0, i - 1] / c2
            for k in range(mn, 0, -1):
                w[k, j] = ((grid[i] - z) * w[k, j] - k * w[k - 1, j]) / c3
            w[0, j] = (grid[i] - z) * w[0, j] / c3
        c1 = c2
    return w


def _derivatives(t, y, order):
    """Derivatives of y(t) up to `order` at every sample, one-sided near the
    ends, using (2*order+1)-point stencils. Second-order accurate."""
    n = t.size
    pts = 2 * order + 1
    if n < pts:
        raise InsufficientSamples(
            f"order {order} jets need at least {pts} samples, got {n}")
    derivs = np.zeros((order + 1, n) + y.shape[1:])
    half = pts // 2
    for i in range(n):
        lo = min(max(i - half, 0), n - pts)
        sl = slice(lo, lo + pts)
        w = fornberg_weights(t[i], t[sl], order)
        for k in range(order + 1):
            derivs[k, i] = np.tensordot(w[k], y[sl], axes=(0, 0))
    return derivs


def finite_diff_jets(curve, order):
    """Extract jets (derivatives up to `order` in the curve's own parameter)
    at every sample of a SampledCurve."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    d = _derivatives(curve.t, curve.x, order)
    states = []
    zero = np.zeros(4)
    for i, ti in enumerate(curve.t):
        states.append(WorldlineState(
            x=d[0, i],
            u=d[1, i],
            a=d[2, i] if order >= 2 else zero.copy(),
            jerk=d[3, i] if order >= 3 else None,
            tau=ti))
    return states


def simpson_nonuniform(y, x):
    """Composite Simpson rule on a (possibly non-uniform) grid; the last
    interval falls back to trapezoid when the interval count is odd."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size - 1
    total = 0.0
    i = 0
    while i + 2 <= n:
        h0 = x[i + 1] - x[i]
        h1 = x[i + 2] - x[i + 1]
        hs = h0 + h1
        total += (hs / 6.0) * ((2.0 - h1 / h0) * y[i]
                               + (hs * hs / (h0 * h1)) * y[i + 1]
                               + (2.0 - h0 / h1) * y[i + 2])
        i += 2
    if i < n:
        total += 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1])
    return total


def _tangent_data(curve):
    """First and second parameter derivatives plus the timelike speed
    nu = sqrt(-eta(x', x')) at every sample."""
    d = _derivatives(curve.t, curve.x, 2)
    xp, xpp = d[1], d[2]
    nu2 = -eta_dot(xp, xp)
    if np.any(nu2 <= 0):
        raise NotTimelike("curve tangent is not timelike at every sample")
    return xp, xpp, np.sqrt(nu2)


def proper_time_eta(curve):
    """Minkowski proper time: integral of sqrt(-eta(x', x')) dt."""
    _, _, nu = _tangent_data(curve)
    return simpson_nonuniform(nu, curve.t)


def proper_acceleration_squared(curve):
    """eta(a, a) of the arc-length-parameterized second derivative, per
    sample. This is the intrinsic quantity the invariance proof reduces the
    transformed jets to, so it does not depend on how the curve is sampled
    in parameter."""
    xp, xpp, nu = _tangent_data(curve)
    # a = x''/nu^2 + (eta(x'', x')/nu^4) x'
    coeff = eta_dot(xpp, xp) / nu**4
    a = xpp / nu[:, None]**2 + coeff[:, None] * xp
    return eta_dot(a, a)


def proper_time_maxaccel(curve, a_max, return_error=False):
    """Proper time of the conformal metric g = (1 - eps) eta along the curve,
    eps = eta(a, a)/a_max**2 with a the intrinsic acceleration.

    Raises DomainBreach if eps >= 1 anywhere (curve reaches the maximal
    acceleration domain boundary).
    """
    _, _, nu = _tangent_data(curve)
    eps = proper_acceleration_squared(curve) / a_max**2
    if np.any(eps >= 1.0):
        raise DomainBreach(
            f"epsilon reached {np.max(eps):.3g} >= 1 on the curve")
    integrand = np.sqrt(1.0 - eps) * nu
    value = simpson_nonuniform(integrand, curve.t)
    if not return_error:
        return value
    coarse = simpson_nonuniform(integrand[::2], curve.t[::2])
    return value, abs(value - coarse) / 15.0


def reparameterize(curve, mapping):
    """Relabel the curve parameter by a strictly increasing map; the
    geometric point set is unchanged."""
    s = np.array([mapping(ti) for ti in curve.t], dtype=float)
    if np.any(np.diff(s) <= 0):
        raise NotMonotone("reparameterization map must be strictly increasing")
    return SampledCurve(s, curve.x.copy(), curve.label)


def ds_dtau_rate_form(eps_dot):
    """Rate-based parameter conversion ds = dtau / (1 - eps_dot)."""
    return 1.0 / (1.0 - eps_dot)


def dtau_ds_conformal(eps):
    """Conformal parameter conversion dtau = sqrt(1 - eps) ds (the default
    used by the acceptance suite)."""
    return np.sqrt(1.0 - eps)
