"""The force models and their diagnostic identities.

Five laws for a point charge (charge e, observable mass m, c = 1):

* lorentz            m a = e F u                      (eta proper time)
* ald                m a = e F u + (2/3) e^2 (j - eta(a,a) u)   (third order)
* landau_lifshitz    first-order reduction of ald     (eta proper time)
* implicit_maxaccel  m a = e F u - (2/3) e^2 eta(a,a) u  (g proper time)
* explicit_approx    a  = O (e F u), the leading-order explicit inverse
* uniform_covariant  m a = e F u, valid only on the eps_dot = 0 stratum

The implicit law is quadratic in the acceleration; its physical root is the
one continuously connected to the Lorentz acceleration, found here by a
scalar Newton iteration on the acceleration square seeded with the Lorentz
value.

Index raising on F uses eta by default; the conformal metric g raises with
an extra 1/(1 - eps), exposed as an option so the difference is measurable.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainBreach, MaximalAccelBreach, NoConvergence, RegimeViolation
from .fields import faraday_at, lorentz_force
from .maxaccel import g_dot_eps
from .minkowski import ETA, eta_dot

VALID_MODELS = ("lorentz", "ald", "landau_lifshitz", "implicit_maxaccel",
                "explicit_approx", "uniform_covariant")

# Models parameterized by the conformal proper time (all others use eta).
G_NORMALIZED_MODELS = ("implicit_maxaccel", "explicit_approx",
                       "uniform_covariant")


@dataclass
class ForceModelSpec:
    """Selects and parameterizes one dynamical law."""

    model: str
    e: float
    m: float
    a_max: Optional[float] = None
    raising: str = "eta"
    solver: Optional[object] = None  # SolverOptions; defaulted by integrate()

    def __post_init__(self):
        if self.model not in VALID_MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if not self.m > 0:
            raise ValueError("mass must be positive")
        if self.model in G_NORMALIZED_MODELS and not (
                self.a_max is not None and self.a_max > 0):
            raise ValueError(f"{self.model} requires a_max > 0")
        if self.raising not in ("eta", "g"):
            raise ValueError("raising must be 'eta' or 'g'")

    @property
    def g_normalized(self):
        return self.model in G_NORMALIZED_MODELS


@dataclass
class DiagnosticsRow:
    """Per-step invariants recorded along a trajectory."""

    tau: float
    a2: float
    epsilon: float
    epsilon_dot: float
    fl2: float
    fl2_identity_residual: float
    larmor_residual: float
    g_norm_residual: float


def characteristic_time(e, m):
    """Radiation-reaction timescale tau_0 = (2/3) e^2 / m."""
    return (2.0 / 3.0) * e * e / m


def raised_faraday(F, raising="eta", eps=0.0):
    """F^mu_nu as a matrix acting on four-vectors."""
    Fh = ETA @ F
    if raising == "g":
        if eps >= 1.0:
            raise DomainBreach(f"epsilon = {eps} >= 1 while raising with g")
        Fh = Fh / (1.0 - eps)
    return Fh


def lorentz_accel(u, F, e, m, raising="eta", eps=0.0):
    return (e / m) * (raised_faraday(F, raising, eps) @ u)


def ald_rhs(state, F, e, m):
    """Jerk of the third-order law, solved for the highest derivative:

    j = (1/(tau0 m)) (m a - e F u) + eta(a,a) u.

    Plugging the result back into the law gives a zero residual by
    construction.
    """
    tau0 = characteristic_time(e, m)
    a, u = state.a, state.u
    return (m * a - lorentz_force(F, e, u)) / (tau0 * m) + eta_dot(a, a) * u


def ald_residual(state, jerk, F, e, m):
    """Residual of the third-order law for a trial jerk."""
    c = (2.0 / 3.0) * e * e
    return (m * state.a - lorentz_force(F, e, state.u)
            - c * (jerk - eta_dot(state.a, state.a) * state.u))


def landau_lifshitz_accel(state, field_spec, e, m, tau, delta=1e-6):
    """First-order reduction of the third-order law: substitute the Lorentz
    acceleration into the correction term. The field derivative along the
    worldline is taken by central differences of the catalog field."""
    u, x = state.u, state.x
    F = faraday_at(field_spec, x, tau)
    aL = lorentz_accel(u, F, e, m)
    Fp = faraday_at(field_spec, x + delta * u, tau + delta)
    Fm = faraday_at(field_spec, x - delta * u, tau - delta)
    Fdot = (Fp - Fm) / (2.0 * delta)
    tau0 = characteristic_time(e, m)
    correction = ((e / m) * (ETA @ Fdot @ u) + (e / m) * (ETA @ F @ aL)
                  - eta_dot(aL, aL) * u)
    return aL + tau0 * correction


def implicit_residual(a_trial, state, F, e, m, raising="eta", eps=0.0):
    """R = m a - e F u + (2/3) e^2 eta(a,a) u; R = 0 defines the implicit
    second-order law."""
    f = e * (raised_faraday(F, raising, eps) @ state.u)
    return m * a_trial - f + (2.0 / 3.0) * e * e * eta_dot(a_trial, a_trial) * state.u


def solve_implicit_accel(state, F, e, m, tol=1e-12, max_iter=50,
                         a_max=None, raising="eta"):
    """Acceleration root of the implicit law at one state.

    The four-vector equation reduces to a scalar quadratic for
    Q = eta(a,a):  c^2 N Q^2 + m^2 Q - fl2(Q) = 0,  N = -eta(u,u) > 0,
    since the force term is eta-orthogonal to u. Newton iteration from the
    Lorentz seed Q0 = fl2/m^2 picks the branch continuously connected to the
    Lorentz acceleration.
    """
    u = state.u
    c = (2.0 / 3.0) * e * e
    N = -eta_dot(u, u)
    if N <= 0:
        raise NoConvergence("velocity must be timelike for the implicit solve")
    f0 = e * (ETA @ F @ u)
    fl2_eta = eta_dot(f0, f0)

    if raising == "g":
        if a_max is None:
            raise ValueError("g-raising needs a_max to evaluate epsilon")
        amax2 = a_max * a_max

        def P(Q):
            s = 1.0 - Q / amax2
            return c * c * N * Q * Q + m * m * Q - fl2_eta / (s * s)

        def dP(Q):
            s = 1.0 - Q / amax2
            return 2.0 * c * c * N * Q + m * m - 2.0 * fl2_eta / (amax2 * s**3)
    else:
        def P(Q):
            return c * c * N * Q * Q + m * m * Q - fl2_eta

        def dP(Q):
            return 2.0 * c * c * N * Q + m * m

    Q = fl2_eta / (m * m)
    # fixed-point contraction estimate at the seed; informational only: the
    # scalar quadratic has a unique nonnegative root and Newton from the
    # Lorentz seed converges monotonically even when this exceeds one
    contraction = 2.0 * c * c * N * abs(Q) / (m * m)
    scale = max(abs(fl2_eta), m * m * abs(Q), 1e-300)
    converged = False
    for _ in range(max_iter):
        resid = P(Q)
        if abs(resid) <= tol * scale:
            converged = True
            break
        Q = Q - resid / dP(Q)
    if not converged and abs(P(Q)) > tol * scale:
        raise NoConvergence(
            f"implicit acceleration solve did not converge "
            f"(contraction estimate {contraction:.3g})")

    if a_max is not None and Q >= a_max * a_max:
        raise MaximalAccelBreach(
            f"eta(a,a) = {Q:.6g} >= a_max^2 = {a_max * a_max:.6g}")
    eps = 0.0 if a_max is None else Q / (a_max * a_max)
    f = e * (raised_faraday(F, raising, eps) @ u)
    return (f - c * Q * u) / m


def operator_m(u, F, e, m):
    """M = m I + (2 e^3 / 3 m) u (F u)^T, the linearized implicit operator
    (the lowered force row makes the rank-1 part nilpotent)."""
    w = F @ u
    return m * np.eye(4) + (2.0 * e**3 / (3.0 * m)) * np.outer(u, w)


def operator_o(u, F, e, m):
    """Exact inverse of operator_m: O = (1/m) I - (2 e^3 / 3 m^3) u (F u)^T.

    (F u)^T u vanishes by antisymmetry, so the rank-1 update is nilpotent
    and M O = I exactly for every charge and mass.
    """
    w = F @ u
    return np.eye(4) / m - (2.0 * e**3 / (3.0 * m**3)) * np.outer(u, w)


def explicit_approx_accel(state, F, e, m):
    """Leading-order explicit form: the inverse operator applied to the
    Lorentz force, a = O (e F u). Equals the Lorentz acceleration minus
    (2 e^4 / 3 m^3) eta(f,f)/e^2 along u."""
    u = state.u if hasattr(state, "u") else state
    return operator_o(u, F, e, m) @ lorentz_force(F, e, u)


def connection_coeffs(u, F, e, m, a_max=None, eps=0.0):
    """Connection tensors (K, L) whose geodesic equation reproduces the
    explicit law: explicit_approx_accel == -(K + L) contracted with (u, u).

    K carries the inverse-norm factor -1/eta(u,u) (the conformal factor for
    a g-normalized state); L is the rank-one radiation piece.
    """
    if eps >= 1.0:
        raise DomainBreach(f"epsilon = {eps} >= 1")
    Fh = ETA @ F
    ul = ETA @ u
    chi = -1.0 / eta_dot(u, u)
    K = (e / (2.0 * m)) * chi * (
        np.einsum("mn,s->mns", Fh, ul) + np.einsum("ms,n->mns", Fh, ul))
    L = (2.0 * e**4 / (3.0 * m**3)) * np.einsum("m,ns->mns", u, Fh.T @ F)
    return K, L


def larmor_power(state, e):
    """Radiated four-momentum rate -(2/3) e^2 eta(a,a) u."""
    return -(2.0 / 3.0) * e * e * eta_dot(state.a, state.a) * state.u


def larmor_contraction_residual(u, a, e, m, eps):
    """Residual of the g-contracted energy balance of the implicit law,

    m g(a, u) - (2/3) e^2 eta(a,a),

    which vanishes identically on implicit-model solutions with
    future-pointing velocities.
    """
    return m * g_dot_eps(eps, a, u) - (2.0 / 3.0) * e * e * eta_dot(a, a)


def fl2_identity_residual(u, a, F, e, m, eps):
    """Relative residual of the force-magnitude identity

    fl2 = (2/3 e^2)^2 (a2)^2 / (1 - eps) + m^2 a2

    along implicit-model trajectories."""
    f = lorentz_force(F, e, u)
    fl2 = eta_dot(f, f)
    a2 = eta_dot(a, a)
    c = (2.0 / 3.0) * e * e
    predicted = c * c * a2 * a2 / (1.0 - eps) + m * m * a2
    return (fl2 - predicted) / max(abs(fl2), 1e-300)


def uniform_covariant_rhs(state, F, e, m, eps_dot, eps_dot_min=1e-8):
    """Lorentz-force acceleration of the uniform-acceleration stratum;
    valid only while |eps_dot| stays below eps_dot_min."""
    if abs(eps_dot) >= eps_dot_min:
        raise RegimeViolation(
            f"|eps_dot| = {abs(eps_dot):.3g} >= {eps_dot_min}: state left "
            f"the uniform-acceleration stratum")
    return lorentz_accel(state.u, F, e, m)
