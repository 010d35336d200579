"""Maximal-acceleration bookkeeping: the ratio eps = eta(a,a)/a_max^2, the
conformal worldline metric g = (1 - eps) eta, kinematic-constraint residuals,
and the bare-mass ledger.

eps plays a double role: it is both the domain coordinate of g (which is
degenerate at eps = 1) and the small parameter of the perturbative force
model; its trajectory maximum eps0 is the bookkeeping bound.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainBreach
from .minkowski import eta_dot


@dataclass
class MaxAccelParams:
    """Configuration for the acceleration bound.

    a_max is required wherever the bound enters the dynamics; there is no
    default because the bound may be system dependent. eps_dot_min flags the
    degenerate (uniform-acceleration) regime where 1/eps_dot formulas break.
    """

    a_max: float
    eps_dot_min: float = 1e-8

    def __post_init__(self):
        if not self.a_max > 0:
            raise ValueError("a_max must be positive")


def epsilon(accel, params):
    """eps = eta(a, a) / a_max^2 for an acceleration four-vector (or an
    (n,4) array of them)."""
    return eta_dot(accel, accel) / params.a_max**2


def epsilon_of_state(state, params):
    return epsilon(state.a, params)


def epsilon0(eps_values):
    """Trajectory bookkeeping bound: the maximum of eps along the run."""
    return float(np.max(eps_values))


def g_dot(state, params, a, b):
    """Conformal metric contraction g(a, b) = (1 - eps) eta(a, b) at a
    worldline state. Raises DomainBreach at or beyond eps = 1."""
    eps = epsilon_of_state(state, params)
    return g_dot_eps(eps, a, b)


def g_dot_eps(eps, a, b):
    if np.any(np.asarray(eps) >= 1.0):
        raise DomainBreach(f"epsilon = {eps!r} >= 1: conformal metric degenerate")
    return (1.0 - eps) * eta_dot(a, b)


def kinematic_residuals(state, jerk, eps_dot, params, eps_ddot=0.0):
    """Residuals (r1, r2, r3) of the three kinematic constraints of the
    conformal normalization g(u,u) = -1.

    r1 = g(u,u) + 1
    r2 = g(a,u) - (eps_dot/2) eta(u,u)
    r3 = g(jerk,u) + g(a,a) - [d/dtau(eps_dot eta(u,u)/2) + eps_dot]

    The d/dtau term is expanded with the supplied eps_ddot; callers obtain
    eps_dot and eps_ddot by finite differences (or analytically when the
    model carries a jerk).
    """
    eps = epsilon_of_state(state, params)
    u, a = state.u, state.a
    uu = eta_dot(u, u)
    r1 = g_dot_eps(eps, u, u) + 1.0
    r2 = g_dot_eps(eps, a, u) - 0.5 * eps_dot * uu
    ddtau_term = 0.5 * (eps_ddot * uu + eps_dot * 2.0 * eta_dot(a, u))
    r3 = (g_dot_eps(eps, jerk, u) + g_dot_eps(eps, a, a)
          - (ddtau_term + eps_dot))
    return r1, r2, r3


@dataclass
class MassLedgerEntry:
    """One row of the bare-mass ledger.

    m_b absorbs the jet-correction term so the observable mass m stays
    constant: m_b + (2/3) e^2 a2 / eps_dot = m wherever eps_dot is usable.
    Rows where |eps_dot| < eps_dot_min are flagged degenerate (m_b = nan);
    rows with eps = 0 pin m_b = m exactly.
    """

    tau: float
    m_b: float
    m: float
    epsilon: float
    epsilon_dot: float
    degenerate: bool
    constraint_residual: float = float("nan")


_EPS_ZERO = 1e-300


def mass_ledger(traj, e, m, eps_dot_min=1e-8, a_max=None):
    """Build the bare-mass ledger from a trajectory record.

    The trajectory must carry per-row epsilon, epsilon_dot and a2 (the
    acceleration square). Also reports, by finite differences, the residual
    of the first-derivative constraint
    d/dtau[m_b] + (2/3) e^2 a_max^2 d/dtau[eps/eps_dot].
    """
    tau = np.asarray(traj.tau, dtype=float)
    eps = np.asarray(traj.epsilon, dtype=float)
    eps_dot = np.asarray(traj.epsilon_dot, dtype=float)
    a2 = np.asarray(traj.a2, dtype=float)
    if a_max is None:
        a_max = traj.meta.get("a_max") if hasattr(traj, "meta") else None
    coeff = (2.0 / 3.0) * e * e

    n = tau.size
    m_b = np.full(n, np.nan)
    degenerate = np.zeros(n, dtype=bool)
    zero_eps = np.abs(eps) <= _EPS_ZERO
    usable = (~zero_eps) & (np.abs(eps_dot) >= eps_dot_min)
    m_b[zero_eps] = m
    m_b[usable] = m - coeff * a2[usable] / eps_dot[usable]
    degenerate[~(zero_eps | usable)] = True

    residual = np.full(n, np.nan)
    if a_max is not None and np.count_nonzero(usable) >= 3:
        ratio = np.full(n, np.nan)
        ratio[usable] = eps[usable] / eps_dot[usable]
        good = usable & np.isfinite(m_b)
        if np.count_nonzero(good) >= 3:
            idx = np.flatnonzero(good)
            dmb = np.gradient(m_b[idx], tau[idx])
            drat = np.gradient(ratio[idx], tau[idx])
            residual[idx] = dmb + coeff * a_max**2 * drat

    return [MassLedgerEntry(tau=float(tau[i]), m_b=float(m_b[i]), m=float(m),
                            epsilon=float(eps[i]), epsilon_dot=float(eps_dot[i]),
                            degenerate=bool(degenerate[i]),
                            constraint_residual=float(residual[i]))
            for i in range(n)]


def ledger_to_csv(entries, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "m_b", "epsilon", "epsilon_dot", "degenerate_flag"])
        for row in entries:
            w.writerow(["%.17g" % row.tau, "%.17g" % row.m_b,
                        "%.17g" % row.epsilon, "%.17g" % row.epsilon_dot,
                        int(row.degenerate)])
