"""Time stepping with invariant monitoring.

Second-order laws evolve (x, u); the third-order law evolves (x, u, a).
After every accepted step the velocity is rescaled along itself to restore
the model's unit-norm condition (eta or conformal g, as the law requires)
and the rescale magnitude is logged. Runs abort with a partial trajectory
attached on maximal-acceleration breach, failed implicit solves, detected
runaway growth (third-order law only) and stratum exit (uniform law only).
"""

from dataclasses import dataclass, field as dc_field
from typing import List, Optional

import numpy as np

from .dynamics import (DiagnosticsRow, ald_rhs, characteristic_time,
                       explicit_approx_accel, landau_lifshitz_accel,
                       lorentz_accel, larmor_contraction_residual,
                       fl2_identity_residual, solve_implicit_accel)
from .errors import (MaximalAccelBreach, NoConvergence, NormalizationError,
                     RegimeViolation, RunawayAbort)
from .fields import faraday_at, lorentz_force
from .minkowski import eta_dot
from .worldline import WorldlineState

CSV_COLUMNS = ["tau", "x0", "x1", "x2", "x3", "u0", "u1", "u2", "u3",
               "a0", "a1", "a2", "a3", "epsilon", "epsilon_dot", "a_sq",
               "fL2", "m_b", "larmor_residual", "g_norm_residual"]


@dataclass
class SolverOptions:
    method: str = "rk4_fixed"       # rk4_fixed | rk45_adaptive
    dt: float = 1e-3                # fixed step, or initial step if adaptive
    tol: float = 1e-12              # implicit-root and adaptive error tolerance
    max_iter: int = 50
    eps_dot_min: float = 1e-8
    runaway_factor: float = 1e6

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.method not in ("rk4_fixed", "rk45_adaptive"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class Event:
    kind: str       # uniform_stratum_entry | uniform_stratum_exit |
                    # maxaccel_breach | runaway_abort | no_convergence |
                    # isolated_eps_dot_zero | stratum_exit
    tau: float
    detail: str = ""


@dataclass
class TrajectoryRecord:
    """Time series of states plus per-step invariant residuals."""

    tau: np.ndarray
    x: np.ndarray
    u: np.ndarray
    a: np.ndarray
    a2: np.ndarray
    epsilon: np.ndarray
    epsilon_dot: np.ndarray
    fl2: np.ndarray
    fl2_residual: np.ndarray
    larmor_residual: np.ndarray
    g_norm_residual: np.ndarray
    m_b: np.ndarray
    rescale: np.ndarray
    jerk: Optional[np.ndarray] = None
    events: List[Event] = dc_field(default_factory=list)
    meta: dict = dc_field(default_factory=dict)

    def state_at(self, i):
        jerk = None if self.jerk is None else self.jerk[i]
        return WorldlineState(x=self.x[i].copy(), u=self.u[i].copy(),
                              a=self.a[i].copy(), jerk=jerk,
                              tau=float(self.tau[i]))

    def diagnostics_row(self, i):
        return DiagnosticsRow(
            tau=float(self.tau[i]), a2=float(self.a2[i]),
            epsilon=float(self.epsilon[i]),
            epsilon_dot=float(self.epsilon_dot[i]), fl2=float(self.fl2[i]),
            fl2_identity_residual=float(self.fl2_residual[i]),
            larmor_residual=float(self.larmor_residual[i]),
            g_norm_residual=float(self.g_norm_residual[i]))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for i in range(self.tau.size):
                vals = [self.tau[i], *self.x[i], *self.u[i], *self.a[i],
                        self.epsilon[i], self.epsilon_dot[i], self.a2[i],
                        self.fl2[i], self.m_b[i], self.larmor_residual[i],
                        self.g_norm_residual[i]]
                fh.write(",".join("%.17g" % v for v in vals) + "\n")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        n = data.shape[0]
        return cls(tau=data[:, 0], x=data[:, 1:5], u=data[:, 5:9],
                   a=data[:, 9:13], epsilon=data[:, 13],
                   epsilon_dot=data[:, 14], a2=data[:, 15], fl2=data[:, 16],
                   m_b=data[:, 17], larmor_residual=data[:, 18],
                   g_norm_residual=data[:, 19],
                   fl2_residual=np.zeros(n), rescale=np.zeros(n))


def _noise_floor(u):
    """Cancellation noise of eta(u,u) in float64; rescaling below this level
    only injects roundoff, so renormalization is skipped there."""
    return 32.0 * np.finfo(float).eps * float(np.sum(u * u))


def _eta_renormalize(u):
    resid = eta_dot(u, u) + 1.0
    if abs(resid) <= _noise_floor(u):
        return u, 0.0
    nrm = np.sqrt(-eta_dot(u, u))
    return u / nrm, abs(nrm - 1.0)


def _g_renormalize(u, accel_of, a_max, tol=1e-14, max_iter=10):
    """Rescale u along itself until (1 - eps(a(u))) eta(u,u) = -1, with the
    acceleration (and hence eps) recomputed self-consistently."""
    total = 1.0
    floor = _noise_floor(u)
    for _ in range(max_iter):
        a = accel_of(u)
        eps = eta_dot(a, a) / a_max**2
        target = (1.0 - eps) * (-eta_dot(u, u))
        if abs(target - 1.0) <= max(tol, floor):
            break
        lam = 1.0 / np.sqrt(target)
        u = lam * u
        total *= lam
    return u, abs(total - 1.0)


def _rk4_increment(y, tau, dt, rhs):
    k1 = rhs(tau, y, 0)
    k2 = rhs(tau + 0.5 * dt, y + 0.5 * dt * k1, 1)
    k3 = rhs(tau + 0.5 * dt, y + 0.5 * dt * k2, 2)
    k4 = rhs(tau + dt, y + dt * k3, 3)
    return (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_step(y, tau, dt, rhs):
    return y + _rk4_increment(y, tau, dt, rhs)


# Dormand-Prince 5(4) tableau: 4th-order error estimate on the 5th-order
# propagated solution.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784,
                   11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


def _dp54_step(y, tau, dt, rhs):
    k = [rhs(tau, y, 0)]
    for i in range(1, 7):
        yi = y + dt * sum(a * kk for a, kk in zip(_DP_A[i], k))
        k.append(rhs(tau + _DP_C[i] * dt, yi, i))
    y5 = y + dt * sum(b * kk for b, kk in zip(_DP_B5, k))
    y4 = y + dt * sum(b * kk for b, kk in zip(_DP_B4, k))
    return y5, np.max(np.abs(y5 - y4))


class _Run:
    """One integration: packing/unpacking, model dispatch, monitoring."""

    def __init__(self, model, field_spec, init, tau_span, opts):
        self.model = model
        self.field = field_spec
        self.opts = opts
        self.tau0_char = characteristic_time(model.e, model.m)
        self.third_order = model.model == "ald"
        self.tau_start, self.tau_end = tau_span
        self.init = init
        self.rows = []
        self.events = []
        self.uniform_eps_prev = None

    # -- model dispatch ----------------------------------------------------

    def accel(self, x, u, tau, stage=None):
        m = self.model
        F = faraday_at(self.field, x, tau)
        if m.model == "lorentz" or m.model == "uniform_covariant":
            return lorentz_accel(u, F, m.e, m.m, m.raising, 0.0)
        if m.model == "landau_lifshitz":
            st = WorldlineState(x=x, u=u, a=np.zeros(4), tau=tau)
            return landau_lifshitz_accel(st, self.field, m.e, m.m, tau)
        if m.model == "explicit_approx":
            return explicit_approx_accel(u, F, m.e, m.m)
        if m.model == "implicit_maxaccel":
            st = WorldlineState(x=x, u=u, a=np.zeros(4), tau=tau)
            try:
                return solve_implicit_accel(
                    st, F, m.e, m.m, tol=self.opts.tol,
                    max_iter=self.opts.max_iter, a_max=m.a_max,
                    raising=m.raising)
            except NoConvergence as exc:
                raise NoConvergence(
                    f"{exc} (stage {stage}, tau={tau:.6g})",
                    record=None) from None
        raise ValueError(f"no acceleration rule for {m.model!r}")

    def rhs(self, tau, y, stage):
        if self.third_order:
            x, u, a = y[0:4], y[4:8], y[8:12]
            F = faraday_at(self.field, x, tau)
            j = ald_rhs(WorldlineState(x=x, u=u, a=a, tau=tau), F,
                        self.model.e, self.model.m)
            return np.concatenate([u, a, j])
        x, u = y[0:4], y[4:8]
        return np.concatenate([u, self.accel(x, u, tau, stage)])

    # -- normalization -----------------------------------------------------

    def renormalize(self, y, tau):
        x = y[0:4]
        u = y[4:8]
        if self.model.g_normalized:
            u, mag = _g_renormalize(
                u, lambda uu: self.accel(x, uu, tau), self.model.a_max)
        else:
            u, mag = _eta_renormalize(u)
        out = y.copy()
        out[4:8] = u
        if self.third_order:
            # keep the acceleration eta-orthogonal to the rescaled velocity
            a = out[8:12]
            out[8:12] = a + eta_dot(a, u) * u
        return out, mag

    def norm_residual(self, u, eps):
        if self.model.g_normalized:
            return (1.0 - eps) * eta_dot(u, u) + 1.0
        return eta_dot(u, u) + 1.0

    # -- recording ----------------------------------------------------------

    def record(self, tau, y, rescale):
        m = self.model
        x, u = y[0:4], y[4:8]
        if self.third_order:
            a = y[8:12]
            F = faraday_at(self.field, x, tau)
            jerk = ald_rhs(WorldlineState(x=x, u=u, a=a, tau=tau), F, m.e, m.m)
        else:
            a = self.accel(x, u, tau)
            jerk = None
        F = faraday_at(self.field, x, tau)
        a2 = eta_dot(a, a)
        eps = a2 / m.a_max**2 if m.a_max else 0.0
        f = lorentz_force(F, m.e, u)
        fl2 = eta_dot(f, f)
        self.rows.append((tau, x.copy(), u.copy(), a.copy(), a2, eps, fl2,
                          fl2_identity_residual(u, a, F, m.e, m.m, eps),
                          larmor_contraction_residual(u, a, m.e, m.m, eps),
                          self.norm_residual(u, eps), rescale,
                          None if jerk is None else jerk.copy()))
        return a2, eps

    def monitor(self, tau, y, a2, eps):
        m, opts = self.model, self.opts
        if m.a_max is not None and a2 >= m.a_max**2:
            self.events.append(Event("maxaccel_breach", tau,
                                     f"eta(a,a) = {a2:.6g}"))
            raise MaximalAccelBreach(
                f"acceleration bound breached at tau = {tau:.6g}",
                record=self.finalize())
        if self.third_order:
            F = faraday_at(self.field, y[0:4], tau)
            a2_init = self.rows[0][4]
            if (np.max(np.abs(F)) <= 1e-14
                    and a2 > opts.runaway_factor * max(a2_init, 1e-30)):
                self.events.append(Event("runaway_abort", tau,
                                         f"a2/a2_init > {opts.runaway_factor:g}"))
                raise RunawayAbort(
                    f"runaway growth detected at tau = {tau:.6g}",
                    record=self.finalize())
        if m.model == "uniform_covariant" and len(self.rows) >= 2:
            t_prev, eps_prev = self.rows[-2][0], self.rows[-2][5]
            eps_dot = (eps - eps_prev) / (tau - t_prev)
            if abs(eps_dot) >= opts.eps_dot_min:
                self.events.append(Event(
                    "stratum_exit", tau, f"|eps_dot| = {abs(eps_dot):.3g}"))
                raise RegimeViolation(
                    f"uniform-acceleration stratum left at tau = {tau:.6g}",
                    record=self.finalize())

    def finalize(self):
        m = self.model
        n = len(self.rows)
        cols = list(zip(*self.rows))
        tau = np.array(cols[0])
        rec = TrajectoryRecord(
            tau=tau,
            x=np.array(cols[1]), u=np.array(cols[2]), a=np.array(cols[3]),
            a2=np.array(cols[4]), epsilon=np.array(cols[5]),
            epsilon_dot=np.zeros(n),
            fl2=np.array(cols[6]), fl2_residual=np.array(cols[7]),
            larmor_residual=np.array(cols[8]),
            g_norm_residual=np.array(cols[9]),
            m_b=np.full(n, m.m), rescale=np.array(cols[10]),
            jerk=np.array(cols[11]) if self.third_order else None,
            events=self.events,
            meta={"model": m.model, "e": m.e, "m": m.m, "a_max": m.a_max,
                  "raising": m.raising, "field": self.field.to_dict(),
                  "dt": self.opts.dt, "method": self.opts.method})
        _fill_derived(rec, m, self.opts)
        return rec


def _fill_derived(rec, model, opts):
    """Post-pass: eps_dot (analytic from the jerk when present, finite
    differences otherwise) and the bare-mass column."""
    n = rec.tau.size
    if n >= 3:
        if rec.jerk is not None and model.a_max:
            rec.epsilon_dot = 2.0 * eta_dot(rec.jerk, rec.a) / model.a_max**2
        elif model.a_max:
            rec.epsilon_dot = np.gradient(rec.epsilon, rec.tau)
    coeff = (2.0 / 3.0) * model.e**2
    m_b = np.full(n, np.nan)
    zero = rec.epsilon == 0.0
    usable = (~zero) & (np.abs(rec.epsilon_dot) >= opts.eps_dot_min)
    m_b[zero] = model.m
    m_b[usable] = model.m - coeff * rec.a2[usable] / rec.epsilon_dot[usable]
    rec.m_b = m_b


def integrate(model, field_spec, init, tau_span, opts=None):
    """Integrate one force model through a catalog field.

    init must satisfy the model's normalization within 1e-8; it is snapped
    to the exact constraint before the first step. Returns a
    TrajectoryRecord with one diagnostics row per accepted step; aborts
    carry the partial record.
    """
    if opts is None:
        opts = model.solver if model.solver is not None else SolverOptions()
    run = _Run(model, field_spec, init, tau_span, opts)

    y = (np.concatenate([init.x, init.u, init.a]) if run.third_order
         else np.concatenate([init.x, init.u]))
    tau = float(tau_span[0])
    tau_end = float(tau_span[1])

    eps0 = 0.0
    if model.g_normalized:
        a0 = run.accel(init.x, init.u, tau)
        eps0 = eta_dot(a0, a0) / model.a_max**2
    resid = run.norm_residual(init.u, eps0)
    if abs(resid) > 1e-8:
        raise NormalizationError(
            f"initial velocity violates the model normalization by {resid:.3g}")
    y, _ = run.renormalize(y, tau)

    a2, eps = run.record(tau, y, 0.0)
    run.monitor(tau, y, a2, eps)

    dt = opts.dt
    comp = np.zeros_like(y)  # compensated accumulation of the y-updates
    while tau < tau_end - 1e-14 * max(1.0, abs(tau_end)):
        if opts.method == "rk4_fixed":
            step = min(dt, tau_end - tau)
            inc = _rk4_increment(y, tau, step, run.rhs) - comp
            y_new = y + inc
            comp = (y_new - y) - inc
            tau_new = tau + step
        else:
            step = min(dt, tau_end - tau)
            while True:
                y_try, err = _dp54_step(y, tau, step, run.rhs)
                scale = opts.tol * (1.0 + np.max(np.abs(y)))
                if err <= scale or step <= 1e-14 * max(1.0, abs(tau)):
                    break
                step = max(0.2 * step,
                           0.9 * step * (scale / err) ** 0.2)
            y_new, tau_new = y_try, tau + step
            if err > 0:
                dt = min(5.0 * step,
                         max(0.2 * step, 0.9 * step * (scale / err) ** 0.2))
            else:
                dt = 5.0 * step
        y_renorm, rescale = run.renormalize(y_new, tau_new)
        if np.any(y_renorm != y_new):
            comp[4:] = 0.0  # compensation is stale once u (or a) is rescaled
        y, tau = y_renorm, tau_new
        a2, eps = run.record(tau, y, rescale)
        run.monitor(tau, y, a2, eps)

    rec = run.finalize()
    rec.events = rec.events + detect_events(rec, opts)
    return rec


def step_implicit(state, model, field_spec, dt, opts=None):
    """Advance one worldline state by a single fixed step of the implicit
    law; stage evaluations solve the implicit root at each stage point."""
    if opts is None:
        opts = SolverOptions(dt=dt)
    run = _Run(model, field_spec, state, (state.tau, state.tau + dt), opts)
    y = np.concatenate([state.x, state.u])
    y = _rk4_step(y, state.tau, dt, run.rhs)
    y = np.concatenate([y[0:4], run.renormalize(y, state.tau + dt)[0][4:8]])
    a = run.accel(y[0:4], y[4:8], state.tau + dt)
    return WorldlineState(x=y[0:4], u=y[4:8], a=a, tau=state.tau + dt)


def detect_events(traj, opts):
    """Classify the eps_dot series of a finished trajectory: localized
    isolated zeros (continuation points) and sustained uniform strata."""
    events = []
    tau = traj.tau
    ed = traj.epsilon_dot
    n = tau.size
    if n < 3:
        return events
    small = np.abs(ed) < opts.eps_dot_min

    # sustained strata: contiguous runs of at least 3 small-|eps_dot| samples
    in_stratum = False
    start = 0
    for i in range(n):
        if small[i] and not in_stratum:
            in_stratum, start = True, i
        elif not small[i] and in_stratum:
            in_stratum = False
            if i - start >= 3:
                events.append(Event("uniform_stratum_entry", float(tau[start])))
                events.append(Event("uniform_stratum_exit", float(tau[i - 1])))
    if in_stratum and n - start >= 3:
        events.append(Event("uniform_stratum_entry", float(tau[start])))
        events.append(Event("uniform_stratum_exit", float(tau[n - 1])))

    # sign changes: localize the zero by linear interpolation
    for i in range(n - 1):
        if ed[i] == 0.0 or ed[i] * ed[i + 1] >= 0.0:
            continue
        t_zero = tau[i] - ed[i] * (tau[i + 1] - tau[i]) / (ed[i + 1] - ed[i])
        isolated = True
        if i > 0 and small[i - 1]:
            isolated = False
        if i + 2 < n and small[i + 2]:
            isolated = False
        kind = "isolated_eps_dot_zero" if isolated else "uniform_stratum_entry"
        if isolated:
            events.append(Event(kind, float(t_zero), "continuation point"))
    return events
