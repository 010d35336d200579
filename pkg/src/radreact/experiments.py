"""Scenario configuration, canonical experiment recipes and the CLI.

Configs are single JSON files (documented in the README). Exit codes:
0 clean run, 2 configuration error, 3 convergence failure or stratum exit,
4 maximal-acceleration breach, 5 runaway abort, 6 acceptance failure.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field as dc_field
from typing import List, Optional

import numpy as np

from .diagnostics import (audit, epsilon0_scaling_study, loglog_fit,
                          fit_exponential_rate, preacceleration_probe,
                          scaling_fit)
from .dynamics import (ForceModelSpec, characteristic_time, operator_m,
                       operator_o)
from .errors import (ConfigError, IntegrationAbort, MaximalAccelBreach,
                     NoConvergence, RadReactError, RegimeViolation,
                     RunawayAbort)
from .fields import FieldSpec
from .integrator import SolverOptions, TrajectoryRecord, integrate
from .minkowski import eta_dot
from .worldline import (SampledCurve, WorldlineState, proper_time_maxaccel,
                        reparameterize)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_MAXACCEL_BREACH = 4
EXIT_RUNAWAY = 5
EXIT_ACCEPTANCE = 6


@dataclass
class RunConfig:
    model: ForceModelSpec
    field: FieldSpec
    init: WorldlineState
    tau_span: tuple
    solver: SolverOptions
    out_dir: str = "."
    trajectory_csv: str = "trajectory.csv"
    audit_json: str = "audit.json"
    seed: int = 0


def complete_initial_state(model, field_spec, x, v, a_spatial=None,
                           tau_start=0.0):
    """Complete a (position, 3-velocity) seed to a WorldlineState whose
    four-velocity satisfies the model's normalization exactly.

    For conformally normalized models the completion iterates, since the
    conformal factor depends on the solved acceleration.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    v2 = float(v @ v)
    if v2 >= 1.0:
        raise ConfigError("init.v must satisfy |v| < 1")
    gamma = 1.0 / math.sqrt(1.0 - v2)
    u = np.concatenate([[gamma], gamma * v])
    a = np.zeros(4)
    if a_spatial is not None:
        asp = np.asarray(a_spatial, dtype=float)
        # complete a0 so eta(a, u) = 0
        a = np.concatenate([[float(asp @ u[1:4]) / u[0]], asp])
    state = WorldlineState(x=x, u=u, a=a, tau=float(tau_start))
    if model.g_normalized:
        from .integrator import _Run
        run = _Run(model, field_spec, state, (tau_start, tau_start),
                   SolverOptions())
        y = np.concatenate([x, u])
        y, _ = run.renormalize(y, tau_start)
        state.u = y[4:8]
    return state


def load_config(path, overrides=None):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(raw, overrides or {})


def parse_config(raw, overrides=None):
    overrides = overrides or {}
    try:
        mraw = dict(raw["model"])
        fraw = dict(raw["field"])
        iraw = dict(raw.get("init", {}))
        span = raw["tau_span"]
    except KeyError as exc:
        raise ConfigError(f"config missing required section {exc}") from None

    sraw = dict(raw.get("solver", {}))
    for key in ("dt", "tol"):
        if key in overrides and overrides[key] is not None:
            sraw[key] = overrides[key]
    try:
        solver = SolverOptions(**sraw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver options invalid: {exc}") from None

    try:
        model = ForceModelSpec(
            model=mraw["name"], e=float(mraw["e"]), m=float(mraw["m"]),
            a_max=(float(mraw["a_max"]) if mraw.get("a_max") is not None
                   else None),
            raising=mraw.get("raising", "eta"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"model section invalid: {exc}") from None

    try:
        field_spec = FieldSpec.from_dict(fraw)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"field section invalid: {exc}") from None
    if field_spec.kind == "gaussian_pulse" and not field_spec.width > 0:
        raise ConfigError("field.width must be positive")

    if not (isinstance(span, (list, tuple)) and len(span) == 2
            and float(span[1]) > float(span[0])):
        raise ConfigError("tau_span must be [start, end] with end > start")

    init = complete_initial_state(
        model, field_spec,
        iraw.get("x", [0.0, 0.0, 0.0, 0.0]), iraw.get("v", [0.0, 0.0, 0.0]),
        iraw.get("a_spatial"), float(span[0]))

    out = raw.get("output", {})
    out_dir = overrides.get("out") or out.get("dir", ".")
    return RunConfig(
        model=model, field=field_spec, init=init,
        tau_span=(float(span[0]), float(span[1])), solver=solver,
        out_dir=out_dir,
        trajectory_csv=out.get("trajectory_csv", "trajectory.csv"),
        audit_json=out.get("audit_json", "audit.json"),
        seed=int(overrides.get("seed") if overrides.get("seed") is not None
                 else raw.get("seed", 0)))


def _write_outputs(cfg, record, report=None):
    os.makedirs(cfg.out_dir, exist_ok=True)
    record.to_csv(os.path.join(cfg.out_dir, cfg.trajectory_csv))
    if report is not None:
        report.to_json(os.path.join(cfg.out_dir, cfg.audit_json))


def cli_simulate(cfg):
    try:
        record = integrate(cfg.model, cfg.field, cfg.init, cfg.tau_span,
                           cfg.solver)
    except IntegrationAbort as exc:
        if exc.record is not None:
            _write_outputs(cfg, exc.record)
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, RunawayAbort):
            return EXIT_RUNAWAY
        if isinstance(exc, MaximalAccelBreach):
            return EXIT_MAXACCEL_BREACH
        return EXIT_NO_CONVERGENCE
    except RegimeViolation as exc:
        if exc.record is not None:
            _write_outputs(cfg, exc.record)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    report = audit(record, cfg.model, cfg.field, opts=cfg.solver)
    _write_outputs(cfg, record, report)
    return EXIT_OK


def cli_compare(cfg, model_names):
    """Run several models on one scenario; write one CSV per model and a
    gap summary JSON (sup-norm gaps against the first model)."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    records = {}
    failures = {}
    for name in model_names:
        spec = ForceModelSpec(model=name, e=cfg.model.e, m=cfg.model.m,
                              a_max=cfg.model.a_max, raising=cfg.model.raising)
        init = complete_initial_state(
            spec, cfg.field, cfg.init.x, cfg.init.u[1:4] / cfg.init.u[0],
            tau_start=cfg.tau_span[0])
        try:
            rec = integrate(spec, cfg.field, init, cfg.tau_span, cfg.solver)
            records[name] = rec
            rec.to_csv(os.path.join(cfg.out_dir, f"trajectory_{name}.csv"))
        except (IntegrationAbort, RegimeViolation) as exc:
            failures[name] = str(exc)
            if exc.record is not None:
                exc.record.to_csv(
                    os.path.join(cfg.out_dir, f"trajectory_{name}.csv"))

    summary = {"models": list(model_names), "failures": failures, "gaps": {}}
    names = [n for n in model_names if n in records]
    if len(names) >= 2:
        ref = records[names[0]]
        for name in names[1:]:
            rec = records[name]
            n = min(ref.tau.size, rec.tau.size)
            summary["gaps"][f"{names[0]}_vs_{name}"] = {
                "position_sup": float(np.max(np.abs(ref.x[:n] - rec.x[:n]))),
                "velocity_sup": float(np.max(np.abs(ref.u[:n] - rec.u[:n]))),
            }
    for name in names:
        summary.setdefault("eps0", {})[name] = float(
            np.max(records[name].epsilon))
    with open(os.path.join(cfg.out_dir, "gap_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if failures:
        print(f"partial results; failures: {failures}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


# ---------------------------------------------------------------------------
# canonical experiment recipes (shared by the CLI and the acceptance suite)
# ---------------------------------------------------------------------------

def _result(lines, ok, text):
    lines.append(("PASS " if ok else "FAIL ") + text)
    return ok


def canonical_pulse(seed=0, widths=(0.1, 0.01, 0.001), kappa=0.5,
                    e=1.0, m=1.0):
    """Regularized delta-pulse experiment: step-function response, no
    pre-acceleration, first-order-in-width convergence of the trajectory to
    the ideal step response."""
    lines = []
    rows = preacceleration_probe("implicit_maxaccel", widths, kappa, e, m)
    jump = kappa * characteristic_time(e, m)
    ok = True
    last = rows[-1]
    ok &= _result(lines, last.endpoint_error <= 1e-3,
                  f"post-pulse u1 -> {jump:.6g}: error "
                  f"{last.endpoint_error:.3e} <= 1e-3 at w={last.width:g}")
    pre_worst = max(r.pre_pulse_max for r in rows)
    ok &= _result(lines, pre_worst <= 1e-9,
                  f"pre-pulse max |u1| = {pre_worst:.3e} <= 1e-9")
    gaps = [r.trajectory_error for r in rows]
    mono = all(g1 > g2 for g1, g2 in zip(gaps, gaps[1:]))
    ok &= _result(lines, mono, "step-response gap decreases with width "
                  + str(["%.3e" % g for g in gaps]))
    slope, r2 = loglog_fit([r.width for r in rows], gaps)
    ok &= _result(lines, 0.8 <= slope <= 1.2,
                  f"width-convergence slope {slope:.3f} in [0.8, 1.2] "
                  f"(r2={r2:.4f})")
    return ok, lines


def canonical_runaway(seed=0):
    """Runaway contrast: the third-order law blows up field-free while the
    implicit law returns to zero acceleration as soon as the field is off."""
    lines = []
    ok = True

    # third-order law, field free, seeded acceleration: exponential growth
    e = m = 1.0
    rate_expected = 1.0 / characteristic_time(e, m)
    spec = ForceModelSpec(model="ald", e=e, m=m)
    init = WorldlineState(x=np.zeros(4), u=np.array([1.0, 0, 0, 0]),
                          a=np.array([0.0, 1e-6, 0.0, 0.0]), tau=0.0)
    opts = SolverOptions(dt=1e-3, runaway_factor=1e30)
    rec = integrate(spec, FieldSpec.vacuum(), init, (0.0, 9.0), opts)
    rate, r2 = fit_exponential_rate(rec.tau, np.abs(rec.a[:, 1]))
    ok &= _result(lines, abs(rate - rate_expected) <= 0.02 * rate_expected,
                  f"third-order growth rate {rate:.4f} within 2% of "
                  f"{rate_expected:g} (r2={r2:.6f})")

    # same run with the abort guard armed
    try:
        integrate(spec, FieldSpec.vacuum(), init, (0.0, 9.0),
                  SolverOptions(dt=1e-3, runaway_factor=1e6))
        aborted, partial = False, None
    except RunawayAbort as exc:
        aborted, partial = True, exc.record
    ok &= _result(lines, aborted and partial is not None
                  and partial.tau.size > 2,
                  "runaway abort fires and returns the partial trajectory")

    # implicit law: constant field until tau = 1, then vacuum
    spec_i = ForceModelSpec(model="implicit_maxaccel", e=e, m=m, a_max=1.0)
    field1 = FieldSpec.constant(e_field=(0.01, 0.0, 0.0))
    init_i = complete_initial_state(spec_i, field1, np.zeros(4), np.zeros(3))
    opts_i = SolverOptions(dt=1e-3)
    rec1 = integrate(spec_i, field1, init_i, (0.0, 1.0), opts_i)
    end = rec1.state_at(rec1.tau.size - 1)
    end.u = end.u / math.sqrt(-eta_dot(end.u, end.u))  # vacuum stratum norm
    rec2 = integrate(spec_i, FieldSpec.vacuum(), end,
                     (end.tau, end.tau + 2.0), opts_i)
    after = rec2.tau > 1.0 + opts_i.dt
    worst = float(np.max(rec2.a2[after]))
    ok &= _result(lines, worst <= 1e-12,
                  f"implicit law: a2 <= 1e-12 after switch-off "
                  f"(max {worst:.3e})")
    return ok, lines


HYPERBOLIC_CONVERGENCE_STEPS = (1e-2, 5e-3, 2.5e-3, 1.25e-3)


def hyperbolic_exact(tau):
    """Constant-field worldline for e = m = E = 1: x0 = sinh, x1 = cosh - 1."""
    tau = np.asarray(tau, dtype=float)
    zeros = np.zeros_like(tau)
    x = np.stack([np.sinh(tau), np.cosh(tau) - 1.0, zeros, zeros], axis=-1)
    u = np.stack([np.cosh(tau), np.sinh(tau), zeros, zeros], axis=-1)
    return x, u


def _hyperbolic_error(dt, tau_end=5.0):
    spec = ForceModelSpec(model="lorentz", e=1.0, m=1.0)
    field = FieldSpec.constant(e_field=(1.0, 0.0, 0.0))
    init = WorldlineState(x=np.zeros(4), u=np.array([1.0, 0, 0, 0]),
                          a=np.zeros(4), tau=0.0)
    rec = integrate(spec, field, init, (0.0, tau_end), SolverOptions(dt=dt))
    x_ex, u_ex = hyperbolic_exact(rec.tau)
    err = max(np.max(np.abs(rec.x - x_ex)), np.max(np.abs(rec.u - u_ex)))
    scale = max(np.max(np.abs(x_ex)), np.max(np.abs(u_ex)))
    return err, err / scale


def canonical_hyperbolic(seed=0):
    """Constant-field closed-form benchmark plus integrator order check."""
    lines = []
    ok = True
    _, rel = _hyperbolic_error(1e-3)
    ok &= _result(lines, rel <= 1e-8,
                  f"constant-field worldline max relative error "
                  f"{rel:.3e} <= 1e-8 at dt=1e-3")
    errs = [_hyperbolic_error(dt)[0] for dt in HYPERBOLIC_CONVERGENCE_STEPS]
    slope, r2 = loglog_fit(HYPERBOLIC_CONVERGENCE_STEPS, errs)
    ok &= _result(lines, 3.8 <= slope <= 4.2,
                  f"global error slope {slope:.3f} = 4.0 +- 0.2 "
                  f"(r2={r2:.4f})")
    return ok, lines


def random_monotone_maps(rng, n_maps, t0, t1, n_modes=3, strength=0.25):
    """Smooth strictly increasing reparameterizations of [t0, t1]."""
    span = t1 - t0
    maps = []
    for _ in range(n_maps):
        coeffs = rng.uniform(-1.0, 1.0, n_modes)
        phases = rng.uniform(0.0, 2.0 * np.pi, n_modes)
        ks = np.arange(1, n_modes + 1)
        # bound total |phi'| perturbation below `strength`
        norm = np.sum(np.abs(coeffs) * ks * np.pi / span)
        coeffs = coeffs * (strength / max(norm * span, 1e-12)) * span
        shift = rng.uniform(-0.2, 0.2) * span

        def mapping(t, c=coeffs, p=phases, k=ks, sh=shift):
            return t + sh + sum(
                ci * np.sin(ki * np.pi * (t - t0) / span + pi)
                for ci, pi, ki in zip(c, p, k))
        maps.append(mapping)
    return maps


def canonical_reparam(seed=0, n_maps=20, a_max=10.0):
    """Invariance of the bounded-acceleration proper time under smooth
    reparameterizations of a hyperbolic worldline."""
    lines = []
    t = np.linspace(-1.0, 1.0, 4001)
    zeros = np.zeros_like(t)
    curve = SampledCurve(
        t, np.stack([np.sinh(t), np.cosh(t), zeros, zeros], axis=-1))
    rng = np.random.default_rng(seed)
    values = [proper_time_maxaccel(curve, a_max)]
    for mapping in random_monotone_maps(rng, n_maps, -1.0, 1.0):
        values.append(
            proper_time_maxaccel(reparameterize(curve, mapping), a_max))
    values = np.array(values)
    spread = (values.max() - values.min()) / values.mean()
    ok = _result(lines, spread <= 1e-6,
                 f"proper-time spread over {n_maps} reparameterizations "
                 f"= {spread:.3e} <= 1e-6")
    return ok, lines


def random_state_and_field(rng):
    """Unit-scale random velocity/field/charge/mass draws used by the
    operator-identity sweep."""
    chi = rng.uniform(-1.0, 1.0, 3)
    r = np.linalg.norm(chi)
    if r < 1e-12:
        chi, r = np.array([1.0, 0.0, 0.0]), 1.0
    nhat = chi / r
    u = np.concatenate([[np.cosh(r)], np.sinh(r) * nhat])
    A = rng.uniform(-0.5, 0.5, (4, 4))
    F = A - A.T
    e = rng.choice([-1.0, 1.0]) * rng.uniform(0.75, 1.25)
    m = rng.uniform(0.75, 4.0 / 3.0)
    return u, F, e, m


def canonical_identity_suite(seed=0):
    """Algebraic identity battery: exact operator inverse, the
    force-magnitude identity, the contracted energy balance and the
    kinematic residuals along implicit-model runs."""
    lines = []
    ok = True
    rng = np.random.default_rng(seed)

    worst = 0.0
    for _ in range(1000):
        u, F, e, m = random_state_and_field(rng)
        MO = operator_m(u, F, e, m) @ operator_o(u, F, e, m)
        worst = max(worst, float(np.max(np.abs(MO - np.eye(4)))))
    ok &= _result(lines, worst <= 1e-13,
                  f"||M O - I||_inf = {worst:.3e} <= 1e-13 over 1000 draws")

    # healthy-scale constant-field implicit run at eps0 = 1e-4
    e = m = 1.0
    spec = ForceModelSpec(model="implicit_maxaccel", e=e, m=m, a_max=100.0)
    field = FieldSpec.constant(e_field=(1.0, 0.0, 0.0))
    init = complete_initial_state(spec, field, np.zeros(4), np.zeros(3))
    rec = integrate(spec, field, init, (0.0, 5.0), SolverOptions(dt=1e-3))
    eps0 = float(np.max(rec.epsilon))
    fl2_worst = float(np.max(np.abs(rec.fl2_residual)))
    ok &= _result(lines, fl2_worst <= 1e-6,
                  f"force-magnitude identity residual {fl2_worst:.3e} "
                  f"<= 1e-6 at eps0 = {eps0:.2e}")
    tau0 = characteristic_time(e, m)
    larmor_tol = 10.0 * eps0**2 * (m * float(np.max(rec.a2)) * tau0)
    larmor_worst = float(np.max(np.abs(rec.larmor_residual)))
    ok &= _result(lines, larmor_worst <= larmor_tol,
                  f"contracted energy balance residual {larmor_worst:.3e} "
                  f"<= {larmor_tol:.3e}")

    # radiation-dominated scales for the kinematic residual bound
    spec2 = ForceModelSpec(model="implicit_maxaccel", e=e, m=m, a_max=0.01)
    field2 = FieldSpec.constant(e_field=(1e-4, 0.0, 0.0))
    init2 = complete_initial_state(spec2, field2, np.zeros(4), np.zeros(3))
    rec2 = integrate(spec2, field2, init2, (0.0, 5.0), SolverOptions(dt=1e-3))
    report = audit(rec2, spec2, field2)
    worst_r = max(report.checks[k].max_residual
                  for k in ("normalization_r1", "kinematic_r2", "kinematic_r3"))
    ok &= _result(lines, worst_r <= 1e-7,
                  f"kinematic residuals max {worst_r:.3e} <= 1e-7 at "
                  f"eps0 = {np.max(rec2.epsilon):.2e}")
    return ok, lines


CANONICAL = {
    "pulse": canonical_pulse,
    "runaway": canonical_runaway,
    "hyperbolic": canonical_hyperbolic,
    "reparam": canonical_reparam,
    "identity_suite": canonical_identity_suite,
}


def cli_canonical(name, seed=0):
    if name not in CANONICAL:
        print(f"error: unknown canonical scenario {name!r}; choose from "
              f"{sorted(CANONICAL)}", file=sys.stderr)
        return EXIT_CONFIG
    ok, lines = CANONICAL[name](seed=seed)
    for line in lines:
        print(line)
    print(("PASS" if ok else "FAIL") + f" canonical:{name}")
    return EXIT_OK if ok else EXIT_ACCEPTANCE


def cli_audit(cfg, trajectory_path):
    try:
        record = TrajectoryRecord.from_csv(trajectory_path)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = audit(record, cfg.model, cfg.field, opts=cfg.solver)
    os.makedirs(cfg.out_dir, exist_ok=True)
    report.to_json(os.path.join(cfg.out_dir, cfg.audit_json))
    print(report.as_text())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="radreact",
        description="Charged-particle radiation-reaction simulator")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required)
        sp.add_argument("--out", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--dt", type=float, default=None)
        sp.add_argument("--tol", type=float, default=None)

    common(sub.add_parser("simulate", help="run one scenario"))
    cmp_p = sub.add_parser("compare", help="run several models on a scenario")
    common(cmp_p)
    cmp_p.add_argument("--model", action="append", default=[],
                       help="model name (repeatable)")
    can_p = sub.add_parser("canonical", help="run a named built-in scenario")
    can_p.add_argument("name", choices=sorted(CANONICAL))
    can_p.add_argument("--seed", type=int, default=0)
    aud_p = sub.add_parser("audit", help="audit a stored trajectory")
    common(aud_p)
    aud_p.add_argument("--trajectory", required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "canonical":
            return cli_canonical(args.name, seed=args.seed)
        overrides = {"out": args.out, "seed": args.seed, "dt": args.dt,
                     "tol": args.tol}
        cfg = load_config(args.config, overrides)
        if args.verb == "simulate":
            return cli_simulate(cfg)
        if args.verb == "compare":
            models = args.model or [cfg.model.model]
            return cli_compare(cfg, models)
        if args.verb == "audit":
            return cli_audit(cfg, args.trajectory)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RadReactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
