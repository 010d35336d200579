"""External electromagnetic field catalog and the worldline-valued
jet-correction two-form.

Faraday tensors are stored with both indices down, F[mu][nu] = F_{mu nu},
antisymmetric by construction. Sign convention: F_{i0} = E_i and
F_{ij} = eps_{ijk} B_k, chosen so a static charge in E = (E,0,0) feels
spatial force +eE xhat.

The catalog covers vacuum, constant E/B, a regularized delta pulse in the
evolution parameter, and a transverse plane wave. The pulse may be given
compact support (a hard cutoff at a configurable number of widths, with the
area renormalized) so impulse experiments have an exactly field-free
pre-pulse region.
"""

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .errors import DegenerateRegime
from .minkowski import ETA, eta_dot

_SQRT2PI = math.sqrt(2.0 * math.pi)


def faraday_from_e_b(e_field, b_field):
    """Assemble F_{mu nu} from 3-vectors E and B."""
    ex, ey, ez = e_field
    bx, by, bz = b_field
    return np.array([
        [0.0, -ex, -ey, -ez],
        [ex, 0.0, bz, -by],
        [ey, -bz, 0.0, bx],
        [ez, by, -bx, 0.0]])


ZERO_FIELD = faraday_from_e_b((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))


@dataclass
class FieldSpec:
    """Catalog entry for an external field; immutable after construction."""

    kind: str
    e0: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    b0: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    kappa: float = 0.0
    width: float = 1.0
    support_sigmas: Optional[float] = None
    center: float = 0.0
    wave_vector: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    phase: float = 0.0

    @classmethod
    def vacuum(cls):
        return cls(kind="vacuum")

    @classmethod
    def constant(cls, e_field=(0.0, 0.0, 0.0), b_field=(0.0, 0.0, 0.0)):
        return cls(kind="constant", e0=np.asarray(e_field, dtype=float),
                   b0=np.asarray(b_field, dtype=float))

    @classmethod
    def gaussian_pulse(cls, kappa, width, support_sigmas=None, center=0.0):
        """E_x(tau) = kappa/(width*sqrt(2 pi)) exp(-tau^2/2 width^2).

        The area under E_x is kappa for every width. With support_sigmas = S
        the profile is cut off at |tau - center| > S*width and rescaled so
        the area is still exactly kappa.
        """
        if not width > 0:
            raise ValueError("pulse width must be positive")
        return cls(kind="gaussian_pulse", kappa=float(kappa),
                   width=float(width), support_sigmas=support_sigmas,
                   center=float(center))

    @classmethod
    def plane_wave(cls, amplitude, wave_vector, phase=0.0):
        """Transverse wave E = E0 cos(k.x - w t + phase), B = khat x E,
        w = |k| (null propagation)."""
        e0 = np.asarray(amplitude, dtype=float)
        k = np.asarray(wave_vector, dtype=float)
        if np.linalg.norm(k) == 0:
            raise ValueError("plane wave needs a nonzero wave vector")
        if abs(np.dot(e0, k)) > 1e-12 * np.linalg.norm(e0) * np.linalg.norm(k):
            raise ValueError("plane-wave amplitude must be transverse to k")
        return cls(kind="plane_wave", e0=e0, wave_vector=k, phase=float(phase))

    def pulse_profile(self, tau):
        """Scalar E_x(tau) of the gaussian_pulse kind."""
        s = (tau - self.center) / self.width
        if self.support_sigmas is not None and abs(s) > self.support_sigmas:
            return 0.0
        amp = self.kappa / (self.width * _SQRT2PI)
        if self.support_sigmas is not None:
            amp /= math.erf(self.support_sigmas / math.sqrt(2.0))
        return amp * math.exp(-0.5 * s * s)

    def to_dict(self):
        return {
            "kind": self.kind,
            "e0": list(self.e0), "b0": list(self.b0),
            "kappa": self.kappa, "width": self.width,
            "support_sigmas": self.support_sigmas, "center": self.center,
            "wave_vector": list(self.wave_vector), "phase": self.phase,
        }

    @classmethod
    def from_dict(cls, d):
        kind = d["kind"]
        if kind == "vacuum":
            return cls.vacuum()
        if kind == "constant":
            return cls.constant(d.get("e0", (0, 0, 0)), d.get("b0", (0, 0, 0)))
        if kind == "gaussian_pulse":
            return cls.gaussian_pulse(d["kappa"], d["width"],
                                      d.get("support_sigmas"),
                                      d.get("center", 0.0))
        if kind == "plane_wave":
            return cls.plane_wave(d["e0"], d["wave_vector"], d.get("phase", 0.0))
        raise ValueError(f"unknown field kind {kind!r}")


def faraday_at(spec, x, tau):
    """Evaluate F_{mu nu} of a catalog entry at event x and parameter tau."""
    if spec.kind == "vacuum":
        return ZERO_FIELD.copy()
    if spec.kind == "constant":
        return faraday_from_e_b(spec.e0, spec.b0)
    if spec.kind == "gaussian_pulse":
        return faraday_from_e_b((spec.pulse_profile(tau), 0.0, 0.0),
                                (0.0, 0.0, 0.0))
    if spec.kind == "plane_wave":
        k = spec.wave_vector
        omega = np.linalg.norm(k)
        phi = k @ x[1:4] - omega * x[0] + spec.phase
        c = math.cos(phi)
        khat = k / omega
        return faraday_from_e_b(spec.e0 * c, np.cross(khat, spec.e0) * c)
    raise ValueError(f"unknown field kind {spec.kind!r}")


def lorentz_force(F, e, u):
    """e F^mu_nu u^nu with the index raised by eta. Antisymmetry makes the
    result eta-orthogonal to u."""
    return e * (ETA @ F @ u)


def lorentz_force_sq(F, e, u):
    """Squared magnitude of the Lorentz force, eta(f, f); spacelike or zero."""
    f = lorentz_force(F, e, u)
    return eta_dot(f, f)


def beta2_coefficient(a2, eps_dot, e, eps_dot_min=1e-8):
    """Jet coefficient beta_2 = (4/3) e^2 a2 / eps_dot of the second-order
    selection; undefined on the uniform stratum."""
    if abs(eps_dot) < eps_dot_min:
        raise DegenerateRegime(
            f"beta_2 needs |eps_dot| >= {eps_dot_min}, got {eps_dot}")
    return (4.0 / 3.0) * e * e * a2 / eps_dot


@dataclass
class JetCorrectionCoefficients:
    """Expansion coefficients of the worldline-valued correction two-form in
    the jet basis (velocity, acceleration, jerk). The second-order model
    keeps only beta_2; all gamma/delta coefficients vanish."""

    beta: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    gamma: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    delta: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))

    @classmethod
    def second_order(cls, beta2):
        return cls(beta=np.array([0.0, beta2, 0.0]))


def upsilon_worldline(coeffs, state, jerk, eps=0.0):
    """Antisymmetric correction two-form built from the jets of the state:

    Upsilon_{mu nu} = B_mu v_nu - B_nu v_mu + C_mu a_nu - C_nu a_mu
                      + D_mu j_nu - D_nu j_mu,

    with B, C, D expanded in the jet basis and all indices lowered with the
    conformal metric (1 - eps) eta.
    """
    jets = [state.u, state.a, jerk]
    B = sum(c * j for c, j in zip(coeffs.beta, jets))
    C = sum(c * j for c, j in zip(coeffs.gamma, jets))
    D = sum(c * j for c, j in zip(coeffs.delta, jets))
    gfac = 1.0 - eps
    lower = lambda v: gfac * (ETA @ v)
    out = np.zeros((4, 4))
    for vec, jet in ((B, state.u), (C, state.a), (D, jerk)):
        vl, jl = lower(vec), lower(jet)
        out += np.outer(vl, jl) - np.outer(jl, vl)
    return out
