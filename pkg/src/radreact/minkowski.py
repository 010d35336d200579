"""Exact Minkowski tensor algebra with signature (-,+,+,+).

Four-vectors are plain numpy arrays whose last axis has length 4, index 0
being the time component. Everything here is closed-form; geometric units
with c = 1 throughout.
"""

import numpy as np

from .errors import NormalizationError

SIGNATURE = (-1.0, 1.0, 1.0, 1.0)
ETA = np.diag(SIGNATURE)

_NORM_TOL = 1e-10


def four_vector(t, x, y, z):
    """Build a four-vector, rejecting NaN/Inf components."""
    v = np.array([t, x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("four-vector components must be finite")
    return v


def eta_dot(a, b):
    """Minkowski contraction eta_{mu nu} a^mu b^nu = -a0*b0 + a.b (spatial).

    Works on any arrays broadcastable over a trailing axis of length 4.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return (a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]
            + a[..., 3] * b[..., 3] - a[..., 0] * b[..., 0])


def lower(a):
    """Lower an index: negate the time component, keep spatial ones."""
    a = np.asarray(a, dtype=float)
    out = a.copy()
    out[..., 0] = -out[..., 0]
    return out


# Raising with eta^{mu nu} = diag(-1,1,1,1) is the same component map.
raise_index = lower


def norm_check(u, tol=_NORM_TOL):
    """Return eta(u,u) + 1, the deviation from unit timelike normalization."""
    return eta_dot(u, u) + 1.0


def projector_apply(u, v, tol=_NORM_TOL):
    """Project v onto the eta-orthogonal complement of a unit timelike u.

    P(v) = v + eta(u,v) u for eta(u,u) = -1, so eta(u, P(v)) = 0 and P is
    idempotent.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nrm = eta_dot(u, u)
    if abs(nrm + 1.0) > tol:
        raise NormalizationError(
            f"projector requires eta(u,u) = -1, got {nrm!r}")
    return v + eta_dot(u, v) * u
