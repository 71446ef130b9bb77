"""Single-step POVM, Bayesian state updates and Rabi rotation.

Every update accepts either a :class:`~qtraj.core.BlochVector` (and returns
one) or an array of shape ``(..., 3)`` with broadcastable outcomes, so the
same code path serves single records and vectorized ensembles.
"""

from __future__ import annotations

import math

import numpy as np

from .core import Axis, BlochVector, MeasurementConfig, as_state_array

_SQRT_2PI = math.sqrt(2 * math.pi)


def _wrap(q, out: np.ndarray):
    return BlochVector(*out) if isinstance(q, BlochVector) else out


def _gaussian(r, center, var):
    r = np.asarray(r, dtype=float)
    return np.exp(-((r - center) ** 2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)


def povm_weight(r, eigen: int, config: MeasurementConfig):
    """Outcome density ``Tr(Omega_r |i><i| Omega_r^dag)`` for the eigenstate ``eigen = +-1``."""
    return _gaussian(r, float(eigen), config.tau / config.dt)


def marginal_density(q, r, config: MeasurementConfig):
    """Probability density of outcome ``r`` for a qubit in state ``q``.

    For a z-measurement this is the two-component Gaussian mixture weighted by
    the populations; the phi-quadrature carries no population information and
    is a zero-centred Gaussian whatever the state.
    """
    var = config.tau / config.dt
    if config.axis is Axis.PHI:
        return _gaussian(r, 0.0, var)
    z = as_state_array(q)[..., 2]
    return 0.5 * (1 + z) * _gaussian(r, 1.0, var) + 0.5 * (1 - z) * _gaussian(r, -1.0, var)


def update_z_array(q: np.ndarray, r, ratio, decay) -> np.ndarray:
    """Vectorized z-measurement update.

    ``ratio`` is ``dt/tau`` and ``decay`` is ``exp(-gamma dt)``; both may be
    arrays broadcasting against ``r``. Populations follow Bayes' rule in
    log-odds form, so poles are exact fixed points and nothing underflows to
    0/0. The coherence keeps its azimuthal phase and scales by
    ``sqrt(1 - z'^2) / sqrt(1 - z^2) * decay``.
    """
    q = np.asarray(q, dtype=float)
    u = np.asarray(r, dtype=float) * ratio
    z = q[..., 2]
    with np.errstate(divide="ignore"):
        lp0 = np.log1p(z) - math.log(2.0)
        lp1 = np.log1p(-z) - math.log(2.0)
    w0 = lp0 + u
    w1 = lp1 - u
    # log(cosh u + z sinh u), the normalizer of the Bayes update
    log_norm = np.logaddexp(w0, w1)
    z_new = np.tanh(0.5 * (w0 - w1))
    scale = np.exp(-log_norm) * decay
    out = np.empty(np.broadcast_shapes(q.shape, np.shape(u) + (3,)))
    out[..., 0] = q[..., 0] * scale
    out[..., 1] = q[..., 1] * scale
    out[..., 2] = z_new
    return out


def update_phi_array(q: np.ndarray, r, ratio, decay) -> np.ndarray:
    """Vectorized phi-measurement update: rotate by ``-r dt/tau`` about z, then dephase."""
    q = np.asarray(q, dtype=float)
    u = np.asarray(r, dtype=float) * ratio
    c = np.cos(u) * decay
    s = np.sin(u) * decay
    out = np.empty(np.broadcast_shapes(q.shape, np.shape(u) + (3,)))
    out[..., 0] = q[..., 0] * c + q[..., 1] * s
    out[..., 1] = q[..., 1] * c - q[..., 0] * s
    out[..., 2] = q[..., 2]
    return out


def rabi_rotate_array(q: np.ndarray, theta) -> np.ndarray:
    """Rotate about +y by ``theta``; positive angles carry +z toward +x."""
    q = np.asarray(q, dtype=float)
    c = np.cos(theta)
    s = np.sin(theta)
    out = np.empty(np.broadcast_shapes(q.shape, np.shape(theta) + (3,)))
    out[..., 0] = q[..., 0] * c + q[..., 2] * s
    out[..., 1] = q[..., 1]
    out[..., 2] = q[..., 2] * c - q[..., 0] * s
    return out


def update_z(q, r, config: MeasurementConfig):
    """Bayesian state update after a z-measurement outcome ``r``.

    Starting from ``(1, 0, 0)`` this gives ``z' = tanh(r dt/tau)`` and
    ``x' = sqrt(1 - z'^2) exp(-gamma dt)``.
    """
    out = update_z_array(as_state_array(q), r, config.strength_ratio, config.decay)
    return _wrap(q, out)


def update_phi(q, r, config: MeasurementConfig):
    """Bayesian state update after a phi-measurement outcome ``r``; ``z`` is untouched."""
    out = update_phi_array(as_state_array(q), r, config.strength_ratio, config.decay)
    return _wrap(q, out)


def rabi_rotate(q, theta):
    return _wrap(q, rabi_rotate_array(as_state_array(q), theta))


def measurement_update(q, r, config: MeasurementConfig):
    """Dispatch to :func:`update_z` or :func:`update_phi` according to ``config.axis``."""
    if config.axis is Axis.PHI:
        return update_phi(q, r, config)
    return update_z(q, r, config)


def step_kernel(axis: Axis):
    return update_phi_array if axis is Axis.PHI else update_z_array
