"""Negative gradient flows of the moment-map norm square.

Two flows are integrated with an adaptive Dormand-Prince 5(4) pair:

* the projective flow of F = |m|^2 on the unit sphere (renormalized after
  every accepted step), and
* the Kempf-Ness flow v' = -act(m~(v), v) on V, which shrinks |v| and stops
  at minimal vectors.
"""
from dataclasses import dataclass, field
from enum import Enum
import logging
import math
from typing import Optional

import numpy as np

from .moment_core import (
    GroupTag, critical_residual, derealify, moment_matrix, projective_field, realify,
    stabilizer_basis,
)

logger = logging.getLogger(__name__)


class FlowStatus(str, Enum):
    CONVERGED = "Converged"
    MAX_TIME = "MaxTime"
    STALLED = "Stalled"
    DIVERGED = "Diverged"


@dataclass(frozen=True)
class FlowConfig:
    tol_grad: float = 1e-10
    tol_residual: float = 1e-8
    max_flow_time: float = 1e4
    rk_rel_tol: float = 1e-9
    rk_abs_tol: float = 1e-12
    max_steps: int = 10**6
    record_stride: int = 1
    # F may rise by at most this much over an accepted projective step
    monotone_slack: float = 1e-12
    stall_window: int = 10**4
    # Kempf-Ness: |v| / |v0| below this, with m~ not decaying, suggests the null cone
    null_cone_shrink: float = 1e-2
    bucket_tol: float = 1e-6
    # group integration re-anchors once cond(g) exceeds this
    anchor_cond: float = 10.0

    def __post_init__(self):
        for name in ("tol_grad", "tol_residual", "max_flow_time", "rk_rel_tol",
                     "rk_abs_tol", "monotone_slack", "null_cone_shrink", "bucket_tol",
                     "anchor_cond"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if self.max_steps < 1 or self.record_stride < 1 or self.stall_window < 1:
            raise ValueError("max_steps, record_stride and stall_window must be >= 1")


@dataclass
class FlowResult:
    limit_point: np.ndarray
    status: FlowStatus
    f_history: list
    gradnorm_history: list
    norm_history: list
    time_history: list
    elapsed_flow_time: float
    accepted_steps: int
    rejected_steps: int
    certificate: Optional[object]
    kind: str
    model: object = field(repr=False)
    samples: dict = field(default_factory=dict)
    max_f_increase: float = 0.0
    max_sphere_error: float = 0.0
    message: str = ""

    @property
    def converged(self):
        return self.status is FlowStatus.CONVERGED


class FlowError(ValueError):
    pass


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = _A[6]
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def dopri_step(rhs, y, h, k1):
    """One Dormand-Prince step from y with first stage k1 = rhs(y).

    Returns ``(y_new, error_vector, k7)``; k7 = rhs(y_new) is reused as the
    next first stage.
    """
    ks = [k1]
    for i in range(1, 7):
        yi = y.copy()
        for a, k in zip(_A[i], ks):
            if a:
                yi += (h * a) * k
        ks.append(rhs(yi))
    y_new = y.copy()
    for b, k in zip(_B, ks[:6]):
        if b:
            y_new += (h * b) * k
    err = np.zeros_like(y)
    for e, k in zip(_E, ks):
        if e:
            err += (h * e) * k
    return y_new, err, ks[6]


def _error_norm(err, y, y_new, cfg, tighten=1.0):
    scale = tighten * (cfg.rk_abs_tol + cfg.rk_rel_tol * np.maximum(np.abs(y), np.abs(y_new)))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _tightening(residual, cfg):
    """Factor on the local tolerances near an equilibrium.

    Local errors of size rk_rel_tol kick the state off the critical set, so
    the stopping quantity would plateau near rk_rel_tol.  Keeping the allowed
    error a hundred times below the current residual removes that floor; the
    field shrinks with the residual, so step sizes barely change.  Callers
    keep the running minimum: loosening again when the residual grows would
    let an instability at the stability boundary feed itself.
    """
    return min(1.0, max(1e-2 * residual / cfg.rk_rel_tol, 1e-5))


def _step_factor(err_norm):
    if err_norm == 0.0:
        return 5.0
    return min(5.0, max(0.2, 0.9 * err_norm ** -0.2))


def integrate(rhs, y0, t_end, cfg, h0=None):
    """Plain adaptive integration of y' = rhs(y) to t_end; returns y(t_end).

    Used for checks; the flows below run their own step loop.
    """
    y = np.array(y0, dtype=float)
    t = 0.0
    k1 = rhs(y)
    h = h0 or min(t_end, 1e-3)
    while t < t_end:
        h = min(h, t_end - t)
        y_new, err, k7 = dopri_step(rhs, y, h, k1)
        en = _error_norm(err, y, y_new, cfg)
        if en <= 1.0:
            t += h
            y, k1 = y_new, k7
        h *= _step_factor(en)
    return y


def _initial_step(speed, t_next):
    h = 1e-2 / max(1.0, speed)
    return min(h, t_next) if t_next is not None else h


class _DirectStepper:
    """State is the vector itself."""

    def __init__(self, model, v0, algebra_field):
        self.model = model
        self.algebra_field = algebra_field

        def rhs(y):
            return model.act(algebra_field(y), y)

        self.rhs = rhs
        self.y = v0.copy()

    def point(self, y):
        return y

    def rescale(self, y, factor):
        return y * factor

    def maybe_anchor(self, y):
        return y, False


class _GroupStepper:
    """State is a group element g; the point is g . base.

    Every computed point is an exact group translate of the base, so rounding
    never pushes the trajectory off the orbit.  The algebra field is projected
    off the stabilizer of the point (which is g stab(base) g^-1), otherwise g
    drifts along it without bound and amplifies the rounding in the base.
    When g still becomes badly conditioned the current point becomes the new
    base and g resets to 1.
    """

    def __init__(self, model, v0, algebra_field, anchor_cond, gauge_basis):
        self.model = model
        self.size = model.matrix_size
        self.anchor_cond = anchor_cond
        self.gauge_basis = gauge_basis
        self._set_base(v0)
        size = self.size

        def rhs(y):
            g = y.reshape(size, size)
            X = algebra_field(model.group_act(g, self.base))
            if self.stab is not None:
                ginv = np.linalg.inv(g)
                T = (g @ self.stab @ ginv).reshape(len(self.stab), -1).T
                coef = np.linalg.lstsq(T, X.ravel(), rcond=None)[0]
                X = X - (T @ coef).reshape(size, size)
            return (X @ g).ravel()

        self.rhs = rhs
        self.y = np.eye(size).ravel()

    def _set_base(self, v):
        self.base = v
        if self.gauge_basis is None:
            self.stab = None
            return
        stab = stabilizer_basis(self.model, v, self.gauge_basis)
        self.stab = np.stack(stab) if stab else None

    def point(self, y):
        return self.model.group_act(y.reshape(self.size, self.size), self.base)

    def rescale(self, y, factor):
        # scalar c acts on V as c ** identity_weight
        return y * factor ** (1.0 / self.model.identity_weight)

    def maybe_anchor(self, y):
        if self.model.is_complex:
            # rounding leaves a tiny anti-linear part in g; drop it
            y = realify(derealify(y.reshape(self.size, self.size))).ravel()
        if np.linalg.cond(y.reshape(self.size, self.size)) <= self.anchor_cond:
            return y, False
        self._set_base(self.point(y))
        return np.eye(self.size).ravel(), True


def _gauge_basis(model, with_unit):
    basis = list(model.algebra_basis)
    if not basis:
        return None
    if with_unit:
        unit = np.eye(model.matrix_size)
        A = np.stack([X.ravel() for X in basis], axis=1)
        resid = unit.ravel() - A @ np.linalg.lstsq(A, unit.ravel(), rcond=None)[0]
        if np.linalg.norm(resid) > 1e-12:
            basis.append(unit)
    return basis


def _stepper(model, v0, algebra_field, method, cfg, with_unit=False):
    if method == "auto":
        method = "group" if (model.group_act is not None and model.identity_weight) else "direct"
    if method == "group":
        if model.group_act is None or not model.identity_weight:
            raise FlowError("group integration needs group_act and identity_weight on the model")
        return _GroupStepper(model, v0, algebra_field, cfg.anchor_cond,
                             _gauge_basis(model, with_unit))
    if method == "direct":
        return _DirectStepper(model, v0, algebra_field)
    raise ValueError(f"unknown integration method {method!r}")


def flow_projective(model, v0, cfg=FlowConfig(), *, scale=1.0, t_eval=None, method="auto"):
    """Negative gradient flow of ``scale * F`` on the unit sphere of V.

    ``method='group'`` (the default when the model knows its group action)
    integrates g' = X(g.v0) g with act(X(v), v) = -scale grad F(v);
    ``method='direct'`` integrates v' = -scale grad F(v) in V.  Either way the
    point is renormalized after every accepted step.

    With ``t_eval`` the states at those times are stored in
    ``result.samples`` and the flow is not stopped before the last of them.
    """
    v = model.check_vector(v0).copy()
    r = model.norm(v)
    if r == 0.0:
        raise FlowError("cannot flow from the zero vector")
    v /= r

    if model.identity_weight:
        unit = np.eye(model.matrix_size) / model.identity_weight  # act(unit, v) = v
    else:
        unit = None

    def algebra_field(y):
        M = moment_matrix(model, y)
        nsq = model.inner_v(y, y)
        msq = model.inner_g(M, M)
        coef = -scale * 4.0 / nsq**2
        if unit is None:
            # direct mode only: the radial term is applied through the vector
            return coef * M
        return coef * (M - (msq / nsq) * unit)

    stepper = _stepper(model, v, algebra_field, method, cfg, with_unit=True)
    if isinstance(stepper, _DirectStepper):
        def rhs(y):
            return projective_field(model, y, scale)[0]
        stepper.rhs = rhs

    times = sorted(float(t) for t in (t_eval or ()))
    samples = {}
    if times and times[0] == 0.0:
        samples[0.0] = v.copy()
    pending = [t for t in times if t > 0.0]

    y = stepper.y
    k1 = stepper.rhs(y)
    _, F, gnorm = projective_field(model, v, scale)
    t = 0.0
    h = _initial_step(gnorm * scale, pending[0] if pending else None)
    f_hist, g_hist, n_hist, t_hist = [F], [gnorm], [1.0], [0.0]
    accepted = rejected = 0
    max_rise = 0.0
    max_sphere = 0.0
    checkpoint = gnorm
    tight = 1.0
    status = None
    message = ""

    while True:
        if gnorm < cfg.tol_grad and not pending:
            status = FlowStatus.CONVERGED
            break
        if t >= cfg.max_flow_time or accepted + rejected >= cfg.max_steps:
            status = FlowStatus.MAX_TIME
            break
        h = min(h, cfg.max_flow_time - t)
        if pending:
            h = min(h, pending[0] - t)
        y_new, err, k7 = dopri_step(stepper.rhs, y, h, k1)
        if not np.all(np.isfinite(y_new)):
            status = FlowStatus.DIVERGED
            message = "non-finite state"
            break
        tight = min(tight, _tightening(gnorm, cfg))
        en = _error_norm(err, y, y_new, cfg, tight)
        if en > 1.0:
            rejected += 1
            h *= _step_factor(en)
            continue
        v_new = stepper.point(y_new)
        r_new = model.norm(v_new)
        if not (math.isfinite(r_new) and r_new > 0.0):
            status = FlowStatus.DIVERGED
            message = "degenerate state"
            break
        y_new = stepper.rescale(y_new, 1.0 / r_new)
        v_new = stepper.point(y_new)
        _, F_new, g_new = projective_field(model, v_new, scale)
        if not (math.isfinite(F_new) and math.isfinite(g_new)):
            status = FlowStatus.DIVERGED
            message = "non-finite F"
            break
        rise = F_new - F
        if rise > cfg.monotone_slack:
            # descent failed within tolerance: retry with a smaller step
            rejected += 1
            h *= 0.5
            continue
        max_rise = max(max_rise, rise)
        max_sphere = max(max_sphere, abs(model.norm(v_new) - 1.0))
        t += h
        accepted += 1
        y, v, F, gnorm = y_new, v_new, F_new, g_new
        y, _ = stepper.maybe_anchor(y)
        # the state was rescaled, so the FSAL stage is stale
        k1 = stepper.rhs(y)
        if pending and t >= pending[0] - 1e-14 * max(1.0, t):
            t = pending.pop(0)
            samples[t] = v.copy()
        if accepted % cfg.record_stride == 0:
            f_hist.append(F)
            g_hist.append(gnorm)
            n_hist.append(model.norm(v))
            t_hist.append(t)
        if accepted % cfg.stall_window == 0:
            if gnorm > 0.99 * checkpoint and gnorm >= cfg.tol_grad:
                status = FlowStatus.STALLED
                message = f"gradient norm stuck near {gnorm:.3g}"
                break
            checkpoint = gnorm
        h *= _step_factor(en)

    if t_hist[-1] != t:
        f_hist.append(F)
        g_hist.append(gnorm)
        n_hist.append(model.norm(v))
        t_hist.append(t)
    cert = critical_residual(model, v, cfg.bucket_tol)
    if status is FlowStatus.CONVERGED and cert.residual >= cfg.tol_residual:
        status = FlowStatus.STALLED
        message = f"gradient small but residual {cert.residual:.3g} above tolerance"
    return FlowResult(
        limit_point=v, status=status, f_history=f_hist, gradnorm_history=g_hist,
        norm_history=n_hist, time_history=t_hist, elapsed_flow_time=t,
        accepted_steps=accepted, rejected_steps=rejected, certificate=cert,
        kind="projective", model=model, samples=samples,
        max_f_increase=max_rise, max_sphere_error=max_sphere, message=message,
    )


def flow_kempf_ness(model, v0, cfg=FlowConfig(), *, method="auto"):
    """Flow v' = -act(m~(v), v) on V towards a minimal vector.

    Converged means |m~(v)| < tol_grad |v|^2, i.e. a minimal vector was
    found.  Diverged with a shrinking norm is only a null-cone indication.
    """
    if model.group_tag is GroupTag.GL_REAL and model.bracket_n is not None:
        raise FlowError(
            "Kempf-Ness flow needs the SL model: under GL, tr m~(mu) = -|mu|^2 so m~ never vanishes"
        )
    v = model.check_vector(v0).copy()
    r0 = model.norm(v)
    if r0 == 0.0:
        raise FlowError("cannot flow from the zero vector")

    def algebra_field(y):
        return -moment_matrix(model, y)

    stepper = _stepper(model, v, algebra_field, method, cfg)
    y = stepper.y
    k1 = stepper.rhs(y)
    M = moment_matrix(model, v)
    mnorm = float(np.sqrt(model.inner_g(M, M)))
    nsq = r0 * r0
    t = 0.0
    h = min(1e-2 / max(1.0, mnorm), 1.0)
    f_hist, g_hist, n_hist, t_hist = [mnorm**2 / nsq**2], [mnorm / nsq], [r0], [0.0]
    accepted = rejected = 0
    max_rise = 0.0
    checkpoint = mnorm / nsq
    tight = 1.0
    status = None
    message = ""

    while True:
        ratio = mnorm / nsq
        if ratio < cfg.tol_grad:
            status = FlowStatus.CONVERGED
            message = "minimal vector"
            break
        if np.sqrt(nsq) / r0 < cfg.null_cone_shrink:
            status = FlowStatus.DIVERGED
            message = (f"norm shrank to {np.sqrt(nsq) / r0:.3g} of its start while "
                       f"|m|/|v|^2 = {ratio:.3g}: null cone suspected")
            break
        if t >= cfg.max_flow_time or accepted + rejected >= cfg.max_steps:
            status = FlowStatus.MAX_TIME
            break
        h = min(h, cfg.max_flow_time - t)
        y_new, err, k7 = dopri_step(stepper.rhs, y, h, k1)
        if not np.all(np.isfinite(y_new)):
            status = FlowStatus.DIVERGED
            message = "non-finite state"
            break
        tight = min(tight, _tightening(ratio, cfg))
        en = _error_norm(err, y, y_new, cfg, tight)
        if en > 1.0:
            rejected += 1
            h *= _step_factor(en)
            continue
        v_new = stepper.point(y_new)
        new_nsq = model.inner_v(v_new, v_new)
        max_rise = max(max_rise, new_nsq - nsq)
        t += h
        accepted += 1
        y, v, nsq = y_new, v_new, new_nsq
        y, anchored = stepper.maybe_anchor(y)
        k1 = stepper.rhs(y) if anchored else k7
        M = moment_matrix(model, v)
        mnorm = float(np.sqrt(model.inner_g(M, M)))
        if accepted % cfg.record_stride == 0:
            f_hist.append(mnorm**2 / nsq**2)
            g_hist.append(mnorm / nsq)
            n_hist.append(float(np.sqrt(nsq)))
            t_hist.append(t)
        if accepted % cfg.stall_window == 0:
            if mnorm / nsq > 0.99 * checkpoint:
                status = FlowStatus.STALLED
                message = "moment ratio not decreasing"
                break
            checkpoint = mnorm / nsq
        h *= _step_factor(en)

    if t_hist[-1] != t:
        f_hist.append(mnorm**2 / nsq**2)
        g_hist.append(mnorm / nsq)
        n_hist.append(float(np.sqrt(nsq)))
        t_hist.append(t)
    cert = critical_residual(model, v, cfg.bucket_tol) if nsq > 0 else None
    return FlowResult(
        limit_point=v, status=status, f_history=f_hist, gradnorm_history=g_hist,
        norm_history=n_hist, time_history=t_hist, elapsed_flow_time=t,
        accepted_steps=accepted, rejected_steps=rejected, certificate=cert,
        kind="kempf_ness", model=model, max_f_increase=max_rise, message=message,
    )


def omega_limit_representative(result, tol_residual=None):
    """Certificate at the computed omega-limit point of a converged flow."""
    if result.status is not FlowStatus.CONVERGED:
        raise FlowError(f"flow did not converge (status {result.status.value})")
    tol = FlowConfig().tol_residual if tol_residual is None else tol_residual
    cert = critical_residual(result.model, result.limit_point)
    if cert.residual >= tol:
        raise FlowError(f"limit point residual {cert.residual:.3g} exceeds {tol:.3g}")
    return cert
