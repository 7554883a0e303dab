"""Mixed nonlinear complementarity solver.

Finds ``z = [z_u; z_v]`` with ``g(z) = 0`` and ``0 <= z_v _|_ f(z) >= 0`` by
damped Newton on the smoothed Fischer-Burmeister system

    Phi_eps(z) = [ g(z) ; phi_eps(z_v, f(z)) ]

driven through a decreasing ladder of smoothing parameters.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError, PreconditionError

log = logging.getLogger(__name__)

_FB_KINK = 1.0 - 1.0 / math.sqrt(2.0)
STALL_WINDOW = 15  # iterations over which a stage must halve its merit
PRODUCT_TOL = 1e-8  # largest |z_v,i f_i| a converged point may keep


def fb(a, b, eps=0.0):
    """Smoothed Fischer-Burmeister function ``a + b - sqrt(a^2 + b^2 + eps^2)``."""
    if np.any(np.asarray(eps) < 0):
        raise PreconditionError("smoothing parameter must be nonnegative")
    return a + b - np.sqrt(a * a + b * b + eps * eps)


def fb_partials(a, b, eps=0.0):
    """Partial derivatives of :func:`fb`; the kink at the origin uses 1 - 1/sqrt(2)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = np.sqrt(a * a + b * b + eps * eps)
    zero = s == 0.0
    s_safe = np.where(zero, 1.0, s)
    da = np.where(zero, _FB_KINK, 1.0 - a / s_safe)
    db = np.where(zero, _FB_KINK, 1.0 - b / s_safe)
    return da, db


@dataclass
class MixedProblem:
    """``g(z_u, z_v) = 0`` and ``0 <= z_v _|_ f(z_u, z_v) >= 0``.

    ``jacobian``, when given, returns ``(Jg, Jf)`` with respect to the full
    stacked vector ``z``.  Indices in ``pinned`` replace their complementarity
    pair by the equation ``f_i = 0`` with ``z_v[i]`` left free.
    """

    n_u: int
    n_v: int
    equality_residual: Callable
    comp_residual: Callable
    jacobian: Optional[Callable] = None
    pinned: tuple = ()

    def free_mask(self):
        mask = np.ones(self.n_v, dtype=bool)
        mask[list(self.pinned)] = False
        return mask

    def split(self, z):
        return z[: self.n_u], z[self.n_u :]

    def residuals(self, z):
        zu, zv = self.split(z)
        g = np.asarray(self.equality_residual(zu, zv), dtype=float)
        f = np.asarray(self.comp_residual(zu, zv), dtype=float)
        return g, f


@dataclass
class SolverParams:
    tol_residual: float = 1e-10
    max_newton_iters: int = 200
    smoothing_schedule: tuple = (1e-3, 1e-6, 1e-9, 1e-12)
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    min_step: float = 1e-12
    jacobian_mode: str = "analytic"
    fd_step: float = 1e-7

    def __post_init__(self):
        self.smoothing_schedule = tuple(float(e) for e in self.smoothing_schedule)
        positive = (
            self.tol_residual, self.max_newton_iters, self.armijo_c,
            self.armijo_shrink, self.min_step, self.fd_step,
        )
        if any(not v > 0 for v in positive) or any(e <= 0 for e in self.smoothing_schedule):
            raise PreconditionError("solver parameters must be positive")
        if not self.smoothing_schedule or any(
            b >= a for a, b in zip(self.smoothing_schedule, self.smoothing_schedule[1:])
        ):
            raise PreconditionError("smoothing schedule must be strictly decreasing")
        if not self.armijo_shrink < 1:
            raise PreconditionError("armijo_shrink must lie in (0, 1)")
        if self.jacobian_mode not in ("analytic", "fd", "hybrid"):
            raise PreconditionError(f"unknown jacobian mode {self.jacobian_mode!r}")


@dataclass
class SolverReport:
    converged: bool = False
    stage_iterations: list = field(default_factory=list)
    residual_norm: float = math.inf
    complementarity_violation: float = math.inf
    backtracks: int = 0
    levenberg_steps: int = 0
    wall_time: float = 0.0
    merit_history: list = field(default_factory=list)
    skipped_stages: list = field(default_factory=list)
    jacobian_check: Optional[float] = None
    message: str = ""

    @property
    def iterations(self):
        return sum(self.stage_iterations)


def _phi(problem, z, eps):
    g, f = problem.residuals(z)
    zv = z[problem.n_u :]
    comp = fb(zv, f, eps)
    if problem.pinned:
        idx = list(problem.pinned)
        comp[idx] = f[idx]
    Phi = np.concatenate([g, comp])
    if not np.all(np.isfinite(Phi)):
        bad = int(np.flatnonzero(~np.isfinite(Phi))[0])
        raise EvaluationError(f"non-finite residual at row {bad}", index=bad)
    return Phi, g, f


def fd_jacobian(problem, z, step=1e-7):
    """Forward-difference Jacobian ``(Jg, Jf)`` of the raw residuals."""
    g0, f0 = problem.residuals(z)
    r0 = np.concatenate([g0, f0])
    J = np.empty((len(r0), len(z)))
    for j in range(len(z)):
        hj = step * max(1.0, abs(z[j]))
        zp = z.copy()
        zp[j] += hj
        g, f = problem.residuals(zp)
        col = (np.concatenate([g, f]) - r0) / hj
        if not np.all(np.isfinite(col)):
            raise EvaluationError(f"non-finite residual while probing variable {j}", index=j)
        J[:, j] = col
    return J[: problem.n_u], J[problem.n_u :]


def raw_jacobian(problem, z, mode="analytic", step=1e-7):
    if mode == "fd" or problem.jacobian is None:
        return fd_jacobian(problem, z, step)
    zu, zv = problem.split(z)
    return problem.jacobian(zu, zv)


def jacobian_deviation(problem, z, step=1e-7):
    """Max entrywise deviation ``|J_a - J_fd| / max(1, |J_fd|)``."""
    Ja = np.vstack(raw_jacobian(problem, z, "analytic"))
    Jf = np.vstack(fd_jacobian(problem, z, step))
    return float(np.max(np.abs(Ja - Jf) / np.maximum(1.0, np.abs(Jf))))


def jacobian(problem, z, mode="analytic", eps=0.0, step=1e-7):
    """Jacobian of the stacked smoothed system ``Phi_eps`` at ``z``."""
    z = np.asarray(z, dtype=float)
    Jg, Jf = raw_jacobian(problem, z, mode, step)
    zu, zv = problem.split(z)
    _, f = problem.residuals(z)
    da, db = fb_partials(zv, f, eps)
    if problem.pinned:
        idx = list(problem.pinned)
        da[idx] = 0.0
        db[idx] = 1.0
    Jc = db[:, None] * Jf
    Jc[:, problem.n_u :] += np.diag(da)
    return np.vstack([Jg, Jc])


RCOND = 1e-13


def _newton_direction(J, Phi):
    # minimum-norm Newton step: null directions of J (a contact point free to
    # slide over a face parallel to the support, say) receive no motion
    try:
        d = np.linalg.lstsq(J, -Phi, rcond=RCOND)[0]
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(d)):
        return None
    return d


def _line_search(problem, z, d, theta, slope, eps, params, report):
    t = 1.0
    while t >= params.min_step:
        try:
            Phi_t, _, _ = _phi(problem, z + t * d, eps)
        except EvaluationError:
            Phi_t = None
        if Phi_t is not None:
            theta_t = 0.5 * Phi_t @ Phi_t
            if theta_t <= theta + params.armijo_c * t * slope:
                return t
        t *= params.armijo_shrink
        report.backtracks += 1
    return None


def _grade(problem, z, params, report, stalled=False):
    Phi, g, f = _phi(problem, z, params.smoothing_schedule[-1])
    free = problem.free_mask()
    zv = z[problem.n_u :][free]
    f_pinned = f[~free]
    f = f[free]
    report.residual_norm = float(np.linalg.norm(Phi))
    report.complementarity_violation = float(
        max(0.0, -zv.min(initial=0.0), -f.min(initial=0.0), np.abs(zv * f).max(initial=0.0))
    )
    tol = params.tol_residual
    report.converged = bool(
        not stalled
        and report.residual_norm <= tol
        and np.abs(g).max(initial=0.0) <= tol
        and zv.min(initial=0.0) >= -tol
        and f.min(initial=0.0) >= -tol
        and np.abs(f_pinned).max(initial=0.0) <= tol
        and np.abs(zv * f).max(initial=0.0) <= PRODUCT_TOL
    )


def _project_multipliers(problem, z, params, report):
    # solutions within tolerance can carry multipliers of about -tol; zero
    # them when the projected point passes the same test
    free = np.zeros(len(z), dtype=bool)
    free[problem.n_u :] = problem.free_mask()
    if not np.any(z[free] < 0):
        return z
    zp = z.copy()
    zp[free] = np.maximum(zp[free], 0.0)
    trial = SolverReport()
    _grade(problem, zp, params, trial)
    if not trial.converged:
        return z
    report.residual_norm = trial.residual_norm
    report.complementarity_violation = trial.complementarity_violation
    return zp


def assess(problem, z, params=None):
    """Apply the convergence test of :func:`solve` to ``z`` without iterating."""
    params = params or SolverParams()
    report = SolverReport(stage_iterations=[0] * len(params.smoothing_schedule))
    _grade(problem, np.asarray(z, dtype=float), params, report)
    report.message = "converged" if report.converged else "not a solution"
    return report


def solve(problem, z0, params=None):
    """Solve a :class:`MixedProblem` from ``z0``; returns ``(z, SolverReport)``."""
    params = params or SolverParams()
    start = time.perf_counter()
    z = np.array(z0, dtype=float)
    if z.shape != (problem.n_u + problem.n_v,) or not np.all(np.isfinite(z)):
        raise PreconditionError("initial point must be finite with n_u + n_v entries")
    report = SolverReport()
    mode = "analytic" if params.jacobian_mode == "hybrid" else params.jacobian_mode
    if params.jacobian_mode == "hybrid" and problem.jacobian is not None:
        report.jacobian_check = jacobian_deviation(problem, z, params.fd_step)
        if report.jacobian_check > 1e-4:
            log.warning(
                "analytic Jacobian deviates from finite differences by %.3g; using FD",
                report.jacobian_check,
            )
            mode = "fd"
    total = 0
    stalled = False
    schedule = params.smoothing_schedule
    start_z = z.copy()
    for si, eps in enumerate(schedule):
        target = max(params.tol_residual, 10.0 * eps)
        last_stage = si == len(schedule) - 1
        iters = 0
        merits = []
        stage_failed = False
        while True:
            Phi, g, f = _phi(problem, z, eps)
            nrm = float(np.linalg.norm(Phi))
            merits.append(0.5 * nrm * nrm)
            if nrm <= target:
                break
            if total >= params.max_newton_iters:
                stalled = True
                report.message = "iteration budget exhausted"
                break
            # a stage that stops making progress is abandoned (see below)
            if len(merits) > STALL_WINDOW and merits[-1] > 0.5 * merits[-1 - STALL_WINDOW]:
                stage_failed = True
                break
            J = jacobian(problem, z, mode, eps, params.fd_step)
            theta = 0.5 * nrm * nrm
            d = _newton_direction(J, Phi)
            t = None
            if d is not None:
                t = _line_search(problem, z, d, theta, float((J.T @ Phi) @ d), eps, params, report)
            if t is None:
                grad = J.T @ Phi
                JtJ = J.T @ J
                lam = 1e-10
                while lam <= 1e-2 and t is None:
                    try:
                        d = np.linalg.solve(JtJ + lam * np.eye(len(z)), -grad)
                    except np.linalg.LinAlgError:
                        d = None
                    if d is not None and np.all(np.isfinite(d)) and grad @ d < 0:
                        t = _line_search(problem, z, d, theta, grad @ d, eps, params, report)
                    if t is None:
                        lam *= 10.0
                report.levenberg_steps += 1
            if t is None:
                stage_failed = True
                break
            z = z + t * d
            iters += 1
            total += 1
        report.stage_iterations.append(iters)
        report.merit_history.append(merits)
        if stalled:
            break
        if stage_failed:
            if last_stage:
                stalled = True
                report.message = f"no progress at eps={eps:g}"
                break
            # the smoothed path led somewhere unproductive: restart the rest of
            # the ladder from the caller's initial point with less smoothing
            report.skipped_stages.append(eps)
            z = start_z.copy()

    _grade(problem, z, params, report, stalled)
    if report.converged:
        report.message = "converged"
        z = _project_multipliers(problem, z, params, report)
    report.wall_time = time.perf_counter() - start
    return z, report
