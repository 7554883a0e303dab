"""Per-step assembly of the contact complementarity problem and time stepping.

Unknowns of one step (``m`` hull constraints, ``mg`` support constraints)::

    z_u = [nu (6), a1 (3), a2 (3), p_t, p_o, p_r]
    z_v = [l_F (m), l_G (mg), p_n, sigma]

The moving body's pose inside the residual is the end-of-step pose produced
by the kinematic update from the unknown velocity, so contact geometry,
wrench bases and friction directions are all evaluated at the end of the step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import contact as cm
from .errors import IntegrityError, PreconditionError, StepError
from .friction import dissipation, ellipsoid_slack
from .geometry import Pose, extreme_point_samples, seed_closest_points
from .math_core import (
    RigidState,
    coriolis_wrench,
    frame_from_normal,
    integrate_pose,
    rotation_increment,
    rotation_increment_jacobian,
    skew,
    world_inertia,
    wrench_basis,
)
from .mncp import MixedProblem, SolverParams, assess, solve

log = logging.getLogger(__name__)

NONPEN_TOL = 1e-8
INITIAL_MULTIPLIER = 1e-6
SEPARATION_TOL = 1e-9
# normal impulses below this are solver noise, not contact
CONTACT_TOL = 1e-10


class StepLayout:
    """Index bookkeeping for the stacked unknown vector."""

    def __init__(self, m, mg):
        self.m, self.mg = m, mg
        self.n_u = 15
        self.n_v = m + mg + 2
        self.v = slice(0, 3)
        self.w = slice(3, 6)
        self.nu = slice(0, 6)
        self.a1 = slice(6, 9)
        self.a2 = slice(9, 12)
        self.pt, self.po, self.pr = 12, 13, 14
        self.lF = slice(15, 15 + m)
        self.lG = slice(15 + m, 15 + m + mg)
        self.pn = 15 + m + mg
        self.sigma = self.pn + 1
        self.size = self.sigma + 1

    def pack(self, nu, a1, a2, p_t, p_o, p_r, l_F, l_G, p_n, sigma):
        z = np.empty(self.size)
        z[self.nu] = nu
        z[self.a1] = a1
        z[self.a2] = a2
        z[[self.pt, self.po, self.pr]] = p_t, p_o, p_r
        z[self.lF] = l_F
        z[self.lG] = l_G
        z[self.pn] = p_n
        z[self.sigma] = sigma
        return z


class StepProblem:
    """Residuals and analytic Jacobian of one time step.

    Exposes a :class:`~ecpsim.mncp.MixedProblem` through :attr:`problem`.
    """

    def __init__(self, state, scenario, active_k, t, friction_free=False):
        self.state = state
        self.friction_free = friction_free
        self.sc = scenario
        self.F = scenario.body
        self.G = scenario.support
        self.k = int(active_k)
        self.h = scenario.h
        self.fp = scenario.friction
        self.lay = StepLayout(len(self.F), len(self.G))
        self.M = world_inertia(state.orientation, scenario.mass, scenario.inertia_matrix)
        self.nu_u = state.nu
        self.x_u = state.position
        self.R_u = state.rotation
        wrench = scenario.applied(t) + scenario.gravity_wrench()
        self.p_ext = self.h * wrench + self.h * coriolis_wrench(self.M, self.nu_u)
        self.curved_support = not self.G.is_polytope
        self._cache_key = None
        self._cache = None
        # k names a constraint the contact point lies on, so f_k(a1) = 0 is
        # imposed outright; as a complementarity pair it would admit
        # penetrating solutions with a1 = a2 on another face
        self.problem = MixedProblem(
            self.lay.n_u, self.lay.n_v, self._eq, self._comp, self._jac, pinned=self._pinned()
        )

    @property
    def frictionless(self):
        return self.fp.mu == 0.0 or self.friction_free

    def _pinned(self):
        # with a point cone (mu = 0, or p_n = 0 in flight) zeta = -|p|^2 has a
        # double root; the friction impulses and sigma are then set to zero
        if self.frictionless:
            return (self.k, self.lay.n_v - 1)
        return (self.k,)

    # -- geometry at the end-of-step pose ------------------------------------

    def end_pose(self, nu):
        x = self.x_u + self.h * nu[:3]
        R = rotation_increment(nu[3:], self.h) @ self.R_u
        return x, R

    def frame(self, a2):
        vals, grads, _ = self.G.world_all(a2, hessians=False)
        return frame_from_normal(grads[int(np.argmax(vals))])

    def _frame_derivative(self, a2):
        """Columns d(n, t, o)/d a2_j by central differences (curved supports only)."""
        dn = np.zeros((3, 3))
        dt = np.zeros((3, 3))
        do = np.zeros((3, 3))
        step = 1e-7
        for j in range(3):
            e = np.zeros(3)
            e[j] = step
            fp, fm = self.frame(a2 + e), self.frame(a2 - e)
            dn[:, j] = (fp.n - fm.n) / (2 * step)
            dt[:, j] = (fp.t - fm.t) / (2 * step)
            do[:, j] = (fp.o - fm.o) / (2 * step)
        return dn, dt, do

    # -- evaluation -------------------------------------------------------------

    def evaluate(self, z, need_jac=True):
        key = (z.tobytes(), need_jac)
        if self._cache_key == key or (
            not need_jac and self._cache_key == (z.tobytes(), True)
        ):
            return self._cache
        out = self._evaluate(z, need_jac)
        self._cache_key = (z.tobytes(), need_jac)
        self._cache = out
        return out

    def _evaluate(self, z, need_jac):
        L, h, k, fp = self.lay, self.h, self.k, self.fp
        m, mg = L.m, L.mg
        nu = z[L.nu]
        v, w = nu[:3], nu[3:]
        a1, a2 = z[L.a1], z[L.a2]
        pt, po, pr = z[L.pt], z[L.po], z[L.pr]
        lF, lG = z[L.lF], z[L.lG]
        pn, sigma = z[L.pn], z[L.sigma]

        x, R = self.end_pose(nu)
        d1 = a1 - x
        vals1, gb1, Hb1 = self.F.local_all(R.T @ d1, hessians=need_jac)
        g1 = gb1 @ R.T
        valsG, gG, HG = self.G.world_all(a2, hessians=need_jac)
        jG = int(np.argmax(valsG))
        fr = frame_from_normal(gG[jG])
        n, t, o = fr.n, fr.t, fr.o

        weights = lF.copy()
        weights[k] = 1.0
        gradC = weights @ g1
        lk = lF[k]

        force = n * pn + t * pt + o * po
        r = d1
        dyn = -self.M @ (nu - self.nu_u) + self.p_ext
        dyn[:3] += force
        dyn[3:] += np.cross(r, force) + n * pr

        c1 = a1 - a2 + lk * gradC
        c2 = gradC + lG @ gG

        vel_pt = v + np.cross(w, r)
        slip = np.array([t @ vel_pt, o @ vel_pt, n @ w])
        e2mu = fp.e2 * fp.mu
        fric = e2mu * pn * slip + np.array([pt, po, pr]) * sigma

        if self.frictionless:
            fric = np.array([pt, po, pr])
        g = np.concatenate([dyn, c1, c2, fric])
        zeta = (fp.mu * pn) ** 2 - (pt / fp.e_t) ** 2 - (po / fp.e_o) ** 2 - (pr / fp.e_r) ** 2
        # with f_k(a1) = 0 imposed, l_k |grad C| is the signed separation of
        # a1 and a2, a smooth stand-in for max_i f_i(a2) in the gap pair
        f = np.concatenate([-vals1, -valsG, [lk], [sigma if self.frictionless else zeta]])
        if not need_jac:
            return g, f, None, None

        N = L.size
        Jg = np.zeros((L.n_u, N))
        Jf = np.zeros((L.n_v, N))
        Jphi = rotation_increment_jacobian(w, h)
        H1 = R @ Hb1 @ R.T
        Hsum = np.tensordot(weights, H1, axes=1)
        dgradC_dphi = -skew(gradC) + Hsum @ skew(d1)
        dgradC_dw = dgradC_dphi @ Jphi

        # dynamics rows
        Jg[0:6, 0:6] = -self.M
        Jg[3:6, 0:3] += h * skew(force)
        Jg[3:6, L.a1] = -skew(force)
        Wn = np.concatenate([n, np.cross(r, n)])
        Wt = np.concatenate([t, np.cross(r, t)])
        Wo = np.concatenate([o, np.cross(r, o)])
        Wr = np.concatenate([np.zeros(3), n])
        Jg[0:6, L.pn] = Wn
        Jg[0:6, L.pt] = Wt
        Jg[0:6, L.po] = Wo
        Jg[0:6, L.pr] = Wr

        # contact rows
        Jg[6:9, 0:3] = -h * lk * Hsum
        Jg[6:9, 3:6] = lk * dgradC_dw
        Jg[6:9, L.a1] = np.eye(3) + lk * Hsum
        Jg[6:9, L.a2] = -np.eye(3)
        Jg[9:12, 0:3] = -h * Hsum
        Jg[9:12, 3:6] = dgradC_dw
        Jg[9:12, L.a1] = Hsum
        Jg[9:12, L.a2] = np.tensordot(lG, HG, axes=1)
        lf0 = L.lF.start
        for i in range(m):
            if i == k:
                Jg[6:9, lf0 + i] = gradC
            else:
                Jg[6:9, lf0 + i] = lk * g1[i]
                Jg[9:12, lf0 + i] = g1[i]
        Jg[9:12, L.lG] = gG.T

        # friction rows
        dslip = np.zeros((3, 12))
        dslip[0, 0:3] = t - h * np.cross(t, w)
        dslip[1, 0:3] = o - h * np.cross(o, w)
        dslip[0, 3:6] = np.cross(r, t)
        dslip[1, 3:6] = np.cross(r, o)
        dslip[2, 3:6] = n
        dslip[0, 6:9] = np.cross(t, w)
        dslip[1, 6:9] = np.cross(o, w)
        if self.curved_support:
            dn, dt, do = self._frame_derivative(a2)
            dforce = dn * pn + dt * pt + do * po
            Jg[0:3, L.a2] += dforce
            Jg[3:6, L.a2] += skew(r) @ dforce + dn * pr
            dslip[0, 9:12] = vel_pt @ dt
            dslip[1, 9:12] = vel_pt @ do
            dslip[2, 9:12] = w @ dn
        Jg[12:15, 0:12] = (e2mu * pn)[:, None] * dslip
        Jg[12:15, L.pn] = e2mu * slip
        Jg[12, L.pt] = Jg[13, L.po] = Jg[14, L.pr] = sigma
        Jg[12:15, L.sigma] = [pt, po, pr]

        # complementarity rows (raw f)
        Jf[0:m, 0:3] = h * g1
        Jf[0:m, 3:6] = -np.cross(g1, d1) @ Jphi
        Jf[0:m, L.a1] = -g1
        Jf[m : m + mg, L.a2] = -gG
        Jf[m + mg, lf0 + k] = 1.0
        if self.frictionless:
            Jg[12:15, :] = 0.0
            Jg[12, L.pt] = Jg[13, L.po] = Jg[14, L.pr] = 1.0
            Jf[m + mg + 1, L.sigma] = 1.0
        else:
            Jf[m + mg + 1, L.pn] = 2 * fp.mu**2 * pn
            Jf[m + mg + 1, L.pt] = -2 * pt / fp.e_t**2
            Jf[m + mg + 1, L.po] = -2 * po / fp.e_o**2
            Jf[m + mg + 1, L.pr] = -2 * pr / fp.e_r**2
        return g, f, Jg, Jf

    def _full(self, zu, zv):
        return np.concatenate([zu, zv])

    def _eq(self, zu, zv):
        return self.evaluate(self._full(zu, zv), need_jac=False)[0]

    def _comp(self, zu, zv):
        return self.evaluate(self._full(zu, zv), need_jac=False)[1]

    def _jac(self, zu, zv):
        _, _, Jg, Jf = self.evaluate(self._full(zu, zv), need_jac=True)
        return Jg, Jf

    # -- decoding -----------------------------------------------------------------

    def decode(self, z):
        L = self.lay
        nu = z[L.nu].copy()
        a1, a2 = z[L.a1].copy(), z[L.a2].copy()
        unknowns = cm.ContactUnknowns(a1, a2, z[L.lF].copy(), z[L.lG].copy(), self.k)
        contact = cm.ContactSolution(
            unknowns,
            float(z[L.pn]),
            float(z[L.pt]),
            float(z[L.po]),
            float(z[L.pr]),
            float(z[L.sigma]),
            self.frame(a2),
        )
        return nu, contact


def assemble(state_u, scenario, contact_guess=None, t=0.0):
    """Build the step problem at time ``t``.

    ``contact_guess`` is a :class:`WarmStart`, an active hull index, or
    ``None`` (index chosen from the geometric seed).
    """
    if isinstance(contact_guess, WarmStart):
        k = contact_guess.active_k
    elif contact_guess is None:
        k = geometric_seed(state_u, scenario).active_k
    else:
        k = int(contact_guess)
    return StepProblem(state_u, scenario, k, t).problem


# -- stepping -------------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    time: float
    state: RigidState
    contact: cm.ContactSolution
    solver: dict
    diagnostics: dict = field(default_factory=dict)


@dataclass
class WarmStart:
    z: np.ndarray
    active_k: int
    normal: np.ndarray


def geometric_seed(state, scenario):
    """Closest-point seed: zero impulses and small positive multipliers.

    ``sigma`` is seeded from the slip at the seeded contact point; on a
    sliding contact the friction equalities give ``sigma = |e^2 * slip|``
    exactly, and a tiny value there makes the first Newton steps useless.
    """
    F = scenario.body.at(Pose(state.position, state.orientation))
    G = scenario.support
    pair = seed_closest_points(F, G)
    lay = StepLayout(len(F), len(G))
    vals, grads, _ = G.world_all(pair.a2, hessians=False)
    frame = frame_from_normal(grads[int(np.argmax(vals))])
    W = wrench_basis(frame, pair.a1, state.position)
    slip = np.array([W.W_t @ state.nu, W.W_o @ state.nu, W.W_r @ state.nu])
    sigma = max(INITIAL_MULTIPLIER, float(np.linalg.norm(scenario.friction.e2 * slip)))
    z = lay.pack(
        state.nu, pair.a1, pair.a2, 0.0, 0.0, 0.0,
        np.full(lay.m, INITIAL_MULTIPLIER), np.full(lay.mg, INITIAL_MULTIPLIER),
        0.0, sigma,
    )
    k = cm.select_active_index(F, F.pose, pair.a1, normal=-frame.n)
    return WarmStart(z, k, frame.n)


def _separated(lay, z):
    return z[lay.pn] <= 0.0 and np.linalg.norm(z[lay.a1] - z[lay.a2]) > SEPARATION_TOL


def _friction_free(state, scenario, params, z0, k, t):
    ff = StepProblem(state, scenario, k, t, friction_free=True)
    z0 = z0.copy()
    z0[[ff.lay.pt, ff.lay.po, ff.lay.pr, ff.lay.sigma]] = 0.0
    return solve(ff.problem, z0, params)


def _solve_with_k(state, scenario, params, z0, k, t):
    sp = StepProblem(state, scenario, k, t)
    lay = sp.lay
    if scenario.friction.mu == 0:
        z, report = solve(sp.problem, z0, params)
        return sp, z, report
    if _separated(lay, z0):
        # likely flight: with p_n = 0, (p, sigma) = 0 solves the friction rows
        # exactly, so a friction-free solution the full system accepts is kept
        z_ff, rep_ff = _friction_free(state, scenario, params, z0, k, t)
        if rep_ff.converged and assess(sp.problem, z_ff, params).converged:
            return sp, z_ff, rep_ff
        if rep_ff.converged:
            z0 = z_ff
    z, report = solve(sp.problem, z0, params)
    if report.converged and z[lay.pn] <= CONTACT_TOL and np.any(z[[lay.pt, lay.po, lay.pr]]):
        # near p_n = 0 the friction rows pin p only to about tol / sigma;
        # prefer the exact zero-friction point when it is also a solution
        z_ff, rep_ff = _friction_free(state, scenario, params, z, k, t)
        if rep_ff.converged and assess(sp.problem, z_ff, params).converged:
            report.stage_iterations = list(report.stage_iterations) + list(rep_ff.stage_iterations)
            return sp, z_ff, report
    return sp, z, report


def step(state_u, scenario, params=None, warm=None, t=0.0):
    """Advance one step; returns ``(state_next, record, warm_next)``.

    The first attempt starts from ``warm`` (previous solution) or, on the
    first step, from the geometric seed.  A failed attempt is retried once
    from the seed; a second failure raises :class:`StepError`.
    """
    params = params or scenario.solver
    seed = geometric_seed(state_u, scenario) if warm is None else None
    if warm is None:
        warm = seed
    lay = StepLayout(len(scenario.body), len(scenario.support))
    if warm.z.shape != (lay.size,):
        raise PreconditionError(
            f"warm start has {warm.z.shape[0]} entries, the step needs {lay.size}"
        )
    F_now = scenario.body.at(Pose(state_u.position, state_u.orientation))
    k = cm.select_active_index(F_now, F_now.pose, warm.z[lay.a1], normal=-warm.normal)

    used_retry = False
    sp, z, report = _solve_with_k(state_u, scenario, params, warm.z, k, t)
    if not report.converged:
        used_retry = True
        seed = seed or geometric_seed(state_u, scenario)
        log.debug("t=%.4g: retrying from seed (k=%d -> %d)", t, k, seed.active_k)
        sp, z, report = _solve_with_k(state_u, scenario, params, seed.z, seed.active_k, t)
    if not report.converged:
        g, f = sp.problem.residuals(z)
        raise StepError(
            f"step at t={t:.6g} failed after retry: {report.message}",
            report=report, z=z, residual=(g, f),
        )

    nu, contact = sp.decode(z)
    pos, quat, drift = integrate_pose(state_u.position, state_u.orientation, nu, scenario.h)
    state_next = RigidState(pos, quat, nu[:3], nu[3:])
    diag = diagnostics(state_next, scenario, contact, nu)
    diag.update(quat_drift=drift, retried=used_retry)
    if diag["gap_a2"] < -NONPEN_TOL:
        raise IntegrityError(
            f"penetration at t={t + scenario.h:.6g}: max f_i(a2) = {diag['gap_a2']:.3g}"
        )
    cm.check_hull_phantom(None, contact.unknowns.a2, contact.p_n, scenario.support.is_polytope)
    solver = dict(
        converged=report.converged,
        iterations=report.iterations,
        stage_iterations=list(report.stage_iterations),
        residual=report.residual_norm,
        backtracks=report.backtracks,
        wall_time=report.wall_time,
        retried=used_retry,
        skipped_stages=list(report.skipped_stages),
        jacobian_check=report.jacobian_check,
        active_k=sp.k,
    )
    rec = TrajectoryRecord(t + scenario.h, state_next, contact, solver, diag)
    return state_next, rec, WarmStart(z, sp.k, contact.frame.n)


def diagnostics(state, scenario, contact, nu):
    pose = Pose(state.position, state.orientation)
    F = scenario.body.at(pose)
    a1, a2 = contact.unknowns.a1, contact.unknowns.a2
    vals_a1 = F.values(a1)
    W = wrench_basis(contact.frame, a1, state.position)
    p = contact.impulses
    samples = extreme_point_samples(scenario.body) @ pose.rotation.T + pose.position
    support_gap = min(float(np.max(scenario.support.values(s))) for s in samples)
    M = world_inertia(state.orientation, scenario.mass, scenario.inertia_matrix)
    return dict(
        in_contact=bool(contact.p_n > CONTACT_TOL),
        gap_a2=float(np.max(F.values(a2))),
        hull_a1=float(np.max(vals_a1)),
        support_a1=float(np.max(scenario.support.values(a1))),
        active_a1=[i for i, v in enumerate(vals_a1) if v >= -1e-9],
        extreme_gap=support_gap,
        zeta=float(ellipsoid_slack(p, scenario.friction)),
        dissipation=dissipation(p, W, nu),
        normal_velocity=float(W.W_n @ nu),
        kinetic_energy=0.5 * float(nu @ M @ nu),
    )


def run(scenario, params=None, on_record=None, check_jacobian=False):
    """Simulate ``scenario`` for ``duration / h`` steps with warm starts."""
    params = params or scenario.solver
    scenario.validate()
    state = scenario.initial
    warm = None
    records = []
    t = 0.0
    for u in range(scenario.n_steps):
        p = params
        if u == 0 and (check_jacobian or params.jacobian_mode == "hybrid"):
            p = replace(params, jacobian_mode="hybrid")
        elif params.jacobian_mode == "hybrid":
            p = replace(params, jacobian_mode="analytic")
        state, rec, warm = step(state, scenario, p, warm, t)
        records.append(rec)
        if on_record is not None:
            on_record(rec)
        t = (u + 1) * scenario.h
    return records
