"""Geometrically implicit contact constraints between a hull and a support.

The equivalent contact points ``a1`` (on the hull of the moving body F) and
``a2`` (on the support G) satisfy a modified KKT system of the distance
problem between the two convex sets:

    a1 - a2 + l_k grad_C = 0
    grad_C + sum_j l_j grad g_j(a2) = 0
    0 <= l_i _|_ -f_i(a1) >= 0,   0 <= l_j _|_ -g_j(a2) >= 0
    0 <= p_n _|_ max_i f_i(a2) >= 0

with ``grad_C = grad f_k(a1) + sum_{i != k} l_i grad f_i(a1)`` for one active
hull constraint ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, IntegrityError
from .math_core import ContactFrame, frame_from_normal


@dataclass(eq=False)
class ContactUnknowns:
    a1: np.ndarray
    a2: np.ndarray
    l_F: np.ndarray
    l_G: np.ndarray
    active_k: int


@dataclass(eq=False)
class ContactSolution:
    unknowns: ContactUnknowns
    p_n: float
    p_t: float
    p_o: float
    p_r: float
    sigma: float
    frame: ContactFrame

    @property
    def impulses(self):
        return np.array([self.p_n, self.p_t, self.p_o, self.p_r])


def _bodies(F, G, poses):
    if poses is not None:
        F = F.at(poses[0])
        G = G.at(poses[1])
    return F, G


def cone_direction_from(grads, l_F, k):
    weights = np.array(l_F, dtype=float)
    weights[k] = 1.0
    return weights @ grads


def grad_cone_direction(F, pose, a1, l_F, active_k):
    """``grad f_k(a1) + sum_{i != k} l_i grad f_i(a1)`` in world coordinates."""
    if not 0 <= active_k < len(F):
        raise IndexError(f"active index {active_k} out of range for {len(F)} constraints")
    _, grads, _ = F.world_all(a1, pose, hessians=False)
    return cone_direction_from(grads, l_F, active_k)


def contact_equality_residuals(u, F, G, poses=None):
    """Six residual rows of the modified KKT system (zero at a solution)."""
    F, G = _bodies(F, G, poses)
    gradC = grad_cone_direction(F, F.pose, u.a1, u.l_F, u.active_k)
    _, g_grads, _ = G.world_all(u.a2, hessians=False)
    row1 = u.a1 - u.a2 + u.l_F[u.active_k] * gradC
    row2 = gradC + np.asarray(u.l_G) @ g_grads
    return np.concatenate([row1, row2])


def contact_complementarity_pairs(u, p_n, F, G, poses=None):
    """``(v, w)`` pairs that must satisfy ``0 <= v _|_ w >= 0``.

    Order: hull multipliers against ``-f_i(a1)``, support multipliers against
    ``-g_j(a2)``, then ``p_n`` against ``max_i f_i(a2)``.
    """
    F, G = _bodies(F, G, poses)
    f_a1 = F.values(u.a1)
    g_a2 = G.values(u.a2)
    pairs = [(float(l), float(-v)) for l, v in zip(u.l_F, f_a1)]
    pairs += [(float(l), float(-v)) for l, v in zip(u.l_G, g_a2)]
    pairs.append((float(p_n), float(np.max(F.values(u.a2)))))
    return pairs


def contact_frame_at(G, pose, a2):
    """Contact frame at ``a2``; ``n`` is the outward normal of the support."""
    G = G.at(pose) if pose is not None else G
    vals, grads, _ = G.world_all(a2, hessians=False)
    g = grads[int(np.argmax(vals))]
    ng = np.linalg.norm(g)
    if ng == 0.0:
        raise GeometryError("support gradient vanishes at the contact point")
    return frame_from_normal(g / ng)


def select_active_index(F, pose, a1_prev, l_prev=None, normal=None, tol=1e-9):
    """Index of the most active hull constraint at the previous contact point.

    Constraints within ``tol`` of the largest value count as tied.  Ties go to
    the lowest index, or, when the contact ``normal`` is supplied, to the
    constraint whose outward gradient faces the support most directly.
    """
    vals, grads, _ = F.world_all(a1_prev, pose, hessians=False)
    top = vals.max()
    tied = [i for i, v in enumerate(vals) if v >= top - tol]
    if normal is None or len(tied) == 1:
        return tied[0]
    n = np.asarray(normal, dtype=float)
    score = [grads[i] @ n / np.linalg.norm(grads[i]) for i in tied]
    return tied[int(np.argmax(np.round(score, 12)))]


def check_hull_phantom(body_inequalities, a2, p_n, support_is_plane, tol=1e-9):
    """Abort when the hull touches the support but the true body does not.

    ``body_inequalities`` evaluates the (possibly non-convex) body description
    at a world point; ``None`` skips the check.  Plane supports never need it.
    """
    if support_is_plane or body_inequalities is None or p_n <= 0:
        return
    worst = float(np.max(body_inequalities(a2)))
    if worst > tol:
        raise IntegrityError(
            f"hull contact without body contact: body inequality {worst:.3g} > 0 at a2"
        )
