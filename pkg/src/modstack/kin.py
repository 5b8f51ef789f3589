"""Serial-chain kinematics: forward pose, geometric Jacobian, iterative IK.

Conventions: a chain is a list of joints, each acting at its own frame
origin, followed by a rigid link of ``link_length`` along the local +x
axis. At the zero configuration the whole chain lies along +x, so the
canonical limb spans its full 1.55 m. Orientation is stored as a unit
quaternion in scalar-last (x, y, z, w) order.

The IK solver is damped least squares with adaptive damping: robust near
the singular stretched-out poses a teleoperated redundant limb visits.
Iterates are clamped to joint limits and the solver reports failure on
residual error rather than refusing to move, so a caller can still use
partial progress.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .model import KinematicChain

__all__ = [
    "Pose",
    "IKOptions",
    "IKError",
    "UnreachableError",
    "DivergedError",
    "forward_kinematics",
    "jacobian",
    "inverse_kinematics",
    "clamp_to_limits",
    "pose_error",
]

_IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Pose:
    """Rigid-body pose: position in meters, orientation as a unit quaternion."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: _IDENTITY_QUAT.copy())

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        q = np.asarray(self.orientation, dtype=float)
        norm = np.linalg.norm(q)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {norm} is not 1")
        object.__setattr__(self, "orientation", q)

    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.orientation)

    def compose(self, other: "Pose") -> "Pose":
        r = self.rotation()
        return Pose(self.position + r.apply(other.position), (r * other.rotation()).as_quat())


class IKError(RuntimeError):
    reason = "ik-failure"


class UnreachableError(IKError):
    reason = "unreachable"


class DivergedError(IKError):
    reason = "diverged"


@dataclass
class IKOptions:
    pos_tol: float = 1e-4
    rot_tol: float = 1e-3
    max_iters: int = 200
    damping: float = 1e-3
    # mask selects controlled task-space rows: (x, y, z, rx, ry, rz).
    mask: tuple = (1, 1, 1, 1, 1, 1)


def _check_length(chain: KinematicChain, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (len(chain.joints),):
        raise ValueError(f"joint vector length {q.shape} does not match chain ({len(chain.joints)} joints)")
    return q


def clamp_to_limits(chain: KinematicChain, q) -> np.ndarray:
    q = _check_length(chain, q)
    lo = np.array([j.limits[0] for j in chain.joints])
    hi = np.array([j.limits[1] for j in chain.joints])
    return np.clip(q, lo, hi)


def forward_kinematics(chain: KinematicChain, q) -> Pose:
    """Pose of the tip frame expressed in the chain's root frame."""
    q = _check_length(chain, q)
    p = np.zeros(3)
    r = Rotation.identity()
    p = p + r.apply([chain.base_offset, 0.0, 0.0])
    for joint, qi in zip(chain.joints, q):
        axis = np.asarray(joint.axis)
        if joint.kind == "revolute":
            r = r * Rotation.from_rotvec(axis * qi)
        else:
            p = p + r.apply(axis * qi)
        p = p + r.apply([joint.link_length, 0.0, 0.0])
    return Pose(p, r.as_quat())


def jacobian(chain: KinematicChain, q) -> np.ndarray:
    """Geometric Jacobian at the tip: rows 0-2 linear, rows 3-5 angular."""
    q = _check_length(chain, q)
    n = len(chain.joints)
    origins = np.zeros((n, 3))
    axes_world = np.zeros((n, 3))
    p = np.zeros(3)
    r = Rotation.identity()
    p = p + r.apply([chain.base_offset, 0.0, 0.0])
    for i, (joint, qi) in enumerate(zip(chain.joints, q)):
        axis = np.asarray(joint.axis)
        origins[i] = p
        axes_world[i] = r.apply(axis)
        if joint.kind == "revolute":
            r = r * Rotation.from_rotvec(axis * qi)
        else:
            p = p + r.apply(axis * qi)
        p = p + r.apply([joint.link_length, 0.0, 0.0])
    tip = p
    jac = np.zeros((6, n))
    for i, joint in enumerate(chain.joints):
        if joint.kind == "revolute":
            jac[:3, i] = np.cross(axes_world[i], tip - origins[i])
            jac[3:, i] = axes_world[i]
        else:
            jac[:3, i] = axes_world[i]
    return jac


def pose_error(target: Pose, current: Pose) -> np.ndarray:
    """6-vector task error: translation, then rotation as a rotation vector."""
    e = np.zeros(6)
    e[:3] = target.position - current.position
    e[3:] = (target.rotation() * current.rotation().inv()).as_rotvec()
    return e


def inverse_kinematics(chain: KinematicChain, target: Pose, seed, opts: IKOptions | None = None) -> np.ndarray:
    """Iterative damped-least-squares IK.

    Returns a joint vector whose forward pose is within opts.pos_tol /
    opts.rot_tol of the target. Raises UnreachableError if the residual
    never falls below tolerance within max_iters, DivergedError if the
    error keeps growing instead.
    """
    opts = opts or IKOptions()
    q = clamp_to_limits(chain, np.array(seed, dtype=float))
    mask = np.asarray(opts.mask, dtype=bool)
    lam = opts.damping
    best_err = np.inf
    prev_err = np.inf
    grew = 0

    def residuals(qv):
        e = pose_error(target, forward_kinematics(chain, qv))
        pos = np.linalg.norm(e[:3][mask[:3]]) if mask[:3].any() else 0.0
        rot = np.linalg.norm(e[3:][mask[3:]]) if mask[3:].any() else 0.0
        return e, pos, rot

    e, pos_err, rot_err = residuals(q)
    if pos_err <= opts.pos_tol and rot_err <= opts.rot_tol:
        return q

    for _ in range(opts.max_iters):
        step = e.copy()
        # Cap per-iteration task step so far targets walk in stably.
        pn = np.linalg.norm(step[:3])
        if pn > 0.2:
            step[:3] *= 0.2 / pn
        rn = np.linalg.norm(step[3:])
        if rn > 0.5:
            step[3:] *= 0.5 / rn
        jac = jacobian(chain, q)[mask]
        ev = step[mask]
        jjt = jac @ jac.T + (lam ** 2) * np.eye(jac.shape[0])
        dq = jac.T @ np.linalg.solve(jjt, ev)
        q = clamp_to_limits(chain, q + dq)
        e, pos_err, rot_err = residuals(q)
        if pos_err <= opts.pos_tol and rot_err <= opts.rot_tol:
            return q
        err = pos_err + rot_err
        if err > prev_err:
            lam = min(lam * 10.0, 1e3)
            grew += 1
            if grew >= 20 and err > 10.0 * best_err:
                raise DivergedError(f"ik diverged: error {err:.3g} from best {best_err:.3g}")
        else:
            lam = max(opts.damping, lam / 10.0)
            grew = 0
        best_err = min(best_err, err)
        prev_err = err
    raise UnreachableError(
        f"ik did not converge in {opts.max_iters} iterations (pos {pos_err:.3g} m, rot {rot_err:.3g} rad)"
    )
