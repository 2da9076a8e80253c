"""Whole-body controllers: base admittance, weighted Cartesian impedance
with null-space posture/tactile objectives, and the follow-me controller.

The impedance law distributes a 6-D end-effector force across all 10 DoF
through a weighted dynamically-consistent pseudoinverse,

    tau_c = W^-1 M^-1 J^T L_W L^-1 F
          + (I - W^-1 M^-1 J^T L_W J M^-1) tau_0

with L = (J M^-1 J^T)^-1, L_W = (J M^-1 W^-1 M^-1 J^T)^-1 and
W = H^T M^-1 H, H = blockdiag(eta_B I3, eta_A I7). The first term is the
minimum-W-norm torque realizing F; the second is torque-space null-space
projection, so the secondary objective tau_0 (tactile base reaction +
arm posture) produces zero end-effector force. Raising eta_B makes base
torque more expensive and shifts the task onto the arm.

The follow-me controller drives only the arm (the base follows the
reconstructed external wrench through the admittance alone):

    tau_c = J_A^T F + (I - J_A^T L_A J_A M_A^-1) tau_0

All laws are pure functions of the given state and gains; gravity
compensation of the physical arm happens at the plant boundary, not here.
"""

from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, SingularityError
from .geometry import Pose, pose_error, planar_rot
from .model import (
    JointState,
    RobotModel,
    arm_jacobian,
    arm_kinematics,
    arm_mass_matrix,
    whole_body_jacobian,
    whole_body_mass,
    N_ARM,
    N_BASE,
)
from .taxels import TaxelGeometry, TaxelReading, base_external_wrench

# damped inversion kicks in below this smallest eigenvalue of J M^-1 J^T
SINGULARITY_THRESHOLD = 1e-4
DAMPING_LAMBDA = 0.05


@dataclass(frozen=True)
class BaseAdmittanceParams:
    """Virtual mass and damping of the planar base admittance."""

    M_v: np.ndarray
    D_v: np.ndarray

    def __post_init__(self):
        M_v = np.asarray(self.M_v, dtype=float)
        D_v = np.asarray(self.D_v, dtype=float)
        if M_v.shape == (N_BASE,):
            M_v = np.diag(M_v)
        if D_v.shape == (N_BASE,):
            D_v = np.diag(D_v)
        for name, mat in (("M_v", M_v), ("D_v", D_v)):
            if mat.shape != (N_BASE, N_BASE):
                raise ValueError(f"{name} must be 3x3")
            if not np.allclose(mat, np.diag(np.diag(mat))):
                raise ValueError(f"{name} must be diagonal")
            if np.any(np.diag(mat) <= 0.0):
                raise ValueError(f"{name} must be positive definite")
        object.__setattr__(self, "M_v", M_v)
        object.__setattr__(self, "D_v", D_v)


@dataclass(frozen=True)
class ImpedanceGains:
    """Cartesian stiffness/damping, null-space posture gains, and the
    loco-manipulation weights.

    ``D_d=None`` means critical damping, resolved at runtime from K_d and
    the current task-space inertia (see ``critical_cartesian_damping``).
    """

    K_d: np.ndarray
    K_0: np.ndarray
    D_0: np.ndarray
    q_A_ref: np.ndarray
    D_d: Optional[np.ndarray] = None
    eta_A: float = 1.0
    eta_B: float = 1.0

    def __post_init__(self):
        K_d = np.asarray(self.K_d, dtype=float)
        if K_d.shape == (6,):
            K_d = np.diag(K_d)
        _check_sym_psd(K_d, 6, "K_d")
        object.__setattr__(self, "K_d", K_d)
        if self.D_d is not None:
            D_d = np.asarray(self.D_d, dtype=float)
            if D_d.shape == (6,):
                D_d = np.diag(D_d)
            _check_sym_psd(D_d, 6, "D_d")
            object.__setattr__(self, "D_d", D_d)
        for name in ("K_0", "D_0"):
            mat = np.asarray(getattr(self, name), dtype=float)
            if mat.shape == ():
                mat = float(mat) * np.eye(N_ARM)
            elif mat.shape == (N_ARM,):
                mat = np.diag(mat)
            _check_sym_psd(mat, N_ARM, name)
            if np.min(np.linalg.eigvalsh(mat)) <= 0.0:
                raise ValueError(f"{name} must be positive definite")
            object.__setattr__(self, name, mat)
        object.__setattr__(self, "q_A_ref", np.asarray(self.q_A_ref, dtype=float).reshape(N_ARM).copy())
        if self.eta_A <= 0.0 or self.eta_B <= 0.0:
            raise ValueError("eta_A and eta_B must be > 0")


def _check_sym_psd(mat: np.ndarray, n: int, name: str) -> None:
    if mat.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n} (or a length-{n} diagonal)")
    if not np.allclose(mat, mat.T, atol=1e-9):
        raise ValueError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(0.5 * (mat + mat.T))) < -1e-9:
        raise ValueError(f"{name} must be positive semidefinite")


@dataclass(frozen=True)
class ControllerGains:
    """Everything the two controllers need, as loaded from one gains file."""

    impedance: ImpedanceGains
    base: BaseAdmittanceParams


@dataclass(frozen=True)
class ControlOutput:
    """Torque command split into base and arm, with the commanded Cartesian
    force kept as a diagnostic."""

    tau_v: np.ndarray
    tau_A: np.ndarray
    F: np.ndarray


# ---------------------------------------------------------------------------
# base admittance


def base_admittance_step(params: BaseAdmittanceParams, dq_B: np.ndarray,
                         tau_total: np.ndarray, dt: float) -> tuple:
    """One semi-implicit Euler step of M_v ddq + D_v dq = tau_total.

    ``tau_total`` is the sum of controller and external virtual torques.
    Returns (next base velocity, acceleration); the caller advances the
    base pose with the returned velocity.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    dq_B = np.asarray(dq_B, dtype=float)
    tau_total = np.asarray(tau_total, dtype=float)
    if not (np.all(np.isfinite(dq_B)) and np.all(np.isfinite(tau_total))):
        raise ValueError("non-finite base admittance input")
    ddq_B = (tau_total - params.D_v @ dq_B) / np.diag(params.M_v)
    return dq_B + dt * ddq_B, ddq_B


# ---------------------------------------------------------------------------
# Cartesian impedance


def critical_cartesian_damping(K_d: np.ndarray, Lambda: np.ndarray, zeta: float = 1.0) -> np.ndarray:
    """Damping matrix making L xdd + D xd + K x = 0 critically damped.

    Uses the factorization D = 2 zeta B (B^-1 K B^-1)^(1/2) B with
    B = Lambda^(1/2), which diagonalizes the error dynamics jointly.
    """
    B = _sqrtm_psd(Lambda)
    B_inv = np.linalg.inv(B)
    inner = _sqrtm_psd(B_inv @ K_d @ B_inv)
    return 2.0 * zeta * B @ inner @ B


def resolve_critical_damping(K_d: np.ndarray, J: np.ndarray, M: np.ndarray,
                             zeta: float = 1.0) -> np.ndarray:
    """Critical Cartesian damping for the task-space inertia of (J, M).

    Applies the same damped inversion as the torque laws near singular
    configurations, so a resolved gain never blows up where the law itself
    would not.
    """
    MinvJT = np.linalg.solve(M, J.T)
    A = J @ MinvJT
    A = 0.5 * (A + A.T)
    if np.min(np.linalg.eigvalsh(A)) < SINGULARITY_THRESHOLD:
        A = A + DAMPING_LAMBDA ** 2 * np.eye(A.shape[0])
    return critical_cartesian_damping(K_d, np.linalg.inv(A), zeta=zeta)


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    evals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    return (vecs * np.sqrt(np.maximum(evals, 0.0))) @ vecs.T


def cartesian_impedance_force(gains: ImpedanceGains, x_d: Pose, dx_d: np.ndarray,
                              x: Pose, dx: np.ndarray,
                              D_d: Optional[np.ndarray] = None) -> np.ndarray:
    """Impedance wrench F = D_d (dx_d - dx) + K_d (x_d - x).

    The pose difference is position delta plus the axis-angle vector of the
    relative rotation. ``D_d`` overrides the gains' damping; one of the two
    must be resolved (gains with D_d=None defer to the caller, which knows
    the current task-space inertia).
    """
    if D_d is None:
        D_d = gains.D_d
    if D_d is None:
        raise ValueError("damping unresolved: gains.D_d is None and no D_d was passed")
    err = pose_error(x_d, x)
    return D_d @ (np.asarray(dx_d, float) - np.asarray(dx, float)) + gains.K_d @ err


def weighting_matrices(H_params: tuple, M: np.ndarray) -> tuple:
    """H = blockdiag(eta_B I3, eta_A I7) and W = H^T M^-1 H for the given
    whole-body mass matrix. ``H_params`` is (eta_A, eta_B)."""
    eta_A, eta_B = H_params
    h = np.concatenate([np.full(N_BASE, eta_B), np.full(N_ARM, eta_A)])
    H = np.diag(h)
    W = H @ np.linalg.solve(M, H)  # H diagonal, so H^T M^-1 H = H M^-1 H
    return H, 0.5 * (W + W.T)


def _damped_task_matrices(J: np.ndarray, M: np.ndarray, h: np.ndarray) -> tuple:
    """Shared core of the weighted law.

    Returns (MinvJT, A, A_W, T1, damped) where A = J M^-1 J^T,
    A_W = J M^-1 W^-1 M^-1 J^T, and T1 = W^-1 M^-1 J^T. W^-1 never gets
    formed explicitly: W^-1 = H^-1 M H^-1 for diagonal H.
    """
    MinvJT = np.linalg.solve(M, J.T)
    A = J @ MinvJT
    A = 0.5 * (A + A.T)
    T1 = (M / np.outer(h, h)) @ MinvJT
    A_W = MinvJT.T @ T1
    A_W = 0.5 * (A_W + A_W.T)
    damped = np.min(np.linalg.eigvalsh(A)) < SINGULARITY_THRESHOLD
    if damped:
        lam2 = DAMPING_LAMBDA ** 2
        A = A + lam2 * np.eye(A.shape[0])
        A_W = A_W + lam2 * np.eye(A.shape[0])
    return MinvJT, A, A_W, T1, damped


def wb_impedance_torques(model: RobotModel, state: JointState, gains: ImpedanceGains,
                         base_params: BaseAdmittanceParams, F: np.ndarray,
                         tau_v_ext: np.ndarray,
                         kin=None, M_A: Optional[np.ndarray] = None,
                         J: Optional[np.ndarray] = None,
                         M: Optional[np.ndarray] = None) -> ControlOutput:
    """Weighted whole-body impedance torque for a commanded wrench F.

    The null-space objective is tau_0 = (tau_v_ext; -D_0 dq_A +
    K_0 (q_A_ref - q_A)): the base yields to the tactile wrench and the arm
    holds its reference posture, neither producing end-effector force.
    ``kin``/``M_A``/``J``/``M`` allow reusing per-step quantities already
    computed by the caller.
    """
    if kin is None:
        kin = arm_kinematics(model, state.q_A)
    if J is None:
        J = whole_body_jacobian(model, state, kin=kin)
    if M is None:
        M = whole_body_mass(model, state.q_A, base_params, M_A=M_A)
    h = np.concatenate([np.full(N_BASE, gains.eta_B), np.full(N_ARM, gains.eta_A)])

    MinvJT, A, A_W, T1, _ = _damped_task_matrices(J, M, h)
    F = np.asarray(F, dtype=float)
    tau_0 = np.concatenate([np.asarray(tau_v_ext, dtype=float),
                            -gains.D_0 @ state.dq_A + gains.K_0 @ (gains.q_A_ref - state.q_A)])

    # tau_task = T1 L_W (L^-1 F); L^-1 = A, L_W^-1 = A_W
    tau_task = T1 @ np.linalg.solve(A_W, A @ F)
    tau_null = tau_0 - T1 @ np.linalg.solve(A_W, MinvJT.T @ tau_0)
    tau_c = tau_task + tau_null
    if not np.all(np.isfinite(tau_c)):
        raise SingularityError("whole-body torque law produced non-finite output")
    return ControlOutput(tau_v=tau_c[:N_BASE], tau_A=tau_c[N_BASE:], F=F)


def impedance_step(model: RobotModel, state: JointState, gains: ImpedanceGains,
                   base_params: BaseAdmittanceParams, x_d: Pose, dx_d: np.ndarray,
                   tau_v_ext: np.ndarray, kin=None,
                   M_A: Optional[np.ndarray] = None,
                   J: Optional[np.ndarray] = None) -> ControlOutput:
    """Full impedance controller step: pose error -> wrench -> torques.

    Resolves critical damping from the current (damped) task-space inertia
    when gains.D_d is None, then applies the torque law. World-frame poses
    and twists throughout.
    """
    if kin is None:
        kin = arm_kinematics(model, state.q_A)
    x = world_ee_pose(model, state, kin=kin)
    if J is None:
        J = whole_body_jacobian(model, state, kin=kin)
    dx = J @ np.concatenate([state.dq_B, state.dq_A])

    M = whole_body_mass(model, state.q_A, base_params, M_A=M_A)
    D_d = gains.D_d
    if D_d is None:
        D_d = resolve_critical_damping(gains.K_d, J, M)
    F = cartesian_impedance_force(gains, x_d, dx_d, x, dx, D_d=D_d)
    return wb_impedance_torques(model, state, gains, base_params, F, tau_v_ext,
                                kin=kin, M_A=M_A, J=J, M=M)


def world_ee_pose(model: RobotModel, state: JointState, kin=None) -> Pose:
    from .model import world_mount_pose

    if kin is None:
        kin = arm_kinematics(model, state.q_A)
    return world_mount_pose(model, state).compose(kin.ee)


# ---------------------------------------------------------------------------
# follow-me


def estimate_ee_wrench(model: RobotModel, q_A: np.ndarray, tau_A_ext: np.ndarray,
                       kin=None, M_A: Optional[np.ndarray] = None) -> np.ndarray:
    """External end-effector wrench explaining the measured joint torques.

    F = L_A J_A M_A^-1 tau_A_ext (dynamically consistent pseudoinverse
    transpose); exact when tau_A_ext comes from a real end-effector wrench
    and J_A has full row rank. Expressed in the mount frame F_A.
    """
    if kin is None:
        kin = arm_kinematics(model, q_A)
    J_A = arm_jacobian(model, q_A, kin=kin)
    if M_A is None:
        M_A = arm_mass_matrix(model, q_A, kin=kin)
    MinvJT = np.linalg.solve(M_A, J_A.T)
    A = J_A @ MinvJT
    A = 0.5 * (A + A.T)
    if np.min(np.linalg.eigvalsh(A)) < SINGULARITY_THRESHOLD:
        A = A + DAMPING_LAMBDA ** 2 * np.eye(6)
    F = np.linalg.solve(A, MinvJT.T @ np.asarray(tau_A_ext, dtype=float))
    if not np.all(np.isfinite(F)):
        raise SingularityError("end-effector wrench estimate is non-finite")
    return F


def follow_me_virtual_torque(model: RobotModel, readings: Sequence[TaxelReading],
                             layout: Sequence[TaxelGeometry], q_A: np.ndarray,
                             tau_A_ext: np.ndarray, kin=None,
                             M_A: Optional[np.ndarray] = None) -> np.ndarray:
    """Virtual base wrench from taxels plus the arm's estimated load.

    The estimated end-effector wrench is reduced to a planar wrench about
    the mount origin (force x/y plus transported z-moment) and then carried
    into the base frame: rotate by the mount yaw and add the moment of the
    mount offset. Pushing the arm therefore drags the base exactly like an
    equivalent push on the shell.
    """
    w = base_external_wrench(readings, layout)
    F_ee = estimate_ee_wrench(model, q_A, tau_A_ext, kin=kin, M_A=M_A)
    if kin is None:
        kin = arm_kinematics(model, q_A)
    # planar wrench about the mount origin, in F_A axes
    r_ee = kin.ee.position
    f_a = F_ee[:2]
    m_a = F_ee[5] + r_ee[0] * F_ee[1] - r_ee[1] * F_ee[0]
    # carry into F_B: rotate, then transport across the mount offset
    f_b = planar_rot(model.arm_mount_yaw) @ f_a
    r_ba = model.arm_mount_xy
    m_b = m_a + r_ba[0] * f_b[1] - r_ba[1] * f_b[0]
    tau_v_ext = w + np.array([f_b[0], f_b[1], m_b])
    if not np.all(np.isfinite(tau_v_ext)):
        raise SingularityError("follow-me virtual torque is non-finite")
    return tau_v_ext


def follow_me_posture_torque(gains: ImpedanceGains, q_A: np.ndarray, dq_A: np.ndarray) -> np.ndarray:
    """Secondary-task torque holding the reference arm configuration."""
    return -gains.D_0 @ np.asarray(dq_A, float) + gains.K_0 @ (gains.q_A_ref - np.asarray(q_A, float))


def follow_me_torques(model: RobotModel, state: JointState, gains: ImpedanceGains,
                      F: np.ndarray, tau_0: Optional[np.ndarray] = None,
                      kin=None, M_A: Optional[np.ndarray] = None) -> np.ndarray:
    """Arm torque for the follow-me task: Jacobian-transpose force control
    with torque-space null-space posture keeping.

    ``F`` must be expressed in the mount frame F_A (the frame of the arm
    Jacobian). ``tau_0`` defaults to the posture torque from the gains.
    """
    if kin is None:
        kin = arm_kinematics(model, state.q_A)
    J_A = arm_jacobian(model, state.q_A, kin=kin)
    if M_A is None:
        M_A = arm_mass_matrix(model, state.q_A, kin=kin)
    if tau_0 is None:
        tau_0 = follow_me_posture_torque(gains, state.q_A, state.dq_A)

    MinvJT = np.linalg.solve(M_A, J_A.T)
    A = J_A @ MinvJT
    A = 0.5 * (A + A.T)
    if np.min(np.linalg.eigvalsh(A)) < SINGULARITY_THRESHOLD:
        A = A + DAMPING_LAMBDA ** 2 * np.eye(6)
    tau_c = J_A.T @ np.asarray(F, float) + tau_0 - J_A.T @ np.linalg.solve(A, MinvJT.T @ tau_0)
    if not np.all(np.isfinite(tau_c)):
        raise SingularityError("follow-me torque law produced non-finite output")
    return tau_c


# ---------------------------------------------------------------------------
# gains loading


def _matrix_from_node(node, n: int, name: str, path) -> np.ndarray:
    """Accept a scalar (times identity), a diagonal list, a {pos, rot} pair
    for 6x6 task-space matrices, or a full matrix."""
    if isinstance(node, dict) and n == 6:
        try:
            return np.diag([float(node["pos"])] * 3 + [float(node["rot"])] * 3)
        except (KeyError, TypeError, ValueError):
            raise ConfigError("expected {pos: _, rot: _}", path=path, field=name)
    try:
        arr = np.asarray(node, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("expected a number, list, or matrix", path=path, field=name)
    if arr.shape == ():
        return float(arr) * np.eye(n)
    if arr.shape == (n,):
        return np.diag(arr)
    if arr.shape == (n, n):
        return arr
    raise ConfigError(f"expected scalar, length-{n}, or {n}x{n}", path=path, field=name)


def gains_from_dict(doc: dict, path=None) -> ControllerGains:
    imp = doc.get("impedance")
    if not isinstance(imp, dict):
        raise ConfigError("missing section", path=path, field="impedance")
    adm = doc.get("base_admittance")
    if not isinstance(adm, dict):
        raise ConfigError("missing section", path=path, field="base_admittance")

    D_d_node = imp.get("D_d", "critical")
    D_d = None if D_d_node == "critical" else _matrix_from_node(D_d_node, 6, "impedance.D_d", path)
    try:
        gains = ImpedanceGains(
            K_d=_matrix_from_node(imp.get("K_d"), 6, "impedance.K_d", path),
            D_d=D_d,
            K_0=_matrix_from_node(imp.get("K_0"), N_ARM, "impedance.K_0", path),
            D_0=_matrix_from_node(imp.get("D_0"), N_ARM, "impedance.D_0", path),
            q_A_ref=np.asarray(imp.get("q_A_ref"), dtype=float),
            eta_A=float(imp.get("eta_A", 1.0)),
            eta_B=float(imp.get("eta_B", 1.0)),
        )
        base = BaseAdmittanceParams(
            M_v=np.asarray(adm.get("M_v"), dtype=float),
            D_v=np.asarray(adm.get("D_v"), dtype=float),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path=path)
    return ControllerGains(impedance=gains, base=base)


def load_gains(path: Union[str, Path]) -> ControllerGains:
    from .model import load_yaml

    return gains_from_dict(load_yaml(path), path=path)


def default_gains() -> ControllerGains:
    with resources.as_file(resources.files("tactilewbc.data") / "gains.yaml") as p:
        return load_gains(p)


def with_overrides(gains: ControllerGains, overrides: Optional[dict], path=None) -> ControllerGains:
    """Overlay per-run gain tweaks onto a full gain set.

    Accepted keys: eta_A, eta_B, K_d, D_d, K_0, D_0, M_v, D_v. Values take
    the same forms as the gains file (scalar, diagonal, matrix, {pos, rot},
    or "critical" for D_d).
    """
    if not overrides:
        return gains
    imp = gains.impedance
    base = gains.base
    allowed = {"eta_A", "eta_B", "K_d", "D_d", "K_0", "D_0", "M_v", "D_v"}
    unknown = set(overrides) - allowed
    if unknown:
        raise ConfigError(f"unsupported gain overrides {sorted(unknown)}", path=path, field="gains")
    kwargs = {}
    for key in ("eta_A", "eta_B"):
        if key in overrides:
            kwargs[key] = float(overrides[key])
    if "K_d" in overrides:
        kwargs["K_d"] = _matrix_from_node(overrides["K_d"], 6, "gains.K_d", path)
    if "D_d" in overrides:
        node = overrides["D_d"]
        kwargs["D_d"] = None if node == "critical" else _matrix_from_node(node, 6, "gains.D_d", path)
    for key in ("K_0", "D_0"):
        if key in overrides:
            kwargs[key] = _matrix_from_node(overrides[key], N_ARM, f"gains.{key}", path)
    if kwargs:
        imp = replace(imp, **kwargs)
    base_kwargs = {}
    for key in ("M_v", "D_v"):
        if key in overrides:
            base_kwargs[key] = _matrix_from_node(overrides[key], 3, f"gains.{key}", path)
    if base_kwargs:
        base = replace(base, **base_kwargs)
    return ControllerGains(impedance=imp, base=base)
