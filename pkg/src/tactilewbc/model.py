"""Kinematics and dynamics of the floating-base system.

The robot is an omnidirectional base, treated as an ideal planar floating
joint (x, y, yaw), carrying a 7-DoF serial arm. Each arm joint is revolute
about the local z axis of its frame; a link's frame is placed by a fixed
translation + roll/pitch/yaw offset from the previous joint frame, so the
chain is described URDF-style by (origin_xyz, origin_rpy) per link.

Arm-local quantities (chain frames, Jacobian, mass/Coriolis/gravity) are
computed in the arm mount frame F_A, which is upright by construction
(the base is planar), so gravity in F_A is always -z. World-frame
quantities compose the planar base pose on top.

The Coriolis matrix uses Christoffel symbols built from analytic partial
derivatives of the mass matrix, which makes dM/dt - 2C skew-symmetric by
construction and keeps the simulated free dynamics energy-consistent.
"""

from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import Pose, planar_pose, rot_rpy, rot_z, wrap_angle

N_BASE = 3
N_ARM = 7
N_WB = N_BASE + N_ARM

_EZ = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class LinkParams:
    """One arm link: joint placement, inertial data, and joint limits.

    ``origin_xyz``/``origin_rpy`` place this joint's frame in the previous
    joint's frame; the joint then rotates about the new frame's z axis.
    ``com`` and ``inertia`` (about the COM) are expressed in the link frame.
    ``rotor_inertia`` is the reflected actuator inertia added to the mass
    matrix diagonal.
    """

    name: str
    origin_xyz: np.ndarray
    origin_rpy: np.ndarray
    mass: float
    com: np.ndarray
    inertia: np.ndarray
    rotor_inertia: float
    q_min: float
    q_max: float
    dq_max: float


@dataclass(frozen=True)
class RobotModel:
    """Base footprint, arm mount pose, and the 7 arm link descriptors."""

    footprint_length: float
    footprint_width: float
    arm_mount_xy: np.ndarray
    arm_mount_yaw: float
    arm_mount_height: float
    arm_links: tuple
    ee_offset_xyz: np.ndarray
    ee_offset_rpy: np.ndarray
    gravity: float = 9.81
    n_B: int = N_BASE
    n_A: int = N_ARM

    @property
    def n(self) -> int:
        return self.n_B + self.n_A

    @cached_property
    def q_min(self) -> np.ndarray:
        return np.array([l.q_min for l in self.arm_links])

    @cached_property
    def q_max(self) -> np.ndarray:
        return np.array([l.q_max for l in self.arm_links])

    @cached_property
    def dq_max(self) -> np.ndarray:
        return np.array([l.dq_max for l in self.arm_links])

    @cached_property
    def masses(self) -> np.ndarray:
        return np.array([l.mass for l in self.arm_links])

    @cached_property
    def inertias(self) -> np.ndarray:
        return np.stack([l.inertia for l in self.arm_links])

    @cached_property
    def rotor_inertias(self) -> np.ndarray:
        return np.array([l.rotor_inertia for l in self.arm_links])

    @cached_property
    def link_coms(self) -> np.ndarray:
        return np.stack([l.com for l in self.arm_links])

    @cached_property
    def _fixed_frames(self) -> tuple:
        xyz = np.stack([l.origin_xyz for l in self.arm_links])
        rot = np.stack([rot_rpy(*l.origin_rpy) for l in self.arm_links])
        return xyz, rot

    def mount_pose(self) -> Pose:
        """Arm base frame F_A in the base frame F_B."""
        return Pose(
            np.array([self.arm_mount_xy[0], self.arm_mount_xy[1], self.arm_mount_height]),
            rot_z(self.arm_mount_yaw),
        )


@dataclass
class JointState:
    """Whole-body joint state: planar base (x, y, yaw) plus 7 arm joints."""

    q_B: np.ndarray
    dq_B: np.ndarray
    q_A: np.ndarray
    dq_A: np.ndarray

    def __post_init__(self):
        self.q_B = np.asarray(self.q_B, dtype=float).reshape(N_BASE).copy()
        self.dq_B = np.asarray(self.dq_B, dtype=float).reshape(N_BASE).copy()
        self.q_A = np.asarray(self.q_A, dtype=float).reshape(N_ARM).copy()
        self.dq_A = np.asarray(self.dq_A, dtype=float).reshape(N_ARM).copy()

    @staticmethod
    def rest(q_A: Sequence[float]) -> "JointState":
        return JointState(np.zeros(N_BASE), np.zeros(N_BASE), np.asarray(q_A, float), np.zeros(N_ARM))

    def normalized(self, model: RobotModel) -> "JointState":
        """Wrap base yaw to (-pi, pi] and clamp arm joints to their limits."""
        q_B = self.q_B.copy()
        q_B[2] = wrap_angle(q_B[2])
        q_A = np.clip(self.q_A, model.q_min, model.q_max)
        dq_A = np.clip(self.dq_A, -model.dq_max, model.dq_max)
        return JointState(q_B, self.dq_B, q_A, dq_A)

    def copy(self) -> "JointState":
        return JointState(self.q_B, self.dq_B, self.q_A, self.dq_A)


@dataclass(frozen=True)
class ArmDynamicsTerms:
    """Arm-block dynamics: M_A ddq + C_A dq + g_A = tau."""

    M_A: np.ndarray
    C_A: np.ndarray
    g_A: np.ndarray


@dataclass(frozen=True)
class ArmKinematics:
    """Per-joint frames from one chain walk, all in the mount frame F_A.

    ``z[i]``/``p[i]`` are joint i's axis and origin, ``R[i]``/``com[i]``
    link i's orientation and center of mass, ``ee`` the end-effector pose.
    """

    z: np.ndarray
    p: np.ndarray
    R: np.ndarray
    com: np.ndarray
    ee: Pose


# ---------------------------------------------------------------------------
# model loading


def _as_vec(node, name: str, size: int, path) -> np.ndarray:
    try:
        v = np.asarray(node, dtype=float).reshape(size)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {size} numbers", path=path, field=name)
    if not np.all(np.isfinite(v)):
        raise ConfigError("non-finite value", path=path, field=name)
    return v


def _as_pos(node, name: str, path) -> float:
    try:
        v = float(node)
    except (TypeError, ValueError):
        raise ConfigError("expected a number", path=path, field=name)
    if not np.isfinite(v) or v <= 0.0:
        raise ConfigError(f"must be > 0, got {v}", path=path, field=name)
    return v


def _link_from_node(node: dict, idx: int, path) -> LinkParams:
    where = f"arm_links[{idx}]"
    if not isinstance(node, dict):
        raise ConfigError("link entry must be a mapping", path=path, field=where)

    def get(key):
        if key not in node:
            raise ConfigError("missing key", path=path, field=f"{where}.{key}")
        return node[key]

    inertia_node = get("inertia")
    inertia = np.asarray(inertia_node, dtype=float)
    if inertia.shape == (3,):
        inertia = np.diag(inertia)
    if inertia.shape != (3, 3):
        raise ConfigError("inertia must be 3 values or a 3x3 matrix", path=path, field=f"{where}.inertia")
    if not np.allclose(inertia, inertia.T, atol=1e-12):
        raise ConfigError("inertia must be symmetric", path=path, field=f"{where}.inertia")
    if np.min(np.linalg.eigvalsh(inertia)) <= 0.0:
        raise ConfigError("inertia must be positive definite", path=path, field=f"{where}.inertia")

    q_min = float(get("q_min"))
    q_max = float(get("q_max"))
    if not q_min < q_max:
        raise ConfigError(f"empty joint range [{q_min}, {q_max}]", path=path, field=f"{where}.q_min")

    return LinkParams(
        name=str(node.get("name", f"link{idx + 1}")),
        origin_xyz=_as_vec(get("origin_xyz"), f"{where}.origin_xyz", 3, path),
        origin_rpy=_as_vec(get("origin_rpy"), f"{where}.origin_rpy", 3, path),
        mass=_as_pos(get("mass"), f"{where}.mass", path),
        com=_as_vec(get("com"), f"{where}.com", 3, path),
        inertia=inertia,
        rotor_inertia=_as_pos(get("rotor_inertia"), f"{where}.rotor_inertia", path),
        q_min=q_min,
        q_max=q_max,
        dq_max=_as_pos(get("dq_max"), f"{where}.dq_max", path),
    )


def load_yaml(path: Union[str, Path]) -> dict:
    """Parse a YAML mapping, wrapping parser problems in ConfigError."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(exc), path=path)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", path=path, line=line)
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping", path=path)
    return doc


def robot_from_dict(doc: dict, path=None) -> RobotModel:
    base = doc.get("base")
    if not isinstance(base, dict):
        raise ConfigError("missing section", path=path, field="base")
    mount = doc.get("arm_mount")
    if not isinstance(mount, dict):
        raise ConfigError("missing section", path=path, field="arm_mount")
    links_node = doc.get("arm_links")
    if not isinstance(links_node, list) or len(links_node) != N_ARM:
        raise ConfigError(f"exactly {N_ARM} arm links required", path=path, field="arm_links")

    ee = doc.get("ee_offset", {})
    model = RobotModel(
        footprint_length=_as_pos(base.get("footprint_length"), "base.footprint_length", path),
        footprint_width=_as_pos(base.get("footprint_width"), "base.footprint_width", path),
        arm_mount_xy=np.array([float(mount.get("x", 0.0)), float(mount.get("y", 0.0))]),
        arm_mount_yaw=float(mount.get("yaw", 0.0)),
        arm_mount_height=_as_pos(mount.get("height"), "arm_mount.height", path),
        arm_links=tuple(_link_from_node(n, i, path) for i, n in enumerate(links_node)),
        ee_offset_xyz=_as_vec(ee.get("xyz", [0.0, 0.0, 0.0]), "ee_offset.xyz", 3, path),
        ee_offset_rpy=_as_vec(ee.get("rpy", [0.0, 0.0, 0.0]), "ee_offset.rpy", 3, path),
        gravity=float(doc.get("gravity", 9.81)),
    )
    if model.gravity < 0.0:
        raise ConfigError("gravity magnitude must be >= 0", path=path, field="gravity")
    return model


def load_robot(path: Union[str, Path]) -> RobotModel:
    """Load and validate a robot-description YAML file."""
    return robot_from_dict(load_yaml(path), path=path)


def default_robot() -> RobotModel:
    """The packaged default platform + 7-DoF arm description."""
    with resources.as_file(resources.files("tactilewbc.data") / "robot.yaml") as p:
        return load_robot(p)


# ---------------------------------------------------------------------------
# kinematics


def arm_kinematics(model: RobotModel, q_A: np.ndarray) -> ArmKinematics:
    """Walk the chain once; all outputs in the mount frame F_A."""
    xyz, rot = model._fixed_frames
    cq, sq = np.cos(q_A), np.sin(q_A)
    z = np.empty((N_ARM, 3))
    p = np.empty((N_ARM, 3))
    R_all = np.empty((N_ARM, 3, 3))
    R = np.eye(3)
    t = np.zeros(3)
    for i in range(N_ARM):
        t = t + R @ xyz[i]
        R = R @ rot[i]
        z[i] = R[:, 2]
        p[i] = t
        # right-multiply by Rz(q): mixes the first two columns only
        c, s = cq[i], sq[i]
        R = np.column_stack((R[:, 0] * c + R[:, 1] * s, -R[:, 0] * s + R[:, 1] * c, R[:, 2]))
        R_all[i] = R
    com = p + np.einsum("iab,ib->ia", R_all, model.link_coms)
    ee = Pose(t + R @ model.ee_offset_xyz, R @ rot_rpy(*model.ee_offset_rpy))
    return ArmKinematics(z=z, p=p, R=R_all, com=com, ee=ee)


def base_pose(state: JointState) -> Pose:
    """Planar base pose in the world frame (origin on the floor plane)."""
    return planar_pose(state.q_B[0], state.q_B[1], state.q_B[2])


def world_mount_pose(model: RobotModel, state: JointState) -> Pose:
    return base_pose(state).compose(model.mount_pose())


def arm_forward_kinematics(model: RobotModel, q_A: np.ndarray) -> Pose:
    """End-effector pose in the mount frame F_A."""
    return arm_kinematics(model, q_A).ee


def forward_kinematics(model: RobotModel, state: JointState) -> Pose:
    """End-effector pose in the world frame."""
    return world_mount_pose(model, state).compose(arm_kinematics(model, state.q_A).ee)


def arm_jacobian(model: RobotModel, q_A: np.ndarray, kin: Optional[ArmKinematics] = None) -> np.ndarray:
    """Geometric arm Jacobian (6x7) at the end-effector, in frame F_A."""
    if kin is None:
        kin = arm_kinematics(model, q_A)
    J = np.empty((6, N_ARM))
    J[:3] = np.cross(kin.z, kin.ee.position[None, :] - kin.p).T
    J[3:] = kin.z.T
    return J


def whole_body_jacobian(model: RobotModel, state: JointState, kin: Optional[ArmKinematics] = None) -> np.ndarray:
    """Geometric whole-body Jacobian (6x10) at the end-effector, world frame.

    Columns are (base x, base y, base yaw, arm joints 1..7).
    """
    if kin is None:
        kin = arm_kinematics(model, state.q_A)
    T_wa = world_mount_pose(model, state)
    p_ee = T_wa.transform_point(kin.ee.position)

    J = np.zeros((6, N_WB))
    J[0, 0] = 1.0
    J[1, 1] = 1.0
    # yaw: revolute about the vertical axis through the base origin
    r = p_ee - np.array([state.q_B[0], state.q_B[1], 0.0])
    J[:3, 2] = np.cross(_EZ, r)
    J[3:, 2] = _EZ

    J_arm = arm_jacobian(model, state.q_A, kin=kin)
    J[:3, N_BASE:] = T_wa.rotation @ J_arm[:3]
    J[3:, N_BASE:] = T_wa.rotation @ J_arm[3:]
    return J


# ---------------------------------------------------------------------------
# dynamics
#
# All link COM Jacobians are built in one stacked pass: A[i, j] = z_j x
# (c_i - p_j) for j <= i (zero above the diagonal), Jw[i, :, j] = z_j for
# j <= i. The mass-matrix partials follow from the fact that rotating joint
# k spins every quantity distal to it about z_k, which gives closed-form
# derivatives of A, Jw, and the rotated link inertias without finite
# differencing.

_LOWER = np.tril(np.ones((N_ARM, N_ARM)))  # [i, j] = 1 for j <= i
_K_LT_J = np.triu(np.ones((N_ARM, N_ARM)), k=1)  # [k, j] = 1 for k < j
_J_LE_K = _LOWER  # [k, j] = 1 for j <= k


def _com_jacobians(kin: ArmKinematics) -> tuple:
    """Stacked per-link COM Jacobians: A (links, joints, 3) and Jw (links, 3, joints).

    Pure function of ``kin``; memoized on the instance since mass, Coriolis,
    and gravity all start from the same stack within one control step.
    """
    cached = kin.__dict__.get("_com_jac")
    if cached is None:
        diff = kin.com[:, None, :] - kin.p[None, :, :]
        A = np.cross(kin.z[None, :, :], diff) * _LOWER[:, :, None]
        Jw = kin.z.T[None, :, :] * _LOWER[:, None, :]
        cached = (A, Jw)
        object.__setattr__(kin, "_com_jac", cached)
    return cached


def _rotated_inertias(model: RobotModel, kin: ArmKinematics) -> np.ndarray:
    """World-frame link inertias R I R^T, memoized per kinematics instance."""
    cached = kin.__dict__.get("_rot_inertia")
    if cached is None:
        cached = np.einsum("iab,ibc,idc->iad", kin.R, model.inertias, kin.R)
        object.__setattr__(kin, "_rot_inertia", cached)
    return cached


def arm_mass_matrix(model: RobotModel, q_A: np.ndarray, kin: Optional[ArmKinematics] = None) -> np.ndarray:
    """Arm mass matrix M_A(q) including reflected rotor inertias."""
    if kin is None:
        kin = arm_kinematics(model, q_A)
    A, Jw = _com_jacobians(kin)
    W = _rotated_inertias(model, kin)
    M = np.einsum("i,ika,ija->kj", model.masses, A, A)
    M += np.einsum("iak,iab,ibj->kj", Jw, W, Jw)
    M[np.diag_indices(N_ARM)] += model.rotor_inertias
    return M


def arm_mass_partials(model: RobotModel, q_A: np.ndarray, kin: Optional[ArmKinematics] = None) -> np.ndarray:
    """Partial derivatives dM_A/dq_k, stacked as shape (7, 7, 7), D[k] = dM/dq_k.

    Feeds the Christoffel Coriolis factorization. Column j of link i's COM
    Jacobian differentiates to z_k x A[i, j] when k < j (the whole column
    rides on joint k) and to z_j x A[i, k] when j <= k <= i (only the COM
    endpoint moves); the rotated link inertias differentiate to
    [z_k]x W + ([z_k]x W)^T.
    """
    if kin is None:
        kin = arm_kinematics(model, q_A)
    z = kin.z
    A, Jw = _com_jacobians(kin)
    W = _rotated_inertias(model, kin)
    S = np.zeros((N_ARM, 3, 3))
    S[:, 0, 1], S[:, 0, 2] = -z[:, 2], z[:, 1]
    S[:, 1, 0], S[:, 1, 2] = z[:, 2], -z[:, 0]
    S[:, 2, 0], S[:, 2, 1] = -z[:, 1], z[:, 0]

    # dA[k, i, j] = z_k x A[i, j] for k < j, z_j x A[i, k] for j <= k
    dA = np.einsum("kab,ijb->kija", S, A) * _K_LT_J[:, None, :, None]
    dA += np.einsum("jab,ikb->kija", S, A) * _J_LE_K[:, None, :, None]

    X = np.einsum("i,kija,ila->kjl", model.masses, dA, A)
    dM = X + X.transpose(0, 2, 1)

    # dJw[k, i, a, j] = (z_k x z_j)_a for k < j <= i
    zxz = np.einsum("kab,jb->kja", S, z)
    dJw = zxz.transpose(0, 2, 1)[:, None, :, :] * (_K_LT_J[:, None, None, :] * _LOWER[None, :, None, :])
    # dW[k, i] = [z_k]x W_i + ([z_k]x W_i)^T for k <= i
    SW = np.einsum("kab,ibc->kiac", S, W)
    dW = (SW + SW.transpose(0, 1, 3, 2)) * _J_LE_K.T[:, :, None, None]

    Y = np.einsum("kiaj,iab,ibl->kjl", dJw, W, Jw)
    dM += Y + Y.transpose(0, 2, 1)
    dM += np.einsum("iaj,kiab,ibl->kjl", Jw, dW, Jw)
    return dM


def arm_gravity(model: RobotModel, q_A: np.ndarray, kin: Optional[ArmKinematics] = None) -> np.ndarray:
    """Gravity torque vector g_A with g_A = dU/dq, U the potential energy."""
    if kin is None:
        kin = arm_kinematics(model, q_A)
    A, _ = _com_jacobians(kin)
    return model.gravity * np.einsum("i,ij->j", model.masses, A[:, :, 2])


def potential_energy(model: RobotModel, q_A: np.ndarray) -> float:
    """Gravitational potential energy of the arm above the mount plane."""
    kin = arm_kinematics(model, q_A)
    return model.gravity * float(sum(l.mass * kin.com[i][2] for i, l in enumerate(model.arm_links)))


def coriolis_matrix(model: RobotModel, q_A: np.ndarray, dq_A: np.ndarray,
                    kin: Optional[ArmKinematics] = None,
                    partials: Optional[np.ndarray] = None) -> np.ndarray:
    """Christoffel-symbol Coriolis matrix C_A(q, dq)."""
    D = arm_mass_partials(model, q_A, kin=kin) if partials is None else partials
    term1 = np.einsum("kij,k->ij", D, dq_A)
    term2 = np.einsum("jik,k->ij", D, dq_A)
    term3 = np.einsum("ijk,k->ij", D, dq_A)
    return 0.5 * (term1 + term2 - term3)


def arm_dynamics(model: RobotModel, q_A: np.ndarray, dq_A: np.ndarray) -> ArmDynamicsTerms:
    """Mass, Coriolis, and gravity terms of the arm block."""
    kin = arm_kinematics(model, q_A)
    M = arm_mass_matrix(model, q_A, kin=kin)
    C = coriolis_matrix(model, q_A, dq_A, kin=kin)
    g = arm_gravity(model, q_A, kin=kin)
    return ArmDynamicsTerms(M_A=M, C_A=C, g_A=g)


def whole_body_mass(model: RobotModel, q_A: np.ndarray, params, M_A: Optional[np.ndarray] = None) -> np.ndarray:
    """Block-diagonal whole-body mass: virtual base mass M_v over M_A(q).

    ``params`` is anything exposing a 3x3 ``M_v`` (BaseAdmittanceParams) or a
    raw 3x3 array.
    """
    M_v = np.asarray(getattr(params, "M_v", params), dtype=float)
    if M_A is None:
        M_A = arm_mass_matrix(model, q_A)
    M = np.zeros((N_WB, N_WB))
    M[:N_BASE, :N_BASE] = M_v
    M[N_BASE:, N_BASE:] = M_A
    return M
