"""Rotation and pose helpers used by the kinematics, control, and sim layers.

Orientations are kept as 3x3 rotation matrices internally; the 6-vector pose
representation used for logging and Cartesian errors carries position plus the
rotation vector (axis-angle) of the orientation.
"""

from dataclasses import dataclass

import numpy as np


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Fixed-axis roll/pitch/yaw convention: R = Rz(yaw) Ry(pitch) Rx(roll)."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def planar_rot(angle: float) -> np.ndarray:
    """2x2 rotation about z by ``angle``."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) of a rotation matrix.

    Handles the small-angle and near-pi cases; angle is in [0, pi].
    """
    trace = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    angle = np.arccos(trace)
    if angle < 1e-10:
        # first-order: R ~ I + [w]x
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle > np.pi - 1e-6:
        # near pi the off-diagonal sine terms vanish; recover axis from R + I
        B = 0.5 * (R + np.eye(3))
        axis = np.sqrt(np.maximum(np.diag(B), 0.0))
        # fix signs using the largest component
        k = int(np.argmax(axis))
        if axis[k] > 0.0:
            s = np.array([B[0, k], B[1, k], B[2, k]])
            axis = s / axis[k]
            axis = axis / np.linalg.norm(axis)
        return angle * axis
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return angle / (2.0 * np.sin(angle)) * w


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = (a + np.pi) % (2.0 * np.pi) - np.pi
    if a == -np.pi:
        a = np.pi
    return float(a)


@dataclass(frozen=True)
class Pose:
    """Rigid transform: ``position`` in meters, ``rotation`` a 3x3 matrix."""

    position: np.ndarray
    rotation: np.ndarray

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.eye(3))

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.position + self.rotation @ other.position,
            self.rotation @ other.rotation,
        )

    def transform_point(self, p: np.ndarray) -> np.ndarray:
        return self.position + self.rotation @ p

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(-rt @ self.position, rt)

    def as_vector(self) -> np.ndarray:
        """6-vector: position followed by the rotation vector."""
        return np.concatenate([self.position, rotation_log(self.rotation)])


def pose_error(desired: Pose, current: Pose) -> np.ndarray:
    """6-vector pose difference: position delta plus axis-angle of R_d R^T.

    Expressed in the common parent frame of both poses.
    """
    dp = desired.position - current.position
    dr = rotation_log(desired.rotation @ current.rotation.T)
    return np.concatenate([dp, dr])


def planar_pose(x: float, y: float, yaw: float, z: float = 0.0) -> Pose:
    return Pose(np.array([x, y, z]), rot_z(yaw))
