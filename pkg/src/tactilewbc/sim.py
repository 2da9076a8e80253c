"""Deterministic fixed-step closed-loop simulator.

One step, at a fixed 1 kHz for both plant and controller:

1. evaluate the desired end-effector trajectory and scripted force events;
2. compute obstacle contact forces and attribute each obstacle's force to
   the geometrically nearest taxel on the contacted edge;
3. encode taxel forces to integer counts (optional Gaussian noise) and
   decode them back through the calibration, which is what the controller
   gets to see;
4. reconstruct the virtual base wrench (taxel aggregation, or the
   follow-me estimate that adds the arm's reflected load);
5. run the selected controller;
6. integrate the arm torque dynamics and the base admittance with
   semi-implicit Euler and advance the base pose with the new velocity.

The arm plant is internally gravity-compensated (the applied torque is the
controller output plus g_A), so controllers stay pure force laws. The base
is velocity-controlled and non-backdrivable: contact affects it only
through the tactile admittance channel, never by direct pushback.

The integrator choice and rate are sealed so stored golden logs stay
stable across runs and machines.
"""

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .control import (
    ControlOutput,
    ControllerGains,
    base_admittance_step,
    cartesian_impedance_force,
    follow_me_torques,
    follow_me_virtual_torque,
    impedance_step,
    resolve_critical_damping,
    with_overrides,
)
from .errors import ConfigError, DivergenceError
from .geometry import Pose, planar_rot
from .model import (
    JointState,
    RobotModel,
    arm_jacobian,
    arm_kinematics,
    arm_mass_matrix,
    coriolis_matrix,
    load_yaml,
    whole_body_jacobian,
    world_mount_pose,
    N_ARM,
)
from .taxels import (
    TaxelArray,
    base_external_wrench,
    default_taxel_array,
    simulate_counts,
)

DEFAULT_OBSTACLE_STIFFNESS = 8772.0  # N/m: 100 N over 11.4 mm of foam travel
CONTACT_DAMPING_RAMP = 1e-3  # m of penetration over which damping fades in

# velocity / position sanity envelope; beyond this the run has diverged
_MAX_BASE_SPEED = 20.0
_MAX_ARM_SPEED = 50.0
_MAX_BASE_RANGE = 1e3


@dataclass(frozen=True)
class SimConfig:
    """Fixed-step integration settings; dt is shared by plant and controller."""

    dt: float = 1e-3
    duration: Optional[float] = None  # None: take the scenario's
    seed: Optional[int] = None  # None: take the scenario's

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.duration is not None and self.duration < self.dt:
            raise ValueError("duration must be >= dt")


@dataclass(frozen=True)
class ForceEvent:
    """A scripted push: on a taxel (inward, no direction field) or on the
    end-effector (world-frame direction). ``ramp`` fades the magnitude in
    and out linearly to keep the input continuous."""

    t_start: float
    t_end: float
    target: Union[int, str]
    magnitude: float
    direction: Optional[np.ndarray] = None
    ramp: float = 0.0

    def scale(self, t: float) -> float:
        if not self.t_start <= t < self.t_end:
            return 0.0
        if self.ramp <= 0.0:
            return 1.0
        up = (t - self.t_start) / self.ramp
        down = (self.t_end - t) / self.ramp
        return float(min(1.0, up, down))


@dataclass(frozen=True)
class ObstacleModel:
    """A fixed planar line segment with a compliant surface."""

    p1: np.ndarray
    p2: np.ndarray
    stiffness: float = DEFAULT_OBSTACLE_STIFFNESS
    damping: float = 150.0

    def __post_init__(self):
        object.__setattr__(self, "p1", np.asarray(self.p1, dtype=float).reshape(2).copy())
        object.__setattr__(self, "p2", np.asarray(self.p2, dtype=float).reshape(2).copy())
        if self.stiffness <= 0.0:
            raise ValueError("obstacle stiffness must be > 0")
        if self.damping < 0.0:
            raise ValueError("obstacle damping must be >= 0")


@dataclass(frozen=True)
class TrajectorySegment:
    """Constant-velocity end-effector displacement over a time window."""

    t_start: float
    t_end: float
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(3).copy())


@dataclass(frozen=True)
class Scenario:
    """A scripted run: controller choice, pushes, obstacles, trajectory."""

    name: str
    controller: str  # impedance | follow_me
    duration: float
    events: tuple = ()
    obstacles: tuple = ()
    trajectory: tuple = ()
    noise_sigma: float = 0.0
    seed: int = 0
    tactile_enabled: bool = True
    gain_overrides: Optional[dict] = None
    initial_q_A: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.controller not in ("impedance", "follow_me"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.duration <= 0.0:
            raise ValueError("duration must be > 0")
        for ev in self.events:
            if not 0.0 <= ev.t_start < ev.t_end <= self.duration:
                raise ValueError(f"event window [{ev.t_start}, {ev.t_end}] outside run duration")
        if self.controller == "follow_me" and self.trajectory:
            raise ValueError("follow_me holds the arm pose; trajectories are not supported")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class SimSnapshot:
    """Everything observable about one step; immutable, safe to hand out."""

    t: float
    state: JointState
    readings: tuple
    tau_v_ext: np.ndarray
    ee: Pose
    x_d: Pose
    F_ee_ext: np.ndarray
    out: ControlOutput


# ---------------------------------------------------------------------------
# contact


def contact_forces(state: JointState, obstacles: Sequence[ObstacleModel],
                   model: RobotModel, array: TaxelArray,
                   prev_depths: Optional[Dict[int, float]] = None,
                   dt: Optional[float] = None) -> Tuple[Dict[int, float], Dict[int, float]]:
    """Per-taxel contact forces from obstacle penetration.

    Returns (forces by taxel index, penetration depth by obstacle index).
    Force = stiffness * depth + damping * depth rate, with the damping term
    faded in over the first millimeter so the force is continuous at first
    touch. Each obstacle loads only the nearest taxel on the edge it
    penetrates; an uninstrumented edge produces no reading.
    """
    half_l = model.footprint_length / 2.0
    half_w = model.footprint_width / 2.0
    x, y, yaw = state.q_B
    R_t = planar_rot(-yaw)
    forces: Dict[int, float] = {}
    depths: Dict[int, float] = {}
    for k, obs in enumerate(obstacles):
        p1 = R_t @ (obs.p1 - (x, y))
        p2 = R_t @ (obs.p2 - (x, y))
        hit = _deepest_point(p1, p2, half_l, half_w)
        if hit is None:
            depths[k] = 0.0
            continue
        point, depth, face = hit
        depths[k] = depth
        force = obs.stiffness * depth
        if prev_depths is not None and dt:
            rate = (depth - prev_depths.get(k, 0.0)) / dt
            force += obs.damping * min(depth / CONTACT_DAMPING_RAMP, 1.0) * rate
        force = max(force, 0.0)
        index = _nearest_taxel_on_face(array, point, face, half_l, half_w)
        if index is not None and force > 0.0:
            forces[index] = forces.get(index, 0.0) + force
    return forces, depths


def _deepest_point(p1: np.ndarray, p2: np.ndarray, half_l: float, half_w: float,
                   samples: int = 65) -> Optional[tuple]:
    """Deepest footprint intrusion along a segment, in the base frame.

    Depth of an interior point is its distance to the nearest face. Returns
    (point, depth, face) with face one of +x/-x/+y/-y, or None if the
    segment stays outside.
    """
    ts = np.linspace(0.0, 1.0, samples)
    pts = p1[None, :] * (1.0 - ts)[:, None] + p2[None, :] * ts[:, None]
    dx = half_l - np.abs(pts[:, 0])
    dy = half_w - np.abs(pts[:, 1])
    inside = (dx >= 0.0) & (dy >= 0.0)
    if not np.any(inside):
        return None
    depth = np.where(inside, np.minimum(dx, dy), -np.inf)
    k = int(np.argmax(depth))
    point = pts[k]
    if dx[k] < dy[k]:
        face = "+x" if point[0] >= 0.0 else "-x"
    else:
        face = "+y" if point[1] >= 0.0 else "-y"
    return point, float(depth[k]), face


def _nearest_taxel_on_face(array: TaxelArray, point: np.ndarray, face: str,
                           half_l: float, half_w: float) -> Optional[int]:
    axis, sign, extent = {"+x": (0, 1.0, half_l), "-x": (0, -1.0, half_l),
                          "+y": (1, 1.0, half_w), "-y": (1, -1.0, half_w)}[face]
    on_face = [g for g in array.geometry if abs(g.r[axis] - sign * extent) < 1e-6]
    if not on_face:
        return None
    best = min(on_face, key=lambda g: float(np.hypot(*(g.r - point))))
    return best.index


# ---------------------------------------------------------------------------
# scenario files


def _event_from_node(node: dict, idx: int, duration: float, path) -> ForceEvent:
    where = f"events[{idx}]"
    if not isinstance(node, dict):
        raise ConfigError("event must be a mapping", path=path, field=where)
    target = node.get("target")
    if target == "ee":
        direction = node.get("direction")
        if direction is None:
            raise ConfigError("end-effector events need a direction", path=path, field=f"{where}.direction")
        direction = np.asarray(direction, dtype=float).reshape(3)
        norm = float(np.linalg.norm(direction))
        if norm < 1e-12:
            raise ConfigError("direction must be nonzero", path=path, field=f"{where}.direction")
        direction = direction / norm
    else:
        try:
            target = int(target)
        except (TypeError, ValueError):
            raise ConfigError(f"target must be 'ee' or a taxel index, got {target!r}",
                              path=path, field=f"{where}.target")
        if "direction" in node:
            raise ConfigError("taxel pushes act along the taxel axis; drop the direction field",
                              path=path, field=f"{where}.direction")
        direction = None
    try:
        ev = ForceEvent(t_start=float(node["t_start"]), t_end=float(node["t_end"]),
                        target=target, magnitude=float(node["magnitude"]),
                        direction=direction, ramp=float(node.get("ramp", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad event: {exc}", path=path, field=where)
    if not 0.0 <= ev.t_start < ev.t_end <= duration:
        raise ConfigError(f"event window [{ev.t_start}, {ev.t_end}] outside run duration",
                          path=path, field=where)
    if ev.magnitude < 0.0:
        raise ConfigError("magnitude must be >= 0", path=path, field=f"{where}.magnitude")
    return ev


def scenario_from_dict(doc: dict, path=None) -> Scenario:
    name = str(doc.get("name", Path(path).stem if path else "scenario"))
    controller = doc.get("controller")
    if controller not in ("impedance", "follow_me"):
        raise ConfigError("controller must be 'impedance' or 'follow_me'", path=path, field="controller")
    try:
        duration = float(doc["duration"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError("missing numeric duration", path=path, field="duration")

    events = tuple(_event_from_node(n, i, duration, path) for i, n in enumerate(doc.get("events") or []))

    obstacles = []
    for i, node in enumerate(doc.get("obstacles") or []):
        where = f"obstacles[{i}]"
        try:
            seg = np.asarray(node["segment"], dtype=float).reshape(2, 2)
            obstacles.append(ObstacleModel(
                p1=seg[0], p2=seg[1],
                stiffness=float(node.get("stiffness", DEFAULT_OBSTACLE_STIFFNESS)),
                damping=float(node.get("damping", 150.0)),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad obstacle: {exc}", path=path, field=where)

    trajectory = []
    for i, node in enumerate(doc.get("trajectory") or []):
        where = f"trajectory[{i}]"
        try:
            seg = TrajectorySegment(t_start=float(node["t_start"]), t_end=float(node["t_end"]),
                                    velocity=np.asarray(node["velocity"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad trajectory segment: {exc}", path=path, field=where)
        if not 0.0 <= seg.t_start < seg.t_end <= duration:
            raise ConfigError("trajectory window outside run duration", path=path, field=where)
        trajectory.append(seg)

    initial_q_A = doc.get("initial_q_A")
    if initial_q_A is not None:
        initial_q_A = np.asarray(initial_q_A, dtype=float).reshape(N_ARM)

    try:
        return Scenario(
            name=name, controller=controller, duration=duration,
            events=events, obstacles=tuple(obstacles), trajectory=tuple(trajectory),
            noise_sigma=float(doc.get("noise_sigma", 0.0)),
            seed=int(doc.get("seed", 0)),
            tactile_enabled=bool(doc.get("tactile_enabled", True)),
            gain_overrides=doc.get("gains"),
            initial_q_A=initial_q_A,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), path=path)


def load_scenario(path: Union[str, Path]) -> Scenario:
    return scenario_from_dict(load_yaml(path), path=path)


def bundled_scenario_names() -> List[str]:
    root = resources.files("tactilewbc.data") / "scenarios"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def bundled_scenario(name: str) -> Scenario:
    entry = resources.files("tactilewbc.data") / "scenarios" / f"{name}.yaml"
    if not entry.is_file():
        raise ConfigError(f"no bundled scenario {name!r}; available: {', '.join(bundled_scenario_names())}")
    with resources.as_file(entry) as p:
        return load_scenario(p)


# ---------------------------------------------------------------------------
# logging


LOG_GROUPS = (
    ("q_B", ("x", "y", "yaw")),
    ("dq_B", ("x", "y", "yaw")),
    ("q_A", tuple(str(i) for i in range(1, 8))),
    ("dq_A", tuple(str(i) for i in range(1, 8))),
    ("ee", ("x", "y", "z", "rx", "ry", "rz")),
    ("x_d", ("x", "y", "z", "rx", "ry", "rz")),
    ("taxel", tuple(str(i) for i in range(1, 12))),
    ("tau_v_ext", ("x", "y", "yaw")),
    ("F_cmd", ("x", "y", "z", "rx", "ry", "rz")),
    ("tau_v", ("x", "y", "yaw")),
    ("tau_A", tuple(str(i) for i in range(1, 8))),
    ("F_ee_ext", ("x", "y", "z", "rx", "ry", "rz")),
)

LOG_COLUMNS = ("t",) + tuple(f"{g}_{s}" for g, subs in LOG_GROUPS for s in subs)


@dataclass(frozen=True)
class SimLog:
    """Uniformly sampled run record: one row per control step."""

    scenario: str
    dt: float
    columns: tuple
    data: np.ndarray

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(f"no log column {name!r}")

    def block(self, prefix: str) -> np.ndarray:
        idx = [i for i, c in enumerate(self.columns) if c == prefix or c.startswith(prefix + "_")]
        if not idx:
            raise KeyError(f"no log columns with prefix {prefix!r}")
        return self.data[:, idx]

    @property
    def t(self) -> np.ndarray:
        return self.data[:, 0]

    def to_csv(self, path: Union[str, Path]) -> None:
        lines = [",".join(self.columns)]
        for row in self.data:
            lines.append(",".join(repr(float(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n")

    def to_jsonl(self, path: Union[str, Path]) -> None:
        with open(path, "w") as fh:
            for row in self.data:
                obj = {"t": float(row[0])}
                col = 1
                for group, subs in LOG_GROUPS:
                    obj[group] = [float(v) for v in row[col : col + len(subs)]]
                    col += len(subs)
                fh.write(json.dumps(obj) + "\n")

    def summary(self) -> dict:
        taxel = self.block("taxel")
        peaks = taxel.max(axis=0)
        err = np.linalg.norm(self.block("ee")[:, :3] - self.block("x_d")[:, :3], axis=1)
        return {
            "scenario": self.scenario,
            "steps": int(self.data.shape[0]),
            "duration": float(self.data.shape[0] * self.dt),
            "peak_taxel_force": float(peaks.max(initial=0.0)),
            "peak_taxel_index": int(np.argmax(peaks) + 1) if peaks.max(initial=0.0) > 0.0 else None,
            "taxel_peaks": [float(p) for p in peaks],
            "max_ee_tracking_error": float(err.max()),
            "final_ee_tracking_error": float(err[-1]),
            "final_base_pose": [float(v) for v in self.block("q_B")[-1]],
        }


def log_from_csv(path: Union[str, Path]) -> SimLog:
    """Rebuild a SimLog from a CSV written by to_csv; floats round-trip."""
    path = Path(path)
    lines = path.read_text().strip().splitlines()
    if not lines or tuple(lines[0].split(",")) != LOG_COLUMNS:
        raise ConfigError("log header does not match the run log schema", path=path, line=1)
    if len(lines) < 2:
        raise ConfigError("log has no data rows", path=path)
    try:
        data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    except ValueError as exc:
        raise ConfigError(f"bad log row: {exc}", path=path)
    if data.shape[1] != len(LOG_COLUMNS):
        raise ConfigError("log row width does not match header", path=path)
    dt = float(data[1, 0] - data[0, 0]) if data.shape[0] > 1 else 0.0
    return SimLog(scenario=path.stem, dt=dt, columns=LOG_COLUMNS, data=data)


def log_from_jsonl(path: Union[str, Path]) -> SimLog:
    """Rebuild a SimLog from a JSON-lines file written by to_jsonl."""
    path = Path(path)
    rows = []
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                row = [obj["t"]]
                for group, subs in LOG_GROUPS:
                    vals = obj[group]
                    if len(vals) != len(subs):
                        raise ValueError(f"group {group} expects {len(subs)} values")
                    row.extend(vals)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad log record: {exc}", path=path, line=ln)
            rows.append(row)
    if not rows:
        raise ConfigError("log has no records", path=path)
    data = np.array(rows, dtype=float)
    dt = float(data[1, 0] - data[0, 0]) if data.shape[0] > 1 else 0.0
    return SimLog(scenario=path.stem, dt=dt, columns=LOG_COLUMNS, data=data)


def summary_text(summary: dict) -> str:
    lines = [f"scenario: {summary['scenario']}",
             f"steps: {summary['steps']} ({summary['duration']:.3f} s)",
             f"peak taxel force: {summary['peak_taxel_force']:.3f} N"
             + (f" (taxel {summary['peak_taxel_index']})" if summary["peak_taxel_index"] else ""),
             "taxel peaks: " + " ".join(f"{p:.2f}" for p in summary["taxel_peaks"]),
             f"max EE tracking error: {summary['max_ee_tracking_error'] * 1e3:.2f} mm",
             f"final EE tracking error: {summary['final_ee_tracking_error'] * 1e3:.2f} mm",
             "final base pose: x={:+.4f} m y={:+.4f} m yaw={:+.4f} rad".format(*summary["final_base_pose"])]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# the simulator


class Simulator:
    """Steppable closed-loop simulation of one scenario.

    Owns the mutable integration state; every public observable leaves as
    an immutable snapshot. ``step()`` advances exactly one dt.
    """

    def __init__(self, scenario: Scenario, model: RobotModel, gains: ControllerGains,
                 array: TaxelArray, config: SimConfig = SimConfig()):
        gains = with_overrides(gains, scenario.gain_overrides)
        self.scenario = scenario
        self.model = model
        self.gains = gains
        self.array = array
        self.dt = config.dt
        self.duration = config.duration if config.duration is not None else scenario.duration
        self.seed = config.seed if config.seed is not None else scenario.seed
        self.rng = np.random.default_rng(self.seed)
        self.n_steps = int(round(self.duration / self.dt))

        known = set(array.indices)
        for ev in scenario.events:
            if ev.target != "ee" and ev.target not in known:
                raise ConfigError(f"event targets taxel {ev.target}, not present in the layout")

        q_A0 = scenario.initial_q_A if scenario.initial_q_A is not None else gains.impedance.q_A_ref
        q_A0 = np.clip(q_A0, model.q_min, model.q_max)
        self.state = JointState.rest(q_A0)
        self.k = 0
        self._depths: Dict[int, float] = {}
        self._controller = scenario.controller
        self._extra_events: List[ForceEvent] = []

        # impedance: world-frame anchor; follow_me: mount-frame arm anchor
        kin0 = arm_kinematics(model, q_A0)
        self._x0_world = world_mount_pose(model, self.state).compose(kin0.ee)
        self._x0_arm = kin0.ee
        # follow-me holds the configuration it started in
        self._fm_q_ref = q_A0.copy()

    @property
    def t(self) -> float:
        return self.k * self.dt

    # -- scripted inputs ---------------------------------------------------

    def _desired_pose(self, t: float) -> Tuple[Pose, np.ndarray]:
        offset = np.zeros(3)
        vel = np.zeros(3)
        for seg in self.scenario.trajectory:
            lo, hi = seg.t_start, seg.t_end
            offset += seg.velocity * max(0.0, min(t, hi) - lo)
            if lo <= t < hi:
                vel += seg.velocity
        x_d = Pose(self._x0_world.position + offset, self._x0_world.rotation)
        return x_d, np.concatenate([vel, np.zeros(3)])

    def _event_inputs(self, t: float) -> Tuple[np.ndarray, Dict[int, float]]:
        """Active scripted pushes: (world EE wrench, taxel forces by index)."""
        F_ee = np.zeros(6)
        taxel: Dict[int, float] = {}
        for ev in list(self.scenario.events) + self._extra_events:
            s = ev.scale(t)
            if s == 0.0:
                continue
            if ev.target == "ee":
                F_ee[:3] += s * ev.magnitude * ev.direction
            else:
                taxel[ev.target] = taxel.get(ev.target, 0.0) + s * ev.magnitude
        return F_ee, taxel

    # -- one step ----------------------------------------------------------

    def step(self) -> SimSnapshot:
        t = self.t
        state = self.state
        model = self.model
        gains = self.gains.impedance
        base_params = self.gains.base

        kin = arm_kinematics(model, state.q_A)
        M_A = arm_mass_matrix(model, state.q_A, kin=kin)

        # scripted inputs and contact
        F_ee_ext, taxel_forces = self._event_inputs(t)
        contact, self._depths = contact_forces(state, self.scenario.obstacles, model,
                                               self.array, self._depths, self.dt)
        for idx, f in contact.items():
            taxel_forces[idx] = taxel_forces.get(idx, 0.0) + f

        # sensor channel: force -> counts -> calibrated reading
        counts = {g.index: simulate_counts(self.array.cal_for(g.index),
                                           taxel_forces.get(g.index, 0.0),
                                           rng=self.rng, noise_sigma=self.scenario.noise_sigma)
                  for g in self.array.geometry}
        readings = tuple(self.array.decode(counts))

        # measured arm external torque (the plant-side truth the controller sees)
        J_wb = whole_body_jacobian(model, state, kin=kin)
        tau_A_ext = J_wb[:, 3:].T @ F_ee_ext

        if self._controller == "impedance":
            tau_v_ext = base_external_wrench(readings, self.array.geometry)
            if not self.scenario.tactile_enabled:
                tau_v_ext = np.zeros(3)
            x_d, dx_d = self._desired_pose(t)
            out = self._impedance_output(state, kin, M_A, J_wb, x_d, dx_d, tau_v_ext)
        else:
            tau_v_ext = follow_me_virtual_torque(model, readings, self.array.geometry,
                                                 state.q_A, tau_A_ext, kin=kin, M_A=M_A)
            if not self.scenario.tactile_enabled:
                tau_v_ext = np.zeros(3)
            x_d = world_mount_pose(model, state).compose(self._x0_arm)
            out = self._follow_me_output(state, kin, M_A)

        # arm plant: internally gravity-compensated torque control
        C_A = coriolis_matrix(model, state.q_A, state.dq_A, kin=kin)
        ddq_A = np.linalg.solve(M_A, out.tau_A + tau_A_ext - C_A @ state.dq_A)
        dq_A = state.dq_A + self.dt * ddq_A
        q_A = state.q_A + self.dt * dq_A

        # base admittance in the base frame, pose advance in the world frame
        yaw = state.q_B[2]
        if self._controller == "impedance":
            tau_v_local = np.empty(3)
            tau_v_local[:2] = planar_rot(-yaw) @ out.tau_v[:2]
            tau_v_local[2] = out.tau_v[2]
        else:
            tau_v_local = out.tau_v  # identically zero: the base only follows
        dq_B_local, _ = base_admittance_step(base_params, self._local_base_vel(state),
                                             tau_v_local + tau_v_ext, self.dt)
        dq_B_world = np.empty(3)
        dq_B_world[:2] = planar_rot(yaw) @ dq_B_local[:2]
        dq_B_world[2] = dq_B_local[2]
        q_B = state.q_B + self.dt * dq_B_world

        ee = world_mount_pose(model, state).compose(kin.ee)
        snapshot = SimSnapshot(t=t, state=state, readings=readings, tau_v_ext=tau_v_ext,
                               ee=ee, x_d=x_d, F_ee_ext=F_ee_ext, out=out)

        self.state = JointState(q_B, dq_B_world, q_A, dq_A).normalized(model)
        self.k += 1
        self._check_divergence()
        return snapshot

    def _local_base_vel(self, state: JointState) -> np.ndarray:
        v = np.empty(3)
        v[:2] = planar_rot(-state.q_B[2]) @ state.dq_B[:2]
        v[2] = state.dq_B[2]
        return v

    def _impedance_output(self, state, kin, M_A, J_wb, x_d, dx_d, tau_v_ext) -> ControlOutput:
        # the torque law works in world coordinates, like the Jacobian
        yaw = state.q_B[2]
        tau_v_ext_world = np.empty(3)
        tau_v_ext_world[:2] = planar_rot(yaw) @ tau_v_ext[:2]
        tau_v_ext_world[2] = tau_v_ext[2]
        return impedance_step(self.model, state, self.gains.impedance, self.gains.base,
                              x_d, dx_d, tau_v_ext_world, kin=kin, M_A=M_A, J=J_wb)

    def _follow_me_output(self, state, kin, M_A) -> ControlOutput:
        model, gains = self.model, self.gains.impedance
        J_A = arm_jacobian(model, state.q_A, kin=kin)
        dx = J_A @ state.dq_A

        D_d = gains.D_d
        if D_d is None:
            D_d = resolve_critical_damping(gains.K_d, J_A, M_A)
        F = cartesian_impedance_force(gains, self._x0_arm, np.zeros(6), kin.ee, dx, D_d=D_d)
        tau_0 = -gains.D_0 @ state.dq_A + gains.K_0 @ (self._fm_q_ref - state.q_A)
        tau_A = follow_me_torques(model, state, gains, F, tau_0=tau_0, kin=kin, M_A=M_A)
        return ControlOutput(tau_v=np.zeros(3), tau_A=tau_A, F=F)

    def _check_divergence(self) -> None:
        s = self.state
        vals = np.concatenate([s.q_B, s.dq_B, s.q_A, s.dq_A])
        if not np.all(np.isfinite(vals)):
            raise DivergenceError(f"non-finite state at t={self.t:.3f} s")
        if (np.max(np.abs(s.dq_B[:2])) > _MAX_BASE_SPEED
                or np.max(np.abs(s.dq_A)) > _MAX_ARM_SPEED
                or np.max(np.abs(s.q_B[:2])) > _MAX_BASE_RANGE):
            raise DivergenceError(f"state left the sanity envelope at t={self.t:.3f} s")

    # -- external interaction (used by the live server) ---------------------

    def inject_event(self, event: ForceEvent) -> None:
        """Add a push window on top of the scripted ones (live interaction)."""
        if event.target != "ee" and event.target not in set(self.array.indices):
            raise ValueError(f"no taxel {event.target} in the layout")
        self._extra_events.append(event)

    def set_controller(self, controller: str) -> None:
        if controller not in ("impedance", "follow_me"):
            raise ValueError(f"unknown controller {controller!r}")
        if controller == self._controller:
            return
        self._controller = controller
        # re-anchor both references to the current pose so the switch is calm
        kin = arm_kinematics(self.model, self.state.q_A)
        self._x0_world = world_mount_pose(self.model, self.state).compose(kin.ee)
        self._x0_arm = kin.ee
        self._fm_q_ref = self.state.q_A.copy()

    def set_gains(self, overrides: dict) -> None:
        self.gains = with_overrides(self.gains, overrides)


def _snapshot_row(snap: SimSnapshot, indices: Sequence[int]) -> np.ndarray:
    forces = dict((r.index, r.force) for r in snap.readings)
    taxel = [forces.get(i, 0.0) for i in indices]
    return np.concatenate([
        [snap.t],
        snap.state.q_B, snap.state.dq_B, snap.state.q_A, snap.state.dq_A,
        snap.ee.as_vector(), snap.x_d.as_vector(),
        taxel, snap.tau_v_ext, snap.out.F, snap.out.tau_v, snap.out.tau_A, snap.F_ee_ext,
    ])


def run_scenario(config: SimConfig, scenario: Scenario, model: RobotModel,
                 gains: ControllerGains, array: Optional[TaxelArray] = None) -> SimLog:
    """Run a scenario to completion and return the uniform log."""
    if array is None:
        array = default_taxel_array()
    sim = Simulator(scenario, model, gains, array, config=config)
    indices = sim.array.indices
    if len(indices) != 11:
        raise ConfigError(f"expected 11 taxels, layout has {len(indices)}")
    rows = np.empty((sim.n_steps, len(LOG_COLUMNS)))
    for i in range(sim.n_steps):
        snap = sim.step()
        rows[i] = _snapshot_row(snap, indices)
    return SimLog(scenario=scenario.name, dt=sim.dt, columns=LOG_COLUMNS, data=rows)
