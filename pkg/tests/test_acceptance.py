"""Acceptance gate: one printed pass/fail line per criterion.

Each test prints its verdict with capture suspended so the line shows in a
plain pytest run, then asserts. Numbers quoted are the measured values.
"""

import dataclasses
import functools
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from tactilewbc.calib import bundled_reports, select_material
from tactilewbc.control import default_gains, wb_impedance_torques
from tactilewbc.model import (JointState, arm_mass_matrix, arm_mass_partials,
                              coriolis_matrix, whole_body_jacobian, whole_body_mass)
from tactilewbc.server import create_app
from tactilewbc.sim import ForceEvent, Scenario, SimConfig, bundled_scenario, run_scenario

from conftest import random_states
from test_model import _fd_jacobian


def criterion(num):
    """Test body returns (ok, detail); the verdict line always prints.

    Every wrapped test declares capsys; emission happens with capture
    suspended so the verdict survives a plain (capturing) pytest run.
    """
    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            capsys = kwargs["capsys"]

            def emit(ok, detail):
                with capsys.disabled():
                    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}",
                          flush=True)

            try:
                ok, detail = fn(*args, **kwargs)
            except Exception as exc:
                emit(False, f"raised {type(exc).__name__}: {exc}")
                raise
            emit(ok, detail)
            assert ok, f"criterion {num}: {detail}"
        return inner
    return wrap


def _run(scenario, model, gains, array):
    return run_scenario(SimConfig(), scenario, model, gains, array=array)


def _tracking_error(log):
    return np.linalg.norm(log.block("ee")[:, :3] - log.block("x_d")[:, :3], axis=1)


@pytest.fixture(scope="session")
def collision_pair(model, gains, array):
    """Bundled collision scenario with and without the tactile feedback path."""
    scenario = bundled_scenario("collision")
    start = time.perf_counter()
    log_on = _run(scenario, model, gains, array)
    log_off = _run(dataclasses.replace(scenario, tactile_enabled=False), model, gains, array)
    return log_on, log_off, time.perf_counter() - start


@criterion(1)
def test_1_impedance_law_identity(model, gains, capsys):
    rng = np.random.default_rng(11)
    imp, base = gains.impedance, gains.base
    start = time.perf_counter()
    worst_task, worst_null, checked = 0.0, 0.0, 0
    for state in random_states(model, 1000, seed=11):
        J = whole_body_jacobian(model, state)
        M = whole_body_mass(model, state.q_A, base)
        A = J @ np.linalg.solve(M, J.T)
        if np.linalg.eigvalsh(A).min() < 1e-4:
            continue  # damped branch trades exactness for boundedness
        F = rng.normal(0.0, 20.0, 6)
        tau_v_ext = rng.normal(0.0, 10.0, 3)
        out = wb_impedance_torques(model, state, imp, base, F, tau_v_ext, J=J, M=M)
        tau_c = np.concatenate([out.tau_v, out.tau_A])
        F_real = np.linalg.solve(A, J @ np.linalg.solve(M, tau_c))
        worst_task = max(worst_task, np.linalg.norm(F_real - F) / np.linalg.norm(F))
        null = wb_impedance_torques(model, state, imp, base, np.zeros(6), tau_v_ext,
                                    J=J, M=M)
        tau_n = np.concatenate([null.tau_v, null.tau_A])
        worst_null = max(worst_null, np.linalg.norm(
            np.linalg.solve(A, J @ np.linalg.solve(M, tau_n))))
        checked += 1
    elapsed = time.perf_counter() - start
    ok = worst_task < 1e-8 and worst_null < 1e-8 and elapsed < 10.0 and checked > 900
    return ok, (f"task-force identity {worst_task:.2e}, null-space leak {worst_null:.2e} "
                f"over {checked} states in {elapsed:.1f} s")


@criterion(2)
def test_2_front_push_translates_base(model, gains, array, capsys):
    scenario = Scenario(
        name="front-push", controller="impedance", duration=4.5,
        events=(ForceEvent(0.5, 2.5, 6, 30.0, ramp=0.4),),
        gain_overrides={"D_v": [600.0, 600.0, 120.0],
                        "K_d": {"pos": 2500.0, "rot": 50.0}})
    log = _run(scenario, model, gains, array)
    q_B = log.block("q_B")
    recession = -q_B[:, 0].min()  # peak travel; the task spring pulls back after
    dyaw = np.abs(q_B[:, 2] - q_B[0, 2]).max()
    ee = log.block("ee")[:, :3]
    ee_dev = np.linalg.norm(ee - ee[0], axis=1).max()
    ok = recession >= 0.05 and dyaw < 0.01 and ee_dev < 5e-3
    return ok, (f"base recedes {recession * 100:.1f} cm, |dyaw| {dyaw:.1e} rad, "
                f"EE deviation {ee_dev * 1e3:.2f} mm")


@criterion(3)
def test_3_opposing_side_pushes_rotate_base(model, gains, array, capsys):
    scenario = Scenario(
        name="side-pair", controller="impedance", duration=2.5,
        events=(ForceEvent(0.5, 1.5, 4, 20.0, ramp=0.3),
                ForceEvent(0.5, 1.5, 8, 20.0, ramp=0.3)),
        gain_overrides={"D_v": [1500.0, 1500.0, 150.0]})
    log = _run(scenario, model, gains, array)
    q_B = log.block("q_B")
    translation = np.linalg.norm(q_B[:, :2], axis=1).max()
    dyaw = abs(q_B[-1, 2] - q_B[0, 2])
    ok = translation < 5e-3 and dyaw >= 0.05
    return ok, f"translation {translation * 1e3:.2f} mm, |dyaw| {dyaw:.3f} rad"


@criterion(4)
def test_4_follow_me_cancellation_and_posture(model, gains, array, capsys):
    cancel = Scenario(
        name="fm-cancel", controller="follow_me", duration=3.0,
        events=(ForceEvent(0.5, 2.5, "ee", 25.0, direction=np.array([1.0, 0.0, 0.0]),
                           ramp=0.2),
                ForceEvent(0.5, 2.5, 6, 25.0, ramp=0.2)))
    log = _run(cancel, model, gains, array)
    cancel_disp = np.linalg.norm(log.block("q_B")[:, :2], axis=1).max()

    push = Scenario(
        name="fm-push", controller="follow_me", duration=2.5,
        events=(ForceEvent(0.5, 2.0, 1, 20.0, ramp=0.2),))
    log = _run(push, model, gains, array)
    push_disp = np.linalg.norm(log.block("q_B")[:, :2], axis=1).max()
    q_A = log.block("q_A")
    arm_dev = np.linalg.norm(q_A - q_A[0], axis=1).max()
    ok = cancel_disp < 1e-3 and push_disp > 0.05 and arm_dev < 0.05
    return ok, (f"opposed pushes move base {cancel_disp * 1e3:.4f} mm; base-only push "
                f"moves base {push_disp * 100:.1f} cm with arm deviation {arm_dev:.1e} rad")


@criterion(5)
def test_5_calibration_reproduction(capsys):
    reports = {r.material: r for r in bundled_reports()}
    anchors = {
        "PU Foam LD30": (11.4, 84.0),
        "CC Foam": (None, 70.0),
        "PE Foam LD45 (5mm)": (3.0, 5.0),
        "PE Foam LD45 (3mm)": (2.9, 4.0),
    }
    rmses = {
        "PU Foam LD30": (4.064, 5.96),
        "CC Foam": (None, 11.32),
        "PE Foam LD45 (5mm)": (1.612, 14.37),
        "PE Foam LD45 (3mm)": (1.587, 17.91),
    }
    problems = []
    for name, (dx, ds) in anchors.items():
        rep = reports.get(name)
        if rep is None:
            problems.append(f"{name} missing")
            continue
        if rep.max_deformation != dx:
            problems.append(f"{name} dx {rep.max_deformation} != {dx}")
        if rep.max_raw_variation != ds:
            problems.append(f"{name} ds {rep.max_raw_variation} != {ds}")
        want_dx_rmse, want_ds_rmse = rmses[name]
        if want_dx_rmse is not None and not (
                abs(rep.rmse_deformation - want_dx_rmse) <= 0.05 * want_dx_rmse):
            problems.append(f"{name} rmse_dx {rep.rmse_deformation:.3f}")
        if not abs(rep.rmse_raw - want_ds_rmse) <= 0.05 * want_ds_rmse:
            problems.append(f"{name} rmse_ds {rep.rmse_raw:.3f}")
    selected = select_material(list(reports.values()))
    if selected != "PU Foam LD30":
        problems.append(f"selected {selected!r}")
    ok = not problems
    return ok, ("anchors exact, RMSEs within 5%, selected PU Foam LD30"
                if ok else "; ".join(problems))


@criterion(6)
def test_6_collision_softening(collision_pair, capsys):
    log_on, log_off, elapsed = collision_pair
    peaks = log_on.summary()["taxel_peaks"]
    contact_taxels = [i + 1 for i, p in enumerate(peaks) if p > 1.0]
    peak_on = log_on.summary()["peak_taxel_force"]
    peak_off = log_off.summary()["peak_taxel_force"]
    reduction = 1.0 - peak_on / peak_off

    force = log_on.column("taxel_1")
    contact = np.flatnonzero(force > 0.0)
    yaw = log_on.block("q_B")[:, 2]
    yaw_change = yaw[contact].max() - yaw[contact].min()

    sep = contact[-1]
    after = min(sep + int(round(3.0 / log_on.dt)), len(force) - 1)
    err_after = _tracking_error(log_on)[after]

    ok = (contact_taxels == [1] and reduction >= 0.30 and yaw_change > 0.01
          and err_after < 0.01 and elapsed < 30.0)
    return ok, (f"contact on taxels {contact_taxels}, peak {peak_on:.2f} N vs rigid "
                f"{peak_off:.2f} N ({reduction * 100:.0f}% lower), yaw swings "
                f"{yaw_change:.3f} rad, error {err_after * 1e3:.2f} mm 3 s after "
                f"separation, pair ran in {elapsed:.1f} s")


@criterion(7)
def test_7_determinism(collision_pair, model, gains, array, tmp_path, capsys):
    log_first, _, _ = collision_pair
    log_second = _run(bundled_scenario("collision"), model, gains, array)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    log_first.to_csv(a)
    log_second.to_csv(b)
    first, second = a.read_bytes(), b.read_bytes()
    ok = first == second and len(first) > 0
    return ok, f"two seeded runs produced identical {len(first)}-byte CSV logs"


@criterion(8)
def test_8_dynamics_sanity(model, capsys):
    start = time.perf_counter()
    worst_jac, worst_skew, min_eig = 0.0, 0.0, np.inf
    for state in random_states(model, 1000, seed=13):
        J = whole_body_jacobian(model, state)
        worst_jac = max(worst_jac, np.max(np.abs(J - _fd_jacobian(model, state))))
        M_A = arm_mass_matrix(model, state.q_A)
        min_eig = min(min_eig, np.linalg.eigvalsh(M_A).min())
        D = arm_mass_partials(model, state.q_A)
        Mdot = np.einsum("kij,k->ij", D, state.dq_A)
        S = Mdot - 2.0 * coriolis_matrix(model, state.q_A, state.dq_A)
        worst_skew = max(worst_skew, np.max(np.abs(S + S.T)))
    elapsed = time.perf_counter() - start
    ok = worst_jac < 1e-5 and min_eig > 0.0 and worst_skew < 1e-8
    return ok, (f"FD Jacobian error {worst_jac:.1e}, min M_A eigenvalue {min_eig:.3f}, "
                f"skew residual {worst_skew:.1e} over 1000 states in {elapsed:.1f} s")


@criterion(9)
def test_9_console_roundtrip(model, gains, array, capsys):
    app = create_app(model, gains, array)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            hello = ws.receive_json()
            assert hello["kind"] == "hello"
            ws.send_json({"kind": "apply_force", "id": 1, "target": 6,
                          "magnitude": 30.0, "duration": 2.0})
            sent = time.perf_counter()
            latency = None
            for _ in range(600):
                frame = ws.receive_json()
                if frame.get("kind") == "snapshot" and frame["q_B"][0] < -1e-3:
                    latency = time.perf_counter() - sent
                    break
            recessed_x = frame["q_B"][0]
        # a fresh client must be able to render from its first snapshot alone
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            snap = ws.receive_json()
            fields_ok = all(k in snap for k in
                            ("t", "controller", "q_B", "q_A", "ee", "x_d", "taxels"))
            still_recessed = snap["q_B"][0] < -1e-3
    ok = latency is not None and latency < 0.5 and fields_ok and still_recessed
    return ok, (f"base receded to {recessed_x * 1e3:.1f} mm "
                f"{(latency or 0) * 1e3:.0f} ms after the command; reconnected client "
                f"renders the same state from one snapshot")
