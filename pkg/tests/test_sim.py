import dataclasses

import numpy as np
import pytest

from tactilewbc.errors import ConfigError, DivergenceError
from tactilewbc.model import JointState
from tactilewbc.sim import (LOG_COLUMNS, ForceEvent, ObstacleModel, Scenario, SimConfig,
                            Simulator, TrajectorySegment, bundled_scenario,
                            bundled_scenario_names, contact_forces, load_scenario,
                            log_from_csv, log_from_jsonl, run_scenario, scenario_from_dict,
                            summary_text)


def _quiet(controller="impedance", duration=0.2, **kw):
    return Scenario(name="quiet", controller=controller, duration=duration, **kw)


# -- equilibrium and basic stepping


@pytest.mark.parametrize("controller", ["impedance", "follow_me"])
def test_untouched_robot_stays_put(model, gains, array, controller):
    sim = Simulator(_quiet(controller), model, gains, array)
    q0 = np.concatenate([sim.state.q_B, sim.state.q_A])
    for _ in range(200):
        snap = sim.step()
    q1 = np.concatenate([sim.state.q_B, sim.state.q_A])
    assert np.max(np.abs(q1 - q0)) < 1e-12
    assert all(r.force == 0.0 for r in snap.readings)


def test_step_advances_time_and_returns_prestep_state(model, gains, array):
    sim = Simulator(_quiet(), model, gains, array)
    s0 = sim.step()
    s1 = sim.step()
    assert s0.t == 0.0
    assert s1.t == pytest.approx(sim.dt)


def test_snapshots_are_independent_values(model, gains, array):
    sim = Simulator(_quiet(duration=0.1, events=(ForceEvent(0.0, 0.1, 6, 20.0),)),
                    model, gains, array)
    a = sim.step()
    b = sim.step()
    assert a.state is not b.state
    assert a.state.q_B is not b.state.q_B
    a.state.q_B[0] = 99.0  # mutating a handed-out copy must not touch the sim
    assert sim.state.q_B[0] != 99.0


# -- scripted events


def test_force_event_trapezoid():
    ev = ForceEvent(1.0, 3.0, "ee", 10.0, direction=np.array([1.0, 0, 0]), ramp=0.5)
    assert ev.scale(0.99) == 0.0
    assert ev.scale(1.25) == pytest.approx(0.5)
    assert ev.scale(2.0) == 1.0
    assert ev.scale(2.75) == pytest.approx(0.5)
    assert ev.scale(3.0) == 0.0
    box = ForceEvent(1.0, 3.0, 6, 10.0)
    assert box.scale(1.0) == 1.0 and box.scale(2.999) == 1.0


def test_front_push_drives_base_backwards(model, gains, array):
    sc = _quiet(duration=0.6, events=(ForceEvent(0.0, 0.6, 6, 30.0),))
    log = run_scenario(SimConfig(), sc, model, gains, array=array)
    x = log.column("q_B_x")
    assert x[-1] < -1e-4
    assert abs(log.column("q_B_yaw")[-1]) < 1e-3  # centered push: no turn
    taxel6 = log.column("taxel_6")
    assert taxel6.max() > 25.0


def test_injected_event_matches_scripted_event(model, gains, array):
    scripted = Simulator(_quiet(duration=0.4, events=(ForceEvent(0.1, 0.4, 1, 20.0),)),
                         model, gains, array)
    injected = Simulator(_quiet(duration=0.4), model, gains, array)
    injected.inject_event(ForceEvent(0.1, 0.4, 1, 20.0))
    for _ in range(injected.n_steps):
        a = scripted.step()
        b = injected.step()
    assert np.allclose(a.state.q_B, b.state.q_B, atol=1e-15)
    with pytest.raises(ValueError, match="taxel"):
        injected.inject_event(ForceEvent(0.0, 0.1, 99, 5.0))


# -- contact


def test_static_contact_force_matches_stiffness_times_depth(model, gains, array):
    # segment parallel to the front face, 5 mm inside it
    half_l = model.footprint_length / 2.0
    depth = 0.005
    obs = ObstacleModel(p1=np.array([half_l - depth, -0.05]),
                        p2=np.array([half_l - depth, 0.05]))
    state = JointState.rest(gains.impedance.q_A_ref)
    forces, depths = contact_forces(state, (obs,), model, array)
    assert set(forces) <= {5, 6, 7}  # front-face taxels only
    total = sum(forces.values())
    assert total == pytest.approx(obs.stiffness * depth, rel=1e-6)
    assert depths[0] == pytest.approx(depth, abs=1e-9)


def test_no_contact_outside_footprint(model, gains, array):
    obs = ObstacleModel(p1=np.array([2.0, -0.1]), p2=np.array([2.0, 0.1]))
    state = JointState.rest(gains.impedance.q_A_ref)
    forces, depths = contact_forces(state, (obs,), model, array)
    assert forces == {}
    assert all(d == 0.0 for d in depths.values())


def test_contact_follows_base_yaw(model, gains, array):
    # rotate the base: the same world-frame obstacle must hit a side face
    half_l = model.footprint_length / 2.0
    obs = ObstacleModel(p1=np.array([half_l - 0.003, -0.05]),
                        p2=np.array([half_l - 0.003, 0.05]))
    state = JointState(np.array([0.0, 0.0, np.pi / 2.0]), np.zeros(3),
                       np.asarray(gains.impedance.q_A_ref), np.zeros(7))
    forces, _ = contact_forces(state, (obs,), model, array)
    if forces:  # right side now faces +x; footprint is narrower than long
        assert set(forces) <= {8, 9, 10, 11}


# -- scenario loading


def test_scenario_from_dict_diagnostics():
    base = {"name": "x", "controller": "impedance", "duration": 1.0}
    with pytest.raises(ConfigError, match="controller"):
        scenario_from_dict({**base, "controller": "pid"})
    with pytest.raises(ConfigError, match="duration"):
        scenario_from_dict({"name": "x", "controller": "impedance"})
    with pytest.raises(ConfigError, match="direction"):
        scenario_from_dict({**base, "events": [
            {"t_start": 0.0, "t_end": 0.5, "target": "ee", "magnitude": 5.0}]})
    with pytest.raises(ConfigError, match="direction"):
        scenario_from_dict({**base, "events": [
            {"t_start": 0.0, "t_end": 0.5, "target": 3, "magnitude": 5.0,
             "direction": [1, 0, 0]}]})
    with pytest.raises(ConfigError, match="trajector"):
        scenario_from_dict({**base, "controller": "follow_me", "trajectory": [
            {"t_start": 0.0, "t_end": 0.5, "velocity": [0.1, 0, 0]}]})


def test_bundled_scenarios_load(model, gains, array):
    names = bundled_scenario_names()
    assert set(names) == {"impedance_demo", "follow_me_demo", "collision"}
    for name in names:
        sc = bundled_scenario(name)
        Simulator(sc, model, gains, array)  # validates events against the layout
    with pytest.raises(ConfigError):
        bundled_scenario("missing")


def test_scenario_yaml_round_trip(tmp_path):
    path = tmp_path / "sc.yaml"
    path.write_text(
        "name: tiny\ncontroller: impedance\nduration: 0.05\nseed: 4\n"
        "events:\n  - {t_start: 0.0, t_end: 0.05, target: 6, magnitude: 10.0}\n")
    sc = load_scenario(path)
    assert sc.name == "tiny" and sc.seed == 4
    assert sc.events[0].target == 6


def test_event_targeting_unknown_taxel_rejected(model, gains, array):
    sc = _quiet(duration=0.1, events=(ForceEvent(0.0, 0.1, 42, 5.0),))
    with pytest.raises(ConfigError, match="42"):
        Simulator(sc, model, gains, array)


# -- logs


def test_run_produces_one_row_per_step(model, gains, array):
    sc = _quiet(duration=0.05)
    log = run_scenario(SimConfig(), sc, model, gains, array=array)
    assert log.data.shape == (50, len(LOG_COLUMNS))
    assert np.allclose(log.t, np.arange(50) * 1e-3)
    assert log.columns == LOG_COLUMNS


def test_log_round_trips_exactly(model, gains, array, tmp_path):
    sc = _quiet(duration=0.05, events=(ForceEvent(0.0, 0.05, 1, 15.0),),
                noise_sigma=1.0, seed=12)
    log = run_scenario(SimConfig(), sc, model, gains, array=array)

    csv_path = tmp_path / "quiet.csv"
    log.to_csv(csv_path)
    back = log_from_csv(csv_path)
    assert np.array_equal(back.data, log.data)
    assert back.summary() == {**log.summary(), "scenario": "quiet"}

    jsonl_path = tmp_path / "quiet.jsonl"
    log.to_jsonl(jsonl_path)
    back = log_from_jsonl(jsonl_path)
    assert np.array_equal(back.data, log.data)

    with pytest.raises(ConfigError, match="header"):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b,c\n1,2,3\n")
        log_from_csv(bad)


def test_same_seed_reproduces_bytes(model, gains, array, tmp_path):
    sc = _quiet(duration=0.05, noise_sigma=1.5, seed=7,
                events=(ForceEvent(0.0, 0.05, 6, 12.0),))
    paths = []
    for k in range(2):
        log = run_scenario(SimConfig(), sc, model, gains, array=array)
        p = tmp_path / f"run{k}.csv"
        log.to_csv(p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()

    other = run_scenario(SimConfig(seed=8), sc, model, gains, array=array)
    assert not np.array_equal(other.block("taxel"), log.block("taxel"))


def test_noise_never_produces_negative_forces(model, gains, array):
    sc = _quiet(duration=0.1, noise_sigma=3.0, seed=2,
                events=(ForceEvent(0.0, 0.1, 6, 1.0),))
    log = run_scenario(SimConfig(), sc, model, gains, array=array)
    assert np.min(log.block("taxel")) >= 0.0


def test_summary_text_mentions_peak_taxel(model, gains, array):
    sc = _quiet(duration=0.1, events=(ForceEvent(0.0, 0.1, 3, 22.0),))
    log = run_scenario(SimConfig(), sc, model, gains, array=array)
    text = summary_text(log.summary())
    assert "taxel 3" in text
    assert "final base pose" in text


# -- live mutation and failure paths


def test_controller_switch_mid_run_is_calm(model, gains, array):
    sim = Simulator(_quiet(duration=0.4), model, gains, array)
    for _ in range(100):
        sim.step()
    sim.set_controller("follow_me")
    q_before = sim.state.q_A.copy()
    for _ in range(200):
        sim.step()
    assert np.max(np.abs(sim.state.q_A - q_before)) < 1e-6
    with pytest.raises(ValueError):
        sim.set_controller("pid")


def test_divergence_raises(model, gains, array):
    sc = _quiet(duration=0.5, gain_overrides={"K_d": {"pos": 1e9, "rot": 1e9}},
                events=(ForceEvent(0.0, 0.5, "ee", 5.0, direction=np.array([1.0, 0, 0])),))
    with pytest.raises(DivergenceError):
        run_scenario(SimConfig(), sc, model, gains, array=array)


def test_trajectory_moves_desired_pose(model, gains, array):
    sc = _quiet(duration=0.3, trajectory=(TrajectorySegment(0.0, 0.2, np.array([0.0, 0.1, 0.0])),))
    sim = Simulator(sc, model, gains, array)
    x0, _ = sim._desired_pose(0.0)
    x1, v1 = sim._desired_pose(0.1)
    x2, v2 = sim._desired_pose(0.25)
    assert x1.position[1] - x0.position[1] == pytest.approx(0.01)
    assert x2.position[1] - x0.position[1] == pytest.approx(0.02)  # holds after the segment
    assert v1[1] == pytest.approx(0.1) and v2[1] == 0.0


def test_tactile_disabled_blinds_the_controller(model, gains, array):
    sc = _quiet(duration=0.3, events=(ForceEvent(0.0, 0.3, 6, 30.0),))
    blind = dataclasses.replace(sc, tactile_enabled=False)
    log = run_scenario(SimConfig(), blind, model, gains, array=array)
    assert np.allclose(log.block("tau_v_ext"), 0.0)  # sensing cut off
    assert log.column("taxel_6").max() > 25.0  # the shell still records it
    # without the sensing path the platform is non-backdrivable: it holds
    assert np.allclose(log.block("q_B"), 0.0, atol=1e-12)
