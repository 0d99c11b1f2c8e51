from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybrid_manip.env import (
    EE_INFLATE,
    GRASP_TOL,
    MAX_STEP,
    Action,
    Env,
    Grip,
    ObjectOn,
    Perturbation,
    Sorted,
    WorldSummary,
    load_scenario,
    scenario_from_dict,
)
from hybrid_manip.env.scenario_io import BUILTIN_SCENARIOS, dump_scenario, scenario_to_dict
from hybrid_manip.env.trace import dumps_jsonl, rollout_trace
from hybrid_manip.env.types import GRASP_OFFSET
from hybrid_manip.errors import EpisodeFinished, InvalidScenario


def hold(delta=(0.0, 0.0, 0.0)):
    return Action(np.asarray(delta, float), Grip.HOLD)


def walk_to(env, target, grip=Grip.HOLD):
    """Straight-line proportional steps until the ee sits on target."""
    for _ in range(200):
        rel = np.asarray(target) - env.state.robot.ee_pose
        if np.max(np.abs(rel)) < 1e-12:
            break
        env.step(Action(np.clip(rel, -MAX_STEP, MAX_STEP), Grip.HOLD))
    if grip is not Grip.HOLD:
        return env.step(Action(np.zeros(3), grip))


# construction / reset


def test_create_env_starts_at_spec(pick_place):
    env = Env(pick_place, seed=7)
    assert env.step_count == 0
    for spec_obj, obj in zip(pick_place.objects, env.state.objects):
        np.testing.assert_array_equal(spec_obj.pose, obj.pose)


def test_duplicate_ids_rejected(pick_place):
    data = scenario_to_dict(pick_place)
    data["objects"].append(dict(data["objects"][0]))
    with pytest.raises(InvalidScenario):
        scenario_from_dict(data)


def test_out_of_bounds_pose_rejected(pick_place):
    data = scenario_to_dict(pick_place)
    data["objects"][0]["pose"] = [5.0, 0.0, 0.02]
    with pytest.raises(InvalidScenario):
        scenario_from_dict(data)


def test_perturbation_on_missing_object_rejected(pick_place):
    data = scenario_to_dict(pick_place)
    data["perturbations"] = [{"at_step": 3, "object": "ghost", "pose": [0.0, 0.0, 0.02]}]
    with pytest.raises(InvalidScenario):
        scenario_from_dict(data)


def test_graspable_platform_rejected(pick_place):
    data = scenario_to_dict(pick_place)
    data["objects"][1]["graspable"] = True
    with pytest.raises(InvalidScenario):
        scenario_from_dict(data)


def test_same_seed_same_initial_observation(pick_place):
    a = Env(pick_place, seed=3, init_noise=0.03).reset()
    b = Env(pick_place, seed=3, init_noise=0.03).reset()
    assert a.tobytes() == b.tobytes()


def test_env_holds_a_copy(pick_place):
    env = Env(pick_place)
    pick_place.objects[0].pose[0] = 0.1
    assert env.state.objects[0].pose[0] == 0.25


def test_reset_restores_after_steps(env):
    first = env.reset()
    for _ in range(40):
        if env.done:
            break
        env.step(hold((0.05, -0.05, 0.05)))
    np.testing.assert_array_equal(env.reset(), first)
    np.testing.assert_array_equal(env.reset(), first)
    assert env.step_count == 0


def test_reset_undoes_perturbation(pick_place):
    pick_place.perturbations = [Perturbation(1, "red_cube", (0.0, 0.25, 0.02))]
    env = Env(pick_place)
    fresh = env.reset()
    env.step(hold())
    _, _, _, info = env.step(hold())
    assert info.fired_perturbations == ["red_cube"]
    np.testing.assert_array_equal(env.object_pose("red_cube"), [0.0, 0.25, 0.02])
    np.testing.assert_array_equal(env.reset(), fresh)
    np.testing.assert_array_equal(env.reset(), Env(pick_place).reset())


# stepping


def test_zero_action(env):
    before = env.state.robot.ee_pose.copy()
    env.step(hold())
    np.testing.assert_array_equal(env.state.robot.ee_pose, before)
    assert env.step_count == 1


def test_delta_is_clamped(env):
    before = env.state.robot.ee_pose.copy()
    env.step(hold((1.0, -1.0, 0.0)))
    np.testing.assert_allclose(env.state.robot.ee_pose - before, [MAX_STEP, -MAX_STEP, 0.0])


def test_grasp_within_tolerance(env):
    walk_to(env, env.object_pose("red_cube"))
    _, _, _, info = env.step(Action(np.zeros(3), Grip.CLOSE))
    assert info.grasped == "red_cube"
    assert env.state.robot.held == "red_cube"


def test_grasp_outside_tolerance_fails(env):
    walk_to(env, env.object_pose("red_cube") + np.array([0.0, 0.0, GRASP_TOL + 0.01]))
    env.step(Action(np.zeros(3), Grip.CLOSE))
    assert env.state.robot.held is None


def test_holding_goal(pick_place):
    from hybrid_manip.env import Holding

    pick_place.goal = Holding("red_cube")
    env = Env(pick_place)
    walk_to(env, env.object_pose("red_cube"))
    assert not env.check_goal()
    _, _, done, info = env.step(Action(np.zeros(3), Grip.CLOSE))
    assert env.check_goal() and done and info.goal_satisfied


def test_release_drops_to_surface(env):
    walk_to(env, env.object_pose("red_cube"), Grip.CLOSE)
    walk_to(env, (0.0, 0.2, 0.3))
    env.step(Action(np.zeros(3), Grip.OPEN))
    np.testing.assert_allclose(env.object_pose("red_cube"), [0.0, 0.2, 0.02])


def test_release_on_platform_rests_on_top(env):
    walk_to(env, env.object_pose("red_cube"), Grip.CLOSE)
    platform = env.object_pose("blue_platform")
    walk_to(env, platform + np.array([0.0, 0.0, 0.2]))
    _, reward, done, info = env.step(Action(np.zeros(3), Grip.OPEN))
    np.testing.assert_allclose(env.object_pose("red_cube"), platform + [0.0, 0.0, 0.04 + 0.02])
    assert info.goal_satisfied and done and reward > 9.0


def test_closer_step_beats_farther_step(pick_place):
    a, b = Env(pick_place), Env(pick_place)
    rel = a.current_target() - a.state.robot.ee_pose
    toward = np.clip(rel, -MAX_STEP, MAX_STEP)
    _, r_toward, _, _ = a.step(hold(toward))
    _, r_away, _, _ = b.step(hold(-toward))
    assert r_toward > r_away


def test_reward_matches_shaped_formula(env):
    target = env.current_target()
    d0 = np.linalg.norm(env.state.robot.ee_pose - target)
    _, r, _, _ = env.step(hold((0.03, 0.01, -0.02)))
    d1 = np.linalg.norm(env.state.robot.ee_pose - target)
    assert r == pytest.approx(-(d1 - d0) - 0.01, abs=1e-15)


def test_step_after_done_raises(pick_place):
    pick_place.max_steps = 3
    env = Env(pick_place)
    for _ in range(2):
        assert not env.step(hold())[2]
    assert env.step(hold())[2]
    with pytest.raises(EpisodeFinished):
        env.step(hold())


def test_collision_blocks_and_penalises_once():
    env = Env(load_scenario("obstacle_course"))
    wall = env.state.objects[2]
    start = wall.pose + np.array([wall.half_extent + EE_INFLATE + 0.02, 0.0, 0.0])
    walk_to(env, start)
    before = env.state.robot.ee_pose.copy()
    target = env.current_target()
    d0 = np.linalg.norm(before - target)
    _, r, _, info = env.step(hold((-0.05, 0.0, 0.0)))
    assert info.collision
    np.testing.assert_array_equal(env.state.robot.ee_pose, before)
    assert r == pytest.approx(-(np.linalg.norm(env.state.robot.ee_pose - target) - d0) - 0.01 - 1.0)


# goals


def _on(env, obj_id, platform_id, offset=(0.0, 0.0)):
    p = env._object(platform_id)
    o = env._object(obj_id)
    o.pose[:] = [p.pose[0] + offset[0], p.pose[1] + offset[1], p.top_z + o.half_extent]


def test_object_on_centered(env):
    _on(env, "red_cube", "blue_platform")
    assert isinstance(env.scenario.goal, ObjectOn)
    assert env.check_goal()


def test_object_on_five_cm_off(env):
    _on(env, "red_cube", "blue_platform", (0.05, 0.0))
    assert not env.check_goal()


def test_sorted_goal_enumeration():
    env = Env(load_scenario("sort_3"))
    goal = env.scenario.goal
    assert isinstance(goal, Sorted)
    assert not env.check_goal()
    cubes = [o for o in env.state.objects if o.graspable]
    for cube in cubes:
        _on(env, cube.id, goal.platform_for(cube.color.value))
    assert env.check_goal()
    # one cube on the wrong platform breaks the predicate
    _on(env, cubes[0].id, goal.platform_for(cubes[1].color.value))
    assert not env.check_goal()


# world summary


def test_summary_lists_objects(env):
    summary = env.world_summary()
    assert [o.id for o in summary.objects] == ["red_cube", "blue_platform"]
    assert summary.find("red_cube").pose == (0.25, 0.15, 0.02)
    assert summary.held is None


def test_summary_marks_held(env):
    walk_to(env, env.object_pose("red_cube"), Grip.CLOSE)
    summary = env.world_summary()
    assert summary.held == "red_cube"
    assert summary.find("red_cube").held


def test_summary_round_trip(env):
    env.step(hold((0.01, 0.02, -0.03)))
    s = env.world_summary()
    assert WorldSummary.from_json(s.to_json()) == s
    assert json.loads(s.to_json()) == s.to_dict()


# scenario files


@pytest.mark.parametrize("name", BUILTIN_SCENARIOS)
def test_bundled_scenarios_round_trip(name):
    spec = load_scenario(name)
    again = scenario_from_dict(__import__("yaml").safe_load(dump_scenario(spec)))
    assert dump_scenario(again) == dump_scenario(spec)


# properties

actions = st.lists(
    st.tuples(
        st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.sampled_from(list(Grip))
    ),
    min_size=1,
    max_size=60,
)


@settings(max_examples=60, deadline=None)
@given(acts=actions, name=st.sampled_from(BUILTIN_SCENARIOS))
def test_containment_attachment_determinism(acts, name):
    spec = load_scenario(name)
    seq = [Action(np.array(a[:3]), a[3]) for a in acts]
    env = Env(spec, seed=1)
    for act in seq:
        if env.done:
            break
        _, _, _, info = env.step(act)
        assert env.bounds.contains(env.state.robot.ee_pose)
        assert all(env.bounds.contains(o.pose) for o in env.state.objects)
        held = env.state.robot.held
        if held is not None:
            assert np.array_equal(env.object_pose(held), env.state.robot.ee_pose + GRASP_OFFSET)
        assert np.all(np.isfinite(env.observation()))
        assert len(env.observation()) == env.observation_dim
    a = dumps_jsonl(rollout_trace(Env(spec, seed=1), seq))
    b = dumps_jsonl(rollout_trace(Env(spec, seed=1), seq))
    assert a == b


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 60))
def test_done_at_max_steps(n):
    spec = load_scenario("pick_place")
    spec.max_steps = n
    env = Env(spec)
    for k in range(n):
        _, _, done, _ = env.step(hold())
        assert done == (k == n - 1)
