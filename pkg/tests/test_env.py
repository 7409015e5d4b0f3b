import math

import numpy as np
import pytest

from quadloco import refmotion as rm
from quadloco.model import state_features, STATE_FEAT_DIM
from quadloco.quadruped import EpisodeAborted, EpisodeConfig, QuadrupedEnv


@pytest.fixture(scope="module")
def clip():
    return rm.make_pace_clip(10.0, 1.0)


@pytest.fixture()
def env():
    return QuadrupedEnv()


def nominal_action(env):
    return np.concatenate([env.nominal, [0.0]])


def test_episode_config_rate_invariant():
    with pytest.raises(ValueError):
        EpisodeConfig(control_hz=30, substeps=10)


def test_model_has_nine_links_eight_joints(env):
    assert len(env.link_ids) == 9
    assert len(env.joint_ids) == 8


def test_standing_rest_observation(env):
    env.reset_standing()
    for _ in range(60):
        s, done = env.step(nominal_action(env))
        assert not done
    assert np.all(s.contacts == 1.0)
    assert abs(s.root_linvel[0]) < 1e-2
    assert np.linalg.norm(s.link_quat, axis=1) == pytest.approx(1.0, abs=1e-9)


def test_contact_vector_leg_order(env, clip):
    # leg order is (LF, RF, LR, RR): only-left-front reads [1, 0, 0, 0]
    f = clip.frames[40].copy()
    f.contacts = np.array([1.0, 0.0, 0.0, 0.0])
    s = env.reset_from_reference(f)
    assert list(s.contacts) == [1.0, 0.0, 0.0, 0.0]


def test_reset_roundtrip_reproduces_frame(env, clip):
    f = clip.frames[123]
    s = env.reset_from_reference(f)
    assert np.abs(s.root_pos - f.root_pos).max() < 1e-6
    assert np.abs(s.link_pos - f.link_pos).max() < 1e-6
    assert np.abs(s.joint_pos - f.joint_pos).max() < 1e-6
    assert np.abs(s.joint_vel - f.joint_vel).max() < 1e-6
    assert np.abs(s.link_linvel - f.link_linvel).max() < 1e-6
    assert np.abs(s.com_pos - f.com_pos).max() < 1e-6
    assert s.heading == f.heading
    assert np.abs(s.contacts - f.contacts).max() == 0


def test_reset_midair_contacts_match_frame(env):
    fast = rm.synthesize_speed_clip(lambda t: 3.8, 10.0)
    airborne = [f for f in fast.frames if f.contacts.sum() <= 1.0]
    assert airborne, "canter should have near-flight frames"
    s = env.reset_from_reference(airborne[len(airborne) // 2])
    assert s.contacts.sum() <= 1.0


def test_reset_rejects_wrong_joint_count(env, clip):
    f = clip.frames[0].copy()
    f.joint_pos = np.zeros(5)
    with pytest.raises(ValueError, match="joints"):
        env.reset_from_reference(f)


def test_yaw_integration_exact(env):
    env.reset_standing()
    act = nominal_action(env)
    act[8] = 0.5 * math.pi
    for _ in range(30):  # 1 s
        env.step(act)
    assert env.yaw == pytest.approx(0.5 * math.pi, abs=1e-12)


def test_yaw_channel_never_touches_sagittal_dynamics(env, clip):
    def run(yaw_rate):
        e = QuadrupedEnv()
        e.reset_from_reference(clip.frames[30])
        out = []
        for t in range(20):
            act = np.concatenate([clip.frames[31 + t].joint_pos, [yaw_rate]])
            s, _ = e.step(act)
            out.append((s.root_pos.copy(), s.joint_pos.copy()))
        return out

    a = run(0.0)
    b = run(1.5)
    for (pa, ja), (pb, jb) in zip(a, b):
        assert np.array_equal(pa, pb)
        assert np.array_equal(ja, jb)


def test_action_clamped_to_joint_limits(env):
    env.reset_standing()
    act = nominal_action(env)
    act[1] = 5.0  # knee target far beyond its [-2.4, -0.1] range
    for _ in range(30):
        s, _ = env.step(act)
    assert s.joint_pos[1] <= env.cfg.knee_hi + 0.05


def test_nonfinite_action_aborts(env):
    env.reset_standing()
    act = nominal_action(env)
    act[0] = np.nan
    with pytest.raises(EpisodeAborted):
        env.step(act)


def test_termination_nominal_false(env):
    s = env.reset_standing()
    assert env.check_termination(s) is False


def test_termination_low_torso(env):
    s = env.reset_standing()
    s.root_pos[1] = 0.5 * env.cfg.standing_height
    assert env.check_termination(s) is True


def test_termination_heavy_pitch(env):
    s = env.reset_standing()
    s.root_quat = np.array([math.cos(0.55), 0.0, 0.0, math.sin(0.55)])  # 1.1 rad
    assert env.check_termination(s) is True


def test_perturb_slippery_drops_friction(env):
    env.reset_standing()
    env.perturb("slippery", np.random.default_rng(0))
    assert env.world.ground_friction == pytest.approx(0.08)


def test_perturb_box_adds_body(env):
    env.reset_standing()
    n0 = len(env.world.bodies)
    env.perturb("box_throw", np.random.default_rng(1))
    assert len(env.world.bodies) == n0 + 1


def test_perturb_reproducible(env):
    def throw(seed):
        e = QuadrupedEnv()
        e.reset_standing()
        e.perturb("box_throw", np.random.default_rng(seed))
        b = e.world.bodies[-1]
        return (b.x, b.y, b.vx, b.vy, b.mass)

    assert throw(3) == throw(3)
    assert throw(3) != throw(4)


def test_unknown_perturb_rejected(env):
    with pytest.raises(ValueError):
        env.perturb("earthquake", np.random.default_rng(0))


def test_episode_bitwise_reproducible(clip):
    def run():
        e = QuadrupedEnv()
        e.reset_from_reference(clip.frames[50])
        rng = np.random.default_rng(9)
        out = []
        for t in range(40):
            act = np.concatenate([clip.frames[51 + t].joint_pos, [0.0]])
            act[:8] += rng.normal(0.0, 0.05, 8)
            s, _ = e.step(act)
            out.append(s.root_pos.tobytes() + s.joint_pos.tobytes())
        return out

    assert run() == run()


def test_state_features_dimension(env):
    s = env.reset_standing()
    assert state_features(s).shape == (STATE_FEAT_DIM,)
