import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from belief_swarm import belief as bf
from belief_swarm.env import batch_noise, rollout, run_episode_with_noise, zero_policy
from belief_swarm.env import draw_episode_noise
from belief_swarm.model import ModelParams
from belief_swarm.rng import RandomSource

P = ModelParams()
ROOT17 = (-1 + math.sqrt(17)) / 2


def test_initial_variance_is_exact():
    s = bf.build_variance_schedule(P)
    assert s.posterior_var[0] == 3.2
    assert s.gain[0] == 0.8


def test_fixed_point():
    s = bf.build_variance_schedule(P)
    assert abs(s.posterior_var[50] - ROOT17) < 1e-9
    assert bf.fixed_point_variance(P) == pytest.approx(ROOT17, abs=1e-15)


def test_schedule_matches_closed_recursion():
    """Posterior variance obeys the one-line recursion in the prior variance."""
    s = bf.build_variance_schedule(P)
    q, r = P.sigma_D ** 2, P.sigma_eta ** 2
    v = 16.0 * r / (16.0 + r)
    for t in range(1, P.T + 1):
        v = (v + q) * r / (v + q + r)
        assert s.posterior_var[t] == pytest.approx(v, rel=1e-13)
    for t in range(P.T):
        p = s.posterior_var[t] + q
        assert s.process_noise_var[t] == pytest.approx(p * p / (p + r), rel=1e-13)


def test_schedule_is_read_only_and_sized():
    s = bf.build_variance_schedule(P.replace(T=7))
    assert len(s.posterior_var) == 8 and len(s.process_noise_var) == 7 and s.T == 7
    with pytest.raises(ValueError):
        s.posterior_var[0] = 1.0


def test_schedule_csv(tmp_path):
    s = bf.build_variance_schedule(P.replace(T=3))
    path = tmp_path / "sched.csv"
    s.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# schema:")
    assert lines[1] == "t,posterior_var,gain,process_noise_var"
    assert len(lines) == 2 + 4
    assert float(lines[2].split(",")[1]) == 3.2


def test_update_examples():
    b = bf.initial_belief(52.0, P)
    assert b.mean == pytest.approx(51.6, abs=1e-12) and b.var == pytest.approx(3.2)
    nxt = bf.update(bf.predict(b, 0.0, P), 48.6, P)
    k = 4.2 / 8.2
    assert nxt.mean == pytest.approx(48.6 + (1 - k) * 0.0, abs=1e-12)
    assert nxt.var == pytest.approx(4.2 * 4 / 8.2, rel=1e-13)


def test_predict_past_horizon_raises():
    b = bf.Belief(50.0, 1.0, P.T)
    with pytest.raises(ValueError):
        bf.predict(b, 0.0, P)
    with pytest.raises(ValueError):
        bf.Belief(50.0, 0.0, 0)


def test_transition_noise_index():
    s = bf.build_variance_schedule(P)
    assert bf.belief_mean_transition_noise(0, s) == pytest.approx(4.2 ** 2 / 8.2)
    with pytest.raises(IndexError):
        bf.belief_mean_transition_noise(P.T, s)


@given(st.floats(0.1, 50), st.floats(-50, 150))
def test_update_is_convex_combination(var, y):
    prior = bf.Belief(50.0, var, 0)
    post = bf.update(prior, y, P)
    lo, hi = min(50.0, y), max(50.0, y)
    assert lo - 1e-9 <= post.mean <= hi + 1e-9
    assert post.var < var


def test_batch_conjugate_posterior_oracle():
    """Sequential updates equal the batch Gaussian posterior when nothing moves.

    With zero consumption noise and a known drift the level is deterministic
    up to its initial draw, so all readings inform one scalar; the posterior
    precision is the prior precision plus n reading precisions.
    """
    p = P.replace(sigma_D=1e-9, D_bar=1.0)
    ys = [51.0, 47.5, 49.0, 53.2, 50.1]
    b = bf.initial_belief(ys[0], p)
    for y in ys[1:]:
        b = bf.update(bf.predict(b, 0.0, p), y, p)
    prec = 1 / 16 + len(ys) / 4
    # each reading y_t informs the initial level through y_t + t * D_bar
    x0_mean = (50 / 16 + sum(y + t * p.D_bar for t, y in enumerate(ys)) / 4) / prec
    assert b.var == pytest.approx(1 / prec, rel=1e-7)
    assert b.mean == pytest.approx(x0_mean - (len(ys) - 1) * p.D_bar, rel=1e-9)


def test_replay_matches_environment():
    p = P.replace(T=10)
    noise = draw_episode_noise(RandomSource(4).child(0, 0), p.T)
    trace = run_episode_with_noise(zero_policy(), "belief_mean", noise, p)
    beliefs = bf.replay_beliefs(trace.y, trace.a, p)
    assert np.array_equal([b.mean for b in beliefs], trace.x_hat)
    assert np.array_equal([b.var for b in beliefs], trace.sigma2)
    with pytest.raises(ValueError):
        bf.replay_beliefs([1.0, 2.0, 3.0], [0.0], p)


def test_filter_consistency():
    p = P.replace(T=10)
    s = bf.build_variance_schedule(p)
    tr = rollout(zero_policy(), "belief_mean", batch_noise(21, 0, range(10_000), p.T), p, s)
    assert tr.x.min() > 0 and tr.x.max() < 100   # clamping never triggered
    err = tr.x - tr.x_hat
    for t in range(p.T):
        assert abs(err[:, t].var() / s.posterior_var[t] - 1) < 0.10


def test_belief_mean_marginal_law():
    p = P.replace(T=10)
    s = bf.build_variance_schedule(p)
    tr = rollout(zero_policy(), "belief_mean", batch_noise(22, 0, range(10_000), p.T), p, s)
    for t in range(p.T - 1):
        innov = tr.x_hat[:, t + 1] - (tr.x_hat[:, t] + tr.a[:, t] - p.D_bar)
        assert abs(innov.mean()) < 4 * math.sqrt(s.process_noise_var[t] / len(innov))
        assert abs(innov.var() / s.process_noise_var[t] - 1) < 0.10
