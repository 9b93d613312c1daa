import numpy as np
import pytest

from nonmarkov.agents import (
    ExactDiscretizer,
    RandomAgent,
    SENTINEL,
    UniformDiscretizer,
    WindowedQAgent,
    evaluate,
    parse_agent_spec,
    train,
)
from nonmarkov.core import ValidationError
from nonmarkov.envs import make_env, optimal_return, make_chain
from nonmarkov.wrappers import wrap


class TestDiscretizers:
    def test_exact_rounds(self):
        d = ExactDiscretizer()
        assert d.key([0.1234567, 1.0]) == (0.123457, 1.0)

    def test_uniform_bins(self):
        d = UniformDiscretizer(low=[0.0], high=[1.0], bins=4)
        assert d.key([0.1]) == (0,)
        assert d.key([0.9]) == (3,)
        assert d.key([-5.0]) == (0,)  # clipped
        assert d.key([5.0]) == (3,)

    def test_bins_validated(self):
        with pytest.raises(ValidationError):
            UniformDiscretizer([0.0], [1.0], bins=0)


class TestRandomAgent:
    def test_seeded_determinism(self):
        a1, a2 = RandomAgent(3), RandomAgent(3)
        a1.seed(5)
        a2.seed(5)
        assert [a1.act(None) for _ in range(20)] == [a2.act(None) for _ in range(20)]

    def test_training_is_noop(self):
        env = make_env("chain:5", max_steps=8)
        agent = RandomAgent(2)
        out = train(agent, env, episodes=3, seed=0, horizon=8)
        assert out is agent


class TestWindowedQAgent:
    def test_window_padding(self):
        agent = WindowedQAgent(num_actions=2, window=3)
        agent.observe_reset(np.array([1.0]))
        key = agent._key()
        assert key[0] == SENTINEL and key[1] == SENTINEL
        assert key[2] == (1.0,)

    def test_window_slides(self):
        agent = WindowedQAgent(num_actions=2, window=2)
        agent.observe_reset(np.array([1.0]))
        agent._advance(np.array([2.0]))
        agent._advance(np.array([3.0]))
        assert agent._key() == ((2.0,), (3.0,))

    def test_greedy_ties_low_action(self):
        agent = WindowedQAgent(num_actions=3, window=1)
        agent.observe_reset(np.array([1.0]))
        agent.q[agent._key()] = np.array([0.5, 0.5, 0.5])
        assert agent.act_greedy() == 0

    def test_unseen_key_default_action(self):
        agent = WindowedQAgent(num_actions=3, window=1)
        agent.observe_reset(np.array([9.0]))
        assert agent.act_greedy() == 0

    def test_epsilon_schedule(self):
        agent = WindowedQAgent(num_actions=2, window=1)
        assert agent.epsilon(0, 100) == pytest.approx(1.0)
        assert agent.epsilon(80, 100) == pytest.approx(0.05)
        assert agent.epsilon(99, 100) == pytest.approx(0.05)
        assert agent.epsilon(40, 100) == pytest.approx(0.525)

    def test_window_validated(self):
        with pytest.raises(ValidationError):
            WindowedQAgent(num_actions=2, window=0)


class TestTraining:
    def test_chain_convergence_to_optimum(self):
        env = make_env("chain:5", max_steps=8)
        agent = WindowedQAgent(num_actions=2, window=1)
        train(agent, env, episodes=500, seed=0, horizon=8)
        mean, std, _ = evaluate(agent, env, episodes=20, horizon=8, seed=99)
        assert mean == pytest.approx(optimal_return(make_chain(5), 8), abs=1e-9)
        assert std == 0.0

    def test_training_deterministic(self):
        def run():
            env = wrap(make_env("chain:5:0.2", max_steps=8), "S^1")
            agent = WindowedQAgent(num_actions=2, window=1)
            train(agent, env, episodes=200, seed=7, horizon=8)
            return evaluate(agent, env, episodes=50, horizon=8, seed=123)

        m1, s1, r1 = run()
        m2, s2, r2 = run()
        assert m1 == m2 and s1 == s2 and r1 == r2

    def test_evaluate_deterministic_for_random_agent(self):
        env = make_env("chain:5:0.2", max_steps=8)
        agent = RandomAgent(2)
        r1 = evaluate(agent, env, episodes=30, horizon=8, seed=5)
        r2 = evaluate(agent, env, episodes=30, horizon=8, seed=5)
        assert r1 == r2

    def test_episode_count_validated(self):
        env = make_env("chain:5", max_steps=8)
        with pytest.raises(ValidationError):
            train(WindowedQAgent(2), env, episodes=0, seed=0)
        with pytest.raises(ValidationError):
            evaluate(WindowedQAgent(2), env, episodes=0, horizon=8, seed=0)


class TestParseAgentSpec:
    def test_random(self):
        assert isinstance(parse_agent_spec("random", 2), RandomAgent)

    def test_qwin(self):
        agent = parse_agent_spec("qwin:3", 2)
        assert isinstance(agent, WindowedQAgent) and agent.window == 3

    def test_qwin_bins_requires_ranges(self):
        with pytest.raises(ValidationError):
            parse_agent_spec("qwin:2:8", 2)

    def test_qwin_bins_with_discretizer(self):
        d = UniformDiscretizer([0.0], [1.0], bins=2)
        agent = parse_agent_spec("qwin:2:8", 2, discretizer=d)
        assert agent.discretizer.bins == 8

    def test_unknown(self):
        with pytest.raises(ValidationError):
            parse_agent_spec("dqn", 2)
