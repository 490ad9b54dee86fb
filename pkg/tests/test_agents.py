import itertools
import math

import numpy as np
import pytest
from scipy import stats

from oracles import finite_difference_gradient
from retecs.agents import (
    Experience,
    NetworkAgent,
    NetworkMemory,
    ReplayBuffer,
    TableauAgent,
    TableauMemory,
    discretize,
    init_network,
    load_snapshot,
    loss_and_gradient,
    network_act,
    network_forward,
    network_train,
    replay_sample,
    replay_store,
    save_snapshot,
    tableau_act,
    tableau_learn,
)

RANGE = (1.0, 1000.0)


# -- discretization ---------------------------------------------------------

def test_same_duration_bucket_same_key():
    assert discretize([2.0, 1, 0, 1], RANGE) == discretize([5.0, 1, 0, 1], RANGE)
    assert discretize([2.0, 1, 0, 1], RANGE) != discretize([500.0, 1, 0, 1], RANGE)


def test_history_bits_distinguish_keys():
    assert discretize([2.0, 1, 0, 1], RANGE) != discretize([2.0, 1, 1, 1], RANGE)


def test_recency_buckets():
    keys = {since: discretize([2.0, since, 0], RANGE)[1] for since in (1, 2, 3, 5, 6, 50)}
    assert keys == {1: 0, 2: 1, 3: 2, 5: 2, 6: 3, 50: 3}


def test_key_count_by_enumeration():
    durations = np.geomspace(*RANGE, 50)
    keys = {
        discretize([d, since, *bits], RANGE)
        for d in durations
        for since in range(1, 12)
        for bits in itertools.product((0.0, 1.0), repeat=4)
    }
    assert len(keys) == 3 * 4 * 2 ** 4 == 192


# -- tableau ----------------------------------------------------------------

def test_greedy_picks_best_mean():
    mem = TableauMemory(action_count=3, exploration_rate=0.0)
    mem.cell("s")
    mem.mean_reward["s"][:] = [0.1, 0.9, 0.4]
    rng = np.random.default_rng(0)
    assert {tableau_act(mem, "s", rng) for _ in range(50)} == {(1, 0.5)}


def test_full_exploration_is_uniform():
    mem = TableauMemory(action_count=25, exploration_rate=1.0)
    mem.cell("s")
    mem.mean_reward["s"][3] = 10.0
    rng = np.random.default_rng(1)
    counts = np.bincount([tableau_act(mem, "s", rng)[0] for _ in range(10_000)], minlength=25)
    assert stats.chisquare(counts).pvalue > 0.01


def test_unseen_state_ties_are_uniform():
    mem = TableauMemory(action_count=5, exploration_rate=0.0)
    rng = np.random.default_rng(2)
    counts = np.bincount([tableau_act(mem, "new", rng)[0] for _ in range(5000)], minlength=5)
    assert stats.chisquare(counts).pvalue > 0.01
    assert "new" not in mem.counts


def test_priority_spans_unit_interval():
    mem = TableauMemory(action_count=25, exploration_rate=1.0)
    rng = np.random.default_rng(3)
    priorities = {tableau_act(mem, "s", rng)[1] for _ in range(2000)}
    assert min(priorities) == 0.0 and max(priorities) == 1.0


def test_learn_running_mean():
    mem = TableauMemory(action_count=3)
    tableau_learn(mem, [("s", 1, 1.0)])
    assert mem.counts["s"][1] == 1 and mem.mean_reward["s"][1] == 1.0
    tableau_learn(mem, [("s", 1, 0.0)])
    assert mem.counts["s"][1] == 2 and mem.mean_reward["s"][1] == 0.5


def test_learn_order_of_distinct_cells_irrelevant():
    exps = [("a", 0, 1.0), ("b", 2, 3.0), ("a", 1, 0.5), ("c", 0, 2.0)]
    m1 = tableau_learn(TableauMemory(action_count=3), exps)
    m2 = tableau_learn(TableauMemory(action_count=3), exps[::-1])
    for key in m1.counts:
        assert (m1.counts[key] == m2.counts[key]).all()
        assert (m1.mean_reward[key] == m2.mean_reward[key]).all()


def test_means_equal_exact_average_of_log():
    rng = np.random.default_rng(4)
    mem = TableauMemory(action_count=4)
    log = {}
    for _ in range(50):
        batch = [(str(rng.integers(3)), int(rng.integers(4)), float(rng.integers(0, 10))) for _ in range(20)]
        tableau_learn(mem, batch)
        for key, a, r in batch:
            log.setdefault((key, a), []).append(r)
    for (key, a), rewards in log.items():
        assert mem.counts[key][a] == len(rewards)
        assert mem.mean_reward[key][a] == pytest.approx(np.mean(rewards), rel=1e-12)


def test_dominant_action_deterministic_without_exploration():
    mem = TableauMemory(action_count=4, exploration_rate=0.0)
    tableau_learn(mem, [("s", 2, 5.0), ("s", 0, 1.0)])
    assert {tableau_act(mem, "s", np.random.default_rng(s))[0] for s in range(20)} == {2}


# -- network ----------------------------------------------------------------

def _tiny_network():
    return NetworkMemory(
        w_hidden=np.array([[0.5, -0.25], [0.1, 0.3]]),
        b_hidden=np.array([0.05, -0.2]),
        w_out=np.array([0.7, -1.1]),
        b_out=0.15,
    )


def test_forward_hand_computed():
    x = (0.8, -0.4)
    h1 = math.tanh(0.5 * 0.8 + -0.25 * -0.4 + 0.05)
    h2 = math.tanh(0.1 * 0.8 + 0.3 * -0.4 - 0.2)
    expected = 0.7 * h1 - 1.1 * h2 + 0.15
    assert abs(network_forward(_tiny_network(), x) - expected) <= 1e-9


def test_forward_zero_weights_gives_bias():
    mem = NetworkMemory(np.zeros((12, 6)), np.zeros(12), np.zeros(12), 0.37)
    assert network_forward(mem, np.ones(6)) == 0.37


def test_forward_is_pure_and_batched():
    mem = init_network(6, np.random.default_rng(0))
    x = np.random.default_rng(1).random((5, 6))
    assert network_forward(mem, x[0]) == network_forward(mem, x[0])
    assert np.allclose(network_forward(mem, x), [network_forward(mem, row) for row in x])


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        network_forward(_tiny_network(), [1.0, 2.0, 3.0])


def test_init_bounds():
    mem = init_network(6, np.random.default_rng(0), hidden=12)
    assert np.abs(mem.w_hidden).max() <= 1 / math.sqrt(6)
    assert np.abs(mem.w_out).max() <= 1 / math.sqrt(12)


def test_act_without_noise_equals_forward():
    mem = _tiny_network()
    mem.exploration_rate = 0.0
    assert network_act(mem, (0.3, 0.2), np.random.default_rng(0)) == network_forward(mem, (0.3, 0.2))


def test_act_noise_mean():
    mem = _tiny_network()
    mem.exploration_rate = 0.5
    x = np.tile([0.3, 0.2], (10_000, 1))
    draws = network_act(mem, x, np.random.default_rng(9))
    assert abs(draws.mean() - network_forward(mem, (0.3, 0.2))) <= 3 * 0.5 / math.sqrt(10_000)


def test_act_noise_depends_on_seed():
    mem = _tiny_network()
    mem.exploration_rate = 0.5
    x = np.tile([0.3, 0.2], (5, 1))
    assert not np.array_equal(network_act(mem, x, np.random.default_rng(1)),
                              network_act(mem, x, np.random.default_rng(2)))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(20):
        mem = init_network(6, rng, hidden=12)
        mem.set_params([p * 3 for p in mem.params()])
        x = rng.random((16, 6))
        t = rng.random(16) * 2

        def loss(params):
            trial = NetworkMemory(*params[:3], float(params[3][0]))
            return loss_and_gradient(trial, x, t)[0]

        _, analytic = loss_and_gradient(mem, x, t)
        numeric = finite_difference_gradient(loss, mem.params(), step=1e-5)
        for a, n in zip(analytic, numeric):
            rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
            worst = max(worst, rel.max())
    assert worst <= 1e-4


def test_training_single_sample_converges():
    mem = init_network(3, np.random.default_rng(0))
    mem.learning_rate = 0.05
    batch = [Experience((0.2, 0.5, 1.0), 0.0, 1.0)]
    losses = []
    for _ in range(200):
        losses.append(loss_and_gradient(mem, [batch[0].state], [1.0])[0])
        network_train(mem, batch)
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    assert network_forward(mem, batch[0].state) == pytest.approx(1.0, abs=1e-3)


def test_training_rejects_empty_batch():
    with pytest.raises(ValueError):
        network_train(_tiny_network(), [])


def test_weights_stay_finite():
    rng = np.random.default_rng(5)
    mem = init_network(6, rng)
    for _ in range(50):
        batch = [Experience(tuple(rng.random(6)), 0.0, float(rng.integers(0, 20))) for _ in range(100)]
        network_train(mem, batch)
    assert mem.is_finite()


# -- replay buffer ----------------------------------------------------------

def test_fifo_eviction():
    buf = ReplayBuffer(capacity=2)
    for name in "abc":
        replay_store(buf, ((name,), 0.0, 0.0))
    assert [e.state for e in buf.experiences] == [("b",), ("c",)]


def test_sample_is_clamped_and_without_replacement():
    buf = ReplayBuffer(capacity=100, batch_size=1000)
    for k in range(5):
        buf.store(((k,), 0.0, 0.0))
    batch = replay_sample(buf, np.random.default_rng(0))
    assert sorted(e.state for e in batch) == [(k,) for k in range(5)]


def test_sample_empty_buffer():
    assert ReplayBuffer().sample(np.random.default_rng(0)) == []


def test_sampling_is_uniform():
    buf = ReplayBuffer(capacity=50, batch_size=10)
    for k in range(50):
        buf.store(((k,), 0.0, 0.0))
    rng = np.random.default_rng(6)
    counts = np.zeros(50)
    for _ in range(2000):
        for e in buf.sample(rng):
            counts[e.state[0]] += 1
    assert stats.chisquare(counts).pvalue > 0.01


# -- agents and snapshots ----------------------------------------------------

def _states(rng, n=20):
    return [[float(rng.uniform(1, 100)), float(rng.integers(1, 8)), *rng.integers(0, 2, 4).astype(float)]
            for _ in range(n)]


@pytest.mark.parametrize("kind", ["tableau", "network"])
def test_snapshot_round_trip_resumes_identically(tmp_path, kind):
    rng = np.random.default_rng(11)
    if kind == "tableau":
        agent = TableauAgent((1.0, 100.0), np.random.default_rng(0))
    else:
        agent = NetworkAgent(6, np.random.default_rng(0), replay_capacity=50, batch_size=20)
    for _ in range(5):
        _, actions = agent.act(_states(rng))
        agent.learn(actions, rng.integers(0, 2, len(actions)).astype(float))
    save_snapshot(agent, tmp_path / "agent.json")
    clone = load_snapshot(tmp_path / "agent.json")

    states = _states(rng)
    p1, a1 = agent.act(states)
    p2, a2 = clone.act(states)
    assert np.array_equal(p1, p2)
    rewards = np.ones(len(a1))
    agent.learn(a1, rewards)
    clone.learn(a2, rewards)
    assert np.array_equal(agent.act(states)[0], clone.act(states)[0])


def test_snapshot_version_checked(tmp_path):
    agent = TableauAgent((1.0, 2.0), np.random.default_rng(0))
    data = agent.to_dict()
    data["version"] = 99
    with pytest.raises(ValueError):
        TableauAgent.from_dict(data)


def test_exploration_decay():
    agent = TableauAgent((1.0, 2.0), np.random.default_rng(0), exploration_rate=0.2, exploration_decay=0.5)
    agent.end_cycle()
    assert agent.memory.exploration_rate == 0.1
    net = NetworkAgent(3, np.random.default_rng(0), exploration_rate=0.2)
    net.end_cycle()
    assert net.memory.exploration_rate == 0.2
