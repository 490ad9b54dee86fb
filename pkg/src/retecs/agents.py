"""Tableau and network reinforcement-learning agents.

Both agents map one test case's state to a priority. The tableau agent keeps
visit counts and mean rewards per (discrete state, action) cell and explores
epsilon-greedily. The network agent is a one-hidden-layer regressor trained by
SGD on samples from a replay buffer, exploring with Gaussian action noise.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np

SNAPSHOT_VERSION = 1


class Experience(NamedTuple):
    state: tuple
    action: float
    reward: float


# --------------------------------------------------------------------------
# Discretization and tableau memory


def _duration_bucket(duration: float, duration_range: Tuple[float, float]) -> int:
    lo, hi = duration_range
    if hi <= lo or duration <= lo:
        return 0
    frac = math.log(duration / lo) / math.log(hi / lo)
    return min(int(frac * 3), 2)


def _recency_bucket(since: float) -> int:
    if since <= 1:
        return 0
    if since <= 2:
        return 1
    if since <= 5:
        return 2
    return 3


def discretize(state: Sequence[float], duration_range: Tuple[float, float]) -> tuple:
    """Discrete key for a raw feature vector from :func:`retecs.domain.featurize`.

    Duration falls into one of three log-spaced buckets over ``duration_range``,
    time since last run into {1, 2, 3-5, >5}; history bits are kept as is.
    """
    duration, since, *bits = state
    return (_duration_bucket(duration, duration_range), _recency_bucket(since)) + tuple(
        int(b) for b in bits
    )


@dataclass
class TableauMemory:
    action_count: int = 25
    exploration_rate: float = 0.2
    counts: Dict[tuple, np.ndarray] = field(default_factory=dict)
    mean_reward: Dict[tuple, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.action_count < 2:
            raise ValueError("action_count must be >= 2")
        if not 0.0 <= self.exploration_rate <= 1.0:
            raise ValueError("exploration_rate must be in [0, 1]")

    def cell(self, key) -> Tuple[np.ndarray, np.ndarray]:
        if key not in self.counts:
            self.counts[key] = np.zeros(self.action_count, dtype=np.int64)
            self.mean_reward[key] = np.zeros(self.action_count)
        return self.counts[key], self.mean_reward[key]

    def means(self, key) -> np.ndarray:
        means = self.mean_reward.get(key)
        return np.zeros(self.action_count) if means is None else means


def tableau_act(memory: TableauMemory, key, rng: np.random.Generator) -> Tuple[int, float]:
    """Epsilon-greedy action for discrete state ``key``: (action index, priority in [0, 1])."""
    explore = rng.random() < memory.exploration_rate
    if explore:
        action = int(rng.integers(memory.action_count))
    else:
        means = memory.means(key)
        best = np.flatnonzero(means == means.max())
        action = int(best[0]) if best.size == 1 else int(rng.choice(best))
    return action, action / (memory.action_count - 1)


def tableau_learn(memory: TableauMemory, experiences) -> TableauMemory:
    """Incremental running-mean update, in place; returns ``memory`` for chaining."""
    for key, action, reward in experiences:
        counts, means = memory.cell(key)
        counts[action] += 1
        means[action] += (reward - means[action]) / counts[action]
    return memory


# --------------------------------------------------------------------------
# Network memory


@dataclass
class NetworkMemory:
    """One tanh hidden layer feeding a single linear output unit."""

    w_hidden: np.ndarray  # (hidden, inputs)
    b_hidden: np.ndarray  # (hidden,)
    w_out: np.ndarray  # (hidden,)
    b_out: float
    exploration_rate: float = 0.1
    learning_rate: float = 0.05

    @property
    def n_inputs(self) -> int:
        return self.w_hidden.shape[1]

    def params(self) -> List[np.ndarray]:
        return [self.w_hidden, self.b_hidden, self.w_out, np.array([self.b_out])]

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        w_hidden, b_hidden, w_out, b_out = params
        self.w_hidden = np.asarray(w_hidden, dtype=float)
        self.b_hidden = np.asarray(b_hidden, dtype=float)
        self.w_out = np.asarray(w_out, dtype=float)
        self.b_out = float(np.asarray(b_out).reshape(-1)[0])

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params())


def init_network(
    n_inputs: int,
    rng: np.random.Generator,
    hidden: int = 12,
    exploration_rate: float = 0.1,
    learning_rate: float = 0.05,
) -> NetworkMemory:
    if exploration_rate < 0:
        raise ValueError("exploration_rate must be >= 0")
    if not learning_rate > 0:
        raise ValueError("learning_rate must be > 0")
    lim_in = 1.0 / math.sqrt(n_inputs)
    lim_hidden = 1.0 / math.sqrt(hidden)
    return NetworkMemory(
        w_hidden=rng.uniform(-lim_in, lim_in, (hidden, n_inputs)),
        b_hidden=rng.uniform(-lim_in, lim_in, hidden),
        w_out=rng.uniform(-lim_hidden, lim_hidden, hidden),
        b_out=float(rng.uniform(-lim_hidden, lim_hidden)),
        exploration_rate=exploration_rate,
        learning_rate=learning_rate,
    )


def network_forward(memory: NetworkMemory, state):
    """Priority for one state (returns float) or a batch of states (returns array)."""
    x = np.asarray(state, dtype=float)
    if x.shape[-1] != memory.n_inputs:
        raise ValueError(
            f"state has {x.shape[-1]} features, network expects {memory.n_inputs}"
        )
    hidden = np.tanh(x @ memory.w_hidden.T + memory.b_hidden)
    out = hidden @ memory.w_out + memory.b_out
    return float(out) if x.ndim == 1 else out


def network_act(memory: NetworkMemory, state, rng: np.random.Generator):
    """Forward pass plus N(0, sigma^2) exploration noise."""
    value = network_forward(memory, state)
    return value + rng.normal(0.0, memory.exploration_rate, size=np.shape(value))


def loss_and_gradient(memory: NetworkMemory, states, targets):
    """Mean squared error over the batch and its gradient w.r.t. ``memory.params()``."""
    x = np.asarray(states, dtype=float)
    t = np.asarray(targets, dtype=float)
    hidden = np.tanh(x @ memory.w_hidden.T + memory.b_hidden)
    out = hidden @ memory.w_out + memory.b_out
    err = out - t
    n = len(t)
    loss = float(np.mean(err ** 2))

    d_out = 2.0 * err / n
    g_w_out = hidden.T @ d_out
    g_b_out = np.array([d_out.sum()])
    d_hidden = np.outer(d_out, memory.w_out) * (1.0 - hidden ** 2)
    g_w_hidden = d_hidden.T @ x
    g_b_hidden = d_hidden.sum(axis=0)
    return loss, [g_w_hidden, g_b_hidden, g_w_out, g_b_out]


def network_train(memory: NetworkMemory, batch: Sequence[Experience], minibatch_size: int = 32) -> NetworkMemory:
    """One SGD pass over ``batch`` in consecutive minibatches, regressing output on reward.

    Updates ``memory`` in place and returns it.
    """
    if not batch:
        raise ValueError("network_train needs a non-empty batch")
    states = np.array([e.state for e in batch], dtype=float)
    rewards = np.array([e.reward for e in batch], dtype=float)
    lr = memory.learning_rate
    for start in range(0, len(batch), minibatch_size):
        sl = slice(start, start + minibatch_size)
        _, grads = loss_and_gradient(memory, states[sl], rewards[sl])
        memory.w_hidden -= lr * grads[0]
        memory.b_hidden -= lr * grads[1]
        memory.w_out -= lr * grads[2]
        memory.b_out -= lr * float(grads[3][0])
    if not memory.is_finite():
        raise FloatingPointError("network weights diverged to non-finite values")
    return memory


# --------------------------------------------------------------------------
# Replay buffer


class ReplayBuffer:
    """Bounded FIFO of experiences; the oldest entries are evicted first."""

    def __init__(self, capacity: int = 10000, batch_size: int = 1000):
        if capacity < 1 or batch_size < 1:
            raise ValueError("capacity and batch_size must be positive")
        self.capacity = capacity
        self.batch_size = batch_size
        self.experiences: deque = deque(maxlen=capacity)

    def __len__(self):
        return len(self.experiences)

    def store(self, experience) -> "ReplayBuffer":
        self.experiences.append(Experience(*experience))
        return self

    def sample(self, rng: np.random.Generator) -> List[Experience]:
        """Uniform sample without replacement of ``min(batch_size, len)`` experiences."""
        n = len(self.experiences)
        if n == 0:
            return []
        idx = rng.choice(n, size=min(self.batch_size, n), replace=False)
        return [self.experiences[i] for i in idx]


# replay_store / replay_sample as free functions, mirroring the method API
def replay_store(buffer: ReplayBuffer, experience) -> ReplayBuffer:
    return buffer.store(experience)


def replay_sample(buffer: ReplayBuffer, rng: np.random.Generator) -> List[Experience]:
    return buffer.sample(rng)


# --------------------------------------------------------------------------
# Agents used by the replay loop


class TableauAgent:
    name = "tableau"

    def __init__(
        self,
        duration_range: Tuple[float, float],
        rng: np.random.Generator,
        action_count: int = 25,
        exploration_rate: float = 0.2,
        exploration_decay: float = 1.0,
    ):
        self.duration_range = tuple(float(v) for v in duration_range)
        self.rng = rng
        self.memory = TableauMemory(action_count, exploration_rate)
        self.exploration_decay = exploration_decay

    def act(self, states: Sequence[Sequence[float]]) -> Tuple[np.ndarray, list]:
        """Priorities for raw feature vectors, plus what to remember for learning."""
        keys, priorities = [], []
        for state in states:
            key = discretize(state, self.duration_range)
            action, priority = tableau_act(self.memory, key, self.rng)
            keys.append((key, action))
            priorities.append(priority)
        return np.array(priorities), keys

    def learn(self, actions: Sequence, rewards: Sequence[float]) -> None:
        tableau_learn(self.memory, ((key, a, r) for (key, a), r in zip(actions, rewards)))

    def end_cycle(self) -> None:
        self.memory.exploration_rate *= self.exploration_decay

    def to_dict(self) -> dict:
        mem = self.memory
        return {
            "version": SNAPSHOT_VERSION,
            "kind": self.name,
            "duration_range": list(self.duration_range),
            "action_count": mem.action_count,
            "exploration_rate": mem.exploration_rate,
            "exploration_decay": self.exploration_decay,
            "cells": [
                {"key": list(key), "counts": mem.counts[key].tolist(), "means": mem.mean_reward[key].tolist()}
                for key in mem.counts
            ],
            "rng": self.rng.bit_generator.state,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TableauAgent":
        _check_snapshot(data, cls.name)
        rng = np.random.default_rng()
        rng.bit_generator.state = data["rng"]
        agent = cls(data["duration_range"], rng, data["action_count"], data["exploration_rate"],
                    data["exploration_decay"])
        for cell in data["cells"]:
            key = tuple(cell["key"])
            agent.memory.counts[key] = np.array(cell["counts"], dtype=np.int64)
            agent.memory.mean_reward[key] = np.array(cell["means"], dtype=float)
        return agent


class NetworkAgent:
    name = "network"

    def __init__(
        self,
        n_inputs: int,
        rng: np.random.Generator,
        hidden: int = 12,
        exploration_rate: float = 0.1,
        learning_rate: float = 0.05,
        replay_capacity: int = 10000,
        batch_size: int = 1000,
        minibatch_size: int = 32,
        exploration_decay: float = 1.0,
    ):
        self.rng = rng
        self.memory = init_network(n_inputs, rng, hidden, exploration_rate, learning_rate)
        self.buffer = ReplayBuffer(replay_capacity, batch_size)
        self.minibatch_size = minibatch_size
        self.exploration_decay = exploration_decay

    def act(self, states: Sequence[Sequence[float]]) -> Tuple[np.ndarray, list]:
        x = np.asarray(states, dtype=float)
        actions = network_act(self.memory, x, self.rng)
        # the noisy action is what shaped the schedule, so it is what gets stored
        return actions, [(tuple(s), float(a)) for s, a in zip(x.tolist(), actions)]

    def learn(self, actions: Sequence, rewards: Sequence[float]) -> None:
        for (state, action), reward in zip(actions, rewards):
            self.buffer.store((state, action, float(reward)))
        batch = self.buffer.sample(self.rng)
        if batch:
            network_train(self.memory, batch, self.minibatch_size)

    def end_cycle(self) -> None:
        self.memory.exploration_rate *= self.exploration_decay

    def to_dict(self) -> dict:
        mem = self.memory
        return {
            "version": SNAPSHOT_VERSION,
            "kind": self.name,
            "weights": {
                "w_hidden": mem.w_hidden.tolist(),
                "b_hidden": mem.b_hidden.tolist(),
                "w_out": mem.w_out.tolist(),
                "b_out": mem.b_out,
            },
            "exploration_rate": mem.exploration_rate,
            "learning_rate": mem.learning_rate,
            "exploration_decay": self.exploration_decay,
            "minibatch_size": self.minibatch_size,
            "replay": {
                "capacity": self.buffer.capacity,
                "batch_size": self.buffer.batch_size,
                "experiences": [[list(e.state), e.action, e.reward] for e in self.buffer.experiences],
            },
            "rng": self.rng.bit_generator.state,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkAgent":
        _check_snapshot(data, cls.name)
        w = data["weights"]
        rng = np.random.default_rng()
        rng.bit_generator.state = data["rng"]
        w_hidden = np.array(w["w_hidden"], dtype=float)
        replay = data["replay"]
        agent = cls.__new__(cls)
        agent.rng = rng
        agent.memory = NetworkMemory(
            w_hidden, np.array(w["b_hidden"], dtype=float), np.array(w["w_out"], dtype=float),
            float(w["b_out"]), data["exploration_rate"], data["learning_rate"],
        )
        agent.buffer = ReplayBuffer(replay["capacity"], replay["batch_size"])
        for state, action, reward in replay["experiences"]:
            agent.buffer.store((tuple(state), action, reward))
        agent.minibatch_size = data["minibatch_size"]
        agent.exploration_decay = data["exploration_decay"]
        return agent


def _check_snapshot(data: dict, kind: str) -> None:
    if data.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {data.get('version')!r}")
    if data.get("kind") != kind:
        raise ValueError(f"snapshot is for {data.get('kind')!r}, not {kind!r}")


def save_snapshot(agent, path) -> None:
    Path(path).write_text(json.dumps(agent.to_dict()), encoding="utf-8")


def load_snapshot(path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    kinds = {TableauAgent.name: TableauAgent, NetworkAgent.name: NetworkAgent}
    try:
        return kinds[data["kind"]].from_dict(data)
    except KeyError:
        raise ValueError(f"unknown snapshot kind {data.get('kind')!r}") from None
