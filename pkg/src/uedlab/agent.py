"""The student: a small actor-critic MLP trained with PPO.

Everything is plain numpy in float64. The network is a tanh trunk with a
policy head (3 action logits) and a value head; gradients are computed by
hand and checked against finite differences in the tests. Rollouts double
as training data, regret estimates (positive value loss over TD errors)
and occupancy samples for the transport distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import env as genv
from .levelgen import level_id
from .ot import SampleSet


class PolicyDivergedError(RuntimeError):
    """Non-finite network output or gradient; training has blown up."""


@dataclass(frozen=True)
class GaeConfig:
    gamma: float = 0.995
    lam: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must lie in (0, 1]")


@dataclass(frozen=True)
class PpoConfig:
    clip_ratio: float = 0.2
    epochs: int = 4
    minibatch_size: int = 128
    learning_rate: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    rollout_steps: int = 256
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True

    def __post_init__(self):
        if self.clip_ratio <= 0:
            raise ValueError("clip_ratio must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")


class PolicyParams:
    """Named weight arrays of the actor-critic MLP plus optimizer state.

    ``updates`` counts PPO updates applied; ``opt_steps`` counts Adam steps
    (used for bias correction).
    """

    def __init__(
        self,
        arrays: dict[str, np.ndarray],
        hidden: tuple[int, ...],
        updates: int = 0,
        adam_m: dict[str, np.ndarray] | None = None,
        adam_v: dict[str, np.ndarray] | None = None,
        opt_steps: int = 0,
    ):
        self.arrays = arrays
        self.hidden = tuple(hidden)
        self.updates = updates
        self.adam_m = adam_m or {k: np.zeros_like(a) for k, a in arrays.items()}
        self.adam_v = adam_v or {k: np.zeros_like(a) for k, a in arrays.items()}
        self.opt_steps = opt_steps

    @property
    def obs_dim(self) -> int:
        return self.arrays["w0"].shape[0]

    @property
    def n_actions(self) -> int:
        return self.arrays["w_pi"].shape[1]

    @classmethod
    def init(
        cls,
        obs_dim: int,
        rng: np.random.Generator,
        hidden: tuple[int, ...] = (64, 64),
        n_actions: int = genv.N_ACTIONS,
    ) -> "PolicyParams":
        """Orthogonal initialization: sqrt(2) gain in the trunk, a small
        policy head (near-uniform initial action distribution), unit value
        head."""
        arrays: dict[str, np.ndarray] = {}
        prev = obs_dim
        for i, width in enumerate(hidden):
            arrays[f"w{i}"] = _orthogonal((prev, width), np.sqrt(2.0), rng)
            arrays[f"b{i}"] = np.zeros(width)
            prev = width
        arrays["w_pi"] = _orthogonal((prev, n_actions), 0.01, rng)
        arrays["b_pi"] = np.zeros(n_actions)
        arrays["w_v"] = _orthogonal((prev, 1), 1.0, rng)
        arrays["b_v"] = np.zeros(1)
        return cls(arrays, hidden)

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            {k: a.copy() for k, a in self.arrays.items()},
            self.hidden,
            self.updates,
            {k: a.copy() for k, a in self.adam_m.items()},
            {k: a.copy() for k, a in self.adam_v.items()},
            self.opt_steps,
        )


def _orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(max(shape), min(shape)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return np.ascontiguousarray(gain * q[: shape[0], : shape[1]])


def _forward(
    arrays: dict[str, np.ndarray], n_hidden: int, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Returns (logits, values, hidden activations). x is (B, obs_dim)."""
    hiddens = []
    h = x
    for i in range(n_hidden):
        h = np.tanh(h @ arrays[f"w{i}"] + arrays[f"b{i}"])
        hiddens.append(h)
    logits = h @ arrays["w_pi"] + arrays["b_pi"]
    values = (h @ arrays["w_v"] + arrays["b_v"])[:, 0]
    return logits, values, hiddens


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def act(
    params: PolicyParams, obs_features: np.ndarray, rng: np.random.Generator
) -> tuple[int, float, float]:
    """Sample an action from the policy; returns (action, log_prob, value)."""
    x = np.asarray(obs_features, dtype=np.float64)[None, :]
    if x.shape[1] != params.obs_dim:
        raise ValueError(f"feature length {x.shape[1]} != input layer {params.obs_dim}")
    logits, values, _ = _forward(params.arrays, len(params.hidden), x)
    if not (np.all(np.isfinite(logits)) and np.isfinite(values[0])):
        raise PolicyDivergedError("non-finite network output")
    logp = _log_softmax(logits)[0]
    probs = np.exp(logp)
    action = int(rng.choice(len(probs), p=probs / probs.sum()))
    return action, float(logp[action]), float(values[0])


def act_greedy(params: PolicyParams, obs_features: np.ndarray) -> int:
    x = np.asarray(obs_features, dtype=np.float64)[None, :]
    logits, _, _ = _forward(params.arrays, len(params.hidden), x)
    if not np.all(np.isfinite(logits)):
        raise PolicyDivergedError("non-finite network output")
    return int(np.argmax(logits[0]))


@dataclass
class TrajectoryBatch:
    """Per-step rollout records over one or more complete episodes."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    td_errors: np.ndarray
    episode_bounds: list[tuple[int, int]]
    level_id: str
    gamma: float
    for_training: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.rewards)

    @property
    def n_episodes(self) -> int:
        return len(self.episode_bounds)

    def episode_returns(self) -> np.ndarray:
        """Undiscounted return of each episode."""
        return np.array([self.rewards[s:e].sum() for s, e in self.episode_bounds])

    def recompute_td_errors(self) -> np.ndarray:
        """Rebuild delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)."""
        out = np.empty_like(self.td_errors)
        for s, e in self.episode_bounds:
            next_values = np.append(self.values[s + 1 : e], 0.0)
            out[s:e] = (
                self.rewards[s:e]
                + self.gamma * next_values * (1.0 - self.dones[s:e])
                - self.values[s:e]
            )
        return out


def collect_trajectories(
    params: PolicyParams,
    level: genv.GridLevel,
    env_cfg: genv.EnvConfig,
    gae_cfg: GaeConfig,
    rng: np.random.Generator,
    n_episodes: int | None = None,
    min_steps: int | None = None,
    update_policy: bool = False,
) -> TrajectoryBatch:
    """Run complete episodes on a level under the current policy.

    Stops after n_episodes episodes, or once min_steps steps have been
    gathered (always on an episode boundary). update_policy=False marks a
    scoring-only batch: ppo_update refuses it, which is how the
    stop-gradient on freshly generated levels is enforced.
    """
    if n_episodes is None and min_steps is None:
        raise ValueError("give n_episodes or min_steps")
    if n_episodes is not None and n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")

    obs_list, actions, log_probs, rewards, values, dones = [], [], [], [], [], []
    bounds: list[tuple[int, int]] = []
    episodes = 0
    while True:
        start = len(rewards)
        state, obs = genv.reset(level, env_cfg)
        done = False
        while not done:
            features = genv.encode_observation(obs)
            action, logp, value = act(params, features, rng)
            state, obs, reward, done = genv.step(state, action, level, env_cfg)
            obs_list.append(features)
            actions.append(action)
            log_probs.append(logp)
            rewards.append(reward)
            values.append(value)
            dones.append(done)
        bounds.append((start, len(rewards)))
        episodes += 1
        if n_episodes is not None and episodes >= n_episodes:
            break
        if n_episodes is None and len(rewards) >= min_steps:
            break

    batch = TrajectoryBatch(
        obs=np.array(obs_list),
        actions=np.array(actions, dtype=np.int64),
        log_probs=np.array(log_probs),
        rewards=np.array(rewards),
        values=np.array(values),
        dones=np.array(dones, dtype=np.float64),
        td_errors=np.zeros(len(rewards)),
        episode_bounds=bounds,
        level_id=level_id(level),
        gamma=gae_cfg.gamma,
        for_training=update_policy,
    )
    batch.td_errors = batch.recompute_td_errors()
    return batch


def positive_value_loss(batch: TrajectoryBatch, gae: GaeConfig) -> float:
    """Regret proxy: per episode, average the positively-clipped discounted
    suffix sums of TD errors, then average over episodes. Nonnegative by
    construction and zero whenever no suffix sum is positive.
    """
    if batch.n_episodes == 0 or batch.n_steps == 0:
        raise ValueError("batch holds no complete episode")
    decay = gae.gamma * gae.lam
    per_episode = []
    for s, e in batch.episode_bounds:
        deltas = batch.td_errors[s:e]
        suffix = 0.0
        total = 0.0
        for d in deltas[::-1]:
            suffix = d + decay * suffix
            total += max(suffix, 0.0)
        per_episode.append(total / (e - s))
    return float(np.mean(per_episode))


def regret_max_minus_mean(batch: TrajectoryBatch) -> float:
    """Crude regret estimate: best episode return minus the mean return."""
    if batch.n_episodes < 2:
        raise ValueError("need at least 2 episodes")
    returns = batch.episode_returns()
    return float(returns.max() - returns.mean())


def occupancy_samples(batch: TrajectoryBatch) -> SampleSet:
    """State-action feature vectors with uniform weights: the empirical
    occupancy distribution the transport distance compares."""
    if batch.n_steps == 0:
        raise ValueError("empty batch")
    action_onehot = np.eye(genv.N_ACTIONS)[batch.actions]
    return SampleSet.uniform(np.hstack([batch.obs, action_onehot]))


def compute_gae(batch: TrajectoryBatch, gae: GaeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Standard signed GAE advantages and value targets."""
    decay = gae.gamma * gae.lam
    adv = np.empty(batch.n_steps)
    for s, e in batch.episode_bounds:
        running = 0.0
        for t in range(e - 1, s - 1, -1):
            running = batch.td_errors[t] + decay * running
            adv[t] = running
    return adv, adv + batch.values


def _loss_and_grads(
    arrays: dict[str, np.ndarray],
    hidden: tuple[int, ...],
    x: np.ndarray,
    actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    value_targets: np.ndarray,
    ppo: PpoConfig,
) -> tuple[float, dict[str, np.ndarray], dict[str, float]]:
    """Clipped-surrogate PPO loss and its exact gradients on one minibatch."""
    n = len(x)
    logits, values, hiddens = _forward(arrays, len(hidden), x)
    logp_all = _log_softmax(logits)
    probs = np.exp(logp_all)
    lp = logp_all[np.arange(n), actions]
    ratio = np.exp(lp - old_log_probs)

    clipped = np.clip(ratio, 1.0 - ppo.clip_ratio, 1.0 + ppo.clip_ratio)
    surr1 = ratio * advantages
    surr2 = clipped * advantages
    policy_loss = -np.minimum(surr1, surr2).mean()
    value_err = values - value_targets
    value_loss = 0.5 * np.mean(value_err**2)
    entropy_per = -(probs * logp_all).sum(axis=1)
    entropy = entropy_per.mean()
    total = policy_loss + ppo.value_coef * value_loss - ppo.entropy_coef * entropy

    # d total / d log-prob of the taken action. The clipped branch of the
    # min() has zero derivative (clip is saturated whenever it is active).
    use_unclipped = surr1 <= surr2
    g_lp = np.where(use_unclipped, -advantages * ratio, 0.0) / n

    onehot = np.eye(logits.shape[1])[actions]
    d_logits = g_lp[:, None] * (onehot - probs)
    d_logits += (ppo.entropy_coef / n) * probs * (logp_all + entropy_per[:, None])
    d_values = (ppo.value_coef / n) * value_err

    grads: dict[str, np.ndarray] = {}
    h_last = hiddens[-1]
    grads["w_pi"] = h_last.T @ d_logits
    grads["b_pi"] = d_logits.sum(axis=0)
    grads["w_v"] = h_last.T @ d_values[:, None]
    grads["b_v"] = np.array([d_values.sum()])

    dh = d_logits @ arrays["w_pi"].T + d_values[:, None] @ arrays["w_v"].T
    for i in range(len(hidden) - 1, -1, -1):
        dz = dh * (1.0 - hiddens[i] ** 2)
        below = x if i == 0 else hiddens[i - 1]
        grads[f"w{i}"] = below.T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        if i > 0:
            dh = dz @ arrays[f"w{i}"].T

    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
    }
    return float(total), grads, stats


def ppo_update(
    params: PolicyParams,
    batch: TrajectoryBatch,
    ppo: PpoConfig,
    gae: GaeConfig,
    rng: np.random.Generator,
) -> tuple[PolicyParams, dict[str, float]]:
    """One PPO update: clipped surrogate + value loss + entropy bonus,
    minibatch Adam over several epochs. Returns fresh params."""
    if not batch.for_training:
        raise ValueError("batch was collected for scoring only (stop-gradient)")
    if batch.n_steps == 0:
        raise ValueError("empty batch")

    advantages, value_targets = compute_gae(batch, gae)
    if ppo.normalize_advantages:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    out = params.copy()
    n = batch.n_steps
    totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
    n_minibatches = 0
    for _ in range(ppo.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, ppo.minibatch_size):
            idx = order[lo : lo + ppo.minibatch_size]
            _, grads, stats = _loss_and_grads(
                out.arrays,
                out.hidden,
                batch.obs[idx],
                batch.actions[idx],
                batch.log_probs[idx],
                advantages[idx],
                value_targets[idx],
                ppo,
            )
            _adam_step(out, grads, ppo)
            for k in totals:
                totals[k] += stats[k]
            n_minibatches += 1

    out.updates += 1
    means = {k: v / n_minibatches for k, v in totals.items()}
    if not all(np.isfinite(v) for v in means.values()):
        raise PolicyDivergedError(f"non-finite loss statistics: {means}")
    return out, means


def _adam_step(params: PolicyParams, grads: dict[str, np.ndarray], ppo: PpoConfig) -> None:
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise PolicyDivergedError(f"non-finite gradient in {k!r}")
    if ppo.max_grad_norm > 0:
        norm = np.sqrt(sum(float((g**2).sum()) for g in grads.values()))
        if norm > ppo.max_grad_norm:
            scale = ppo.max_grad_norm / norm
            grads = {k: g * scale for k, g in grads.items()}

    params.opt_steps += 1
    t = params.opt_steps
    b1, b2, eps = 0.9, 0.999, 1e-8
    for k, g in grads.items():
        m = params.adam_m[k]
        v = params.adam_v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g**2
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        params.arrays[k] -= ppo.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
