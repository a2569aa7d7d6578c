"""Policy-gradient training loops.

Policies expose three methods to the collector: begin_episode(env),
act(rng) -> (action, log_prob, state_snapshot), observe(action, feedback,
reward). Learners expose log_prob_entropy(states, actions) -> ((B,)
log-prob tensor, (B,) entropy tensor, greedy actions) so the update rules
stay agnostic to the model family (graph recommender, flat MLP, tabular
logits).

The REINFORCE update recomputes log-probabilities on every repeat pass
over the collected batch (no importance correction, no value baseline);
returns-to-go are standardised once across the whole batch when enabled.
PPO adds the clipped ratio surrogate with GAE advantages for the flat
baseline policy, whose learner also exposes values(states) -> (B,).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import Adam


@dataclass
class TrainConfig:
    lr: float
    discount: float
    batch_size: int
    repeat: int
    entropy_coef: float = 0.01
    standardize_returns: bool = True

    def __post_init__(self):
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError(f"discount {self.discount} outside [0, 1]")
        if self.batch_size < 1 or self.repeat < 1:
            raise ValueError("batch_size and repeat must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass
class PpoConfig(TrainConfig):
    clip: float = 0.2
    gae_lambda: float = 0.95
    value_coef: float = 0.5


@dataclass
class Trajectory:
    states: list = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    log_probs: list[float] = field(default_factory=list)

    @property
    def total_return(self) -> float:
        return float(sum(self.rewards))

    def __len__(self) -> int:
        return len(self.actions)


def returns_to_go(rewards, discount: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + discount * acc
        out[i] = acc
    return out


def standardize(values: np.ndarray) -> np.ndarray:
    if values.size < 2:
        return values
    sd = values.std()
    if sd < 1e-12:
        return values - values.mean()
    return (values - values.mean()) / sd


def collect(
    policy,
    make_env,
    rng: np.random.Generator,
    episodes: int | None = None,
    steps: int | None = None,
) -> list[Trajectory]:
    """Roll episodes until the budget is spent. An episode budget always
    yields complete episodes; a step budget may truncate the last one."""
    if (episodes is None) == (steps is None):
        raise ValueError("give exactly one of episodes= or steps=")
    trajectories: list[Trajectory] = []
    done_steps = 0
    while True:
        if episodes is not None and len(trajectories) >= episodes:
            break
        if steps is not None and done_steps >= steps:
            break
        env = make_env()
        policy.begin_episode(env)
        traj = Trajectory()
        while not env.done:
            action, logp, state = policy.act(rng)
            feedback, reward, _ = env.step(action)
            policy.observe(action, feedback, reward)
            traj.states.append(state)
            traj.actions.append(action)
            traj.rewards.append(reward)
            traj.log_probs.append(logp)
            done_steps += 1
            if steps is not None and done_steps >= steps:
                break
        trajectories.append(traj)
    return trajectories


def _flatten(trajectories, discount: float):
    states, actions, gains, logps = [], [], [], []
    for traj in trajectories:
        ret = returns_to_go(traj.rewards, discount)
        states.extend(traj.states)
        actions.extend(traj.actions)
        gains.extend(ret.tolist())
        logps.extend(traj.log_probs)
    return states, np.asarray(actions), np.asarray(gains), np.asarray(logps)


def reinforce_update(
    learner,
    optimizer: Adam,
    trajectories: list[Trajectory],
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> dict:
    states, actions, gains, _ = _flatten(trajectories, cfg.discount)
    if cfg.standardize_returns:
        gains = standardize(gains)
    n = len(states)
    losses, entropies = [], []
    for _ in range(cfg.repeat):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            optimizer.zero_grad()
            logp, entropy, _ = learner.log_prob_entropy(
                [states[i] for i in idx], actions[idx]
            )
            mean_ent = ad.tmean(entropy)
            objective = ad.tmean(ad.mul(logp, Tensor(gains[idx])))
            loss = ad.add_n(
                [ad.scale(objective, -1.0), ad.scale(mean_ent, -cfg.entropy_coef)]
            )
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
            entropies.append(mean_ent.item())
    return {"loss": float(np.mean(losses)), "entropy": float(np.mean(entropies))}


def imitation_update(
    learner,
    optimizer: Adam,
    states: list,
    labels: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> dict:
    """One epoch of minibatch cross-entropy against reference actions."""
    n = len(states)
    order = rng.permutation(n)
    losses = []
    agree = 0
    steps = 0
    for lo in range(0, n, cfg.batch_size):
        idx = order[lo : lo + cfg.batch_size]
        optimizer.zero_grad()
        logp, _, greedy = learner.log_prob_entropy(
            [states[i] for i in idx], labels[idx]
        )
        loss = ad.scale(ad.tmean(logp), -1.0)
        loss.backward()
        optimizer.step()
        losses.append(loss.item())
        agree += int((greedy == labels[idx]).sum())
        steps += 1
    return {
        "loss": float(np.mean(losses)),
        "agreement": agree / n,
        "steps": steps,
    }


def greedy_agreement(learner, states: list, labels: np.ndarray) -> float:
    with ad.no_grad():
        _, _, greedy = learner.log_prob_entropy(states, labels)
    return float((greedy == labels).mean())


def gae_advantages(
    rewards: np.ndarray, values: np.ndarray, discount: float, lam: float
) -> np.ndarray:
    """Generalised advantage estimation for one complete episode (the value
    beyond the horizon is zero)."""
    n = len(rewards)
    adv = np.zeros(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        nxt = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + discount * nxt - values[t]
        acc = delta + discount * lam * acc
        adv[t] = acc
    return adv


def ppo_update(
    learner,
    optimizer: Adam,
    trajectories: list[Trajectory],
    cfg: PpoConfig,
    rng: np.random.Generator,
) -> dict:
    states, actions, old_logps = [], [], []
    advantages, value_targets = [], []
    for traj in trajectories:
        with ad.no_grad():
            vals = learner.values(traj.states).data
        rew = np.asarray(traj.rewards)
        adv = gae_advantages(rew, vals, cfg.discount, cfg.gae_lambda)
        states.extend(traj.states)
        actions.extend(traj.actions)
        old_logps.extend(traj.log_probs)
        advantages.extend(adv.tolist())
        value_targets.extend((adv + vals).tolist())
    actions = np.asarray(actions)
    old_logps = np.asarray(old_logps)
    advantages = np.asarray(advantages)
    value_targets = np.asarray(value_targets)
    if cfg.standardize_returns:
        advantages = standardize(advantages)

    n = len(states)
    losses = []
    for _ in range(cfg.repeat):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            optimizer.zero_grad()
            mb_states = [states[i] for i in idx]
            logp, entropy, _ = learner.log_prob_entropy(mb_states, actions[idx])
            ratio = ad.exp(ad.add_n([logp, Tensor(-old_logps[idx])]))
            adv_t = Tensor(advantages[idx])
            surrogate = ad.minimum(
                ad.mul(ratio, adv_t),
                ad.mul(ad.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), adv_t),
            )
            diff = ad.add_n([learner.values(mb_states), Tensor(-value_targets[idx])])
            loss = ad.add_n(
                [
                    ad.scale(ad.tmean(surrogate), -1.0),
                    ad.scale(ad.tmean(ad.mul(diff, diff)), cfg.value_coef),
                    ad.scale(ad.tmean(entropy), -cfg.entropy_coef),
                ]
            )
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
    return {"loss": float(np.mean(losses))}


class TabularPolicy:
    """Free logits over a fixed action set; the smallest model that can
    exercise the update rules end to end."""

    def __init__(self, n_actions: int):
        self.logits = Tensor(np.zeros(n_actions), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {"logits": self.logits}

    def begin_episode(self, env) -> None:
        pass

    def act(self, rng: np.random.Generator):
        with ad.no_grad():
            lp = ad.log_softmax(self.logits).data
        action = int(rng.choice(len(lp), p=np.exp(lp)))
        return action, float(lp[action]), None

    def observe(self, action, feedback, reward) -> None:
        pass

    def log_prob_entropy(self, states, actions):
        logps, ents = [], []
        greedy = np.full(len(states), int(np.argmax(self.logits.data)), dtype=np.intp)
        for a in actions:
            ls = ad.log_softmax(self.logits)
            logps.append(ad.pick(ls, int(a)))
            ents.append(ad.scale(ad.tsum(ad.mul(ad.exp(ls), ls)), -1.0))
        return ad.stack_scalars(logps), ad.stack_scalars(ents), greedy
