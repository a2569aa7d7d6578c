"""Baseline policies.

Four families bracket the recommender: an environment oracle that reads
hidden student state and greedily maximises immediate weighted learning
gain; uniform random choice; a linear contextual bandit with Thompson
sampling over simple session counters; and a flat MLP actor-critic over
the one-hot feedback observation, trained with PPO.

All of them speak the collector protocol (begin_episode / act / observe)
so sessions are interchangeable across policy families.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_arrays, save_arrays
from .corpus import Corpus
from .env import Feedback, LearningEpisode, doc_requirements
from .layers import MLP2
from .recommender import FEEDBACK_COLUMN, N_FEEDBACK_CLASSES


def oracle_action(env: LearningEpisode) -> int:
    """Highest immediate weighted gain among right-level documents, ties to
    the lowest id; if nothing is learnable, document 0."""
    corpus = env.corpus
    knowledge = env.student.knowledge
    best, best_gain = 0, 0.0
    for doc in range(corpus.n_docs):
        taught = corpus.doc_teaches[doc]
        if not all(knowledge[k] for k in doc_requirements(corpus, env.preds, doc)):
            continue
        gain = float(sum(corpus.kc_values[k] for k in taught if not knowledge[k]))
        if gain > best_gain:
            best, best_gain = doc, gain
    return best


class OraclePolicy:
    """Deliberately cheats: keeps a handle on the live episode."""

    def begin_episode(self, env) -> None:
        self.env = env

    def act(self, rng):
        return oracle_action(self.env), 0.0, None

    def observe(self, action, feedback, reward) -> None:
        pass


class RandomPolicy:
    def begin_episode(self, env) -> None:
        self.n_docs = env.corpus.n_docs

    def act(self, rng):
        n = self.n_docs
        return int(rng.integers(n)), float(-np.log(n)), None

    def observe(self, action, feedback, reward) -> None:
        pass


class LinearThompsonBandit:
    """Bayesian linear regression, one shared model over document contexts.

    Precision B starts at the identity, so the prior on the weight vector
    is a standard normal; observing context c with reward r updates
    B += c c^T, f += r c, posterior mean B^{-1} f, posterior covariance
    noise_var * B^{-1}.
    """

    def __init__(self, dim: int, noise_var: float = 1.0):
        self.dim = dim
        self.noise_var = noise_var
        self.precision = np.eye(dim)
        self.target = np.zeros(dim)

    def posterior_mean(self) -> np.ndarray:
        return np.linalg.solve(self.precision, self.target)

    def sample_weights(self, rng: np.random.Generator) -> np.ndarray:
        cov = self.noise_var * np.linalg.inv(self.precision)
        return rng.multivariate_normal(self.posterior_mean(), cov, method="cholesky")

    def update(self, context: np.ndarray, reward: float) -> None:
        self.precision += np.outer(context, context)
        self.target += reward * context


class CmabPolicy:
    """Contextual bandit over per-session counters.

    The context of a document is (1, times recommended this session, times
    it produced right_level this session). Training episodes act by
    Thompson sampling and update on the immediate weighted gain; evaluation
    episodes act on the posterior mean and leave the posterior untouched.
    The posterior persists across episodes within a run.
    """

    def __init__(self, noise_var: float = 1.0):
        self.bandit = LinearThompsonBandit(3, noise_var)
        self.training = True

    def set_mode(self, training: bool) -> None:
        self.training = training

    def begin_episode(self, env) -> None:
        n = env.corpus.n_docs
        self.times_shown = np.zeros(n)
        self.times_understood = np.zeros(n)
        self._last_context: np.ndarray | None = None

    def _contexts(self) -> np.ndarray:
        n = len(self.times_shown)
        return np.column_stack([np.ones(n), self.times_shown, self.times_understood])

    def act(self, rng):
        contexts = self._contexts()
        weights = (
            self.bandit.sample_weights(rng)
            if self.training
            else self.bandit.posterior_mean()
        )
        action = int(np.argmax(contexts @ weights))
        self._last_context = contexts[action]
        return action, 0.0, None

    def observe(self, action, feedback, reward) -> None:
        if self.training:
            self.bandit.update(self._last_context, reward)
        self.times_shown[action] += 1
        if feedback == Feedback.RIGHT_LEVEL:
            self.times_understood[action] += 1


def flat_observation(n_docs: int, history) -> np.ndarray:
    """(n_docs * 4,) concatenated one-hot feedback vector, latest wins."""
    fb = np.zeros((n_docs, N_FEEDBACK_CLASSES))
    fb[:, 0] = 1.0
    for entry in history:
        doc, signal = entry[0], entry[1]
        fb[doc] = 0.0
        fb[doc, FEEDBACK_COLUMN[signal]] = 1.0
    return fb.reshape(-1)


class MlpActorCritic:
    """Flat-observation actor and critic heads for the PPO baseline."""

    def __init__(self, n_docs: int, rng: np.random.Generator, hidden: int = 64):
        self.n_docs = n_docs
        obs_dim = n_docs * N_FEEDBACK_CLASSES
        self.actor = MLP2(obs_dim, hidden, n_docs, rng)
        self.critic = MLP2(obs_dim, hidden, 1, rng)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for tag, module in (("actor", self.actor), ("critic", self.critic)):
            for name, p in module.parameters().items():
                out[f"{tag}.{name}"] = p
        return out

    def _logits(self, obs: np.ndarray) -> Tensor:
        return ad.reshape(self.actor(Tensor(obs.reshape(1, -1))), (self.n_docs,))

    def log_prob_entropy(self, states, actions):
        ls = ad.log_softmax(self.actor(Tensor(np.stack(states))), axis=1)
        rows = np.arange(len(states))
        logp = ad.take(ls, rows, np.asarray(actions, dtype=np.intp))
        entropy = ad.scale(ad.sum_rows(ad.mul(ad.exp(ls), ls)), -1.0)
        greedy = np.argmax(ls.data, axis=1)
        return logp, entropy, greedy

    def values(self, states):
        return ad.reshape(self.critic(Tensor(np.stack(states))), (len(states),))

    def save(self, path) -> None:
        arrays = {name: p.data for name, p in self.parameters().items()}
        arrays["_meta.n_docs"] = np.array(float(self.n_docs))
        arrays["_meta.hidden"] = np.array(float(self.actor.lin1.w.data.shape[1]))
        save_arrays(path, arrays)

    @classmethod
    def load(cls, path) -> "MlpActorCritic":
        arrays = load_arrays(path)
        model = cls(
            int(arrays["_meta.n_docs"]),
            np.random.default_rng(0),
            hidden=int(arrays["_meta.hidden"]),
        )
        for name, p in model.parameters().items():
            p.data = arrays[name]
        return model


class PpoMlpPolicy:
    """Collector adapter for the flat actor-critic."""

    def __init__(self, model: MlpActorCritic, mode: str = "sample"):
        self.model = model
        self.mode = mode
        self.history: list[tuple[int, Feedback]] = []

    def begin_episode(self, env) -> None:
        self.history = []

    def act(self, rng):
        obs = flat_observation(self.model.n_docs, self.history)
        with ad.no_grad():
            lp = ad.log_softmax(self.model._logits(obs)).data
        if self.mode == "greedy":
            action = int(np.argmax(lp))
        else:
            action = int(rng.choice(len(lp), p=np.exp(lp)))
        return action, float(lp[action]), obs

    def observe(self, action, feedback, reward) -> None:
        self.history.append((action, feedback))
