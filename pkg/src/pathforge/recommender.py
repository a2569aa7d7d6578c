"""Graph-neural document recommender.

The observable session state is a bipartite graph: document nodes on one
side, keyword nodes on the other, an edge wherever a document mentions a
keyword. Keyword nodes start from pretrained word embeddings, document
nodes from the mean of their keywords' embeddings, and each document also
carries a 4-way one-hot of the latest feedback it produced this session
(none / too_hard / right_level / too_easy, latest occurrence wins).

The stack alternates message-passing directions:

    H1   linear projection of raw features (both sides)
    HW2  doc -> keyword attention conv
    HD2  keyword -> doc attention conv
    HD3  HD2 gated elementwise by an MLP of the feedback one-hots
    HW3  doc -> keyword attention conv        (transferable keyword repr)
    HD4  keyword -> doc attention conv
    z    linear scoring head, softmax over documents

Everything up to (HD2, HW2) depends only on the corpus and the weights,
not on session feedback, so that prefix is computed once per corpus and
shared: across steps of an episode when acting, and across the states of
a minibatch when differentiating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import CheckpointError, load_arrays, save_arrays
from .corpus import Corpus
from .env import Feedback
from .layers import MLP2, Linear, TransformerConv

FEEDBACK_COLUMN = {
    Feedback.TOO_HARD: 1,
    Feedback.RIGHT_LEVEL: 2,
    Feedback.TOO_EASY: 3,
}
N_FEEDBACK_CLASSES = 4  # incl. "not shown yet"


@dataclass(eq=False)
class BipartiteState:
    """Snapshot of what the recommender may see: corpus plus feedback so far."""

    corpus: Corpus
    feedback: np.ndarray  # (n_docs, 4) one-hot rows


def build_state(corpus: Corpus, history) -> BipartiteState:
    """history: iterable of (doc_id, Feedback, ...) tuples; latest wins."""
    fb = np.zeros((corpus.n_docs, N_FEEDBACK_CLASSES))
    fb[:, 0] = 1.0
    for entry in history:
        doc, signal = entry[0], entry[1]
        fb[doc] = 0.0
        fb[doc, FEEDBACK_COLUMN[signal]] = 1.0
    return BipartiteState(corpus=corpus, feedback=fb)


class Recommender:
    def __init__(
        self,
        rng: np.random.Generator,
        embed_dim: int = 100,
        hidden: int = 128,
        heads: int = 4,
        attention: str = "dot",
    ):
        self.embed_dim = embed_dim
        self.hidden = hidden
        self.heads = heads
        self.attention = attention
        self.proj = Linear(embed_dim, hidden, rng)
        self.conv_dk1 = TransformerConv(hidden, heads, rng, attention)
        self.conv_kd1 = TransformerConv(hidden, heads, rng, attention)
        self.conv_dk2 = TransformerConv(hidden, heads, rng, attention)
        self.conv_kd2 = TransformerConv(hidden, heads, rng, attention)
        self.fb_mlp = MLP2(N_FEEDBACK_CLASSES, hidden, hidden, rng)
        self.out = Linear(hidden, 1, rng)

    def parameters(self) -> dict[str, Tensor]:
        groups = {
            "proj": self.proj,
            "conv_dk1": self.conv_dk1,
            "conv_kd1": self.conv_kd1,
            "conv_dk2": self.conv_dk2,
            "conv_kd2": self.conv_kd2,
            "fb_mlp": self.fb_mlp,
            "out": self.out,
        }
        return {
            f"{tag}.{name}": p
            for tag, module in groups.items()
            for name, p in module.parameters().items()
        }

    # -- forward ------------------------------------------------------------

    def trunk(self, corpus: Corpus) -> tuple[Tensor, Tensor]:
        """Feedback-independent prefix (HD2, HW2); share across states."""
        hd1 = self.proj(Tensor(corpus.doc_features))
        hw1 = self.proj(Tensor(corpus.keyword_vectors))
        hw2 = self.conv_dk1(hd1, hw1, corpus.edge_doc, corpus.edge_kw)
        hd2 = self.conv_kd1(hw2, hd1, corpus.edge_kw, corpus.edge_doc)
        return hd2, hw2

    def suffix(
        self, corpus: Corpus, trunk: tuple[Tensor, Tensor], feedback: np.ndarray
    ) -> tuple[Tensor, Tensor]:
        """Feedback-dependent tail; returns (doc repr HD4, keyword repr HW3)."""
        hd2, hw2 = trunk
        gate = self.fb_mlp(Tensor(feedback))
        hd3 = ad.mul(hd2, gate)
        hw3 = self.conv_dk2(hd3, hw2, corpus.edge_doc, corpus.edge_kw)
        hd4 = self.conv_kd2(hw3, hd3, corpus.edge_kw, corpus.edge_doc)
        return hd4, hw3

    def logits(
        self, state: BipartiteState, trunk: tuple[Tensor, Tensor] | None = None
    ) -> Tensor:
        if trunk is None:
            trunk = self.trunk(state.corpus)
        hd4, _ = self.suffix(state.corpus, trunk, state.feedback)
        return ad.reshape(self.out(hd4), (state.corpus.n_docs,))

    def batched_doc_repr(
        self, corpus: Corpus, trunk: tuple[Tensor, Tensor], feedbacks: np.ndarray
    ) -> Tensor:
        """Suffix over B states of one corpus in a single block-diagonal
        graph: trunk rows are tiled per state, edges shifted per block.
        Returns doc representations of shape (B*n_docs, hidden); gradients
        flow into the shared trunk once per use."""
        b = feedbacks.shape[0]
        n_docs, n_kw = corpus.n_docs, len(corpus.keyword_tokens)
        hd2, hw2 = trunk
        hd2_b = ad.gather_rows(hd2, np.tile(np.arange(n_docs), b))
        hw2_b = ad.gather_rows(hw2, np.tile(np.arange(n_kw), b))
        edge_doc = (corpus.edge_doc[None, :] + np.arange(b)[:, None] * n_docs).ravel()
        edge_kw = (corpus.edge_kw[None, :] + np.arange(b)[:, None] * n_kw).ravel()

        gate = self.fb_mlp(Tensor(feedbacks.reshape(b * n_docs, -1)))
        hd3 = ad.mul(hd2_b, gate)
        hw3 = self.conv_dk2(hd3, hw2_b, edge_doc, edge_kw)
        return self.conv_kd2(hw3, hd3, edge_kw, edge_doc)

    def batched_logits(
        self, corpus: Corpus, trunk: tuple[Tensor, Tensor], feedbacks: np.ndarray
    ) -> Tensor:
        hd4 = self.batched_doc_repr(corpus, trunk, feedbacks)
        return ad.reshape(self.out(hd4), (feedbacks.shape[0], corpus.n_docs))

    def keyword_representation(self, state: BipartiteState) -> np.ndarray:
        """Session-conditioned keyword embeddings (the transferable layer)."""
        with ad.no_grad():
            _, hw3 = self.suffix(state.corpus, self.trunk(state.corpus), state.feedback)
        return hw3.data

    def action_distribution(
        self, state: BipartiteState, trunk: tuple[Tensor, Tensor] | None = None
    ) -> np.ndarray:
        with ad.no_grad():
            return ad.softmax(self.logits(state, trunk)).data

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        arrays = {name: p.data for name, p in self.parameters().items()}
        arrays["_meta.embed_dim"] = np.array(float(self.embed_dim))
        arrays["_meta.hidden"] = np.array(float(self.hidden))
        arrays["_meta.heads"] = np.array(float(self.heads))
        arrays["_meta.additive"] = np.array(1.0 if self.attention == "additive" else 0.0)
        save_arrays(path, arrays)

    @classmethod
    def load(cls, path, rng: np.random.Generator | None = None) -> "Recommender":
        """Rebuild from a checkpoint. Parameters absent from the file keep
        their fresh initialisation, which requires an rng; with rng=None a
        missing parameter is an error. Extra arrays (auxiliary heads from
        pretext training) are ignored."""
        arrays = load_arrays(path)
        try:
            meta = {
                k: arrays[f"_meta.{k}"] for k in ("embed_dim", "hidden", "heads", "additive")
            }
        except KeyError as exc:
            raise CheckpointError(f"{path}: missing recommender metadata {exc}") from None
        model = cls(
            rng if rng is not None else np.random.default_rng(0),
            embed_dim=int(meta["embed_dim"]),
            hidden=int(meta["hidden"]),
            heads=int(meta["heads"]),
            attention="additive" if meta["additive"] else "dot",
        )
        for name, p in model.parameters().items():
            if name in arrays:
                if arrays[name].shape != p.data.shape:
                    raise CheckpointError(
                        f"{path}: {name} has shape {arrays[name].shape}, "
                        f"expected {p.data.shape}"
                    )
                p.data = arrays[name]
            elif rng is None:
                raise CheckpointError(f"{path}: missing parameter {name}")
        return model


class GnnPolicy:
    """Episode-facing adapter: tracks its own feedback history (the policy
    never touches hidden student state) and reuses one trunk per episode."""

    def __init__(self, rec: Recommender, mode: str = "sample"):
        self.rec = rec
        self.mode = mode
        self.corpus: Corpus | None = None
        self.history: list[tuple[int, Feedback]] = []
        self._trunk = None

    def begin_episode(self, env) -> None:
        self.corpus = env.corpus
        self.history = []
        self._trunk = None

    def _state(self) -> BipartiteState:
        return build_state(self.corpus, self.history)

    def act(self, rng: np.random.Generator) -> tuple[int, float, BipartiteState]:
        state = self._state()
        with ad.no_grad():
            if self._trunk is None:
                self._trunk = self.rec.trunk(self.corpus)
            logits = self.rec.logits(state, self._trunk)
            log_probs = ad.log_softmax(logits).data
        if self.mode == "greedy":
            action = int(np.argmax(log_probs))
        else:
            action = int(rng.choice(len(log_probs), p=np.exp(log_probs)))
        return action, float(log_probs[action]), state

    def observe(self, action: int, feedback: Feedback, reward: float) -> None:
        self.history.append((action, feedback))

    def invalidate(self) -> None:
        self._trunk = None


class GnnLearner:
    """Differentiable objectives for policy-gradient and imitation updates:
    one taped trunk and one batched suffix per distinct corpus in the
    minibatch, results re-scattered to the input order."""

    def __init__(self, rec: Recommender):
        self.rec = rec

    def parameters(self) -> dict[str, Tensor]:
        return self.rec.parameters()

    def log_prob_entropy(
        self, states: list[BipartiteState], actions
    ) -> tuple[Tensor, Tensor, np.ndarray]:
        """(log pi(a|s), entropy) as (B,) tensors, plus greedy actions."""
        by_corpus: dict[int, list[int]] = {}
        for i, s in enumerate(states):
            by_corpus.setdefault(id(s.corpus), []).append(i)
        logp_parts, ent_parts = [], []
        order: list[int] = []
        greedy = np.zeros(len(states), dtype=np.intp)
        for idxs in by_corpus.values():
            corpus = states[idxs[0]].corpus
            trunk = self.rec.trunk(corpus)
            feedbacks = np.stack([states[i].feedback for i in idxs])
            ls = ad.log_softmax(
                self.rec.batched_logits(corpus, trunk, feedbacks), axis=1
            )
            rows = np.arange(len(idxs))
            logp_parts.append(ad.take(ls, rows, np.asarray([actions[i] for i in idxs])))
            ent_parts.append(ad.scale(ad.sum_rows(ad.mul(ad.exp(ls), ls)), -1.0))
            greedy[idxs] = np.argmax(ls.data, axis=1)
            order.extend(idxs)
        logp = ad.concat(logp_parts)
        entropy = ad.concat(ent_parts)
        if order != list(range(len(states))):
            back = np.argsort(np.asarray(order))
            logp = ad.gather_rows(logp, back)
            entropy = ad.gather_rows(entropy, back)
        return logp, entropy, greedy
