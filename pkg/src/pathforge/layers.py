"""Neural building blocks on top of the autodiff tape.

The graph transformer convolution follows the standard formulation: each
destination node keeps a skip term W1 h_i and adds an attention-weighted
sum of transformed source neighbours,

    h_i' = W1 h_i + sum_j alpha_ij W2 h_j,
    alpha_ij = softmax_j( (W3 h_i)^T (W4 h_j) / sqrt(d_head) ),

computed per head over the node's in-edges. A node with no in-edges keeps
only the skip term. The additive attention variant replaces the dot product
with sum(tanh(W3 h_i + W4 h_j)) at the same scale.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, add, elu, graph_attention, matmul


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.w = Tensor(glorot_uniform(rng, in_dim, out_dim), requires_grad=True)
        self.b = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.w), self.b)

    def parameters(self) -> dict[str, Tensor]:
        return {"w": self.w, "b": self.b}


class MLP2:
    """Linear -> ELU -> Linear."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator):
        self.lin1 = Linear(in_dim, hidden, rng)
        self.lin2 = Linear(hidden, out_dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(elu(self.lin1(x)))

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for tag, layer in (("lin1", self.lin1), ("lin2", self.lin2)):
            for name, p in layer.parameters().items():
                out[f"{tag}.{name}"] = p
        return out


class TransformerConv:
    def __init__(
        self,
        dim: int,
        heads: int,
        rng: np.random.Generator,
        attention: str = "dot",
    ):
        if dim % heads != 0:
            raise ValueError(f"width {dim} not divisible by {heads} heads")
        self.heads = heads
        self.attention = attention
        self.w1 = Tensor(glorot_uniform(rng, dim, dim), requires_grad=True)
        self.w2 = Tensor(glorot_uniform(rng, dim, dim), requires_grad=True)
        self.w3 = Tensor(glorot_uniform(rng, dim, dim), requires_grad=True)
        self.w4 = Tensor(glorot_uniform(rng, dim, dim), requires_grad=True)
        self.last_alpha: np.ndarray | None = None

    def __call__(
        self,
        h_src: Tensor,
        h_dst: Tensor,
        src: np.ndarray,
        dst: np.ndarray,
    ) -> Tensor:
        agg = graph_attention(
            matmul(h_dst, self.w3),
            matmul(h_src, self.w4),
            matmul(h_src, self.w2),
            src,
            dst,
            n_dst=h_dst.data.shape[0],
            heads=self.heads,
            kind=self.attention,
        )
        self.last_alpha = agg.info["alpha"] if agg.info else None
        return add(matmul(h_dst, self.w1), agg)

    def parameters(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "w2": self.w2, "w3": self.w3, "w4": self.w4}
