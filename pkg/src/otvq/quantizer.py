"""Discrete bottleneck: codebook, nearest-codeword quantization, usage metrics.

One atom table is shared by all M latent components; each component carries
its own mass logits beta^m, with pi^m = softmax(beta^m) feeding the transport
target measure. Quantization is a plain argmin under the ground cost, with
the straight-through copy supplying the decoder gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = [
    "Codebook",
    "QuantizeResult",
    "UsageStats",
    "quantize",
    "pi_from_beta",
    "kl_to_uniform",
    "usage_histogram",
    "perplexity",
    "vqvae_codebook_terms",
]


@dataclass
class Codebook:
    """K codeword atoms in R^{n_z} plus per-component mass logits (M, K)."""

    atoms: Tensor
    beta: Tensor
    K: int
    M: int
    n_z: int

    @classmethod
    def init(cls, K: int, M: int, n_z: int, seed: int,
             scheme: str = "uniform", sample_latents: np.ndarray | None = None) -> "Codebook":
        """Fresh codebook; beta starts at zero so pi starts exactly uniform.

        scheme "uniform" draws atoms i.i.d. from [-1/K, 1/K]; "sample" takes
        K rows (without replacement) from the provided latent batch.
        """
        if K < 1 or M < 1 or n_z < 1:
            raise ValueError("K, M, n_z must be positive")
        rng = np.random.default_rng(seed)
        if scheme == "uniform":
            atoms = rng.uniform(-1.0 / K, 1.0 / K, size=(K, n_z))
        elif scheme == "sample":
            if sample_latents is None:
                raise ValueError("sample init needs a latent batch")
            flat = np.asarray(sample_latents, dtype=np.float64).reshape(-1, n_z)
            if flat.shape[0] < K:
                raise ValueError(f"need at least K={K} latents to sample, got {flat.shape[0]}")
            atoms = flat[rng.choice(flat.shape[0], size=K, replace=False)]
        else:
            raise ValueError(f"unknown codebook init scheme '{scheme}'")
        return cls(
            atoms=Tensor(atoms, requires_grad=True),
            beta=Tensor(np.zeros((M, K)), requires_grad=True),
            K=K, M=M, n_z=n_z,
        )


@dataclass
class QuantizeResult:
    indices: np.ndarray  # (B, M) ints in [0, K)
    quantized: Tensor    # (B, M, n_z), graph-connected to the atom table
    st_output: Tensor    # same values as quantized; gradient flows to z


@dataclass
class UsageStats:
    counts: np.ndarray      # (M, K) nonnegative ints
    perplexity: np.ndarray  # (M,)
    total: int


def quantize(z: Tensor, codebook: Codebook) -> QuantizeResult:
    """Nearest codeword per component under squared Euclidean distance.

    Ties break to the lowest index (argmin is deterministic). st_output
    carries the quantized values forward but routes its gradient entirely
    to z: built as detach(q) + (z - detach(z)), whose forward value is
    exactly q + 0.0.
    """
    if codebook.K < 1:
        raise ValueError("empty codebook")
    if z.values.ndim != 3 or z.shape[1] != codebook.M or z.shape[2] != codebook.n_z:
        raise T.ShapeError(f"latents must be (B, {codebook.M}, {codebook.n_z}), got {z.shape}")
    b, m, n_z = z.shape
    flat = z.values.reshape(b * m, n_z)
    av = codebook.atoms.values
    d2 = (flat * flat).sum(axis=1)[:, None] + (av * av).sum(axis=1)[None, :] \
        - 2.0 * flat @ av.T
    indices = np.argmin(d2, axis=1).reshape(b, m)
    quantized = T.index_select(codebook.atoms, indices)
    st_output = T.add(T.detach(quantized), T.subtract(z, T.detach(z)))
    return QuantizeResult(indices=indices, quantized=quantized, st_output=st_output)


def pi_from_beta(codebook: Codebook) -> Tensor:
    """Component mass vectors pi^m = softmax(beta^m), shape (M, K)."""
    return T.softmax(codebook.beta)


def kl_to_uniform(pi: Tensor, k: int) -> Tensor:
    """KL(pi || uniform_K) = ln K + sum_k pi_k ln pi_k, with 0 ln 0 = 0.

    Nonnegative, zero exactly at the uniform vector, differentiable w.r.t.
    pi (one-hot inputs are legal: the xlogx primitive absorbs the zeros).
    """
    return T.xlogx(pi).sum() + float(np.log(k))


def usage_histogram(indices: np.ndarray, k: int) -> UsageStats:
    """Per-component codeword usage counts over a pass of assignments."""
    idx = np.asarray(indices)
    if idx.ndim != 2:
        raise ValueError(f"indices must be (N, M), got {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= k):
        raise ValueError("index out of range")
    n, m = idx.shape
    counts = np.stack([np.bincount(idx[:, j], minlength=k) for j in range(m)])
    perp = np.array([perplexity(counts[j]) for j in range(m)]) if n else np.zeros(m)
    return UsageStats(counts=counts, perplexity=perp, total=n)


def perplexity(counts: np.ndarray) -> float:
    """e^H of the usage distribution; K at uniform usage, 1 at one-hot."""
    c = np.asarray(counts, dtype=np.float64)
    total = c.sum()
    if total <= 0:
        raise ValueError("perplexity of all-zero counts")
    p = c / total
    nz = p > 0.0
    h = -float((p[nz] * np.log(p[nz])).sum())
    return float(np.exp(h))


def vqvae_codebook_terms(z: Tensor, quantized: Tensor):
    """Codebook and commitment losses with their stop-gradient placement.

    codebook term pulls atoms toward (frozen) latents; commitment term pulls
    latents toward (frozen) atoms. Both are mean rho_z over batch and
    components: sum of squares / (B * M).
    """
    if z.shape != quantized.shape:
        raise T.ShapeError(f"z {z.shape} vs quantized {quantized.shape}")
    b, m = z.shape[0], z.shape[1]
    scale = 1.0 / (b * m)
    codebook_loss = T.square(T.subtract(T.detach(z), quantized)).sum() * scale
    commitment_loss = T.square(T.subtract(z, T.detach(quantized))).sum() * scale
    return codebook_loss, commitment_loss
