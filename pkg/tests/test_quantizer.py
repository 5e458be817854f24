"""Quantizer: nearest-neighbor law, straight-through contract, usage metrics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otvq.optim import finite_difference_grad
from otvq.quantizer import (
    Codebook,
    kl_to_uniform,
    perplexity,
    pi_from_beta,
    quantize,
    usage_histogram,
    vqvae_codebook_terms,
)
from otvq.tensor import Tensor, backward, softmax


def _book(K=4, M=1, n_z=2, seed=0):
    return Codebook.init(K, M, n_z, seed=seed)


def test_exact_codeword_match():
    book = _book(K=5, M=1, n_z=3, seed=1)
    z = Tensor(book.atoms.values[3][None, None, :])
    res = quantize(z, book)
    assert res.indices[0, 0] == 3
    assert np.array_equal(res.quantized.values[0, 0], book.atoms.values[3])


def test_equidistant_tie_takes_lowest_index():
    book = Codebook(
        atoms=Tensor(np.array([[1.0], [-1.0]]), requires_grad=True),
        beta=Tensor(np.zeros((1, 2)), requires_grad=True),
        K=2, M=1, n_z=1,
    )
    res = quantize(Tensor(np.zeros((1, 1, 1))), book)
    assert res.indices[0, 0] == 0


def test_indices_match_exhaustive_scan():
    rng = np.random.default_rng(12)
    book = _book(K=7, M=2, n_z=3, seed=3)
    z = rng.normal(size=(20, 2, 3))
    res = quantize(Tensor(z), book)
    atoms = book.atoms.values
    for b in range(20):
        for m in range(2):
            dists = [((z[b, m] - atoms[k]) ** 2).sum() for k in range(7)]
            assert res.indices[b, m] == int(np.argmin(dists))


def test_quantize_idempotent_on_codewords():
    book = _book(K=6, M=1, n_z=2, seed=4)
    z = Tensor(book.atoms.values[:, None, :])  # each atom as a latent
    res = quantize(z, book)
    assert np.array_equal(res.indices[:, 0], np.arange(6))


def test_st_values_equal_quantized_bitwise():
    rng = np.random.default_rng(5)
    book = _book(K=4, M=3, n_z=2, seed=6)
    res = quantize(Tensor(rng.normal(size=(8, 3, 2))), book)
    assert np.array_equal(res.st_output.values, res.quantized.values)


def test_st_copies_gradient_to_z():
    rng = np.random.default_rng(7)
    book = _book(K=4, M=2, n_z=2, seed=8)
    z = Tensor(rng.normal(size=(5, 2, 2)), requires_grad=True)
    res = quantize(z, book)
    gmap = backward(res.st_output.sum(), params=[z, book.atoms])
    assert np.array_equal(gmap[z.node_id].values, np.ones((5, 2, 2)))
    assert np.array_equal(gmap[book.atoms.node_id].values, np.zeros((4, 2)))


def test_st_leaf_substitution_oracle():
    # gradient w.r.t. z through a decoder equals the gradient w.r.t. the
    # quantized values treated as a free leaf
    rng = np.random.default_rng(9)
    book = _book(K=4, M=1, n_z=3, seed=10)
    z = Tensor(rng.normal(size=(6, 1, 3)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 2)))
    x = Tensor(rng.normal(size=(6, 2)))

    res = quantize(z, book)
    recon = (res.st_output.reshape((6, 3)) @ w - x).square().mean()
    g_z = backward(recon, params=[z])[z.node_id].values

    leaf = Tensor(res.quantized.values, requires_grad=True)
    recon2 = (leaf.reshape((6, 3)) @ w - x).square().mean()
    g_leaf = backward(recon2, params=[leaf])[leaf.node_id].values

    assert np.max(np.abs(g_z - g_leaf)) <= 1e-12


def test_quantized_flows_to_atoms():
    # the raw quantized tensor (not st_output) must carry gradient to atoms
    book = _book(K=3, M=1, n_z=2, seed=11)
    z = Tensor(np.zeros((4, 1, 2)))
    res = quantize(z, book)
    gmap = backward(res.quantized.sum(), params=[book.atoms])
    assert np.any(gmap[book.atoms.node_id].values != 0.0)


def test_shape_validation():
    book = _book(K=4, M=2, n_z=3, seed=12)
    with pytest.raises(Exception):
        quantize(Tensor(np.zeros((5, 1, 3))), book)  # wrong M


def test_pi_from_beta_uniform_at_zero():
    book = _book(K=5, M=3, seed=13)
    pi = pi_from_beta(book).values
    assert np.allclose(pi, 1.0 / 5, atol=1e-15)


def test_pi_shift_invariance():
    book = _book(K=3, M=1, seed=14)
    shifted = Codebook(atoms=book.atoms, beta=Tensor(book.beta.values + 7.3),
                       K=3, M=1, n_z=book.n_z)
    assert np.allclose(pi_from_beta(book).values, pi_from_beta(shifted).values, atol=1e-12)


def test_pi_direct_evaluation():
    book = Codebook(atoms=Tensor(np.zeros((3, 1))),
                    beta=Tensor(np.array([[np.log(2.0), 0.0, 0.0]])),
                    K=3, M=1, n_z=1)
    assert np.allclose(pi_from_beta(book).values[0], [0.5, 0.25, 0.25], atol=1e-12)


def test_kl_to_uniform_values():
    assert kl_to_uniform(Tensor(np.full(6, 1 / 6)), 6).item() == pytest.approx(0.0, abs=1e-12)
    assert kl_to_uniform(Tensor(np.array([1.0, 0.0, 0.0, 0.0])), 4).item() == \
        pytest.approx(np.log(4.0), abs=1e-12)
    pi = np.array([0.5, 0.25, 0.125, 0.125])
    expected = np.log(4.0) + float((pi * np.log(pi)).sum())  # independent chain
    got = kl_to_uniform(Tensor(pi), 4).item()
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(0.173287, abs=5e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_kl_to_uniform_nonnegative(k, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.05, 1.0, size=k)
    pi = w / w.sum()
    assert kl_to_uniform(Tensor(pi), k).item() >= -1e-12


def test_kl_gradient_vanishes_at_uniform():
    beta = Tensor(np.full(5, 0.7), requires_grad=True)  # constant logits
    loss = kl_to_uniform(softmax(beta), 5)
    g = backward(loss, params=[beta])[beta.node_id].values
    assert np.max(np.abs(g)) < 1e-12


def test_usage_histogram_against_tally():
    rng = np.random.default_rng(15)
    idx = rng.integers(0, 6, size=(50, 2))
    stats = usage_histogram(idx, 6)
    for m in range(2):
        tally = {k: int((idx[:, m] == k).sum()) for k in range(6)}
        assert [tally[k] for k in range(6)] == stats.counts[m].tolist()
    assert stats.total == 50
    assert np.array_equal(stats.counts.sum(axis=1), [50, 50])


def test_usage_histogram_corner_cases():
    stats = usage_histogram(np.full((7, 1), 2), 5)
    assert stats.counts[0].tolist() == [0, 0, 7, 0, 0]
    assert stats.perplexity[0] == pytest.approx(1.0, abs=1e-12)
    cycling = np.arange(12).reshape(12, 1) % 4
    stats = usage_histogram(cycling, 4)
    assert stats.counts[0].tolist() == [3, 3, 3, 3]
    assert stats.perplexity[0] == pytest.approx(4.0, abs=1e-9)
    with pytest.raises(ValueError):
        usage_histogram(np.array([[5]]), 5)


def test_perplexity_values():
    assert perplexity([2, 2, 2, 2]) == pytest.approx(4.0, abs=1e-12)
    assert perplexity([8, 0, 0, 0]) == pytest.approx(1.0, abs=1e-12)
    expected = np.exp(-(0.75 * np.log(0.75) + 0.25 * np.log(0.25)))
    assert perplexity([3, 1]) == pytest.approx(expected, abs=1e-12)
    assert perplexity([3, 1]) == pytest.approx(1.754765, abs=5e-7)
    with pytest.raises(ValueError):
        perplexity([0, 0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=2, max_size=8).filter(lambda c: sum(c) > 0),
       st.integers(2, 7))
def test_perplexity_scale_invariant_and_bounded(counts, factor):
    c = np.array(counts)
    p = perplexity(c)
    assert 1.0 - 1e-12 <= p <= len(c) + 1e-9
    assert perplexity(c * factor) == pytest.approx(p, rel=1e-12)
    uniform = np.all(c == c[0])
    assert (abs(p - len(c)) < 1e-9) == uniform
    one_hot = np.count_nonzero(c) == 1
    assert (abs(p - 1.0) < 1e-12) == one_hot


def test_vqvae_terms_zero_at_match():
    z = Tensor(np.ones((2, 1, 3)), requires_grad=True)
    q = Tensor(np.ones((2, 1, 3)), requires_grad=True)
    cb, cm = vqvae_codebook_terms(z, q)
    assert cb.item() == 0.0 and cm.item() == 0.0


def test_vqvae_terms_scalar_case_with_fd():
    # z=1, zbar=3: both terms (3-1)^2 = 4; gradient 4 on the atom side of the
    # codebook term and -4 on the z side of the commitment term
    z = Tensor(np.full((1, 1, 1), 1.0), requires_grad=True)
    q = Tensor(np.full((1, 1, 1), 3.0), requires_grad=True)
    cb, cm = vqvae_codebook_terms(z, q)
    assert cb.item() == pytest.approx(4.0, abs=1e-12)
    assert cm.item() == pytest.approx(4.0, abs=1e-12)

    g_cb = backward(cb, params=[z, q])
    assert g_cb[q.node_id].values[0, 0, 0] == pytest.approx(4.0, abs=1e-12)
    assert np.array_equal(g_cb[z.node_id].values, np.zeros((1, 1, 1)))

    g_cm = backward(cm, params=[z, q])
    assert g_cm[z.node_id].values[0, 0, 0] == pytest.approx(-4.0, abs=1e-12)
    assert np.array_equal(g_cm[q.node_id].values, np.zeros((1, 1, 1)))

    # finite differences on each live branch (the frozen branch held fixed)
    fd_atom = finite_difference_grad(
        lambda v: float(((1.0 - v) ** 2).sum()), np.array([3.0]))
    assert abs(fd_atom[0] - 4.0) < 1e-6
    fd_z = finite_difference_grad(
        lambda v: float(((v - 3.0) ** 2).sum()), np.array([1.0]))
    assert abs(fd_z[0] - (-4.0)) < 1e-6


def test_codebook_init_schemes():
    book = Codebook.init(8, 2, 3, seed=0)
    assert np.all(np.abs(book.atoms.values) <= 1.0 / 8)
    assert np.array_equal(book.beta.values, np.zeros((2, 8)))

    latents = np.random.default_rng(1).normal(size=(32, 1, 3))
    sampled = Codebook.init(8, 1, 3, seed=0, scheme="sample", sample_latents=latents)
    flat = latents.reshape(-1, 3)
    for atom in sampled.atoms.values:
        assert any(np.array_equal(atom, row) for row in flat)
    with pytest.raises(ValueError):
        Codebook.init(8, 1, 3, seed=0, scheme="sample", sample_latents=latents[:2])
    with pytest.raises(ValueError):
        Codebook.init(8, 1, 3, seed=0, scheme="kmeans")
    with pytest.raises(ValueError):
        Codebook.init(0, 1, 3, seed=0)
