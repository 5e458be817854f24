"""Encoder/decoder pair, the two training objectives, and the training step.

The quantized-bottleneck autoencoder comes in two variants sharing one
architecture:

* "vqvae": reconstruction + codebook + commitment terms, the classic
  stop-gradient pair pulling atoms and latents toward each other.
* "vqwae": reconstruction + a transport term aligning each latent
  component's empirical distribution with the codebook measure (atoms and
  mass logits both learnable), + a KL-to-uniform term on the masses. The
  transport term is the entropic semi-dual, maximized over potentials phi in
  an inner loop (dual_ascent) and treated as fixed during the outer descent
  step: min and max never share a gradient, by construction.

Parameters live in flat name->Tensor dicts; two Adam states (the "min" group
for encoder/decoder/atoms/logits, the "max" group for phi) advance
independently. Everything is deterministic given the seed.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .optim import AdamState, adam_step
from .ot_entropic import DualPotentials, dual_ascent, semi_dual_value
from .quantizer import Codebook, QuantizeResult, kl_to_uniform, pi_from_beta, quantize, usage_histogram
from .tensor import Tensor, backward

__all__ = [
    "EncoderDecoder",
    "LossBreakdown",
    "TrainState",
    "EvalReport",
    "init_encoder_decoder",
    "init_train_state",
    "encode",
    "decode",
    "vqvae_loss",
    "vqwae_loss",
    "train_step",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1


@dataclass
class EncoderDecoder:
    """MLP pair: n_x -> hidden... -> M*n_z and its mirror image back."""

    params: dict  # name -> Tensor; enc_w{i}/enc_b{i} and dec_w{i}/dec_b{i}
    n_x: int
    M: int
    n_z: int
    hidden: tuple

    def param_names(self):
        return list(self.params)


@dataclass
class LossBreakdown:
    total: float
    recon: float
    ws_term: float = 0.0
    kl_term: float = 0.0
    vqvae_codebook: float = 0.0
    vqvae_commit: float = 0.0


@dataclass
class TrainState:
    method: str  # "vqvae" | "vqwae"
    net: EncoderDecoder
    codebook: Codebook
    phis: DualPotentials
    adam_min: AdamState
    adam_phi: AdamState | None
    iteration: int
    seed: int
    hyper: dict = field(default_factory=dict)


@dataclass
class EvalReport:
    mse: float
    psnr: float
    perplexity: np.ndarray  # (M,)
    counts: np.ndarray      # (M, K)
    total: int


def _mlp_params(rng, sizes, prefix):
    """He-style init: N(0, sqrt(2/fan_in)) weights, zero biases."""
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        scale = np.sqrt(2.0 / fan_in)
        params[f"{prefix}_w{i}"] = Tensor(rng.normal(0.0, scale, size=(fan_in, fan_out)),
                                          requires_grad=True)
        params[f"{prefix}_b{i}"] = Tensor(np.zeros(fan_out), requires_grad=True)
    return params


def init_encoder_decoder(n_x: int, M: int, n_z: int, hidden, seed: int) -> EncoderDecoder:
    hidden = tuple(int(h) for h in hidden)
    rng = np.random.default_rng(seed)
    enc_sizes = (n_x, *hidden, M * n_z)
    dec_sizes = (M * n_z, *reversed(hidden), n_x)
    params = _mlp_params(rng, enc_sizes, "enc")
    params.update(_mlp_params(rng, dec_sizes, "dec"))
    return EncoderDecoder(params=params, n_x=n_x, M=M, n_z=n_z, hidden=hidden)


def _mlp_forward(params: dict, prefix: str, x: Tensor, n_layers: int) -> Tensor:
    h = x
    for i in range(n_layers):
        h = h @ params[f"{prefix}_w{i}"] + params[f"{prefix}_b{i}"]
        if i < n_layers - 1:
            h = h.relu()
    return h


def encode(net: EncoderDecoder, x: Tensor) -> Tensor:
    """x: (B, n_x) -> latents (B, M, n_z)."""
    if x.values.ndim != 2 or x.shape[1] != net.n_x:
        raise T.ShapeError(f"encode: expected (B, {net.n_x}), got {x.shape}")
    n_layers = len(net.hidden) + 1
    flat = _mlp_forward(net.params, "enc", x, n_layers)
    return flat.reshape((x.shape[0], net.M, net.n_z))


def decode(net: EncoderDecoder, z_q: Tensor) -> Tensor:
    """z_q: (B, M, n_z) -> reconstructions (B, n_x)."""
    if z_q.values.ndim != 3 or z_q.shape[1:] != (net.M, net.n_z):
        raise T.ShapeError(f"decode: expected (B, {net.M}, {net.n_z}), got {z_q.shape}")
    n_layers = len(net.hidden) + 1
    flat = z_q.reshape((z_q.shape[0], net.M * net.n_z))
    return _mlp_forward(net.params, "dec", flat, n_layers)


def _component_rows(z: Tensor, m: int):
    """Graph-level slice of component m: (B, M, n_z) -> (B, n_z)."""
    b, mm, n_z = z.shape
    flat = z.reshape((b * mm, n_z))
    return T.index_select(flat, np.arange(b) * mm + m)


def vqvae_loss(net: EncoderDecoder, codebook: Codebook, x: Tensor,
               beta_vqvae: float = 0.25):
    """Baseline objective: recon + codebook + beta * commitment.

    Returns (total Tensor, LossBreakdown, QuantizeResult). The decoder sees
    the straight-through output, so atoms receive gradient only from the
    codebook term and the encoder only from recon + commitment.
    """
    z = encode(net, x)
    qres = quantize(z, codebook)
    x_hat = decode(net, qres.st_output)
    recon = (x_hat - x).square().mean()
    from .quantizer import vqvae_codebook_terms

    cb_term, commit_term = vqvae_codebook_terms(z, qres.quantized)
    total = recon + cb_term + commit_term * beta_vqvae
    breakdown = LossBreakdown(
        total=total.item(), recon=recon.item(),
        vqvae_codebook=cb_term.item(), vqvae_commit=commit_term.item(),
    )
    return total, breakdown, qres


def _phi_constant(phis, m: int) -> Tensor:
    """Potentials enter the outer loss only as constants.

    Accepts DualPotentials or a sequence of Tensors; live Tensors are
    detached so no gradient can ever reach phi from the descent objective.
    """
    if isinstance(phis, DualPotentials):
        return Tensor(phis.phi[m])
    return T.detach(phis[m])


def vqwae_loss(net: EncoderDecoder, codebook: Codebook, x: Tensor,
               phis, eps: float, lam: float = 1e-3,
               lam_r: float = 1.0):
    """Transport objective: recon + lam * mean_m semi-dual + lam_r * sum_m KL.

    phis (DualPotentials, or a sequence of per-component Tensors) are
    constants here; the inner maximization owns them. Gradients reach the
    encoder through recon and the transport term, the atoms through the
    transport term only, and the mass logits through both the transport and
    KL terms.
    """
    z = encode(net, x)
    qres = quantize(z, codebook)
    x_hat = decode(net, qres.st_output)
    recon = (x_hat - x).square().mean()

    pi = pi_from_beta(codebook)  # (M, K), graph-connected to beta
    mm = codebook.M
    ws_sum = None
    kl_sum = None
    for m in range(mm):
        z_m = _component_rows(z, m)
        pi_m = T.index_select(pi, np.array([m])).reshape((codebook.K,))
        val = semi_dual_value(z_m, codebook.atoms, pi_m, _phi_constant(phis, m), eps)
        kl_m = kl_to_uniform(pi_m, codebook.K)
        ws_sum = val if ws_sum is None else ws_sum + val
        kl_sum = kl_m if kl_sum is None else kl_sum + kl_m
    ws_term = ws_sum * (1.0 / mm)
    kl_term = kl_sum
    total = recon + ws_term * lam + kl_term * lam_r
    breakdown = LossBreakdown(
        total=total.item(), recon=recon.item(),
        ws_term=ws_term.item(), kl_term=kl_term.item(),
    )
    return total, breakdown, qres


def init_train_state(method: str, n_x: int, K: int, M: int, n_z: int, hidden,
                     seed: int, lr: float = 1e-4, phi_lr: float = 0.05,
                     hyper: dict | None = None,
                     codebook_init: str = "uniform",
                     sample_latents: np.ndarray | None = None) -> TrainState:
    if method not in ("vqvae", "vqwae"):
        raise ValueError(f"unknown method '{method}'")
    net = init_encoder_decoder(n_x, M, n_z, hidden, seed=seed)
    codebook = Codebook.init(K, M, n_z, seed=seed + 1, scheme=codebook_init,
                             sample_latents=sample_latents)
    phis = DualPotentials.zeros(M, K)
    min_params = dict(net.params)
    min_params["atoms"] = codebook.atoms
    min_params["beta"] = codebook.beta
    adam_min = AdamState.init(min_params, lr=lr)
    adam_phi = None
    if method == "vqwae":
        phi_params = {f"phi_{m}": Tensor(phis.phi[m], requires_grad=True) for m in range(M)}
        adam_phi = AdamState.init(phi_params, lr=phi_lr)
    base_hyper = {
        "lr": lr, "phi_lr": phi_lr, "eps": 0.1, "lambda": 1e-3, "lambda_r": 1.0,
        "beta_vqvae": 0.25, "phi_iters": 5,
    }
    if hyper:
        base_hyper.update(hyper)
    return TrainState(method=method, net=net, codebook=codebook, phis=phis,
                      adam_min=adam_min, adam_phi=adam_phi, iteration=0,
                      seed=seed, hyper=base_hyper)


def _min_params(state: TrainState) -> dict:
    params = dict(state.net.params)
    params["atoms"] = state.codebook.atoms
    params["beta"] = state.codebook.beta
    return params


def _apply_min_update(state: TrainState, new_params: dict):
    net_params = {k: v for k, v in new_params.items() if k not in ("atoms", "beta")}
    state.net.params = net_params
    state.codebook.atoms = new_params["atoms"]
    state.codebook.beta = new_params["beta"]


def train_step(state: TrainState, batch: np.ndarray):
    """One outer iteration of the alternating loop; mutates and returns state.

    vqwae: phi_iters ascent steps on the potentials at the current latents
    (encoder frozen), then one Adam descent step on the full objective with
    the potentials frozen. vqvae: one Adam descent step. A non-finite loss
    raises with the iteration number attached.
    """
    x = Tensor(np.asarray(batch, dtype=np.float64))
    hyper = state.hyper
    try:
        if state.method == "vqwae":
            z_now = encode(state.net, x)
            pi_now = pi_from_beta(state.codebook)
            state.phis, state.adam_phi = dual_ascent(
                z_now.values, state.codebook.atoms.values, pi_now.values,
                state.phis, steps=int(hyper["phi_iters"]), lr=hyper["phi_lr"],
                eps=hyper["eps"], state=state.adam_phi,
            )
            total, breakdown, _ = vqwae_loss(
                state.net, state.codebook, x, state.phis,
                eps=hyper["eps"], lam=hyper["lambda"], lam_r=hyper["lambda_r"],
            )
        else:
            total, breakdown, _ = vqvae_loss(
                state.net, state.codebook, x, beta_vqvae=hyper["beta_vqvae"])
        params = _min_params(state)
        gmap = backward(total, params=list(params.values()))
        grads = {name: gmap[p.node_id] for name, p in params.items()}
        new_params, state.adam_min = adam_step(params, grads, state.adam_min)
        _apply_min_update(state, new_params)
    except T.NonFiniteError as exc:
        raise T.NonFiniteError(
            f"non-finite value at iteration {state.iteration}: {exc}") from exc
    state.iteration += 1
    return state, breakdown


def evaluate(state: TrainState, dataset, chunk: int = 512) -> EvalReport:
    """Full-pass reconstruction and codebook-usage metrics, gradient-free.

    PSNR uses the dataset's data-range peak; a perfect reconstruction
    reports +inf.
    """
    samples = dataset.samples
    n = samples.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    sq_err = 0.0
    count = 0
    all_indices = []
    for start in range(0, n, chunk):
        x = Tensor(samples[start:start + chunk])
        z = encode(state.net, x)
        qres = quantize(z, state.codebook)
        x_hat = decode(state.net, qres.st_output)
        sq_err += float(((x_hat.values - x.values) ** 2).sum())
        count += x.values.size
        all_indices.append(qres.indices)
    mse = sq_err / count
    peak = float(dataset.peak)
    psnr = float("inf") if mse == 0.0 else 10.0 * np.log10(peak * peak / mse)
    stats = usage_histogram(np.concatenate(all_indices, axis=0), state.codebook.K)
    return EvalReport(mse=mse, psnr=psnr, perplexity=stats.perplexity,
                      counts=stats.counts, total=stats.total)


# --- checkpointing ---------------------------------------------------------
# Format: numpy .npz archive, all arrays float64 except noted.
#   version: scalar int            method: str (0-d unicode array)
#   iteration, seed: scalar ints   hyper: JSON string (0-d unicode array)
#   arch: JSON string with n_x/M/n_z/hidden/K
#   param/<name>: network weights  atoms, beta, phi: codebook state
#   adam_min/t plus adam_min/m/<name>, adam_min/v/<name>; same for adam_phi
# Arrays round-trip bit-exactly; loading rebuilds Tensors with
# requires_grad=True for every trainable leaf.


def _pack_adam(tag: str, state: AdamState, out: dict):
    out[f"{tag}/t"] = np.array(state.t)
    out[f"{tag}/lr"] = np.array(state.lr)
    out[f"{tag}/beta1"] = np.array(state.beta1)
    out[f"{tag}/beta2"] = np.array(state.beta2)
    out[f"{tag}/eps"] = np.array(state.eps)
    for name, arr in state.m.items():
        out[f"{tag}/m/{name}"] = arr
    for name, arr in state.v.items():
        out[f"{tag}/v/{name}"] = arr


def _unpack_adam(tag: str, blob) -> AdamState:
    prefix_m = f"{tag}/m/"
    prefix_v = f"{tag}/v/"
    m = {k[len(prefix_m):]: blob[k] for k in blob.files if k.startswith(prefix_m)}
    v = {k[len(prefix_v):]: blob[k] for k in blob.files if k.startswith(prefix_v)}
    return AdamState(
        lr=float(blob[f"{tag}/lr"]), beta1=float(blob[f"{tag}/beta1"]),
        beta2=float(blob[f"{tag}/beta2"]), eps=float(blob[f"{tag}/eps"]),
        t=int(blob[f"{tag}/t"]), m=m, v=v,
    )


def save_checkpoint(state: TrainState, path: str) -> None:
    arch = {
        "n_x": state.net.n_x, "M": state.net.M, "n_z": state.net.n_z,
        "hidden": list(state.net.hidden), "K": state.codebook.K,
    }
    out = {
        "version": np.array(CHECKPOINT_VERSION),
        "method": np.array(state.method),
        "iteration": np.array(state.iteration),
        "seed": np.array(state.seed),
        "hyper": np.array(json.dumps(state.hyper, sort_keys=True)),
        "arch": np.array(json.dumps(arch, sort_keys=True)),
        "atoms": state.codebook.atoms.values,
        "beta": state.codebook.beta.values,
        "phi": state.phis.phi,
    }
    for name, p in state.net.params.items():
        out[f"param/{name}"] = p.values
    _pack_adam("adam_min", state.adam_min, out)
    if state.adam_phi is not None:
        _pack_adam("adam_phi", state.adam_phi, out)
    buf = io.BytesIO()
    np.savez(buf, **out)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path: str) -> TrainState:
    blob = np.load(path, allow_pickle=False)
    version = int(blob["version"])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    arch = json.loads(str(blob["arch"]))
    params = {k[len("param/"):]: Tensor(blob[k], requires_grad=True)
              for k in blob.files if k.startswith("param/")}
    net = EncoderDecoder(params=params, n_x=arch["n_x"], M=arch["M"],
                         n_z=arch["n_z"], hidden=tuple(arch["hidden"]))
    codebook = Codebook(
        atoms=Tensor(blob["atoms"], requires_grad=True),
        beta=Tensor(blob["beta"], requires_grad=True),
        K=arch["K"], M=arch["M"], n_z=arch["n_z"],
    )
    method = str(blob["method"])
    return TrainState(
        method=method,
        net=net,
        codebook=codebook,
        phis=DualPotentials(blob["phi"]),
        adam_min=_unpack_adam("adam_min", blob),
        adam_phi=_unpack_adam("adam_phi", blob) if f"adam_phi/t" in blob.files else None,
        iteration=int(blob["iteration"]),
        seed=int(blob["seed"]),
        hyper=json.loads(str(blob["hyper"])),
    )
