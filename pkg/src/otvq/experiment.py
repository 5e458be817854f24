"""Experiment orchestration: training runs and the OT benchmark.

run_experiment drives the training loop end to end and persists everything
a run produces: metrics.csv (deterministic columns only, so a re-run with
the same config and seed is bitwise identical), the final checkpoint, the
usage histograms and loss curve as SVG, and summary.json (which also holds
the wallclock, the one legitimately nondeterministic number).
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, TrainConfig, config_to_dict
from .data import Dataset, batches, gen_gaussian_mixture, load_idx
from .models import TrainState, encode, evaluate, init_train_state, save_checkpoint, train_step
from .ot_entropic import DualPotentials, dual_ascent, semi_dual_value, sinkhorn
from .ot_exact import DiscreteDist, cost_matrix, exact_ot
from .quantizer import quantize, usage_histogram
from .svgplot import Histogram, Series, emit_svg
from .tensor import NonFiniteError, Tensor

__all__ = ["run_experiment", "ot_bench", "bench_instance", "build_dataset",
           "ExperimentError", "BenchRow", "format_bench_table", "write_bench_csv"]


class ExperimentError(RuntimeError):
    """Numeric failure inside a run; partial artifacts are already on disk."""


def build_dataset(cfg: TrainConfig) -> Dataset:
    if cfg.dataset == "gaussian_mixture":
        return gen_gaussian_mixture(cfg.n_clusters, cfg.n_x,
                                    cfg.points_per_cluster, cfg.spread, cfg.seed)
    return load_idx(cfg.images_path, cfg.labels_path or None)


def _metrics_header(m: int) -> list:
    return ["iter", "recon_mse", "ws_term", "kl_term", "total_loss",
            *[f"perplexity_m{i}" for i in range(m)]]


def _batch_perplexity(state: TrainState, batch: np.ndarray) -> np.ndarray:
    z = encode(state.net, Tensor(np.asarray(batch, dtype=np.float64)))
    qres = quantize(z, state.codebook)
    return usage_histogram(qres.indices, state.codebook.K).perplexity


def run_experiment(cfg: TrainConfig) -> dict:
    """Train per config, persist artifacts, return the summary dict.

    On a non-finite loss the metrics rows logged so far stay on disk and
    ExperimentError is raised (CLI exit 2).
    """
    t_start = time.monotonic()
    out_dir = cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    dataset = build_dataset(cfg)
    state = init_train_state(
        cfg.method, n_x=dataset.n_x, K=cfg.K, M=cfg.M, n_z=cfg.n_z,
        hidden=cfg.hidden, seed=cfg.seed, lr=cfg.lr, phi_lr=cfg.phi_lr,
        hyper={"eps": cfg.eps, "lambda": cfg.lambda_, "lambda_r": cfg.lambda_r,
               "beta_vqvae": cfg.beta_vqvae, "phi_iters": cfg.phi_iters},
    )

    per_epoch = dataset.n // cfg.batch_size
    if per_epoch == 0:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds dataset size {dataset.n}")
    epoch_cache = {}

    def batch_for(it: int) -> np.ndarray:
        epoch, idx = divmod(it, per_epoch)
        if epoch not in epoch_cache:
            epoch_cache.clear()  # keep one epoch in memory
            epoch_cache[epoch] = batches(dataset, cfg.batch_size, seed=[cfg.seed, epoch])
        return epoch_cache[epoch][idx]

    metrics_path = os.path.join(out_dir, "metrics.csv")
    rows_logged = []
    failure = None
    with open(metrics_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_metrics_header(cfg.M))
        try:
            for it in range(cfg.iters):
                batch = batch_for(it)
                state, bd = train_step(state, batch)
                done = it + 1
                if done % cfg.log_every == 0 or done == cfg.iters:
                    perp = _batch_perplexity(state, batch)
                    row = [done, repr(bd.recon), repr(bd.ws_term), repr(bd.kl_term),
                           repr(bd.total), *[repr(float(p)) for p in perp]]
                    writer.writerow(row)
                    fh.flush()
                    rows_logged.append((done, bd.total))
        except NonFiniteError as exc:
            failure = exc

    if failure is not None:
        raise ExperimentError(str(failure)) from failure

    report = evaluate(state, dataset)
    save_checkpoint(state, os.path.join(out_dir, "checkpoint.npz"))

    if rows_logged:
        xs = [r[0] for r in rows_logged]
        ys = [r[1] for r in rows_logged]
    else:  # untrained run: one point from the initial evaluation
        xs, ys = [0], [report.mse]
    emit_svg(Series(xs=xs, ys=ys, title=f"{cfg.method} total loss",
                    x_label="iteration", y_label="loss"),
             os.path.join(out_dir, "loss_curve.svg"))
    for m in range(cfg.M):
        emit_svg(Histogram(values=list(report.counts[m]),
                           title=f"codeword usage, component {m}",
                           x_label="codeword", y_label="count"),
                 os.path.join(out_dir, f"usage_hist_m{m}.svg"))

    summary = {
        "method": cfg.method,
        "dataset": dataset.name,
        "seed": cfg.seed,
        "iters": cfg.iters,
        "K": cfg.K,
        "M": cfg.M,
        "n_z": cfg.n_z,
        "final_mse": report.mse,
        "final_psnr": report.psnr if np.isfinite(report.psnr) else None,
        "perplexity": [float(p) for p in report.perplexity],
        "wallclock_ms_total": (time.monotonic() - t_start) * 1000.0,
        "config": config_to_dict(cfg),
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


# --- OT benchmark ----------------------------------------------------------

@dataclass
class BenchRow:
    n: int
    k: int
    eps: float
    exact: float
    sinkhorn_value: float
    semi_dual: float
    rel_gap_sinkhorn: float
    abs_gap_dual: float


def _random_instance(n: int, k: int, rng):
    # uniform source: the semi-dual treats its first argument as a batch
    # (empirical measure with weights 1/n), so the comparison needs it too
    b = rng.random(k) + 0.1
    mu = DiscreteDist.uniform(rng.normal(size=(n, 2)))
    nu = DiscreteDist(b / b.sum(), rng.normal(size=(k, 2)))
    return mu, nu


def bench_instance(mu: DiscreteDist, nu: DiscreteDist, eps_list,
                   ascent_steps: int = 1500, ascent_lr: float = 0.05) -> list:
    """All three solvers on one instance; one BenchRow per eps.

    mu must be uniform: the semi-dual treats its source as a batch measure
    with weights 1/n. rel_gap_sinkhorn compares Sinkhorn's transported cost
    against the exact value; abs_gap_dual compares the ascent value against
    Sinkhorn's entropic objective at the same eps.
    """
    n, k = mu.weights.size, nu.weights.size
    if np.max(np.abs(mu.weights - 1.0 / n)) > 1e-12:
        raise ValueError("bench source measure must be uniform")
    cost = cost_matrix(mu.atoms, nu.atoms)
    exact = exact_ot(mu, nu, cost)
    rows = []
    for eps in eps_list:
        sr = sinkhorn(mu, nu, cost, eps=eps)
        phis, _ = dual_ascent(
            mu.atoms[:, None, :], nu.atoms, nu.weights[None, :],
            DualPotentials.zeros(1, k),
            steps=ascent_steps, lr=ascent_lr, eps=eps,
        )
        sd = semi_dual_value(Tensor(mu.atoms), Tensor(nu.atoms),
                             Tensor(nu.weights), Tensor(phis.phi[0]), eps).item()
        rel_gap = abs(sr.plan.value - exact.value) / max(1e-30, abs(exact.value))
        rows.append(BenchRow(
            n=n, k=k, eps=eps, exact=exact.value,
            sinkhorn_value=sr.plan.value, semi_dual=sd,
            rel_gap_sinkhorn=rel_gap,
            abs_gap_dual=abs(sd - sr.entropic_value),
        ))
    return rows


def ot_bench(sizes, eps_list, seed: int = 0, ascent_steps: int = 1500,
             ascent_lr: float = 0.05) -> list:
    """Random instances at the requested sizes, solved three ways each."""
    rng = np.random.default_rng(seed)
    rows = []
    for n, k in sizes:
        if n < 1 or k < 1 or n * k > 400:
            raise ValueError(f"size {n}x{k} outside oracle scale (n*k <= 400)")
        mu, nu = _random_instance(n, k, rng)
        rows.extend(bench_instance(mu, nu, eps_list,
                                   ascent_steps=ascent_steps, ascent_lr=ascent_lr))
    return rows


def format_bench_table(rows) -> str:
    header = f"{'n':>4} {'k':>4} {'eps':>10} {'exact':>14} {'sinkhorn':>14} " \
             f"{'semi_dual':>14} {'rel_gap_sk':>12} {'abs_gap_sd':>12}"
    lines = [header]
    for r in rows:
        lines.append(f"{r.n:>4} {r.k:>4} {r.eps:>10.4g} {r.exact:>14.8f} "
                     f"{r.sinkhorn_value:>14.8f} {r.semi_dual:>14.8f} "
                     f"{r.rel_gap_sinkhorn:>12.3e} {r.abs_gap_dual:>12.3e}")
    return "\n".join(lines)


def write_bench_csv(rows, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "k", "eps", "exact", "sinkhorn", "semi_dual",
                         "rel_gap_sinkhorn", "abs_gap_dual"])
        for r in rows:
            writer.writerow([r.n, r.k, repr(r.eps), repr(r.exact),
                             repr(r.sinkhorn_value), repr(r.semi_dual),
                             repr(r.rel_gap_sinkhorn), repr(r.abs_gap_dual)])
