"""Entropic optimal transport: log-domain Sinkhorn and the semi-dual form.

Convention, fixed everywhere in this package: the entropic objective is

    W_eps(mu, nu) = min_gamma  <gamma, cost> + eps * KL(gamma || mu (x) nu)

i.e. the KL term is measured against the *product* of the marginals, not
plain entropy. Under this convention the semi-dual

    F(phi) = E_mu[ -eps log E_nu[ exp((phi(y) - c(x,y)) / eps) ] ] + E_nu[phi]

attains W_eps exactly at its maximum: no constant offset, so the primal
solver and the ascent solver must agree to solver tolerance and the tests
hold them to it. Most textbooks use plain entropy instead; the two differ
by an additive constant, hence this note.

sinkhorn works on plain float64 arrays. semi_dual_value is built from
autodiff primitives so the training loop can differentiate it w.r.t.
latents, codebook atoms, mass logits, and potentials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp as _lse

from . import tensor as T
from .optim import AdamState, adam_step
from .tensor import Tensor, backward
from .ot_exact import DiscreteDist, OTError, TransportPlan

__all__ = [
    "SinkhornResult",
    "DualPotentials",
    "sinkhorn",
    "semi_dual_value",
    "dual_ascent",
    "independent_joint_cost",
]


@dataclass(frozen=True)
class SinkhornResult:
    plan: TransportPlan
    entropic_value: float  # transported cost + eps * KL(plan || mu x nu)
    iterations: int
    converged: bool
    max_violation: float


@dataclass
class DualPotentials:
    """One potential vector per codebook component; phi has shape (M, K)."""

    phi: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.phi.ndim != 2:
            raise ValueError(f"phi must be (M, K), got {self.phi.shape}")
        if not np.all(np.isfinite(self.phi)):
            raise ValueError("non-finite potential")

    @classmethod
    def zeros(cls, m: int, k: int) -> "DualPotentials":
        return cls(np.zeros((m, k)))


def sinkhorn(mu: DiscreteDist, nu: DiscreteDist, cost: np.ndarray, eps: float,
             max_iters: int = 10000, tol: float = 1e-9) -> SinkhornResult:
    """Log-domain Sinkhorn scaling until the worst marginal violation < tol.

    Zero-mass atoms are legal: their log-weights are -inf and the plan rows
    or columns come out exactly zero. Non-convergence is reported in the
    result, not raised.
    """
    if eps <= 0.0:
        raise OTError("eps must be positive")
    a = mu.weights
    b = nu.weights
    cost = np.asarray(cost, dtype=np.float64)
    n, k = a.size, b.size
    if cost.shape != (n, k):
        raise OTError(f"cost shape {cost.shape} != ({n}, {k})")
    if not np.all(np.isfinite(cost)):
        raise OTError("non-finite cost")
    if abs(a.sum() - b.sum()) > 1e-9:
        raise OTError(f"marginal mismatch: {a.sum()!r} vs {b.sum()!r}")

    with np.errstate(divide="ignore"):
        log_a = np.log(a)
        log_b = np.log(b)

    f = np.zeros(n)
    g = np.zeros(k)
    it = 0
    violation = np.inf
    for it in range(1, max_iters + 1):
        f = -eps * _lse((g[None, :] - cost) / eps + log_b[None, :], axis=1)
        g = -eps * _lse((f[:, None] - cost) / eps + log_a[:, None], axis=0)
        log_plan = (f[:, None] + g[None, :] - cost) / eps + log_a[:, None] + log_b[None, :]
        plan = np.exp(log_plan)
        violation = max(
            float(np.max(np.abs(plan.sum(axis=1) - a))),
            float(np.max(np.abs(plan.sum(axis=0) - b))),
        )
        if violation < tol:
            break

    transported = float((plan * cost).sum())
    # KL(plan || a x b): on the support, log(plan / (a_i b_j)) == (f+g-c)/eps
    with np.errstate(invalid="ignore"):
        kl_terms = plan * ((f[:, None] + g[None, :] - cost) / eps)
    kl = float(np.where(plan > 0.0, kl_terms, 0.0).sum())
    return SinkhornResult(
        plan=TransportPlan.from_matrix(plan, cost),
        entropic_value=transported + eps * kl,
        iterations=it,
        converged=violation < tol,
        max_violation=violation,
    )


def semi_dual_value(z_batch: Tensor, codebook_atoms: Tensor, pi_m: Tensor,
                    phi_m: Tensor, eps: float, cost_fn=T.pairwise_sq_dist) -> Tensor:
    """Entropic semi-dual objective for one codebook component.

        (1/B) sum_i [ -eps log sum_k pi_k exp((phi_k - c(z_i, c_k)) / eps) ]
          + sum_k pi_k phi_k

    Differentiable w.r.t. every Tensor input; maximized over phi it equals
    the entropic primal between the uniform batch measure and (atoms, pi).
    cost_fn is the ground-cost hook (squared Euclidean by default).
    """
    if eps <= 0.0:
        raise OTError("eps must be positive")
    cost = cost_fn(z_batch, codebook_atoms)  # (B, K)
    inner = (phi_m - cost) * (1.0 / eps) + T.log(pi_m)
    soft = T.logsumexp(inner)  # (B,)
    return soft.mean() * (-eps) + (pi_m * phi_m).sum()


def dual_ascent(z_batch, codebook_atoms, pi, phis: DualPotentials, steps: int,
                lr: float, eps: float, state: AdamState | None = None,
                cost_fn=T.pairwise_sq_dist):
    """Adam ascent on the semi-dual for all M components independently.

    z_batch is (B, M, n_z) (a Tensor or array; values only, no gradient
    flows to it here), codebook_atoms (K, n_z), pi (M, K). Returns
    (DualPotentials, AdamState); pass the state back in to keep optimizer
    moments across calls. steps=0 returns the inputs unchanged.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    z = z_batch.values if isinstance(z_batch, Tensor) else np.asarray(z_batch, dtype=np.float64)
    atoms = codebook_atoms.values if isinstance(codebook_atoms, Tensor) else np.asarray(codebook_atoms)
    pi_vals = pi.values if isinstance(pi, Tensor) else np.asarray(pi, dtype=np.float64)
    m_comp = phis.phi.shape[0]
    if z.ndim != 3 or z.shape[1] != m_comp:
        raise ValueError(f"z_batch must be (B, M, n_z) with M={m_comp}, got {z.shape}")

    params = {f"phi_{m}": Tensor(phis.phi[m], requires_grad=True) for m in range(m_comp)}
    if state is None:
        state = AdamState.init(params, lr=lr)
    atoms_t = Tensor(atoms)
    for _ in range(steps):
        grads = {}
        for m in range(m_comp):
            value = semi_dual_value(Tensor(z[:, m, :]), atoms_t, Tensor(pi_vals[m]),
                                    params[f"phi_{m}"], eps, cost_fn=cost_fn)
            gmap = backward(-value, params=[params[f"phi_{m}"]])
            grads[f"phi_{m}"] = gmap[params[f"phi_{m}"].node_id]
        params, state = adam_step(params, grads, state)
    new_phi = np.stack([params[f"phi_{m}"].values for m in range(m_comp)])
    return DualPotentials(new_phi), state


def independent_joint_cost(per_component_plans, costs, check_budget: int = 200_000) -> float:
    """Average per-component transport cost, certified by the product coupling.

    Builds the coupling that moves each component independently according to
    its own plan (conditioned on the source atom) and checks that its joint
    cost under d = (1/M) sum_m c_m equals the average of the per-component
    values; then returns that average. The explicit check is skipped only
    when the n * K^M tableau would exceed check_budget cells.
    """
    plans = list(per_component_plans)
    costs = [np.asarray(c, dtype=np.float64) for c in costs]
    if not plans or len(plans) != len(costs):
        raise ValueError("need one cost matrix per plan")
    mm = len(plans)
    n = plans[0].matrix.shape[0]
    mu = plans[0].row_marginal
    for p, c in zip(plans, costs):
        if p.matrix.shape != c.shape or p.matrix.shape[0] != n:
            raise OTError("plan/cost shapes disagree")
        if np.any(p.matrix < -1e-12):
            raise OTError("infeasible input plan: negative mass")
        if np.max(np.abs(p.row_marginal - mu)) > 1e-9:
            raise OTError("infeasible input plans: row marginals disagree")

    values = [float((p.matrix * c).sum()) for p, c in zip(plans, costs)]
    average = float(np.mean(values))

    k_total = int(np.prod([p.matrix.shape[1] for p in plans]))
    if n * k_total <= check_budget:
        joint = 0.0
        for i in range(n):
            if mu[i] <= 0.0:
                continue
            # conditional mass of the product coupling at source atom i
            cond = plans[0].matrix[i] / mu[i]
            ccost = costs[0][i]
            for p, c in zip(plans[1:], costs[1:]):
                cond = np.multiply.outer(cond, p.matrix[i] / mu[i]).ravel()
                ccost = (np.add.outer(ccost, c[i])).ravel()
            joint += mu[i] * float((cond * ccost).sum()) / mm
        if abs(joint - average) > 1e-9 * max(1.0, abs(average)):
            raise AssertionError(
                f"product-coupling joint cost {joint!r} != average {average!r}")
    return average
