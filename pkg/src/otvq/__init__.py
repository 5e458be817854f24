"""otvq: optimal-transport vector quantization at desk scale.

From-scratch training of discrete-representation autoencoders where the
codebook is fit by optimal transport (entropic semi-dual ascent) instead of
nearest-neighbour averaging, plus the exact/entropic OT solver stack used to
cross-check it. Everything runs on float64 numpy with a hand-rolled
reverse-mode tape; no GPU, no deep-learning framework.
"""

from .tensor import (
    Tensor,
    GradientMap,
    ShapeError,
    NonFiniteError,
    apply_primitive,
    backward,
)
from .optim import AdamState, adam_step, grad_check, finite_difference_grad
from .ot_exact import DiscreteDist, OTError, TransportPlan, cost_matrix, exact_ot
from .ot_entropic import (
    DualPotentials,
    SinkhornResult,
    dual_ascent,
    independent_joint_cost,
    semi_dual_value,
    sinkhorn,
)
from .quantizer import Codebook, QuantizeResult, UsageStats, kl_to_uniform, quantize
from .models import (
    EncoderDecoder,
    EvalReport,
    LossBreakdown,
    TrainState,
    evaluate,
    init_train_state,
    load_checkpoint,
    save_checkpoint,
    train_step,
    vqvae_loss,
    vqwae_loss,
)
from .data import Dataset, batches, gen_gaussian_mixture, load_idx
from .config import ConfigError, TrainConfig, parse_config
from .experiment import ot_bench, run_experiment

__all__ = [
    "Tensor",
    "GradientMap",
    "ShapeError",
    "NonFiniteError",
    "apply_primitive",
    "backward",
    "AdamState",
    "adam_step",
    "grad_check",
    "finite_difference_grad",
    "DiscreteDist",
    "OTError",
    "TransportPlan",
    "cost_matrix",
    "exact_ot",
    "DualPotentials",
    "SinkhornResult",
    "dual_ascent",
    "independent_joint_cost",
    "semi_dual_value",
    "sinkhorn",
    "Codebook",
    "QuantizeResult",
    "UsageStats",
    "kl_to_uniform",
    "quantize",
    "EncoderDecoder",
    "EvalReport",
    "LossBreakdown",
    "TrainState",
    "evaluate",
    "init_train_state",
    "load_checkpoint",
    "save_checkpoint",
    "train_step",
    "vqvae_loss",
    "vqwae_loss",
    "Dataset",
    "batches",
    "gen_gaussian_mixture",
    "load_idx",
    "ConfigError",
    "TrainConfig",
    "parse_config",
    "ot_bench",
    "run_experiment",
]

__version__ = "0.1.0"
