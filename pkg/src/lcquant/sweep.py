"""Grid sweeps over model width H and codebook size K.

Trains one reference classifier per hidden width, compresses it at each
codebook size, and tabulates loss against model size in bits so a caller
can pick the smallest model meeting a loss target:

    minimize C(K, H)  subject to  L(K, H) <= L_max.

Cells that fail numerically are recorded (loss = inf) and the sweep
continues.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import gen_synthetic_classes
from .errors import NumericalError
from .lc import PenaltySchedule, QuantScheme, lc_run
from .models import MlpModel, SgdConfig

__all__ = ["SweepConfig", "SweepCell", "model_size_bits", "run_sweep",
           "select_operating_point"]


@dataclass
class SweepConfig:
    hidden_sizes: list
    log2_ks: list  # bits per weight for the adaptive codebooks
    include_reference: bool = True
    n_classes: int = 10
    d: int = 32
    n_train: int = 2000
    n_test: int = 1000
    separation: float = 2.2
    activation: str = "tanh"
    reference_epochs: int = 30
    sgd: SgdConfig = field(default_factory=lambda: SgdConfig(lr0=0.05, epochs=2))
    schedule: PenaltySchedule = field(
        default_factory=lambda: PenaltySchedule(mu0=9.76e-5, growth=1.1,
                                                max_outer_iters=30)
    )
    float_bits: int = 32
    seed: int = 0


@dataclass
class SweepCell:
    hidden: int
    log2_k: int | None  # None marks the uncompressed reference
    loss: float
    err_train: float | None
    err_test: float | None
    size_bits: int
    converged: bool

    @property
    def feasible(self) -> bool:
        return np.isfinite(self.loss)


def model_size_bits(d_in, n_out, hidden, log2_k, b=32) -> int:
    """Storage cost of a one-hidden-layer classifier.

    Quantized weights cost log2 K bits each plus a K-entry codebook per
    layer; biases always stay at b bits.  log2_k None means no
    quantization (reference).
    """
    n_weights = (d_in + n_out) * hidden
    n_biases = hidden + n_out
    if log2_k is None:
        return (n_weights + n_biases) * b
    codebook = 2 * (2**log2_k) * b  # one codebook per quantized layer
    return n_weights * log2_k + n_biases * b + codebook


def run_sweep(cfg: SweepConfig, progress=None) -> list[SweepCell]:
    """Train/compress every (H, K) cell; per-cell failures do not abort."""
    train = gen_synthetic_classes(cfg.n_classes, cfg.d, cfg.n_train,
                                  seed=cfg.seed, separation=cfg.separation,
                                  means_seed=cfg.seed)
    test = gen_synthetic_classes(cfg.n_classes, cfg.d, cfg.n_test,
                                 seed=cfg.seed + 1, separation=cfg.separation,
                                 means_seed=cfg.seed)
    cells = []
    ref_cfg = SgdConfig(
        lr0=cfg.sgd.lr0, lr_decay=cfg.sgd.lr_decay, momentum=cfg.sgd.momentum,
        momentum_type=cfg.sgd.momentum_type, batch_size=cfg.sgd.batch_size,
        epochs=cfg.reference_epochs, seed=cfg.sgd.seed,
    )
    for h in cfg.hidden_sizes:
        model = MlpModel([cfg.d, h, cfg.n_classes], train.images, train.labels,
                         test.images, test.labels, activation=cfg.activation,
                         seed=cfg.seed)
        model.train_reference(cfg=ref_cfg, rng=np.random.default_rng(cfg.seed))
        ref_params = model.param_vector()
        if cfg.include_reference:
            cells.append(SweepCell(
                hidden=h, log2_k=None, loss=model.loss_train(),
                err_train=model.error_train(), err_test=model.error_test(),
                size_bits=model_size_bits(cfg.d, cfg.n_classes, h, None,
                                          cfg.float_bits),
                converged=True,
            ))
        for bits in cfg.log2_ks:
            scheme = QuantScheme(kind="adaptive", k=2**bits)
            try:
                result = lc_run(model, scheme, cfg.schedule,
                                lstep_cfg=cfg.sgd, seed=cfg.seed)
                # lc_run leaves the model at the returned quantized weights
                cell = SweepCell(
                    hidden=h, log2_k=bits, loss=model.loss_train(),
                    err_train=model.error_train(), err_test=model.error_test(),
                    size_bits=model_size_bits(cfg.d, cfg.n_classes, h, bits,
                                              cfg.float_bits),
                    converged=result.converged,
                )
            except NumericalError:
                cell = SweepCell(
                    hidden=h, log2_k=bits, loss=float("inf"),
                    err_train=None, err_test=None,
                    size_bits=model_size_bits(cfg.d, cfg.n_classes, h, bits,
                                              cfg.float_bits),
                    converged=False,
                )
            cells.append(cell)
            model.set_param_vector(ref_params)
            if progress is not None:
                progress(cell)
    return cells


def select_operating_point(cells, loss_max) -> SweepCell | None:
    """Smallest feasible cell with loss <= loss_max (deterministic ties)."""
    feasible = [c for c in cells if c.feasible and c.loss <= loss_max]
    if not feasible:
        return None
    return min(
        feasible,
        key=lambda c: (c.size_bits, c.hidden,
                       float("inf") if c.log2_k is None else c.log2_k),
    )
