"""Compression drivers: the penalty-method outer loop and its baselines.

The main driver alternates a learning step (penalized loss minimization
over real weights, delegated to the model) with a compression step
(optimal quantization of the current weights), under a multiplicatively
growing penalty mu_k = mu0 * growth^k, with augmented-Lagrangian
multiplier estimates lam updated as lam <- lam - mu (w - w_q).  Setting
lam = 0 permanently gives the quadratic-penalty variant.

Baselines: direct compression (quantize the trained reference once) and
iterated direct compression (alternate plain retraining at mu = 0 with
quantization).
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DivergenceError, NumericalError
from . import quantizers as qz

__all__ = [
    "PenaltySchedule",
    "PenaltyState",
    "QuantScheme",
    "CompressionStats",
    "TraceRow",
    "Trace",
    "LcResult",
    "clipped_lr",
    "compression_stats",
    "quantize_vector",
    "lc_run",
    "dc_run",
    "idc_run",
]

SCHEME_KINDS = (
    "adaptive",
    "fixed",
    "binary",
    "binary_scale",
    "ternary",
    "ternary_scale",
    "pow2",
)


# ---------------------------------------------------------------------------
# Configuration types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PenaltySchedule:
    """Multiplicative penalty schedule mu_k = mu0 * growth^k."""

    mu0: float
    growth: float
    max_outer_iters: int = 30
    method: str = "augmented_lagrangian"  # or "quadratic_penalty"
    tolerance: float = 1e-6  # stop when max|w - w_q| drops below this

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ValueError("mu0 must be positive")
        if not self.growth > 1:
            raise ValueError("growth must exceed 1")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.method not in ("augmented_lagrangian", "quadratic_penalty"):
            raise ValueError(f"unknown penalty method: {self.method!r}")

    def mu(self, k: int) -> float:
        return self.mu0 * self.growth**k


@dataclass
class PenaltyState:
    """Live penalty state: current mu and multiplier estimates."""

    mu: float
    lam: np.ndarray
    outer_iter: int = 0


@dataclass(frozen=True)
class QuantScheme:
    """What codebook each layer gets.

    kind selects the quantizer; ``k`` (adaptive), ``codebook`` (fixed
    entries) and ``c_exp`` (powers of two) parameterize it.  scope
    "per_layer" learns one codebook per layer; "global" quantizes the
    concatenated weight vector with a single codebook.
    """

    kind: str
    k: int | None = None
    codebook: tuple | None = None
    c_exp: int | None = None
    scope: str = "per_layer"

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme kind: {self.kind!r}")
        if self.scope not in ("per_layer", "global"):
            raise ValueError(f"unknown scope: {self.scope!r}")
        if self.kind == "adaptive":
            if self.k is None or self.k < 1:
                raise ValueError("adaptive scheme needs k >= 1")
        if self.kind == "fixed":
            if self.codebook is None or len(self.codebook) < 1:
                raise ValueError("fixed scheme needs codebook entries")
            object.__setattr__(self, "codebook", tuple(float(c) for c in self.codebook))
        if self.kind == "pow2":
            if self.c_exp is None or self.c_exp < 0:
                raise ValueError("pow2 scheme needs c_exp >= 0")

    @property
    def codebook_size(self) -> int:
        """Entry count K used for compression accounting."""
        if self.kind == "adaptive":
            return self.k
        if self.kind == "fixed":
            return len(self.codebook)
        if self.kind in ("binary", "binary_scale"):
            return 2
        if self.kind in ("ternary", "ternary_scale"):
            return 3
        return 2 * self.c_exp + 3  # pow2


@dataclass(frozen=True)
class CompressionStats:
    """Exact bit accounting for a quantized model."""

    p1: int  # multiplicative weights
    p0: int  # biases
    k: int
    b: int
    bits_reference: int
    bits_quantized: int
    rho: float


def compression_stats(p1, p0, k, b=32) -> CompressionStats:
    """bits(reference) / bits(quantized) with the codebook stored at b bits.

    bits(reference) = (P1+P0)*b; bits(quantized) = P1*ceil(log2 K) +
    (P0+K)*b.  K = 1 legitimately costs 0 bits per weight.
    """
    if p1 < 0 or p0 < 0:
        raise ValueError("counts must be nonnegative")
    if k < 1:
        raise ValueError("codebook size must be >= 1")
    if b <= 0:
        raise ValueError("float bit width must be positive")
    bits_per_weight = (k - 1).bit_length()
    bits_reference = (p1 + p0) * b
    bits_quantized = p1 * bits_per_weight + (p0 + k) * b
    return CompressionStats(
        p1=p1,
        p0=p0,
        k=k,
        b=b,
        bits_reference=bits_reference,
        bits_quantized=bits_quantized,
        rho=bits_reference / bits_quantized,
    )


def clipped_lr(t, base_schedule, mu) -> float:
    """Learning rate min(eta_t, 1/mu); ``base_schedule`` is eta_t or t->eta_t."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    eta = base_schedule(t) if callable(base_schedule) else float(base_schedule)
    return min(eta, 1.0 / mu)


# ---------------------------------------------------------------------------
# Trace
# ---------------------------------------------------------------------------

TRACE_COLUMNS = (
    "outer_iter",
    "mu",
    "loss_train",
    "loss_test",
    "err_train",
    "err_test",
    "constraint_violation",
    "kmeans_iters",
    "wall_time_s",
)


@dataclass
class TraceRow:
    outer_iter: int
    mu: float
    loss_train: float
    loss_test: float | None
    err_train: float | None
    err_test: float | None
    constraint_violation: float
    kmeans_iters: int
    wall_time_s: float


@dataclass
class Trace:
    """Per-outer-iteration record of a compression run."""

    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, i) -> TraceRow:
        return self.rows[i]

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(TRACE_COLUMNS)
            for r in self.rows:
                writer.writerow(
                    ["" if v is None else repr(v) if isinstance(v, float) else v
                     for v in (getattr(r, c) for c in TRACE_COLUMNS)]
                )

    @classmethod
    def from_csv(cls, path) -> "Trace":
        trace = cls()
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            for rec in reader:
                trace.append(
                    TraceRow(
                        outer_iter=int(rec["outer_iter"]),
                        mu=float(rec["mu"]),
                        loss_train=float(rec["loss_train"]),
                        loss_test=_opt_float(rec["loss_test"]),
                        err_train=_opt_float(rec["err_train"]),
                        err_test=_opt_float(rec["err_test"]),
                        constraint_violation=float(rec["constraint_violation"]),
                        kmeans_iters=int(rec["kmeans_iters"]),
                        wall_time_s=float(rec["wall_time_s"]),
                    )
                )
        return trace

    def to_json(self, path, extra=None) -> None:
        doc = {"columns": list(TRACE_COLUMNS), "rows": [asdict(r) for r in self.rows]}
        if extra:
            doc.update(extra)
        with open(path, "w") as f:
            json.dump(doc, f, indent=1)

    @classmethod
    def from_json(cls, path) -> "Trace":
        with open(path) as f:
            doc = json.load(f)
        trace = cls()
        for rec in doc["rows"]:
            trace.append(TraceRow(**rec))
        return trace


def _opt_float(s):
    return None if s == "" else float(s)


# ---------------------------------------------------------------------------
# C step dispatch
# ---------------------------------------------------------------------------

def quantize_vector(v, scheme: QuantScheme, warm=None, rng=None):
    """One compression step on a flat vector; returns (QuantParams, iters).

    ``warm`` is the previous step's QuantParams and seeds k-means for
    adaptive codebooks; ``rng`` drives k-means++ on a cold start.  The
    iteration count is 0 for the closed-form quantizers.
    """
    if scheme.kind == "adaptive":
        init = warm.codebook if warm is not None else "kmeanspp"
        res = qz.kmeans_1d(v, scheme.k, init=init, rng=rng)
        return res.params, res.n_iter
    if scheme.kind == "fixed":
        codebook = qz.Codebook(np.array(scheme.codebook), kind=qz.FIXED)
        return qz.QuantParams(codebook, qz.assign_fixed(v, codebook)), 0
    if scheme.kind == "binary":
        return qz.binarize(v), 0
    if scheme.kind == "binary_scale":
        return qz.binarize_scale(v), 0
    if scheme.kind == "ternary":
        return qz.ternarize(v), 0
    if scheme.kind == "ternary_scale":
        return qz.ternarize_scale(v), 0
    if scheme.kind == "pow2":
        return qz.pow2_quantize(v, scheme.c_exp), 0
    raise ValueError(f"unknown scheme kind: {scheme.kind!r}")


def _group_slices(model, scheme: QuantScheme) -> list[slice]:
    if scheme.scope == "global":
        return [slice(0, model.n_weights)]
    return model.layer_slices()


def _c_step(w, slices, scheme, warm, rng):
    """Quantize each weight group; returns (params per group, flat w_q, iters)."""
    params = []
    total_iters = 0
    w_q = np.empty_like(w)
    for i, s in enumerate(slices):
        p, iters = quantize_vector(w[s], scheme, None if warm is None else warm[i], rng)
        params.append(p)
        total_iters += iters
        w_q[s] = qz.decompress(p)
    return params, w_q, total_iters


def _update_multipliers(lam, mu, w, w_q):
    """Augmented-Lagrangian estimate update lam <- lam - mu (w - w_q)."""
    return lam - mu * (w - w_q)


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------

@dataclass
class LcResult:
    """Outcome of a compression run.

    ``weights`` is the final quantized flat weight vector (the deployable
    model); ``params`` holds one QuantParams per group (layer, or the whole
    net under global scope).
    """

    params: list
    weights: np.ndarray
    trace: Trace
    converged: bool
    scheme: QuantScheme
    slices: list[slice]


def _metrics_at(model, w):
    """Evaluate (loss/err, train/test) with the model temporarily at w."""
    saved = model.weight_vector()
    model.set_weight_vector(w)
    out = (
        model.loss_train(),
        model.loss_test(),
        model.error_train(),
        model.error_test(),
    )
    model.set_weight_vector(saved)
    return out


def _record(trace, k, mu, model, w_q, violation, kmeans_iters, t0):
    loss_tr, loss_te, err_tr, err_te = _metrics_at(model, w_q)
    if not math.isfinite(loss_tr):
        raise DivergenceError("non-finite loss on the quantized net", trace=trace)
    row = TraceRow(
        outer_iter=k,
        mu=mu,
        loss_train=loss_tr,
        loss_test=loss_te,
        err_train=err_tr,
        err_test=err_te,
        constraint_violation=violation,
        kmeans_iters=kmeans_iters,
        wall_time_s=time.perf_counter() - t0,
    )
    trace.append(row)
    return row


def lc_run(model, scheme, schedule, lstep_cfg=None, seed=0) -> LcResult:
    """Full learning-compression run from a trained reference model.

    Iteration 0 is the direct-compression point (exact solution as
    mu -> 0+): quantize the reference weights.  Each outer iteration k then
    solves the penalized learning step at mu_k toward the current quantized
    weights, re-quantizes w - lam/mu (k-means warm-started from the
    previous codebook), and updates the multipliers.  Stops when
    max|w - w_q| < tolerance; the returned model weights are the quantized
    ones.  If the tolerance is never reached, every recorded iterate is a
    valid quantized net, so the one with the lowest training loss is
    returned, flagged non-converged (it is never worse than direct
    compression, which is iteration 0).  On a non-finite loss the run
    aborts with a DivergenceError carrying the trace so far.
    """
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    slices = _group_slices(model, scheme)
    w_bar = model.weight_vector()
    params, w_q, km_iters = _c_step(w_bar, slices, scheme, None, rng)
    trace = Trace()
    row = _record(trace, 0, 0.0, model, w_q,
                  float(np.max(np.abs(w_bar - w_q))), km_iters, t0)

    state = PenaltyState(mu=schedule.mu0, lam=np.zeros(model.n_weights),
                         outer_iter=0)
    w = w_bar.copy()
    converged = False
    epoch_offset = 0
    best = (row.loss_train, params, w_q)
    for k in range(schedule.max_outer_iters):
        state.mu = schedule.mu(k)
        state.outer_iter = k
        target = w_q + state.lam / state.mu
        model.set_weight_vector(w)
        try:
            model.l_step(target, state.mu, cfg=lstep_cfg, rng=rng,
                         epoch_offset=epoch_offset)
        except NumericalError as exc:
            raise DivergenceError(str(exc), trace=trace) from exc
        epoch_offset += getattr(lstep_cfg, "epochs", 0) or 0
        w = model.weight_vector()
        params, w_q, km_iters = _c_step(w - state.lam / state.mu, slices,
                                        scheme, params, rng)
        if schedule.method == "augmented_lagrangian":
            state.lam = _update_multipliers(state.lam, state.mu, w, w_q)
        violation = float(np.max(np.abs(w - w_q)))
        row = _record(trace, k + 1, state.mu, model, w_q, violation,
                      km_iters, t0)
        if row.loss_train < best[0]:
            best = (row.loss_train, params, w_q)
        if violation < schedule.tolerance:
            converged = True
            break

    if not converged:
        _, params, w_q = best
    model.set_weight_vector(w_q)
    return LcResult(params=params, weights=w_q, trace=trace,
                    converged=converged, scheme=scheme, slices=slices)


def dc_run(model, scheme, seed=0) -> LcResult:
    """Direct compression: one C step on the reference weights, no retraining.

    The model itself is left at the reference; the quantized weights are in
    the result.
    """
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    slices = _group_slices(model, scheme)
    w_bar = model.weight_vector()
    params, w_q, km_iters = _c_step(w_bar, slices, scheme, None, rng)
    trace = Trace()
    _record(trace, 0, 0.0, model, w_q,
            float(np.max(np.abs(w_bar - w_q))), km_iters, t0)
    return LcResult(params=params, weights=w_q, trace=trace,
                    converged=False, scheme=scheme, slices=slices)


def idc_run(model, scheme, outer_iters, lstep_cfg=None, seed=0) -> LcResult:
    """Iterated direct compression: plain retraining at mu = 0, then re-quantize.

    Each iteration restarts the loss optimization from the current
    quantized point (no penalty coupling), then quantizes the result with
    warm-started k-means.  With an exact learning step this cannot move
    after the first iteration.
    """
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    slices = _group_slices(model, scheme)
    w_bar = model.weight_vector()
    params, w_q, km_iters = _c_step(w_bar, slices, scheme, None, rng)
    trace = Trace()
    _record(trace, 0, 0.0, model, w_q,
            float(np.max(np.abs(w_bar - w_q))), km_iters, t0)
    epoch_offset = 0
    for k in range(outer_iters):
        model.set_weight_vector(w_q)
        try:
            model.l_step(None, 0.0, cfg=lstep_cfg, rng=rng,
                         epoch_offset=epoch_offset)
        except NumericalError as exc:
            raise DivergenceError(str(exc), trace=trace) from exc
        epoch_offset += getattr(lstep_cfg, "epochs", 0) or 0
        w = model.weight_vector()
        params, w_q, km_iters = _c_step(w, slices, scheme, params, rng)
        _record(trace, k + 1, 0.0, model, w_q,
                float(np.max(np.abs(w - w_q))), km_iters, t0)
    model.set_weight_vector(w_q)
    return LcResult(params=params, weights=w_q, trace=trace,
                    converged=False, scheme=scheme, slices=slices)
