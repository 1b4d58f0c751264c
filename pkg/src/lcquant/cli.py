"""Command-line front end.

Verbs:
    train     -- train and save a reference model
    compress  -- run dc / idc / lc on a reference checkpoint
    quantize  -- pure compression step on a flat weight file (no data needed)
    sweep     -- grid over hidden width H and codebook bits log2(K)
    report    -- summarize a finished run directory

Every command is deterministic given --seed.  Exit codes: 0 success,
2 configuration error, 3 I/O or parse error, 4 numerical failure.
Relative data paths resolve against $LCQUANT_DATA_DIR when it is set.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import struct
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .datasets import (
    IDX_IMAGE_MAGIC,
    gen_smooth_images,
    gen_superres,
    gen_synthetic_classes,
    load_idx,
)
from .errors import ConfigError, DataFormatError, NumericalError
from .lc import (
    PenaltySchedule,
    QuantScheme,
    compression_stats,
    dc_run,
    idc_run,
    lc_run,
    quantize_vector,
)
from .models import LinearRegressionModel, MlpModel, SgdConfig
from .quantizers import QuantParams, decompress
from .sweep import SweepConfig, run_sweep, select_operating_point

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

DATA_DIR_ENV = "LCQUANT_DATA_DIR"

# Task-specific penalty defaults: the regression loss scale is several
# orders of magnitude above cross-entropy, hence the much larger mu0.
DEFAULT_MU0 = {"regression": 10.0, "mlp_classify": 9.76e-5}


# ---------------------------------------------------------------------------
# Config parsing (strict: unknown keys are rejected)
# ---------------------------------------------------------------------------

def _check_keys(section, allowed, where):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _resolve_path(p):
    path = Path(p)
    base = os.environ.get(DATA_DIR_ENV)
    if not path.is_absolute() and base:
        candidate = Path(base) / path
        if candidate.exists() or not path.exists():
            return candidate
    return path


def load_config(path) -> dict:
    try:
        with open(path) as f:
            cfg = json.load(f)
    except OSError as exc:
        raise DataFormatError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(cfg, {"task", "seed", "out", "data", "model", "scheme",
                      "schedule", "sgd", "sweep"}, "config")
    task = cfg.get("task")
    if task not in ("regression", "mlp_classify"):
        raise ConfigError(f"task must be regression or mlp_classify, got {task!r}")
    if not isinstance(cfg.get("seed", 0), int):
        raise ConfigError("seed must be an integer")
    _check_keys(cfg.get("data", {}), {
        "source", "n_classes", "d", "n_train", "n_test", "separation",
        "n", "side", "noise_sigma", "images", "labels", "test_images",
        "test_labels",
    }, "data")
    _check_keys(cfg.get("model", {}), {"hidden", "activation"}, "model")
    _check_keys(cfg.get("scheme", {}), {"kind", "k", "codebook", "c_exp",
                                        "scope"}, "scheme")
    _check_keys(cfg.get("schedule", {}), {"mu0", "growth", "iters",
                                          "tolerance", "method"}, "schedule")
    _check_keys(cfg.get("sgd", {}), {
        "lr0", "lr_decay", "momentum", "momentum_type", "batch_size",
        "epochs_per_step", "reference_epochs",
    }, "sgd")
    _check_keys(cfg.get("sweep", {}), {
        "hidden_sizes", "log2_ks", "include_reference", "loss_targets",
    }, "sweep")
    return cfg


def scheme_from_config(cfg, args=None) -> QuantScheme:
    section = dict(cfg.get("scheme", {}))
    if args is not None:
        if getattr(args, "scheme", None):
            section["kind"] = args.scheme
        if getattr(args, "K", None):
            section["k"] = args.K
            section.setdefault("kind", "adaptive")
        if getattr(args, "c_exp", None) is not None:
            section["c_exp"] = args.c_exp
    if "kind" not in section:
        raise ConfigError("no quantization scheme given (config scheme.kind or --scheme/--K)")
    try:
        return QuantScheme(
            kind=section["kind"],
            k=section.get("k"),
            codebook=tuple(section["codebook"]) if "codebook" in section else None,
            c_exp=section.get("c_exp"),
            scope=section.get("scope", "per_layer"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def schedule_from_config(cfg, args=None) -> PenaltySchedule:
    section = dict(cfg.get("schedule", {}))
    task = cfg.get("task", "mlp_classify")
    mu0 = section.get("mu0", DEFAULT_MU0[task])
    growth = section.get("growth", 1.1)
    iters = section.get("iters", 30)
    tolerance = section.get("tolerance", 1e-6)
    method = section.get("method", "augmented_lagrangian")
    if args is not None:
        if getattr(args, "mu0", None) is not None:
            mu0 = args.mu0
        if getattr(args, "growth", None) is not None:
            growth = args.growth
        if getattr(args, "iters", None) is not None:
            iters = args.iters
        if getattr(args, "tolerance", None) is not None:
            tolerance = args.tolerance
    try:
        return PenaltySchedule(mu0=mu0, growth=growth, max_outer_iters=iters,
                               tolerance=tolerance, method=method)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def sgd_from_config(cfg, seed) -> tuple[SgdConfig, int]:
    """Returns (per-L-step SGD config, reference epoch count)."""
    section = cfg.get("sgd", {})
    try:
        sgd = SgdConfig(
            lr0=section.get("lr0", 0.1),
            lr_decay=section.get("lr_decay", 0.99),
            momentum=section.get("momentum", 0.95),
            momentum_type=section.get("momentum_type", "nesterov"),
            batch_size=section.get("batch_size", 128),
            epochs=section.get("epochs_per_step", 2),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return sgd, section.get("reference_epochs", 30)


def _read_idx_images(path) -> np.ndarray:
    """Images-only IDX reader (for unlabeled high-res sources)."""
    with open(path, "rb") as f:
        head = f.read(16)
        if len(head) != 16:
            raise DataFormatError(f"{path}: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">IIII", head)
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(f"{path}: bad image magic 0x{magic:08x}")
        payload = f.read()
    if len(payload) != count * rows * cols:
        raise DataFormatError(f"{path}: truncated image payload")
    data = np.frombuffer(payload, dtype=np.uint8).astype(float) / 255.0
    return data.reshape(count, rows, cols)


def build_data(cfg, seed):
    """Materialize the configured dataset.

    Returns (train, test) where each side is (X, Y-or-labels) arrays; test
    may be (None, None).
    """
    task = cfg["task"]
    data = cfg.get("data", {})
    source = data.get("source", "superres" if task == "regression"
                      else "synthetic_classes")
    if task == "regression":
        if source != "superres":
            raise ConfigError("regression task requires data.source superres")
        n = data.get("n", 1000)
        n_test = data.get("n_test", 200)
        side = data.get("side", 28)
        sigma = data.get("noise_sigma", 0.05)
        if "images" in data:
            images = _read_idx_images(_resolve_path(data["images"]))
            if len(images) < n + n_test:
                raise ConfigError(
                    f"image file has {len(images)} images, need {n + n_test}"
                )
            if images.shape[1] != side:
                raise ConfigError("data.side does not match the image file")
            images = images[: n + n_test]
        else:
            images = gen_smooth_images(n + n_test, side, seed=seed + 7)
        pairs = gen_superres(images, noise_sigma=sigma, seed=seed)
        xtr, ytr = pairs.X[:n], pairs.Y[:n]
        if n_test > 0:
            return (xtr, ytr), (pairs.X[n:], pairs.Y[n:])
        return (xtr, ytr), (None, None)

    if source == "synthetic_classes":
        n_classes = data.get("n_classes", 10)
        d = data.get("d", 64)
        n_train = data.get("n_train", 5000)
        n_test = data.get("n_test", 2000)
        separation = data.get("separation", 3.0)
        train = gen_synthetic_classes(n_classes, d, n_train, seed=seed,
                                      separation=separation, means_seed=seed)
        test = gen_synthetic_classes(n_classes, d, n_test, seed=seed + 1,
                                     separation=separation, means_seed=seed,
                                     split="test")
        return (train.images, train.labels), (test.images, test.labels)
    if source == "idx":
        for key in ("images", "labels"):
            if key not in data:
                raise ConfigError(f"idx source requires data.{key}")
        train = load_idx(_resolve_path(data["images"]),
                         _resolve_path(data["labels"]))
        if "test_images" in data:
            test = load_idx(_resolve_path(data["test_images"]),
                            _resolve_path(data["test_labels"]),
                            split="test", mean=train.mean)
            return (train.images, train.labels), (test.images, test.labels)
        return (train.images, train.labels), (None, None)
    raise ConfigError(f"unknown data source {source!r}")


def build_model(cfg, seed):
    (xtr, ytr), (xte, yte) = build_data(cfg, seed)
    if cfg["task"] == "regression":
        return LinearRegressionModel(xtr, ytr, xte, yte)
    model_cfg = cfg.get("model", {})
    hidden = model_cfg.get("hidden", [40])
    activation = model_cfg.get("activation", "tanh")
    n_classes = int(max(ytr.max(), 0 if yte is None else yte.max())) + 1
    sizes = [xtr.shape[1]] + list(hidden) + [n_classes]
    try:
        return MlpModel(sizes, xtr, ytr, xte, yte, activation=activation,
                        seed=seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _provenance(cfg, seed):
    return {"library_version": __version__, "seed": seed, "config": cfg}


def _model_checkpoint(model, cfg, seed, quant=None) -> Checkpoint:
    return Checkpoint(
        task=model.task,
        weights=[w.copy() for w in model.weights],
        biases=[b.copy() for b in model.biases],
        activation=getattr(model, "activation", None),
        quant=quant,
        meta=_provenance(cfg, seed),
    )


def _per_layer_quant(result, model) -> list[QuantParams]:
    """Split a run's group QuantParams into per-layer entries for storage."""
    if result.scheme.scope == "per_layer":
        return list(result.params)
    # global scope: one codebook, assignments sliced per layer
    params = result.params[0]
    out = []
    for s in model.layer_slices():
        out.append(QuantParams(params.codebook,
                               type(params.assignments)(params.assignments.kappa[s]),
                               degenerate=params.degenerate))
    return out


def _apply_checkpoint(model, ckpt):
    if ckpt.task != model.task:
        raise ConfigError(
            f"checkpoint task {ckpt.task!r} does not match config task {model.task!r}"
        )
    if ckpt.layer_shapes != [tuple(w.shape) for w in model.weights]:
        raise ConfigError(
            f"checkpoint layout {ckpt.layer_shapes} does not match "
            f"the configured model {[tuple(w.shape) for w in model.weights]}"
        )
    for w, b, cw, cb_ in zip(model.weights, model.biases, ckpt.weights,
                             ckpt.biases):
        w[...] = cw
        b[...] = cb_


def _print_metrics(label, model):
    parts = [f"loss_train={model.loss_train():.6g}"]
    lt = model.loss_test()
    if lt is not None:
        parts.append(f"loss_test={lt:.6g}")
    et = model.error_train()
    if et is not None:
        parts.append(f"err_train={100 * et:.2f}%")
    ee = model.error_test()
    if ee is not None:
        parts.append(f"err_test={100 * ee:.2f}%")
    print(f"{label}: " + " ".join(parts))


def _out_dir(cfg, args) -> Path:
    out = getattr(args, "out", None) or cfg.get("out") or "lcquant-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    out = _out_dir(cfg, args)
    model = build_model(cfg, seed)
    sgd, ref_epochs = sgd_from_config(cfg, seed)
    if model.task == "regression":
        model.train_reference()
    else:
        ref_cfg = SgdConfig(lr0=sgd.lr0, lr_decay=sgd.lr_decay,
                            momentum=sgd.momentum,
                            momentum_type=sgd.momentum_type,
                            batch_size=sgd.batch_size, epochs=ref_epochs,
                            seed=seed)
        model.train_reference(cfg=ref_cfg, rng=np.random.default_rng(seed))
    _print_metrics("reference", model)
    path = out / "reference.ckpt"
    save_checkpoint(path, _model_checkpoint(model, cfg, seed))
    print(f"saved {path}")
    return EXIT_OK


def cmd_compress(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    out = _out_dir(cfg, args)
    model = build_model(cfg, seed)
    ckpt = load_checkpoint(args.checkpoint)
    _apply_checkpoint(model, ckpt)
    scheme = scheme_from_config(cfg, args)
    schedule = schedule_from_config(cfg, args)
    sgd, _ = sgd_from_config(cfg, seed)
    lstep_cfg = None if model.task == "regression" else sgd

    if args.method == "dc":
        result = dc_run(model, scheme, seed=seed)
        model.set_weight_vector(result.weights)
    elif args.method == "idc":
        result = idc_run(model, scheme, schedule.max_outer_iters,
                         lstep_cfg=lstep_cfg, seed=seed)
    else:
        result = lc_run(model, scheme, schedule, lstep_cfg=lstep_cfg,
                        seed=seed)
        if not result.converged:
            print("warning: tolerance not reached; reporting best iterate",
                  file=sys.stderr)

    stats = compression_stats(model.n_weights, model.n_biases,
                              scheme.codebook_size)
    _print_metrics(args.method, model)
    print(f"compression: K={stats.k} rho={stats.rho:.1f} "
          f"({stats.bits_reference} -> {stats.bits_quantized} bits)")

    quant = _per_layer_quant(result, model)
    save_checkpoint(out / "quantized.ckpt",
                    _model_checkpoint(model, cfg, seed, quant=quant))
    result.trace.to_csv(out / "trace.csv")
    result.trace.to_json(out / "trace.json",
                         extra={"method": args.method,
                                "provenance": _provenance(cfg, seed)})
    with open(out / "stats.json", "w") as f:
        json.dump({
            "method": args.method,
            "converged": result.converged,
            "stats": stats.__dict__,
            "provenance": _provenance(cfg, seed),
        }, f, indent=1)
    print(f"saved {out / 'quantized.ckpt'}, trace.csv, trace.json, stats.json")
    return EXIT_OK


def _load_flat_weights(path) -> tuple[np.ndarray, str]:
    path = Path(path)
    try:
        if path.suffix == ".npy":
            w = np.load(path)
            fmt = "npy"
        else:
            w = np.loadtxt(path)
            fmt = "txt"
    except OSError as exc:
        raise DataFormatError(f"cannot read weights {path}: {exc}") from exc
    except ValueError as exc:
        raise DataFormatError(f"cannot parse weights {path}: {exc}") from exc
    w = np.asarray(w, dtype=float).ravel()
    if w.size == 0:
        raise DataFormatError(f"{path}: no weights found")
    return w, fmt


def cmd_quantize(args) -> int:
    cfg = load_config(args.config) if args.config else {"scheme": {}}
    scheme = scheme_from_config(cfg, args)
    w, fmt = _load_flat_weights(args.weights)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    params, _ = quantize_vector(w, scheme, rng=np.random.default_rng(seed))
    values = decompress(params)
    distortion = float(np.sum((w - values) ** 2))
    stats = compression_stats(w.size, 0, scheme.codebook_size)
    out = Path(args.out) if args.out else Path(args.weights).with_suffix(
        ".quantized" + (".npy" if fmt == "npy" else ".txt"))
    if fmt == "npy":
        np.save(out, values)
    else:
        np.savetxt(out, values)
    sidecar = out.with_suffix(out.suffix + ".json")
    with open(sidecar, "w") as f:
        json.dump({
            "scheme": scheme.kind,
            "codebook": [float(c) for c in params.codebook.entries],
            "scale": params.codebook.scale,
            "distortion": distortion,
            "stats": stats.__dict__,
            "library_version": __version__,
            "seed": seed,
        }, f, indent=1)
    print(f"quantized {w.size} weights: distortion={distortion:.6g} "
          f"K={stats.k} rho={stats.rho:.1f}")
    print(f"saved {out} and {sidecar}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if cfg["task"] != "mlp_classify":
        raise ConfigError("sweep requires task mlp_classify")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    out = _out_dir(cfg, args)
    section = cfg.get("sweep", {})
    if "hidden_sizes" not in section or "log2_ks" not in section:
        raise ConfigError("sweep requires sweep.hidden_sizes and sweep.log2_ks")
    data = cfg.get("data", {})
    sgd, ref_epochs = sgd_from_config(cfg, seed)
    sweep_cfg = SweepConfig(
        hidden_sizes=section["hidden_sizes"],
        log2_ks=section["log2_ks"],
        include_reference=section.get("include_reference", True),
        n_classes=data.get("n_classes", 10),
        d=data.get("d", 32),
        n_train=data.get("n_train", 2000),
        n_test=data.get("n_test", 1000),
        separation=data.get("separation", 2.2),
        activation=cfg.get("model", {}).get("activation", "tanh"),
        reference_epochs=ref_epochs,
        sgd=sgd,
        schedule=schedule_from_config(cfg, args),
        seed=seed,
    )
    cells = run_sweep(
        sweep_cfg,
        progress=lambda c: print(
            f"  H={c.hidden} log2K={c.log2_k} loss={c.loss:.4f} "
            f"size={c.size_bits}b", flush=True),
    )
    sweep_path = out / "sweep.csv"
    with open(sweep_path, "w") as f:
        f.write("hidden,log2_k,loss,err_train,err_test,size_bits,converged\n")
        for c in cells:
            f.write(",".join([
                str(c.hidden),
                "" if c.log2_k is None else str(c.log2_k),
                repr(c.loss),
                "" if c.err_train is None else repr(c.err_train),
                "" if c.err_test is None else repr(c.err_test),
                str(c.size_bits),
                str(c.converged),
            ]) + "\n")
    selections = {}
    for target in section.get("loss_targets", []):
        best = select_operating_point(cells, target)
        selections[str(target)] = None if best is None else {
            "hidden": best.hidden, "log2_k": best.log2_k,
            "loss": best.loss, "size_bits": best.size_bits,
        }
        label = "none" if best is None else (
            f"H={best.hidden} log2K={best.log2_k} size={best.size_bits}b")
        print(f"target loss <= {target}: {label}")
    with open(out / "selection.json", "w") as f:
        json.dump({"selections": selections,
                   "provenance": _provenance(cfg, seed)}, f, indent=1)
    print(f"saved {sweep_path} and selection.json")
    return EXIT_OK


def cmd_report(args) -> int:
    run = Path(args.run)
    found = False
    stats_path = run / "stats.json"
    if stats_path.exists():
        found = True
        with open(stats_path) as f:
            doc = json.load(f)
        s = doc["stats"]
        print(f"method={doc['method']} converged={doc['converged']} "
              f"K={s['k']} rho={s['rho']:.2f}")
    trace_path = run / "trace.json"
    if trace_path.exists():
        found = True
        from .lc import Trace

        trace = Trace.from_json(trace_path)
        print(f"{'iter':>4} {'mu':>12} {'loss_train':>12} {'loss_test':>12} "
              f"{'violation':>12} {'km_iters':>8}")
        for r in trace.rows:
            lt = "" if r.loss_test is None else f"{r.loss_test:12.6g}"
            print(f"{r.outer_iter:>4} {r.mu:12.4g} {r.loss_train:12.6g} "
                  f"{lt:>12} {r.constraint_violation:12.4g} "
                  f"{r.kmeans_iters:>8}")
    sweep_path = run / "sweep.csv"
    if sweep_path.exists():
        found = True
        with open(sweep_path) as f:
            print(f.read().rstrip())
    if not found:
        raise DataFormatError(f"no run outputs found under {run}")
    return EXIT_OK


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        digest.update(f.read())
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lcquant",
        description="Train, quantize, and compress small models via "
                    "alternating learning/compression.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("train", help="train and save a reference model")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compress", help="compress a reference checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--method", choices=("dc", "idc", "lc"), default="lc")
    p.add_argument("--scheme", choices=("adaptive", "fixed", "binary",
                                        "binary_scale", "ternary",
                                        "ternary_scale", "pow2"))
    p.add_argument("--K", type=int, help="adaptive codebook size")
    p.add_argument("--c-exp", dest="c_exp", type=int,
                   help="powers-of-two max exponent")
    p.add_argument("--mu0", type=float)
    p.add_argument("--growth", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--tolerance", type=float)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("quantize", help="quantize a flat weight file")
    common(p, config_required=False)
    p.add_argument("--weights", required=True,
                   help="flat weights (.npy or whitespace text)")
    p.add_argument("--scheme", choices=("adaptive", "fixed", "binary",
                                        "binary_scale", "ternary",
                                        "ternary_scale", "pow2"))
    p.add_argument("--K", type=int)
    p.add_argument("--c-exp", dest="c_exp", type=int)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("sweep", help="grid over width and codebook bits")
    common(p)
    p.add_argument("--mu0", type=float)
    p.add_argument("--growth", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--tolerance", type=float)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
