"""Command-line interface.

Exit codes: 0 success, 2 input/parse error, 3 numerical failure,
4 verification above threshold, 5 singular kernel system.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import io as sio
from .diagnostics import diagnostic_report
from .errors import (
    AlphaOutOfRange,
    IncompatibleItems,
    InvalidGraph,
    InvalidSheaf,
    NonPositiveVariance,
    ShapeMismatch,
    SheafNtkError,
    SingularDegreeBlock,
    SingularSystem,
)
from .kernel_machine import (
    KernelConfig,
    LabeledDataset,
    RidgeModel,
    assemble_gram,
    classify,
    cross_gram,
    fit,
    lambda_sweep,
    loo_accuracy,
    predict,
)
from .ntk import kernel_matrix, ntk_exact, ntk_full, relative_frobenius, sigma_recursion
from .scn import ScnConfig, empirical_ntk
from .sheaf import diffusion_operator, laplacian_of

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_VERIFY, EXIT_SINGULAR = 0, 2, 3, 4, 5

TASK_KERNEL = {"ntk": "full", "linear_ntk": "linear", "simple_gcn": "simple_gcn"}


@dataclass
class RunConfig:
    command: str = ""
    task: str = ""
    sheaf: Optional[str] = None
    features: Optional[str] = None
    sheaf2: Optional[str] = None
    features2: Optional[str] = None
    header: bool = False
    manifest: Optional[str] = None
    model: Optional[str] = None
    layers: int = 2
    activation: str = "relu"
    kernel: str = "full"
    diffusion: str = "normalized"
    alpha: Optional[float] = None
    reduce: str = "graph_sum"
    lam: float = 0.0
    lambda_scale: str = "absolute"
    lambdas: list = field(default_factory=lambda: [1e-3, 1e-2, 1e-1, 1.0])
    loo: bool = False
    predictions: Optional[str] = None
    seed: int = 0
    widths: list = field(default_factory=lambda: [64, 512, 4096])
    samples: int = 32
    threshold: float = 0.05
    reference: str = "full"
    max_steps: int = 30
    max_cheeger_nodes: int = 24
    curve_csv: Optional[str] = None
    output: Optional[str] = None
    format: str = "csv"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _csv_list(cast):
    def parse(text: str):
        try:
            return [cast(t) for t in text.split(",") if t.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _common(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON file of option values; flags override it")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--output", default=S)
    p.add_argument("--format", choices=["csv", "json", "bin"], default=S)
    p.add_argument("--print-config", action="store_true", default=S, dest="print_config")


def _kernel_opts(p):
    S = argparse.SUPPRESS
    p.add_argument("--layers", type=int, default=S)
    p.add_argument("--activation", choices=["relu", "identity"], default=S)
    p.add_argument("--diffusion", choices=["normalized", "alpha_scaled"], default=S)
    p.add_argument("--alpha", type=float, default=S)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="sheafntk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ntk", help="analytic tangent kernel between one or two sheaf signals")
    _common(p)
    _kernel_opts(p)
    p.add_argument("--sheaf", default=S)
    p.add_argument("--features", default=S)
    p.add_argument("--sheaf2", default=S)
    p.add_argument("--features2", default=S)
    p.add_argument("--header", action="store_true", default=S)
    p.add_argument("--task", choices=sorted(TASK_KERNEL), default=S)
    p.add_argument("--kernel", choices=["full", "linear", "simple_gcn", "exact"], default=S)

    p = sub.add_parser("verify", help="compare the Monte Carlo empirical kernel with an analytic one")
    _common(p)
    _kernel_opts(p)
    p.add_argument("--sheaf", default=S)
    p.add_argument("--features", default=S)
    p.add_argument("--header", action="store_true", default=S)
    p.add_argument("--widths", type=_csv_list(int), default=S)
    p.add_argument("--samples", type=int, default=S)
    p.add_argument("--threshold", type=float, default=S)
    p.add_argument("--reference", choices=["full", "exact"], default=S)

    p = sub.add_parser("diagnose", help="graph diagnostics report (Cheeger constants, oversmoothing curve)")
    _common(p)
    _kernel_opts(p)
    p.add_argument("--sheaf", default=S)
    p.add_argument("--features", default=S)
    p.add_argument("--header", action="store_true", default=S)
    p.add_argument("--max-steps", type=int, default=S, dest="max_steps")
    p.add_argument("--max-cheeger-nodes", type=int, default=S, dest="max_cheeger_nodes")
    p.add_argument("--curve-csv", default=S, dest="curve_csv")

    for name, help_ in (
        ("gram", "Gram matrix over a dataset manifest"),
        ("fit", "fit kernel ridge regression on a manifest"),
        ("predict", "predict with a fitted model"),
        ("sweep", "leave-one-out accuracy over a lambda grid"),
    ):
        p = sub.add_parser(name, help=help_)
        _common(p)
        _kernel_opts(p)
        p.add_argument("--manifest", default=S)
        p.add_argument("--kernel", choices=["full", "linear", "simple_gcn", "exact"], default=S)
        if name in ("fit", "sweep"):
            p.add_argument("--lambda-scale", choices=["absolute", "trace"], default=S, dest="lambda_scale",
                           help="'trace' multiplies lambda by mean(diag K)")
        if name == "fit":
            p.add_argument("--lambda", type=float, default=S, dest="lam")
            p.add_argument("--loo", action="store_true", default=S)
            p.add_argument("--predictions", default=S)
        if name == "predict":
            p.add_argument("--model", default=S)
        if name == "sweep":
            p.add_argument("--lambdas", type=_csv_list(float), default=S)
    return parser


def resolve_config(argv: Optional[list[str]] = None) -> tuple[RunConfig, bool]:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    print_config = bool(args.pop("print_config", False))
    merged: dict[str, Any] = {}
    if "config" in args:
        path = args.pop("config")
        try:
            loaded = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise CliError(f"config file not found: {path}", EXIT_PARSE) from None
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}: invalid JSON ({exc})", EXIT_PARSE) from None
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(loaded) - known)
        if unknown:
            raise CliError(f"{path}: unknown config keys {unknown}", EXIT_PARSE)
        merged.update(loaded)
    merged.update(args)
    cfg = RunConfig(**merged)
    if command == "ntk":
        if "kernel" not in args and "task" in merged and merged["task"] in TASK_KERNEL:
            cfg.kernel = TASK_KERNEL[merged["task"]]
        cfg.task = cfg.task or "ntk"
    elif command == "fit":
        cfg.task = "fit_predict"
    elif command == "diagnose":
        cfg.task = "diagnose"
    else:
        cfg.task = command
    cfg.command = command
    return cfg, print_config


# -- helpers -------------------------------------------------------------------

def _need(cfg: RunConfig, *names: str):
    missing = [n for n in names if getattr(cfg, n) in (None, "")]
    if missing:
        raise CliError(f"missing required option(s): {', '.join('--' + m for m in missing)}", EXIT_PARSE)


def _load_pair(sheaf_path, feature_path, header):
    sheaf = sio.load_sheaf(sheaf_path)
    X = sio.load_features(feature_path, header, sheaf.size)
    return sheaf, X


def _operator(sheaf, cfg: RunConfig):
    return diffusion_operator(laplacian_of(sheaf), cfg.diffusion, alpha=cfg.alpha)


def _kernel_config(cfg: RunConfig) -> KernelConfig:
    return KernelConfig(cfg.layers, cfg.activation, cfg.kernel, cfg.diffusion, cfg.alpha)


def _write_matrix(M, cfg: RunConfig):
    if cfg.output:
        sio.write_matrix(M, cfg.output, cfg.format)


def _emit(text: str, path: Optional[str]):
    if path:
        sio.atomic_write_text(path, text)
    else:
        sys.stdout.write(text)


# -- commands --------------------------------------------------------------------

def cmd_ntk(cfg: RunConfig) -> int:
    _need(cfg, "sheaf", "features")
    a = _load_pair(cfg.sheaf, cfg.features, cfg.header)
    if cfg.sheaf2 or cfg.features2:
        _need(cfg, "sheaf2", "features2")
        b = _load_pair(cfg.sheaf2, cfg.features2, cfg.header)
    else:
        b = a
    (sa, xa), (sb, xb) = a, b
    if sa.stalk_dim != sb.stalk_dim or sa.graph.num_nodes != sb.graph.num_nodes:
        raise CliError("both sheaves must share node count and stalk dimension", EXIT_PARSE)
    theta = kernel_matrix(cfg.kernel, _operator(sa, cfg), _operator(sb, cfg), xa, xb, cfg.layers, cfg.activation)
    _write_matrix(theta, cfg)
    lines = [f"kernel={cfg.kernel} layers={cfg.layers} activation={cfg.activation}",
             f"shape={theta.shape[0]}x{theta.shape[1]}"]
    if b is a:
        w = np.linalg.eigvalsh(0.5 * (theta + theta.T))
        lines.append(f"min_eigenvalue={w[0]:.17e} max_eigenvalue={w[-1]:.17e}")
        lines.append(f"psd_ok={bool(w[0] >= -1e-8 * max(abs(w[-1]), 1e-300))}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    _need(cfg, "sheaf", "features")
    sheaf, X = _load_pair(cfg.sheaf, cfg.features, cfg.header)
    op = _operator(sheaf, cfg)
    if cfg.reference == "exact":
        ref = ntk_exact(op, op, X, X, cfg.layers, cfg.activation).theta
    else:
        ref = ntk_full(op, op, X, X, cfg.layers, cfg.activation).theta
    rows = []
    for w in cfg.widths:
        conf = ScnConfig.for_kernel(X.shape[1], int(w), cfg.layers, cfg.activation)
        emp = empirical_ntk(conf, op, op, X, X, cfg.samples, cfg.seed)
        err = relative_frobenius(emp, ref)
        rows.append({"width": int(w), "samples": cfg.samples, "relative_error": err})
        print(f"width={w} samples={cfg.samples} relative_frobenius_error={err:.6e}")
    final = rows[-1]["relative_error"]
    passed = final < cfg.threshold
    print(f"reference={cfg.reference} threshold={cfg.threshold} final_error={final:.6e} "
          f"{'PASS' if passed else 'FAIL'}")
    if cfg.output:
        sio.atomic_write_text(cfg.output, sio.dumps_json(
            {"reference": cfg.reference, "threshold": cfg.threshold, "seed": cfg.seed,
             "layers": cfg.layers, "activation": cfg.activation, "errors": rows, "passed": passed}))
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_diagnose(cfg: RunConfig) -> int:
    _need(cfg, "sheaf")
    sheaf = sio.load_sheaf(cfg.sheaf)
    X = sio.load_features(cfg.features, cfg.header, sheaf.size) if cfg.features else None
    lap = laplacian_of(sheaf)
    op = diffusion_operator(lap, cfg.diffusion, alpha=cfg.alpha)
    kernels = None
    if X is not None and cfg.activation == "relu" and cfg.layers >= 1:
        _, kernels = sigma_recursion(op, op, X, X, cfg.layers, "relu")
    report, warnings = diagnostic_report(sheaf.graph, op, lap, X, cfg.max_steps, kernels, cfg.max_cheeger_nodes)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if cfg.curve_csv:
        rows = ["l,dist" + (",signal_dist" if X is not None else "")]
        for rec in report["oversmoothing"]:
            vals = [str(rec["l"]), f"{rec['dist']:.17e}"]
            if X is not None:
                vals.append(f"{rec['signal_dist']:.17e}")
            rows.append(",".join(vals))
        sio.atomic_write_text(cfg.curve_csv, "\n".join(rows) + "\n")
    _emit(sio.dumps_json(report), cfg.output)
    return EXIT_OK


def _dataset(manifest: dict, split: str = "train") -> LabeledDataset:
    if manifest["task"] == "graph":
        return LabeledDataset(manifest["items"], manifest["labels"], ids=manifest["ids"])
    nodes = manifest["train_nodes"] if split == "train" else manifest["test_nodes"]
    labels = manifest["labels"][nodes] if nodes else np.zeros(0)
    return LabeledDataset([(manifest["sheaf"], manifest["features"])], labels, nodes=np.asarray(nodes, int))


def _reduce(manifest) -> str:
    return "node_trace" if manifest["task"] == "node" else "graph_sum"


def _lambda(cfg: RunConfig, K: np.ndarray, lam: float) -> float:
    return lam * float(np.mean(np.diag(K))) if cfg.lambda_scale == "trace" else lam


def cmd_gram(cfg: RunConfig) -> int:
    _need(cfg, "manifest")
    manifest = sio.load_manifest(cfg.manifest)
    gram = assemble_gram(_dataset(manifest), _kernel_config(cfg), _reduce(manifest))
    _write_matrix(gram.entries, cfg)
    w = np.linalg.eigvalsh(gram.entries)
    print(f"gram size={gram.size} min_eigenvalue={w[0]:.17e} max_eigenvalue={w[-1]:.17e}")
    return EXIT_OK


def _predictions_csv(ids, scores) -> str:
    lines = ["id,score,class"]
    lines += [f"{i},{s:.17e},{c}" for i, s, c in zip(ids, scores, classify(scores))]
    return "\n".join(lines) + "\n"


def cmd_fit(cfg: RunConfig) -> int:
    _need(cfg, "manifest")
    manifest = sio.load_manifest(cfg.manifest)
    ds = _dataset(manifest)
    kc = _kernel_config(cfg)
    gram = assemble_gram(ds, kc, _reduce(manifest))
    lam = _lambda(cfg, gram.entries, cfg.lam)
    model = fit(gram, ds.labels, lam)
    scores = gram.entries @ model.alpha
    train_acc = float(np.mean(classify(scores) == np.sign(ds.labels)))
    print(f"fit items={gram.size} lambda={lam:.17e} train_accuracy={train_acc:.6f}"
          + (" (eigenvalue-floored solve)" if model.pseudo_solve else ""))
    summary = {
        "format": "sheafntk-ridge",
        "lambda": lam,
        "alpha": model.alpha.tolist(),
        "train_ids": list(gram.ids),
        "manifest": str(Path(cfg.manifest).resolve()),
        "kernel": asdict(kc),
        "train_accuracy": train_acc,
    }
    if cfg.loo:
        acc = loo_accuracy(gram, ds.labels, lam)
        summary["loo_accuracy"] = acc
        print(f"loo_accuracy={acc:.6f}")
    if cfg.output:
        sio.atomic_write_text(cfg.output, sio.dumps_json(summary))
    if cfg.predictions:
        sio.atomic_write_text(cfg.predictions, _predictions_csv(gram.ids, scores))
    if manifest["task"] == "node" and manifest["test_nodes"] and cfg.predictions is None and cfg.output is None:
        test = _dataset(manifest, "test")
        sys.stdout.write(_predictions_csv(test.ids, predict(model, cross_gram(test, ds, kc))))
    return EXIT_OK


def cmd_predict(cfg: RunConfig) -> int:
    _need(cfg, "model", "manifest")
    try:
        model_data = json.loads(Path(cfg.model).read_text())
    except FileNotFoundError:
        raise sio.InputError(f"file not found: {cfg.model}") from None
    except json.JSONDecodeError as exc:
        raise sio.InputError(f"{cfg.model}: invalid JSON ({exc})") from None
    if model_data.get("format") != "sheafntk-ridge":
        raise sio.InputError(f"{cfg.model}: not a sheafntk model file")
    train_manifest = sio.load_manifest(model_data["manifest"])
    manifest = sio.load_manifest(cfg.manifest)
    kc = KernelConfig(**model_data["kernel"])
    train = _dataset(train_manifest)
    test = _dataset(manifest, "test" if manifest["task"] == "node" else "train")
    model = RidgeModel(np.asarray(model_data["alpha"], float), float(model_data["lambda"]), tuple(model_data["train_ids"]))
    scores = predict(model, cross_gram(test, train, kc))
    _emit(_predictions_csv(test.ids, scores), cfg.output)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    _need(cfg, "manifest")
    manifest = sio.load_manifest(cfg.manifest)
    ds = _dataset(manifest)
    gram = assemble_gram(ds, _kernel_config(cfg), _reduce(manifest))
    lines = ["lambda,loo_accuracy"]
    for lam in cfg.lambdas:
        eff = _lambda(cfg, gram.entries, lam)
        (_, acc), = lambda_sweep(gram, ds.labels, [eff])
        lines.append(f"{lam:.17e},{acc:.17e}")
    _emit("\n".join(lines) + "\n", cfg.output)
    return EXIT_OK


COMMANDS = {
    "ntk": cmd_ntk,
    "verify": cmd_verify,
    "diagnose": cmd_diagnose,
    "gram": cmd_gram,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
}

_PARSE_ERRORS = (sio.InputError, InvalidGraph, InvalidSheaf, ShapeMismatch, IncompatibleItems, AlphaOutOfRange)
_NUMERIC_ERRORS = (NonPositiveVariance, SingularDegreeBlock, np.linalg.LinAlgError, FloatingPointError)


def main(argv: Optional[list[str]] = None) -> int:
    try:
        cfg, print_config = resolve_config(argv)
        if print_config:
            d = {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}
            sys.stdout.write(sio.dumps_json(d))
            return EXIT_OK
        return COMMANDS[cfg.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SingularSystem as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except _PARSE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except _NUMERIC_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SheafNtkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
