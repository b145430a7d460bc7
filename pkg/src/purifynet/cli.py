"""Command-line interface.

Subcommands: train, contaminate, purify, sweep, backdoor, conditions, bounds.
Every flag can also be supplied through --config (flat `key = value` file,
strings quoted, # comments); explicit flags override file values.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .contamination import NoiseSpec, contaminate, parse_dist
from .datasets import load_idx, synth_gaussian
from .diagnostics import estimate_conditions, r_beta_bound, r_w_bound
from .harness import (
    BackdoorRunConfig, build_recovery_grid, default_gamma, load_config,
    run_backdoor, run_recovery_sweep, write_csv,
)
from .model import (
    LossKind, Regime, TrainConfig, init_params, load_model, predict, save_model,
    train, train_two_phase,
)
from .patching import validate_config
from .purification import RepairSet, build_design_W, build_design_beta, purified_params, purify


def _regime(text: str) -> Regime:
    alias = {"frozen": Regime.FROZEN_HIDDEN, "frozen_hidden": Regime.FROZEN_HIDDEN,
             "joint": Regime.JOINT}
    try:
        return alias[text.lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"unknown regime {text!r}") from None


def _common_flags(sub):
    sub.add_argument("--seed", type=int, default=None, help="master RNG seed")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--config", default=None, help="flat key = value config file")
    sub.add_argument("--threads", type=int, default=None, help="worker threads")
    sub.add_argument("--format", choices=("csv", "json"), default=None,
                     help="stdout format for table-like output")


def _settings(args, defaults: dict) -> dict:
    """Config-file values under CLI-flag overrides under defaults."""
    merged = dict(defaults)
    if args.config:
        merged.update(load_config(args.config))
    for key in list(merged):
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    for key in ("seed", "out", "threads", "format"):
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
        merged.setdefault(key, {"seed": 0, "threads": 1, "format": "csv",
                                "out": None}[key])
    return merged


def _emit(doc: dict, fmt: str, out_path=None):
    if fmt == "json":
        text = json.dumps(doc, indent=2)
    else:
        text = "\n".join(f"{k},{v}" for k, v in doc.items())
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _load_repair(path) -> np.ndarray:
    if str(path).endswith(".idx") or "ubyte" in str(path):
        return load_idx(path).X
    if str(path).endswith(".npz"):
        return np.load(path)["X"]
    if str(path).endswith(".npy"):
        return np.load(path)
    raise ValueError(f"unsupported repair file {path!r} (use .idx, .npy, or .npz)")


# ---------------------------------------------------------------------------
# subcommands


def cmd_bounds(args) -> int:
    s = _settings(args, {"m": None, "n": None, "p": None, "k": None})
    for key in ("m", "n", "p"):
        if s[key] is None:
            print(f"bounds: missing --{key}", file=sys.stderr)
            return 2
    doc = {"r_beta": round(r_beta_bound(s["m"], s["n"], s["p"]), 4)}
    if s["k"] is not None:
        doc["r_w"] = round(r_w_bound(s["m"], s["n"], s["p"], s["k"]), 4)
    _emit(doc, s["format"])
    return 0


def cmd_conditions(args) -> int:
    s = _settings(args, {"m": 5, "n": 5, "k": 500, "p": 500, "design": "W",
                         "num_directions": 200, "model": None, "repair": None})
    if s["model"] and s["repair"]:
        params = load_model(s["model"])
        repair = RepairSet(X=_load_repair(s["repair"]))
        if s["design"] == "W":
            A = build_design_W(repair, params.cfg)
        else:
            A = build_design_beta(repair, params.W0, params.cfg)
    else:
        cfg = validate_config(s["m"] * s["k"], s["m"], s["k"])
        ds = synth_gaussian(cfg.d, s["n"], seed=s["seed"])
        repair = RepairSet(X=ds.X)
        if s["design"] == "W":
            A = build_design_W(repair, cfg)
        else:
            W0 = init_params(cfg, p=s["p"], seed=s["seed"] + 1).W0
            A = build_design_beta(repair, W0, cfg)
    est = estimate_conditions(A, num_directions=s["num_directions"], seed=s["seed"])
    _emit({
        "design": s["design"], "rows": est.matrix_shape[0], "cols": est.matrix_shape[1],
        "lambda_lower_hat": est.lambda_lower_hat,
        "lambda_upper_hat": est.lambda_upper_hat,
        "sigma2_hat": est.sigma2_hat,
        "num_directions": est.num_directions,
    }, s["format"])
    return 0


def cmd_train(args) -> int:
    s = _settings(args, {
        "n": 5, "m": 5, "k": 100, "p": 500, "C": 1, "regime": "joint",
        "gamma": None, "t_max": 1000, "loss": "squared_error",
        "images": None, "labels": None, "model_out": "model.json",
    })
    cfg = validate_config(s["m"] * s["k"], s["m"], s["k"])
    gamma = s["gamma"] if s["gamma"] is not None else default_gamma(s["m"], s["n"])
    regime = _regime(str(s["regime"]))
    if s["images"]:
        ds = load_idx(s["images"], s["labels"])
        X, y = ds.X[:, : s["n"]], ds.labels[: s["n"]]
        kind = LossKind.SOFTMAX_CE
    else:
        ds = synth_gaussian(cfg.d, s["n"], seed=s["seed"])
        teacher = init_params(cfg, p=s["p"], C=1, seed=s["seed"] + 1)
        X, y = ds.X, np.sign(predict(teacher, ds.X)[0])
        kind = LossKind.SQUARED_ERROR
    params = init_params(cfg, p=s["p"], C=s["C"], seed=s["seed"] + 2)
    tc = TrainConfig(gamma=gamma, t_max=s["t_max"], regime=regime, loss_kind=kind)
    trained = (train_two_phase if regime == Regime.FROZEN_HIDDEN else train)(
        params, X, y, tc)
    save_model(s["model_out"], trained)
    print(f"wrote {s['model_out']}")
    return 0


def cmd_contaminate(args) -> int:
    s = _settings(args, {"model": None, "epsilon": 0.1, "dist": "normal:1:1",
                         "model_out": "contaminated.json", "mask_out": None})
    if not s["model"]:
        print("contaminate: missing --model", file=sys.stderr)
        return 2
    params = load_model(s["model"])
    spec = NoiseSpec(epsilon=float(s["epsilon"]), dist=parse_dist(s["dist"]),
                     seed=s["seed"])
    noisy, masks = contaminate(params, spec)
    save_model(s["model_out"], noisy)
    if s["mask_out"]:
        with open(s["mask_out"], "w") as fh:
            json.dump({k: v.astype(int).tolist() for k, v in masks.items()}, fh)
    print(f"wrote {s['model_out']}")
    return 0


def cmd_purify(args) -> int:
    s = _settings(args, {"model": None, "repair": None, "regime": "joint",
                         "model_out": "purified.json", "report": "report.json"})
    if not s["model"] or not s["repair"]:
        print("purify: missing --model or --repair", file=sys.stderr)
        return 2
    params = load_model(s["model"])
    repair = RepairSet(X=_load_repair(s["repair"]))
    report = purify(params, repair, _regime(str(s["regime"])))
    save_model(s["model_out"], purified_params(params, report))
    with open(s["report"], "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
    print(f"wrote {s['model_out']} and {s['report']}")
    return 0


def cmd_sweep(args) -> int:
    s = _settings(args, {
        "experiment": "recovery", "n": 5, "m": 5, "k": 100, "p": 500,
        "epsilon": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        "regime": "frozen_hidden", "trials": 20, "gamma": None, "t_max": 1000,
        "dist": "normal:1:1", "keep_artifacts": False,
    })
    regimes = s["regime"] if isinstance(s["regime"], list) else [s["regime"]]
    cells = build_recovery_grid(
        n=s["n"], m=s["m"], k=s["k"], p=s["p"], epsilon=s["epsilon"],
        regime=[_regime(str(r)) for r in regimes],
        gamma=s["gamma"], t_max=s["t_max"], dist=s["dist"])
    out_dir = s["out"] or "."
    results = run_recovery_sweep(
        cells, trials=int(s["trials"]), master_seed=int(s["seed"]),
        experiment=s["experiment"], threads=int(s["threads"]), out_dir=out_dir,
        keep_artifacts=bool(s["keep_artifacts"]))
    if s["format"] == "json":
        with open(os.path.join(out_dir, "results.json"), "w") as fh:
            json.dump([r.row() for r in results], fh)
    failures = sum(1 for r in results if r.error)
    print(f"wrote {out_dir}/results.csv ({len(results)} rows, {failures} failed trials)")
    return 0


def cmd_backdoor(args) -> int:
    s = _settings(args, {
        "experiment": "backdoor", "dataset": "synthetic", "mnist_dir": None,
        "keep_artifacts": False,
        "cifar_paths": [], "cifar_test_paths": [], "classes": [0, 1, 2],
        "n_train": 99, "n_test": 300, "d": 784, "m": 2, "p": 500,
        "gamma": 2.0, "t_max": 800, "trigger_len": 5, "trigger_value": 0.0,
        "target_class": 0, "poison_ratio": [0.3], "n_repair": [99],
        "repair_origin": ["training"], "trials": 5,
    })
    cfg = BackdoorRunConfig(
        dataset=s["dataset"], mnist_dir=s["mnist_dir"],
        cifar_paths=list(s["cifar_paths"]), cifar_test_paths=list(s["cifar_test_paths"]),
        classes=list(s["classes"]), n_train=int(s["n_train"]), n_test=int(s["n_test"]),
        d=int(s["d"]), m=int(s["m"]), p=int(s["p"]), gamma=float(s["gamma"]),
        t_max=int(s["t_max"]), trigger_len=int(s["trigger_len"]),
        trigger_value=float(s["trigger_value"]), target_class=int(s["target_class"]),
        poison_ratio=s["poison_ratio"], n_repair=s["n_repair"],
        repair_origin=s["repair_origin"], trials=int(s["trials"]))
    out_dir = s["out"] or "."
    results = run_backdoor(cfg, master_seed=int(s["seed"]),
                           experiment=s["experiment"], threads=int(s["threads"]),
                           out_dir=out_dir, keep_artifacts=bool(s["keep_artifacts"]))
    failures = sum(1 for r in results if r.error)
    print(f"wrote {out_dir}/results.csv ({len(results)} rows, {failures} failed trials)")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="purifynet",
        description="Train, contaminate, and purify patch ReLU networks.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("train", help="train a model and write a PNJ1 file")
    for flag, typ in [("--n", int), ("--m", int), ("--k", int), ("--p", int),
                      ("--C", int), ("--gamma", float), ("--t-max", int)]:
        sub.add_argument(flag, dest=flag.lstrip("-").replace("-", "_"), type=typ)
    sub.add_argument("--regime", default=None)
    sub.add_argument("--images", default=None)
    sub.add_argument("--labels", default=None)
    sub.add_argument("--model-out", dest="model_out", default=None)
    _common_flags(sub)
    sub.set_defaults(func=cmd_train)

    sub = subs.add_parser("contaminate", help="add parameter noise to a model file")
    sub.add_argument("--model", default=None)
    sub.add_argument("--epsilon", type=float, default=None)
    sub.add_argument("--dist", default=None, help="normal:m:s | const:c | uniform:a:b")
    sub.add_argument("--model-out", dest="model_out", default=None)
    sub.add_argument("--mask-out", dest="mask_out", default=None)
    _common_flags(sub)
    sub.set_defaults(func=cmd_contaminate)

    sub = subs.add_parser("purify", help="purify a contaminated model file")
    sub.add_argument("--model", default=None)
    sub.add_argument("--repair", default=None, help="repair inputs (.idx/.npy/.npz)")
    sub.add_argument("--regime", default=None)
    sub.add_argument("--model-out", dest="model_out", default=None)
    sub.add_argument("--report", default=None)
    _common_flags(sub)
    sub.set_defaults(func=cmd_purify)

    sub = subs.add_parser("sweep", help="recovery-error sweep over a config grid")
    sub.add_argument("--experiment", default=None)
    sub.add_argument("--trials", type=int, default=None)
    sub.add_argument("--keep-artifacts", dest="keep_artifacts",
                     action="store_const", const=True, default=None)
    _common_flags(sub)
    sub.set_defaults(func=cmd_sweep)

    sub = subs.add_parser("backdoor", help="backdoor poisoning and mitigation run")
    sub.add_argument("--experiment", default=None)
    sub.add_argument("--keep-artifacts", dest="keep_artifacts",
                     action="store_const", const=True, default=None)
    sub.add_argument("--dataset", default=None, choices=(None, "synthetic", "mnist", "cifar"))
    sub.add_argument("--mnist-dir", dest="mnist_dir", default=None)
    sub.add_argument("--trials", type=int, default=None)
    _common_flags(sub)
    sub.set_defaults(func=cmd_backdoor)

    sub = subs.add_parser("conditions", help="sampled design-condition estimates")
    for flag in ("--m", "--n", "--k", "--p", "--num-directions"):
        sub.add_argument(flag, dest=flag.lstrip("-").replace("-", "_"), type=int)
    sub.add_argument("--design", choices=("W", "beta"), default=None)
    sub.add_argument("--model", default=None)
    sub.add_argument("--repair", default=None)
    _common_flags(sub)
    sub.set_defaults(func=cmd_conditions)

    sub = subs.add_parser("bounds", help="closed-form deviation radii")
    for flag in ("--m", "--n", "--p", "--k"):
        sub.add_argument(flag, dest=flag.lstrip("-"), type=int)
    _common_flags(sub)
    sub.set_defaults(func=cmd_bounds)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"purifynet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
