"""Experiment orchestration: recovery sweeps over (n, m, k, p, epsilon),
backdoor poisoning runs, deterministic seeding, and CSV emission.

Determinism contract: every random draw is made from a generator seeded by
a stable hash of (master seed, role, cell coordinates, trial index), so a
run with a fixed master seed produces identical rows at any worker count;
rows are merged in (cell, trial) order and wallclock_ms is the only
non-reproducible column.
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .contamination import (
    BackdoorSpec, NoiseSpec, apply_trigger, contaminate, parse_dist, poison_dataset,
)
from .datasets import Dataset, filter_classes, load_cifar10, load_idx, synth_class_clusters, synth_gaussian
from .diagnostics import accuracy, attack_success_rate, err_W, err_beta
from .model import (
    CnnParams, LossKind, Regime, TrainConfig, init_params, predict, save_model, train,
    train_two_phase,
)
from .patching import validate_config
from .purification import RepairOrigin, RepairSet, purified_params, purify

SCHEMA = "purifynet.v1"

CSV_COLUMNS = [
    "experiment_id", "trial_seed", "regime", "n", "m", "k", "p", "C",
    "epsilon", "poison_ratio", "gamma", "t_max", "err_W", "err_beta",
    "acc_clean_before", "acc_clean_after", "asr_before", "asr_after",
    "n_repair", "repair_origin", "wallclock_ms", "error",
]


class HarnessError(RuntimeError):
    pass


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 63-bit seed from the master seed and a role/coordinate path."""
    text = "|".join(str(p) for p in (master_seed,) + parts)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass
class SweepResult:
    """One CSV row; empty-string fields serialize as blanks."""

    experiment_id: str
    trial_seed: int
    regime: str = ""
    n: int | str = ""
    m: int | str = ""
    k: int | str = ""
    p: int | str = ""
    C: int | str = ""
    epsilon: float | str = ""
    poison_ratio: float | str = ""
    gamma: float | str = ""
    t_max: int | str = ""
    err_W: float | str = ""
    err_beta: float | str = ""
    acc_clean_before: float | str = ""
    acc_clean_after: float | str = ""
    asr_before: float | str = ""
    asr_after: float | str = ""
    n_repair: int | str = ""
    repair_origin: str = ""
    wallclock_ms: int = 0
    error: str = ""

    def row(self) -> list:
        def fmt(v):
            if isinstance(v, float):
                return repr(v)
            return str(v)
        d = asdict(self)
        return [fmt(d[c]) for c in CSV_COLUMNS]


def write_csv(path, results: list[SweepResult]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in results:
            writer.writerow(r.row())


def read_csv(path) -> list[dict]:
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# schema={SCHEMA}":
            raise HarnessError(f"{path}: missing schema marker, got {first!r}")
        return list(csv.DictReader(fh))


_AGG_FIELDS = ["err_W", "err_beta", "acc_clean_before", "acc_clean_after",
               "asr_before", "asr_after"]


def write_aggregate(path, results: list[SweepResult]) -> None:
    """Per-cell medians, quartiles, and means over trials."""
    cells: dict[str, list[SweepResult]] = {}
    for r in results:
        cells.setdefault(r.experiment_id, []).append(r)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA}-aggregate\n")
        writer = csv.writer(fh)
        head = ["experiment_id", "regime", "n", "m", "k", "p", "C", "epsilon",
                "poison_ratio", "n_repair", "repair_origin", "trials"]
        for f in _AGG_FIELDS:
            head += [f"{f}_median", f"{f}_q1", f"{f}_q3", f"{f}_mean"]
        writer.writerow(head)
        for eid, rows in cells.items():
            r0 = rows[0]
            out = [eid, r0.regime, r0.n, r0.m, r0.k, r0.p, r0.C, r0.epsilon,
                   r0.poison_ratio, r0.n_repair, r0.repair_origin, len(rows)]
            for f in _AGG_FIELDS:
                vals = [getattr(r, f) for r in rows if getattr(r, f) != ""]
                if vals:
                    q1, med, q3 = np.percentile(vals, [25, 50, 75])
                    out += [repr(float(med)), repr(float(q1)), repr(float(q3)),
                            repr(float(np.mean(vals)))]
                else:
                    out += ["", "", "", ""]
            writer.writerow(out)


# ---------------------------------------------------------------------------
# recovery sweep


@dataclass(frozen=True)
class RecoveryCell:
    n: int
    m: int
    k: int
    p: int
    epsilon: float
    regime: Regime
    gamma: float
    t_max: int
    dist: str = "normal:1:1"

    def train_key(self) -> str:
        # everything that determines the trained model (noise excluded)
        return f"n{self.n}-m{self.m}-k{self.k}-p{self.p}-{self.regime.value}" \
               f"-g{self.gamma!r}-t{self.t_max}"

    def experiment_id(self, experiment: str) -> str:
        return f"{experiment}/{self.train_key()}-eps{self.epsilon!r}"


def default_gamma(m: int, n: int) -> float:
    """Largest step size with m * n * gamma = 0.1."""
    return 0.1 / (m * n)


def build_recovery_grid(n, m, k, p, epsilon, regime, gamma=None, t_max=1000,
                        dist="normal:1:1"):
    """Cartesian product of the listed axes into RecoveryCells."""
    as_list = lambda v: list(v) if isinstance(v, (list, tuple)) else [v]
    cells = []
    for nn, mm, kk, pp, rr in itertools.product(
            as_list(n), as_list(m), as_list(k), as_list(p), as_list(regime)):
        g = gamma if gamma is not None else default_gamma(mm, nn)
        for eps in as_list(epsilon):
            cells.append(RecoveryCell(n=nn, m=mm, k=kk, p=pp, epsilon=float(eps),
                                      regime=Regime(rr), gamma=g, t_max=int(t_max),
                                      dist=str(dist)))
    return cells


def _train_recovery_model(cell: RecoveryCell, trial: int, master_seed: int):
    """Teacher-labeled synthetic data and the trained model for one trial."""
    key = cell.train_key()
    cfg = validate_config(cell.m * cell.k, cell.m, cell.k)
    data_seed = derive_seed(master_seed, "data", key, trial)
    teacher_seed = derive_seed(master_seed, "teacher", key, trial)
    init_seed = derive_seed(master_seed, "init", key, trial)

    ds = synth_gaussian(cfg.d, cell.n, seed=data_seed)
    teacher = init_params(cfg, p=cell.p, seed=teacher_seed)
    y = np.sign(predict(teacher, ds.X)[0])        # bounded targets, |y| <= 1
    params = init_params(cfg, p=cell.p, seed=init_seed)
    tc = TrainConfig(gamma=cell.gamma, t_max=cell.t_max, regime=cell.regime,
                     stop_loss=1e-8)
    if cell.regime == Regime.FROZEN_HIDDEN:
        trained = train_two_phase(params, ds.X, y, tc)
    else:
        trained = train(params, ds.X, y, tc)
    return trained, ds.X, y


def run_recovery_sweep(cells: list[RecoveryCell], trials: int, master_seed: int,
                       experiment: str = "recovery", threads: int = 1,
                       out_dir=None, keep_artifacts: bool = False) -> list[SweepResult]:
    """One SweepResult per cell x trial; cells sharing a trained model reuse it."""
    if not cells or trials < 1:
        raise HarnessError("need a nonempty grid and trials >= 1")

    groups: dict[str, list[RecoveryCell]] = {}
    for c in cells:
        groups.setdefault(c.train_key(), []).append(c)
    jobs = [(key, group, trial) for key, group in groups.items()
            for trial in range(trials)]

    def run_job(job):
        key, group, trial = job
        rows = {}
        try:
            trained, X, y = _train_recovery_model(group[0], trial, master_seed)
        except Exception as exc:   # per-trial failures recorded, run continues
            for cell in group:
                rows[(cell, trial)] = SweepResult(
                    experiment_id=cell.experiment_id(experiment),
                    trial_seed=derive_seed(master_seed, "trial", key, trial),
                    error=f"train: {exc}")
            return rows
        for cell in group:
            t_cell = time.monotonic()
            res = SweepResult(
                experiment_id=cell.experiment_id(experiment),
                trial_seed=derive_seed(master_seed, "trial", key, trial),
                regime=cell.regime.value, n=cell.n, m=cell.m, k=cell.k,
                p=cell.p, C=1, epsilon=cell.epsilon, gamma=cell.gamma,
                t_max=cell.t_max, n_repair=cell.n,
                repair_origin=RepairOrigin.FROM_TRAINING.value)
            try:
                noise_seed = derive_seed(master_seed, "noise", key, trial,
                                         repr(cell.epsilon))
                spec = NoiseSpec(epsilon=cell.epsilon, dist=parse_dist(cell.dist),
                                 seed=noise_seed)
                contaminated, _ = contaminate(trained, spec)
                report = purify(contaminated, RepairSet(X=X), cell.regime)
                res.err_W = err_W(report.W_tilde, trained.W)
                res.err_beta = err_beta(report.beta_tilde, trained.beta)
                if keep_artifacts and out_dir is not None:
                    _save_artifacts(out_dir, cell.experiment_id(experiment), trial,
                                    trained, contaminated,
                                    purified_params(contaminated, report), X, y)
            except Exception as exc:
                res.error = f"purify: {exc}"
            res.wallclock_ms = int(1000 * (time.monotonic() - t_cell))
            rows[(cell, trial)] = res
        return rows

    merged: dict = {}
    if threads <= 1:
        for job in jobs:
            merged.update(run_job(job))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for out in pool.map(run_job, jobs):
                merged.update(out)

    results = [merged[(cell, trial)] for cell in cells for trial in range(trials)]
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "results.csv"), results)
        write_aggregate(os.path.join(out_dir, "aggregate.csv"), results)
    return results


def _save_artifacts(out_dir, experiment_id, trial, trained, contaminated,
                    purified, X, y):
    safe = experiment_id.replace("/", "_")
    path = os.path.join(out_dir, "artifacts", safe, f"trial{trial}")
    os.makedirs(path, exist_ok=True)
    save_model(os.path.join(path, "trained.json"), trained)
    save_model(os.path.join(path, "contaminated.json"), contaminated)
    save_model(os.path.join(path, "purified.json"), purified)
    np.savez(os.path.join(path, "data.npz"), X=X, y=y)


# ---------------------------------------------------------------------------
# backdoor pipeline


@dataclass
class BackdoorRunConfig:
    dataset: str = "synthetic"            # synthetic | mnist | cifar
    mnist_dir: str | None = None
    cifar_paths: list = field(default_factory=list)
    cifar_test_paths: list = field(default_factory=list)
    classes: list = field(default_factory=lambda: [0, 1, 2])
    n_train: int = 99
    n_test: int = 300
    d: int = 784                          # synthetic fallback input dimension
    synth_spread: float = 0.12            # cluster noise of the fallback data
    synth_center_span: tuple = (0.25, 0.75)   # class-mean range of the fallback data
    synth_dark_prefix: int = 16           # leading dark-border coordinates
    m: int = 2
    p: int = 500
    gamma: float = 2.0
    t_max: int = 800
    trigger_len: int = 5
    trigger_value: float = 1.0            # bright mark: dark-border pixels carry no signal
    target_class: int = 0
    poison_ratio: list = field(default_factory=lambda: [0.3])
    n_repair: list = field(default_factory=lambda: [99])
    repair_origin: list = field(default_factory=lambda: ["training"])
    trials: int = 5

    def cells(self):
        as_list = lambda v: list(v) if isinstance(v, (list, tuple)) else [v]
        return [
            {"poison_ratio": float(r), "n_repair": int(nr), "repair_origin": str(ro)}
            for r, nr, ro in itertools.product(
                as_list(self.poison_ratio), as_list(self.n_repair),
                as_list(self.repair_origin))
        ]


def _backdoor_pools(cfg: BackdoorRunConfig, trial: int, master_seed: int):
    """(train pool, test set, external repair pool) of 3-class data."""
    C = len(cfg.classes)
    seed = derive_seed(master_seed, "bd-data", cfg.dataset, trial)
    if cfg.dataset == "mnist":
        if not cfg.mnist_dir:
            raise HarnessError("mnist dataset requested but mnist_dir not set")
        tr = load_idx(os.path.join(cfg.mnist_dir, "train-images-idx3-ubyte"),
                      os.path.join(cfg.mnist_dir, "train-labels-idx1-ubyte"))
        te = load_idx(os.path.join(cfg.mnist_dir, "t10k-images-idx3-ubyte"),
                      os.path.join(cfg.mnist_dir, "t10k-labels-idx1-ubyte"))
        pool = filter_classes(tr, cfg.classes, cfg.n_train + cfg.n_train, seed=seed)
        test = filter_classes(te, cfg.classes, cfg.n_test, seed=seed + 1)
    elif cfg.dataset == "cifar":
        if not cfg.cifar_paths:
            raise HarnessError("cifar dataset requested but cifar_paths not set")
        tr = load_cifar10(cfg.cifar_paths, grayscale=True)
        te = load_cifar10(cfg.cifar_test_paths or cfg.cifar_paths, grayscale=True)
        pool = filter_classes(tr, cfg.classes, cfg.n_train + cfg.n_train, seed=seed)
        test = filter_classes(te, cfg.classes, cfg.n_test, seed=seed + 1)
    elif cfg.dataset == "synthetic":
        means_seed = derive_seed(master_seed, "bd-means", trial)
        span = tuple(cfg.synth_center_span)
        train_part = synth_class_clusters(cfg.d, C, cfg.n_train, seed=seed,
                                          spread=cfg.synth_spread, means_seed=means_seed,
                                          center_span=span,
                                          dark_prefix=cfg.synth_dark_prefix)
        extra_part = synth_class_clusters(cfg.d, C, cfg.n_train, seed=seed + 1,
                                          spread=cfg.synth_spread, means_seed=means_seed,
                                          center_span=span,
                                          dark_prefix=cfg.synth_dark_prefix)
        pool = Dataset(X=np.concatenate([train_part.X, extra_part.X], axis=1),
                       labels=np.concatenate([train_part.labels, extra_part.labels]),
                       meta=train_part.meta)
        test = synth_class_clusters(cfg.d, C, cfg.n_test, seed=seed + 2,
                                    spread=cfg.synth_spread, means_seed=means_seed,
                                    center_span=span,
                                    dark_prefix=cfg.synth_dark_prefix)
    else:
        raise HarnessError(f"unknown dataset {cfg.dataset!r}")
    train = Dataset(X=pool.X[:, : cfg.n_train], labels=pool.labels[: cfg.n_train],
                    meta=pool.meta)
    external = Dataset(X=pool.X[:, cfg.n_train:], labels=pool.labels[cfg.n_train:],
                       meta=pool.meta)
    return train, test, external


def run_backdoor(cfg: BackdoorRunConfig, master_seed: int,
                 experiment: str = "backdoor", threads: int = 1,
                 out_dir=None, keep_artifacts: bool = False) -> list[SweepResult]:
    """Poison -> train -> measure -> purify -> measure, per cell x trial."""
    C = len(cfg.classes)
    if cfg.d % cfg.m != 0:
        raise HarnessError(f"input dimension {cfg.d} not divisible into {cfg.m} patches")
    cells = cfg.cells()
    ratios = sorted({c["poison_ratio"] for c in cells})
    jobs = [(ratio, trial) for ratio in ratios for trial in range(cfg.trials)]

    def run_job(job):
        ratio, trial = job
        rows = {}
        train_ds, test_ds, external_ds = _backdoor_pools(cfg, trial, master_seed)
        d = train_ds.d
        pcfg = validate_config(d, cfg.m, d // cfg.m)
        bspec = BackdoorSpec(trigger_len=cfg.trigger_len, trigger_value=cfg.trigger_value,
                             target_class=cfg.target_class, poison_ratio=ratio)
        poison_seed = derive_seed(master_seed, "bd-poison", trial, repr(ratio))
        Xp, yp, _ = poison_dataset(train_ds.X, train_ds.labels, bspec, seed=poison_seed)
        init_seed = derive_seed(master_seed, "bd-init", trial)
        params = init_params(pcfg, p=cfg.p, C=C, seed=init_seed)
        tc = TrainConfig(gamma=cfg.gamma, t_max=cfg.t_max,
                         loss_kind=LossKind.SOFTMAX_CE, regime=Regime.JOINT)
        trained = train(params, Xp, yp, tc)
        acc_before = accuracy(trained, test_ds.X, test_ds.labels)
        nontarget = test_ds.labels != cfg.target_class
        stamped = apply_trigger(test_ds.X[:, nontarget], bspec)
        asr_before = attack_success_rate(trained, stamped, cfg.target_class)

        for cell in cells:
            if cell["poison_ratio"] != ratio:
                continue
            t_cell = time.monotonic()
            res = SweepResult(
                experiment_id=f"{experiment}/ratio{ratio!r}-rep{cell['n_repair']}"
                              f"-{cell['repair_origin']}",
                trial_seed=derive_seed(master_seed, "bd-trial", trial, repr(ratio)),
                regime=Regime.JOINT.value, n=cfg.n_train, m=cfg.m,
                k=d // cfg.m, p=cfg.p, C=C, poison_ratio=ratio,
                gamma=cfg.gamma, t_max=cfg.t_max,
                acc_clean_before=acc_before, asr_before=asr_before,
                n_repair=cell["n_repair"], repair_origin=cell["repair_origin"])
            try:
                nr = cell["n_repair"]
                repair_seed = derive_seed(master_seed, "bd-repair", trial, repr(ratio),
                                          nr, cell["repair_origin"])
                rng = np.random.default_rng(repair_seed)
                if cell["repair_origin"] == RepairOrigin.FROM_TRAINING.value:
                    take = rng.choice(train_ds.n, size=nr, replace=False)
                    # clean originals of the training points, not the stamped copies
                    repair = RepairSet(X=train_ds.X[:, take],
                                       origin=RepairOrigin.FROM_TRAINING)
                else:
                    take = rng.choice(external_ds.n, size=nr, replace=False)
                    repair = RepairSet(X=external_ds.X[:, take],
                                       origin=RepairOrigin.EXTERNAL)
                report = purify(trained, repair, Regime.JOINT)
                fixed = purified_params(trained, report)
                res.acc_clean_after = accuracy(fixed, test_ds.X, test_ds.labels)
                res.asr_after = attack_success_rate(fixed, stamped, cfg.target_class)
                if keep_artifacts and out_dir is not None:
                    safe = res.experiment_id.replace("/", "_")
                    path = os.path.join(out_dir, "artifacts", safe, f"trial{trial}")
                    os.makedirs(path, exist_ok=True)
                    save_model(os.path.join(path, "trained.json"), trained)
                    save_model(os.path.join(path, "purified.json"), fixed)
                    np.savez(os.path.join(path, "eval.npz"),
                             X_test=test_ds.X, labels_test=test_ds.labels,
                             X_stamped=stamped, target_class=cfg.target_class)
            except Exception as exc:
                res.error = f"purify: {exc}"
            res.wallclock_ms = int(1000 * (time.monotonic() - t_cell))
            rows[(cell["poison_ratio"], cell["n_repair"], cell["repair_origin"],
                  trial)] = res
        return rows

    merged: dict = {}
    if threads <= 1:
        for job in jobs:
            merged.update(run_job(job))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for out in pool.map(run_job, jobs):
                merged.update(out)

    results = [merged[(c["poison_ratio"], c["n_repair"], c["repair_origin"], t)]
               for c in cells for t in range(cfg.trials)]
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "results.csv"), results)
        write_aggregate(os.path.join(out_dir, "aggregate.csv"), results)
    return results


# ---------------------------------------------------------------------------
# config files: flat key = value (TOML grammar), CLI flags override


def load_config(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def merge_config(config: dict, overrides: dict) -> dict:
    out = dict(config)
    for key, val in overrides.items():
        if val is not None:
            out[key] = val
    return out
