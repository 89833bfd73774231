"""Experiment orchestration: config parsing, the federated round loop,
metrics recording, and checkpoint/CSV output.

All randomness flows from the experiment seed through named substreams, so
a run is fully reproducible and independent of the worker-pool size.
"""

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .adversary import AruConfig, AruCoalition
from .aggregation import (
    AggregationRule,
    ClientUpdate,
    aggregate,
    inclusion_stats,
)
from .attacks import PgdConfig
from .errors import ConfigError
from .model import (
    MlpModel,
    flatten,
    init_model,
    save_checkpoint,
    unflatten,
)
from .training import LocalTrainConfig, evaluate, local_train

# substream tags for seed derivation
_DATA, _PART, _SPLIT, _INIT, _TRAIN, _EVAL, _ARU = range(1, 8)

CSV_HEADER = (
    "round,test_acc_mean,test_acc_std,adv_acc_mean,adv_acc_std,"
    "adv_inclusion,benign_inclusion,wall_ms"
)


@dataclass
class DatasetConfig:
    kind: str = "synth"  # "synth" | "idx"
    classes: int = 10
    dim: int = 32
    per_class: int = 400
    spread: float = 0.08
    images: str = ""
    labels: str = ""

    def to_dict(self):
        if self.kind == "idx":
            return {"kind": "idx", "images": self.images, "labels": self.labels}
        return {
            "kind": "synth",
            "classes": self.classes,
            "dim": self.dim,
            "per_class": self.per_class,
            "spread": self.spread,
        }


@dataclass
class ExperimentConfig:
    seed: int = 0
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    n_clients: int = 40
    rounds: int = 60
    hidden: tuple = (64,)
    dirichlet_alpha: float = 0.4
    test_fraction: float = 0.2
    client_mode: str = "standard"  # "standard" | "fat"
    local: LocalTrainConfig = field(default_factory=LocalTrainConfig)
    defense: AggregationRule = field(default_factory=lambda: AggregationRule("fedavg"))
    aru: AruConfig | None = None
    eval_pgd: PgdConfig = field(default_factory=PgdConfig)
    eval_every: int = 10

    def __post_init__(self):
        if self.n_clients < 1:
            raise ConfigError("n_clients: must be >= 1")
        if self.rounds < 0:
            raise ConfigError("rounds: must be >= 0")
        if self.eval_every < 1:
            raise ConfigError("eval_every: must be >= 1")
        if self.client_mode not in ("standard", "fat"):
            raise ConfigError(f"client_mode: unknown mode {self.client_mode!r}")
        if self.aru is not None:
            bad = [i for i in self.aru.adversary_ids if not 0 <= i < self.n_clients]
            if bad:
                raise ConfigError(f"aru.adversary_ids: ids {bad} outside 0..{self.n_clients - 1}")
            if self.aru.attack_round > self.rounds:
                raise ConfigError("aru.attack_round: beyond the schedule")

    def to_dict(self):
        d = {
            "seed": self.seed,
            "dataset": self.dataset.to_dict(),
            "n_clients": self.n_clients,
            "rounds": self.rounds,
            "hidden": list(self.hidden),
            "dirichlet_alpha": self.dirichlet_alpha,
            "test_fraction": self.test_fraction,
            "client_mode": self.client_mode,
            "local": {
                "epochs": self.local.epochs,
                "batch_size": self.local.batch_size,
                "lr": self.local.lr,
                "mode": self.local.mode,
                "adv_fraction": self.local.adv_fraction,
                "pgd": self.local.pgd.to_dict(),
            },
            "defense": self.defense.to_dict(),
            "eval_pgd": self.eval_pgd.to_dict(),
            "eval_every": self.eval_every,
        }
        if self.aru is not None:
            a = {
                "adversary_ids": list(self.aru.adversary_ids),
                "mode": self.aru.mode,
                "attack_round": self.aru.attack_round,
                "knowledge": self.aru.knowledge,
            }
            if self.aru.mode == "replace_known":
                a["checkpoint"] = self.aru.checkpoint
            else:
                a.update(
                    extract_rounds=self.aru.extract_rounds,
                    relabel_pgd=self.aru.relabel_pgd.to_dict(),
                    extract_lr=self.aru.extract_lr,
                    extract_epochs=self.aru.extract_epochs,
                )
            d["aru"] = a
        return d

    @classmethod
    def from_dict(cls, d):
        def take(mapping, key, path, default=None, required=False):
            if key not in mapping:
                if required:
                    raise ConfigError(f"{path}: missing required field")
                return default
            return mapping[key]

        def build(path, fn):
            try:
                return fn()
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}: {exc}")

        try:
            ds = take(d, "dataset", "dataset", {})
            dataset = build("dataset", lambda: DatasetConfig(
                kind=take(ds, "kind", "dataset.kind", "synth"),
                classes=take(ds, "classes", "dataset.classes", 10),
                dim=take(ds, "dim", "dataset.dim", 32),
                per_class=take(ds, "per_class", "dataset.per_class", 400),
                spread=take(ds, "spread", "dataset.spread", 0.08),
                images=take(ds, "images", "dataset.images", ""),
                labels=take(ds, "labels", "dataset.labels", ""),
            ))
            lc = take(d, "local", "local", {})
            local = build("local", lambda: LocalTrainConfig(
                epochs=take(lc, "epochs", "local.epochs", 1),
                batch_size=take(lc, "batch_size", "local.batch_size", 32),
                lr=take(lc, "lr", "local.lr", 0.1),
                mode=take(lc, "mode", "local.mode", "standard"),
                adv_fraction=take(lc, "adv_fraction", "local.adv_fraction", 0.5),
                pgd=build("local.pgd", lambda: PgdConfig.from_dict(take(lc, "pgd", "local.pgd", {}))),
            ))
            df = take(d, "defense", "defense", {"kind": "fedavg"})
            defense = build("defense", lambda: AggregationRule(
                kind=take(df, "kind", "defense.kind", "fedavg"),
                beta=take(df, "beta", "defense.beta", 0.15),
            ))
            aru = None
            if d.get("aru") is not None:
                a = d["aru"]
                aru = build("aru", lambda: AruConfig(
                    adversary_ids=take(a, "adversary_ids", "aru.adversary_ids", required=True),
                    mode=take(a, "mode", "aru.mode", "extract"),
                    attack_round=take(a, "attack_round", "aru.attack_round", required=True),
                    knowledge=take(a, "knowledge", "aru.knowledge", "near_convergence"),
                    checkpoint=take(a, "checkpoint", "aru.checkpoint", ""),
                    extract_rounds=take(a, "extract_rounds", "aru.extract_rounds", 50),
                    relabel_pgd=PgdConfig.from_dict(take(a, "relabel_pgd", "aru.relabel_pgd", {})),
                    extract_lr=take(a, "extract_lr", "aru.extract_lr", 0.1),
                    extract_epochs=take(a, "extract_epochs", "aru.extract_epochs", 1),
                ))
            return cls(
                seed=take(d, "seed", "seed", 0),
                dataset=dataset,
                n_clients=take(d, "n_clients", "n_clients", 40),
                rounds=take(d, "rounds", "rounds", 60),
                hidden=tuple(take(d, "hidden", "hidden", [64])),
                dirichlet_alpha=take(d, "dirichlet_alpha", "dirichlet_alpha", 0.4),
                test_fraction=take(d, "test_fraction", "test_fraction", 0.2),
                client_mode=take(d, "client_mode", "client_mode", "standard"),
                local=local,
                defense=defense,
                aru=aru,
                eval_pgd=build("eval_pgd", lambda: PgdConfig.from_dict(take(d, "eval_pgd", "eval_pgd", {}))),
                eval_every=take(d, "eval_every", "eval_every", 10),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc))

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass
class RoundMetrics:
    round: int
    test_acc_mean: float
    test_acc_std: float
    adv_acc_mean: float
    adv_acc_std: float
    adv_inclusion: float | None
    benign_inclusion: float | None
    wall_ms: float


@dataclass
class RunResult:
    config: ExperimentConfig
    metrics: list
    final_model: MlpModel
    extracted_model: MlpModel | None = None


def _worker_count():
    raw = os.environ.get("FEDARENA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"FEDARENA_THREADS: not an integer: {raw!r}")


def build_dataset(cfg):
    ds = cfg.dataset
    if ds.kind == "synth":
        return data_mod.synth_blobs(
            ds.classes, ds.dim, ds.per_class, ds.spread, seed=[cfg.seed, _DATA]
        )
    if ds.kind == "idx":
        return data_mod.load_idx(ds.images, ds.labels)
    raise ConfigError(f"dataset.kind: unknown kind {ds.kind!r}")


def _client_batches(cfg, dataset):
    part = data_mod.dirichlet_partition(
        dataset, cfg.n_clients, cfg.dirichlet_alpha, seed=[cfg.seed, _PART]
    )
    train, test = [], []
    for cid, idx in enumerate(part.client_indices):
        tr, te = data_mod.train_test_split(idx, cfg.test_fraction, seed=[cfg.seed, _SPLIT, cid])
        train.append(dataset.subset(tr))
        test.append(dataset.subset(te if len(te) else tr))
    return train, test


def _local_config(cfg):
    if cfg.client_mode == "fat":
        lc = cfg.local
        mode = lc.mode if lc.mode != "standard" else "adversarial_mix"
        return LocalTrainConfig(
            epochs=lc.epochs, batch_size=lc.batch_size, lr=lc.lr,
            mode=mode, pgd=lc.pgd, adv_fraction=lc.adv_fraction,
        )
    return LocalTrainConfig(
        epochs=cfg.local.epochs, batch_size=cfg.local.batch_size,
        lr=cfg.local.lr, mode="standard",
    )


def _evaluate_round(cfg, global_model, test_sets, round_idx):
    accs, advs = [], []
    for cid, tb in enumerate(test_sets):
        a, r = evaluate(global_model, tb, cfg.eval_pgd,
                        rng_seed=[cfg.seed, _EVAL, round_idx, cid])
        accs.append(a)
        advs.append(r)
    return (
        float(np.mean(accs)), float(np.std(accs)),
        float(np.mean(advs)), float(np.std(advs)),
    )


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Run the full federated schedule and return per-eval-round metrics."""
    dataset = build_dataset(cfg)
    train_sets, test_sets = _client_batches(cfg, dataset)
    sizes = np.array([len(b) for b in train_sets], dtype=np.float64)
    weights = sizes / sizes.sum()

    layer_sizes = (dataset.inputs.shape[1], *cfg.hidden, dataset.class_count)
    global_model = init_model(layer_sizes, seed=[cfg.seed, _INIT])
    local_cfg = _local_config(cfg)

    coalition = None
    if cfg.aru is not None:
        pooled = _pool_batches([train_sets[i] for i in cfg.aru.adversary_ids])
        coalition = AruCoalition(cfg.aru, pooled, seed=cfg.seed)

    metrics = []
    t0 = time.perf_counter()

    def record(round_idx, incl):
        ta_m, ta_s, aa_m, aa_s = _evaluate_round(cfg, global_model, test_sets, round_idx)
        metrics.append(RoundMetrics(
            round=round_idx,
            test_acc_mean=ta_m, test_acc_std=ta_s,
            adv_acc_mean=aa_m, adv_acc_std=aa_s,
            adv_inclusion=incl.adversary_inclusion if incl else None,
            benign_inclusion=incl.benign_inclusion if incl else None,
            wall_ms=(time.perf_counter() - t0) * 1000.0,
        ))

    record(0, None)

    workers = _worker_count()
    adversary_ids = set(cfg.aru.adversary_ids) if cfg.aru else set()

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for r in range(1, cfg.rounds + 1):
            if coalition is not None:
                coalition.observe_round(r, global_model)

            def train_one(cid):
                return local_train(
                    global_model, train_sets[cid], local_cfg,
                    rng_seed=[cfg.seed, _TRAIN, r, cid],
                )
            trained = list(pool.map(train_one, range(cfg.n_clients)))

            updates = [
                ClientUpdate(
                    client_id=cid,
                    params=flatten(m),
                    weight=float(weights[cid]),
                    is_adversary=cid in adversary_ids,
                )
                for cid, m in enumerate(trained)
            ]

            if coalition is not None and coalition.is_attack_round(r):
                g = flatten(global_model)
                target = coalition.target_params(global_model)
                benign = [u for u in updates if not u.is_adversary]
                crafted = coalition.craft_updates(
                    g, target,
                    {cid: float(weights[cid]) for cid in adversary_ids},
                    benign_updates=benign if cfg.aru.knowledge == "full" else None,
                )
                for u in updates:
                    if u.client_id in crafted:
                        u.params = crafted[u.client_id]

            new_global = aggregate(flatten(global_model), updates, cfg.defense)
            global_model = unflatten(new_global.layout, new_global.values)

            if r % cfg.eval_every == 0 or r == cfg.rounds:
                incl = None
                if cfg.defense.kind in ("trimmed_mean", "median") and adversary_ids:
                    incl = inclusion_stats(new_global, updates, cfg.defense)
                record(r, incl)

    extracted = coalition.extracted if coalition is not None else None
    return RunResult(cfg, metrics, global_model, extracted)


def _pool_batches(batches):
    from .model import Batch

    return Batch(
        np.concatenate([b.inputs for b in batches]),
        np.concatenate([b.labels for b in batches]),
    )


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_metrics_csv(metrics, path):
    with open(path, "w") as f:
        f.write(CSV_HEADER + "\n")
        for m in metrics:
            f.write(",".join([
                str(m.round),
                _fmt(m.test_acc_mean), _fmt(m.test_acc_std),
                _fmt(m.adv_acc_mean), _fmt(m.adv_acc_std),
                _fmt(m.adv_inclusion), _fmt(m.benign_inclusion),
                _fmt(m.wall_ms),
            ]) + "\n")


def write_manifest(cfg, path):
    from .backends import BACKEND_NAME

    with open(path, "w") as f:
        json.dump({"config": cfg.to_dict(), "backend": BACKEND_NAME}, f, indent=2)
        f.write("\n")


def run_and_save(cfg, out_dir):
    """Run an experiment and write metrics, manifest, and final checkpoint."""
    os.makedirs(out_dir, exist_ok=True)
    result = run_experiment(cfg)
    write_metrics_csv(result.metrics, os.path.join(out_dir, "metrics.csv"))
    write_manifest(cfg, os.path.join(out_dir, "manifest.json"))
    save_checkpoint(result.final_model, os.path.join(out_dir, "final.ckpt"))
    if result.extracted_model is not None:
        save_checkpoint(result.extracted_model, os.path.join(out_dir, "extracted.ckpt"))
    return result
