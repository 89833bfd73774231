"""Desk-scale scenario presets mirroring the four headline experiment arms:
plain FedAvg, federated adversarial training, replacement with a known
non-robust model, and replacement with an extracted model."""

import os

from .adversary import AruConfig
from .aggregation import AggregationRule
from .attacks import PgdConfig
from .harness import DatasetConfig, ExperimentConfig, run_and_save
from .training import LocalTrainConfig

PRESET_NAMES = ("fedavg", "fat", "aru-known", "aru-extract")

DEFAULT_ROUNDS = 60
DEFAULT_CLIENTS = 40
DEFAULT_ADVERSARIES = 5


def _base_config(seed, rounds, n_clients, defense):
    pgd = PgdConfig(epsilon=0.15, alpha=0.0375, iterations=10, random_start=True)
    return ExperimentConfig(
        seed=seed,
        dataset=DatasetConfig(kind="synth", classes=10, dim=32, per_class=400, spread=0.08),
        n_clients=n_clients,
        rounds=rounds,
        hidden=(64,),
        dirichlet_alpha=0.4,
        test_fraction=0.2,
        client_mode="standard",
        local=LocalTrainConfig(epochs=1, batch_size=32, lr=0.5, mode="standard", pgd=pgd),
        defense=defense or AggregationRule("fedavg"),
        eval_pgd=pgd,
        eval_every=10,
    )


def _richest_clients(cfg, n):
    """Ids of the n clients holding the most training data.

    Data-rich adversaries need less boosting (their aggregation weight is
    larger), which keeps the crafted updates closer to the benign spread.
    """
    import numpy as np

    from .harness import _client_batches, build_dataset

    dataset = build_dataset(cfg)
    train_sets, _ = _client_batches(cfg, dataset)
    sizes = np.array([len(b) for b in train_sets])
    return [int(i) for i in np.argsort(-sizes)[:n]]


def build_preset(name, seed=0, rounds=DEFAULT_ROUNDS, n_clients=DEFAULT_CLIENTS,
                 n_adversaries=DEFAULT_ADVERSARIES, defense=None, checkpoint=""):
    """Build the configuration for one named scenario.

    aru-known needs a non-robust checkpoint (train the fedavg arm first);
    run_preset handles that chaining automatically.
    """
    cfg = _base_config(seed, rounds, n_clients, defense)
    if name == "fedavg":
        return cfg
    cfg.client_mode = "fat"
    cfg.local.mode = "adversarial_mix"
    if name == "fat":
        return cfg
    if name == "aru-known":
        cfg.aru = AruConfig(
            adversary_ids=[0],
            mode="replace_known",
            checkpoint=checkpoint,
            attack_round=rounds,
            knowledge="near_convergence",
        )
        return cfg
    if name == "aru-extract":
        if n_adversaries > n_clients:
            raise ValueError("more adversaries than clients")
        # short window late in the schedule: extraction begins once the
        # global model is near convergence, as the replacement algebra assumes
        extract_rounds = min(20, rounds - 1)
        cfg.aru = AruConfig(
            adversary_ids=_richest_clients(cfg, n_adversaries),
            mode="extract",
            attack_round=rounds,
            knowledge="near_convergence",
            extract_rounds=extract_rounds,
            # wider relabeling ball than the evaluation attack: the mislabeled
            # points land off the clean manifold, so robustness is forgotten
            # long before clean accuracy degrades
            relabel_pgd=PgdConfig(epsilon=0.25, alpha=0.0625, iterations=10, random_start=True),
            extract_lr=0.02,
            extract_epochs=1,
        )
        return cfg
    raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")


def run_preset(name, out_dir, seed=0, rounds=DEFAULT_ROUNDS, n_clients=DEFAULT_CLIENTS,
               n_adversaries=DEFAULT_ADVERSARIES, defense=None):
    """Run a preset end to end, chaining the fedavg arm when a non-robust
    checkpoint target is needed."""
    checkpoint = ""
    if name == "aru-known":
        donor_dir = os.path.join(out_dir, "fedavg-target")
        donor_cfg = build_preset("fedavg", seed=seed, rounds=rounds, n_clients=n_clients)
        run_and_save(donor_cfg, donor_dir)
        checkpoint = os.path.join(donor_dir, "final.ckpt")
    cfg = build_preset(
        name, seed=seed, rounds=rounds, n_clients=n_clients,
        n_adversaries=n_adversaries, defense=defense, checkpoint=checkpoint,
    )
    return run_and_save(cfg, out_dir)
