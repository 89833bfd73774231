"""Per-client local training: plain SGD or adversarial training.

In adversarial mode every mini-batch is replaced (fully or partially) by
its PGD-perturbed version, crafted against the current local model, before
the SGD step. Mini-batch order is reshuffled each epoch from the client
seed; PGD seeds are derived per step so the shuffle stream is untouched by
the attack and an epsilon-0 adversarial run retraces the standard one.
"""

from dataclasses import dataclass, field

import numpy as np

from .attacks import PgdConfig, pgd_attack, robust_accuracy
from .model import Batch, accuracy, loss_and_grads, sgd_step

MODES = ("standard", "adversarial", "adversarial_mix")


@dataclass
class LocalTrainConfig:
    epochs: int = 1
    batch_size: int = 32
    lr: float = 0.1
    mode: str = "standard"
    pgd: PgdConfig = field(default_factory=PgdConfig)
    adv_fraction: float = 0.5  # only used by adversarial_mix

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs, batch_size must be >= 1 and lr > 0")
        if self.mode not in MODES:
            raise ValueError(f"unknown training mode {self.mode!r}")
        if not 0.0 <= self.adv_fraction <= 1.0:
            raise ValueError("adv_fraction must be in [0, 1]")


def _step_seed(rng_seed, epoch, step):
    base = list(rng_seed) if isinstance(rng_seed, (list, tuple)) else [int(rng_seed) & 0xFFFFFFFF]
    return base + [epoch, step, 0x9E3779B9]


def local_train(model, data: Batch, cfg: LocalTrainConfig, rng_seed=0):
    """Train a copy of the model on this client's data; deterministic per seed."""
    if len(data) == 0:
        raise ValueError("empty client dataset")
    model = model.copy()
    shuffle_rng = np.random.default_rng(rng_seed)
    n = len(data)

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for step, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            mb = Batch(data.inputs[idx], data.labels[idx])
            train_mb = _training_batch(model, mb, cfg, _step_seed(rng_seed, epoch, step))
            _, grads, _ = loss_and_grads(model, train_mb)
            model = sgd_step(model, grads, cfg.lr)
    return model


def _training_batch(model, mb, cfg, pgd_seed):
    if cfg.mode == "standard":
        return mb
    adv = pgd_attack(model, mb, cfg.pgd, pgd_seed)
    if cfg.mode == "adversarial":
        return Batch(adv.perturbed_inputs, mb.labels)
    k = int(round(cfg.adv_fraction * len(mb)))
    mixed = mb.inputs.copy()
    mixed[:k] = adv.perturbed_inputs[:k]
    return Batch(mixed, mb.labels)


def evaluate(model, test_batch: Batch, eval_pgd: PgdConfig, rng_seed=0):
    """Clean accuracy and robust accuracy on a held-out batch."""
    if len(test_batch) == 0:
        raise ValueError("empty test set")
    return (
        accuracy(model, test_batch),
        robust_accuracy(model, test_batch, eval_pgd, rng_seed),
    )
