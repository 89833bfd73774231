"""White-box untargeted evasion via projected gradient descent.

Each step ascends the sign of the input gradient of the true-label loss,
then projects back into the l-inf ball around the original input and
clamps to the valid input range.
"""

from dataclasses import dataclass

import numpy as np

from .backends import mlp_loss_grads
from .errors import NumericError
from .model import Batch, predict


@dataclass
class PgdConfig:
    epsilon: float = 0.1  # l-inf budget
    alpha: float = 0.025  # step size
    iterations: int = 10
    random_start: bool = True
    input_bounds: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "iterations": self.iterations,
            "random_start": self.random_start,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class AdvBatch:
    original: Batch
    perturbed_inputs: np.ndarray
    labels: np.ndarray


def pgd_attack(model, batch, cfg, rng_seed=0):
    """Craft adversarial inputs for every example in the batch.

    With random_start the perturbation is initialized uniformly in the
    ball, scaled by epsilon so that runs with the same seed but different
    budgets explore nested balls.
    """
    lo, hi = cfg.input_bounds
    x0 = batch.inputs
    labels = batch.labels

    if cfg.random_start:
        rng = np.random.default_rng(rng_seed)
        delta = cfg.epsilon * rng.uniform(-1.0, 1.0, size=x0.shape)
        x = np.clip(x0 + delta, lo, hi)
    else:
        x = x0.copy()

    for _ in range(cfg.iterations):
        _, _, _, gx = mlp_loss_grads(x, labels, model.weights, model.biases)
        gx = np.asarray(gx)
        if not np.isfinite(gx).all():
            raise NumericError("non-finite input gradient during PGD")
        x = x + cfg.alpha * np.sign(gx)
        x = np.clip(x, x0 - cfg.epsilon, x0 + cfg.epsilon)
        x = np.clip(x, lo, hi)

    return AdvBatch(original=batch, perturbed_inputs=x, labels=labels)


def robust_accuracy(model, batch, cfg, rng_seed=0):
    """Fraction of examples still classified correctly after the attack."""
    adv = pgd_attack(model, batch, cfg, rng_seed)
    return float(np.mean(predict(model, adv.perturbed_inputs) == adv.labels))
