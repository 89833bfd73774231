"""Model-replacement attacker logic and the extraction procedure.

A coalition of colluding clients either injects a known non-robust model
or first distills one from the robust global model by training it on
PGD-perturbed, deliberately mislabeled data, then boosts the crafted
update(s) so aggregation lands on the target.
"""

from dataclasses import dataclass, field

import numpy as np

from .attacks import PgdConfig, pgd_attack
from .errors import ConfigError, LayoutError
from .model import Batch, ParamVector, flatten, forward, load_checkpoint, unflatten
from .training import LocalTrainConfig, local_train

MODES = ("replace_known", "extract")
KNOWLEDGE = ("full", "near_convergence")


@dataclass
class AruConfig:
    adversary_ids: list
    mode: str = "extract"
    attack_round: int = 0
    knowledge: str = "near_convergence"
    checkpoint: str = ""  # target model path, replace_known mode
    extract_rounds: int = 50
    relabel_pgd: PgdConfig = field(default_factory=PgdConfig)
    extract_lr: float = 0.1
    extract_epochs: int = 1
    extract_batch_size: int = 32

    def __post_init__(self):
        if not self.adversary_ids:
            raise ConfigError("aru: need at least one adversary id")
        if self.mode not in MODES:
            raise ConfigError(f"aru.mode: unknown mode {self.mode!r}")
        if self.knowledge not in KNOWLEDGE:
            raise ConfigError(f"aru.knowledge: unknown level {self.knowledge!r}")
        if self.mode == "replace_known" and not self.checkpoint:
            raise ConfigError("aru.checkpoint: required in replace_known mode")
        if self.mode == "extract":
            if self.extract_rounds < 1:
                raise ConfigError("aru.extract_rounds: must be >= 1")
            if self.attack_round <= self.extract_rounds:
                raise ConfigError(
                    "aru.attack_round: replacement cannot fire before the "
                    f"{self.extract_rounds} extraction rounds complete"
                )

    @property
    def n_adversaries(self):
        return len(self.adversary_ids)


def craft_replacement_full(global_params, target, benign_updates, gamma_j):
    """Exact replacement update for one adversary with full round knowledge.

    U_j = g_j R - (g_j - 1) G - sum_i (g_j / g_i) (U_i - G), where g_i is
    the inverse of client i's aggregation weight. Aggregating this with the
    benign updates reproduces the target exactly.
    """
    if gamma_j == 0:
        raise ValueError("gamma must be nonzero")
    if target.layout != global_params.layout:
        raise LayoutError("target layout does not match global model")
    g = global_params.values
    out = gamma_j * target.values - (gamma_j - 1.0) * g
    for u in benign_updates:
        if u.params.layout != global_params.layout:
            raise LayoutError(f"client {u.client_id}: layout mismatch")
        if u.weight == 0:
            raise ValueError(f"client {u.client_id}: zero weight")
        out = out - gamma_j * u.weight * (u.params.values - g)
    return ParamVector(out, global_params.layout)


def craft_replacement_approx(global_params, target, gamma, n_adversaries):
    """Near-convergence replacement split across N equal-weight adversaries.

    Each submits G + (gamma/N)(R - G); their weighted deltas sum to R - G,
    so aggregation hits the target exactly when benign updates sit at G.
    """
    if gamma <= 0 or n_adversaries < 1:
        raise ValueError("gamma must be > 0 and n_adversaries >= 1")
    if target.layout != global_params.layout:
        raise LayoutError("target layout does not match global model")
    g = global_params.values
    boosted = g + (gamma / n_adversaries) * (target.values - g)
    return [ParamVector(boosted.copy(), global_params.layout) for _ in range(n_adversaries)]


def aru_extract_round(extracted, local_data: Batch, relabel_pgd: PgdConfig,
                      lr, epochs, rng_seed=0, batch_size=32):
    """One extraction round: perturb, self-relabel, retrain.

    The pooled adversary data is PGD-perturbed against the current
    extracted model, each perturbed example is relabeled with the model's
    own prediction on it (falling back to the second-highest class when
    that prediction is still correct), and the model takes `epochs` of
    plain SGD on the relabeled set.
    """
    if len(local_data) == 0:
        raise ValueError("empty extraction dataset")
    adv = pgd_attack(extracted, local_data, relabel_pgd, rng_seed)
    logits = forward(extracted, adv.perturbed_inputs)
    preds = np.argmax(logits, axis=1)
    second = np.argsort(-logits, axis=1, kind="stable")[:, 1]
    new_labels = np.where(preds != local_data.labels, preds, second)
    relabeled = Batch(adv.perturbed_inputs, new_labels)
    cfg = LocalTrainConfig(epochs=epochs, batch_size=batch_size, lr=lr, mode="standard")
    return local_train(extracted, relabeled, cfg, rng_seed)


class AruCoalition:
    """Round-by-round adversary behavior, driven by the harness.

    Before the attack round the coalition keeps a shared extracted model up
    to date (extract mode) while its members submit ordinary benign
    updates. At the attack round it crafts replacement updates targeting
    the extracted or known model.
    """

    def __init__(self, cfg: AruConfig, pooled_data: Batch, seed):
        self.cfg = cfg
        self.pooled_data = pooled_data
        self.seed = seed
        self.extracted = None
        self._known_target = None
        if cfg.mode == "replace_known":
            self._known_target = flatten(load_checkpoint(cfg.checkpoint))

    @property
    def extraction_start(self):
        # extraction spans rounds [start, attack_round), one step per round
        return self.cfg.attack_round - self.cfg.extract_rounds

    def observe_round(self, round_idx, global_model):
        """Called once per round with exactly what any client receives."""
        if self.cfg.mode != "extract":
            return
        if round_idx == self.extraction_start:
            self.extracted = global_model.copy()
        if self.extracted is not None and round_idx < self.cfg.attack_round:
            self.extracted = aru_extract_round(
                self.extracted,
                self.pooled_data,
                self.cfg.relabel_pgd,
                self.cfg.extract_lr,
                self.cfg.extract_epochs,
                rng_seed=[self.seed & 0xFFFFFFFF, round_idx, 0xA11CE],
                batch_size=self.cfg.extract_batch_size,
            )

    def is_attack_round(self, round_idx):
        return round_idx == self.cfg.attack_round

    def target_params(self, global_model):
        if self.cfg.mode == "replace_known":
            return self._known_target
        if self.extracted is None:
            raise ConfigError("attack round reached before extraction started")
        return flatten(self.extracted)

    def craft_updates(self, global_params, target, adversary_weights, benign_updates=None):
        """Replacement updates per adversary id.

        Full knowledge needs the round's benign updates (diagnostic mode);
        near-convergence uses the boosted approximation only.
        """
        ids = self.cfg.adversary_ids
        if self.cfg.knowledge == "full":
            if benign_updates is None:
                raise ConfigError("full-knowledge replacement needs benign updates")
            # split the exact correction equally across the coalition
            total_w = sum(adversary_weights[i] for i in ids)
            crafted = craft_replacement_full(
                global_params, target, benign_updates, 1.0 / total_w
            )
            # every member submits the same crafted point; their combined
            # weight matches the single-gamma derivation
            return {i: crafted.copy() for i in ids}
        # per-member boosting gamma_i / N, exact when weights are equal
        updates = {}
        for i in ids:
            gamma_i = 1.0 / adversary_weights[i]
            updates[i] = craft_replacement_approx(global_params, target, gamma_i, len(ids))[0]
        return updates
