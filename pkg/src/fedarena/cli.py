"""Command-line entry points."""

import sys

import click
import numpy as np

from .adversary import craft_replacement_full
from .aggregation import ClientUpdate, fedavg
from .backends import BACKEND_NAME
from .errors import FedArenaError
from .harness import ExperimentConfig, run_and_save
from .model import LayoutEntry, ParamVector, flatten, load_checkpoint
from .presets import PRESET_NAMES, build_preset, run_preset


def _parse_defense(text):
    from .aggregation import AggregationRule

    if text == "fedavg":
        return AggregationRule("fedavg")
    if text == "median":
        return AggregationRule("median")
    if text.startswith("trimmed"):
        beta = 0.15
        if ":" in text:
            beta = float(text.split(":", 1)[1])
        return AggregationRule("trimmed_mean", beta=beta)
    raise click.BadParameter(f"unknown defense {text!r}; use fedavg, trimmed:<beta>, or median")


@click.group()
def main():
    """Deterministic federated-learning attack/defense simulator."""


@main.command()
@click.argument("config_path", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="output directory")
@click.option("--seed", type=int, default=None, help="override config seed")
@click.option("--rounds", type=int, default=None, help="override round count")
@click.option("--defense", default=None, help="fedavg, trimmed:<beta>, or median")
@click.option("--adversaries", type=int, default=None, help="override adversary count")
def run(config_path, out, seed, rounds, defense, adversaries):
    """Run an experiment from a JSON config file."""
    try:
        cfg = ExperimentConfig.from_json(config_path)
        if seed is not None:
            cfg.seed = seed
        if rounds is not None:
            cfg.rounds = rounds
        if defense is not None:
            cfg.defense = _parse_defense(defense)
        if adversaries is not None and cfg.aru is not None:
            cfg.aru.adversary_ids = list(range(adversaries))
        result = run_and_save(cfg, out)
    except FedArenaError as exc:
        raise click.ClickException(str(exc))
    last = result.metrics[-1]
    click.echo(
        f"done: round {last.round} test_acc {last.test_acc_mean:.3f} "
        f"adv_acc {last.adv_acc_mean:.3f} (backend: {BACKEND_NAME})"
    )


@main.command()
@click.argument("name", type=click.Choice(PRESET_NAMES))
@click.option("--out", required=True, type=click.Path(), help="output directory")
@click.option("--seed", type=int, default=0)
@click.option("--rounds", type=int, default=60)
@click.option("--defense", default=None, help="fedavg, trimmed:<beta>, or median")
@click.option("--adversaries", type=int, default=5)
def preset(name, out, seed, rounds, defense, adversaries):
    """Run one of the built-in scenario presets."""
    rule = _parse_defense(defense) if defense else None
    try:
        result = run_preset(
            name, out, seed=seed, rounds=rounds,
            n_adversaries=adversaries, defense=rule,
        )
    except FedArenaError as exc:
        raise click.ClickException(str(exc))
    last = result.metrics[-1]
    click.echo(
        f"{name}: test_acc {last.test_acc_mean:.3f} adv_acc {last.adv_acc_mean:.3f}"
    )


@main.command("attack-check")
@click.option("--cases", type=int, default=50)
@click.option("--seed", type=int, default=0)
def attack_check(cases, seed):
    """Verify exact model replacement on random instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        dim = int(rng.integers(1, 201))
        m = int(rng.integers(2, 11))
        layout = (LayoutEntry(0, "weight", (1, dim)), LayoutEntry(0, "bias", (1,)))
        size = dim + 1
        g = ParamVector(rng.normal(size=size), layout)
        target = ParamVector(rng.normal(size=size), layout)
        w = rng.uniform(0.1, 1.0, size=m)
        w /= w.sum()
        benign = [
            ClientUpdate(i, ParamVector(rng.normal(size=size), layout), float(w[i]))
            for i in range(m - 1)
        ]
        crafted = craft_replacement_full(g, target, benign, 1.0 / w[m - 1])
        updates = benign + [ClientUpdate(m - 1, crafted, float(w[m - 1]))]
        agg = fedavg(g, updates)
        scale = max(1.0, float(np.abs(target.values).max()))
        worst = max(worst, float(np.abs(agg.values - target.values).max()) / scale)
    ok = worst < 1e-9
    click.echo(f"replacement exactness over {cases} cases: max rel err {worst:.3e} "
               f"{'PASS' if ok else 'FAIL'}")
    if not ok:
        sys.exit(1)


@main.command()
@click.argument("checkpoint", type=click.Path(exists=True))
def inspect(checkpoint):
    """Print the layout and value statistics of a model checkpoint."""
    try:
        model = load_checkpoint(checkpoint)
    except FedArenaError as exc:
        raise click.ClickException(str(exc))
    pv = flatten(model)
    click.echo(f"layer sizes: {model.layer_sizes}")
    click.echo(f"parameters: {pv.values.size}")
    for e in pv.layout:
        click.echo(f"  layer {e.layer} {e.kind} shape {e.shape}")
    click.echo(
        f"values: min {pv.values.min():.6g} max {pv.values.max():.6g} "
        f"mean {pv.values.mean():.6g}"
    )


if __name__ == "__main__":
    main()
