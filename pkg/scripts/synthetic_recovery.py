"""Desk-scale recovery experiment on planted synthetic data.

For each seed: one-shot search + soft retrain, sequential search + soft
retrain, and the parallel / stacked presets retrained with the same
settings. The teacher labelling the data is a stacked design, so the
parallel preset is the mismatched baseline.

    python scripts/synthetic_recovery.py --out runs/recovery --seeds 0 1 2
"""
import json
import logging
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from optfusion import run
from optfusion.utils import configure_logging, write_json


def run_seed(base: run.RunConfig, seed: int) -> dict[str, float]:
    seed_dir = Path(base.out) / f"seed{seed}"
    aucs = {}
    for algo in ("oneshot", "sequential"):
        config = replace(base, seed=seed, algo=algo, out=str(seed_dir / algo))
        run.search(config)
        aucs[f"{algo}-soft"] = run.retrain(config)["auc"]
    for preset_kind in ("parallel", "stacked"):
        config = replace(base, seed=seed, out=str(seed_dir / "presets"))
        metrics = run.retrain(config, preset_kind=preset_kind)
        aucs[f"preset-{preset_kind}"] = metrics["auc"]
    return aucs


@click.command()
@click.option("--out", type=click.Path(file_okay=False), default="runs/recovery")
@click.option("--seeds", type=int, multiple=True, default=(0, 1, 2))
@click.option("--samples", type=int, default=200_000, show_default=True)
@click.option("--epochs-search", type=int, default=3, show_default=True)
@click.option("--epochs-retrain", type=int, default=5, show_default=True)
@click.option("--batch-size", type=int, default=4096, show_default=True)
@click.option("--lr", type=float, default=3e-3, show_default=True)
def main(out, seeds, samples, epochs_search, epochs_retrain, batch_size, lr):
    configure_logging()
    base = run.RunConfig(
        out=out,
        n=2,
        emb_dim=8,
        lr=lr,
        batch_size=batch_size,
        epochs_search=epochs_search,
        epochs_retrain=epochs_retrain,
        mode="soft",
        synthetic_teacher="stacked",
        synthetic_n=2,
        synthetic_fields=10,
        synthetic_vocab=100,
        synthetic_samples=samples,
        synthetic_noise=0.05,
    )
    results = {seed: run_seed(base, seed) for seed in seeds}

    def mean(key: str) -> float:
        return float(np.mean([aucs[key] for aucs in results.values()]))

    best_fixed = {
        seed: max(aucs["preset-parallel"], aucs["preset-stacked"])
        for seed, aucs in results.items()
    }
    summary = {
        "per_seed": results,
        "soft_vs_best_fixed": all(
            results[seed]["oneshot-soft"] >= best_fixed[seed] - 0.002 for seed in seeds
        ),
        "soft_beats_parallel": sum(
            aucs["oneshot-soft"] > aucs["preset-parallel"] for aucs in results.values()
        ),
        "oneshot_mean": mean("oneshot-soft"),
        "sequential_mean": mean("sequential-soft"),
    }
    summary["oneshot_vs_sequential"] = (
        summary["oneshot_mean"] >= summary["sequential_mean"] - 0.003
    )
    write_json(Path(out) / "recovery_summary.json", summary)
    click.echo(json.dumps(summary, indent=2, sort_keys=True))
    logging.getLogger(__name__).info(f"summary written to {out}")


if __name__ == "__main__":
    main()
