"""Command-line entry points: dataset generation, single runs, strategy
comparison tables, report pretty-printing, and the HTTP gateway."""

from __future__ import annotations

import json
import sys
from dataclasses import replace

import click

from .baselines import STRATEGIES
from .datamodel import DatasetSpec, generate_dataset, load_dataset, save_dataset
from .experiment import (
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    run_compare,
    run_experiment,
)


def _load_config(config_path: str | None, strategy: str | None,
                 seed: int | None) -> ExperimentConfig:
    raw = {}
    if config_path:
        with open(config_path) as f:
            raw = json.load(f)
    if strategy:
        raw["strategy"] = strategy
    if seed is not None:
        raw["seed"] = seed
    return config_from_dict(raw)


def _dataset_scenes(cfg: ExperimentConfig, dataset_path: str | None):
    if dataset_path:
        return load_dataset(dataset_path)
    return None  # engine generates from cfg.dataset


@click.group()
def main():
    """Video-analytics orchestration testbed."""


@main.command("generate-dataset")
@click.option("--out", required=True, type=click.Path(), help="output JSONL path")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--num-frames", default=150, show_default=True, type=int)
@click.option("--num-classes", default=10, show_default=True, type=int)
@click.option("--drift-rate", default=0.0, show_default=True, type=float)
def generate_dataset_cmd(out, seed, num_frames, num_classes, drift_rate):
    """Generate a synthetic labeled scene and write it to a JSONL file."""
    spec = DatasetSpec(num_frames=num_frames, num_classes=num_classes,
                       drift_rate=drift_rate)
    scenes = generate_dataset(spec, seed)
    save_dataset(scenes, out)
    total = sum(len(s.frames) for s in scenes)
    click.echo(f"wrote {len(scenes)} scene(s), {total} keyframes to {out}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="experiment config JSON")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True),
              help="dataset JSONL (otherwise generated from config)")
@click.option("--strategy", type=click.Choice(STRATEGIES), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--traces-out", type=click.Path(), default=None,
              help="write per-chunk trace records as JSONL")
def run(config_path, dataset_path, strategy, seed, traces_out):
    """Run one experiment and print the metrics report as JSON."""
    try:
        cfg = _load_config(config_path, strategy, seed)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    result = run_experiment(cfg, _dataset_scenes(cfg, dataset_path))
    if traces_out:
        with open(traces_out, "w") as f:
            f.write(result.traces_jsonl() + "\n")
    click.echo(result.metrics_json())


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--dataset", "dataset_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--json", "as_json", is_flag=True, help="machine-readable output")
def compare(config_path, dataset_path, seed, as_json):
    """Run every strategy on one dataset and print a comparison table."""
    try:
        cfg = _load_config(config_path, None, seed)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    results = run_compare(cfg, scenes=_dataset_scenes(cfg, dataset_path))
    rows = {name: r.report.to_dict() for name, r in results.items()}
    if as_json:
        for row in rows.values():
            row.pop("chunk_series", None)
        click.echo(json.dumps(rows, indent=2, sort_keys=True))
        return
    header = f"{'strategy':<14} {'bandwidth':>9} {'f1':>6} {'cost':>8} {'p50 (s)':>8}"
    click.echo(header)
    click.echo("-" * len(header))
    for name in STRATEGIES:
        r = rows[name]
        click.echo(f"{name:<14} {r['normalized_bandwidth']:>9.4f} "
                   f"{r['f1']:>6.3f} {r['cloud_cost']:>8.0f} "
                   f"{r['latency_p50']:>8.2f}")


@main.command()
@click.argument("metrics_path", type=click.Path(exists=True))
def report(metrics_path):
    """Pretty-print a saved metrics JSON file."""
    with open(metrics_path) as f:
        data = json.load(f)
    data.pop("chunk_series", None)
    for key, value in sorted(data.items()):
        click.echo(f"{key:>22}: {value}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=None, type=int,
              help="defaults to $VPAAS_PORT or 8400")
@click.option("--frontend-dir", type=click.Path(), default=None,
              help="serve built UI assets from this directory")
def serve(host, port, frontend_dir):
    """Start the HTTP gateway."""
    from .gateway import serve as serve_gateway

    serve_gateway(host=host, port=port, frontend_dir=frontend_dir)


if __name__ == "__main__":
    main()
