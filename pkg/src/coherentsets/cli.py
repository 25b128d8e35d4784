"""Command-line entry points.

Every subcommand takes `--config <json>` and `--out <dir>`; failures write
a machine-readable error.json into the output directory and exit nonzero.
"""

from __future__ import annotations

import json
import sys
import traceback
from pathlib import Path

import click

from .config import ConfigError, ExperimentConfig
from . import runner


def _execute(fn, config_path: str, out: str, threads: int):
    out_dir = Path(out)
    try:
        config = ExperimentConfig.load(config_path)
        meta = fn(config, out_dir, threads=threads)
    except Exception as exc:  # noqa: BLE001 - boundary: report and exit nonzero
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "error": {
                "type": type(exc).__name__,
                "message": str(exc),
                "config": str(config_path),
            }
        }
        (out_dir / "error.json").write_text(json.dumps(payload, indent=1))
        click.echo(f"error: {exc}", err=True)
        if not isinstance(exc, (ConfigError, FileNotFoundError, ValueError)):
            traceback.print_exc()
        sys.exit(1)
    click.echo(json.dumps(meta["results"], indent=1, sort_keys=True))


def _common(fn):
    fn = click.option("--threads", default=1, show_default=True,
                      help="worker cap for matrix assembly")(fn)
    fn = click.option("--out", required=True, type=click.Path(), help="output directory")(fn)
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(), help="experiment config JSON")(fn)
    return fn


@click.group()
def main():
    """Coherent-set experiments: spectral transfer matrices, the box-method
    baseline, turbulent-flow generation, extraction and validation."""


@main.command("run-fp")
@_common
def run_fp(config_path, out, threads):
    """Assemble the spectral transfer matrix and its singular triples."""
    _execute(runner.run_fp, config_path, out, threads)


@main.command("run-ulam")
@_common
def run_ulam(config_path, out, threads):
    """Estimate the box transition matrix from integrated samples."""
    _execute(runner.run_ulam, config_path, out, threads)


@main.command("run-ns")
@_common
def run_ns(config_path, out, threads):
    """Generate a snapshot velocity field from the vorticity equation."""
    _execute(runner.run_ns, config_path, out, threads)


@main.command("extract")
@_common
def extract(config_path, out, threads):
    """Extract a coherent pair (threshold/line-search) or k-means labels."""
    _execute(runner.run_extract, config_path, out, threads)


@main.command("validate-sde")
@_common
def validate_sde(config_path, out, threads):
    """Monte-Carlo survival estimate for the extracted pair."""
    _execute(runner.run_validate_sde, config_path, out, threads)


if __name__ == "__main__":
    main()
