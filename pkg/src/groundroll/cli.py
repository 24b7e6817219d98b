"""Command line entry points.

Every subcommand takes the same plumbing flags and runs one pipeline stage
(or the whole chain). Errors leave a machine-readable JSON object on
stderr and a nonzero exit code.
"""
from __future__ import annotations

import json
import os
import sys

import click

from . import __version__
from .runner import (
    STAGE_ORDER,
    ConfigError,
    StageError,
    load_config,
    make_context,
    run_generalization,
    run_stage,
)

_STAGE_HELP = {
    "synth": "Synthesize the survey: train/test gathers plus truth masks.",
    "train-detect": "Fit the amplitude transfer map and train the tile classifier.",
    "fit-mask": "Likelihood maps, log-curve fits, rough masks for the train split.",
    "train-segment": "Train the per-trace segmentation net on the rough masks.",
    "train-filter": "Train the adversarial tile filter on paired samples.",
    "apply": "Segment and filter every test gather.",
    "evaluate": "Score filtered test gathers (Q_p, Q_a, Q_c).",
    "report": "Aggregate per-gather scores into the survey report.",
}


def _fail(err: BaseException, stage: str | None = None) -> "NoReturn":
    payload = {
        "error": {
            "type": type(err).__name__,
            "stage": stage,
            "message": str(err),
        }
    }
    if isinstance(err, StageError):
        payload["error"]["stage"] = err.stage
        payload["error"]["type"] = type(err.cause).__name__
        payload["error"]["message"] = str(err.cause)
    click.echo(json.dumps(payload), err=True)
    sys.exit(1)


def _common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=True, dir_okay=False),
                      help="Run configuration JSON.")(fn)
    fn = click.option("--manifest", "manifest_path", default=None,
                      type=click.Path(dir_okay=False),
                      help="Manifest path (default: <run_dir>/manifest.json).")(fn)
    fn = click.option("--seed", default=None, type=int,
                      help="Global seed (default: the config's seed).")(fn)
    fn = click.option("--force", is_flag=True, help="Re-run even if up to date.")(fn)
    fn = click.option("--jobs", default=1, type=click.IntRange(min=1),
                      help="Parallel workers for per-gather fan-out.")(fn)
    fn = click.option("--emit-images", is_flag=True,
                      help="Write PGM diagnostics and plotting CSVs.")(fn)
    return fn


def _context(config_path, manifest_path, seed, force, jobs, emit_images):
    config = load_config(config_path)
    return make_context(
        config, seed=seed, manifest_path=manifest_path, force=force,
        jobs=jobs, emit_images=emit_images, log=click.echo,
        data_root=os.environ.get("GRL_DATA_DIR"),
    )


@click.group()
@click.version_option(version=__version__, prog_name="groundroll")
def main():
    """Ground-roll detection and adversarial filtering pipeline."""


def _make_stage_command(stage: str):
    @main.command(stage, help=_STAGE_HELP[stage])
    @_common_options
    def _cmd(config_path, manifest_path, seed, force, jobs, emit_images):
        try:
            ctx = _context(config_path, manifest_path, seed, force, jobs, emit_images)
            run_stage(ctx, stage)
        except ConfigError as err:
            _fail(err)
        except StageError as err:
            _fail(err)
        except (OSError, FileNotFoundError, ValueError, RuntimeError) as err:
            _fail(err, stage=stage)

    return _cmd


for _stage in STAGE_ORDER:
    _make_stage_command(_stage)


@main.command("run-all", help="Run the full chain: synth through report.")
@_common_options
def run_all(config_path, manifest_path, seed, force, jobs, emit_images):
    current = None
    try:
        ctx = _context(config_path, manifest_path, seed, force, jobs, emit_images)
        for stage in STAGE_ORDER:
            current = stage
            run_stage(ctx, stage)
    except ConfigError as err:
        _fail(err)
    except StageError as err:
        _fail(err)
    except (OSError, FileNotFoundError, ValueError, RuntimeError) as err:
        _fail(err, stage=current)


@main.command(
    "experiment-generalization",
    help="Train on the main geology; score held-out, variant, and geology B surveys.",
)
@_common_options
def experiment_generalization(config_path, manifest_path, seed, force, jobs, emit_images):
    try:
        ctx = _context(config_path, manifest_path, seed, force, jobs, emit_images)
        run_generalization(ctx)
    except ConfigError as err:
        _fail(err)
    except StageError as err:
        _fail(err)
    except (OSError, FileNotFoundError, ValueError, RuntimeError) as err:
        _fail(err, stage="experiment-generalization")


if __name__ == "__main__":
    main()
