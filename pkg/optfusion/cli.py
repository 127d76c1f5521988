"""Command line: preprocess, search, retrain, evaluate and report."""
import functools
import json
import logging
import sys
from dataclasses import fields
from typing import Any, Callable

import click

from optfusion import run
from optfusion.errors import ArchitectureSchemaError, DivergenceError, InputError
from optfusion.model.fusion import ALL_OPS
from optfusion.report import build_report
from optfusion.utils import configure_logging

log = logging.getLogger(__name__)

EXIT_INPUT_ERROR = 1
EXIT_DIVERGENCE = 2
EXIT_SCHEMA_ERROR = 3

_GRID_KEYS = ("seed", "lr", "l2")


def _load_config_file(ctx: click.Context, _param: click.Parameter, value: str | None):
    """Use a JSON file of flat flag names as the defaults of the command."""
    if value is None:
        return value
    try:
        with open(value, encoding="utf-8") as handle:
            document = json.load(handle)
    except (OSError, json.JSONDecodeError) as error:
        raise click.BadParameter(f"cannot read config file: {error}") from None
    if not isinstance(document, dict):
        raise click.BadParameter("config file must hold a JSON object")
    defaults = dict(ctx.default_map or {})
    for key, item in document.items():
        key = key.replace("-", "_")
        if key in _GRID_KEYS and not isinstance(item, list):
            item = [item]
        defaults[key] = item
    ctx.default_map = defaults
    return value


def _split_ops(_ctx, _param, value: str | list) -> tuple[str, ...]:
    if not isinstance(value, str):
        return tuple(str(op).upper() for op in value)
    return tuple(op.strip().upper() for op in value.split(",") if op.strip())


def _split_ratios(_ctx, _param, value: str) -> tuple[float, ...]:
    if not isinstance(value, str):
        return tuple(float(ratio) for ratio in value)
    try:
        return tuple(float(ratio) for ratio in value.split(","))
    except ValueError:
        raise click.BadParameter(f"expected comma-separated ratios, got {value!r}")


def config_option(command: Callable) -> Callable:
    return click.option(
        "--config",
        type=click.Path(dir_okay=False),
        callback=_load_config_file,
        is_eager=True,
        expose_value=False,
        help="JSON file with flat flag names; command-line flags win.",
    )(command)


def data_options(command: Callable) -> Callable:
    options = [
        click.option(
            "--data", type=click.Path(), default=None, help="TSV file or encoded cache."
        ),
        click.option(
            "--dataset-kind",
            type=click.Choice(run.DATASET_KINDS),
            default=None,
            help="Inferred from --data when omitted; synthetic without --data.",
        ),
        click.option("--split-seed", type=int, default=0, show_default=True),
        click.option("--split-ratios", default="0.8,0.1,0.1", callback=_split_ratios),
        click.option("--min-count", type=int, default=2, show_default=True),
        click.option("--transform", default="criteo", show_default=True),
        click.option(
            "--synthetic-teacher",
            type=click.Choice(["stacked", "parallel"]),
            default="stacked",
            show_default=True,
        ),
        click.option("--synthetic-n", type=int, default=2, show_default=True),
        click.option("--synthetic-fields", type=int, default=10, show_default=True),
        click.option("--synthetic-vocab", type=int, default=100, show_default=True),
        click.option(
            "--synthetic-samples", type=int, default=200_000, show_default=True
        ),
        click.option("--synthetic-noise", type=float, default=0.05, show_default=True),
        click.option("--teacher-seed", type=int, default=0, show_default=True),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def model_options(command: Callable) -> Callable:
    options = [
        click.option("--out", type=click.Path(file_okay=False), required=True),
        click.option("--n", "n", type=int, default=3, show_default=True),
        click.option("--emb-dim", type=int, default=8, show_default=True),
        click.option("--with-s0/--no-s0", default=True, show_default=True),
        click.option(
            "--ops",
            default=",".join(op.value for op in ALL_OPS),
            callback=_split_ops,
            show_default=True,
        ),
        click.option("--batch-size", type=int, default=4096, show_default=True),
        click.option("--lr", type=float, multiple=True, help="Repeat for a grid."),
        click.option("--arch-lr", type=float, default=None),
        click.option("--l2", type=float, multiple=True, help="Repeat for a grid."),
        click.option(
            "--seed", type=int, multiple=True, help="Repeat for several seeds."
        ),
        click.option("--epochs-search", type=int, default=1, show_default=True),
        click.option("--epochs-retrain", type=int, default=5, show_default=True),
        click.option("--patience", type=int, default=2, show_default=True),
        click.option("--mode", type=click.Choice(run.ARCH_VARIANTS), default="soft"),
        click.option(
            "--algo", type=click.Choice(["oneshot", "sequential"]), default="oneshot"
        ),
        click.option(
            "--precision", type=click.Choice(["single", "double"]), default="single"
        ),
        click.option("--log-wall-time", is_flag=True, default=False),
        click.option(
            "--jobs",
            type=int,
            default=None,
            help="Worker processes for grid points [default: physical cores].",
        ),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def handle_errors(command: Callable) -> Callable:
    """Map the error hierarchy onto exit codes."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ArchitectureSchemaError as error:
            log.error(f"architecture error: {error}")
            sys.exit(EXIT_SCHEMA_ERROR)
        except DivergenceError as error:
            log.error(f"training diverged: {error}")
            sys.exit(EXIT_DIVERGENCE)
        except InputError as error:
            log.error(f"input error: {error}")
            sys.exit(EXIT_INPUT_ERROR)
        except ValueError as error:
            log.error(f"invalid settings: {error}")
            sys.exit(EXIT_INPUT_ERROR)

    return wrapper


_RUN_FIELDS = {item.name for item in fields(run.RunConfig)}


def _run_config(options: dict[str, Any]) -> run.RunConfig:
    return run.RunConfig(
        **{key: value for key, value in options.items() if key in _RUN_FIELDS}
    )


def _grid(options: dict[str, Any]) -> tuple[list[run.RunConfig], int | None]:
    seeds = options.pop("seed", ()) or ()
    learning_rates = options.pop("lr", ()) or ()
    l2s = options.pop("l2", ()) or ()
    jobs = options.pop("jobs", None)
    base = _run_config(options)
    return run.expand_grid(base, seeds, learning_rates, l2s), jobs


class _ExitCodeGroup(click.Group):
    """Command group whose usage errors exit with the input-error code."""

    def make_context(self, *args, **kwargs) -> click.Context:
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as error:
            error.exit_code = EXIT_INPUT_ERROR
            raise

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except click.UsageError as error:
            error.exit_code = EXIT_INPUT_ERROR
            raise


@click.group(cls=_ExitCodeGroup)
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def cli(verbose: bool) -> None:
    """Learned fusion connections and operations for CTR models."""
    configure_logging(verbose)


@cli.command("preprocess")
@config_option
@click.option("--input", "input_path", type=click.Path(), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--min-count", type=int, default=2, show_default=True)
@click.option("--transform", default="criteo", show_default=True)
@click.option("--split-seed", type=int, default=0, show_default=True)
@click.option("--split-ratios", default="0.8,0.1,0.1", callback=_split_ratios)
@handle_errors
def cmd_preprocess(input_path, out, min_count, transform, split_seed, split_ratios):
    """Encode a Criteo-layout TSV file into a cache with vocabulary and stats."""
    stats = run.preprocess(
        input_path, out, min_count, transform, split_seed, split_ratios
    )
    click.echo(
        f"{stats['num_samples']} samples, positive ratio {stats['positive_ratio']:.6f}"
    )


@cli.command("search")
@config_option
@model_options
@data_options
@handle_errors
def cmd_search(**options):
    """Selection stage: learn connections and operations, write descriptors."""
    configs, jobs = _grid(options)
    for summary in run.run_grid(run.search, configs, jobs):
        click.echo(f"search done: {summary['out']}")


@cli.command("retrain")
@config_option
@model_options
@data_options
@click.option("--arch", type=click.Path(dir_okay=False), default=None)
@click.option("--preset", "preset_kind", type=click.Choice(["parallel", "stacked"]))
@click.option(
    "--stacked-depth",
    type=int,
    default=1,
    show_default=True,
    help="Shallow layers chained ahead of the deep stack by --preset stacked.",
)
@click.option(
    "--op-override",
    type=click.Choice([op.value for op in ALL_OPS], case_sensitive=False),
    default=None,
    help="Force one operation on every component, keeping the connections.",
)
@handle_errors
def cmd_retrain(arch, preset_kind, op_override, **options):
    """Re-train fresh weights on a searched descriptor or a preset."""
    if arch is not None and preset_kind is not None:
        raise click.UsageError("--arch and --preset are mutually exclusive")
    configs, jobs = _grid(options)
    results = run.run_grid(
        run.retrain,
        configs,
        jobs,
        arch_path=arch,
        preset_kind=preset_kind,
        op_override=op_override,
    )
    for metrics in results:
        click.echo(
            f"{metrics['label']}: auc {metrics['auc']:.6f}, "
            f"logloss {metrics['logloss']:.6f}"
        )


@cli.command("evaluate")
@config_option
@click.option("--checkpoint", type=click.Path(dir_okay=False), required=True)
@click.option(
    "--split",
    "split_name",
    type=click.Choice(["train", "val", "test"]),
    default="test",
)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--emb-dim", type=int, default=8, show_default=True)
@data_options
@handle_errors
def cmd_evaluate(checkpoint, split_name, **options):
    """Score a model checkpoint on one split of a dataset."""
    config = _run_config(options)
    result = run.evaluate_checkpoint(config, checkpoint, split_name)
    click.echo(
        f"{split_name}: auc {result['auc']:.6f}, logloss {result['logloss']:.6f}"
    )


@cli.command("report")
@click.option("--run-dir", type=click.Path(file_okay=False), required=True)
@click.option("--plot", is_flag=True, default=False, help="Write learning_curves.png.")
@handle_errors
def cmd_report(run_dir, plot):
    """Summarise a run directory."""
    text, _ = build_report(run_dir, plot=plot)
    with open(f"{run_dir}/report.txt", "w", encoding="utf-8") as handle:
        handle.write(text)
    click.echo(text, nl=False)


if __name__ == "__main__":
    cli()
