"""Human-readable summary of a run directory."""
import json
import logging
from pathlib import Path

from optfusion.errors import ArchitectureSchemaError, InputError
from optfusion.model import ArchitectureDescriptor, load_descriptor
from optfusion.utils import plot_learning_curves, read_json, read_metric_log

log = logging.getLogger(__name__)


def _component_table(
    hard: ArchitectureDescriptor | None, soft: ArchitectureDescriptor | None
) -> list[str]:
    reference = hard or soft
    assert reference is not None
    dead = set(reference.dead_components())
    unused = set(reference.unused_components())
    lines = [
        f"{'component':<10} {'kind':<10} {'level':>5}  {'hard op':<8} "
        f"{'soft op (p)':<16} {'inputs':<24} flags"
    ]
    for component in reference.graph.components:
        hard_op = soft_op = "-"
        if component.id != reference.graph.embedding.id:
            if hard is not None:
                hard_op = hard.operation_of(component.id).value
            if soft is not None:
                op = soft.operation_of(component.id)
                probability = soft.probabilities_of(component.id)[soft.op_set.index(op)]
                soft_op = f"{op.value} ({probability:.3f})"
        inputs = ",".join(
            reference.graph.components[source].name
            for source in reference.incoming(component.id)
        )
        flags = []
        if component.id in dead:
            flags.append("dead")
        if component.id in unused:
            flags.append("unused")
        lines.append(
            f"{component.name:<10} {component.kind.value:<10} {component.level:>5}  "
            f"{hard_op:<8} {soft_op:<16} {inputs or '-':<24} {','.join(flags) or '-'}"
        )
    return lines


def build_report(run_dir: str | Path, plot: bool = False) -> tuple[str, list[str]]:
    """Report text and the warnings raised by missing or unreadable artefacts."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise InputError(f"run directory {run_dir} does not exist")
    warnings: list[str] = []
    sections: list[str] = [f"OptFusion run report: {run_dir}"]

    descriptors: dict[str, ArchitectureDescriptor | None] = {}
    for variant in ("hard", "soft"):
        path = run_dir / f"architecture_{variant}.json"
        try:
            descriptors[variant] = load_descriptor(path)
        except (InputError, ArchitectureSchemaError) as error:
            descriptors[variant] = None
            warnings.append(f"{variant} architecture unavailable: {error}")
    if descriptors["hard"] or descriptors["soft"]:
        reference = descriptors["hard"] or descriptors["soft"]
        assert reference is not None
        sections.append("")
        sections.append(
            f"Architecture (n={reference.n}, "
            f"S0={'on' if reference.with_s0 else 'off'}, "
            f"{len(reference.edges())} edges, seed {reference.metadata.get('seed')}, "
            f"config {reference.metadata.get('config_hash', '?')[:12]})"
        )
        sections.extend(_component_table(descriptors["hard"], descriptors["soft"]))
        for variant in ("hard", "soft"):
            dot_path = run_dir / f"architecture_{variant}.dot"
            if dot_path.is_file():
                sections.append(f"graph ({variant}): {dot_path}")

    metric_files = sorted(run_dir.glob("metrics_*.json"))
    if metric_files:
        sections.append("")
        sections.append(f"{'stage':<24} {'auc':<22} {'logloss':<22} best epoch")
        for path in metric_files:
            try:
                metrics = read_json(path)
            except InputError as error:
                warnings.append(str(error))
                continue
            # json.dumps keeps the stored float text
            sections.append(
                f"{metrics.get('label', path.stem):<24} "
                f"{json.dumps(metrics.get('auc')):<22} "
                f"{json.dumps(metrics.get('logloss')):<22} "
                f"{metrics.get('best_epoch', '-')}"
            )
    else:
        warnings.append("no retrain metrics found")

    records: list[dict] = []
    for path in sorted(run_dir.glob("metrics_*.jsonl")):
        try:
            records.extend(read_metric_log(path))
        except InputError as error:
            warnings.append(str(error))
    search_records = [record for record in records if "retrain" not in record["stage"]]
    if search_records:
        last = search_records[-1]
        sections.append("")
        sections.append(
            f"search: {len(search_records)} epochs, final train loss "
            f"{last['train_loss']:.6f}, val auc {last['val_auc']}"
        )
    else:
        warnings.append("no search metric log found")

    if plot and records:
        figure = run_dir / "learning_curves.png"
        plot_learning_curves(records, str(figure))
        sections.append(f"learning curves: {figure}")

    if warnings:
        sections.append("")
        sections.extend(f"warning: {warning}" for warning in warnings)
    for warning in warnings:
        log.warning(warning)
    return "\n".join(sections) + "\n", warnings
