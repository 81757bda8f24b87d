"""
CLI for waveshape-nilm
"""

import functools
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from .bench import (
    SWEEP_AXES,
    ExperimentSpec,
    MetricsReport,
    collect_signatures,
    featurize_records,
    precision,
    run_experiment,
    sweep as run_sweep,
)
from .config import Settings, load_config, validate_config
from .errors import InsufficientDataError, NilmError
from .events import kmeans, purity, select_k
from .features import FeatureSpace, feature_names, featurize
from .ingest import (
    SignatureRecord,
    read_model,
    read_signature_db,
    read_waveform_corpus,
    signature_db_info,
    write_model,
    write_signature_db,
)
from .learn import Algorithm, ClassifierParams, Dataset, confusion_matrix, predict_many, split, train_model
from .learn.ann import zscore_stats
from .learn.dataset import DEFAULT_FRACTIONS
from .optimize import DeConfig, export_history_csv, model_select
from .simulate import ScenarioConfig, appliance_channel, export_scenario, generate_scenario
from .utils import format_file_size, load_json, save_json
from .validator import validate_corpus

console = Console()

SPACES = [s.value for s in FeatureSpace]
ALGORITHMS = [a.value for a in Algorithm]


def _setup_logging(level: str) -> None:
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _fail(error: Exception, code: int) -> None:
    console.print(f"[red]✗ {type(error).__name__}: {error}[/red]")
    sys.exit(code)


def handle_errors(func):
    """Map toolkit errors onto exit codes: 2 config, 3 data, 4 numeric."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except NilmError as e:
            _fail(e, e.exit_code)
        except (ValidationError, yaml.YAMLError) as e:
            _fail(e, 2)
        except OSError as e:
            _fail(e, 3)

    return wrapper


def seed_option(func):
    return click.option("--seed", type=int, default=None, help="Master seed (overrides the config file)")(func)


def _echo_config(title: str, data: Dict[str, Any]) -> None:
    """Print the resolved configuration of a command."""
    text = yaml.safe_dump(
        {k: (str(v) if isinstance(v, Path) else v) for k, v in data.items()},
        sort_keys=True,
        default_flow_style=None,
    )
    console.print(Panel(text.rstrip(), title=f"[bold]{title}[/bold]", expand=False))


def _split_list(raw: Optional[str]) -> List[str]:
    return [part.strip() for part in raw.split(",") if part.strip()] if raw else []


def _fractions(raw: Optional[str]) -> Tuple[float, float, float]:
    if not raw:
        return DEFAULT_FRACTIONS
    values = [float(x) for x in raw.replace("/", ",").split(",")]
    return tuple(values)


def _record_label(record: SignatureRecord) -> Optional[int]:
    return record.label if record.label is not None else record.cluster


def _features(record: SignatureRecord, space: FeatureSpace) -> np.ndarray:
    vec = record.features.get(space)
    if vec is None:
        vec = featurize(record.delta, space, oriented=True)
    return vec.values


def _dataset(
    records: Sequence[SignatureRecord],
    space: FeatureSpace,
    class_labels: Optional[List[int]] = None,
) -> Tuple[Dataset, List[int]]:
    """Labeled records as a Dataset with contiguous class ids, plus the label of each id."""
    labeled = [r for r in records if _record_label(r) is not None]
    if class_labels is not None:
        labeled = [r for r in labeled if _record_label(r) in class_labels]
    if not labeled:
        raise InsufficientDataError("No labeled signatures in the database")
    raw = np.array([_record_label(r) for r in labeled])
    if class_labels is None:
        class_labels = [int(c) for c in np.unique(raw)]
    y = np.searchsorted(np.array(class_labels), raw)
    X = np.stack([_features(r, space) for r in labeled])
    return Dataset(X=X, y=y, n_classes=len(class_labels)), class_labels


def _summary_table(frame: pd.DataFrame, title: str) -> Table:
    table = Table(title=title, show_header=True, header_style="bold magenta")
    for column in frame.columns:
        table.add_column(str(column))
    for row in frame.itertuples(index=False):
        table.add_row(*[f"{v:.4f}" if isinstance(v, float) else str(v) for v in row])
    return table


@click.group()
@click.version_option(version="0.1.0")
@click.option("--log-level", default=None, help="Logging level (default from WSNILM_LOG_LEVEL)")
@click.pass_context
def main(ctx, log_level):
    """Waveshape NILM - event-based load disaggregation toolkit."""
    settings = Settings.from_env()
    _setup_logging((log_level or settings.log_level).upper())
    ctx.obj = settings


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True, file_okay=False))
@seed_option
def validate(corpus_path, seed):
    """Validate a waveform corpus directory."""
    corpus_path = Path(corpus_path)

    console.print(f"\n[bold]Validating corpus:[/bold] {corpus_path.name}")
    console.print(f"[dim]Path: {corpus_path.absolute()}[/dim]\n")

    result = validate_corpus(corpus_path)

    if result.valid:
        console.print("[green]✓ Validation passed![/green]\n")
    else:
        console.print("[red]✗ Validation failed[/red]\n")

    if result.errors:
        console.print("[bold red]Errors:[/bold red]")
        for error in result.errors:
            console.print(f"  [red]✗[/red] {error}")
        console.print()

    if result.warnings:
        console.print("[bold yellow]Warnings:[/bold yellow]")
        for warning in result.warnings:
            console.print(f"  [yellow]![/yellow] {warning}")
        console.print()

    if result.metadata:
        console.print("[bold]Metadata:[/bold]")
        for key, value in result.metadata.items():
            if key == "header":
                continue
            if isinstance(value, list):
                console.print(f"  {key}: {', '.join(str(v) for v in value[:5])}")
            else:
                console.print(f"  {key}: {value}")

    sys.exit(0 if result.valid else 3)


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out", type=click.Path(dir_okay=False), required=True, help="Signature database to write")
@click.option("--p-min", type=float, default=50.0, show_default=True, help="Minimum |delta P| in W")
@click.option("--event-source", type=click.Choice(["truth", "detect"]), default=None,
              help="Events from the truth log or the detector (default: truth when logged)")
@click.option("--spaces", default="PQ,HAR,WS", show_default=True, help="Feature spaces to store")
@click.option("--orient/--no-orient", default=True, show_default=True, help="Negate off-event deltas")
@seed_option
@handle_errors
def ingest(corpus_path, out, p_min, event_source, spaces, orient, seed):
    """Cut delta signatures from a corpus into a signature database."""
    corpus = read_waveform_corpus(Path(corpus_path))
    event_source = event_source or ("truth" if corpus.truth is not None else "detect")
    space_list = [FeatureSpace(s) for s in _split_list(spaces)]
    _echo_config("ingest", {
        "corpus": corpus_path, "out": out, "p_min": p_min, "event_source": event_source,
        "spaces": [s.value for s in space_list], "orient": orient, "seed": seed,
    })

    records, dropped = collect_signatures(corpus, p_min, event_source, name=Path(corpus_path).name)
    records, dropped["extract"] = featurize_records(records, space_list, orient)
    channel_map = corpus.channel_map if corpus.channel_map.appliance_channels else None
    write_signature_db(records, Path(out), channel_map)

    console.print(f"[green]✓[/green] Wrote {len(records)} signatures to {out}")
    for cause, count in dropped.items():
        if count:
            console.print(f"  [yellow]![/yellow] dropped {count} ({cause})")


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out", type=click.Path(file_okay=False), required=True, help="Corpus directory to write")
@click.option("--encoding", type=click.Choice(["text", "f32"]), default="text", show_default=True)
@click.option("--mains-only", is_flag=True, help="Skip the per-appliance channels")
@seed_option
@handle_errors
def simulate(config_path, out, encoding, mains_only, seed):
    """Generate a synthetic scenario and export it as a corpus."""
    config = load_config(Path(config_path), ScenarioConfig, overrides={"seed": seed})
    _echo_config("simulate", {**config.model_dump(mode="json"), "out": out, "encoding": encoding})

    scenario = generate_scenario(config)
    export_scenario(scenario, Path(out), encoding=encoding, appliance_channels=not mains_only)

    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Channel")
    table.add_column("Appliance")
    table.add_column("Category")
    table.add_column("P (W)")
    for k, appliance in enumerate(scenario.appliances):
        table.add_row(str(appliance_channel(k)), appliance.name, appliance.category.value, f"{appliance.nominal_p:.1f}")
    console.print(table)
    console.print(f"[green]✓[/green] {len(scenario.truth)} events over {scenario.n_cycles} cycles written to {out}")


@main.command()
@click.argument("db_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out", type=click.Path(dir_okay=False), required=True, help="Feature CSV to write")
@click.option("--spaces", default="PQ,HAR,WS", show_default=True)
@seed_option
@handle_errors
def extract(db_path, out, spaces, seed):
    """Export feature vectors of a signature database as CSV."""
    space_list = [FeatureSpace(s) for s in _split_list(spaces)]
    _echo_config("extract", {"db": db_path, "out": out, "spaces": [s.value for s in space_list], "seed": seed})

    rows = []
    for record in read_signature_db(Path(db_path)):
        row = {
            "event_index": record.delta.event_index,
            "polarity": record.delta.polarity.value,
            "p_delta": record.delta.p_delta,
            "label": record.label,
            "cluster": record.cluster,
        }
        for space in space_list:
            row.update(zip(feature_names(space), _features(record, space)))
        rows.append(row)
    frame = pd.DataFrame(rows)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False)
    console.print(f"[green]✓[/green] Wrote {len(frame)} feature rows to {out}")


@main.command()
@click.argument("db_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out", type=click.Path(file_okay=False), required=True, help="Output directory")
@click.option("--space", type=click.Choice(SPACES), default="PQ", show_default=True)
@click.option("--k", "k", type=int, default=None, help="Cluster count (default: silhouette scan)")
@seed_option
@handle_errors
def cluster(db_path, out, space, k, seed):
    """Group signatures with K-means and store cluster ids."""
    seed = seed or 0
    space = FeatureSpace(space)
    _echo_config("cluster", {"db": db_path, "out": out, "space": space.value, "k": k, "seed": seed})

    records = read_signature_db(Path(db_path))
    X = np.stack([_features(r, space) for r in records]) if records else np.empty((0, space.dim))
    if len(X) == 0:
        raise InsufficientDataError("No signatures to cluster")
    mean, std = zscore_stats(X)
    Z = (X - mean) / std
    clustering = kmeans(Z, k, seed) if k else select_k(Z, seed)[1]

    labels = [r.label for r in records]
    score = purity(clustering, labels) if all(label is not None for label in labels) else None
    out_dir = Path(out)
    clustered = [
        SignatureRecord(delta=r.delta, features=r.features, label=r.label, cluster=int(c), source=r.source)
        for r, c in zip(records, clustering.assignments)
    ]
    write_signature_db(clustered, out_dir / "signatures.jsonl")
    save_json(out_dir / "clusters.json", {
        "k": clustering.k,
        "space": space.value,
        "seed": seed,
        "sizes": clustering.sizes(),
        "wcss": clustering.wcss,
        "purity": score,
    })

    console.print(f"[green]✓[/green] k={clustering.k}, WCSS {clustering.wcss:.4g}")
    if score is not None:
        console.print(f"  purity: {score:.4f}")


@main.command(name="model-select")
@click.argument("db_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out", type=click.Path(file_okay=False), required=True, help="Output directory")
@click.option("--algorithm", type=click.Choice(["ANN", "ANN+EA", "SVM"]), required=True)
@click.option("--space", type=click.Choice(SPACES), default="WS", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="DeConfig document")
@click.option("--fractions", default=None, help="train,cv,test fractions (default 0.45,0.1,0.45)")
@seed_option
@handle_errors
def model_select_command(db_path, out, algorithm, space, config_path, fractions, seed):
    """Tune classifier hyperparameters by differential evolution."""
    overrides = {"seed": seed}
    de = load_config(Path(config_path), DeConfig, overrides) if config_path else validate_config(
        {k: v for k, v in overrides.items() if v is not None}, DeConfig
    )
    space = FeatureSpace(space)
    fr = _fractions(fractions)
    _echo_config("model-select", {
        "db": db_path, "out": out, "algorithm": algorithm, "space": space.value,
        "fractions": list(fr), "de": de.model_dump(mode="json"),
    })

    data, class_labels = _dataset(read_signature_db(Path(db_path)), space)
    selection = model_select(algorithm, split(data, fr, de.seed), de)
    out_dir = Path(out)
    save_json(out_dir / "params.json", {
        "algorithm": algorithm,
        "space": space.value,
        "class_labels": class_labels,
        "params": selection.params.model_dump(mode="json"),
        "genes": selection.result.genes_by_name(),
        "cv_error": selection.cv_error,
        "stop_reason": selection.result.stop_reason,
        "evaluations": selection.result.n_evaluations,
    })
    export_history_csv(selection.result, out_dir / "history.csv")

    console.print(f"[green]✓[/green] {algorithm}: {selection.result.genes_by_name()}")
    console.print(f"  CV error {selection.cv_error:.4f} ({selection.result.stop_reason}, "
                  f"{selection.result.n_evaluations} evaluations)")


@main.command()
@click.argument("db_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out", type=click.Path(dir_okay=False), required=True, help="Model file to write")
@click.option("--algorithm", type=click.Choice(ALGORITHMS), required=True)
@click.option("--space", type=click.Choice(SPACES), default="WS", show_default=True)
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False),
              help="ClassifierParams document (or a model-select params.json)")
@click.option("--fractions", default=None, help="train,cv,test fractions (default 0.45,0.1,0.45)")
@seed_option
@handle_errors
def train(db_path, out, algorithm, space, params_path, fractions, seed):
    """Train a classifier on a signature database."""
    seed = seed or 0
    params = ClassifierParams()
    if params_path:
        document = load_json(Path(params_path)) if str(params_path).endswith(".json") else {}
        if "params" in document:
            params = validate_config(document["params"], ClassifierParams)
        else:
            params = load_config(Path(params_path), ClassifierParams)
    space = FeatureSpace(space)
    fr = _fractions(fractions)
    _echo_config("train", {
        "db": db_path, "out": out, "algorithm": algorithm, "space": space.value,
        "fractions": list(fr), "params": params.model_dump(mode="json"), "seed": seed,
    })

    data, class_labels = _dataset(read_signature_db(Path(db_path)), space)
    parts = split(data, fr, seed)
    model = train_model(algorithm, parts, params, seed)
    write_model(model, Path(out))
    save_json(Path(f"{out}.meta.json"), {
        "algorithm": algorithm,
        "space": space.value,
        "class_labels": class_labels,
        "fractions": list(fr),
        "seed": seed,
    })

    console.print(f"[green]✓[/green] {algorithm} model written to {out}")
    for name, part in (("train", parts.train), ("test", parts.test)):
        if len(part):
            console.print(f"  {name} η: {precision(predict_many(model, part.X), part.y):.4f}")
        else:
            console.print(f"  {name} η: [dim]absent[/dim]")


@main.command()
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("db_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out", type=click.Path(file_okay=False), required=True, help="Output directory")
@seed_option
@handle_errors
def evaluate(model_path, db_path, out, seed):
    """Score a trained model on every labeled signature of a database."""
    meta = load_json(Path(f"{model_path}.meta.json"))
    if not meta:
        raise InsufficientDataError(f"No metadata next to {model_path}; train it with 'wsnilm train'")
    space = FeatureSpace(meta["space"])
    _echo_config("evaluate", {"model": model_path, "db": db_path, "out": out, "space": space.value, "seed": seed})

    model = read_model(Path(model_path))
    data, class_labels = _dataset(read_signature_db(Path(db_path)), space, meta["class_labels"])
    predicted = predict_many(model, data.X)
    eta = precision(predicted, data.y)
    matrix = confusion_matrix(data.y, predicted, len(class_labels))

    out_dir = Path(out)
    save_json(out_dir / "evaluation.json", {
        "model": str(model_path),
        "db": str(db_path),
        "space": space.value,
        "events": len(data),
        "correct": int(np.count_nonzero(predicted == data.y)),
        "eta": eta,
        "class_labels": class_labels,
        "confusion": matrix,
    })
    pd.DataFrame(matrix, index=class_labels, columns=class_labels).rename_axis("truth").to_csv(
        out_dir / "confusion.csv"
    )
    console.print(f"[green]✓[/green] η = {eta:.4f} over {len(data)} events")


def _load_experiment(config_path: str, seed: Optional[int], trials: Optional[int]) -> ExperimentSpec:
    return load_config(Path(config_path), ExperimentSpec, overrides={"seed": seed, "trials": trials})


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out", type=click.Path(file_okay=False), required=True, help="Report directory")
@click.option("--trials", type=int, default=None, help="Override the trial count")
@click.option("--workers", type=int, default=None, help="Parallel trials (default WSNILM_WORKERS)")
@seed_option
@click.pass_obj
@handle_errors
def experiment(settings, config_path, out, trials, workers, seed):
    """Run one Monte-Carlo experiment."""
    spec = _load_experiment(config_path, seed, trials)
    _echo_config("experiment", {**spec.model_dump(mode="json"), "out": out})

    report = run_experiment(spec, workers or settings.workers)
    report.save(Path(out))
    console.print(_summary_table(report.summary(), "Precision η"))
    if report.purity is not None:
        console.print(f"  cluster purity: {report.purity:.4f}")
    console.print(f"[green]✓[/green] Report written to {out}")


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out", type=click.Path(file_okay=False), required=True, help="Sweep directory")
@click.option("--axis", type=click.Choice(SWEEP_AXES), required=True)
@click.option("--values", "values", required=True,
              help="Comma-separated axis values (split values as train/cv/test)")
@click.option("--trials", type=int, default=None, help="Override the trial count")
@click.option("--workers", type=int, default=None, help="Parallel trials (default WSNILM_WORKERS)")
@seed_option
@click.pass_obj
@handle_errors
def sweep(settings, config_path, out, axis, values, trials, workers, seed):
    """Run one experiment per value of a sensitivity axis."""
    spec = _load_experiment(config_path, seed, trials)
    value_list = _split_list(values)
    _echo_config("sweep", {**spec.model_dump(mode="json"), "out": out, "axis": axis, "values": value_list})

    result = run_sweep(spec, axis, value_list, workers or settings.workers)
    result.save(Path(out))
    console.print(_summary_table(result.summary_frame(), f"Precision η by {axis}"))
    console.print(f"[green]✓[/green] Sweep written to {out}")


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--out", "out", type=click.Path(dir_okay=False), default=None, help="Write the summary as CSV")
@seed_option
@handle_errors
def report(path, out, seed):
    """Render a saved experiment report or sweep."""
    path = Path(path)
    if path.is_dir() and (path / "sweep_summary.csv").exists():
        frame = pd.read_csv(path / "sweep_summary.csv")
        console.print(_summary_table(frame, f"Sweep {path.name}"))
    else:
        loaded = MetricsReport.load(path)
        frame = loaded.summary()
        console.print(_summary_table(frame, "Precision η"))
        console.print(
            f"  events (all trials): {loaded.n_events}, classes: {loaded.n_classes}, "
            f"labeling: {loaded.labeling}"
        )
        if loaded.purity is not None:
            console.print(f"  cluster purity: {loaded.purity:.4f}")
        if loaded.absent_sets:
            console.print(f"  [dim]absent sets: {', '.join(loaded.absent_sets)}[/dim]")
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False)
        console.print(f"[green]✓[/green] Summary written to {out}")


@main.command()
@click.argument("db_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out", type=click.Path(dir_okay=False), default=None, help="Write the info as JSON")
@seed_option
@handle_errors
def db(db_path, out, seed):
    """Describe a signature database."""
    info = signature_db_info(Path(db_path))
    info["size"] = format_file_size(Path(db_path).stat().st_size)

    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Field")
    table.add_column("Value")
    for key in ("path", "schema", "version", "count", "labeled", "labels", "feature_spaces", "size"):
        value = info[key]
        table.add_row(key, ", ".join(str(v) for v in value) if isinstance(value, list) else str(value))
    console.print(table)
    if out:
        save_json(Path(out), info)


if __name__ == "__main__":
    main()
