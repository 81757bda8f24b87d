"""
Monte-Carlo experiment runner.

An experiment loads or generates a stream, cuts delta signatures at its
events, labels them from the truth log or by clustering, splits the data with
a trial seed and scores each (feature space, algorithm) cell with the
precision ratio of correct predictions to events. A generated scenario is
regenerated in every trial from the trial seed; a corpus is read once and
shared by all trials.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import (
    ArgumentError,
    BoundaryError,
    ConfigError,
    DataError,
    InsufficientDataError,
    MalformedSignalError,
    NumericError,
)
from .events import SETTLE_CYCLES, DeltaSignature, detect_events, extract_delta, kmeans, purity, select_k
from .features import FeatureSpace, featurize
from .ingest import Corpus, SignatureRecord, read_waveform_corpus
from .learn import (
    Algorithm,
    ClassifierParams,
    Dataset,
    SplitDataset,
    confusion_matrix,
    predict_many,
    split,
    train_model,
)
from .learn.ann import zscore_stats
from .learn.dataset import DEFAULT_FRACTIONS, check_fractions
from .optimize import DeConfig, model_select
from .simulate import Scenario, ScenarioConfig, appliance_channel, generate_scenario
from .utils import derive_seed, load_json, save_json

logger = logging.getLogger(__name__)

SETS = ("train", "cv", "test", "overall")
SWEEP_AXES = ("split", "p_min", "snr_db", "dynamics")
MIN_EVENTS_PER_CLASS = 3
REPORT_FILE = "report.json"
TRIALS_FILE = "trials.csv"
SUMMARY_FILE = "summary.csv"
SAMPLE_COLUMNS = ["trial", "seed", "space", "algorithm", "set", "correct", "total", "eta"]


def precision(predicted: Sequence[int], truth: Sequence[int]) -> float:
    """Correct predictions over total events."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if len(truth) == 0:
        raise ArgumentError("precision of an empty prediction set")
    if predicted.shape != truth.shape:
        raise ArgumentError(f"Got {len(predicted)} predictions for {len(truth)} labels")
    return int(np.count_nonzero(predicted == truth)) / len(truth)


class ExperimentSpec(BaseModel):
    """One Monte-Carlo experiment: data source, pipeline switches and the cells to score."""

    spaces: List[FeatureSpace] = Field(default_factory=lambda: [FeatureSpace.WS], min_length=1)
    algorithms: List[Algorithm] = Field(default_factory=lambda: [Algorithm.ADABOOST], min_length=1)
    fractions: Tuple[float, float, float] = DEFAULT_FRACTIONS
    p_min: float = Field(default=50.0, ge=0.0)
    trials: int = Field(default=1, ge=1)
    corpus: Optional[Path] = None
    scenario: Optional[ScenarioConfig] = None
    model_selection: bool = False
    de: DeConfig = Field(default_factory=DeConfig)
    params: ClassifierParams = Field(default_factory=ClassifierParams)
    labeling: Literal["auto", "truth", "cluster"] = "auto"
    event_source: Literal["truth", "detect"] = "truth"
    orient_off_events: bool = True
    cluster_space: FeatureSpace = FeatureSpace.PQ
    n_clusters: Optional[int] = Field(default=None, ge=1)
    seed: int = 0

    @field_validator("fractions")
    @classmethod
    def _fractions(cls, value):
        return check_fractions(value)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.corpus is None) == (self.scenario is None):
            raise ValueError("exactly one of corpus or scenario must be set")
        return self

    @property
    def settle(self) -> int:
        return self.scenario.settle if self.scenario is not None else SETTLE_CYCLES


def _truth_lookup(truth: Optional[pd.DataFrame]) -> Dict[int, int]:
    if truth is None:
        return {}
    return dict(zip(truth["event_index"].astype(int), truth["appliance"].astype(int)))


def _match_truth(events: Sequence[int], truth: Optional[pd.DataFrame], tolerance: int) -> List[Optional[int]]:
    """Label each detected event with the nearest logged event within tolerance samples."""
    if truth is None or truth.empty:
        return [None] * len(events)
    logged = truth["event_index"].to_numpy(dtype=int)
    order = np.argsort(logged)
    logged = logged[order]
    appliances = truth["appliance"].to_numpy(dtype=int)[order]
    labels: List[Optional[int]] = []
    for e in events:
        k = int(np.searchsorted(logged, e))
        near = [j for j in (k - 1, k) if 0 <= j < len(logged)]
        j = min(near, key=lambda j: abs(logged[j] - e))
        labels.append(int(appliances[j]) if abs(logged[j] - e) <= tolerance else None)
    return labels


def collect_signatures(
    source: Union[Scenario, Corpus],
    p_min: float,
    event_source: str = "truth",
    settle: int = SETTLE_CYCLES,
    name: str = "",
) -> Tuple[List[SignatureRecord], Dict[str, int]]:
    """
    Delta signatures of a scenario or corpus, labeled by channel where the truth log allows.

    Events come from the truth log ("truth", perfect recall) or from the
    detector ("detect", matched to the log within one settle window).
    Signatures with |p_delta| < p_min are dropped.

    Returns:
        (records, drop counts by cause)
    """
    dropped = {"boundary": 0, "p_min": 0}
    if isinstance(source, Scenario):
        truth = source.truth.assign(appliance=source.truth["appliance"].map(appliance_channel))
        n = source.n
        events = truth["event_index"].tolist() if event_source == "truth" else source.detect(p_min)
        cut = source.delta_at
    else:
        truth = source.truth
        v, i = source.voltage, source.mains_current()
        n = v.samples_per_cycle
        if event_source == "truth":
            if truth is None:
                raise ConfigError("event_source 'truth' needs a corpus with a truth log")
            events = truth["event_index"].tolist()
        else:
            events = detect_events(i, p_min, v, settle)

        def cut(e: int) -> DeltaSignature:
            return extract_delta(v, i, e, settle)

    if event_source == "truth":
        lookup = _truth_lookup(truth)
        labels = [lookup.get(int(e)) for e in events]
    else:
        labels = _match_truth(events, truth, settle * n)

    records = []
    for e, label in zip(events, labels):
        try:
            delta = cut(int(e))
        except (BoundaryError, MalformedSignalError) as err:
            logger.debug(f"Skipping event at {e}: {err}")
            dropped["boundary"] += 1
            continue
        if abs(delta.p_delta) < p_min:
            dropped["p_min"] += 1
            continue
        records.append(SignatureRecord(delta=delta, label=label, source=f"{name}@{int(e)}"))

    if dropped["boundary"]:
        logger.warning(f"Dropped {dropped['boundary']} events too close to the stream edge")
    logger.info(f"Collected {len(records)} signatures ({dropped['p_min']} below {p_min:g} W)")
    return records, dropped


def featurize_records(
    records: Sequence[SignatureRecord],
    spaces: Sequence[FeatureSpace],
    oriented: bool = True,
) -> Tuple[List[SignatureRecord], int]:
    """
    Attach feature vectors in every space; a record any extractor rejects is dropped.

    Returns:
        (featurized records, number dropped)
    """
    kept = []
    for record in records:
        try:
            features = {
                FeatureSpace(s): featurize(record.delta, s, label=record.label, oriented=oriented)
                for s in spaces
            }
        except (NumericError, DataError) as e:
            logger.debug(f"Extractor rejected {record.source}: {e}")
            continue
        kept.append(
            SignatureRecord(
                delta=record.delta,
                features={**record.features, **features},
                label=record.label,
                cluster=record.cluster,
                source=record.source,
            )
        )
    n_dropped = len(records) - len(kept)
    if n_dropped:
        logger.warning(f"Feature extraction dropped {n_dropped} of {len(records)} signatures")
    return kept, n_dropped


def feature_matrix(records: Sequence[SignatureRecord], space: FeatureSpace) -> np.ndarray:
    space = FeatureSpace(space)
    return np.stack([r.features[space].values for r in records])


@dataclass
class ExperimentData:
    """Features per space and contiguous class ids shared by every trial."""

    features: Dict[FeatureSpace, np.ndarray]
    y: np.ndarray
    class_labels: List[int]
    dropped: Dict[str, int]
    labeling: str
    purity: Optional[float] = None

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    @property
    def n_events(self) -> int:
        return len(self.y)


def load_source(spec: ExperimentSpec) -> Tuple[Union[Scenario, Corpus], str]:
    if spec.scenario is not None:
        return generate_scenario(spec.scenario), f"scenario-{spec.scenario.seed}"
    return read_waveform_corpus(spec.corpus), Path(spec.corpus).name


def _insufficient(n_events: int, n_classes: int, dropped: Dict[str, int], p_min: float) -> InsufficientDataError:
    causes = {k: v for k, v in dropped.items() if v}
    detail = ""
    if causes:
        culprit = max(causes, key=causes.get)
        label = f"p_min >= {p_min:g} W" if culprit == "p_min" else culprit
        detail = f"; the {label} filter dropped {causes[culprit]}"
    return InsufficientDataError(
        f"{n_events} events for {n_classes} classes remain, "
        f"need {MIN_EVENTS_PER_CLASS} per class{detail}"
    )


def prepare_data(spec: ExperimentSpec) -> ExperimentData:
    """
    Run the shared part of the pipeline: signatures, features and labels.

    Raises:
        InsufficientDataError: fewer than 3 events per class remain
    """
    source, name = load_source(spec)
    records, dropped = collect_signatures(source, spec.p_min, spec.event_source, spec.settle, name)
    spaces = list(dict.fromkeys([*spec.spaces, spec.cluster_space]))
    records, dropped["extract"] = featurize_records(records, spaces, spec.orient_off_events)

    if not records:
        raise _insufficient(0, 0, dropped, spec.p_min)
    truth = [r.label for r in records]
    has_truth = any(label is not None for label in truth)
    labeling = spec.labeling
    if labeling == "auto":
        labeling = "truth" if has_truth else "cluster"

    score = None
    if labeling == "truth":
        if not has_truth:
            raise ConfigError("labeling 'truth' needs a data source with a truth log")
        dropped["unlabeled"] = sum(1 for label in truth if label is None)
        records = [r for r in records if r.label is not None]
        raw = np.array([r.label for r in records], dtype=int)
    else:
        if len(records) < 3:
            raise InsufficientDataError(f"Only {len(records)} signatures to cluster")
        X = feature_matrix(records, spec.cluster_space)
        mean, std = zscore_stats(X)
        seed = derive_seed(spec.seed, "cluster")
        if spec.n_clusters:
            clustering = kmeans((X - mean) / std, spec.n_clusters, seed)
        else:
            _, clustering = select_k((X - mean) / std, seed)
        raw = clustering.assignments
        if has_truth and all(label is not None for label in truth):
            score = purity(clustering, truth)
            logger.info(f"Cluster purity {score:.3f}")

    class_labels, y = np.unique(raw, return_inverse=True)
    n_classes = len(class_labels)
    if len(y) < MIN_EVENTS_PER_CLASS * max(n_classes, 1):
        raise _insufficient(len(y), n_classes, dropped, spec.p_min)
    return ExperimentData(
        features={FeatureSpace(s): feature_matrix(records, s) for s in spec.spaces},
        y=y.astype(int),
        class_labels=[int(c) for c in class_labels],
        dropped=dropped,
        labeling=labeling,
        purity=score,
    )


def trial_spec(spec: ExperimentSpec, seed: int) -> ExperimentSpec:
    """The experiment one trial runs: a scenario source gets a seed derived from the trial seed."""
    if spec.scenario is None:
        return spec
    scenario = spec.scenario.model_copy(update={"seed": derive_seed(seed, "scenario")})
    return spec.model_copy(update={"scenario": scenario})


@dataclass(frozen=True)
class TrialTask:
    index: int
    seed: int
    spec: ExperimentSpec
    # Shared corpus data; None makes the trial generate its own scenario
    data: Optional[ExperimentData] = None


@dataclass
class TrialResult:
    index: int
    rows: List[Dict[str, Any]]
    confusion: Dict[str, np.ndarray]
    selections: List[Dict[str, Any]]
    n_events: int
    class_labels: List[int]
    dropped: Dict[str, int]
    labeling: str
    purity: Optional[float] = None


def cell_key(space: FeatureSpace, algorithm: Algorithm) -> str:
    return f"{FeatureSpace(space).value}/{Algorithm(algorithm).value}"


def _score_rows(model, parts: Dict[str, Dataset], base: Dict[str, Any]) -> List[Dict[str, Any]]:
    rows = []
    for name, part in parts.items():
        if len(part) == 0:
            continue
        predicted = predict_many(model, part.X)
        correct = int(np.count_nonzero(predicted == part.y))
        rows.append({**base, "set": name, "correct": correct, "total": len(part), "eta": correct / len(part)})
    return rows


def run_trial(task: TrialTask) -> TrialResult:
    """Score every space and algorithm pair on one trial-specific split."""
    spec = task.spec
    data = task.data if task.data is not None else prepare_data(trial_spec(spec, task.seed))
    split_seed = derive_seed(task.seed, "split")
    rows, confusion, selections = [], {}, []
    for space in spec.spaces:
        dataset = Dataset(X=data.features[FeatureSpace(space)], y=data.y, n_classes=data.n_classes)
        parts_split: SplitDataset = split(dataset, spec.fractions, split_seed)
        everything = parts_split.all()
        for algorithm in spec.algorithms:
            params = spec.params
            if spec.model_selection and algorithm != Algorithm.ADABOOST and len(parts_split.cv):
                de = spec.de.model_copy(update={"seed": derive_seed(task.seed, "de", algorithm.value)})
                selection = model_select(algorithm, parts_split, de, params)
                params = selection.params
                selections.append(
                    {
                        "trial": task.index,
                        "space": FeatureSpace(space).value,
                        "algorithm": algorithm.value,
                        "cv_error": selection.cv_error,
                        "genes": selection.result.genes_by_name(),
                        "stop_reason": selection.result.stop_reason,
                        "evaluations": selection.result.n_evaluations,
                    }
                )
            model = train_model(algorithm, parts_split, params, seed=derive_seed(task.seed, "train", algorithm.value))
            base = {
                "trial": task.index,
                "seed": task.seed,
                "space": FeatureSpace(space).value,
                "algorithm": algorithm.value,
            }
            parts = {
                "train": parts_split.train,
                "cv": parts_split.cv,
                "test": parts_split.test,
                "overall": everything,
            }
            rows.extend(_score_rows(model, parts, base))
            confusion[cell_key(space, algorithm)] = confusion_matrix(
                everything.y, predict_many(model, everything.X), data.n_classes
            )
    logger.info(f"Trial {task.index} finished")
    return TrialResult(
        index=task.index,
        rows=rows,
        confusion=confusion,
        selections=selections,
        n_events=data.n_events,
        class_labels=data.class_labels,
        dropped=dict(data.dropped),
        labeling=data.labeling,
        purity=data.purity,
    )


@dataclass
class MetricsReport:
    """
    Per-trial precision samples of every cell plus their summaries.

    samples holds one row per (trial, space, algorithm, set) with P_c
    (correct), P_t (total) and eta; summaries are recomputed from it.
    n_events, dropped and the confusion counts (overall set) are summed over
    trials; class_labels is the union of the trials' labels and indexes the
    confusion rows and columns. purity is the mean over clustered trials.
    """

    spec: Dict[str, Any]
    samples: pd.DataFrame
    confusion: Dict[str, np.ndarray]
    n_events: int
    n_classes: int
    class_labels: List[int]
    dropped: Dict[str, int]
    labeling: str
    purity: Optional[float] = None
    selections: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def absent_sets(self) -> List[str]:
        present = set(self.samples["set"]) if len(self.samples) else set()
        return [s for s in SETS if s not in present]

    def eta(
        self,
        space: Union[FeatureSpace, str],
        algorithm: Union[Algorithm, str],
        set_: str = "overall",
    ) -> np.ndarray:
        """eta samples of one cell in trial order."""
        s = self.samples
        mask = (
            (s["space"] == FeatureSpace(space).value)
            & (s["algorithm"] == Algorithm(algorithm).value)
            & (s["set"] == set_)
        )
        return s.loc[mask].sort_values("trial")["eta"].to_numpy(dtype=float)

    def median(self, space, algorithm, set_: str = "overall") -> float:
        values = self.eta(space, algorithm, set_)
        return float(np.median(values)) if len(values) else math.nan

    def summary(self) -> pd.DataFrame:
        """max / mean / median eta per cell and set."""
        if self.samples.empty:
            return pd.DataFrame(columns=["space", "algorithm", "set", "trials", "max", "mean", "median"])
        grouped = self.samples.groupby(["space", "algorithm", "set"])["eta"]
        frame = grouped.agg(trials="count", max="max", mean="mean", median="median").reset_index()
        frame["order"] = frame["set"].map(SETS.index)
        frame = frame.sort_values(["space", "algorithm", "order"]).drop(columns="order")
        return frame.reset_index(drop=True)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "spec": self.spec,
            "samples": self.samples.to_dict(orient="records"),
            "confusion": {k: v.tolist() for k, v in sorted(self.confusion.items())},
            "n_events": self.n_events,
            "n_classes": self.n_classes,
            "class_labels": self.class_labels,
            "dropped": self.dropped,
            "labeling": self.labeling,
            "purity": self.purity,
            "absent_sets": self.absent_sets,
            "selections": self.selections,
            "summary": self.summary().to_dict(orient="records"),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricsReport":
        return cls(
            spec=data.get("spec", {}),
            samples=pd.DataFrame(data.get("samples", []), columns=SAMPLE_COLUMNS),
            confusion={k: np.array(v, dtype=int) for k, v in data.get("confusion", {}).items()},
            n_events=int(data["n_events"]),
            n_classes=int(data["n_classes"]),
            class_labels=list(data.get("class_labels", [])),
            dropped=dict(data.get("dropped", {})),
            labeling=data.get("labeling", "truth"),
            purity=data.get("purity"),
            selections=list(data.get("selections", [])),
        )

    def save(self, out_dir: Path) -> Path:
        """Write report.json, trials.csv and summary.csv into out_dir."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_json(out_dir / REPORT_FILE, self.to_dict())
        self.samples.to_csv(out_dir / TRIALS_FILE, index=False)
        self.summary().to_csv(out_dir / SUMMARY_FILE, index=False)
        return out_dir / REPORT_FILE

    @classmethod
    def load(cls, path: Path) -> "MetricsReport":
        path = Path(path)
        if path.is_dir():
            path = path / REPORT_FILE
        data = load_json(path)
        if not data:
            raise DataError(f"No report found at {path}")
        return cls.from_dict(data)


def trial_seed(master: int, index: int, tag: Any = None) -> int:
    return derive_seed(master, "trial", index) if tag is None else derive_seed(master, "trial", index, tag)


def run_experiment(spec: ExperimentSpec, workers: int = 1, seed_tag: Any = None) -> MetricsReport:
    """
    Run all trials of an experiment.

    Scenario experiments generate a fresh scenario in every trial; corpus
    experiments prepare the signatures once. Trials run in a process pool
    when workers > 1; results are reduced in trial order, so the report does
    not depend on the worker count.

    Args:
        spec: experiment spec
        workers: trial-level parallelism
        seed_tag: extra value mixed into trial seeds (a sweep's axis value)

    Returns:
        MetricsReport
    """
    shared = prepare_data(spec) if spec.scenario is None else None
    tasks = [
        TrialTask(index=t, seed=trial_seed(spec.seed, t, seed_tag), spec=spec, data=shared)
        for t in range(spec.trials)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_trial, tasks))
    else:
        results = [run_trial(task) for task in tasks]
    results = sorted(results, key=lambda r: r.index)

    class_labels = sorted(set().union(*(r.class_labels for r in results)))
    position = {label: k for k, label in enumerate(class_labels)}
    rows: List[Dict[str, Any]] = []
    confusion: Dict[str, np.ndarray] = {}
    selections: List[Dict[str, Any]] = []
    dropped: Dict[str, int] = {}
    for result in results:
        rows.extend(result.rows)
        selections.extend(result.selections)
        index = [position[label] for label in result.class_labels]
        for key, matrix in result.confusion.items():
            total = confusion.setdefault(key, np.zeros((len(class_labels), len(class_labels)), dtype=int))
            total[np.ix_(index, index)] += matrix
        for cause, count in result.dropped.items():
            dropped[cause] = dropped.get(cause, 0) + count
    purities = [r.purity for r in results if r.purity is not None]

    report = MetricsReport(
        spec=spec.model_dump(mode="json"),
        samples=pd.DataFrame(rows, columns=SAMPLE_COLUMNS),
        confusion=confusion,
        n_events=sum(r.n_events for r in results),
        n_classes=len(class_labels),
        class_labels=class_labels,
        dropped=dropped,
        labeling=results[0].labeling,
        purity=float(np.mean(purities)) if purities else None,
        selections=selections,
    )
    logger.info(
        f"Experiment finished: {spec.trials} trials, {report.n_events} events, {report.n_classes} classes"
    )
    return report


def parse_axis_value(axis: str, raw: Any) -> Any:
    """Normalize a sweep value: split triples, watts, dB (None for no noise) or a dynamics flag."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"Unknown sweep axis {axis!r}; expected one of {', '.join(SWEEP_AXES)}")
    if axis == "split":
        if isinstance(raw, str):
            raw = [float(x) for x in raw.replace("/", ",").split(",")]
        return check_fractions(raw)
    if axis == "dynamics":
        if isinstance(raw, str):
            if raw.lower() not in ("on", "off", "true", "false", "1", "0"):
                raise ConfigError(f"Dynamics value must be on or off, got {raw!r}")
            return raw.lower() in ("on", "true", "1")
        return bool(raw)
    if axis == "snr_db" and (raw is None or str(raw).lower() in ("none", "inf", "off")):
        return None
    try:
        value = float(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Bad {axis} value {raw!r}") from e
    if axis == "snr_db" and value == math.inf:
        return None
    return value


def format_axis_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, tuple):
        return "/".join(f"{v:g}" for v in value)
    return f"{value:g}"


def apply_axis(spec: ExperimentSpec, axis: str, value: Any) -> ExperimentSpec:
    """Copy of spec with one sweep axis set."""
    value = parse_axis_value(axis, value)
    if axis == "split":
        return spec.model_copy(update={"fractions": value})
    if axis == "p_min":
        update: Dict[str, Any] = {"p_min": value}
        if spec.scenario is not None:
            update["scenario"] = spec.scenario.model_copy(update={"p_min": value})
        return spec.model_copy(update=update)
    if spec.scenario is None:
        raise ConfigError(f"Sweeping {axis} needs a scenario data source")
    key = "snr_db" if axis == "snr_db" else "dynamics"
    return spec.model_copy(update={"scenario": spec.scenario.model_copy(update={key: value})})


@dataclass
class SweepResult:
    axis: str
    values: List[Any]
    reports: List[MetricsReport]

    def frame(self) -> pd.DataFrame:
        """Long-form trial samples with the axis value of each cell."""
        frames = [
            r.samples.assign(axis=self.axis, value=format_axis_value(v))
            for v, r in zip(self.values, self.reports)
        ]
        columns = ["axis", "value", *SAMPLE_COLUMNS]
        return pd.concat(frames, ignore_index=True)[columns] if frames else pd.DataFrame(columns=columns)

    def summary_frame(self) -> pd.DataFrame:
        frames = [
            r.summary().assign(axis=self.axis, value=format_axis_value(v))
            for v, r in zip(self.values, self.reports)
        ]
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()

    def save(self, out_dir: Path) -> None:
        """sweep.csv (long form), sweep_summary.csv and one report directory per value."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.frame().to_csv(out_dir / "sweep.csv", index=False)
        self.summary_frame().to_csv(out_dir / "sweep_summary.csv", index=False)
        for k, report in enumerate(self.reports):
            report.save(out_dir / f"cell_{k:02d}")


def sweep(spec: ExperimentSpec, axis: str, values: Sequence[Any], workers: int = 1) -> SweepResult:
    """
    One experiment per axis value, trial seeds mixed with the value.

    Args:
        spec: template experiment
        axis: split, p_min, snr_db or dynamics
        values: axis values (non-empty)
        workers: trial-level parallelism inside each experiment

    Returns:
        SweepResult
    """
    if not values:
        raise ConfigError("A sweep needs at least one value")
    parsed = [parse_axis_value(axis, v) for v in values]
    reports = []
    for value in parsed:
        logger.info(f"Sweep {axis} = {format_axis_value(value)}")
        tag = (axis, format_axis_value(value))
        reports.append(run_experiment(apply_axis(spec, axis, value), workers, seed_tag=tag))
    return SweepResult(axis=axis, values=parsed, reports=reports)
