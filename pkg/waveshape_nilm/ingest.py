"""
Corpus and database I/O.

Waveform corpus: a directory holding ``header.txt`` (key=value), one stream
file for the voltage and one per current channel, and an optional
``truth.csv`` event log. Streams are text (one sample per line) or packed
little-endian float32 with a 16-byte header (magic ``WSNL``, uint16 version,
uint16 reserved, uint64 sample count).

Signature and model databases: line-delimited JSON whose first line is a
header ``{"count": n, "schema": ..., "version": 1}``.
"""

import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import (
    ArgumentError,
    ConcurrentWriteError,
    LoadError,
    RowParseError,
    SampleCountError,
    VersionMismatchError,
)
from .events import DeltaSignature, Polarity
from .features import FeatureSpace, FeatureVector
from .signal import CyclePair, Waveform, resample
from .utils import convert_numpy
from .validator import (
    CORPUS_FORMAT,
    CORPUS_VERSION,
    ENCODINGS,
    F32_HEADER,
    F32_MAGIC,
    HEADER_FILE,
    TRUTH_FILE,
    channel_file,
    header_channels,
    validate_corpus,
    voltage_file,
)

logger = logging.getLogger(__name__)

SIGNATURE_SCHEMA = "wsnilm-signatures"
MODEL_SCHEMA = "wsnilm-model"
DB_VERSION = 1
TRUTH_COLUMNS = ["event_index", "appliance", "polarity"]


@dataclass(frozen=True)
class ChannelMap:
    """Circuit labels of a metered household."""

    entries: Tuple[Tuple[int, str], ...]
    mains_channels: Tuple[int, ...] = ()

    def __post_init__(self):
        entries = tuple((int(cid), str(name)) for cid, name in self.entries)
        mains = tuple(int(c) for c in self.mains_channels)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "mains_channels", mains)
        ids = [cid for cid, _ in entries]
        if len(set(ids)) != len(ids):
            raise ArgumentError(f"Duplicate channel ids in {ids}")
        missing = sorted(set(mains) - set(ids))
        if missing:
            raise ArgumentError(f"Mains channels {missing} are not declared channels")

    @property
    def ids(self) -> List[int]:
        return [cid for cid, _ in self.entries]

    def name_of(self, channel_id: int) -> str:
        for cid, name in self.entries:
            if cid == channel_id:
                return name
        raise ArgumentError(f"Unknown channel {channel_id}")

    def appliance_channels(self) -> List[int]:
        return [cid for cid in self.ids if cid not in self.mains_channels]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "channel": self.ids,
                "appliance": [name for _, name in self.entries],
                "mains": [cid in self.mains_channels for cid in self.ids],
            }
        )

    @classmethod
    def redd_house3(cls) -> "ChannelMap":
        """Circuit layout of REDD household 3 (22 channels, mains on 1 and 2)."""
        names = [
            "mains", "mains", "unknown", "unknown", "lighting", "electronics",
            "refrigerator", "disposal", "dishwasher", "furnace", "lighting",
            "unknown", "washer_dryer", "washer_dryer", "lighting", "microwave",
            "lighting", "smoke_alarms", "lighting", "bathroom_gfi",
            "kitchen_outlets", "kitchen_outlets",
        ]
        return cls(entries=tuple(enumerate(names, start=1)), mains_channels=(1, 2))


@dataclass(frozen=True)
class Corpus:
    """Streams of one corpus directory on a shared sampling grid."""

    channel_map: ChannelMap
    voltage: Waveform
    currents: Dict[int, Waveform]
    truth: Optional[pd.DataFrame] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def streams(self) -> Dict[Any, Waveform]:
        return {"voltage": self.voltage, **self.currents}

    def mains_current(self) -> Waveform:
        """Sum of the mains channels (all channels when none is marked mains)."""
        ids = list(self.channel_map.mains_channels) or list(self.currents)
        total = np.sum([self.currents[cid].samples for cid in ids], axis=0)
        return self.voltage.with_samples(total)


@dataclass(frozen=True)
class SignatureRecord:
    """One stored delta signature with its features and label."""

    delta: DeltaSignature
    features: Dict[FeatureSpace, FeatureVector] = field(default_factory=dict)
    label: Optional[int] = None
    cluster: Optional[int] = None
    source: str = ""


def _read_text_column(path: Path) -> np.ndarray:
    """Read one-sample-per-line text, reporting every unparseable row."""
    try:
        frame = pd.read_csv(
            path, header=None, dtype=str, skip_blank_lines=False, keep_default_na=False
        )
    except pd.errors.EmptyDataError:
        return np.empty(0)
    except pd.errors.ParserError as e:
        raise RowParseError(f"{path.name}: {e}") from e

    values = pd.to_numeric(frame.iloc[:, 0].str.strip(), errors="coerce")
    bad = values.isna()
    if frame.shape[1] > 1:
        bad |= (frame.iloc[:, 1:] != "").any(axis=1)
    if bad.any():
        rows = (np.flatnonzero(bad.to_numpy()) + 1).tolist()
        shown = ", ".join(str(r) for r in rows[:10])
        raise RowParseError(f"{path.name}: {len(rows)} unparseable rows (lines {shown})", rows)
    return values.to_numpy(dtype=float)


def _read_f32(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        magic, version, _, count = F32_HEADER.unpack(f.read(F32_HEADER.size))
        data = np.frombuffer(f.read(), dtype="<f4")
    if magic != F32_MAGIC:
        raise LoadError(f"{path.name}: bad magic {magic!r}")
    if version != CORPUS_VERSION:
        raise VersionMismatchError(f"{path.name}: binary version {version}, expected {CORPUS_VERSION}")
    if len(data) != count:
        raise SampleCountError(f"{path.name}: header declares {count} samples, file holds {len(data)}")
    return data.astype(float)


def _read_truth(path: Path, scale: float) -> pd.DataFrame:
    truth = pd.read_csv(path)
    missing = [c for c in TRUTH_COLUMNS if c not in truth.columns]
    if missing:
        raise LoadError(f"{path.name} lacks columns {missing}")
    if scale != 1.0:
        truth["event_index"] = np.rint(truth["event_index"] * scale).astype(int)
    return truth


def read_waveform_corpus(path: Path) -> Corpus:
    """
    Load a waveform corpus directory.

    Streams are checked for a common sample count and, when the header's
    samples per cycle is not a power of two, linearly resampled onto the
    nearest power-of-two grid.

    Args:
        path: corpus directory

    Returns:
        Corpus with channel map, voltage, per-channel currents and truth log
    """
    path = Path(path)
    result = validate_corpus(path)
    if not result.valid:
        result.raise_first()
    for warning in result.warnings:
        logger.warning(f"{path.name}: {warning}")

    header = result.metadata["header"]
    sample_rate = float(header["sample_rate"])
    mains_freq = float(header["mains_freq"])
    encoding = header.get("encoding", "text")
    reader = _read_f32 if encoding == "f32" else _read_text_column
    entries, mains = header_channels(header)

    def load(stream_path: Path) -> Waveform:
        return resample(reader(stream_path), sample_rate, mains_freq)

    voltage = load(voltage_file(path, header))
    currents = {cid: load(channel_file(path, cid, encoding)) for cid, _ in entries}
    for cid, stream in currents.items():
        if len(stream) != len(voltage):
            raise SampleCountError(
                f"Channel {cid} has {len(stream)} samples, voltage has {len(voltage)}"
            )

    truth = None
    if (path / TRUTH_FILE).exists():
        truth = _read_truth(path / TRUTH_FILE, voltage.sample_rate / sample_rate)

    logger.info(
        f"Read corpus {path.name}: {len(currents)} channels x {len(voltage)} samples "
        f"at {voltage.sample_rate:g} Hz"
        + (f", {len(truth)} logged events" if truth is not None else "")
    )
    metadata = {k: v for k, v in header.items() if not k.startswith("channel.")}
    return Corpus(
        channel_map=ChannelMap(entries=tuple(entries), mains_channels=tuple(mains)),
        voltage=voltage,
        currents=currents,
        truth=truth,
        metadata=metadata,
    )


def _write_stream(path: Path, samples: np.ndarray, encoding: str) -> None:
    if encoding == "f32":
        with open(path, "wb") as f:
            f.write(F32_HEADER.pack(F32_MAGIC, CORPUS_VERSION, 0, len(samples)))
            f.write(np.asarray(samples, dtype="<f4").tobytes())
    else:
        pd.Series(np.asarray(samples, dtype=float)).to_csv(
            path, header=False, index=False, float_format="%.17g"
        )


def write_waveform_corpus(
    path: Path,
    channel_map: ChannelMap,
    voltage: Waveform,
    currents: Dict[int, Waveform],
    truth: Optional[pd.DataFrame] = None,
    encoding: str = "text",
) -> None:
    """
    Write streams as a corpus directory readable by read_waveform_corpus.

    Args:
        path: target directory (created)
        channel_map: circuit labels; every entry needs a stream in currents
        voltage: voltage stream
        currents: current stream per channel id
        truth: optional event log with columns event_index, appliance, polarity
        encoding: "text" or "f32"
    """
    if encoding not in ENCODINGS:
        raise ArgumentError(f"Unknown encoding {encoding!r}")
    missing = sorted(set(channel_map.ids) - set(currents))
    if missing:
        raise ArgumentError(f"No current stream for channels {missing}")
    for cid, stream in currents.items():
        if not stream.same_grid(voltage):
            raise ArgumentError(f"Channel {cid} is not on the voltage sampling grid")

    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = [
        f"format={CORPUS_FORMAT}",
        f"version={CORPUS_VERSION}",
        f"sample_rate={voltage.sample_rate:.17g}",
        f"mains_freq={voltage.mains_freq:.17g}",
        f"encoding={encoding}",
        f"samples={len(voltage)}",
        f"voltage=voltage{ENCODINGS[encoding]}",
    ]
    lines += [f"channel.{cid}={name}" for cid, name in channel_map.entries]
    lines.append("mains=" + ",".join(str(c) for c in channel_map.mains_channels))
    with open(path / HEADER_FILE, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")

    _write_stream(path / f"voltage{ENCODINGS[encoding]}", voltage.samples, encoding)
    for cid in channel_map.ids:
        _write_stream(channel_file(path, cid, encoding), currents[cid].samples, encoding)
    if truth is not None:
        truth[TRUTH_COLUMNS].to_csv(path / TRUTH_FILE, index=False)
    logger.info(f"Wrote corpus {path} ({len(channel_map.ids)} channels, {encoding})")


@contextmanager
def _exclusive_write(path: Path) -> Iterator[Path]:
    """Hold a lock file next to path and yield a temp path that replaces it on success."""
    lock = path.with_name(path.name + ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as e:
        raise ConcurrentWriteError(f"{path} is locked by another writer ({lock.name})") from e
    os.close(fd)
    tmp = path.with_name(path.name + ".tmp")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
        lock.unlink()


def _write_jsonl(path: Path, schema: str, records: Sequence[Dict[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"count": len(records), "schema": schema, "version": DB_VERSION}
    with _exclusive_write(path) as tmp:
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(json.dumps(header, sort_keys=True) + "\n")
            for record in records:
                f.write(json.dumps(convert_numpy(record), sort_keys=True) + "\n")


def _read_jsonl(path: Path, schema: str) -> List[Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"Database file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise LoadError(f"{path.name} is empty (no header line)")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise LoadError(f"{path.name}: unreadable header line") from e
    if header.get("schema") != schema:
        raise VersionMismatchError(f"{path.name}: schema {header.get('schema')!r}, expected {schema!r}")
    if header.get("version") != DB_VERSION:
        raise VersionMismatchError(f"{path.name}: version {header.get('version')}, expected {DB_VERSION}")

    records, bad = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            bad.append(lineno)
    if bad:
        raise RowParseError(f"{path.name}: {len(bad)} unparseable records", bad)
    if len(records) != header.get("count"):
        raise LoadError(f"{path.name}: header declares {header.get('count')} records, found {len(records)}")
    return records


def record_to_dict(record: SignatureRecord) -> Dict[str, Any]:
    delta = record.delta
    return {
        "cycle": {"v": delta.cycle.v, "i": delta.cycle.i, "mains_freq": delta.cycle.mains_freq},
        "event_index": delta.event_index,
        "polarity": delta.polarity.value,
        "p_delta": delta.p_delta,
        "features": {
            space.value: {"values": vec.values, "label": vec.label}
            for space, vec in sorted(record.features.items(), key=lambda kv: kv[0].value)
        },
        "label": record.label,
        "cluster": record.cluster,
        "source": record.source,
    }


def record_from_dict(data: Dict[str, Any]) -> SignatureRecord:
    cycle = data["cycle"]
    delta = DeltaSignature(
        cycle=CyclePair(v=cycle["v"], i=cycle["i"], mains_freq=cycle["mains_freq"]),
        event_index=int(data["event_index"]),
        polarity=Polarity(data["polarity"]),
        p_delta=float(data["p_delta"]),
    )
    features = {
        FeatureSpace(name): FeatureVector(space=name, values=vec["values"], label=vec["label"])
        for name, vec in data.get("features", {}).items()
    }
    return SignatureRecord(
        delta=delta,
        features=features,
        label=data.get("label"),
        cluster=data.get("cluster"),
        source=data.get("source", ""),
    )


def check_labels(records: Sequence[SignatureRecord], channel_map: ChannelMap) -> None:
    """Labels of unclustered records must name a channel of the map."""
    known = set(channel_map.ids)
    for n, record in enumerate(records):
        if record.label is not None and record.cluster is None and record.label not in known:
            raise ArgumentError(f"Record {n} label {record.label} is not a channel of the map")


def write_signature_db(
    records: Sequence[SignatureRecord],
    path: Path,
    channel_map: Optional[ChannelMap] = None,
) -> None:
    """
    Write signature records as a versioned JSONL database.

    Fails fast with ConcurrentWriteError when another writer holds the lock.
    """
    if channel_map is not None:
        check_labels(records, channel_map)
    _write_jsonl(path, SIGNATURE_SCHEMA, [record_to_dict(r) for r in records])
    logger.info(f"Wrote {len(records)} signature records to {path}")


def read_signature_db(path: Path) -> List[SignatureRecord]:
    """Read every record of a signature database."""
    records = [record_from_dict(d) for d in _read_jsonl(path, SIGNATURE_SCHEMA)]
    logger.info(f"Read {len(records)} signature records from {path}")
    return records


def signature_db_info(path: Path) -> Dict[str, Any]:
    """Header, record count and label/feature coverage of a signature database."""
    raw = _read_jsonl(path, SIGNATURE_SCHEMA)
    spaces = sorted({s for d in raw for s in d.get("features", {})})
    labels = sorted({d["label"] for d in raw if d.get("label") is not None})
    return {
        "path": str(path),
        "schema": SIGNATURE_SCHEMA,
        "version": DB_VERSION,
        "count": len(raw),
        "labeled": sum(1 for d in raw if d.get("label") is not None),
        "labels": labels,
        "feature_spaces": spaces,
    }


def write_model(model: Any, path: Path) -> None:
    """Persist a trained classifier through the versioned JSONL machinery."""
    _write_jsonl(path, MODEL_SCHEMA, [model.to_dict()])
    logger.info(f"Wrote {model.to_dict()['kind']} model to {path}")


def read_model(path: Path) -> Any:
    """Load a classifier written by write_model."""
    from .learn import model_from_dict

    records = _read_jsonl(path, MODEL_SCHEMA)
    if len(records) != 1:
        raise LoadError(f"{Path(path).name} holds {len(records)} models, expected 1")
    return model_from_dict(records[0])
