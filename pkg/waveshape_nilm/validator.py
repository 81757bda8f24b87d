"""
Waveform corpus layout validator
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type

from .errors import (
    HeaderError,
    LoadError,
    MissingHeaderError,
    SampleCountError,
    VersionMismatchError,
)
from .utils import format_file_size, get_directory_size

CORPUS_FORMAT = "wsnilm-corpus"
CORPUS_VERSION = 1
HEADER_FILE = "header.txt"
TRUTH_FILE = "truth.csv"
ENCODINGS = {"text": ".txt", "f32": ".f32"}

# Packed binary: magic, uint16 version, uint16 reserved, uint64 sample count
F32_MAGIC = b"WSNL"
F32_HEADER = struct.Struct("<4sHHQ")


@dataclass
class ValidationResult:
    """Result of corpus validation."""

    valid: bool
    errors: List[str]
    warnings: List[str]
    metadata: Dict[str, Any]
    error_types: List[Type[LoadError]] = field(default_factory=list)

    def raise_first(self) -> None:
        """Raise the first recorded problem as its typed load error."""
        if self.errors:
            raise self.error_types[0](self.errors[0])


def parse_header(path: Path) -> Dict[str, str]:
    """
    Parse a key=value header file.

    Blank lines and lines starting with '#' are ignored; keys are case-sensitive.
    """
    header: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise HeaderError(f"{path.name} line {lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if key in header:
                raise HeaderError(f"{path.name} line {lineno}: duplicate key {key!r}")
            header[key] = value.strip()
    return header


def header_channels(header: Dict[str, str]) -> Tuple[List[Tuple[int, str]], List[int]]:
    """Channel entries and mains ids declared in a header."""
    entries = []
    for key, value in header.items():
        if key.startswith("channel."):
            try:
                entries.append((int(key.split(".", 1)[1]), value))
            except ValueError as e:
                raise HeaderError(f"Channel key {key!r} is not channel.<integer>") from e
    entries.sort()
    mains_text = header.get("mains", "")
    try:
        mains = [int(x) for x in mains_text.split(",") if x.strip()]
    except ValueError as e:
        raise HeaderError(f"mains={mains_text!r} is not a comma-separated list of ids") from e
    return entries, mains


def channel_file(directory: Path, channel_id: int, encoding: str) -> Path:
    return directory / f"channel_{channel_id}{ENCODINGS[encoding]}"


def voltage_file(directory: Path, header: Dict[str, str]) -> Path:
    encoding = header.get("encoding", "text")
    return directory / header.get("voltage", f"voltage{ENCODINGS.get(encoding, '.txt')}")


def read_f32_count(path: Path) -> int:
    """Sample count declared in a packed f32 file, checking magic and version."""
    with open(path, "rb") as f:
        raw = f.read(F32_HEADER.size)
    if len(raw) < F32_HEADER.size:
        raise LoadError(f"{path.name}: truncated binary header")
    magic, version, _, count = F32_HEADER.unpack(raw)
    if magic != F32_MAGIC:
        raise LoadError(f"{path.name}: bad magic {magic!r}")
    if version != CORPUS_VERSION:
        raise VersionMismatchError(f"{path.name}: binary version {version}, expected {CORPUS_VERSION}")
    return count


def count_text_rows(path: Path) -> int:
    with open(path, "rb") as f:
        return sum(1 for _ in f)


class CorpusValidator:
    """Validator for waveform corpus directories."""

    REQUIRED_KEYS = ["format", "version", "sample_rate", "mains_freq"]

    def __init__(self, corpus_directory: Path):
        """
        Initialize validator for a corpus directory.

        Args:
            corpus_directory: Path to corpus directory
        """
        self.corpus_directory = Path(corpus_directory)
        self.errors: List[str] = []
        self.error_types: List[Type[LoadError]] = []
        self.warnings: List[str] = []
        self.metadata: Dict[str, Any] = {}
        self.header: Dict[str, str] = {}

    def _error(self, kind: Type[LoadError], message: str) -> None:
        self.errors.append(message)
        self.error_types.append(kind)

    def validate(self) -> ValidationResult:
        """
        Validate corpus header, channel files and sample counts.

        Returns:
            ValidationResult with validation status and details
        """
        self.errors, self.error_types, self.warnings = [], [], []
        self.metadata, self.header = {}, {}

        if not self.corpus_directory.is_dir():
            self._error(LoadError, f"Corpus directory does not exist: {self.corpus_directory}")
            return self._build_result()

        header_path = self.corpus_directory / HEADER_FILE
        if not header_path.exists():
            self._error(MissingHeaderError, f"{HEADER_FILE} not found in {self.corpus_directory}")
            return self._build_result()

        try:
            self.header = parse_header(header_path)
        except HeaderError as e:
            self._error(HeaderError, str(e))
            return self._build_result()

        self._validate_header()
        if not self.errors:
            self._validate_files()
        self._extract_metadata()
        return self._build_result()

    def _validate_header(self) -> None:
        """Check required keys, format tag, version and numeric fields."""
        for key in self.REQUIRED_KEYS:
            if key not in self.header:
                self._error(HeaderError, f"Header is missing required key {key!r}")
        if self.errors:
            return

        if self.header["format"] != CORPUS_FORMAT:
            self._error(HeaderError, f"Unknown corpus format {self.header['format']!r}")
        if self.header["version"] != str(CORPUS_VERSION):
            self._error(
                VersionMismatchError,
                f"Corpus version {self.header['version']}, expected {CORPUS_VERSION}",
            )

        for key in ("sample_rate", "mains_freq"):
            try:
                if float(self.header[key]) <= 0:
                    raise ValueError
            except ValueError:
                self._error(HeaderError, f"{key}={self.header[key]!r} is not a positive number")

        if "samples" in self.header and not self.header["samples"].isdigit():
            self._error(HeaderError, f"samples={self.header['samples']!r} is not an integer")

        encoding = self.header.get("encoding", "text")
        if encoding not in ENCODINGS:
            self._error(HeaderError, f"Unknown encoding {encoding!r} (expected text or f32)")

        try:
            entries, mains = header_channels(self.header)
        except HeaderError as e:
            self._error(HeaderError, str(e))
            return
        if not entries:
            self._error(HeaderError, "Header declares no current channels")
        missing = sorted(set(mains) - {cid for cid, _ in entries})
        if missing:
            self._error(HeaderError, f"Mains channels {missing} are not declared")
        if not mains:
            self.warnings.append("No mains channels declared; aggregate current will be empty")

        if not self.errors:
            spc = float(self.header["sample_rate"]) / float(self.header["mains_freq"])
            if abs(spc - round(spc)) > 1e-9 or (int(round(spc)) & (int(round(spc)) - 1)) != 0:
                self.warnings.append(
                    f"{spc:g} samples per cycle is not a power of two; streams will be resampled"
                )

    def _validate_files(self) -> None:
        """Check that every declared stream exists and has the same sample count."""
        encoding = self.header.get("encoding", "text")
        entries, _ = header_channels(self.header)
        paths = [voltage_file(self.corpus_directory, self.header)]
        paths += [channel_file(self.corpus_directory, cid, encoding) for cid, _ in entries]

        counts: Dict[str, int] = {}
        for path in paths:
            if not path.exists():
                self._error(LoadError, f"Stream file not found: {path.name}")
                continue
            try:
                if encoding == "f32":
                    counts[path.name] = read_f32_count(path)
                else:
                    counts[path.name] = count_text_rows(path)
            except LoadError as e:
                self._error(type(e), str(e))

        expected = self.header.get("samples")
        distinct = set(counts.values())
        if expected is not None and expected.isdigit():
            distinct.add(int(expected))
        if len(distinct) > 1:
            detail = ", ".join(f"{name}={n}" for name, n in sorted(counts.items()))
            self._error(SampleCountError, f"Inconsistent sample counts (header {expected}): {detail}")
        self.metadata["samples"] = min(distinct) if distinct else 0

        if not (self.corpus_directory / TRUTH_FILE).exists():
            self.warnings.append(f"No {TRUTH_FILE}; events must be labeled by clustering")

    def _extract_metadata(self) -> None:
        """Extract additional metadata from corpus directory."""
        self.metadata["directory_name"] = self.corpus_directory.name
        self.metadata["header"] = dict(self.header)
        if self.corpus_directory.is_dir():
            total = get_directory_size(self.corpus_directory)
            self.metadata["total_size"] = total
            self.metadata["total_size_human"] = format_file_size(total)
        if self.metadata.get("samples") and "sample_rate" in self.header and not self.errors:
            self.metadata["duration_s"] = self.metadata["samples"] / float(self.header["sample_rate"])

    def _build_result(self) -> ValidationResult:
        """Build validation result."""
        return ValidationResult(
            valid=len(self.errors) == 0,
            errors=self.errors,
            warnings=self.warnings,
            metadata=self.metadata,
            error_types=self.error_types,
        )


def validate_corpus(corpus_directory: Path) -> ValidationResult:
    """
    Convenience function to validate a corpus directory.

    Args:
        corpus_directory: Path to corpus directory

    Returns:
        ValidationResult
    """
    validator = CorpusValidator(corpus_directory)
    return validator.validate()


def get_corpus_info(corpus_directory: Path) -> Optional[Dict[str, Any]]:
    """Header and size metadata of a corpus, or None when it does not validate."""
    result = validate_corpus(corpus_directory)
    if not result.valid:
        return None
    return result.metadata
