"""Demonstration ingestion, validation, DTW time alignment and resampling.

Two on-disk layouts are supported:

- ``csv-dir``: one CSV file per demonstration, no header, one time step per row
  (``v1,v2,...,vn``). A single CSV file is read as a one-demonstration set.
- ``jsonl``: one JSON object per line, ``{"id": "...", "samples": [[...], ...]}``.

Raw sets may mix lengths; ``dtw_align`` warps every demonstration onto a reference
time axis and resamples all of them to a common horizon.
"""

import csv
import logging
from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, ValidationError
from scipy.spatial.distance import pdist

from .dtw import dtw_distance, warping_path
from .errors import DemonstrationFormatError

logger = logging.getLogger(__name__)

MIN_HORIZON = 3


@dataclass(frozen=True)
class Trajectory:
    """A uniformly indexed sequence of n-dimensional samples.

    Attributes:
        samples: T x n matrix, one row per time step
        dt: Nominal sample spacing in seconds (metadata only)
    """

    samples: NDArray[np.float64]
    dt: float = 1.0

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, np.newaxis]
        if samples.ndim != 2:
            msg = f"samples must be a (T, n) matrix, got shape {samples.shape}"
            raise DemonstrationFormatError(msg)
        if samples.shape[1] < 1:
            msg = "samples need at least one spatial dimension"
            raise DemonstrationFormatError(msg)
        if samples.shape[0] < MIN_HORIZON:
            msg = (
                f"trajectory has {samples.shape[0]} samples; "
                f"at least {MIN_HORIZON} are required"
            )
            raise DemonstrationFormatError(msg)
        if not np.all(np.isfinite(samples)):
            msg = "non-finite sample in trajectory"
            raise DemonstrationFormatError(msg)
        if not self.dt > 0:
            msg = f"dt must be positive, got {self.dt}"
            raise DemonstrationFormatError(msg)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def horizon(self) -> int:
        """Number of time steps T."""
        return int(self.samples.shape[0])

    @property
    def dims(self) -> int:
        """Number of spatial dimensions n."""
        return int(self.samples.shape[1])

    @property
    def diameter(self) -> float:
        """Largest Euclidean distance between any two samples."""
        return float(pdist(self.samples).max())


@dataclass(frozen=True)
class DemonstrationSet:
    """N demonstrations of one skill, with optional identifiers.

    Raw sets may mix horizons; aligned sets share a single (T, n).
    """

    demos: tuple[Trajectory, ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        demos = tuple(self.demos)
        if not demos:
            msg = "a demonstration set needs at least one demonstration"
            raise DemonstrationFormatError(msg)
        dims = {demo.dims for demo in demos}
        if len(dims) != 1:
            msg = f"dimension mismatch across demonstrations: {sorted(dims)}"
            raise DemonstrationFormatError(msg)
        labels = tuple(self.labels) or tuple(f"demo_{j}" for j in range(len(demos)))
        if len(labels) != len(demos):
            msg = f"{len(labels)} labels for {len(demos)} demonstrations"
            raise DemonstrationFormatError(msg)
        if len(set(labels)) != len(labels):
            msg = "demonstration labels must be unique"
            raise DemonstrationFormatError(msg)
        object.__setattr__(self, "demos", demos)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.demos)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.demos)

    def __getitem__(self, index: int) -> Trajectory:
        return self.demos[index]

    @property
    def dims(self) -> int:
        """Number of spatial dimensions n."""
        return self.demos[0].dims

    @property
    def is_aligned(self) -> bool:
        """Whether every demonstration has the same horizon."""
        return len({demo.horizon for demo in self.demos}) == 1

    @property
    def horizon(self) -> int:
        """Common horizon T of an aligned set."""
        if not self.is_aligned:
            msg = "demonstration set is not aligned; call dtw_align first"
            raise DemonstrationFormatError(msg)
        return self.demos[0].horizon

    def stack(self) -> NDArray[np.float64]:
        """Return the aligned demonstrations as an N x T x n array."""
        _ = self.horizon
        return np.stack([demo.samples for demo in self.demos])

    def label_index(self, label: str) -> int:
        """Position of the demonstration called ``label``."""
        try:
            return self.labels.index(label)
        except ValueError as e:
            msg = f"unknown demonstration id '{label}'"
            raise DemonstrationFormatError(msg) from e


class DemonstrationRecord(BaseModel):
    """One line of the ``jsonl`` layout."""

    id: str
    samples: list[list[float]]

    model_config = ConfigDict(extra="forbid")


def _parse_csv(path: Path) -> NDArray[np.float64]:
    rows: list[list[float]] = []
    width: int | None = None
    with path.open(newline="", encoding="utf-8") as handle:
        for line_number, row in enumerate(csv.reader(handle), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError as e:
                msg = f"{path}:{line_number}: malformed row {row!r}"
                raise DemonstrationFormatError(msg) from e
            if width is None:
                width = len(values)
            elif len(values) != width:
                msg = (
                    f"{path}:{line_number}: dimension mismatch, expected {width} "
                    f"values, found {len(values)}"
                )
                raise DemonstrationFormatError(msg)
            rows.append(values)
    if not rows:
        msg = f"{path}: empty file"
        raise DemonstrationFormatError(msg)
    samples = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(samples)):
        msg = f"{path}: non-finite sample"
        raise DemonstrationFormatError(msg)
    return samples


def _load_csv_dir(path: Path) -> DemonstrationSet:
    files = [path] if path.is_file() else sorted(path.glob("*.csv"))
    if not files:
        msg = f"{path}: no CSV demonstrations found"
        raise DemonstrationFormatError(msg)
    demos = []
    for file in files:
        samples = _parse_csv(file)
        try:
            demos.append(Trajectory(samples))
        except DemonstrationFormatError as e:
            msg = f"{file}: {e}"
            raise DemonstrationFormatError(msg) from e
    return DemonstrationSet(tuple(demos), tuple(file.stem for file in files))


def _load_jsonl(path: Path) -> DemonstrationSet:
    demos: list[Trajectory] = []
    labels: list[str] = []
    with path.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = DemonstrationRecord.model_validate_json(line)
            except ValidationError as e:
                msg = f"{path}:{line_number}: malformed record: {e}"
                raise DemonstrationFormatError(msg) from e
            widths = {len(sample) for sample in record.samples}
            if len(widths) > 1:
                msg = f"{path}:{line_number}: dimension mismatch within '{record.id}'"
                raise DemonstrationFormatError(msg)
            if not record.samples:
                msg = f"{path}:{line_number}: '{record.id}' has no samples"
                raise DemonstrationFormatError(msg)
            try:
                demos.append(Trajectory(np.asarray(record.samples, dtype=np.float64)))
            except DemonstrationFormatError as e:
                msg = f"{path}:{line_number}: {e}"
                raise DemonstrationFormatError(msg) from e
            labels.append(record.id)
    if not demos:
        msg = f"{path}: empty file"
        raise DemonstrationFormatError(msg)
    return DemonstrationSet(tuple(demos), tuple(labels))


def load_demonstrations(
    path: Path | str,
    format: Literal["csv-dir", "jsonl"] = "csv-dir",
) -> DemonstrationSet:
    """Load raw (unaligned) demonstrations.

    Args:
        path: CSV directory, single CSV file, or JSON-lines file
        format: ``csv-dir`` or ``jsonl``

    Returns:
        Raw demonstration set; horizons may differ

    Raises:
        DemonstrationFormatError: On a missing path, malformed row, dimension
            mismatch, empty file or non-finite sample.
    """
    path = Path(path)
    if not path.exists():
        msg = f"dataset path does not exist: {path}"
        raise DemonstrationFormatError(msg)

    if format == "csv-dir":
        demos = _load_csv_dir(path)
    elif format == "jsonl":
        demos = _load_jsonl(path)
    else:
        msg = f"unsupported dataset format '{format}'"
        raise DemonstrationFormatError(msg)

    logger.info(
        f"Loaded {len(demos)} demonstrations with {demos.dims} dimensions from {path}"
    )
    return demos


def resample(samples: ArrayLike, target_horizon: int) -> NDArray[np.float64]:
    """Linearly resample a (T, n) array onto ``target_horizon`` uniform indices.

    The first and last samples are preserved exactly.
    """
    values = np.asarray(samples, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, np.newaxis]
    source = np.arange(values.shape[0], dtype=np.float64)
    query = np.linspace(0.0, values.shape[0] - 1, target_horizon)
    out = np.column_stack(
        [np.interp(query, source, values[:, d]) for d in range(values.shape[1])]
    )
    out[0] = values[0]
    out[-1] = values[-1]
    return out


def select_reference(raw: DemonstrationSet) -> int:
    """Return the DTW medoid: the demo with minimal summed distance to all others.

    Ties resolve to the lowest index.
    """
    count = len(raw)
    if count == 1:
        return 0
    distances = np.zeros((count, count))
    for i in range(count):
        for j in range(i + 1, count):
            d = dtw_distance(raw[i].samples, raw[j].samples)
            distances[i, j] = distances[j, i] = d
    reference = int(np.argmin(distances.sum(axis=1)))
    logger.debug(f"Summed DTW distances: {distances.sum(axis=1).tolist()}")
    return reference


def warp_onto(reference: Trajectory, demo: Trajectory) -> NDArray[np.float64]:
    """Warp ``demo`` onto the time axis of ``reference``.

    Each reference index receives the mean of the demo samples the optimal warping
    path matches to it.
    """
    path = np.asarray(warping_path(reference.samples, demo.samples))
    sums = np.zeros_like(reference.samples)
    counts = np.zeros(reference.horizon)
    np.add.at(sums, path[:, 0], demo.samples[path[:, 1]])
    np.add.at(counts, path[:, 0], 1.0)
    return sums / counts[:, np.newaxis]


def dtw_align(
    raw: DemonstrationSet,
    reference_index: int | None = None,
    target_horizon: int | None = None,
) -> DemonstrationSet:
    """Align demonstrations onto a common horizon.

    Every demonstration is warped onto the reference's time axis along its optimal
    DTW path, then linearly resampled to exactly ``target_horizon`` samples.

    Args:
        raw: Raw demonstration set
        reference_index: Reference demonstration (default: the DTW medoid)
        target_horizon: Output horizon T (default: the reference's length)

    Returns:
        Aligned demonstration set with the same labels
    """
    if reference_index is None:
        reference_index = select_reference(raw)
    if not 0 <= reference_index < len(raw):
        msg = f"reference_index {reference_index} out of range for {len(raw)} demos"
        raise DemonstrationFormatError(msg)

    reference = raw[reference_index]
    if target_horizon is None:
        target_horizon = reference.horizon
    if target_horizon < MIN_HORIZON:
        msg = f"target horizon must be at least {MIN_HORIZON}, got {target_horizon}"
        raise DemonstrationFormatError(msg)

    aligned: list[Trajectory] = []
    for j, demo in enumerate(raw):
        # The reference keeps its own time axis; only resampling applies to it
        warped = demo.samples if j == reference_index else warp_onto(reference, demo)
        aligned.append(Trajectory(resample(warped, target_horizon), dt=demo.dt))

    logger.info(
        f"Aligned {len(raw)} demonstrations onto reference "
        f"'{raw.labels[reference_index]}' with horizon {target_horizon}"
    )
    return DemonstrationSet(tuple(aligned), raw.labels)


def read_trajectory_csv(path: Path | str) -> NDArray[np.float64]:
    """Read one trajectory CSV (the ``csv-dir`` row format) as a (T, n) array.

    Unlike a demonstration, the result may have fewer than three rows.

    Raises:
        DemonstrationFormatError: On a missing file, malformed row, dimension
            mismatch, empty file or non-finite sample.
    """
    path = Path(path)
    if not path.is_file():
        msg = f"trajectory file does not exist: {path}"
        raise DemonstrationFormatError(msg)
    return _parse_csv(path)


def write_trajectory_csv(samples: ArrayLike, path: Path) -> None:
    """Write a (T, n) array in the demonstration CSV row format."""
    values = np.asarray(samples, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, np.newaxis]
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        for row in values:
            writer.writerow([repr(float(v)) for v in row])
