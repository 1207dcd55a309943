"""Synthetic skill families with a known most relevant coordinate.

Each family produces several aligned planar demonstrations of one skill:

- ``translated``: one curve translated per demonstration (shape dominant).
- ``converging``: scattered starts and targets joined by a shared absolute
  corridor (position dominant).
- ``sheared_arc``: an arc plus a per-demonstration linear drift, which leaves the
  interior Laplacian unchanged (curvature dominant).
- ``mixed``: translated curves whose starts carry decaying perturbations.
"""

import logging
from collections.abc import Callable
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .trajectory import DemonstrationSet, Trajectory, write_trajectory_csv

logger = logging.getLogger(__name__)

FamilyName = Literal["translated", "converging", "sheared_arc", "mixed"]


def _phase(horizon: int) -> NDArray[np.float64]:
    return np.linspace(0.0, 1.0, horizon)


def _smoothstep(s: NDArray[np.float64], end: float) -> NDArray[np.float64]:
    u = np.clip(s / end, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def base_curve(horizon: int) -> NDArray[np.float64]:
    """Planar S-shaped stroke from (0, 0) to (4, 0)."""
    s = _phase(horizon)
    return np.column_stack([4.0 * s, np.sin(2.0 * np.pi * s)])


def _as_set(curves: list[NDArray[np.float64]], prefix: str) -> DemonstrationSet:
    return DemonstrationSet(
        tuple(Trajectory(c) for c in curves),
        tuple(f"{prefix}_{j:02d}" for j in range(len(curves))),
    )


def translated_family(
    n_demos: int = 7, horizon: int = 200, seed: int = 0
) -> DemonstrationSet:
    """The base curve translated by a random offset per demonstration."""
    rng = np.random.default_rng(seed)
    curve = base_curve(horizon)
    offsets = rng.uniform(-1.0, 1.0, size=(n_demos, 2))
    return _as_set([curve + offset for offset in offsets], "translated")


def converging_family(
    n_demos: int = 7, horizon: int = 200, seed: int = 0
) -> DemonstrationSet:
    """Scattered endpoints around a shared absolute corridor.

    Every demonstration leaves its own start within the first 5% of the stroke,
    follows the base curve up to a faint low-frequency wobble, and peels off to its
    own target in the last 5%. Positions agree tightly in between while the
    endpoint deviations never propagate into the interior shape.
    """
    rng = np.random.default_rng(seed)
    s = _phase(horizon)
    curve = base_curve(horizon)
    release = 1.0 - _smoothstep(s, 0.05)
    capture = _smoothstep(s - 0.95, 0.05)
    curves = []
    for _ in range(n_demos):
        start, target = rng.uniform(-1.0, 1.0, size=(2, 2))
        amplitude, frequency = rng.uniform(0.005, 0.015), rng.integers(1, 4)
        wobble = amplitude * np.sin(np.pi * frequency * s) * np.sin(np.pi * s)
        curves.append(
            curve
            + release[:, None] * start
            + capture[:, None] * target
            + np.column_stack([0 * s, wobble])
        )
    return _as_set(curves, "converging")


def sheared_arc_family(
    n_demos: int = 7, horizon: int = 200, seed: int = 0
) -> DemonstrationSet:
    """A half circle plus a per-demonstration linear drift."""
    rng = np.random.default_rng(seed)
    s = _phase(horizon)
    angle = np.pi * (1.0 - s)
    arc = np.column_stack([1.0 + np.cos(angle), np.sin(angle)])
    drifts = rng.uniform(-0.8, 0.8, size=(n_demos, 2))
    return _as_set([arc + np.outer(s, drift) for drift in drifts], "sheared_arc")


def mixed_family(
    n_demos: int = 7, horizon: int = 200, seed: int = 0
) -> DemonstrationSet:
    """Translated base curves with start perturbations decaying over the stroke."""
    rng = np.random.default_rng(seed)
    s = _phase(horizon)
    curve = base_curve(horizon)
    decay = np.exp(-s / 0.2)
    curves = []
    for _ in range(n_demos):
        offset = rng.uniform(-0.6, 0.6, size=2)
        kick = rng.uniform(-0.4, 0.4, size=2)
        curves.append(curve + offset + decay[:, None] * kick)
    return _as_set(curves, "mixed")


FAMILIES: dict[str, Callable[[int, int, int], DemonstrationSet]] = {
    "translated": translated_family,
    "converging": converging_family,
    "sheared_arc": sheared_arc_family,
    "mixed": mixed_family,
}


def make_family(
    name: FamilyName | str, n_demos: int = 7, horizon: int = 200, seed: int = 0
) -> DemonstrationSet:
    """Generate a family by name.

    Raises:
        ValueError: On an unknown family name.
    """
    try:
        factory = FAMILIES[name]
    except KeyError as e:
        msg = f"unknown family '{name}'; choose from {sorted(FAMILIES)}"
        raise ValueError(msg) from e
    return factory(n_demos, horizon, seed)


def write_csv_dir(demos: DemonstrationSet, path: Path) -> list[Path]:
    """Write one ``<label>.csv`` per demonstration into ``path``."""
    path.mkdir(parents=True, exist_ok=True)
    files = []
    for label, demo in zip(demos.labels, demos, strict=True):
        file = path / f"{label}.csv"
        write_trajectory_csv(demo.samples, file)
        files.append(file)
    logger.info(f"Wrote {len(files)} demonstrations to {path}")
    return files
