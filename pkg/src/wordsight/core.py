"""Shared domain types, shape conventions and the deterministic RNG contract.

Conventions used throughout the package:

* An embedding is a 1-D ``float64`` numpy array of length ``D``.  The
  same ``D`` is shared by both modalities within one model.
* A frame sequence stores per-frame vectors as a ``(T, D)`` array.
* A pixel grid stores per-cell vectors as a ``(P, D)`` array with
  ``P = height * width`` in row-major cell order.
* All arrays are made read-only at construction; instances are safe to
  share across concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ToolkitError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(ToolkitError):
    """Embedding dimensions of two operands do not agree."""


class DegenerateInputError(ToolkitError):
    """Input is in a region where the operation is undefined (e.g. zero norm)."""


class ConfigError(ToolkitError):
    """A configuration value violates its contract."""


class FormatError(ToolkitError):
    """An on-disk artifact does not match its declared format."""


FAMILIARITIES = ("familiar", "novel", "background")
SPLITS = ("train", "dev", "test")


def as_embedding(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Coerce to a finite 1-D float64 vector."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise DimensionError(f"embedding must be a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("embedding contains non-finite entries")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FrameSequence:
    """Ordered per-frame vectors for an utterance or isolated word.

    ``frames`` has shape ``(T, D)``; ``frame_duration`` is seconds per
    frame.  Used both for raw feature frames (dimension ``F``) and for
    encoder outputs (dimension ``D``).
    """

    frames: np.ndarray
    frame_duration: float = 0.02
    source_id: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.frames, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"frames must be (T, D) with T,D >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite frame values in {self.source_id!r}")
        if self.frame_duration <= 0:
            raise ConfigError("frame_duration must be positive")
        object.__setattr__(self, "frames", _frozen(arr))

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class PixelGrid:
    """Per-region image vectors on a flattened ``height x width`` grid."""

    cells: np.ndarray
    height: int
    width: int
    source_id: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.cells, dtype=np.float64)
        if self.height < 1 or self.width < 1:
            raise DimensionError("grid height and width must be >= 1")
        if arr.ndim != 2 or arr.shape[0] != self.height * self.width:
            raise DimensionError(
                f"cells must be (H*W, D) = ({self.height * self.width}, D), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite cell values in {self.source_id!r}")
        object.__setattr__(self, "cells", _frozen(arr))

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def dim(self) -> int:
        return self.cells.shape[1]


@dataclass(frozen=True)
class Matchmap:
    """T x P matrix of frame-to-cell dot products (the attention substrate)."""

    scores: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.scores, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionError(f"matchmap must be a non-empty 2-D matrix, got {arr.shape}")
        object.__setattr__(self, "scores", _frozen(arr))

    @property
    def t_axis(self) -> int:
        return self.scores.shape[0]

    @property
    def p_axis(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True)
class LabeledItem:
    """A frame sequence or pixel grid with class, language and split tags."""

    payload: FrameSequence | PixelGrid
    class_id: str
    language: str = ""
    split: str = "train"
    familiarity: str = "familiar"
    item_id: str = ""

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ConfigError(f"unknown split {self.split!r}")
        if self.familiarity not in FAMILIARITIES:
            raise ConfigError(f"unknown familiarity {self.familiarity!r}")


@dataclass(frozen=True)
class SupportSet:
    """K ground-truth (word, image) example pairs per few-shot class."""

    pairs: dict[str, tuple[tuple[FrameSequence, PixelGrid], ...]]
    k: int

    def __post_init__(self) -> None:
        for class_id, class_pairs in self.pairs.items():
            if len(class_pairs) != self.k:
                raise ConfigError(
                    f"class {class_id!r} has {len(class_pairs)} pairs, expected K={self.k}"
                )

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple(sorted(self.pairs))


@dataclass(frozen=True)
class MatchingSet:
    """One candidate image per few-shot class."""

    images: dict[str, PixelGrid]

    def __post_init__(self) -> None:
        if not self.images:
            raise ConfigError("matching set must contain at least one class")


@dataclass(frozen=True)
class RandomSource:
    """Seeded deterministic random stream (PCG64 behind numpy Generator).

    Identical seeds produce bit-identical draw sequences.  ``spawn``
    derives an independent, reproducible child stream, used e.g. for
    per-epoch negative sampling.
    """

    seed: int
    algorithm: str = "pcg64"
    _generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.algorithm != "pcg64":
            raise ConfigError(f"unsupported generator algorithm {self.algorithm!r}")
        gen = np.random.Generator(np.random.PCG64(np.uint64(self.seed)))
        object.__setattr__(self, "_generator", gen)

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def spawn(self, stream: int) -> "RandomSource":
        # Child seeds are a pure function of (seed, stream): reproducible
        # without sequential state.
        mixed = (int(self.seed) * 0x9E3779B97F4A7C15 + int(stream)) % (1 << 64)
        return RandomSource(mixed)
