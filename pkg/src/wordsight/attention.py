"""Matchmap attention: similarity heads and frame-level localisation.

A matchmap is the ``T x P`` matrix of dot products between per-frame
audio vectors and per-cell image vectors.  Three similarity heads reduce
it to a scalar score:

* ``max_matchmap``   -- the maximum entry of the matchmap.
* ``context_cosine`` -- cosine of attention-weighted context vectors
  (softmax over frame-wise maxima and over cell-wise maxima,
  temperature 1).
* ``word_to_image``  -- maximum dot product between a single word vector
  and the grid cells (a ``T = 1`` matchmap).

All functions are pure.  Array-level ``head_score`` / ``head_grad``
variants operate directly on ``(T, D)`` / ``(P, D)`` arrays so that the
loss and training modules can chain gradients through the heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DegenerateInputError,
    DimensionError,
    FrameSequence,
    Matchmap,
    PixelGrid,
)

HEAD_KINDS = ("max_matchmap", "context_cosine", "word_to_image")


@dataclass(frozen=True)
class SimilarityHead:
    """Selects which matchmap reduction a model instance scores with."""

    kind: str = "max_matchmap"

    def __post_init__(self) -> None:
        if self.kind not in HEAD_KINDS:
            raise DimensionError(f"unknown similarity head {self.kind!r}")


@dataclass(frozen=True)
class LocalisationResult:
    """Peak frame and surrounding span of a detected keyword."""

    peak_frame: int
    span: tuple[int, int]
    peak_score: float

    def __post_init__(self) -> None:
        start, end = self.span
        if not (start <= self.peak_frame <= end):
            raise ValueError("span must contain the peak frame")


def _check_dims(frames: np.ndarray, cells: np.ndarray, a_name: str, b_name: str) -> None:
    if frames.shape[1] != cells.shape[1]:
        raise DimensionError(
            f"dimension mismatch: {a_name} has D={frames.shape[1]}, "
            f"{b_name} has D={cells.shape[1]}"
        )


def compute_matchmap(audio: FrameSequence, image: PixelGrid) -> Matchmap:
    """Dot product between every audio frame and every image cell."""
    _check_dims(audio.frames, image.cells,
                audio.source_id or "audio", image.source_id or "image")
    return Matchmap(audio.frames @ image.cells.T)


def max_similarity(m: Matchmap) -> float:
    """The maximum attention score in the matchmap."""
    return float(np.max(m.scores))


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x)
    e = np.exp(shifted)
    return e / np.sum(e)


def _context_vectors(frames: np.ndarray, cells: np.ndarray):
    scores = frames @ cells.T
    alpha = _softmax(np.max(scores, axis=1))   # over frames
    beta = _softmax(np.max(scores, axis=0))    # over cells
    c_audio = alpha @ frames
    c_image = beta @ cells
    return scores, alpha, beta, c_audio, c_image


def context_similarity(audio: FrameSequence, image: PixelGrid) -> float:
    """Cosine similarity between attention-weighted context vectors.

    Frame weights are a softmax over per-frame matchmap maxima and cell
    weights a softmax over per-cell maxima; each context vector is the
    weighted sum of its modality's vectors.
    """
    _check_dims(audio.frames, image.cells,
                audio.source_id or "audio", image.source_id or "image")
    _, _, _, c_audio, c_image = _context_vectors(audio.frames, image.cells)
    na = np.linalg.norm(c_audio)
    nv = np.linalg.norm(c_image)
    if na == 0.0 or nv == 0.0:
        raise DegenerateInputError("zero-norm context vector")
    return float(np.dot(c_audio, c_image) / (na * nv))


def word_to_image_similarity(word: np.ndarray, image: PixelGrid) -> tuple[float, np.ndarray]:
    """Max attention score of a word vector over grid cells.

    Returns the score together with the per-cell attention vector
    (``word . cell_p`` for every cell), which callers can reshape to
    ``(H, W)`` for heatmap plotting.
    """
    word = np.asarray(word, dtype=np.float64)
    if word.ndim != 1:
        raise DimensionError(f"word must be a 1-D vector, got shape {word.shape}")
    if word.shape[0] != image.dim:
        raise DimensionError(
            f"dimension mismatch: word has D={word.shape[0]}, "
            f"{image.source_id or 'image'} has D={image.dim}"
        )
    per_cell = image.cells @ word
    return float(np.max(per_cell)), per_cell


def localise(m: Matchmap, tau: float = 0.5) -> LocalisationResult:
    """Peak frame and its tau-relative contiguous span.

    Per-frame score is the max over cells.  The span extends from the
    (lowest-index) peak frame while ``s_t >= tau * s_peak``; this rule
    is meaningful for positive peaks, so for a non-positive peak the
    span degenerates to the peak frame.  All-equal scores return the
    full sequence (documented degenerate case, not an error).
    """
    if not (0.0 < tau <= 1.0):
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    per_frame = np.max(m.scores, axis=1)
    peak = int(np.argmax(per_frame))
    peak_score = float(per_frame[peak])
    n = per_frame.shape[0]
    if np.all(per_frame == per_frame[0]):
        return LocalisationResult(peak, (0, n - 1), peak_score)
    threshold = tau * peak_score
    start = peak
    while start > 0 and per_frame[start - 1] >= threshold:
        start -= 1
    end = peak
    while end < n - 1 and per_frame[end + 1] >= threshold:
        end += 1
    return LocalisationResult(peak, (start, end), peak_score)


# ---------------------------------------------------------------------------
# Array-level head scoring with analytic gradients.  ``anchor`` is the
# audio-side array: ``(T, D)`` frames for the sequence heads or a
# ``(D,)`` word vector for word_to_image.
# ---------------------------------------------------------------------------

def head_score(kind: str, anchor: np.ndarray, cells: np.ndarray) -> float:
    s, _, _ = head_score_grad(kind, anchor, cells)
    return s


def head_score_grad(kind: str, anchor: np.ndarray, cells: np.ndarray):
    """Score plus gradients with respect to the anchor and cell arrays."""
    anchor = np.asarray(anchor, dtype=np.float64)
    cells = np.asarray(cells, dtype=np.float64)
    if kind == "word_to_image":
        frames = anchor[None, :]
    else:
        frames = anchor
    _check_dims(frames, cells, "anchor", "cells")

    if kind in ("max_matchmap", "word_to_image"):
        scores = frames @ cells.T
        t_star, p_star = np.unravel_index(int(np.argmax(scores)), scores.shape)
        s = float(scores[t_star, p_star])
        g_frames = np.zeros_like(frames)
        g_cells = np.zeros_like(cells)
        g_frames[t_star] = cells[p_star]
        g_cells[p_star] = frames[t_star]
        if kind == "word_to_image":
            return s, g_frames[0], g_cells
        return s, g_frames, g_cells

    if kind == "context_cosine":
        return _context_score_grad(frames, cells)

    raise DimensionError(f"unknown similarity head {kind!r}")


def _context_score_grad(frames: np.ndarray, cells: np.ndarray):
    scores, alpha, beta, c_a, c_v = _context_vectors(frames, cells)
    na = np.linalg.norm(c_a)
    nv = np.linalg.norm(c_v)
    if na == 0.0 or nv == 0.0:
        raise DegenerateInputError("zero-norm context vector")
    s = float(np.dot(c_a, c_v) / (na * nv))

    # Cosine gradient w.r.t. each context vector.
    g_ca = c_v / (na * nv) - s * c_a / (na * na)
    g_cv = c_a / (na * nv) - s * c_v / (nv * nv)

    p_star = np.argmax(scores, axis=1)   # per-frame argmax cell
    t_star = np.argmax(scores, axis=0)   # per-cell argmax frame

    # Direct paths: c_a = alpha @ frames, c_v = beta @ cells.
    g_frames = alpha[:, None] * g_ca[None, :]
    g_cells = beta[:, None] * g_cv[None, :]

    # Attention-weight paths through the softmaxed row/column maxima.
    g_alpha = frames @ g_ca
    g_m = alpha * (g_alpha - float(np.dot(alpha, g_alpha)))
    for t in range(frames.shape[0]):
        g_frames[t] += g_m[t] * cells[p_star[t]]
        g_cells[p_star[t]] += g_m[t] * frames[t]

    g_beta = cells @ g_cv
    g_u = beta * (g_beta - float(np.dot(beta, g_beta)))
    for p in range(cells.shape[0]):
        g_cells[p] += g_u[p] * frames[t_star[p]]
        g_frames[t_star[p]] += g_u[p] * cells[p]

    return s, g_frames, g_cells
