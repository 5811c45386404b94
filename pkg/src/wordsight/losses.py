"""Contrastive objectives with hand-derived analytic gradients.

Three losses drive training:

* a margin triplet loss over squared Euclidean embedding distances,
* a two-term InfoNCE pairwise objective (negatives swapped into either
  side of the positive pair), optionally extended with cross-lingual
  word-word terms for each configured language pair,
* a hinge retrieval loss over a square similarity matrix, used for
  background pretraining.

InfoNCE terms are evaluated in log-sum-exp form.  Every loss exposes its
gradient so the trainer can backpropagate without an autodiff framework;
the test-suite checks each gradient against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import head_score_grad
from .core import ConfigError, DimensionError


@dataclass(frozen=True)
class LossConfig:
    """Margin, negative count and cross-lingual term configuration."""

    margin: float = 1.0
    n_neg: int = 2
    cross_lingual: bool = False
    language_pairs: tuple[tuple[str, str], ...] = ()
    # Within-language word-word terms (off by default), weight 1 when on.
    within_language: bool = False

    def __post_init__(self) -> None:
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")
        if self.n_neg < 0:
            raise ConfigError("n_neg must be >= 0")
        if self.cross_lingual != bool(self.language_pairs):
            raise ConfigError("language_pairs must be nonempty iff cross_lingual is set")


@dataclass(frozen=True)
class PairExample:
    """One anchor/positive pair with per-side negatives.

    ``anchor`` is the audio-side array: ``(T, D)`` encoded frames for
    the sequence heads or a ``(D,)`` word embedding for word_to_image.
    ``positive`` and entries of ``neg_positives`` are ``(P, D)`` encoded
    cell arrays; entries of ``neg_anchors`` match the anchor's kind.
    """

    anchor: np.ndarray
    positive: np.ndarray
    neg_positives: tuple[np.ndarray, ...] = ()
    neg_anchors: tuple[np.ndarray, ...] = ()
    class_id: str = ""
    language: str = ""


@dataclass(frozen=True)
class WordPairExample:
    """A translation-equivalent word pair scored by dot product."""

    word_a: np.ndarray
    word_b: np.ndarray
    neg_b: tuple[np.ndarray, ...] = ()
    neg_a: tuple[np.ndarray, ...] = ()
    class_id: str = ""
    languages: tuple[str, str] = ("", "")


@dataclass(frozen=True)
class Batch:
    """Encoded audio-image pairs plus optional word-word pairs.

    Negatives must be drawn from classes other than their anchor's; the
    sampler upstream is responsible for that invariant.
    """

    pairs: tuple[PairExample, ...]
    word_pairs: tuple[WordPairExample, ...] = ()

    def __post_init__(self) -> None:
        if not self.pairs:
            raise ConfigError("batch must contain at least one audio-image pair")


@dataclass
class BatchGradients:
    """Gradients parallel to the batch structure.

    One entry per example, each mirroring the example's arrays.  Items
    appearing in several roles receive one gradient per appearance;
    callers owning shared arrays must sum across appearances.
    """

    pairs: list[dict] = field(default_factory=list)
    word_pairs: list[dict] = field(default_factory=list)


def squared_distance(z1: np.ndarray, z2: np.ndarray) -> float:
    """Squared Euclidean distance between two embeddings."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape:
        raise DimensionError(f"dimension mismatch: {z1.shape} vs {z2.shape}")
    diff = z1 - z2
    return float(np.dot(diff, diff))


def triplet_loss(x: np.ndarray, x_pair: np.ndarray, x_neg: np.ndarray,
                 margin: float = 1.0) -> float:
    """max{0, margin + d(x, x_pair) - d(x, x_neg)} with squared distances."""
    return float(max(0.0, margin + squared_distance(x, x_pair) - squared_distance(x, x_neg)))


def triplet_loss_grad(x: np.ndarray, x_pair: np.ndarray, x_neg: np.ndarray,
                      margin: float = 1.0):
    """Triplet loss plus gradients w.r.t. all three embeddings."""
    x = np.asarray(x, dtype=np.float64)
    x_pair = np.asarray(x_pair, dtype=np.float64)
    x_neg = np.asarray(x_neg, dtype=np.float64)
    value = triplet_loss(x, x_pair, x_neg, margin)
    if value == 0.0:
        zero = np.zeros_like(x)
        return value, zero, zero.copy(), zero.copy()
    g_x = 2.0 * (x_neg - x_pair)
    g_pair = -2.0 * (x - x_pair)
    g_neg = 2.0 * (x - x_neg)
    return value, g_x, g_pair, g_neg


def _nce_term(s_pos: float, s_negs: np.ndarray) -> float:
    # -log softmax(pos | pos, negs), via log-sum-exp.
    all_scores = np.concatenate(([s_pos], s_negs))
    return float(np.logaddexp.reduce(all_scores) - s_pos)


def infonce_pair(s_pos: float, s_neg_a, s_neg_b) -> float:
    """Two-term InfoNCE loss from a positive score and two negative lists.

    The first term contrasts the positive against ``s_neg_a`` (negatives
    substituted into the second slot of the pair), the second against
    ``s_neg_b`` (negatives substituted into the first slot).  Returns
    the negated sum of the two log-softmax terms, which is >= 0 and 0
    exactly when both negative lists are empty.
    """
    s_neg_a = np.asarray(s_neg_a, dtype=np.float64)
    s_neg_b = np.asarray(s_neg_b, dtype=np.float64)
    if not np.isfinite(s_pos) or not np.all(np.isfinite(s_neg_a)) \
            or not np.all(np.isfinite(s_neg_b)):
        raise ValueError("non-finite similarity score")
    return _nce_term(float(s_pos), s_neg_a) + _nce_term(float(s_pos), s_neg_b)


def infonce_pair_grad(s_pos: float, s_neg_a, s_neg_b):
    """InfoNCE loss plus gradients w.r.t. the raw scores."""
    s_neg_a = np.asarray(s_neg_a, dtype=np.float64)
    s_neg_b = np.asarray(s_neg_b, dtype=np.float64)
    loss = infonce_pair(s_pos, s_neg_a, s_neg_b)

    def _softmax_row(pos: float, negs: np.ndarray) -> np.ndarray:
        row = np.concatenate(([pos], negs))
        row = row - np.max(row)
        e = np.exp(row)
        return e / np.sum(e)

    p_a = _softmax_row(float(s_pos), s_neg_a)
    p_b = _softmax_row(float(s_pos), s_neg_b)
    g_pos = (p_a[0] - 1.0) + (p_b[0] - 1.0)
    return loss, float(g_pos), p_a[1:], p_b[1:]


def hinge_retrieval_loss(sim_matrix: np.ndarray) -> float:
    """Bidirectional margin-1 retrieval loss over a B x B score matrix.

    Diagonal entries are matched-pair scores; every off-diagonal entry
    is pushed below its row and column diagonal by the margin.  The sum
    of both hinge directions is divided by B.
    """
    value, _ = hinge_retrieval_loss_grad(sim_matrix)
    return value


def hinge_retrieval_loss_grad(sim_matrix: np.ndarray):
    s = np.asarray(sim_matrix, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionError(f"similarity matrix must be square, got {s.shape}")
    b = s.shape[0]
    diag = np.diag(s)
    off = ~np.eye(b, dtype=bool)

    viol_row = np.maximum(0.0, 1.0 + s - diag[:, None])   # 1 + S_ij - S_ii
    viol_col = np.maximum(0.0, 1.0 + s - diag[None, :])   # 1 + S_ij - S_jj
    loss = float((viol_row[off].sum() + viol_col[off].sum()) / b)

    act_row = (viol_row > 0) & off
    act_col = (viol_col > 0) & off
    grad = (act_row.astype(np.float64) + act_col.astype(np.float64))
    grad[np.diag_indices(b)] = -(act_row.sum(axis=1) + act_col.sum(axis=0))
    return loss, grad / b


def _score_examples(kind: str, anchor, candidates):
    """Head scores of one anchor against several cell arrays, with grads."""
    out = []
    for cand in candidates:
        out.append(head_score_grad(kind, anchor, cand))
    return out


def multimodal_objective(batch: Batch, head, cfg: LossConfig):
    """Mean InfoNCE over audio-image pairs plus cross-lingual word terms.

    Audio-image scores come from the configured similarity head;
    word-word scores are plain dot products.  Returns the scalar loss
    and ``BatchGradients`` mirroring the batch structure.
    """
    kind = head.kind if hasattr(head, "kind") else str(head)
    if cfg.cross_lingual:
        required = {lang for pair in cfg.language_pairs for lang in pair}
        present = {ex.language for ex in batch.pairs if ex.language}
        present |= {lang for wp in batch.word_pairs for lang in wp.languages}
        missing = required - present
        if missing:
            raise ConfigError(
                f"cross_lingual configured but language(s) {sorted(missing)} absent from batch"
            )

    grads = BatchGradients()
    total = 0.0
    n_pairs = len(batch.pairs)

    for ex in batch.pairs:
        s_pos, g_anchor_pos, g_cells_pos = head_score_grad(kind, ex.anchor, ex.positive)
        negs_img = _score_examples(kind, ex.anchor, ex.neg_positives)
        negs_aud = [head_score_grad(kind, neg, ex.positive) for neg in ex.neg_anchors]

        loss, g_pos, g_na, g_nb = infonce_pair_grad(
            s_pos, [n[0] for n in negs_img], [n[0] for n in negs_aud])
        total += loss / n_pairs

        scale = 1.0 / n_pairs
        g_anchor = g_pos * g_anchor_pos
        g_positive = g_pos * g_cells_pos
        g_neg_positives = []
        for w, (_, g_a, g_c) in zip(g_na, negs_img):
            g_anchor = g_anchor + w * g_a
            g_neg_positives.append(scale * w * g_c)
        g_neg_anchors = []
        for w, (_, g_a, g_c) in zip(g_nb, negs_aud):
            g_positive = g_positive + w * g_c
            g_neg_anchors.append(scale * w * g_a)
        grads.pairs.append({
            "anchor": scale * g_anchor,
            "positive": scale * g_positive,
            "neg_positives": g_neg_positives,
            "neg_anchors": g_neg_anchors,
        })

    term_sizes = _word_term_sizes(batch, cfg)
    for idx, wp in enumerate(batch.word_pairs):
        n = term_sizes.get(idx, 0)
        if n == 0:
            # Pair belongs to no enabled loss term; zero contribution.
            grads.word_pairs.append({
                "word_a": np.zeros_like(wp.word_a),
                "word_b": np.zeros_like(wp.word_b),
                "neg_b": [np.zeros_like(x) for x in wp.neg_b],
                "neg_a": [np.zeros_like(x) for x in wp.neg_a],
            })
            continue
        s_pos = float(np.dot(wp.word_a, wp.word_b))
        s_na = [float(np.dot(wp.word_a, nb)) for nb in wp.neg_b]
        s_nb = [float(np.dot(na, wp.word_b)) for na in wp.neg_a]
        loss, g_pos, g_na, g_nb = infonce_pair_grad(s_pos, s_na, s_nb)
        total += loss / n

        scale = 1.0 / n
        g_a = g_pos * wp.word_b
        g_b = g_pos * wp.word_a
        g_neg_b = []
        for w, nb in zip(g_na, wp.neg_b):
            g_a = g_a + w * nb
            g_neg_b.append(scale * w * wp.word_a)
        g_neg_a = []
        for w, na in zip(g_nb, wp.neg_a):
            g_b = g_b + w * na
            g_neg_a.append(scale * w * wp.word_b)
        grads.word_pairs.append({
            "word_a": scale * g_a,
            "word_b": scale * g_b,
            "neg_b": g_neg_b,
            "neg_a": g_neg_a,
        })

    return total, grads


def _word_term_sizes(batch: Batch, cfg: LossConfig) -> dict[int, int]:
    """Map word-pair index -> size of the loss term it contributes to.

    Each enabled term (one per configured language pair, plus one per
    language when within-language terms are on) is a mean over its own
    examples.
    """
    groups: dict[tuple[str, str], list[int]] = {}
    for idx, wp in enumerate(batch.word_pairs):
        key = tuple(sorted(wp.languages))
        groups.setdefault(key, []).append(idx)

    sizes: dict[int, int] = {}
    enabled: list[tuple[str, str]] = []
    if cfg.cross_lingual:
        enabled.extend(tuple(sorted(p)) for p in cfg.language_pairs)
    if cfg.within_language:
        enabled.extend(key for key in groups if key[0] == key[1])
    for key in enabled:
        for idx in groups.get(key, []):
            sizes[idx] = len(groups[key])
    return sizes
