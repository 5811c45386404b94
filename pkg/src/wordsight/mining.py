"""Few-shot pair mining from unlabelled speech and image collections.

Audio mining slides each support-set word over every utterance and keeps
the best mean-cosine window per utterance per class (frames are
L2-normalized before matching; window length equals the query length).
Image mining ranks corpus images by cosine similarity of pooled
embeddings against the support images.  The top-n word and image
candidates per class are paired rank-by-rank into noisy training pairs.

Candidate scoring is order-independent; results are merged under the
deterministic total order (score desc, source id asc, start asc).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import FrameSequence, PixelGrid, SupportSet


@dataclass(frozen=True)
class SegmentMatch:
    """Best-matching window of a query inside an utterance."""

    utterance_id: str
    start_frame: int
    end_frame: int
    score: float
    predicted_class: str = ""


@dataclass(frozen=True)
class MinedPair:
    """A mined word crop paired with a mined image."""

    word: SegmentMatch
    image: PixelGrid


@dataclass
class MinedPairSet:
    """Per-class mined training pairs plus mining diagnostics."""

    pairs: dict[str, list[MinedPair]]
    n_requested: int
    warnings: list[str] = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        return {c: len(p) for c, p in sorted(self.pairs.items())}


def _l2_rows(arr: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return arr / norms


def qbe_match(query: FrameSequence, utterance: FrameSequence) -> SegmentMatch:
    """Best window of ``utterance`` matching ``query`` by mean frame cosine.

    Both inputs are per-frame L2-normalized before matching; the window
    length equals the query length and ties go to the lowest start.
    """
    tq, t = query.length, utterance.length
    if tq > t:
        raise ValueError(
            f"query {query.source_id!r} ({tq} frames) longer than "
            f"utterance {utterance.source_id!r} ({t} frames)"
        )
    q = _l2_rows(query.frames)
    u = _l2_rows(utterance.frames)
    frame_sims = q @ u.T                       # (Tq, T)
    n_windows = t - tq + 1
    scores = np.empty(n_windows)
    for s in range(n_windows):
        scores[s] = np.trace(frame_sims[:, s:s + tq]) / tq
    best = int(np.argmax(scores))
    return SegmentMatch(utterance.source_id, best, best + tq, float(scores[best]))


def _best_segment_for_class(queries, utterance: FrameSequence) -> SegmentMatch | None:
    best: SegmentMatch | None = None
    for query in queries:
        if query.length > utterance.length:
            continue
        match = qbe_match(query, utterance)
        if best is None or match.score > best.score:
            best = match
    return best


def mine_audio_pairs(support: SupportSet, corpus: list[FrameSequence],
                     n: int, jobs: int = 1) -> tuple[dict[str, list[SegmentMatch]], list[str]]:
    """Top-n matching segments per class from an utterance corpus.

    The score of an utterance for a class is the max over the class's K
    query words; at most one segment per utterance per class is kept.
    Returns (per-class ranked segments, shortage warnings).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    results: dict[str, list[SegmentMatch]] = {}
    warnings: list[str] = []
    for class_id in support.classes:
        queries = [word for word, _ in support.pairs[class_id]]

        def score_one(utt: FrameSequence):
            return _best_segment_for_class(queries, utt)

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                candidates = list(pool.map(score_one, corpus))
        else:
            candidates = [score_one(utt) for utt in corpus]
        matches = [
            SegmentMatch(m.utterance_id, m.start_frame, m.end_frame, m.score, class_id)
            for m in candidates if m is not None
        ]
        matches.sort(key=lambda m: (-m.score, m.utterance_id, m.start_frame))
        if len(matches) < n:
            warnings.append(
                f"class {class_id}: only {len(matches)} of {n} requested audio pairs mined"
            )
        results[class_id] = matches[:n]
    return results, warnings


def mean_cell_embedding(image: PixelGrid) -> np.ndarray:
    """Default image embedder: mean over grid cells."""
    return np.mean(image.cells, axis=0)


def mine_image_pairs(support: SupportSet, corpus: list[PixelGrid], n: int,
                     embedder=mean_cell_embedding,
                     jobs: int = 1) -> tuple[dict[str, list[PixelGrid]], list[str]]:
    """Top-n corpus images per class by cosine similarity to the support images.

    A candidate's score is the max over the class's K support images of
    cosine similarity between embedder outputs.
    """
    if n < 1:
        raise ValueError("n must be >= 1")

    def embed_unit(grid: PixelGrid) -> np.ndarray:
        v = embedder(grid)
        norm = np.linalg.norm(v)
        return v / norm if norm > 0 else v

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            corpus_vecs = list(pool.map(embed_unit, corpus))
    else:
        corpus_vecs = [embed_unit(grid) for grid in corpus]

    results: dict[str, list[PixelGrid]] = {}
    warnings: list[str] = []
    for class_id in support.classes:
        support_vecs = [embed_unit(img) for _, img in support.pairs[class_id]]
        scored = []
        for idx, (grid, vec) in enumerate(zip(corpus, corpus_vecs)):
            score = max(float(np.dot(vec, sv)) for sv in support_vecs)
            scored.append((score, grid.source_id or f"#{idx}", idx))
        scored.sort(key=lambda t: (-t[0], t[1], t[2]))
        if len(scored) < n:
            warnings.append(
                f"class {class_id}: only {len(scored)} of {n} requested image pairs mined"
            )
        results[class_id] = [corpus[idx] for _, _, idx in scored[:n]]
    return results, warnings


def build_mined_pairs(audio: dict[str, list[SegmentMatch]],
                      images: dict[str, list[PixelGrid]],
                      n: int, warnings: list[str] | None = None) -> MinedPairSet:
    """Pair ranked words with ranked images rank-by-rank, per class."""
    pairs: dict[str, list[MinedPair]] = {}
    for class_id in sorted(set(audio) | set(images)):
        word_list = audio.get(class_id, [])
        image_list = images.get(class_id, [])
        count = min(len(word_list), len(image_list), n)
        pairs[class_id] = [MinedPair(word_list[i], image_list[i]) for i in range(count)]
    return MinedPairSet(pairs, n, list(warnings or []))


@dataclass(frozen=True)
class MiningTruth:
    """Ground truth used only for scoring mined pairs.

    ``utterance_spans`` maps utterance id to its alignment spans
    (class, start, end); ``image_labels`` maps image source id to class.
    """

    utterance_spans: dict[str, tuple[tuple[str, int, int], ...]]
    image_labels: dict[str, str]

    def segment_class(self, match: SegmentMatch) -> str | None:
        """Class of the span containing the segment midpoint."""
        spans = self.utterance_spans.get(match.utterance_id)
        if spans is None:
            return None
        mid = (match.start_frame + match.end_frame - 1) / 2.0
        for class_id, start, end in spans:
            if start <= mid < end:
                return class_id
        return None


@dataclass(frozen=True)
class PrecisionReport:
    """Per-class and aggregate precision of mined audio and image pairs."""

    audio_per_class: dict[str, float]
    image_per_class: dict[str, float]

    @property
    def audio_aggregate(self) -> float:
        return float(np.mean(list(self.audio_per_class.values())))

    @property
    def image_aggregate(self) -> float:
        return float(np.mean(list(self.image_per_class.values())))

    def to_dict(self) -> dict:
        return {
            "audio_per_class": dict(sorted(self.audio_per_class.items())),
            "image_per_class": dict(sorted(self.image_per_class.items())),
            "audio_aggregate": self.audio_aggregate,
            "image_aggregate": self.image_aggregate,
        }


def pair_precision(mined: MinedPairSet, truth: MiningTruth) -> PrecisionReport:
    """Fraction of mined words/images whose true class matches the bucket."""
    if all(not pairs for pairs in mined.pairs.values()):
        raise ValueError("precision undefined: mined set is empty")
    audio: dict[str, float] = {}
    image: dict[str, float] = {}
    for class_id, pairs in sorted(mined.pairs.items()):
        if not pairs:
            continue
        audio_hits = sum(1 for p in pairs if truth.segment_class(p.word) == class_id)
        image_hits = sum(
            1 for p in pairs if truth.image_labels.get(p.image.source_id) == class_id
        )
        audio[class_id] = 100.0 * audio_hits / len(pairs)
        image[class_id] = 100.0 * image_hits / len(pairs)
    return PrecisionReport(audio, image)
