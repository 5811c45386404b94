"""Evaluation protocols: few-shot classification and retrieval, keyword
detection/localisation over image queries, and the mutual-exclusivity
trial battery.

Scorers are duck-typed: anything with ``word_image_score(word, image)``
works for the word-level tasks, and the keyword protocol additionally
needs ``utterance_image_score`` and ``utterance_image_matchmap``.
``PrototypeScorer`` scores raw features directly (the planted oracle
for synthetic data); ``RandomScorer`` draws seeded iid scores and is
the chance baseline for trial calibration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import compute_matchmap, localise, max_similarity
from .core import ConfigError, FrameSequence, LabeledItem, MatchingSet, PixelGrid, RandomSource
from .data import Dataset, Utterance

ME_VARIANTS = (
    "familiar_familiar",
    "familiar_novel",
    "familiar_novel_star",
    "underline_familiar_novel",
    "novel_novel",
)


@dataclass(frozen=True)
class TrialSpec:
    """One two-image forced-choice trial."""

    variant: str
    query: LabeledItem
    image_a: LabeledItem
    image_b: LabeledItem
    correct: str  # "a" | "b" | "chance"

    def __post_init__(self) -> None:
        if self.variant not in ME_VARIANTS:
            raise ConfigError(f"unknown trial variant {self.variant!r}")
        if self.correct not in ("a", "b", "chance"):
            raise ConfigError(f"invalid correct tag {self.correct!r}")

    def swapped(self) -> "TrialSpec":
        flipped = {"a": "b", "b": "a", "chance": "chance"}[self.correct]
        return TrialSpec(self.variant, self.query, self.image_b, self.image_a, flipped)


@dataclass
class EvalReport:
    """Task name, aggregate and per-class scores, extra metrics, count, seed."""

    task: str
    aggregate: float
    per_class: dict[str, float]
    metrics: dict[str, float] = field(default_factory=dict)
    trial_count: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "aggregate": self.aggregate,
            "per_class": dict(sorted(self.per_class.items())),
            "metrics": dict(sorted(self.metrics.items())),
            "trial_count": self.trial_count,
            "seed": self.seed,
        }


class PrototypeScorer:
    """Oracle scorer over raw features: mean-frame word vector vs cells."""

    def word_image_score(self, word: FrameSequence, image: PixelGrid) -> float:
        return self.word_image_attention(word, image)[0]

    def word_image_attention(self, word: FrameSequence, image: PixelGrid):
        vec = np.mean(word.frames, axis=0)
        per_cell = image.cells @ vec
        return float(np.max(per_cell)), per_cell

    def utterance_image_score(self, utterance: FrameSequence, image: PixelGrid) -> float:
        return max_similarity(self.utterance_image_matchmap(utterance, image))

    def utterance_image_matchmap(self, utterance: FrameSequence, image: PixelGrid):
        return compute_matchmap(utterance, image)


class NegatedScorer:
    """Adversarial wrapper: negates another scorer's scores."""

    def __init__(self, inner):
        self.inner = inner

    def word_image_score(self, word, image) -> float:
        return -self.inner.word_image_score(word, image)


class RandomScorer:
    """Seeded iid uniform scores; exchangeable across all inputs.

    The internal stream is spawned off the seed so that a trial builder
    seeded identically stays uncorrelated with the scores.
    """

    def __init__(self, seed: int):
        self._gen = RandomSource(seed).spawn(0x5C07E5).generator

    def word_image_score(self, word, image) -> float:
        return float(self._gen.uniform())


# ---------------------------------------------------------------------------
# Few-shot classification and retrieval
# ---------------------------------------------------------------------------

def few_shot_classify(model, query: FrameSequence, matching: MatchingSet) -> str:
    """Class of the highest-scoring matching-set image (ties: class-id order)."""
    best_class, best_score = None, -np.inf
    for class_id in sorted(matching.images):
        score = model.word_image_score(query, matching.images[class_id])
        if score > best_score:
            best_class, best_score = class_id, score
    return best_class


def few_shot_retrieval(model, query: FrameSequence, query_class: str,
                       pool: list[LabeledItem], n: int) -> float:
    """P@N in percent: share of the top-N ranked pool images in-class.

    Ranking is by score descending with pool order breaking ties.
    """
    if n <= 0:
        raise ValueError("N must be positive")
    if n > len(pool):
        raise ValueError(f"N={n} exceeds pool size {len(pool)}")
    scores = [model.word_image_score(query, item.payload) for item in pool]
    order = sorted(range(len(pool)), key=lambda i: (-scores[i], i))
    hits = sum(1 for i in order[:n] if pool[i].class_id == query_class)
    return 100.0 * hits / n


# ---------------------------------------------------------------------------
# Keyword detection and localisation with image queries
# ---------------------------------------------------------------------------

def detection_scores(model, queries: list[LabeledItem],
                     utterances: list[Utterance], jobs: int = 1) -> np.ndarray:
    """Score matrix of every query image against every utterance.

    With ``jobs > 1``, queries are scored in a thread pool; rows are
    assembled in query order so the result is order-independent.
    """
    def score_row(query: LabeledItem) -> list[float]:
        return [model.utterance_image_score(utt.sequence, query.payload)
                for utt in utterances]

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(score_row, queries))
    else:
        rows = [score_row(q) for q in queries]
    return np.array(rows) if rows else np.zeros((0, len(utterances)))


def select_detection_threshold(model, queries: list[LabeledItem],
                               utterances: list[Utterance]) -> float:
    """Threshold maximising detection F1 over 101 score quantiles."""
    scores = detection_scores(model, queries, utterances)
    truth = _presence_matrix(queries, utterances)
    candidates = np.quantile(scores.ravel(), np.linspace(0.0, 1.0, 101))
    best_theta, best_f1 = float(candidates[0]), -1.0
    for theta in candidates:
        f1 = _detection_f1(scores >= theta, truth)
        if f1 > best_f1:
            best_theta, best_f1 = float(theta), f1
    return best_theta


def _presence_matrix(queries, utterances) -> np.ndarray:
    truth = np.zeros((len(queries), len(utterances)), dtype=bool)
    for qi, query in enumerate(queries):
        for ui, utt in enumerate(utterances):
            truth[qi, ui] = any(cls == query.class_id for cls, _, _ in utt.spans)
    return truth


def _detection_f1(predicted: np.ndarray, truth: np.ndarray) -> float:
    tp = int(np.sum(predicted & truth))
    fp = int(np.sum(predicted & ~truth))
    fn = int(np.sum(~predicted & truth))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def vpkl_evaluate(model, queries: list[LabeledItem], utterances: list[Utterance],
                  theta: float, tau: float = 0.5, seed: int = 0,
                  jobs: int = 1) -> EvalReport:
    """Detection and localisation metrics for image queries over utterances.

    A query is predicted present in an utterance when the similarity
    reaches ``theta``.  Localisation is scored on true detections: a hit
    when the matchmap peak frame falls inside a ground-truth span of the
    query class.  ``localisation_precision`` divides hits by all
    predicted-present pairs instead, so false alarms count against it.
    """
    if not np.isfinite(theta):
        raise ConfigError("detection threshold must be finite")
    if not (0.0 < tau <= 1.0):
        raise ConfigError("tau must be in (0, 1]")
    scores = detection_scores(model, queries, utterances, jobs=jobs)
    truth = _presence_matrix(queries, utterances)
    predicted = scores >= theta

    tp = int(np.sum(predicted & truth))
    fp = int(np.sum(predicted & ~truth))
    fn = int(np.sum(~predicted & truth))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    hits = 0
    per_class_hits: dict[str, list[int]] = {}
    for qi, query in enumerate(queries):
        for ui, utt in enumerate(utterances):
            if not (predicted[qi, ui] and truth[qi, ui]):
                continue
            m = model.utterance_image_matchmap(utt.sequence, query.payload)
            peak = localise(m, tau).peak_frame
            hit = any(cls == query.class_id and start <= peak < end
                      for cls, start, end in utt.spans)
            hits += int(hit)
            per_class_hits.setdefault(query.class_id, []).append(int(hit))

    loc_accuracy = hits / tp if tp else 0.0
    n_predicted = int(np.sum(predicted))
    loc_precision = hits / n_predicted if n_predicted else 0.0
    per_class = {cls: 100.0 * float(np.mean(vals))
                 for cls, vals in sorted(per_class_hits.items())}
    return EvalReport(
        task="vpkl",
        aggregate=100.0 * f1,
        per_class=per_class,
        metrics={
            "detection_precision": precision,
            "detection_recall": recall,
            "detection_f1": f1,
            "localisation_accuracy": loc_accuracy,
            "localisation_precision": loc_precision,
            "theta": float(theta),
            "tau": float(tau),
            "true_positives": float(tp),
            "false_positives": float(fp),
            "false_negatives": float(fn),
        },
        trial_count=len(queries) * len(utterances),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Mutual-exclusivity trial battery
# ---------------------------------------------------------------------------

def _pick(rng: np.random.Generator, items: list):
    return items[int(rng.integers(0, len(items)))]


def me_build_trials(dataset: Dataset, variant: str, n_trials: int,
                    rng: RandomSource) -> list[TrialSpec]:
    """Construct two-image trials from test-split items.

    Variant rules (query / image pair / correct side):

    * familiar_familiar: familiar query; its class image vs a different
      familiar class; matching image correct.
    * familiar_novel: novel query; a familiar image vs an image of the
      query's novel class; novel image correct.
    * familiar_novel_star: as familiar_novel but the novel image comes
      from a different novel class than the query; novel image correct.
    * underline_familiar_novel: familiar query; its familiar image vs a
      novel image; familiar image correct.
    * novel_novel: novel query; images from two different novel classes,
      one sharing the query's class; correct is chance.

    Image order is randomised per trial.
    """
    if variant not in ME_VARIANTS:
        raise ConfigError(f"unknown trial variant {variant!r}")
    lang = dataset.primary_language
    familiar_classes = dataset.classes("familiar")
    novel_classes = dataset.classes("novel")
    if len(familiar_classes) < 2 or len(novel_classes) < 2:
        raise ConfigError("trial construction needs >= 2 familiar and >= 2 novel classes")

    words = {
        "familiar": dataset.select_words(split="test", familiarity="familiar", language=lang),
        "novel": dataset.select_words(split="test", familiarity="novel", language=lang),
    }
    images_by_class: dict[str, list[LabeledItem]] = {}
    for item in dataset.select_images(split="test"):
        images_by_class.setdefault(item.class_id, []).append(item)
    for cls in familiar_classes + novel_classes:
        if not images_by_class.get(cls) :
            raise ConfigError(f"no test images for class {cls!r}")

    gen = rng.generator
    trials: list[TrialSpec] = []
    for _ in range(n_trials):
        if variant in ("familiar_familiar", "underline_familiar_novel"):
            query = _pick(gen, words["familiar"])
        else:
            query = _pick(gen, words["novel"])

        if variant == "familiar_familiar":
            match = _pick(gen, images_by_class[query.class_id])
            other_cls = _pick(gen, [c for c in familiar_classes if c != query.class_id])
            distractor = _pick(gen, images_by_class[other_cls])
            winner, loser = match, distractor
        elif variant == "familiar_novel":
            novel_img = _pick(gen, images_by_class[query.class_id])
            fam_img = _pick(gen, images_by_class[_pick(gen, familiar_classes)])
            winner, loser = novel_img, fam_img
        elif variant == "familiar_novel_star":
            other_cls = _pick(gen, [c for c in novel_classes if c != query.class_id])
            novel_img = _pick(gen, images_by_class[other_cls])
            fam_img = _pick(gen, images_by_class[_pick(gen, familiar_classes)])
            winner, loser = novel_img, fam_img
        else:
            if variant == "underline_familiar_novel":
                fam_img = _pick(gen, images_by_class[query.class_id])
                novel_img = _pick(gen, images_by_class[_pick(gen, novel_classes)])
                winner, loser = fam_img, novel_img
            else:  # novel_novel
                same = _pick(gen, images_by_class[query.class_id])
                other_cls = _pick(gen, [c for c in novel_classes if c != query.class_id])
                other = _pick(gen, images_by_class[other_cls])
                winner, loser = same, other

        if gen.integers(0, 2) == 0:
            image_a, image_b, win_side = winner, loser, "a"
        else:
            image_a, image_b, win_side = loser, winner, "b"
        correct = "chance" if variant == "novel_novel" else win_side
        trials.append(TrialSpec(variant, query, image_a, image_b, correct))
    return trials


def me_accuracy(model, trials: list[TrialSpec], seed: int = 0) -> EvalReport:
    """Fraction of trials where the higher-scoring image is the correct one.

    For novel_novel trials (correct is chance) the reported rate is the
    share of picks landing on the image sharing the query's class.
    """
    if not trials:
        raise ConfigError("cannot score an empty trial list")
    outcomes: list[float] = []
    per_class: dict[str, list[float]] = {}
    for trial in trials:
        s_a = model.word_image_score(trial.query.payload, trial.image_a.payload)
        s_b = model.word_image_score(trial.query.payload, trial.image_b.payload)
        pick = "a" if s_a > s_b else ("b" if s_b > s_a else "a")
        if trial.correct == "chance":
            same_side = "a" if trial.image_a.class_id == trial.query.class_id else "b"
            hit = float(pick == same_side)
        else:
            hit = float(pick == trial.correct)
        outcomes.append(hit)
        per_class.setdefault(trial.query.class_id, []).append(hit)
    variant = trials[0].variant
    return EvalReport(
        task=f"me_{variant}",
        aggregate=100.0 * float(np.mean(outcomes)),
        per_class={cls: 100.0 * float(np.mean(vals))
                   for cls, vals in sorted(per_class.items())},
        metrics={},
        trial_count=len(trials),
        seed=seed,
    )


def me_table(reports: dict[str, EvalReport]) -> str:
    """Plain-text table with one column per trial variant."""
    headers = {
        "familiar_familiar": "Familiar-FAMILIAR",
        "familiar_novel": "Familiar-NOVEL",
        "familiar_novel_star": "Familiar-NOVEL*",
        "underline_familiar_novel": "FAMILIAR-novel",
        "novel_novel": "Novel-NOVEL",
    }
    cols = [headers[v] for v in ME_VARIANTS]
    vals = []
    for variant in ME_VARIANTS:
        report = reports.get(variant)
        vals.append(f"{report.aggregate:.2f}" if report else "-")
    width = max(len(c) for c in cols) + 2
    line1 = "".join(c.rjust(width) for c in cols)
    line2 = "".join(v.rjust(width) for v in vals)
    return f"Accuracy (%) per trial variant\n{line1}\n{line2}\n"
