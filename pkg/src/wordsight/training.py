"""Staged training of the two-branch encoder.

The model holds two per-vector encoders of identical shape (input ``F``
-> hidden -> ``D``, affine + tanh then affine), one applied to audio
frames and one to image grid cells, plus max-pooling over frames (or
cells) when a single embedding is needed.  Stages:

1. random initialisation (scaled-uniform draws),
2. unimodal initialisation: each branch alone on a within-modality
   InfoNCE over class-labelled background items,
3. background pretraining: hinge retrieval loss on background
   word-image pairs,
4. fine-tuning: the multimodal InfoNCE objective on mined or
   ground-truth pairs, optionally drawing extra image negatives from
   the background set.

Optimisation is plain gradient descent with momentum.  All gradients
are hand-derived and backpropagated through the encoders; the test
suite checks the full objective against central finite differences.
Training is single-threaded and bit-deterministic under a seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attention import Matchmap, SimilarityHead, compute_matchmap, word_to_image_similarity
from .core import (
    ConfigError,
    FrameSequence,
    LabeledItem,
    PixelGrid,
    RandomSource,
    ToolkitError,
)
from .data import canonical_json, read_tensor, write_tensor
from .losses import (
    Batch,
    LossConfig,
    PairExample,
    WordPairExample,
    hinge_retrieval_loss_grad,
    infonce_pair_grad,
    multimodal_objective,
)

PARAM_KEYS = ("a_w1", "a_b1", "a_w2", "a_b2", "v_w1", "v_b1", "v_w2", "v_b2")

STAGES = ("random", "unimodal_init", "background", "finetune")


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int
    hidden_dim: int = 32
    embed_dim: int = 16
    head: str = "max_matchmap"

    def __post_init__(self) -> None:
        if min(self.feature_dim, self.hidden_dim, self.embed_dim) < 1:
            raise ConfigError("model dimensions must be positive")
        SimilarityHead(self.head)


@dataclass(frozen=True)
class TrainConfig:
    stage: str = "finetune"
    epochs: int = 30
    batch_size: int = 8
    step_size: float = 1e-2
    momentum: float = 0.9
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ConfigError(f"unknown stage {self.stage!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.step_size < 0:
            raise ConfigError("epochs, batch size and step size must be positive")


class TrainingDiverged(ToolkitError):
    """Loss became non-finite; carries a diagnostic checkpoint."""

    def __init__(self, message: str, checkpoint: "Checkpoint"):
        super().__init__(message)
        self.checkpoint = checkpoint


class Model:
    """Two-branch encoder with a fixed similarity head."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in PARAM_KEYS}
        self.head = SimilarityHead(config.head)

    # -- encoding ----------------------------------------------------------

    def _encode(self, x: np.ndarray, branch: str):
        w1, b1 = self.params[f"{branch}_w1"], self.params[f"{branch}_b1"]
        w2, b2 = self.params[f"{branch}_w2"], self.params[f"{branch}_b2"]
        hidden = np.tanh(x @ w1.T + b1)
        z = hidden @ w2.T + b2
        return z, hidden

    def encode_frames(self, frames: np.ndarray) -> np.ndarray:
        return self._encode(frames, "a")[0]

    def encode_cells(self, cells: np.ndarray) -> np.ndarray:
        return self._encode(cells, "v")[0]

    def encode_audio(self, seq: FrameSequence) -> FrameSequence:
        return FrameSequence(self.encode_frames(seq.frames), seq.frame_duration, seq.source_id)

    def encode_image(self, grid: PixelGrid) -> PixelGrid:
        return PixelGrid(self.encode_cells(grid.cells), grid.height, grid.width, grid.source_id)

    def encode_word(self, seq: FrameSequence) -> np.ndarray:
        return np.max(self.encode_frames(seq.frames), axis=0)

    # -- scoring -----------------------------------------------------------

    def word_image_attention(self, word: FrameSequence, image: PixelGrid):
        return word_to_image_similarity(self.encode_word(word), self.encode_image(image))

    def word_image_score(self, word: FrameSequence, image: PixelGrid) -> float:
        return self.word_image_attention(word, image)[0]

    def utterance_image_matchmap(self, utterance: FrameSequence, image: PixelGrid) -> Matchmap:
        return compute_matchmap(self.encode_audio(utterance), self.encode_image(image))

    def utterance_image_score(self, utterance: FrameSequence, image: PixelGrid) -> float:
        from .attention import context_similarity, max_similarity
        if self.head.kind == "word_to_image":
            return self.word_image_score(utterance, image)
        if self.head.kind == "context_cosine":
            return context_similarity(self.encode_audio(utterance), self.encode_image(image))
        return max_similarity(self.utterance_image_matchmap(utterance, image))

    # -- plumbing ----------------------------------------------------------

    def copy(self) -> "Model":
        return Model(self.config, {k: v.copy() for k, v in self.params.items()})

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in PARAM_KEYS])

    def set_flat_params(self, flat: np.ndarray) -> None:
        offset = 0
        for key in PARAM_KEYS:
            size = self.params[key].size
            self.params[key] = flat[offset:offset + size].reshape(self.params[key].shape).copy()
            offset += size

    def checksum(self) -> str:
        return hashlib.sha256(self.flat_params().tobytes()).hexdigest()


def init_model(config: ModelConfig, rng: RandomSource) -> Model:
    """Scaled-uniform (Glorot) initialisation, deterministic under seed."""
    gen = rng.generator
    f, h, d = config.feature_dim, config.hidden_dim, config.embed_dim
    params: dict[str, np.ndarray] = {}
    for branch in ("a", "v"):
        for key, shape in ((f"{branch}_w1", (h, f)), (f"{branch}_w2", (d, h))):
            fan_out, fan_in = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[key] = gen.uniform(-limit, limit, size=shape)
        params[f"{branch}_b1"] = np.zeros(h)
        params[f"{branch}_b2"] = np.zeros(d)
    return Model(config, params)


@dataclass
class Checkpoint:
    """Model parameters plus stage tag, epoch and observed loss trace."""

    model: Model
    stage: str
    epoch: int
    loss_trace: list[float]
    train_config: TrainConfig | None = None

    def save(self, directory: str | Path) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for key in PARAM_KEYS:
            write_tensor(out / f"{key}.mmt", self.model.params[key])
        sidecar = {
            "stage": self.stage,
            "epoch": self.epoch,
            "loss_trace": self.loss_trace,
            "model_config": {
                "feature_dim": self.model.config.feature_dim,
                "hidden_dim": self.model.config.hidden_dim,
                "embed_dim": self.model.config.embed_dim,
                "head": self.model.config.head,
            },
        }
        (out / "checkpoint.json").write_text(canonical_json(sidecar),
                                             encoding="utf-8", newline="\n")


def load_checkpoint(directory: str | Path) -> Checkpoint:
    base = Path(directory)
    sidecar = json.loads((base / "checkpoint.json").read_text(encoding="utf-8"))
    config = ModelConfig(**sidecar["model_config"])
    params = {key: read_tensor(base / f"{key}.mmt") for key in PARAM_KEYS}
    model = Model(config, params)
    return Checkpoint(model, sidecar["stage"], sidecar["epoch"], sidecar["loss_trace"])


# ---------------------------------------------------------------------------
# Backpropagation through the encoders
# ---------------------------------------------------------------------------

class _EncodedItem:
    """One encoded appearance of a word or image with its backprop cache."""

    __slots__ = ("branch", "x", "hidden", "z", "pooled", "pool_idx")

    def __init__(self, model: Model, branch: str, x: np.ndarray, pool: bool):
        self.branch = branch
        self.x = x
        self.z, self.hidden = model._encode(x, branch)
        if pool:
            self.pool_idx = np.argmax(self.z, axis=0)
            self.pooled = self.z[self.pool_idx, np.arange(self.z.shape[1])]
        else:
            self.pool_idx = None
            self.pooled = None

    @property
    def output(self) -> np.ndarray:
        return self.pooled if self.pooled is not None else self.z

    def grad_z(self, g_out: np.ndarray) -> np.ndarray:
        if self.pool_idx is None:
            return g_out
        g_z = np.zeros_like(self.z)
        g_z[self.pool_idx, np.arange(self.z.shape[1])] = g_out
        return g_z


def _zero_grads(model: Model) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in model.params.items()}


def _accumulate(model: Model, item: _EncodedItem, g_out: np.ndarray,
                grads: dict[str, np.ndarray]) -> None:
    g_z = item.grad_z(g_out)
    branch = item.branch
    w2 = model.params[f"{branch}_w2"]
    g_hidden = g_z @ w2
    g_pre = g_hidden * (1.0 - item.hidden ** 2)
    grads[f"{branch}_w2"] += g_z.T @ item.hidden
    grads[f"{branch}_b2"] += g_z.sum(axis=0)
    grads[f"{branch}_w1"] += g_pre.T @ item.x
    grads[f"{branch}_b1"] += g_pre.sum(axis=0)


def _apply_step(model: Model, grads: dict[str, np.ndarray],
                velocity: dict[str, np.ndarray], cfg: TrainConfig) -> None:
    for key in PARAM_KEYS:
        velocity[key] = cfg.momentum * velocity[key] - cfg.step_size * grads[key]
        model.params[key] = model.params[key] + velocity[key]
        if not np.all(np.isfinite(model.params[key])):
            raise FloatingPointError(f"parameter {key} became non-finite")


def _shuffled_batches(n_items: int, batch_size: int, gen: np.random.Generator):
    order = gen.permutation(n_items)
    for start in range(0, n_items, batch_size):
        chunk = order[start:start + batch_size]
        if len(chunk) >= 2:
            yield chunk


# ---------------------------------------------------------------------------
# Stage: unimodal initialisation
# ---------------------------------------------------------------------------

def unimodal_init(model: Model, background_words: list[LabeledItem],
                  background_images: list[LabeledItem], cfg: TrainConfig) -> Checkpoint:
    """Pretrain each branch alone with within-modality InfoNCE.

    Anchors and positives are pooled embeddings of same-class background
    items; negatives come from other classes.  Both branches are updated
    independently.
    """
    _check_background(background_words + background_images)
    model = model.copy()
    rng = RandomSource(cfg.seed)
    trace: list[float] = []
    sides = (
        ("a", [(w.class_id, w.payload.frames) for w in background_words]),
        ("v", [(i.class_id, i.payload.cells) for i in background_images]),
    )
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    for epoch in range(cfg.epochs):
        gen = rng.spawn(epoch).generator
        epoch_losses = []
        for branch, items in sides:
            for batch_idx in _shuffled_batches(len(items), cfg.batch_size, gen):
                grads = _zero_grads(model)
                batch_loss, used = 0.0, 0
                encoded = {i: _EncodedItem(model, branch, items[i][1], pool=True)
                           for i in batch_idx}
                for i in batch_idx:
                    class_i = items[i][0]
                    mates = [j for j in batch_idx if j != i and items[j][0] == class_i]
                    others = [j for j in batch_idx if items[j][0] != class_i]
                    if not mates or not others:
                        continue
                    pos = int(gen.choice(mates))
                    n_neg = min(cfg.loss.n_neg, len(others))
                    negs = [int(j) for j in gen.choice(others, size=n_neg, replace=False)]
                    anchor, positive = encoded[i], encoded[pos]
                    s_pos = float(np.dot(anchor.output, positive.output))
                    s_na = [float(np.dot(anchor.output, encoded[j].output)) for j in negs]
                    s_nb = [float(np.dot(encoded[j].output, positive.output)) for j in negs]
                    loss, g_pos, g_na, g_nb = infonce_pair_grad(s_pos, s_na, s_nb)
                    batch_loss += loss
                    used += 1
                    g_anchor = g_pos * positive.output
                    g_positive = g_pos * anchor.output
                    for w, j in zip(g_na, negs):
                        g_anchor = g_anchor + w * encoded[j].output
                        _accumulate(model, encoded[j], w * anchor.output, grads)
                    for w, j in zip(g_nb, negs):
                        g_positive = g_positive + w * encoded[j].output
                        _accumulate(model, encoded[j], w * positive.output, grads)
                    _accumulate(model, anchor, g_anchor, grads)
                    _accumulate(model, positive, g_positive, grads)
                if used:
                    for key in PARAM_KEYS:
                        grads[key] /= used
                    _apply_step(model, grads, velocity, cfg)
                    epoch_losses.append(batch_loss / used)
        trace.append(float(np.mean(epoch_losses)) if epoch_losses else 0.0)
    return Checkpoint(model, "unimodal_init", cfg.epochs, trace, cfg)


def _check_background(items: list[LabeledItem]) -> None:
    bad = [it.item_id or it.class_id for it in items if it.familiarity != "background"]
    if bad:
        raise ConfigError(f"non-background items in background set: {bad[:5]}")


# ---------------------------------------------------------------------------
# Stage: background pretraining (hinge retrieval loss)
# ---------------------------------------------------------------------------

def pretrain_background(model: Model, background_pairs: list[tuple[LabeledItem, LabeledItem]],
                        cfg: TrainConfig) -> Checkpoint:
    """Optimise the retrieval hinge loss on background word-image pairs."""
    _check_background([w for w, _ in background_pairs] + [i for _, i in background_pairs])
    model = model.copy()
    rng = RandomSource(cfg.seed)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    trace: list[float] = []
    kind = model.head.kind
    from .attention import head_score_grad

    for epoch in range(cfg.epochs):
        gen = rng.spawn(epoch).generator
        epoch_losses = []
        for batch_idx in _shuffled_batches(len(background_pairs), cfg.batch_size, gen):
            words = [_EncodedItem(model, "a", background_pairs[i][0].payload.frames,
                                  pool=(kind == "word_to_image")) for i in batch_idx]
            images = [_EncodedItem(model, "v", background_pairs[i][1].payload.cells,
                                   pool=False) for i in batch_idx]
            b = len(batch_idx)
            sim = np.zeros((b, b))
            head_grads = {}
            for i in range(b):
                for j in range(b):
                    s, g_a, g_c = head_score_grad(kind, words[i].output, images[j].output)
                    sim[i, j] = s
                    head_grads[(i, j)] = (g_a, g_c)
            loss, g_sim = hinge_retrieval_loss_grad(sim)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    "background loss non-finite",
                    Checkpoint(model, "background", epoch, trace, cfg))
            grads = _zero_grads(model)
            for i in range(b):
                for j in range(b):
                    w = g_sim[i, j]
                    if w == 0.0:
                        continue
                    g_a, g_c = head_grads[(i, j)]
                    _accumulate(model, words[i], w * g_a, grads)
                    _accumulate(model, images[j], w * g_c, grads)
            _apply_step(model, grads, velocity, cfg)
            epoch_losses.append(loss)
        trace.append(float(np.mean(epoch_losses)) if epoch_losses else 0.0)
    return Checkpoint(model, "background", cfg.epochs, trace, cfg)


# ---------------------------------------------------------------------------
# Stage: fine-tuning on (mined or ground-truth) word-image pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainPair:
    """One word-image training pair with class and language tags."""

    word: FrameSequence
    image: PixelGrid
    class_id: str
    language: str = ""


def _round_robin(pairs: list[TrainPair], gen: np.random.Generator) -> list[int]:
    """Interleave classes round-robin with per-class shuffled order."""
    by_class: dict[str, list[int]] = {}
    for idx, pair in enumerate(pairs):
        by_class.setdefault(pair.class_id, []).append(idx)
    queues = []
    for class_id in sorted(by_class):
        ids = np.array(by_class[class_id])
        queues.append(list(gen.permutation(ids)))
    order: list[int] = []
    while any(queues):
        for queue in queues:
            if queue:
                order.append(int(queue.pop()))
    return order


def finetune(model: Model, pairs: list[TrainPair], cfg: TrainConfig,
             use_background_negatives: bool = False,
             background_images: list[LabeledItem] | None = None) -> Checkpoint:
    """Optimise the multimodal InfoNCE objective over word-image pairs.

    Negatives are drawn uniformly from different-class items, reseeded
    each epoch; with ``use_background_negatives`` the image-negative
    pool also includes background images.  Cross-lingual word-word terms
    are added per the loss config.
    """
    if not pairs:
        raise ConfigError("finetune requires at least one training pair")
    if use_background_negatives and not background_images:
        raise ConfigError("use_background_negatives set but no background images given")
    model = model.copy()
    rng = RandomSource(cfg.seed)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    trace: list[float] = []
    kind = model.head.kind
    pool_words = kind == "word_to_image"
    bg_cells = [img.payload.cells for img in (background_images or [])]

    for epoch in range(cfg.epochs):
        gen = rng.spawn(epoch).generator
        order = _round_robin(pairs, gen)
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch_ids = order[start:start + cfg.batch_size]
            grads = _zero_grads(model)
            examples, registry = [], []
            for idx in batch_ids:
                pair = pairs[idx]
                anchor = _EncodedItem(model, "a", pair.word.frames, pool=pool_words)
                positive = _EncodedItem(model, "v", pair.image.cells, pool=False)
                neg_img_ids = _sample_negatives(pairs, idx, cfg.loss.n_neg, gen,
                                                extra_pool=len(bg_cells)
                                                if use_background_negatives else 0)
                neg_images = []
                for j in neg_img_ids:
                    cells = bg_cells[j - len(pairs)] if j >= len(pairs) else pairs[j].image.cells
                    neg_images.append(_EncodedItem(model, "v", cells, pool=False))
                neg_word_ids = _sample_negatives(pairs, idx, cfg.loss.n_neg, gen)
                neg_words = [_EncodedItem(model, "a", pairs[j].word.frames, pool=pool_words)
                             for j in neg_word_ids]
                examples.append(PairExample(
                    anchor=anchor.output, positive=positive.output,
                    neg_positives=tuple(n.output for n in neg_images),
                    neg_anchors=tuple(n.output for n in neg_words),
                    class_id=pair.class_id, language=pair.language))
                registry.append((anchor, positive, neg_images, neg_words))

            word_examples, word_registry = _cross_lingual_examples(
                model, pairs, len(batch_ids), cfg.loss, gen)
            batch = Batch(tuple(examples), tuple(word_examples))
            loss, batch_grads = multimodal_objective(batch, model.head, cfg.loss)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    "finetune loss non-finite",
                    Checkpoint(model, "finetune", epoch, trace, cfg))

            for grad, (anchor, positive, neg_images, neg_words) in zip(
                    batch_grads.pairs, registry):
                _accumulate(model, anchor, grad["anchor"], grads)
                _accumulate(model, positive, grad["positive"], grads)
                for g, item in zip(grad["neg_positives"], neg_images):
                    _accumulate(model, item, g, grads)
                for g, item in zip(grad["neg_anchors"], neg_words):
                    _accumulate(model, item, g, grads)
            for grad, (item_a, item_b, negs_b, negs_a) in zip(
                    batch_grads.word_pairs, word_registry):
                _accumulate(model, item_a, grad["word_a"], grads)
                _accumulate(model, item_b, grad["word_b"], grads)
                for g, item in zip(grad["neg_b"], negs_b):
                    _accumulate(model, item, g, grads)
                for g, item in zip(grad["neg_a"], negs_a):
                    _accumulate(model, item, g, grads)

            _apply_step(model, grads, velocity, cfg)
            epoch_losses.append(loss)
        trace.append(float(np.mean(epoch_losses)) if epoch_losses else 0.0)
    return Checkpoint(model, "finetune", cfg.epochs, trace, cfg)


def _sample_negatives(pairs: list[TrainPair], anchor_idx: int, n_neg: int,
                      gen: np.random.Generator, extra_pool: int = 0) -> list[int]:
    """Uniform different-class indices; ids >= len(pairs) address the extra pool."""
    anchor_class = pairs[anchor_idx].class_id
    candidates = [j for j, p in enumerate(pairs) if p.class_id != anchor_class]
    candidates += list(range(len(pairs), len(pairs) + extra_pool))
    if not candidates or n_neg == 0:
        return []
    size = min(n_neg, len(candidates))
    picks = gen.choice(len(candidates), size=size, replace=False)
    return [candidates[int(p)] for p in picks]


# ---------------------------------------------------------------------------
# Staged pipeline with restart-on-plateau
# ---------------------------------------------------------------------------

def run_pipeline(model_cfg: ModelConfig, stages: list[str], base_cfg: TrainConfig,
                 stage_epochs: dict[str, int],
                 train_pairs: list[TrainPair] | None = None,
                 background_words: list[LabeledItem] | None = None,
                 background_images: list[LabeledItem] | None = None,
                 background_pairs: list[tuple[LabeledItem, LabeledItem]] | None = None,
                 use_background_negatives: bool = False,
                 restarts: int = 3, restart_threshold: float = 0.1):
    """Run the requested stages in order, restarting on contrastive collapse.

    Tiny contrastive models occasionally land in a basin where two
    classes share one direction and the fine-tuning loss plateaus well
    above zero.  The final fine-tuning loss is a label-free convergence
    signal, so when it exceeds ``restart_threshold`` the whole pipeline
    is re-run from a fresh initialisation with a seed derived from the
    base seed.  The first converged attempt wins; if none converge the
    lowest-loss attempt is kept.  Deterministic given (seed, data,
    config).  Returns (checkpoints per stage, attempts used).
    """
    for stage in stages:
        if stage not in ("unimodal_init", "background", "finetune"):
            raise ConfigError(f"unknown stage {stage!r}")
    if "finetune" in stages and not train_pairs:
        raise ConfigError("finetune stage requires training pairs")

    attempts = max(1, restarts + 1)
    best: tuple[float, int, dict[str, Checkpoint]] | None = None
    for attempt in range(attempts):
        seed = base_cfg.seed if attempt == 0 \
            else RandomSource(base_cfg.seed).spawn(1000 + attempt).seed
        model = init_model(model_cfg, RandomSource(seed))
        checkpoints: dict[str, Checkpoint] = {}
        for stage in stages:
            cfg = replace(base_cfg, stage=stage, seed=seed,
                          epochs=stage_epochs.get(stage, base_cfg.epochs))
            if stage == "unimodal_init":
                ck = unimodal_init(model, background_words or [],
                                   background_images or [], cfg)
            elif stage == "background":
                ck = pretrain_background(model, background_pairs or [], cfg)
            else:
                ck = finetune(model, train_pairs, cfg,
                              use_background_negatives=use_background_negatives,
                              background_images=background_images)
            model = ck.model
            checkpoints[stage] = ck
        final = checkpoints.get("finetune")
        final_loss = final.loss_trace[-1] if final and final.loss_trace else 0.0
        converged = ("finetune" not in stages or base_cfg.step_size == 0.0
                     or stage_epochs.get("finetune", base_cfg.epochs) == 0
                     or final_loss <= restart_threshold)
        if best is None or final_loss < best[0]:
            best = (final_loss, attempt, checkpoints)
        if converged:
            return checkpoints, attempt + 1
    return best[2], attempts


def _cross_lingual_examples(model: Model, pairs: list[TrainPair], n_examples: int,
                            loss_cfg: LossConfig, gen: np.random.Generator):
    """Build word-word InfoNCE examples for each configured language term.

    Anchors are sampled from the full pair list (not only the current
    audio-image batch) so every batch carries every configured language.
    """
    if not loss_cfg.cross_lingual and not loss_cfg.within_language:
        return [], []
    by_lang_class: dict[tuple[str, str], list[int]] = {}
    for idx, pair in enumerate(pairs):
        by_lang_class.setdefault((pair.language, pair.class_id), []).append(idx)
    languages = sorted({p.language for p in pairs})

    def encode_word(idx: int) -> _EncodedItem:
        return _EncodedItem(model, "a", pairs[idx].word.frames, pool=True)

    examples, registry = [], []
    wanted = list(loss_cfg.language_pairs)
    if loss_cfg.within_language:
        wanted.extend((lang, lang) for lang in languages)
    for lang1, lang2 in wanted:
        anchor_pool = [j for j, p in enumerate(pairs) if p.language == lang1
                       and any(k != j for k in by_lang_class.get((lang2, p.class_id), []))]
        if not anchor_pool:
            raise ConfigError(
                f"no {lang1}/{lang2} translation-equivalent word pairs in training set")
        size = min(n_examples, len(anchor_pool))
        anchors = [anchor_pool[int(j)]
                   for j in gen.choice(len(anchor_pool), size=size, replace=False)]
        for idx in anchors:
            pair = pairs[idx]
            mates = [j for j in by_lang_class[(lang2, pair.class_id)] if j != idx]
            mate = int(gen.choice(mates))
            neg_pool_b = [j for j, p in enumerate(pairs)
                          if p.language == lang2 and p.class_id != pair.class_id]
            neg_pool_a = [j for j, p in enumerate(pairs)
                          if p.language == lang1 and p.class_id != pair.class_id]
            n_b = min(loss_cfg.n_neg, len(neg_pool_b))
            n_a = min(loss_cfg.n_neg, len(neg_pool_a))
            negs_b = [int(j) for j in gen.choice(neg_pool_b, size=n_b, replace=False)] \
                if n_b else []
            negs_a = [int(j) for j in gen.choice(neg_pool_a, size=n_a, replace=False)] \
                if n_a else []
            item_a, item_b = encode_word(idx), encode_word(mate)
            items_nb = [encode_word(j) for j in negs_b]
            items_na = [encode_word(j) for j in negs_a]
            examples.append(WordPairExample(
                word_a=item_a.output, word_b=item_b.output,
                neg_b=tuple(it.output for it in items_nb),
                neg_a=tuple(it.output for it in items_na),
                class_id=pair.class_id, languages=(lang1, lang2)))
            registry.append((item_a, item_b, items_nb, items_na))
    return examples, registry
