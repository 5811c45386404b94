"""Synthetic dataset generation and the on-disk manifest/tensor formats.

Tensor container (extension ``.mmt``): magic bytes ``MMT1``, an unsigned
32-bit little-endian rank, ``rank`` unsigned 32-bit little-endian
dimensions, then the row-major payload as 32-bit IEEE-754 little-endian
floats.  Readers return float64 (all in-memory computation is 64-bit);
writers cast to float32.

Manifest (``manifest.json``): UTF-8 JSON with sorted keys and LF
newlines.  It carries the class table, item records (words, utterances
with alignment spans, images), an echo of the generator config, and the
generation seed, so that a dataset is fully reproducible and
validatable from disk.

The generator plants a latent prototype vector per class.  A word is
``prototype + language offset`` plus per-frame noise over a sampled
duration; an utterance concatenates word segments and records their
spans; an image is an ``H x W`` cell grid whose object region carries
the class prototype while the remaining cells carry background noise
(plus a per-class context motif in a configured fraction of images when
the confound flag is set).
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    ConfigError,
    FormatError,
    FrameSequence,
    LabeledItem,
    PixelGrid,
    RandomSource,
)

TENSOR_MAGIC = b"MMT1"


# ---------------------------------------------------------------------------
# Tensor container
# ---------------------------------------------------------------------------

def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write an array to the tensor container format (float32 LE payload)."""
    arr = np.asarray(array)
    if arr.ndim < 1:
        raise FormatError("rank: tensor must have rank >= 1")
    payload = np.ascontiguousarray(arr, dtype="<f4")
    header = TENSOR_MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a tensor container file into a float64 array.

    Raises ``FormatError`` naming the first violated field (magic, rank,
    dims or payload) on malformed input.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != TENSOR_MAGIC:
        raise FormatError(f"magic: expected {TENSOR_MAGIC!r} in {path}")
    if len(blob) < 8:
        raise FormatError(f"rank: truncated header in {path}")
    (rank,) = struct.unpack_from("<I", blob, 4)
    if rank < 1 or rank > 32:
        raise FormatError(f"rank: implausible rank {rank} in {path}")
    dims_end = 8 + 4 * rank
    if len(blob) < dims_end:
        raise FormatError(f"dims: truncated dimension list in {path}")
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    count = int(np.prod(dims, dtype=np.int64))
    expected = dims_end + 4 * count
    if len(blob) != expected:
        raise FormatError(
            f"payload: expected {expected - dims_end} bytes, "
            f"got {len(blob) - dims_end} in {path}"
        )
    flat = np.frombuffer(blob, dtype="<f4", offset=dims_end, count=count)
    return flat.reshape(dims).astype(np.float64)


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, two-space indent, LF, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Generator configuration and manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic dataset generator.

    Defaults mirror the target dataset's shape (13 familiar and 20 novel
    classes, three languages, 10 dev items per familiar class) at desk
    scale.  ``feature_dim`` must be at least the total class count when
    ``prototype_style`` is "orthogonal".
    """

    n_familiar: int = 13
    n_novel: int = 20
    n_background: int = 5
    languages: tuple[str, ...] = ("english", "dutch", "french")
    language_offset_scale: float = 0.4
    words_per_class: int = 10
    images_per_class: int = 10
    dev_words_per_class: int = 10
    dev_images_per_class: int = 10
    test_words_per_class: int = 10
    test_images_per_class: int = 10
    train_utterances: int = 40
    dev_utterances: int = 16
    test_utterances: int = 24
    word_len_range: tuple[int, int] = (3, 7)
    utterance_words_range: tuple[int, int] = (2, 5)
    grid_height: int = 4
    grid_width: int = 4
    object_fraction: float = 0.25
    noise: float = 0.1
    feature_dim: int = 48
    frame_duration: float = 0.02
    prototype_style: str = "orthogonal"
    # Shared within-modality structure: every word frame carries
    # speech_base_scale * (a fixed unit vector), every object cell
    # image_base_scale * (another), on top of the class prototype.
    # Models the low-level commonality of all speech (resp. imagery),
    # which lets contrastive suppression generalise to unseen classes.
    speech_base_scale: float = 0.0
    image_base_scale: float = 0.0
    context_confound: bool = False
    motif_fraction: float = 0.5

    def __post_init__(self) -> None:
        if min(self.n_familiar, self.n_novel) < 1 or self.n_background < 0:
            raise ConfigError("class counts must be >= 1 (background may be 0)")
        if not self.languages:
            raise ConfigError("at least one language required")
        if self.noise < 0:
            raise ConfigError("noise amplitude must be >= 0")
        if not (0.0 < self.object_fraction <= 1.0):
            raise ConfigError("object_fraction must be in (0, 1]")
        if not (0.0 <= self.motif_fraction <= 1.0):
            raise ConfigError("motif_fraction must be in [0, 1]")
        if self.word_len_range[0] < 1 or self.word_len_range[0] > self.word_len_range[1]:
            raise ConfigError("invalid word_len_range")
        if self.utterance_words_range[0] < 1 \
                or self.utterance_words_range[0] > self.utterance_words_range[1]:
            raise ConfigError("invalid utterance_words_range")
        if self.prototype_style not in ("orthogonal", "gaussian"):
            raise ConfigError(f"unknown prototype_style {self.prototype_style!r}")
        if self.speech_base_scale < 0 or self.image_base_scale < 0:
            raise ConfigError("modality base scales must be >= 0")
        total = self.n_familiar + self.n_novel + self.n_background + 2
        if self.prototype_style == "orthogonal" and total > self.feature_dim:
            raise ConfigError(
                f"orthogonal prototypes need feature_dim >= {total} "
                f"(classes plus two modality base directions), got {self.feature_dim}"
            )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["languages"] = list(self.languages)
        d["word_len_range"] = list(self.word_len_range)
        d["utterance_words_range"] = list(self.utterance_words_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        kwargs = dict(d)
        for key in ("languages", "word_len_range", "utterance_words_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass
class DatasetManifest:
    """Parsed manifest: class table, item records, config echo and seed."""

    classes: list[dict]
    items: list[dict]
    generator_config: dict
    seed: int
    feature_dim: int
    frame_duration: float
    version: str = "0.1.0"

    def to_dict(self) -> dict:
        return {
            "format": "wordsight-manifest-v1",
            "classes": self.classes,
            "items": self.items,
            "generator_config": self.generator_config,
            "seed": self.seed,
            "feature_dim": self.feature_dim,
            "frame_duration": self.frame_duration,
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            classes=d["classes"],
            items=d["items"],
            generator_config=d["generator_config"],
            seed=d["seed"],
            feature_dim=d["feature_dim"],
            frame_duration=d["frame_duration"],
            version=d.get("version", "unknown"),
        )

    def class_table(self) -> dict[str, str]:
        return {c["id"]: c["familiarity"] for c in self.classes}


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    Path(path).write_text(canonical_json(manifest.to_dict()), encoding="utf-8", newline="\n")


def read_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise OSError(f"cannot read manifest at {path}: {err}") from err
    return DatasetManifest.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def _class_prototypes(cfg: GeneratorConfig, rng: np.random.Generator):
    """Per-class prototypes plus the two modality base directions."""
    names = (
        [f"familiar_{i:02d}" for i in range(cfg.n_familiar)]
        + [f"novel_{i:02d}" for i in range(cfg.n_novel)]
        + [f"background_{i:02d}" for i in range(cfg.n_background)]
    )
    n = len(names)
    if cfg.prototype_style == "orthogonal":
        gauss = rng.standard_normal((cfg.feature_dim, cfg.feature_dim))
        q, _ = np.linalg.qr(gauss)
        basis = q[:, :n + 2].T
    else:
        basis = rng.standard_normal((n + 2, cfg.feature_dim))
        basis /= np.linalg.norm(basis, axis=1, keepdims=True)
    prototypes = {name: basis[i] for i, name in enumerate(names)}
    speech_base = cfg.speech_base_scale * basis[n]
    image_base = cfg.image_base_scale * basis[n + 1]
    return prototypes, speech_base, image_base


def _word_frames(proto: np.ndarray, offset: np.ndarray, length: int,
                 noise: float, rng: np.random.Generator) -> np.ndarray:
    base = proto + offset
    return base[None, :] + noise * rng.standard_normal((length, base.shape[0]))


def _object_block(cfg: GeneratorConfig, rng: np.random.Generator):
    total = cfg.grid_height * cfg.grid_width
    target = max(1, int(round(cfg.object_fraction * total)))
    # Largest block h0 x w0 with h0*w0 <= target, as square as possible.
    best = (1, 1)
    for h0 in range(1, cfg.grid_height + 1):
        w0 = min(cfg.grid_width, max(1, target // h0))
        if h0 * w0 <= target and h0 * w0 >= best[0] * best[1]:
            best = (h0, w0)
    h0, w0 = best
    top = int(rng.integers(0, cfg.grid_height - h0 + 1))
    left = int(rng.integers(0, cfg.grid_width - w0 + 1))
    cells = [
        (top + r) * cfg.grid_width + (left + c)
        for r in range(h0) for c in range(w0)
    ]
    return cells


def _image_cells(cfg: GeneratorConfig, proto: np.ndarray, base: np.ndarray,
                 motif: np.ndarray | None, rng: np.random.Generator) -> np.ndarray:
    total = cfg.grid_height * cfg.grid_width
    cells = cfg.noise * rng.standard_normal((total, cfg.feature_dim))
    block = _object_block(cfg, rng)
    cells[block] += (proto + base)[None, :]
    if motif is not None:
        free = [p for p in range(total) if p not in block]
        spot = free[0] if free else block[0]
        cells[spot] += motif
    return cells


def generate_dataset(cfg: GeneratorConfig, rng: RandomSource,
                     out_dir: str | Path) -> DatasetManifest:
    """Generate tensors plus manifest under ``out_dir`` (created if needed).

    Deterministic: the same config and seed produce byte-identical
    files.  Returns the written manifest.
    """
    out = Path(out_dir)
    tensor_dir = out / "tensors"
    tensor_dir.mkdir(parents=True, exist_ok=True)
    gen = rng.generator

    prototypes, speech_base, image_base = _class_prototypes(cfg, gen)
    offsets = {
        lang: (speech_base if i == 0
               else speech_base
               + cfg.language_offset_scale * _unit(gen.standard_normal(cfg.feature_dim)))
        for i, lang in enumerate(cfg.languages)
    }
    motifs = {
        name: _unit(gen.standard_normal(cfg.feature_dim))
        for name in prototypes if name.startswith("familiar_")
    }

    classes = [
        {"id": name, "name": name, "familiarity": name.split("_")[0]}
        for name in prototypes
    ]
    items: list[dict] = []

    def add_tensor(item_id: str, array: np.ndarray, record: dict) -> None:
        rel = f"tensors/{item_id}.mmt"
        write_tensor(out / rel, array)
        record.update({"id": item_id, "path": rel, "shape": list(array.shape)})
        items.append(record)

    def word_items(class_ids, split: str, count: int, languages) -> None:
        for class_id in class_ids:
            for lang in languages:
                for i in range(count):
                    length = int(gen.integers(cfg.word_len_range[0], cfg.word_len_range[1] + 1))
                    frames = _word_frames(prototypes[class_id], offsets[lang],
                                          length, cfg.noise, gen)
                    add_tensor(
                        f"word_{split}_{lang}_{class_id}_{i:03d}", frames,
                        {"kind": "word", "class": class_id, "language": lang, "split": split},
                    )

    def image_items(class_ids, split: str, count: int, with_motif: bool) -> None:
        for class_id in class_ids:
            n_motif = int(round(cfg.motif_fraction * count)) if with_motif else 0
            for i in range(count):
                motif = motifs.get(class_id) if i < n_motif else None
                cells = _image_cells(cfg, prototypes[class_id], image_base, motif, gen)
                add_tensor(
                    f"image_{split}_{class_id}_{i:03d}", cells,
                    {"kind": "image", "class": class_id, "language": "", "split": split,
                     "height": cfg.grid_height, "width": cfg.grid_width,
                     "has_motif": motif is not None},
                )

    def utterance_items(split: str, count: int, class_pool: list[str]) -> None:
        primary = cfg.languages[0]
        for i in range(count):
            k = int(gen.integers(cfg.utterance_words_range[0],
                                 cfg.utterance_words_range[1] + 1))
            picks = [class_pool[int(gen.integers(0, len(class_pool)))] for _ in range(k)]
            segments, spans, cursor = [], [], 0
            for class_id in picks:
                length = int(gen.integers(cfg.word_len_range[0], cfg.word_len_range[1] + 1))
                segments.append(_word_frames(prototypes[class_id], offsets[primary],
                                             length, cfg.noise, gen))
                spans.append([class_id, cursor, cursor + length])
                cursor += length
            add_tensor(
                f"utterance_{split}_{i:03d}", np.concatenate(segments, axis=0),
                {"kind": "utterance", "class": None, "language": primary, "split": split,
                 "alignments": spans},
            )

    familiar = sorted(n for n in prototypes if n.startswith("familiar_"))
    novel = sorted(n for n in prototypes if n.startswith("novel_"))
    background = sorted(n for n in prototypes if n.startswith("background_"))

    word_items(familiar, "train", cfg.words_per_class, cfg.languages)
    word_items(background, "train", cfg.words_per_class, (cfg.languages[0],))
    image_items(familiar, "train", cfg.images_per_class, cfg.context_confound)
    image_items(background, "train", cfg.images_per_class, False)
    utterance_items("train", cfg.train_utterances, familiar + background)

    word_items(familiar, "dev", cfg.dev_words_per_class, (cfg.languages[0],))
    image_items(familiar, "dev", cfg.dev_images_per_class, False)
    utterance_items("dev", cfg.dev_utterances, familiar + background)

    word_items(familiar + novel, "test", cfg.test_words_per_class, (cfg.languages[0],))
    image_items(familiar + novel, "test", cfg.test_images_per_class, False)
    utterance_items("test", cfg.test_utterances, familiar + background)

    manifest = DatasetManifest(
        classes=classes,
        items=items,
        generator_config=cfg.to_dict(),
        seed=rng.seed,
        feature_dim=cfg.feature_dim,
        frame_duration=cfg.frame_duration,
    )
    write_manifest(manifest, out / "manifest.json")
    return manifest


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    """Violations found in a dataset; empty iff the dataset is well-formed."""

    violations: tuple[dict, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations)}


def validate_dataset(manifest: DatasetManifest | str | Path,
                     base_dir: str | Path | None = None) -> ValidationReport:
    """Check a manifest and its tensor files against the format contract.

    Violations reported: duplicate item ids, unknown or novel-in-train
    classes, missing or malformed tensor files, shape and feature-dim
    mismatches, and alignment spans that leave gaps, overlap or exceed
    the utterance.  Validation never mutates anything and is idempotent.
    """
    if not isinstance(manifest, DatasetManifest):
        path = Path(manifest)
        if path.is_dir():
            path = path / "manifest.json"
        manifest_obj = read_manifest(path)
        base = path.parent
    else:
        manifest_obj = manifest
        base = Path(base_dir) if base_dir is not None else Path(".")

    table = manifest_obj.class_table()
    violations: list[dict] = []

    def flag(code: str, item: str, message: str) -> None:
        violations.append({"code": code, "item": item, "message": message})

    seen: set[str] = set()
    for item in manifest_obj.items:
        item_id = item.get("id", "<missing-id>")
        if item_id in seen:
            flag("duplicate-id", item_id, "item id appears more than once")
            continue
        seen.add(item_id)

        class_id = item.get("class")
        span_classes = [s[0] for s in item.get("alignments", [])]
        for cid in ([class_id] if class_id else []) + span_classes:
            if cid not in table:
                flag("unknown-class", item_id, f"class {cid!r} not in class table")
            elif table[cid] == "novel" and item.get("split") == "train":
                flag("novel-in-train", item_id, f"novel class {cid!r} in train split")

        tensor_path = base / item["path"]
        if not tensor_path.exists():
            flag("missing-tensor", item_id, f"tensor file {item['path']} not found")
            continue
        try:
            arr = read_tensor(tensor_path)
        except FormatError as err:
            flag("bad-tensor", item_id, str(err))
            continue
        if list(arr.shape) != list(item.get("shape", [])):
            flag("shape-mismatch", item_id,
                 f"file shape {list(arr.shape)} != declared {item.get('shape')}")
            continue
        if arr.ndim != 2 or arr.shape[1] != manifest_obj.feature_dim:
            flag("dim-mismatch", item_id,
                 f"feature dim {arr.shape[-1] if arr.ndim else '?'} != "
                 f"manifest feature_dim {manifest_obj.feature_dim}")
        if item.get("kind") == "image":
            expect = item.get("height", 0) * item.get("width", 0)
            if arr.shape[0] != expect:
                flag("grid-mismatch", item_id,
                     f"cell count {arr.shape[0]} != height*width {expect}")
        if item.get("kind") == "utterance":
            spans = item.get("alignments", [])
            cursor = 0
            for span in spans:
                _, start, end = span
                if start != cursor or end <= start:
                    flag("bad-alignment", item_id,
                         f"span {span} leaves a gap, overlaps or is empty")
                    break
                cursor = end
            else:
                if spans and cursor != arr.shape[0]:
                    flag("bad-alignment", item_id,
                         f"spans cover {cursor} frames of {arr.shape[0]}")

    return ValidationReport(tuple(violations))


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Utterance:
    """A loaded utterance with its ground-truth word alignment spans."""

    item_id: str
    sequence: FrameSequence
    spans: tuple[tuple[str, int, int], ...]
    split: str
    language: str


@dataclass
class Dataset:
    """In-memory view of a generated dataset."""

    manifest: DatasetManifest
    words: list[LabeledItem]
    images: list[LabeledItem]
    utterances: list[Utterance]

    def select_words(self, split: str | None = None, familiarity: str | None = None,
                     language: str | None = None, class_id: str | None = None):
        return [w for w in self.words
                if (split is None or w.split == split)
                and (familiarity is None or w.familiarity == familiarity)
                and (language is None or w.language == language)
                and (class_id is None or w.class_id == class_id)]

    def select_images(self, split: str | None = None, familiarity: str | None = None,
                      class_id: str | None = None):
        return [i for i in self.images
                if (split is None or i.split == split)
                and (familiarity is None or i.familiarity == familiarity)
                and (class_id is None or i.class_id == class_id)]

    def select_utterances(self, split: str | None = None):
        return [u for u in self.utterances if split is None or u.split == split]

    def classes(self, familiarity: str | None = None) -> list[str]:
        return sorted(c["id"] for c in self.manifest.classes
                      if familiarity is None or c["familiarity"] == familiarity)

    @property
    def primary_language(self) -> str:
        return self.manifest.generator_config["languages"][0]


def load_dataset(dataset_dir: str | Path) -> Dataset:
    """Load manifest and all tensors from a dataset directory."""
    base = Path(dataset_dir)
    manifest = read_manifest(base / "manifest.json")
    table = manifest.class_table()
    words: list[LabeledItem] = []
    images: list[LabeledItem] = []
    utterances: list[Utterance] = []
    for item in manifest.items:
        arr = read_tensor(base / item["path"])
        kind = item["kind"]
        if kind == "word":
            seq = FrameSequence(arr, manifest.frame_duration, source_id=item["id"])
            words.append(LabeledItem(seq, item["class"], item["language"],
                                     item["split"], table[item["class"]], item["id"]))
        elif kind == "image":
            grid = PixelGrid(arr, item["height"], item["width"], source_id=item["id"])
            images.append(LabeledItem(grid, item["class"], "", item["split"],
                                      table[item["class"]], item["id"]))
        elif kind == "utterance":
            seq = FrameSequence(arr, manifest.frame_duration, source_id=item["id"])
            spans = tuple((s[0], int(s[1]), int(s[2])) for s in item["alignments"])
            utterances.append(Utterance(item["id"], seq, spans,
                                        item["split"], item["language"]))
        else:
            raise FormatError(f"unknown item kind {kind!r} for {item['id']}")
    return Dataset(manifest, words, images, utterances)
