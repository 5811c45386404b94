"""Command-line entry point.

Subcommands cover the full pipeline: ``generate-data``, ``validate``,
``mine``, ``train``, ``eval-fewshot``, ``eval-vpkl``, ``me-test`` and
``plot-attention``.  Every run writes its outputs under one directory
(``--out``, defaulting to the ``WORDSIGHT_OUT`` environment variable)
and stamps each JSON report with the seed, a hash of the resolved
configuration and the toolkit version, so identical invocations produce
byte-identical reports.

Exit codes: 0 success, 1 validation/configuration error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    ConfigError,
    FormatError,
    FrameSequence,
    MatchingSet,
    RandomSource,
    SupportSet,
    ToolkitError,
)
from .data import (
    Dataset,
    GeneratorConfig,
    canonical_json,
    generate_dataset,
    load_dataset,
    validate_dataset,
)
from .evaluation import (
    ME_VARIANTS,
    RandomScorer,
    few_shot_classify,
    few_shot_retrieval,
    me_accuracy,
    me_build_trials,
    me_table,
    select_detection_threshold,
    vpkl_evaluate,
)
from .losses import LossConfig
from .mining import MiningTruth, build_mined_pairs, mine_audio_pairs, mine_image_pairs, pair_precision
from .training import (
    ModelConfig,
    TrainConfig,
    TrainPair,
    TrainingDiverged,
    load_checkpoint,
    run_pipeline,
)


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message: str) -> None:  # noqa: A003 - argparse API
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _config_hash(payload: dict) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:16]


def _run_block(command: str, seed: int, payload: dict) -> dict:
    return {
        "command": command,
        "seed": seed,
        "config_hash": _config_hash(payload),
        "version": __version__,
    }


def _write_report(out_dir: Path, name: str, report: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(canonical_json(report), encoding="utf-8", newline="\n")
    return path


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("WORDSIGHT_OUT")
    if not out:
        raise ConfigError("no output directory: pass --out or set WORDSIGHT_OUT")
    return Path(out)


# ---------------------------------------------------------------------------
# generate-data / validate
# ---------------------------------------------------------------------------

def _cmd_generate(args) -> int:
    out = _out_dir(args)
    if args.config:
        import json
        cfg_dict = json.loads(Path(args.config).read_text(encoding="utf-8"))
    else:
        cfg_dict = {}
    for key in ("n_familiar", "n_novel", "n_background", "noise", "feature_dim"):
        value = getattr(args, key)
        if value is not None:
            cfg_dict[key] = value
    if args.languages:
        cfg_dict["languages"] = args.languages.split(",")
    cfg = GeneratorConfig.from_dict(cfg_dict)
    manifest = generate_dataset(cfg, RandomSource(args.seed), out)
    report = {
        "run": _run_block("generate-data", args.seed, cfg.to_dict()),
        "classes": len(manifest.classes),
        "items": len(manifest.items),
    }
    _write_report(out, "generate_report.json", report)
    print(f"wrote {len(manifest.items)} items to {out}")
    return 0


def _cmd_validate(args) -> int:
    report = validate_dataset(args.dataset)
    if args.out:
        _write_report(Path(args.out), "validation_report.json", report.to_dict())
    print(canonical_json(report.to_dict()), end="")
    return 0 if report.ok else 1


# ---------------------------------------------------------------------------
# mine
# ---------------------------------------------------------------------------

def _support_set(dataset: Dataset, k: int, rng: RandomSource) -> SupportSet:
    gen = rng.generator
    lang = dataset.primary_language
    pairs = {}
    for class_id in dataset.classes("familiar"):
        words = dataset.select_words(split="train", class_id=class_id, language=lang)
        images = dataset.select_images(split="train", class_id=class_id)
        if len(words) < k or len(images) < k:
            raise ConfigError(
                f"class {class_id}: need K={k} train words and images, "
                f"have {len(words)}/{len(images)}")
        widx = gen.choice(len(words), size=k, replace=False)
        iidx = gen.choice(len(images), size=k, replace=False)
        pairs[class_id] = tuple(
            (words[int(w)].payload, images[int(i)].payload) for w, i in zip(widx, iidx)
        )
    return SupportSet(pairs, k)


def _cmd_mine(args) -> int:
    out = _out_dir(args)
    dataset = load_dataset(args.data)
    rng = RandomSource(args.seed)
    support = _support_set(dataset, args.k, rng)

    utterances = dataset.select_utterances(split="train")
    corpus = [u.sequence for u in utterances]
    image_corpus = [img.payload for img in dataset.select_images(split="train")]

    audio, audio_warnings = mine_audio_pairs(support, corpus, args.n, jobs=args.jobs)
    images, image_warnings = mine_image_pairs(support, image_corpus, args.n, jobs=args.jobs)
    mined = build_mined_pairs(audio, images, args.n, audio_warnings + image_warnings)

    truth = MiningTruth(
        utterance_spans={u.item_id: u.spans for u in utterances},
        image_labels={img.item_id: img.class_id
                      for img in dataset.select_images(split="train")},
    )
    precision = pair_precision(mined, truth)

    def dist(scores: list[float]) -> dict:
        if not scores:
            return {"min": 0.0, "mean": 0.0, "max": 0.0}
        return {"min": float(np.min(scores)), "mean": float(np.mean(scores)),
                "max": float(np.max(scores))}

    payload = {"k": args.k, "n": args.n, "jobs": args.jobs, "data": str(args.data)}
    report = {
        "run": _run_block("mine", args.seed, payload),
        "pairs": {
            class_id: [
                {
                    "utterance_id": p.word.utterance_id,
                    "start_frame": p.word.start_frame,
                    "end_frame": p.word.end_frame,
                    "score": p.word.score,
                    "image_id": p.image.source_id,
                }
                for p in pair_list
            ]
            for class_id, pair_list in sorted(mined.pairs.items())
        },
        "score_distributions": {
            class_id: dist([p.word.score for p in pair_list])
            for class_id, pair_list in sorted(mined.pairs.items())
        },
        "precision": precision.to_dict(),
        "warnings": mined.warnings,
    }
    _write_report(out, "mined_pairs.json", report)
    for warning in mined.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"mined {sum(mined.counts().values())} pairs "
          f"(audio precision {precision.audio_aggregate:.1f}%, "
          f"image precision {precision.image_aggregate:.1f}%)")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _ground_truth_pairs(dataset: Dataset, languages: list[str]) -> list[TrainPair]:
    pairs: list[TrainPair] = []
    for class_id in dataset.classes("familiar"):
        images = dataset.select_images(split="train", class_id=class_id)
        for lang in languages:
            words = dataset.select_words(split="train", class_id=class_id, language=lang)
            for j, word in enumerate(words):
                image = images[j % len(images)]
                pairs.append(TrainPair(word.payload, image.payload, class_id, lang))
    if not pairs:
        raise ConfigError(f"no ground-truth pairs for languages {languages}")
    return pairs


def _mined_train_pairs(dataset: Dataset, mined_path: Path) -> list[TrainPair]:
    import json
    blob = json.loads(mined_path.read_text(encoding="utf-8"))
    utts = {u.item_id: u for u in dataset.utterances}
    imgs = {img.item_id: img for img in dataset.images}
    lang = dataset.primary_language
    pairs: list[TrainPair] = []
    for class_id, entries in sorted(blob["pairs"].items()):
        for entry in entries:
            utt = utts[entry["utterance_id"]]
            crop = utt.sequence.frames[entry["start_frame"]:entry["end_frame"]]
            word = FrameSequence(crop, utt.sequence.frame_duration,
                                 f"{entry['utterance_id']}[{entry['start_frame']}:"
                                 f"{entry['end_frame']}]")
            pairs.append(TrainPair(word, imgs[entry["image_id"]].payload, class_id, lang))
    if not pairs:
        raise ConfigError(f"no mined pairs in {mined_path}")
    return pairs


def _background_items(dataset: Dataset):
    lang = dataset.primary_language
    words = dataset.select_words(split="train", familiarity="background", language=lang)
    images = dataset.select_images(split="train", familiarity="background")
    pairs = []
    for class_id in dataset.classes("background"):
        class_words = [w for w in words if w.class_id == class_id]
        class_images = [i for i in images if i.class_id == class_id]
        for j, word in enumerate(class_words):
            if class_images:
                pairs.append((word, class_images[j % len(class_images)]))
    return words, images, pairs


def _parse_language_pairs(spec: str) -> tuple[tuple[str, str], ...]:
    pairs = []
    for chunk in spec.split(","):
        parts = chunk.split(":")
        if len(parts) != 2:
            raise ConfigError(f"bad language pair {chunk!r}, expected lang1:lang2")
        pairs.append((parts[0], parts[1]))
    return tuple(pairs)


def _cmd_train(args) -> int:
    out = _out_dir(args)
    dataset = load_dataset(args.data)
    stages = args.stages.split(",")
    for stage in stages:
        if stage not in ("unimodal", "background", "finetune"):
            raise ConfigError(f"unknown stage {stage!r}")

    language_pairs = _parse_language_pairs(args.cross_lingual) if args.cross_lingual else ()
    loss_cfg = LossConfig(
        margin=args.margin, n_neg=args.n_neg,
        cross_lingual=bool(language_pairs), language_pairs=language_pairs,
        within_language=args.within_language,
    )
    model_cfg = ModelConfig(
        feature_dim=dataset.manifest.feature_dim,
        hidden_dim=args.hidden_dim, embed_dim=args.embed_dim, head=args.head,
    )

    languages = (args.train_languages.split(",") if args.train_languages
                 else [dataset.primary_language])
    bg_words, bg_images, bg_pairs = _background_items(dataset)

    stage_names = [{"unimodal": "unimodal_init"}.get(s, s) for s in stages]
    train_pairs = None
    if "finetune" in stage_names:
        if args.pairs:
            train_pairs = _mined_train_pairs(dataset, Path(args.pairs))
        else:
            train_pairs = _ground_truth_pairs(dataset, languages)

    base_cfg = TrainConfig(
        stage=stage_names[0], batch_size=args.batch_size, step_size=args.lr,
        momentum=args.momentum, seed=args.seed, loss=loss_cfg,
    )
    stage_epochs = {"unimodal_init": args.unimodal_epochs,
                    "background": args.background_epochs,
                    "finetune": args.epochs}
    checkpoints, attempts = run_pipeline(
        model_cfg, stage_names, base_cfg, stage_epochs,
        train_pairs=train_pairs, background_words=bg_words,
        background_images=bg_images, background_pairs=bg_pairs,
        use_background_negatives=args.background_negatives,
        restarts=args.restarts,
    )
    traces: dict[str, list[float]] = {}
    for flag_name, stage in zip(stages, stage_names):
        checkpoints[stage].save(out / flag_name)
        traces[flag_name] = checkpoints[stage].loss_trace

    payload = {
        "stages": stages, "data": str(args.data), "head": args.head,
        "epochs": stage_epochs, "lr": args.lr, "momentum": args.momentum,
        "batch_size": args.batch_size, "n_neg": args.n_neg,
        "languages": languages, "cross_lingual": args.cross_lingual or "",
        "pairs": str(args.pairs or ""), "hidden_dim": args.hidden_dim,
        "embed_dim": args.embed_dim,
        "background_negatives": args.background_negatives,
    }
    report = {
        "run": _run_block("train", args.seed, payload),
        "loss_traces": traces,
        "final_stage": stages[-1],
        "attempts": attempts,
    }
    _write_report(out, "train_report.json", report)
    print(f"trained stages {stages} in {attempts} attempt(s); checkpoints under {out}")
    return 0


# ---------------------------------------------------------------------------
# eval-fewshot / eval-vpkl / me-test / plot-attention
# ---------------------------------------------------------------------------

def _load_scorer(checkpoint: str | None, seed: int):
    if checkpoint is None:
        return RandomScorer(seed)
    return load_checkpoint(checkpoint).model


def _cmd_eval_fewshot(args) -> int:
    out = _out_dir(args)
    dataset = load_dataset(args.data)
    model = _load_scorer(args.checkpoint, args.seed)
    rng = RandomSource(args.seed)
    gen = rng.generator
    lang = dataset.primary_language
    familiar = dataset.classes("familiar")

    matching_images = {}
    for class_id in familiar:
        candidates = dataset.select_images(split="test", class_id=class_id)
        matching_images[class_id] = candidates[int(gen.integers(0, len(candidates)))].payload
    matching = MatchingSet(matching_images)

    per_class_acc: dict[str, list[float]] = {}
    for word in dataset.select_words(split="test", familiarity="familiar", language=lang):
        predicted = few_shot_classify(model, word.payload, matching)
        per_class_acc.setdefault(word.class_id, []).append(float(predicted == word.class_id))

    pool = [img for img in dataset.select_images(split="test")
            if img.familiarity == "familiar"]
    per_class_pn: dict[str, list[float]] = {}
    for word in dataset.select_words(split="test", familiarity="familiar", language=lang):
        n = sum(1 for img in pool if img.class_id == word.class_id)
        if n == 0:
            continue
        pn = few_shot_retrieval(model, word.payload, word.class_id, pool, n)
        per_class_pn.setdefault(word.class_id, []).append(pn)

    accuracy = {c: 100.0 * float(np.mean(v)) for c, v in sorted(per_class_acc.items())}
    retrieval = {c: float(np.mean(v)) for c, v in sorted(per_class_pn.items())}
    payload = {"data": str(args.data), "checkpoint": str(args.checkpoint or "random")}
    report = {
        "run": _run_block("eval-fewshot", args.seed, payload),
        "classification": {
            "per_class": accuracy,
            "aggregate": float(np.mean(list(accuracy.values()))),
        },
        "retrieval_p_at_n": {
            "per_class": retrieval,
            "aggregate": float(np.mean(list(retrieval.values()))),
        },
    }
    _write_report(out, "fewshot_report.json", report)
    print(f"few-shot classification {report['classification']['aggregate']:.1f}%, "
          f"P@N {report['retrieval_p_at_n']['aggregate']:.1f}%")
    return 0


def _vpkl_queries(dataset: Dataset, per_class: int, gen: np.random.Generator):
    queries = []
    for class_id in dataset.classes("familiar"):
        candidates = dataset.select_images(split="test", class_id=class_id)
        take = min(per_class, len(candidates))
        picks = gen.choice(len(candidates), size=take, replace=False)
        queries.extend(candidates[int(i)] for i in picks)
    return queries


def _cmd_eval_vpkl(args) -> int:
    out = _out_dir(args)
    dataset = load_dataset(args.data)
    model = _load_scorer(args.checkpoint, args.seed)
    gen = RandomSource(args.seed).generator
    queries = _vpkl_queries(dataset, args.queries_per_class, gen)
    test_utts = dataset.select_utterances(split="test")

    if args.theta is None:
        dev_queries = [img for img in dataset.select_images(split="dev")]
        dev_utts = dataset.select_utterances(split="dev")
        theta = select_detection_threshold(model, dev_queries, dev_utts)
    else:
        theta = args.theta

    report_obj = vpkl_evaluate(model, queries, test_utts, theta, args.tau,
                               seed=args.seed, jobs=args.jobs)
    payload = {"data": str(args.data), "checkpoint": str(args.checkpoint or "random"),
               "tau": args.tau, "queries_per_class": args.queries_per_class}
    report = {"run": _run_block("eval-vpkl", args.seed, payload),
              "vpkl": report_obj.to_dict()}
    _write_report(out, "vpkl_report.json", report)
    m = report_obj.metrics
    print(f"detection F1 {m['detection_f1']:.3f}, "
          f"localisation accuracy {m['localisation_accuracy']:.3f} (theta {theta:.4f})")
    return 0


def _cmd_me_test(args) -> int:
    out = _out_dir(args)
    dataset = load_dataset(args.data)
    model = _load_scorer(args.checkpoint, args.seed)
    variants = list(ME_VARIANTS) if args.variant == "all" else [args.variant]
    reports = {}
    for variant in variants:
        trials = me_build_trials(dataset, variant, args.trials, RandomSource(args.seed))
        reports[variant] = me_accuracy(model, trials, seed=args.seed)

    payload = {"data": str(args.data), "checkpoint": str(args.checkpoint or "random"),
               "variant": args.variant, "trials": args.trials}
    report = {
        "run": _run_block("me-test", args.seed, payload),
        "results": {v: r.to_dict() for v, r in sorted(reports.items())},
    }
    _write_report(out, "me_report.json", report)
    table = me_table(reports)
    (out / "me_table.txt").write_text(table, encoding="utf-8", newline="\n")
    print(table, end="")
    return 0


def _cmd_plot_attention(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = _out_dir(args)
    dataset = load_dataset(args.data)
    model = _load_scorer(args.checkpoint, args.seed)
    if not hasattr(model, "word_image_attention"):
        raise ConfigError("plot-attention needs a checkpoint model")

    words = {w.item_id: w for w in dataset.words}
    images = {i.item_id: i for i in dataset.images}
    if args.words:
        word_ids = args.words.split(",")
        image_ids = args.images.split(",") if args.images else []
    else:
        lang = dataset.primary_language
        word_ids, image_ids = [], []
        for class_id in dataset.classes("familiar"):
            class_words = dataset.select_words(split="test", class_id=class_id, language=lang)
            class_images = dataset.select_images(split="test", class_id=class_id)
            if class_words and class_images:
                word_ids.append(class_words[0].item_id)
                image_ids.append(class_images[0].item_id)
    if len(image_ids) != len(word_ids):
        raise ConfigError("need one image id per word id")

    out.mkdir(parents=True, exist_ok=True)
    written = []
    for word_id, image_id in zip(word_ids, image_ids):
        if word_id not in words:
            raise ConfigError(f"unknown word id {word_id!r}")
        if image_id not in images:
            raise ConfigError(f"unknown image id {image_id!r}")
        word, image = words[word_id], images[image_id]
        score, per_cell = model.word_image_attention(word.payload, image.payload)
        grid = per_cell.reshape(image.payload.height, image.payload.width)
        fig, ax = plt.subplots(figsize=(3, 3))
        im = ax.imshow(grid, cmap="viridis")
        ax.set_title(f"{word_id}\nvs {image_id} (s={score:.2f})", fontsize=7)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046)
        path = out / f"attention_{word_id}__{image_id}.png"
        fig.savefig(path, dpi=100, format="png")
        plt.close(fig)
        written.append(path.name)

    payload = {"data": str(args.data), "checkpoint": str(args.checkpoint or ""),
               "words": word_ids, "images": image_ids}
    _write_report(out, "plot_report.json", {
        "run": _run_block("plot-attention", args.seed, payload),
        "heatmaps": written,
    })
    print(f"wrote {len(written)} heatmaps to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wordsight",
                     description="Cross-modal word grounding toolkit (desk scale)")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_common(p, with_out=True):
        p.add_argument("--seed", type=int, default=0)
        if with_out:
            p.add_argument("--out", default=None,
                           help="output directory (default: $WORDSIGHT_OUT)")

    p = sub.add_parser("generate-data", help="generate a synthetic dataset")
    add_common(p)
    p.add_argument("--config", default=None, help="generator config JSON file")
    p.add_argument("--n-familiar", dest="n_familiar", type=int, default=None)
    p.add_argument("--n-novel", dest="n_novel", type=int, default=None)
    p.add_argument("--n-background", dest="n_background", type=int, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--feature-dim", dest="feature_dim", type=int, default=None)
    p.add_argument("--languages", default=None, help="comma-separated language list")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("validate", help="validate a dataset directory")
    p.add_argument("dataset")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("mine", help="mine word-image training pairs")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=5, help="support examples per class")
    p.add_argument("--n", type=int, default=600, help="pairs to mine per class")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("train", help="run the staged training pipeline")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--stages", default="background,finetune",
                   help="comma list from unimodal,background,finetune")
    p.add_argument("--pairs", default=None, help="mined_pairs.json (default: ground truth)")
    p.add_argument("--head", default="max_matchmap",
                   choices=["max_matchmap", "context_cosine", "word_to_image"])
    p.add_argument("--epochs", type=int, default=30, help="finetune epochs")
    p.add_argument("--background-epochs", dest="background_epochs", type=int, default=30)
    p.add_argument("--unimodal-epochs", dest="unimodal_epochs", type=int, default=15)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=8)
    p.add_argument("--n-neg", dest="n_neg", type=int, default=2)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int, default=32)
    p.add_argument("--embed-dim", dest="embed_dim", type=int, default=16)
    p.add_argument("--train-languages", dest="train_languages", default=None,
                   help="comma list of word languages for ground-truth pairs")
    p.add_argument("--cross-lingual", dest="cross_lingual", default=None,
                   help="language pairs like english:dutch,english:french")
    p.add_argument("--within-language", dest="within_language", action="store_true")
    p.add_argument("--background-negatives", dest="background_negatives",
                   action="store_true")
    p.add_argument("--restarts", type=int, default=3,
                   help="extra pipeline attempts when fine-tuning fails to converge")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval-fewshot", help="few-shot classification and retrieval")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=_cmd_eval_fewshot)

    p = sub.add_parser("eval-vpkl", help="keyword detection and localisation")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--theta", type=float, default=None,
                   help="detection threshold (default: selected on dev split)")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--queries-per-class", dest="queries_per_class", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_eval_vpkl)

    p = sub.add_parser("me-test", help="mutual-exclusivity trial battery")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", default=None,
                   help="trained model (default: seeded random scorer)")
    p.add_argument("--variant", default="all", choices=["all", *ME_VARIANTS])
    p.add_argument("--trials", type=int, default=1000)
    p.set_defaults(func=_cmd_me_test)

    p = sub.add_parser("plot-attention", help="write word-over-image heatmaps")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--words", default=None, help="comma list of word item ids")
    p.add_argument("--images", default=None, help="comma list of image item ids")
    p.set_defaults(func=_cmd_plot_attention)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FormatError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 2
    except TrainingDiverged as err:
        out = args.out or os.environ.get("WORDSIGHT_OUT")
        if out:
            err.checkpoint.save(Path(out) / "diagnostic")
            print(f"error: {err} (diagnostic checkpoint saved)", file=sys.stderr)
        else:
            print(f"error: {err}", file=sys.stderr)
        return 1
    except (ConfigError, ToolkitError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
