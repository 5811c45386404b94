"""Shared fixtures: small generated datasets reused across test modules."""

import numpy as np
import pytest

from wordsight.core import RandomSource, SupportSet
from wordsight.data import GeneratorConfig, generate_dataset, load_dataset


def small_config(**overrides) -> GeneratorConfig:
    base = dict(
        n_familiar=3, n_novel=2, n_background=2,
        languages=("english",),
        words_per_class=5, images_per_class=5,
        dev_words_per_class=2, dev_images_per_class=2,
        test_words_per_class=3, test_images_per_class=3,
        train_utterances=10, dev_utterances=4, test_utterances=6,
        noise=0.1, feature_dim=16,
    )
    base.update(overrides)
    return GeneratorConfig(**base)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("small_dataset")
    generate_dataset(small_config(), RandomSource(0), out)
    return load_dataset(out)


@pytest.fixture(scope="session")
def small_dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("small_dataset_dir")
    generate_dataset(small_config(), RandomSource(0), out)
    return out


@pytest.fixture(scope="session")
def clean_dataset(tmp_path_factory):
    """Zero-noise, orthogonal prototypes: exact-match constructions."""
    out = tmp_path_factory.mktemp("clean_dataset")
    generate_dataset(small_config(noise=0.0, train_utterances=30), RandomSource(1), out)
    return load_dataset(out)


def support_from(dataset, k: int, seed: int = 0) -> SupportSet:
    gen = RandomSource(seed).generator
    lang = dataset.primary_language
    pairs = {}
    for class_id in dataset.classes("familiar"):
        words = dataset.select_words(split="train", class_id=class_id, language=lang)
        images = dataset.select_images(split="train", class_id=class_id)
        widx = gen.choice(len(words), size=k, replace=False)
        iidx = gen.choice(len(images), size=k, replace=False)
        pairs[class_id] = tuple(
            (words[int(w)].payload, images[int(i)].payload) for w, i in zip(widx, iidx)
        )
    return SupportSet(pairs, k)


def rel_close(a, b, rtol=1e-6, floor=1e-9) -> bool:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return bool(np.all(np.abs(a - b) <= rtol * np.maximum(np.abs(a), np.abs(b)) + floor))
