import numpy as np
import pytest

from wordsight.core import (
    ConfigError,
    DimensionError,
    FrameSequence,
    LabeledItem,
    MatchingSet,
    PixelGrid,
    RandomSource,
    SupportSet,
    as_embedding,
)


class TestContainers:
    def test_frame_sequence_shape_and_immutability(self):
        seq = FrameSequence(np.ones((3, 4)))
        assert seq.length == 3 and seq.dim == 4
        with pytest.raises(ValueError):
            seq.frames[0, 0] = 5.0

    def test_frame_sequence_rejects_bad_shapes(self):
        with pytest.raises(DimensionError):
            FrameSequence(np.ones(4))
        with pytest.raises(DimensionError):
            FrameSequence(np.ones((0, 4)))
        with pytest.raises(ConfigError):
            FrameSequence(np.ones((2, 2)), frame_duration=0.0)

    def test_frame_sequence_rejects_non_finite(self):
        frames = np.ones((2, 2))
        frames[1, 1] = np.nan
        with pytest.raises(ValueError):
            FrameSequence(frames)

    def test_pixel_grid_requires_matching_cell_count(self):
        PixelGrid(np.ones((6, 4)), height=2, width=3)
        with pytest.raises(DimensionError):
            PixelGrid(np.ones((5, 4)), height=2, width=3)

    def test_embedding_coercion(self):
        vec = as_embedding([1.0, 2.0])
        assert vec.dtype == np.float64
        with pytest.raises(DimensionError):
            as_embedding([[1.0], [2.0]])

    def test_labeled_item_tags(self):
        seq = FrameSequence(np.ones((2, 2)))
        with pytest.raises(ConfigError):
            LabeledItem(seq, "c", split="nope")
        with pytest.raises(ConfigError):
            LabeledItem(seq, "c", familiarity="weird")

    def test_support_set_requires_exactly_k(self):
        word = FrameSequence(np.ones((2, 2)))
        image = PixelGrid(np.ones((4, 2)), 2, 2)
        SupportSet({"c": ((word, image),)}, k=1)
        with pytest.raises(ConfigError):
            SupportSet({"c": ((word, image),)}, k=2)

    def test_matching_set_nonempty(self):
        with pytest.raises(ConfigError):
            MatchingSet({})


class TestRandomSource:
    def test_equal_seeds_equal_streams(self):
        a = RandomSource(123).generator.uniform(size=10_000)
        b = RandomSource(123).generator.uniform(size=10_000)
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self):
        a = RandomSource(1).generator.uniform(size=100)
        b = RandomSource(2).generator.uniform(size=100)
        assert not np.array_equal(a, b)

    def test_spawn_is_deterministic_and_independent(self):
        child1 = RandomSource(7).spawn(3)
        child2 = RandomSource(7).spawn(3)
        assert child1.seed == child2.seed
        assert child1.seed != RandomSource(7).spawn(4).seed
        assert np.array_equal(child1.generator.uniform(size=50),
                              child2.generator.uniform(size=50))

    def test_algorithm_tag_enforced(self):
        with pytest.raises(ConfigError):
            RandomSource(0, algorithm="mt19937")
