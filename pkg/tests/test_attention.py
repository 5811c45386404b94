import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wordsight.attention import (
    LocalisationResult,
    SimilarityHead,
    compute_matchmap,
    context_similarity,
    localise,
    max_similarity,
    word_to_image_similarity,
)
from wordsight.core import (
    DegenerateInputError,
    DimensionError,
    FrameSequence,
    Matchmap,
    PixelGrid,
)

from conftest import rel_close


def naive_matchmap(frames: np.ndarray, cells: np.ndarray) -> np.ndarray:
    t, d = frames.shape
    p = cells.shape[0]
    out = np.zeros((t, p))
    for i in range(t):
        for j in range(p):
            acc = 0.0
            for k in range(d):
                acc += frames[i, k] * cells[j, k]
            out[i, j] = acc
    return out


def oracle_context(frames: np.ndarray, cells: np.ndarray) -> float:
    scores = naive_matchmap(frames, cells)

    def softmax(v):
        e = np.exp(v - v.max())
        return e / e.sum()

    alpha = softmax(scores.max(axis=1))
    beta = softmax(scores.max(axis=0))
    c_a = sum(alpha[i] * frames[i] for i in range(frames.shape[0]))
    c_v = sum(beta[j] * cells[j] for j in range(cells.shape[0]))
    return float(np.dot(c_a, c_v) / (np.linalg.norm(c_a) * np.linalg.norm(c_v)))


def random_pair(seed, t=4, p=6, d=3, grid=(2, 3)):
    gen = np.random.default_rng(seed)
    audio = FrameSequence(gen.standard_normal((t, d)))
    image = PixelGrid(gen.standard_normal((p, d)), *grid)
    return audio, image


class TestComputeMatchmap:
    def test_hand_dot_products(self):
        audio = FrameSequence([[1.0, 0.0], [0.0, 1.0]])
        image = PixelGrid([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 1, 3)
        m = compute_matchmap(audio, image)
        assert np.array_equal(m.scores, [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])

    def test_orthogonal_inputs_zero_map(self):
        audio = FrameSequence(np.tile([1.0, 0.0], (3, 1)))
        image = PixelGrid(np.tile([0.0, 1.0], (4, 1)), 2, 2)
        assert np.all(compute_matchmap(audio, image).scores == 0.0)

    def test_matches_naive_loop_oracle(self):
        audio, image = random_pair(0)
        m = compute_matchmap(audio, image)
        assert rel_close(m.scores, naive_matchmap(audio.frames, image.cells))

    def test_dimension_mismatch_names_sources(self):
        audio = FrameSequence(np.ones((2, 3)), source_id="utt1")
        image = PixelGrid(np.ones((4, 5)), 2, 2, source_id="img1")
        with pytest.raises(DimensionError, match="utt1.*img1"):
            compute_matchmap(audio, image)


class TestMaxSimilarity:
    def test_hand_example(self):
        audio = FrameSequence([[1.0, 0.0], [0.0, 1.0]])
        image = PixelGrid([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 1, 3)
        assert max_similarity(compute_matchmap(audio, image)) == 1.0

    def test_all_zero(self):
        assert max_similarity(Matchmap(np.zeros((3, 4)))) == 0.0

    def test_matches_scan_oracle(self):
        audio, image = random_pair(0)
        m = compute_matchmap(audio, image)
        best = -np.inf
        for row in m.scores:
            for value in row:
                best = max(best, value)
        assert max_similarity(m) == best

    def test_empty_rejected_at_construction(self):
        with pytest.raises(DimensionError):
            Matchmap(np.zeros((0, 3)))


class TestContextSimilarity:
    def test_identical_unit_vectors(self):
        audio = FrameSequence([[1.0, 0.0]])
        image = PixelGrid([[1.0, 0.0]], 1, 1)
        assert context_similarity(audio, image) == pytest.approx(1.0)

    def test_antiparallel(self):
        audio = FrameSequence([[0.0, 1.0]])
        image = PixelGrid([[0.0, -1.0]], 1, 1)
        assert context_similarity(audio, image) == pytest.approx(-1.0)

    def test_matches_step_by_step_oracle(self):
        gen = np.random.default_rng(0)
        audio = FrameSequence(gen.standard_normal((3, 2)))
        image = PixelGrid(gen.standard_normal((4, 2)), 2, 2)
        assert rel_close(context_similarity(audio, image),
                         oracle_context(audio.frames, image.cells))

    def test_zero_norm_context_is_degenerate(self):
        audio = FrameSequence([[0.0, 0.0]])
        image = PixelGrid([[1.0, 0.0]], 1, 1)
        with pytest.raises(DegenerateInputError):
            context_similarity(audio, image)


class TestWordToImage:
    def test_basis_vectors(self):
        image = PixelGrid([[1.0, 0.0], [0.0, 1.0]], 1, 2)
        score, per_cell = word_to_image_similarity(np.array([1.0, 0.0]), image)
        assert score == 1.0
        assert np.array_equal(per_cell, [1.0, 0.0])

    def test_zero_word_annihilates(self):
        image = PixelGrid(np.random.default_rng(1).standard_normal((4, 3)), 2, 2)
        score, per_cell = word_to_image_similarity(np.zeros(3), image)
        assert score == 0.0 and np.all(per_cell == 0.0)

    def test_matches_scan_oracle(self):
        gen = np.random.default_rng(0)
        word = gen.standard_normal(4)
        image = PixelGrid(gen.standard_normal((9, 4)), 3, 3)
        score, per_cell = word_to_image_similarity(word, image)
        expected = [float(np.dot(word, cell)) for cell in image.cells]
        assert rel_close(per_cell, expected)
        assert score == max(expected)

    def test_score_is_exactly_max_of_per_cell(self):
        gen = np.random.default_rng(5)
        for _ in range(20):
            word = gen.standard_normal(3)
            image = PixelGrid(gen.standard_normal((6, 3)), 2, 3)
            score, per_cell = word_to_image_similarity(word, image)
            assert score == np.max(per_cell)

    def test_dimension_mismatch(self):
        image = PixelGrid(np.ones((2, 3)), 1, 2)
        with pytest.raises(DimensionError):
            word_to_image_similarity(np.ones(4), image)


def matchmap_from_frame_scores(per_frame):
    return Matchmap(np.asarray(per_frame, dtype=float)[:, None])


class TestLocalise:
    def test_isolated_peak(self):
        res = localise(matchmap_from_frame_scores([0, 0, 5, 0]), tau=0.5)
        assert res.peak_frame == 2 and res.span == (2, 2)

    def test_tau_relative_run(self):
        res = localise(matchmap_from_frame_scores([1, 4, 5, 4, 1]), tau=0.5)
        assert res.peak_frame == 2 and res.span == (1, 3)

    def test_constant_scores_full_span(self):
        res = localise(matchmap_from_frame_scores([2, 2, 2]), tau=0.5)
        assert res.span == (0, 2)

    def test_tie_breaks_to_lowest_index(self):
        res = localise(matchmap_from_frame_scores([1, 5, 0, 5]), tau=0.9)
        assert res.peak_frame == 1

    def test_invalid_tau(self):
        with pytest.raises(ValueError):
            localise(matchmap_from_frame_scores([1, 2]), tau=0.0)

    def test_result_invariant(self):
        with pytest.raises(ValueError):
            LocalisationResult(peak_frame=5, span=(0, 2), peak_score=1.0)

    @given(st.lists(st.floats(0.1, 100.0), min_size=1, max_size=30),
           st.floats(0.05, 1.0), st.floats(0.05, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_span_contains_peak_and_tau_monotone(self, scores, tau_a, tau_b):
        m = matchmap_from_frame_scores(scores)
        low, high = sorted((tau_a, tau_b))
        res_low, res_high = localise(m, low), localise(m, high)
        for res in (res_low, res_high):
            assert res.span[0] <= res.peak_frame <= res.span[1]
        # shrinking tau never shrinks the span (positive scores)
        assert res_low.span[0] <= res_high.span[0]
        assert res_low.span[1] >= res_high.span[1]


class TestProperties:
    @given(st.integers(0, 10_000), st.floats(0.1, 10.0))
    @settings(max_examples=40, deadline=None)
    def test_scale_covariance(self, seed, c):
        audio, image = random_pair(seed)
        m = compute_matchmap(audio, image)
        scaled = compute_matchmap(FrameSequence(c * audio.frames), image)
        assert rel_close(scaled.scores, c * m.scores)
        assert np.argmax(scaled.scores) == np.argmax(m.scores)

    @given(st.integers(0, 10_000), st.floats(0.1, 10.0), st.floats(0.1, 10.0))
    @settings(max_examples=40, deadline=None)
    def test_cosine_invariant_to_positive_context_scaling(self, seed, ca, cb):
        gen = np.random.default_rng(seed)
        v1, v2 = gen.standard_normal(4), gen.standard_normal(4)

        def cosine(a, b):
            return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))

        assert rel_close(cosine(ca * v1, cb * v2), cosine(v1, v2), rtol=1e-9)

    def test_head_kind_validation(self):
        SimilarityHead("max_matchmap")
        with pytest.raises(DimensionError):
            SimilarityHead("fancy_transformer")
