import numpy as np
import pytest

from wordsight.core import FrameSequence, PixelGrid, RandomSource, SupportSet
from wordsight.data import GeneratorConfig, generate_dataset, load_dataset
from wordsight.mining import (
    MinedPair,
    MinedPairSet,
    MiningTruth,
    SegmentMatch,
    build_mined_pairs,
    mean_cell_embedding,
    mine_audio_pairs,
    mine_image_pairs,
    pair_precision,
    qbe_match,
)

from conftest import small_config, support_from


def seq(frames, source_id=""):
    return FrameSequence(np.asarray(frames, dtype=float), source_id=source_id)


def oracle_best_window(query: np.ndarray, utterance: np.ndarray):
    """Exhaustive window scan with per-frame L2 normalisation."""
    def norm_rows(arr):
        out = np.array(arr, dtype=float)
        for i, row in enumerate(out):
            n = np.linalg.norm(row)
            if n > 0:
                out[i] = row / n
        return out

    q = norm_rows(query)
    u = norm_rows(utterance)
    tq = q.shape[0]
    best_start, best_score = 0, -np.inf
    for start in range(u.shape[0] - tq + 1):
        score = np.mean([float(np.dot(q[i], u[start + i])) for i in range(tq)])
        if score > best_score:
            best_start, best_score = start, score
    return best_start, best_score


class TestQbeMatch:
    def test_exact_copy_found_at_planted_offset(self):
        gen = np.random.default_rng(0)
        query = gen.standard_normal((4, 6))
        utterance = np.vstack([gen.standard_normal((5, 6)), query,
                               gen.standard_normal((3, 6))])
        match = qbe_match(seq(query), seq(utterance, "u"))
        assert (match.start_frame, match.end_frame) == (5, 9)
        assert match.score == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_query_scores_zero(self):
        query = np.tile([1.0, 0.0], (3, 1))
        utterance = np.tile([0.0, 1.0], (8, 1))
        match = qbe_match(seq(query), seq(utterance))
        assert match.score == pytest.approx(0.0, abs=1e-12)

    def test_matches_exhaustive_oracle_on_seeded_cases(self):
        for case in range(50):
            gen = np.random.default_rng(case)
            tq = int(gen.integers(2, 6))
            t = int(gen.integers(tq, 20))
            query = gen.standard_normal((tq, 4))
            utterance = gen.standard_normal((t, 4))
            match = qbe_match(seq(query), seq(utterance))
            start, score = oracle_best_window(query, utterance)
            assert match.start_frame == start
            assert match.score == pytest.approx(score, rel=1e-9)

    def test_query_longer_than_utterance(self):
        with pytest.raises(ValueError, match="longer"):
            qbe_match(seq(np.ones((5, 2))), seq(np.ones((3, 2))))

    def test_tie_breaks_to_lowest_start(self):
        frame = np.array([[1.0, 0.0]])
        utterance = np.tile([1.0, 0.0], (6, 1))
        match = qbe_match(seq(frame), seq(utterance))
        assert match.start_frame == 0


class TestMiningOnSyntheticData:
    def test_zero_noise_orthogonal_prototypes_full_precision(self, tmp_path):
        cfg = small_config(noise=0.0, train_utterances=30, words_per_class=6,
                           images_per_class=8)
        generate_dataset(cfg, RandomSource(3), tmp_path)
        dataset = load_dataset(tmp_path)
        support = support_from(dataset, k=3, seed=0)
        utterances = dataset.select_utterances(split="train")
        n = 5
        audio, aw = mine_audio_pairs(support, [u.sequence for u in utterances], n)
        images, iw = mine_image_pairs(
            support, [i.payload for i in dataset.select_images(split="train")], n)
        mined = build_mined_pairs(audio, images, n, aw + iw)
        truth = MiningTruth(
            {u.item_id: u.spans for u in utterances},
            {i.item_id: i.class_id for i in dataset.select_images(split="train")})
        report = pair_precision(mined, truth)
        assert all(v == 100.0 for v in report.audio_per_class.values())
        assert all(v == 100.0 for v in report.image_per_class.values())
        assert report.audio_aggregate == 100.0 and report.image_aggregate == 100.0

    def test_top_n_equals_exhaustive_ranking_oracle(self, small_dataset):
        support = support_from(small_dataset, k=2, seed=0)
        utterances = small_dataset.select_utterances(split="train")
        corpus = [u.sequence for u in utterances]
        n = 4
        audio, _ = mine_audio_pairs(support, corpus, n)
        for class_id, queries in ((c, [w for w, _ in support.pairs[c]])
                                  for c in support.classes):
            scored = []
            for utt in corpus:
                best = None
                for query in queries:
                    if query.length > utt.length:
                        continue
                    match = qbe_match(query, utt)
                    if best is None or match.score > best.score:
                        best = match
                if best is not None:
                    scored.append(best)
            scored.sort(key=lambda m: (-m.score, m.utterance_id, m.start_frame))
            expected = [(m.utterance_id, m.start_frame, round(m.score, 12))
                        for m in scored[:n]]
            got = [(m.utterance_id, m.start_frame, round(m.score, 12))
                   for m in audio[class_id]]
            assert got == expected

    def test_determinism(self, small_dataset):
        support = support_from(small_dataset, k=2, seed=0)
        corpus = [u.sequence for u in small_dataset.select_utterances(split="train")]
        imgs = [i.payload for i in small_dataset.select_images(split="train")]
        a1, w1 = mine_audio_pairs(support, corpus, 3)
        a2, w2 = mine_audio_pairs(support, corpus, 3)
        assert a1 == a2 and w1 == w2
        i1, _ = mine_image_pairs(support, imgs, 3)
        i2, _ = mine_image_pairs(support, imgs, 3)
        assert [[g.source_id for g in i1[c]] for c in sorted(i1)] \
            == [[g.source_id for g in i2[c]] for c in sorted(i2)]

    def test_jobs_parallelism_gives_identical_results(self, small_dataset):
        support = support_from(small_dataset, k=2, seed=0)
        corpus = [u.sequence for u in small_dataset.select_utterances(split="train")]
        serial, _ = mine_audio_pairs(support, corpus, 3, jobs=1)
        parallel, _ = mine_audio_pairs(support, corpus, 3, jobs=4)
        assert serial == parallel

    def test_shortage_warning(self, small_dataset):
        support = support_from(small_dataset, k=2, seed=0)
        corpus = [u.sequence for u in small_dataset.select_utterances(split="train")]
        _, warnings = mine_audio_pairs(support, corpus, n=len(corpus) + 5)
        assert warnings and all("requested audio pairs" in w for w in warnings)

    def test_one_segment_per_utterance_per_class(self, small_dataset):
        support = support_from(small_dataset, k=2, seed=0)
        corpus = [u.sequence for u in small_dataset.select_utterances(split="train")]
        audio, _ = mine_audio_pairs(support, corpus, len(corpus))
        for class_id, matches in audio.items():
            ids = [m.utterance_id for m in matches]
            assert len(ids) == len(set(ids))

    def test_monotone_rank_threshold(self, small_dataset):
        """Appending a strictly better utterance never lowers retained scores."""
        support = support_from(small_dataset, k=2, seed=0)
        corpus = [u.sequence for u in small_dataset.select_utterances(split="train")]
        n = 3
        audio, _ = mine_audio_pairs(support, corpus, n)
        class_id = support.classes[0]
        perfect = FrameSequence(support.pairs[class_id][0][0].frames,
                                source_id="zz_planted")
        audio2, _ = mine_audio_pairs(support, corpus + [perfect], n)
        before = min(m.score for m in audio[class_id])
        after = min(m.score for m in audio2[class_id])
        assert after >= before - 1e-12


class TestImageMining:
    def test_exact_copies_score_first(self):
        gen = np.random.default_rng(4)
        proto_a, proto_b = np.eye(6)[0], np.eye(6)[1]

        def image(proto, noise, sid):
            cells = 0.01 * gen.standard_normal((4, 6)) * noise + proto
            return PixelGrid(cells, 2, 2, source_id=sid)

        support = SupportSet({
            "a": ((seq(np.tile(proto_a, (2, 1))), image(proto_a, 0, "sa")),),
            "b": ((seq(np.tile(proto_b, (2, 1))), image(proto_b, 0, "sb")),),
        }, k=1)
        corpus = [image(proto_a, 1, f"a{i}") for i in range(3)] \
            + [image(proto_b, 1, f"b{i}") for i in range(3)]
        mined, warnings = mine_image_pairs(support, corpus, 3)
        assert not warnings
        assert all(g.source_id.startswith("a") for g in mined["a"])
        assert all(g.source_id.startswith("b") for g in mined["b"])

    def test_mean_cell_embedder_default(self):
        grid = PixelGrid(np.array([[1.0, 0.0], [3.0, 2.0]]), 1, 2)
        assert np.array_equal(mean_cell_embedding(grid), [2.0, 1.0])

    def test_ranking_matches_exhaustive_oracle(self, small_dataset):
        support = support_from(small_dataset, k=2, seed=0)
        corpus = [i.payload for i in small_dataset.select_images(split="train")]
        mined, _ = mine_image_pairs(support, corpus, 5)
        for class_id in support.classes:
            sup_vecs = []
            for _, img in support.pairs[class_id]:
                v = mean_cell_embedding(img)
                sup_vecs.append(v / np.linalg.norm(v))
            scored = []
            for idx, grid in enumerate(corpus):
                v = mean_cell_embedding(grid)
                v = v / np.linalg.norm(v)
                score = max(float(np.dot(v, s)) for s in sup_vecs)
                scored.append((-score, grid.source_id, idx))
            scored.sort()
            expected = [corpus[i].source_id for _, _, i in scored[:5]]
            assert [g.source_id for g in mined[class_id]] == expected


class TestPairPrecision:
    def _mined(self, entries):
        pairs = {}
        for class_id, word_ok, image_ok in entries:
            word = SegmentMatch("u0" if word_ok else "u1", 0, 2, 1.0, class_id)
            image = PixelGrid(np.ones((1, 2)), 1, 1,
                              source_id="good" if image_ok else "bad")
            pairs.setdefault(class_id, []).append(MinedPair(word, image))
        return MinedPairSet(pairs, n_requested=4)

    def _truth(self, class_id):
        return MiningTruth(
            {"u0": ((class_id, 0, 4),), "u1": (("other", 0, 4),)},
            {"good": class_id, "bad": "other"})

    def test_all_correct_is_hundred(self):
        mined = self._mined([("c", True, True)] * 4)
        report = pair_precision(mined, self._truth("c"))
        assert report.audio_per_class["c"] == 100.0
        assert report.image_per_class["c"] == 100.0

    def test_three_of_four(self):
        mined = self._mined([("c", True, True)] * 3 + [("c", False, False)])
        report = pair_precision(mined, self._truth("c"))
        assert report.audio_per_class["c"] == 75.0
        assert report.image_per_class["c"] == 75.0

    def test_aggregate_is_mean_over_classes(self):
        mined = self._mined([("c", True, True), ("d", False, True)])
        truth = MiningTruth(
            {"u0": (("c", 0, 4),), "u1": (("other", 0, 4),)},
            {"good": "c", "bad": "other"})
        report = pair_precision(mined, truth)
        assert report.audio_aggregate == pytest.approx((100.0 + 0.0) / 2)

    def test_empty_mined_set_rejected(self):
        with pytest.raises(ValueError, match="undefined"):
            pair_precision(MinedPairSet({"c": []}, 4), self._truth("c"))


class TestNoiseDegradation:
    def test_increasing_noise_never_helps_oracle_match(self, tmp_path):
        scores = []
        for noise in (0.0, 0.3, 0.8, 1.5):
            out = tmp_path / f"noise_{noise}"
            generate_dataset(small_config(noise=noise, train_utterances=12),
                             RandomSource(11), out)
            dataset = load_dataset(out)
            support = support_from(dataset, k=2, seed=0)
            utterances = dataset.select_utterances(split="train")
            per_class = []
            for class_id in support.classes:
                for query, _ in support.pairs[class_id]:
                    best = max((qbe_match(query, u.sequence).score
                                for u in utterances if query.length <= u.sequence.length),
                               default=0.0)
                    per_class.append(best)
            scores.append(np.mean(per_class))
        assert all(a >= b - 1e-9 for a, b in zip(scores, scores[1:]))
