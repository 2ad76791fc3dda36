import numpy as np
import pytest

from langshift import (
    DecodeTable,
    EmbeddingDataset,
    SentenceRecord,
    ShapeError,
    ShiftSpec,
    ValidationError,
    Vocabulary,
    bleu1,
    conversion_rate,
    decode_tokens,
    generate,
    load_decode_table,
    merge_decode_tables,
    reports_to_csv,
    save_decode_table,
    sweep_alpha,
    translate_and_score,
)
from langshift.synthlab import SynthConfig, estimate_means


def vocab_of(ids, language="xx"):
    return Vocabulary(language=language, entries={int(i): f"t{i}" for i in ids})


def table_of(matrix, ids=None, bias=None, language="xx"):
    matrix = np.asarray(matrix, dtype=np.float32)
    ids = list(range(matrix.shape[0])) if ids is None else list(ids)
    vocab = vocab_of(ids, language)
    return DecodeTable(
        vocabulary=vocab,
        vectors=matrix[np.argsort(ids)],
        bias=None if bias is None else np.asarray(bias, dtype=np.float32)[np.argsort(ids)],
    )


def dataset_of(vectors, language="xx", layer=0):
    vectors = np.asarray(vectors, dtype=np.float32)
    sent = SentenceRecord(
        token_ids=np.arange(vectors.shape[0], dtype=np.uint32),
        vectors=vectors,
        language=language,
    )
    return EmbeddingDataset(layer=layer, dim=vectors.shape[1], sentences=(sent,))


class TestDecodeTokens:
    def test_one_hot_exact_match(self):
        table = table_of(np.eye(5))
        out = decode_tokens(dataset_of(np.eye(5)[[3]]), table)
        assert out == [[3]]

    def test_tie_goes_to_lower_id(self):
        rows = np.array([[1.0, 0.0], [0.5, 0.5], [1.0, 0.0]])
        table = table_of(rows)
        out = decode_tokens(dataset_of([[2.0, 0.0]]), table)
        assert out == [[0]]

    def test_matches_linear_scan_oracle(self, rng):
        table_rows = rng.normal(size=(40, 6))
        bias = rng.normal(size=40)
        ids = list(rng.choice(500, size=40, replace=False))
        table = table_of(table_rows, ids=ids, bias=bias)
        inputs = rng.normal(size=(25, 6))
        got = decode_tokens(dataset_of(inputs), table)[0]

        expected = []
        sorted_ids = sorted(ids)
        reorder = np.argsort(ids)
        rows = table_rows[reorder]
        b = bias[np.argsort(ids)]
        for h in inputs:
            best_i, best_s = None, -np.inf
            for i, (row, bb) in enumerate(zip(rows, b)):
                s = float(np.dot(row.astype(np.float64), h.astype(np.float64))) + float(bb)
                if s > best_s:
                    best_s, best_i = s, i
            expected.append(sorted_ids[best_i])
        assert got == expected

    def test_restrict_limits_argmax(self):
        table = table_of(np.eye(4))
        out = decode_tokens(dataset_of(np.eye(4)[[0]]), table, restrict={2, 3})
        assert out == [[2]]

    def test_restrict_must_be_subset(self):
        table = table_of(np.eye(3))
        with pytest.raises(ValidationError):
            decode_tokens(dataset_of(np.eye(3)[[0]]), table, restrict={9})

    def test_dim_mismatch(self):
        table = table_of(np.eye(3))
        with pytest.raises(ShapeError):
            decode_tokens(dataset_of(np.zeros((1, 4))), table)

    def test_dominated_row_changes_nothing(self, rng):
        rows = rng.normal(size=(10, 4))
        inputs = rng.normal(size=(8, 4))
        base = decode_tokens(dataset_of(inputs), table_of(rows))
        # zero row with a bias below every achievable score can never win
        floor = float((inputs @ rows.T).min()) - 1.0
        extended = table_of(
            np.vstack([rows, np.zeros((1, 4))]),
            ids=list(range(11)),
            bias=[0.0] * 10 + [floor],
        )
        assert decode_tokens(dataset_of(inputs), extended) == base


class TestConversionRate:
    def test_full_conversion(self):
        v_src = vocab_of([1, 2])
        v_tgt = vocab_of([3, 4])
        assert conversion_rate([3, 4, 3], v_src, v_tgt) == 1.0

    def test_all_shared_is_undefined(self):
        v_src = vocab_of([1, 2])
        v_tgt = vocab_of([1, 2, 3])
        assert conversion_rate([1, 2, 1], v_src, v_tgt) is None

    def test_hand_evaluation(self):
        v_src = vocab_of([10, 30])     # 30 shared
        v_tgt = vocab_of([20, 30])     # 20 target-only
        # outputs: one target-only, one source-only, one shared -> 1 / (3 - 1)
        assert conversion_rate([20, 10, 30], v_src, v_tgt) == pytest.approx(0.5)

    def test_out_of_both_vocabularies_counts_in_denominator(self):
        v_src = vocab_of([1])
        v_tgt = vocab_of([2])
        # 99 is in neither vocabulary: not converted, still counted
        assert conversion_rate([2, 99], v_src, v_tgt) == pytest.approx(0.5)

    def test_matches_set_arithmetic_oracle(self, rng):
        for _ in range(50):
            src = set(map(int, rng.choice(30, size=10, replace=False)))
            tgt = set(map(int, rng.choice(30, size=10, replace=False)))
            outputs = list(map(int, rng.integers(0, 35, size=20)))
            got = conversion_rate(outputs, vocab_of(src), vocab_of(tgt))
            num = sum(1 for y in outputs if y in tgt - src)
            den = len(outputs) - sum(1 for y in outputs if y in src & tgt)
            if den == 0:
                assert got is None
            else:
                assert got == pytest.approx(num / den)
                assert 0.0 <= got <= 1.0


class TestBleu1:
    def test_identity_is_one(self):
        assert bleu1([[1, 2, 3]], [[1, 2, 3]]) == 1.0

    def test_no_overlap_is_zero(self):
        assert bleu1([[1, 2]], [[3, 4]]) == 0.0

    def test_hand_computed_clipping(self):
        # hyp "a a b" vs ref "a b c": clipped matches 2, precision 2/3, BP 1
        assert bleu1([[0, 0, 1]], [[0, 1, 2]]) == pytest.approx(2 / 3, abs=1e-4)

    def test_brevity_penalty(self):
        # hyp shorter than ref: matches 1, precision 1, BP = exp(1 - 2)
        assert bleu1([[5]], [[5, 6]]) == pytest.approx(np.exp(-1.0))

    def test_empty_corpus_returns_zero(self):
        assert bleu1([], []) == 0.0

    def test_unigram_permutation_invariance(self, rng):
        hyp = [list(rng.integers(0, 10, size=8))]
        ref = [list(rng.integers(0, 10, size=8))]
        shuffled = [list(rng.permutation(hyp[0]))]
        assert bleu1(hyp, ref) == pytest.approx(bleu1(shuffled, ref))

    def test_matches_brute_force_reference(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 6))
            hyp = [list(map(int, rng.integers(0, 12, size=rng.integers(1, 10)))) for _ in range(n)]
            ref = [list(map(int, rng.integers(0, 12, size=rng.integers(1, 10)))) for _ in range(n)]
            # independent reference: explicit per-type clipping, no Counter intersection
            matches = 0
            hyp_len = sum(len(h) for h in hyp)
            ref_len = sum(len(r) for r in ref)
            for h, r in zip(hyp, ref):
                for tok in set(h):
                    matches += min(h.count(tok), r.count(tok))
            precision = matches / hyp_len
            bp = min(1.0, float(np.exp(1 - ref_len / hyp_len)))
            assert bleu1(hyp, ref) == pytest.approx(precision * bp, abs=1e-9)

    def test_count_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            bleu1([[1]], [[1], [2]])

    def test_empty_reference_rejected(self):
        with pytest.raises(ValidationError):
            bleu1([[1]], [[]])


@pytest.fixture(scope="module")
def synth_fixture():
    config = SynthConfig(
        dim=64, n_pairs=100, offset_norm=5.0, semantic_spread=1.0,
        noise_sigma=0.1, mean_sample_size=100, seed=42,
    )
    corpus = generate(config)
    l1, l2 = config.languages
    means = estimate_means(corpus)
    table = merge_decode_tables(corpus.decode_tables[l1], corpus.decode_tables[l2])
    return config, corpus, means, table


class TestTranslateAndScore:
    def test_alpha_zero_roundtrip(self, synth_fixture):
        config, corpus, means, table = synth_fixture
        l1, l2 = config.languages
        spec = ShiftSpec(source_language=l1, target_language=l2, alpha=0.0, layer=config.layer)
        report = translate_and_score(
            corpus.datasets[l1], spec, means, table,
            corpus.references(l2),
            corpus.decode_tables[l1].vocabulary,
            corpus.decode_tables[l2].vocabulary,
        )
        decoded = decode_tokens(corpus.datasets[l1], table)
        assert decoded == corpus.references(l1)  # unshifted decoding recovers the input ids
        assert report.conversion_rate == 0.0
        assert report.n_tokens == corpus.datasets[l1].token_count

    def test_alpha_three_full_conversion(self, synth_fixture):
        config, corpus, means, table = synth_fixture
        l1, l2 = config.languages
        spec = ShiftSpec(source_language=l1, target_language=l2, alpha=3.0, layer=config.layer)
        report = translate_and_score(
            corpus.datasets[l1], spec, means, table,
            corpus.references(l2),
            corpus.decode_tables[l1].vocabulary,
            corpus.decode_tables[l2].vocabulary,
        )
        assert report.conversion_rate == 1.0
        assert report.bleu1 > 0.5

    def test_negative_alpha_no_conversion(self, synth_fixture):
        config, corpus, means, table = synth_fixture
        l1, l2 = config.languages
        spec = ShiftSpec(source_language=l1, target_language=l2, alpha=-1.0, layer=config.layer)
        report = translate_and_score(
            corpus.datasets[l1], spec, means, table,
            corpus.references(l2),
            corpus.decode_tables[l1].vocabulary,
            corpus.decode_tables[l2].vocabulary,
        )
        assert report.conversion_rate == 0.0


class TestSweep:
    def test_single_point_equals_translate(self, synth_fixture):
        config, corpus, means, table = synth_fixture
        l1, l2 = config.languages
        refs = corpus.references(l2)
        v1 = corpus.decode_tables[l1].vocabulary
        v2 = corpus.decode_tables[l2].vocabulary
        spec = ShiftSpec(source_language=l1, target_language=l2, alpha=0.0, layer=config.layer)
        single = translate_and_score(corpus.datasets[l1], spec, means, table, refs, v1, v2)
        swept = sweep_alpha(
            {config.layer: corpus.datasets[l1]}, (l1, l2), [0.0], [config.layer],
            {config.layer: means}, {config.layer: table}, refs, v1, v2,
        )
        assert len(swept) == 1
        assert swept[0] == single

    def test_conversion_monotone_in_alpha(self, synth_fixture):
        config, corpus, means, table = synth_fixture
        l1, l2 = config.languages
        alphas = [0.0, 1.0, 2.0, 3.0]
        swept = sweep_alpha(
            {config.layer: corpus.datasets[l1]}, (l1, l2), alphas, [config.layer],
            {config.layer: means}, {config.layer: table},
            corpus.references(l2),
            corpus.decode_tables[l1].vocabulary,
            corpus.decode_tables[l2].vocabulary,
        )
        rates = [r.conversion_rate for r in swept]
        assert all(r is not None for r in rates)
        assert all(a <= b for a, b in zip(rates, rates[1:]))

    def test_empty_grid_rejected(self, synth_fixture):
        config, corpus, means, table = synth_fixture
        l1, l2 = config.languages
        with pytest.raises(ValidationError):
            sweep_alpha({}, (l1, l2), [], [], {}, {}, [], None, None)

    def test_csv_rendering(self, synth_fixture):
        config, corpus, means, table = synth_fixture
        l1, l2 = config.languages
        spec = ShiftSpec(source_language=l1, target_language=l2, alpha=1.0, layer=config.layer)
        report = translate_and_score(
            corpus.datasets[l1], spec, means, table, corpus.references(l2),
            corpus.decode_tables[l1].vocabulary, corpus.decode_tables[l2].vocabulary,
        )
        text = reports_to_csv([report])
        lines = text.strip().split("\n")
        assert lines[0] == "src,tgt,alpha,layer,bleu1,conversion_rate,n_tokens"
        assert lines[1].startswith(f"{l1},{l2},1.0,{config.layer},")


class TestDecodeTableFile:
    def test_roundtrip(self, tmp_path, rng):
        ids = list(rng.choice(1000, size=12, replace=False))
        table = table_of(rng.normal(size=(12, 5)), ids=ids, bias=rng.normal(size=12))
        path = tmp_path / "x.table"
        save_decode_table(table, path)
        back = load_decode_table(path)
        assert back.vocabulary.entries == table.vocabulary.entries
        np.testing.assert_array_equal(back.vectors, table.vectors)
        np.testing.assert_array_equal(back.bias, table.bias)
        np.testing.assert_array_equal(back.ids, table.ids)

    def test_corruption_detected(self, tmp_path, rng):
        from langshift import IntegrityError

        table = table_of(rng.normal(size=(4, 3)))
        path = tmp_path / "x.table"
        save_decode_table(table, path)
        raw = bytearray(path.read_bytes())
        raw[-12] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(IntegrityError):
            load_decode_table(path)


class TestMergeTables:
    def test_disjoint_union(self, rng):
        a = table_of(rng.normal(size=(3, 4)), ids=[0, 1, 2], language="aa")
        b = table_of(rng.normal(size=(2, 4)), ids=[10, 11], language="bb")
        merged = merge_decode_tables(a, b)
        assert sorted(merged.vocabulary.entries) == [0, 1, 2, 10, 11]
        assert merged.vocabulary.language == "aa+bb"

    def test_conflicting_shared_id_rejected(self, rng):
        a = table_of(rng.normal(size=(2, 3)), ids=[0, 1], language="aa")
        b = table_of(rng.normal(size=(2, 3)), ids=[1, 2], language="bb")
        with pytest.raises(ValidationError):
            merge_decode_tables(a, b)  # id 1 has different rows

    def test_agreeing_shared_id_kept_once(self):
        rows = np.eye(3, dtype=np.float32)
        a = DecodeTable(vocabulary=vocab_of([0, 1], "aa"), vectors=rows[:2])
        b = DecodeTable(vocabulary=vocab_of([1, 2], "bb"), vectors=rows[1:])
        merged = merge_decode_tables(a, b)
        assert sorted(merged.vocabulary.entries) == [0, 1, 2]


def test_report_validation():
    from langshift import TranslationEvalReport

    with pytest.raises(ValidationError):
        TranslationEvalReport(
            source_language="a", target_language="b", alpha=1.0, layer=0,
            bleu1=1.5, conversion_rate=None, n_tokens=1, n_converted=0, n_shared=0,
        )
    with pytest.raises(ValidationError):
        TranslationEvalReport(
            source_language="a", target_language="b", alpha=1.0, layer=0,
            bleu1=0.5, conversion_rate=None, n_tokens=1, n_converted=2, n_shared=0,
        )
