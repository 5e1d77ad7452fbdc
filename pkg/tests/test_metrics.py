import math

import pytest
from hypothesis import given, strategies as st

from rankshift.metrics import (
    NgramModel,
    TrialRecord,
    perplexity,
    psr_at_k,
    rows_to_csv,
    rows_to_json,
    sentences,
    summarize,
    train_ngram,
)


def test_psr_at_k():
    assert psr_at_k([1, 2, 6, 3], 3) == 0.75
    assert psr_at_k([1, 1], 1) == 1.0
    with pytest.raises(ValueError):
        psr_at_k([], 1)
    with pytest.raises(ValueError):
        psr_at_k([0], 1)


def test_bigram_hand_count():
    s = 0.1
    m = train_ngram(["a b", "a b"], order=2, smoothing=s)
    assert m.vocab_size == 3  # a, b, <unk>
    assert m.prob("b", ["a"]) == pytest.approx((2 + s) / (2 + s * 3))


def test_uniform_unigram_perplexity_is_vocab_size():
    m = NgramModel(1, {(): {}}, frozenset(), 100, 1.0)
    assert perplexity("any words at all", m) == pytest.approx(100)


def test_certain_token_has_perplexity_one():
    m = NgramModel(1, {(): {"a": 10**12}}, frozenset({"a"}), 1, 1e-12)
    assert perplexity("a", m) == pytest.approx(1.0)


@given(st.lists(st.sampled_from("abcde"), min_size=1, max_size=30).map(" ".join),
       st.integers(1, 3), st.floats(0.01, 2.0))
def test_probabilities_sum_to_one(text, order, s):
    m = train_ngram([text, "a b c"], order, s)
    words = sorted(m.vocab) + ["<unk>"]
    for ctx in list(m.counts) + [("zzz",) * (order - 1)]:
        total = sum(m.prob(w, ctx) for w in words)
        assert total == pytest.approx(1.0, abs=1e-9)
    assert perplexity(text, m) >= 1.0


def test_unigram_perplexity_invariant_to_duplication():
    m = train_ngram(["a b b c"], order=1)
    assert perplexity("a b", m) == pytest.approx(perplexity("a b a b", m))


def test_sentences_reset_context():
    assert sentences("One two. Three!\nfour") == [["one", "two"], ["three"], ["four"]]
    m = train_ngram(["x y. x y."], order=2)
    assert m.counts[("<s>",)] == {"x": 2}


def test_invalid_models():
    with pytest.raises(ValueError):
        train_ngram([], 2)
    with pytest.raises(ValueError):
        train_ngram(["a"], 0)
    with pytest.raises(ValueError):
        train_ngram(["a"], 2, smoothing=0)
    with pytest.raises(ValueError):
        perplexity("!!!", train_ngram(["a"]))


def _rec(cat, method, rank, ppl=None, trial=0):
    return TrialRecord(cat, "m", method, 0, trial, rank, ppl)


def test_summarize_groups_and_overall_row():
    recs = [_rec("B", "x", 1, 10.0), _rec("A", "x", 4, 20.0), _rec("A", "x", 6, None)]
    rows = summarize(recs)
    assert [r["category"] for r in rows] == ["A", "B", "All"]
    a = rows[0]
    assert (a["top5"], a["top3"], a["top1"], a["mean_ppl"], a["n_trials"]) == (0.5, 0.0, 0.0, 20.0, 2)
    assert rows[2]["top1"] == pytest.approx(1 / 3)


def test_table_formats():
    rows = summarize([_rec("A", "x", 1, 2.5)])
    csv_text = rows_to_csv(rows)
    assert csv_text.splitlines()[0] == "category,model,method,top5,top3,top1,mean_ppl"
    assert csv_text.splitlines()[1] == "A,m,x,1.000000,1.000000,1.000000,2.500000"
    assert '"columns"' in rows_to_json(rows, {"note": 1})


def test_trial_record_round_trip():
    r = _rec("A", "x", 3, 1.5, trial=7)
    assert TrialRecord.from_dict(r.to_dict()) == r
