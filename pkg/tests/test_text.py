from hypothesis import given, strategies as st

from rankshift.text import derive_seed, splitmix64, token_set, tokenize, word_count


def test_tokenize_lowercases_and_drops_punctuation():
    assert tokenize("Quiet, BLENDER! 2-speed_mode") == ["quiet", "blender", "2", "speed", "mode"]


def test_token_set_and_word_count():
    assert token_set("a b a") == frozenset({"a", "b"})
    assert word_count("  one two\nthree ") == 3


def test_splitmix64_known_value():
    # first output of the reference generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF


@given(st.lists(st.integers(min_value=0, max_value=2**63), min_size=1, max_size=4))
def test_derive_seed_is_deterministic_and_64_bit(parts):
    s = derive_seed(*parts)
    assert s == derive_seed(*parts)
    assert 0 <= s < 2**64


def test_derive_seed_separates_trials():
    seeds = {derive_seed(0, 1, 2, t) for t in range(1000)}
    assert len(seeds) == 1000
