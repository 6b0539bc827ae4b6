import numpy as np
import pytest

import belforge.features as features
from belforge._pyfeat import fnv1a_64, ngram_hash_counts
from belforge.errors import UnencodableTextError


def test_two_char_word_trigrams():
    # "^ab$" has trigrams {"^ab", "ab$"}
    idx, vals = features.featurize("ab", 3, 3, 1 << 16)
    assert len(idx) in (1, 2)
    assert vals.sum() == 2.0


def test_single_char_word_one_trigram():
    idx, vals = features.featurize("a", 3, 3, 1 << 16)
    assert len(idx) == 1
    assert vals[0] == 1.0


def test_deterministic():
    a = features.featurize("hartinfarct", 2, 4, 4096)
    b = features.featurize("hartinfarct", 2, 4, 4096)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_empty_text_rejected():
    with pytest.raises(UnencodableTextError):
        features.featurize("   ", 2, 4, 4096)


def test_lowercase_flag():
    a = features.featurize("POS", 2, 3, 1 << 16, lowercase=True)
    b = features.featurize("pos", 2, 3, 1 << 16)
    assert np.array_equal(a[0], b[0])
    c = features.featurize("POS", 2, 3, 1 << 16)
    assert not np.array_equal(a[0], c[0])


def test_permutation_sensitive():
    a = features.featurize("ab", 2, 2, 1 << 16)
    b = features.featurize("ba", 2, 2, 1 << 16)
    assert not np.array_equal(a[0], b[0])


def test_fnv_reference_value():
    # published FNV-1a 64-bit test vector
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C


def test_counts_accumulate():
    counts = ngram_hash_counts("aaaa", 2, 2, 1 << 20)
    # three identical bigrams "aa"
    assert list(counts.values()) == [3.0]


@pytest.mark.skipif(not features.HAVE_FAST_LANE, reason="extension not built")
def test_lanes_bit_identical():
    lanes = features.kernel_lanes()
    rng = np.random.default_rng(7)
    samples = ["hartinfarct", "café könig", "Ж漢字x🙂", "a", "x" * 50]
    samples += ["".join(chr(int(c)) for c in rng.integers(32, 2000, 12))
                for _ in range(50)]
    for text in samples:
        for n_min, n_max in [(1, 1), (2, 4), (3, 5)]:
            assert (lanes["python"](text, n_min, n_max, 4096)
                    == lanes["cython"](text, n_min, n_max, 4096))
