import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcrank.linalg import frobenius_norm_sq
from mcrank.sampling import (
    Sampler,
    SamplerKind,
    SplitMix64,
    next_indices,
    weights_from_gradient_image,
    weights_from_row_norms,
)


def test_splitmix64_reference_stream():
    g = SplitMix64(1234567)
    assert [g.next_u64() for _ in range(5)] == [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
        4593380528125082431,
        16408922859458223821,
    ]


def test_next_float_in_unit_interval():
    g = SplitMix64(9)
    u = [g.next_float() for _ in range(1000)]
    assert min(u) >= 0.0 and max(u) < 1.0


def test_without_replacement_full_epoch_is_permutation():
    s = Sampler("uniform-wor", seed=4)
    assert sorted(s.next_indices(5, 5)) == [0, 1, 2, 3, 4]


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), n=st.integers(1, 40), l=st.integers(1, 13))
def test_without_replacement_epochs(seed, n, l):
    s = Sampler(SamplerKind.WITHOUT_REPLACEMENT, seed)
    stream = []
    while len(stream) < 3 * n:
        stream.extend(s.next_indices(l, n))
    for e in range(3):
        assert sorted(stream[e * n:(e + 1) * n]) == list(range(n))


def test_without_replacement_strict_mode_returns_short_remainder():
    s = Sampler("uniform-wor", seed=1, strict=True)
    a = s.next_indices(4, 6)
    b = s.next_indices(4, 6)
    assert len(a) == 4 and len(b) == 2
    assert sorted(a + b) == list(range(6))
    assert s.next_indices(4, 6) == []


def test_weighted_degenerate_weights():
    s = Sampler("weighted", seed=0, weights=[0, 0, 1])
    assert s.next_indices(50, 3) == [2] * 50


def test_weighted_never_picks_zero_weight():
    w = np.array([0.0, 2.0, 0.0, 1.0, 0.0])
    s = Sampler("weighted", seed=7, weights=w)
    got = s.next_indices(2000, 5)
    assert set(got) <= {1, 3}


def test_weighted_rejects_bad_weights():
    for w in ([0, 0], [1, -1], [np.nan, 1], []):
        with pytest.raises(ValueError):
            Sampler("weighted", weights=w)


def test_with_replacement_frequencies():
    # each count is Binomial(1e5, 1/4): stay within 4 standard deviations
    n, l = 4, 100_000
    s = Sampler("uniform-wr", seed=2024)
    counts = np.bincount(s.next_indices(l, n), minlength=n)
    sd = np.sqrt(l * 0.25 * 0.75)
    assert np.all(np.abs(counts - 0.25 * l) <= 4 * sd)
    chi2 = ((counts - l / n) ** 2 / (l / n)).sum()
    assert chi2 < 16.27  # 0.999 quantile of chi-square with 3 dof


def test_weighted_frequencies_follow_weights():
    w = np.array([1.0, 2.0, 3.0, 4.0])
    l = 100_000
    counts = np.bincount(Sampler("weighted", 5, weights=w).next_indices(l, 4), minlength=4)
    p = w / w.sum()
    sd = np.sqrt(l * p * (1 - p))
    assert np.all(np.abs(counts - l * p) <= 4 * sd)


def test_equal_weights_reproduce_uniform_stream():
    a = Sampler("uniform-wr", seed=99).next_indices(500, 7)
    b = Sampler("weighted", seed=99, weights=[0.3] * 7).next_indices(500, 7)
    assert a == b


@pytest.mark.parametrize("kind", ["uniform-wr", "uniform-wor"])
def test_determinism_and_clone(kind):
    s1, s2 = Sampler(kind, 11), Sampler(kind, 11)
    assert [s1.next_indices(3, 10) for _ in range(8)] == [s2.next_indices(3, 10) for _ in range(8)]
    fork = s1.clone()
    assert fork.next_indices(6, 10) == s1.next_indices(6, 10)


def test_functional_form_leaves_input_untouched():
    s = Sampler("uniform-wr", 3)
    idx, s2 = next_indices(s, 4, 9)
    idx_again, _ = next_indices(s, 4, 9)
    assert idx == idx_again
    assert s2.rng.state != s.rng.state


def test_invalid_count():
    with pytest.raises(ValueError):
        Sampler("uniform-wr").next_indices(0, 5)


def test_sampler_bound_to_index_space():
    s = Sampler("uniform-wor", 0)
    s.next_indices(2, 5)
    with pytest.raises(ValueError):
        s.next_indices(2, 6)


# -- weights ---------------------------------------------------------------

def test_row_norm_weights():
    np.testing.assert_array_equal(weights_from_row_norms(np.eye(3), "rows"), [1, 1, 1])
    np.testing.assert_array_equal(weights_from_row_norms([[1.0, 0.0], [2.0, 0.0]], "rows"), [1, 4])
    np.testing.assert_array_equal(weights_from_row_norms([[1.0, 0.0], [2.0, 0.0]], "columns"), [5, 0])


def test_row_norm_weights_sum_to_frobenius():
    A = np.random.default_rng(9).standard_normal((9, 4))
    w = weights_from_row_norms(A, "rows")
    total = 0.0
    for x in w:
        total += x
    assert total == frobenius_norm_sq(A)


def test_gradient_constant_image_is_uniform():
    np.testing.assert_array_equal(weights_from_gradient_image(np.full((4, 5), 7.0)), np.ones(4))


def test_gradient_step_edge_support():
    img = np.zeros((8, 6))
    img[4:] = 10.0  # edge between rows 3 and 4
    w = weights_from_gradient_image(img)
    assert set(np.flatnonzero(w)) == {3, 4}


def _naive_gradient_weights(img):
    m, n = img.shape
    w = np.zeros(m)
    for i in range(m):
        s = 0.0
        for j in range(n):
            if i == 0:
                gy = (img[1, j] - img[0, j]) / 1.0
            elif i == m - 1:
                gy = (img[m - 1, j] - img[m - 2, j]) / 1.0
            else:
                gy = (img[i + 1, j] - img[i - 1, j]) / 2.0
            if j == 0:
                gx = (img[i, 1] - img[i, 0]) / 1.0
            elif j == n - 1:
                gx = (img[i, n - 1] - img[i, n - 2]) / 1.0
            else:
                gx = (img[i, j + 1] - img[i, j - 1]) / 2.0
            s += np.sqrt(gx * gx + gy * gy)
        w[i] = s
    return w


def test_gradient_matches_naive_oracle():
    img = np.random.default_rng(17).integers(0, 256, size=(12, 9)).astype(float)
    np.testing.assert_array_equal(weights_from_gradient_image(img), _naive_gradient_weights(img))
    np.testing.assert_array_equal(weights_from_gradient_image(img, "columns"),
                                  _naive_gradient_weights(img.T))


def test_gradient_rejects_thin_image():
    with pytest.raises(ValueError):
        weights_from_gradient_image(np.ones((1, 5)))
