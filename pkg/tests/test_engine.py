import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcrank.bench import optimum_relative_error
from mcrank.engine import (
    ApproxState,
    Config,
    init_state,
    reconstruct,
    reconstruct_entry,
    residual_norm_sq,
    run,
    triplet_estimates,
    update_step,
)
from mcrank.linalg import frobenius_norm_sq, gram_check, svd_oracle
from mcrank.sampling import Sampler

from conftest import low_rank


def _empty_state(m, n):
    return ApproxState(np.zeros((m, 0)), np.zeros((n, 0)), np.zeros(0))


# -- Config -----------------------------------------------------------------

def test_config_defaults():
    cfg = Config(k=4)
    assert cfg.l == 4 and cfg.max_iterations == 20 and cfg.epsilon == 1e-3


@pytest.mark.parametrize("kwargs", [
    dict(k=0), dict(k=2, l=0), dict(k=2, epsilon=0.0), dict(k=2, epsilon=1.0),
    dict(k=2, strategy="qr"), dict(k=2, orientation="diag"), dict(k=400, l=200),
])
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        Config(**kwargs)


def test_auto_orientation():
    cfg = Config(k=1, orientation="auto")
    assert cfg.resolve_orientation((3, 5)) == "rows"
    assert cfg.resolve_orientation((5, 3)) == "columns"


# -- init_state ---------------------------------------------------------------

def test_init_identity():
    A = np.eye(3)
    s = init_state(A, Config(k=2), [0, 1])
    np.testing.assert_allclose(s.lambdas, [1, 1])
    assert residual_norm_sq(frobenius_norm_sq(A), s) == pytest.approx(1.0, abs=1e-15)


def test_init_resamples_after_duplicate_column():
    A = np.array([[1.0, 1.0, 0.0, 2.0], [2.0, 2.0, 1.0, 0.0], [0.0, 0.0, 3.0, 1.0]])
    s = init_state(A, Config(k=2), [0, 1])
    assert s.rank == 2
    assert len(s.columns_seen) == 3


def test_init_proceeds_short_when_span_exhausted():
    A = np.outer([1.0, 2.0, 3.0], [1.0, -1.0, 2.0])
    s = init_state(A, Config(k=2), [0, 1])
    assert s.rank == 1
    assert s.columns_seen == frozenset({0, 1, 2})


def test_init_lambdas_are_top_eigenvalues_of_small_gram():
    A = np.random.default_rng(64).standard_normal((6, 4))
    s = init_state(A, Config(k=2), [0, 1])
    Q = np.linalg.qr(A[:, :2])[0]
    C = A.T @ Q
    np.testing.assert_allclose(s.lambdas, np.linalg.eigvalsh(C.T @ C)[::-1], rtol=1e-12)


@pytest.mark.parametrize("bad", [[0, 0], [0, 9], [-1, 1]])
def test_init_rejects_bad_indices(bad):
    with pytest.raises((ValueError, IndexError)):
        init_state(np.ones((4, 4)), Config(k=2), bad)


def test_init_rejects_large_k():
    with pytest.raises(ValueError):
        init_state(np.ones((4, 2)), Config(k=3), [0, 1, 2])


# -- update_step ----------------------------------------------------------------

def test_update_noop_when_columns_in_span():
    A = np.random.default_rng(1).standard_normal((6, 5))
    A[:, 3] = A[:, 0] + 2 * A[:, 1]
    cfg = Config(k=2)
    s0 = init_state(A, cfg, [0, 1])
    s1 = update_step(A, s0, [3, 0], cfg)
    assert s1.lambdas.tobytes() == s0.lambdas.tobytes()
    assert s1.X.tobytes() == s0.X.tobytes()
    assert s1.iteration == 1
    assert 3 in s1.columns_seen


def test_update_spanning_low_rank_is_exact():
    rng = np.random.default_rng(2)
    A = low_rank(rng, 12, 9, 3)
    cfg = Config(k=3, l=6)
    s = init_state(A, cfg, [0, 1, 2])
    s = update_step(A, s, range(3, 9), cfg)
    a = frobenius_norm_sq(A)
    assert residual_norm_sq(a, s) <= 1e-8 * a


def test_update_matches_naive_reimplementation():
    A = np.random.default_rng(85).standard_normal((8, 5))
    cfg = Config(k=2, l=2)
    s0 = init_state(A, cfg, [0, 1])
    s1 = update_step(A, s0, [2, 3], cfg)
    # independent route: orthonormal basis of the same span via numpy QR
    Q = np.linalg.qr(np.column_stack([s0.X, A[:, [2, 3]]]))[0]
    S = (A.T @ Q).T @ (A.T @ Q)
    top2 = np.linalg.eigvalsh(S)[::-1][:2].sum()
    assert s1.lambdas.sum() == pytest.approx(top2, rel=1e-12)


def test_update_rejects_mismatched_state():
    A = np.ones((4, 3))
    with pytest.raises(ValueError):
        update_step(A, _empty_state(5, 3), [0], Config(k=1))


@pytest.mark.parametrize("strategy", ["gram_eig", "small_svd"])
def test_update_invariants(strategy):
    rng = np.random.default_rng(7)
    A = rng.standard_normal((30, 20))
    cfg = Config(k=4, l=3, strategy=strategy)
    s = init_state(A, cfg, [0, 1, 2, 3])
    a = frobenius_norm_sq(A)
    top = (svd_oracle(A).singular_values[:4] ** 2).sum()
    prev = s.lambdas.sum()
    for t in range(6):
        s = update_step(A, s, rng.choice(20, 3, replace=False), cfg)
        ysq = np.einsum("ij,ij->j", s.Y, s.Y)
        np.testing.assert_allclose(s.lambdas, ysq, rtol=1e-8)
        assert np.all(np.diff(s.lambdas) <= 0)
        assert gram_check(s.X) <= 1e-10
        assert s.lambdas.sum() >= prev - 1e-8 * a
        assert s.lambdas.sum() <= top + 1e-8 * a
        prev = s.lambdas.sum()


# -- run ---------------------------------------------------------------------------

def test_run_zero_matrix():
    state, trace = run(np.zeros((5, 4)), Config(k=2, epsilon=1e-3))
    assert trace.stop_iteration == 1
    assert [r.relative_error for r in trace.records] == [0.0, 0.0]
    assert trace.records[-1].improvement_ratio == 1.0
    assert np.all(reconstruct(state) == 0.0)


def test_run_spanning_low_rank_stops_early():
    rng = np.random.default_rng(3)
    A = low_rank(rng, 20, 10, 3)
    _, trace = run(A, Config(k=3, l=7, epsilon=1e-3), Sampler("uniform-wor", 3))
    assert trace.stop_iteration <= 2
    assert trace.records[-1].relative_error <= 1e-8


def test_run_converges_toward_optimum():
    A = np.random.default_rng(300).standard_normal((300, 60))
    cfg = Config(k=15, l=15, max_iterations=10, epsilon=1e-4, seed=1)
    _, trace = run(A, cfg)
    opt = optimum_relative_error(A, 15)
    assert trace.records[-1].relative_error <= 1.05 * opt


def test_run_records_are_consistent():
    A = np.random.default_rng(4).standard_normal((40, 25))
    _, trace = run(A, Config(k=5, l=4, max_iterations=6, epsilon=1e-9))
    ts = [r.t for r in trace.records]
    assert ts == list(range(len(ts)))
    errs = trace.relative_errors()
    assert all(b <= a + 1e-10 for a, b in zip(errs, errs[1:]))
    assert trace.records[0].improvement_ratio == 0.0
    for r in trace.records[1:]:
        assert r.improvement_ratio <= 1 + 1e-10
        assert set(r.flops) == {"mgs", "product", "gram", "eigen", "rotate"}
    assert trace.records[-1].samples_total == 5 + 4 * (len(ts) - 1)


def test_run_stops_by_epsilon():
    A = np.random.default_rng(5).standard_normal((50, 20))
    _, trace = run(A, Config(k=3, l=3, max_iterations=50, epsilon=0.5))
    assert trace.stop_reason == "epsilon"
    assert trace.records[-1].improvement_ratio > 0.5


def test_rows_mode_equals_transpose_columns_mode():
    A = np.random.default_rng(6).standard_normal((15, 40))
    sr, tr = run(A, Config(k=4, orientation="rows", epsilon=1e-6), Sampler("uniform-wr", 9))
    sc, tc = run(A.T, Config(k=4, orientation="columns", epsilon=1e-6), Sampler("uniform-wr", 9))
    assert [r.norm_b_sq for r in tr.records] == [r.norm_b_sq for r in tc.records]
    assert [r.indices for r in tr.records] == [r.indices for r in tc.records]
    assert sr.X.tobytes() == sc.X.tobytes()
    np.testing.assert_allclose(reconstruct(sr), reconstruct(sc).T, atol=0)


def test_strategy_equivalence_single_run():
    A = np.random.default_rng(8).standard_normal((60, 30))
    a = frobenius_norm_sq(A)
    _, t1 = run(A, Config(k=5, strategy="gram_eig", epsilon=1e-9, max_iterations=5))
    _, t2 = run(A, Config(k=5, strategy="small_svd", epsilon=1e-9, max_iterations=5))
    for r1, r2 in zip(t1.records, t2.records):
        assert r1.norm_b_sq == pytest.approx(r2.norm_b_sq, rel=1e-8)


def test_stop_when_checked_at_init():
    A = low_rank(np.random.default_rng(9), 10, 8, 2)
    _, trace = run(A, Config(k=2), stop_when=lambda r: r.relative_error < 1e-8)
    assert trace.stop_iteration == 0 and trace.stop_reason == "target"


# -- residual / triplets / reconstruction -------------------------------------------

def test_residual_of_empty_state():
    assert residual_norm_sq(7.5, _empty_state(3, 3)) == 7.5


def test_residual_identity_explicit():
    A = np.random.default_rng(10).standard_normal((10, 6))
    cfg = Config(k=3)
    s = update_step(A, init_state(A, cfg, [0, 1, 2]), [3, 4], cfg)
    explicit = np.linalg.norm(A - s.X @ s.Y.T) ** 2
    assert residual_norm_sq(frobenius_norm_sq(A), s) == pytest.approx(explicit, rel=1e-10)


def test_triplets_diagonal():
    A = np.diag([5.0, 3.0, 1.0])
    cfg = Config(k=2, l=1)
    s = update_step(A, init_state(A, cfg, [1, 2]), [0], cfg)
    est = triplet_estimates(s)
    np.testing.assert_allclose(est.sigma, [5, 3], rtol=1e-14)
    np.testing.assert_allclose(np.abs(est.u), np.eye(3)[:, :2], atol=1e-14)
    np.testing.assert_allclose(np.abs(est.v), np.eye(3)[:, :2], atol=1e-14)
    assert not est.degenerate.any()


def test_triplets_degenerate_lambda():
    s = ApproxState(np.eye(3)[:, :2], np.array([[2.0, 0.0], [0.0, 0.0]]), np.array([4.0, 0.0]))
    est = triplet_estimates(s)
    assert est.degenerate.tolist() == [False, True]
    np.testing.assert_array_equal(est.v[:, 1], 0.0)


def test_triplets_approach_oracle():
    rng = np.random.default_rng(20)
    U = np.linalg.qr(rng.standard_normal((20, 8)))[0]
    V = np.linalg.qr(rng.standard_normal((8, 8)))[0]
    sig = np.array([10.0, 7.0, 4.0, 1.0, 0.5, 0.3, 0.2, 0.1])
    A = (U * sig) @ V.T
    state, _ = run(A, Config(k=3, l=3, max_iterations=30, epsilon=1e-12))
    est = triplet_estimates(state)
    np.testing.assert_allclose(est.sigma, sig[:3], rtol=1e-4)


def test_triplets_rows_orientation_swaps_sides():
    A = np.random.default_rng(21).standard_normal((6, 14))
    state, _ = run(A, Config(k=2, orientation="rows", max_iterations=30, epsilon=1e-12))
    est = triplet_estimates(state)
    assert est.u.shape == (6, 2) and est.v.shape == (14, 2)
    for i in range(2):
        assert np.linalg.norm(A @ est.v[:, i] - est.sigma[i] * est.u[:, i]) < 1e-6 * est.sigma[0]


def test_reconstruct_entry_examples():
    assert reconstruct_entry(_empty_state(2, 2), 1, 1) == 0.0
    s = ApproxState(np.eye(2)[:, :1], np.array([[2.0], [3.0]]), np.array([13.0]))
    assert reconstruct_entry(s, 0, 1) == 3.0
    with pytest.raises(IndexError):
        reconstruct_entry(s, 2, 0)


def test_reconstruct_entry_matches_dense_product():
    rng = np.random.default_rng(22)
    X = np.linalg.qr(rng.standard_normal((7, 3)))[0]
    Y = rng.standard_normal((5, 3))
    s = ApproxState(X, Y, np.zeros(3))
    naive = np.zeros((7, 5))
    for i in range(7):
        for j in range(5):
            acc = 0.0
            for q in range(3):
                acc += X[i, q] * Y[j, q]
            naive[i, j] = acc
    entries = np.array([[reconstruct_entry(s, i, j) for j in range(5)] for i in range(7)])
    np.testing.assert_array_equal(entries, naive)
    np.testing.assert_array_equal(reconstruct(s), naive)
    np.testing.assert_allclose(entries, X @ Y.T, rtol=1e-14, atol=1e-14)


# -- property: monotone norm, bounded by the optimum ---------------------------

@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 25), n=st.integers(2, 25),
       kind=st.sampled_from(["uniform-wr", "uniform-wor"]), data=st.data())
def test_run_is_monotone(seed, m, n, kind, data):
    k = data.draw(st.integers(1, min(m, n)))
    l = data.draw(st.integers(1, 6))
    A = np.random.default_rng(seed).standard_normal((m, n))
    _, trace = run(A, Config(k=k, l=l, max_iterations=5, epsilon=1e-12), Sampler(kind, seed))
    a = trace.a_norm_sq
    norms = [r.norm_b_sq for r in trace.records]
    assert all(b >= x - 1e-8 * a for x, b in zip(norms, norms[1:]))
    top = (svd_oracle(A).singular_values[:k] ** 2).sum()
    assert norms[-1] <= top + 1e-8 * a
