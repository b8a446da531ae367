import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lightmind import autodiff as ad
from lightmind.autodiff import Tensor, grad_check
from lightmind.encoders import BiAttention, DimensionMismatch, HashedTextEncoder, RGCN, bucket_of, words
from lightmind.nn import ParamStore


def small_rgcn(seed=0, dim=8, R=4, layers=2, bases=3):
    store = ParamStore(seed)
    return store, RGCN(store, dim, R, layers, bases)


def random_inputs(rng, n, dim, R, density=0.2):
    X = rng.normal(size=(n, dim))
    A = (rng.random((R, n, n)) < density).astype(float)
    return X, A


def test_rgcn_parameter_count_formula():
    d, R, B, L = 64, 8, 3, 6
    store, net = small_rgcn(dim=d, R=R, layers=L, bases=B)
    # bases + coefficients + self loop + highway gate (weights and bias), per layer
    per_layer = B * d * d + R * B + d * d + d * d + d
    assert store.count("rgcn.") == L * per_layer == L * RGCN.params_per_layer(d, R, B)
    assert store.count("rgcn.0.bases") == 3 * 64 * 64


def test_rgcn_permutation_equivariance():
    store, net = small_rgcn(dim=8, R=4, layers=3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(2, 12))
        X, A = random_inputs(rng, n, 8, 4)
        perm = rng.permutation(n)
        h, pooled = net(Tensor(X), A)
        hp, pooled_p = net(Tensor(X[perm]), A[:, perm][:, :, perm])
        assert np.max(np.abs(hp.data - h.data[perm])) < 1e-10
        assert np.max(np.abs(pooled_p.data - pooled.data)) < 1e-10


def test_rgcn_relation_direction_matters():
    store, net = small_rgcn(seed=1, dim=8, R=2, layers=1)
    X = np.random.default_rng(3).normal(size=(2, 8))
    A = np.zeros((2, 2, 2))
    A[0, 0, 1] = 1.0
    h_fwd, _ = net(Tensor(X), A)
    h_rev, _ = net(Tensor(X), A.transpose(0, 2, 1))
    assert not np.allclose(h_fwd.data, h_rev.data)


def test_rgcn_shape_errors():
    _, net = small_rgcn(dim=8, R=4)
    with pytest.raises(DimensionMismatch):
        net(Tensor(np.zeros((3, 7))), np.zeros((4, 3, 3)))
    with pytest.raises(DimensionMismatch):
        net(Tensor(np.zeros((3, 8))), np.zeros((5, 3, 3)))


def test_rgcn_grad_check():
    store, net = small_rgcn(seed=2, dim=6, R=3, layers=2)
    X, A = random_inputs(np.random.default_rng(5), 5, 6, 3, 0.4)
    loss = lambda: (net(Tensor(X), A)[0] ** 2).sum()
    assert grad_check(list(store), loss, n_samples=60) < 1e-5


def test_text_encoder_empty_is_zero_and_deterministic():
    store = ParamStore(0)
    enc = HashedTextEncoder(store, 16, 512)
    empty = enc.encode("")
    assert np.array_equal(empty.pooled.data, np.zeros(16)) and empty.n_tokens == 0
    many = enc.encode_many(["", "hello there", "..."])
    assert np.array_equal(many.data[0], np.zeros(16)) and np.array_equal(many.data[2], np.zeros(16))
    np.testing.assert_allclose(many.data[1], enc.encode("hello there").pooled.data, atol=1e-12)
    assert enc.encode("Hello, THERE").pooled.data.tolist() == enc.encode("hello there").pooled.data.tolist()


def test_text_encoder_word_order_via_bigrams():
    enc = HashedTextEncoder(ParamStore(0), 16, 4096)
    a = enc.encode("give crown to king").pooled.data
    b = enc.encode("give king to crown").pooled.data
    assert not np.allclose(a, b)


def test_one_token_difference_collision_rate_under_five_percent():
    rng = np.random.default_rng(0)
    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    vocab = sorted({"".join(rng.choice(letters, size=int(rng.integers(3, 9)))) for _ in range(12000)})[:10000]
    enc = HashedTextEncoder(ParamStore(0), 8, 4096)
    pairs = list(zip(vocab[0::2], vocab[1::2]))
    # direct count of bucket collisions between the differing tokens
    collided = sum(bucket_of(a, 4096, 0) == bucket_of(b, 4096, 0) for a, b in pairs)
    assert collided / len(pairs) < 0.05
    same = 0
    for a, b in pairs[:500]:
        ea = enc.encode(f"take the {a} now").pooled.data
        eb = enc.encode(f"take the {b} now").pooled.data
        same += np.array_equal(ea, eb)
    assert same / 500 < 0.05


def test_words_tokeniser():
    assert words("Give the Crown, now!") == ["give", "the", "crown", "now"]
    assert words("") == []


def test_biattention_shapes_and_empty_tokens():
    store = ParamStore(0)
    bi = BiAttention(store, 8)
    rng = np.random.default_rng(0)
    G, T = Tensor(rng.normal(size=(5, 8))), Tensor(rng.normal(size=(3, 8)))
    fused = bi(G, T)
    assert fused.shape == (32,)
    empty = bi(G, Tensor(np.zeros((0, 8))))
    np.testing.assert_allclose(empty.data[8:16], G.data.mean(axis=0))
    assert np.all(empty.data[:8] == 0) and np.all(empty.data[16:] == 0)
    with pytest.raises(DimensionMismatch):
        bi(G, Tensor(np.zeros((3, 7))))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 10_000))
def test_biattention_rows_are_distributions(n, t, seed):
    bi = BiAttention(ParamStore(seed), 6)
    rng = np.random.default_rng(seed)
    G, T = Tensor(rng.normal(size=(n, 6))), Tensor(rng.normal(size=(t, 6)))
    a_tg, a_gt = bi.attention(G, T)
    np.testing.assert_allclose(a_tg.data.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(a_gt.data.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(a_tg.data >= 0) and np.all(a_gt.data >= 0)


def test_biattention_node_permutation_invariant():
    bi = BiAttention(ParamStore(1), 6)
    rng = np.random.default_rng(2)
    G, T = rng.normal(size=(7, 6)), rng.normal(size=(4, 6))
    perm = rng.permutation(7)
    a = bi(Tensor(G), Tensor(T)).data
    b = bi(Tensor(G[perm]), Tensor(T)).data
    assert np.max(np.abs(a - b)) < 1e-12


def test_biattention_singleton_weights_are_one():
    bi = BiAttention(ParamStore(0), 4)
    a_tg, a_gt = bi.attention(Tensor(np.ones((1, 4))), Tensor(np.full((1, 4), 2.0)))
    assert a_tg.data.tolist() == [[1.0]] and a_gt.data.tolist() == [[1.0]]


def test_biattention_mentioned_node_gets_max_mass():
    bi = BiAttention(ParamStore(0), 3)
    bi.w_g.data[:] = 0.0
    bi.w_t.data[:] = 0.0
    bi.w_gt.data[:] = 1.0
    G = np.eye(3) * 4.0
    T = G[[1]]
    a_tg, _ = bi.attention(Tensor(G), Tensor(T))
    dots = G @ T[0]
    oracle = np.exp(dots - dots.max()) / np.exp(dots - dots.max()).sum()
    np.testing.assert_allclose(a_tg.data[0], oracle, atol=1e-12)
    assert int(np.argmax(a_tg.data[0])) == 1


def test_rgcn_zero_adjacency_is_self_only():
    _, net = small_rgcn(dim=8, R=4, layers=2)
    X = np.random.default_rng(0).normal(size=(4, 8))
    h, _ = net(Tensor(X), np.zeros((4, 4, 4)))
    for i in range(4):
        alone, _ = net(Tensor(X[[i]]), np.zeros((4, 1, 1)))
        np.testing.assert_allclose(h.data[i], alone.data[0], atol=1e-12)
