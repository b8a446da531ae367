import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lightmind import autodiff as ad
from lightmind.autodiff import Tensor, grad_check
from lightmind.nn import (MLP, Adam, CheckpointMismatch, GRUCell, Linear, ParamStore, load_checkpoint,
                          save_checkpoint, state_hash)


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + eps
        up = f()
        x[i] = old - eps
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * eps)
    return g


@pytest.mark.parametrize("op", ["tanh", "sigmoid", "exp", "softmax", "log_softmax", "power", "div"])
def test_elementwise_ops_against_numeric(op):
    rng = np.random.default_rng(1)
    x = ad.parameter(rng.normal(size=(3, 4)))
    w = rng.normal(size=(3, 4))

    def f(t):
        if op == "softmax":
            return ad.softmax(t, axis=1)
        if op == "log_softmax":
            return ad.log_softmax(t, axis=0)
        if op == "power":
            return (t * t + 1.0) ** 1.5
        if op == "div":
            return t / (t * t + 2.0)
        return getattr(ad, op)(t)

    loss = (f(x) * w).sum()
    loss.backward()
    num = numeric_grad(lambda: float((f(Tensor(x.data)).data * w).sum()), x.data)
    np.testing.assert_allclose(x.grad, num, rtol=1e-6, atol=1e-8)


def test_matmul_broadcast_and_batched():
    rng = np.random.default_rng(2)
    a = ad.parameter(rng.normal(size=(2, 3, 4)))
    b = ad.parameter(rng.normal(size=(4, 5)))
    bias = ad.parameter(rng.normal(size=(5,)))
    loss_fn = lambda: ad.tanh(a @ b + bias).sum()
    assert grad_check([a, b, bias], loss_fn, n_samples=40) < 1e-6


def test_getitem_rows_accumulate_duplicates():
    table = ad.parameter(np.arange(12.0).reshape(4, 3))
    rows = table[np.array([1, 1, 3])]
    rows.sum().backward()
    expected = np.zeros((4, 3))
    expected[1] = 2
    expected[3] = 1
    np.testing.assert_array_equal(table.grad, expected)


def test_shared_parameter_accumulates_without_aliasing():
    w = ad.parameter(np.ones(3))
    up = Tensor(np.array([1.0, 2.0, 3.0]))
    loss = (w * up).sum() + (w * w).sum()
    loss.backward()
    np.testing.assert_allclose(w.grad, up.data + 2 * w.data)
    assert not np.shares_memory(w.grad, up.data)


def test_linear_layer_grad_check():
    store = ParamStore(3)
    lin = Linear(store, "lin", 5, 4)
    x = Tensor(np.random.default_rng(0).normal(size=(7, 5)))
    assert grad_check(list(store), lambda: ((lin(x)) ** 2).mean(), n_samples=24) < 1e-6


def test_gru_and_mlp_grad_check():
    store = ParamStore(4)
    gru = GRUCell(store, "gru", 6, 5)
    mlp = MLP(store, "mlp", 5, 8, 3)
    x = Tensor(np.random.default_rng(0).normal(size=6))
    h0 = Tensor(np.random.default_rng(1).normal(size=5))

    def loss():
        h = gru(x, gru(x, h0))
        return ad.cross_entropy(mlp(h), 1)

    assert grad_check(list(store), loss, n_samples=80) < 1e-5


def test_constant_loss_has_zero_gradient():
    p = ad.parameter(np.ones((2, 2)))
    loss = (p * 0.0).sum() + 3.0
    loss.backward()
    np.testing.assert_array_equal(p.grad, np.zeros((2, 2)))


def test_no_grad_builds_no_graph():
    p = ad.parameter(np.ones(3))
    with ad.no_grad():
        y = (p * 2.0).sum()
    assert not y.requires_grad


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_gradient_detected():
    p = ad.parameter(np.array([0.0, 1.0]))
    with pytest.raises(ad.NonFiniteGradient):
        grad_check([p], lambda: ad.log(p).sum(), n_samples=2)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=12), st.integers(0, 11))
def test_cross_entropy_matches_logsumexp(values, target):
    target %= len(values)
    x = np.array(values)
    ce = ad.cross_entropy(Tensor(x), target).item()
    m = x.max()
    assert ce == pytest.approx(m + np.log(np.exp(x - m).sum()) - x[target], rel=1e-9, abs=1e-9)


def test_adam_zero_lr_leaves_params_and_clips():
    store = ParamStore(0)
    lin = Linear(store, "l", 3, 2)
    before = store.state()
    opt = Adam(list(store), lr=0.0, clip=1.0)
    (lin(Tensor(np.full(3, 100.0))) ** 2).sum().backward()
    norm = opt.step()
    assert norm > 1.0
    assert all(np.array_equal(before[n], p.data) for n, p in store.params.items())


def test_checkpoint_round_trip_and_tamper(tmp_path):
    store = ParamStore(5)
    MLP(store, "m", 4, 4, 2)
    path = tmp_path / "m.npz"
    digest = save_checkpoint(path, store.state(), {"dim": 4})
    state, manifest = load_checkpoint(path)
    assert digest == state_hash(state) == manifest["hash"]
    assert manifest["config"] == {"dim": 4}
    other = ParamStore(9)
    MLP(other, "m", 4, 4, 2)
    other.load_state(state)
    assert state_hash(other.state()) == digest
    with pytest.raises(CheckpointMismatch):
        ParamStore(0).load_state(state)
    (tmp_path / "junk.npz").write_bytes(b"not a zip")
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(tmp_path / "junk.npz")


def test_param_store_seeded():
    a, b = ParamStore(7), ParamStore(7)
    MLP(a, "m", 3, 3, 3)
    MLP(b, "m", 3, 3, 3)
    assert state_hash(a.state()) == state_hash(b.state())
    with pytest.raises(KeyError):
        a.create("m.l1.w", (1, 1))


def test_extended_precision_oracle_restores_parameters():
    store = ParamStore(3)
    lin = Linear(store, "lin", 5, 4)
    x = Tensor(np.random.default_rng(0).normal(size=(7, 5)))
    loss = lambda: ((lin(x)) ** 2).mean()
    before = store.state()
    err, details = grad_check(list(store), loss, n_samples=24, return_details=True, oracle_dtype=np.longdouble)
    assert err < 1e-8
    for name, p in store.params.items():
        assert p.data.dtype == np.float64 and np.array_equal(p.data, before[name])
    assert Tensor(1.0).data.dtype == np.float64
    # nonzero_only never samples a coordinate whose analytic gradient is zero
    emb = Tensor(np.random.default_rng(1).normal(size=(50, 3)), requires_grad=True)
    rows = lambda: (emb[np.array([2, 7, 7])] ** 2).sum()
    _, details = grad_check([emb], rows, n_samples=30, return_details=True, nonzero_only=True)
    assert len(details) == 6 and {i // 3 for _, i, *_ in details} == {2, 7}
