"""Autodiff engine: forward values, gradients vs central differences, params."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import morphkit.gradcore as gc


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


# ---------------------------------------------------------------------------
# forward values


def test_identity_graph():
    x = gc.leaf("x")
    np.testing.assert_array_equal(gc.evaluate(x, {"x": [1.0, 2.0, 3.0]}),
                                  [1.0, 2.0, 3.0])


def test_cosine_self_is_one():
    v = rng(1).normal(size=(5, 7))
    out = gc.evaluate(gc.cosine_similarity(gc.leaf("v"), gc.leaf("v")), {"v": v})
    np.testing.assert_allclose(out, np.ones(5), atol=1e-12)


def test_matmul_identity():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = gc.evaluate(gc.matmul(gc.const(np.eye(2)), gc.leaf("m")), {"m": m})
    np.testing.assert_array_equal(out, m)


def test_evaluate_deterministic():
    x = rng(2).normal(size=(4, 4))
    g = gc.relu(gc.matmul(gc.leaf("x"), gc.leaf("x"))).sum()
    a = gc.evaluate(g, {"x": x})
    b = gc.evaluate(g, {"x": x})
    assert np.array_equal(a, b)


def test_unbound_leaf_errors():
    with pytest.raises(gc.GradcoreError, match="unbound leaf"):
        gc.evaluate(gc.leaf("x") + gc.leaf("y"), {"x": 1.0})


def test_matmul_shape_mismatch_errors():
    with pytest.raises(gc.GradcoreError, match="matmul"):
        gc.evaluate(gc.matmul(gc.leaf("a"), gc.leaf("b")),
                    {"a": np.ones((2, 3)), "b": np.ones((2, 3))})


def test_nonfinite_aborts():
    with pytest.raises(gc.NonFiniteError):
        gc.evaluate(gc.exp(gc.leaf("x")), {"x": 1e4})
    with pytest.raises(gc.NonFiniteError):
        gc.evaluate(gc.log(gc.leaf("x")), {"x": 0.0})


# ---------------------------------------------------------------------------
# gradients


def test_square_gradient():
    x = gc.leaf("x")
    grads = gc.gradient(x * x, {"x": 3.0}, ["x"])
    np.testing.assert_allclose(grads["x"], 6.0)


def test_mean_gradient_is_one_over_n():
    v = gc.leaf("v")
    grads = gc.gradient(v.mean(), {"v": np.arange(5.0)}, ["v"])
    np.testing.assert_allclose(grads["v"], np.full(5, 0.2))


def test_nonscalar_gradient_errors():
    with pytest.raises(gc.GradcoreError, match="scalar"):
        gc.gradient(gc.leaf("x") * 2.0, {"x": np.ones(3)}, ["x"])


def test_gradient_linearity():
    r = rng(3)
    x = gc.leaf("x")
    g1 = (x * x).sum()
    g2 = gc.exp(x * 0.3).sum()
    xv = r.normal(size=6)
    ga = gc.gradient(g1, {"x": xv}, ["x"])["x"]
    gb = gc.gradient(g2, {"x": xv}, ["x"])["x"]
    gs = gc.gradient(g1 + g2, {"x": xv}, ["x"])["x"]
    np.testing.assert_allclose(gs, ga + gb, rtol=1e-12)


def test_gradient_wrt_unused_bound_leaf_is_zero():
    x, y = gc.leaf("x"), gc.leaf("y")
    grads = gc.gradient((x * x).sum(), {"x": np.ones(3), "y": np.ones(2)}, ["y"])
    np.testing.assert_array_equal(grads["y"], np.zeros(2))


def test_cosine_loss_gradient_matches_fd():
    # appearance-style loss on raw embeddings: -mean(cos(a, b))
    r = rng(4)
    a, b = gc.leaf("a"), gc.leaf("b")
    loss = -gc.cosine_similarity(a, b).mean()
    bindings = {"a": r.normal(size=(6, 16)), "b": r.normal(size=(6, 16))}
    err = gc.finite_difference_check(loss, bindings, ["a", "b"],
                                     eps=1e-5, max_coords=24)
    assert err <= 1e-4


# ---------------------------------------------------------------------------
# finite differences


def test_fd_quadratic_is_exact():
    x = gc.leaf("x")
    err = gc.finite_difference_check(x * x, {"x": 3.0}, ["x"], eps=1e-5)
    assert err <= 1e-8


def test_fd_relu_kink_excluded():
    # coordinate sitting on the kink must be skipped, the rest must check out
    x = gc.leaf("x")
    loss = gc.relu(x).sum()
    v = np.array([0.0, -1.0, 2.0, 0.5e-5, -0.5e-5])
    err = gc.finite_difference_check(loss, {"x": v}, ["x"], eps=1e-5)
    assert err <= 1e-4


ELEMENTWISE = [
    ("relu", lambda x: gc.relu(x), (0.2, 3.0)),
    ("exp", lambda x: gc.exp(x), (-2.0, 2.0)),
    ("log", lambda x: gc.log(x), (0.2, 4.0)),
    ("sqrt", lambda x: gc.sqrt(x), (0.2, 4.0)),
    ("cos", lambda x: gc.cos(x), (-3.0, 3.0)),
    ("acos", lambda x: gc.acos(x), (-0.9, 0.9)),
    ("clip", lambda x: gc.clip(x, -0.5, 0.5), (-2.0, 2.0)),
]


@pytest.mark.parametrize("name,make,rng_range", ELEMENTWISE)
def test_fd_elementwise_primitives(name, make, rng_range):
    # a 100-element leaf doubles as 100 random evaluation points
    lo, hi = rng_range
    v = rng(hash(name) % 2**32).uniform(lo, hi, size=100)
    loss = make(gc.leaf("x")).sum()
    err = gc.finite_difference_check(loss, {"x": v}, ["x"], max_coords=100)
    assert err <= 1e-4


def test_fd_binary_and_structural_primitives():
    r = rng(7)
    a, b = gc.leaf("a"), gc.leaf("b")
    av, bv = r.normal(size=(4, 5)) + 2.0, r.normal(size=(4, 5)) + 3.0
    cases = [
        (a + b, {"a": av, "b": bv}),
        (a - b, {"a": av, "b": bv}),
        (a * b, {"a": av, "b": bv}),
        (a / b, {"a": av, "b": bv}),
        (gc.matmul(a, gc.transpose2d(b)), {"a": av, "b": bv}),
        (gc.concat([a, b], axis=1), {"a": av, "b": bv}),
        (gc.slice_axis(a, 1, 1, 4), {"a": av}),
        (a.reshape((2, 10)), {"a": av}),
        (gc.l2norm(a), {"a": av}),
        (gc.cosine_similarity(a, b), {"a": av, "b": bv}),
        (gc.logmeanexp(a), {"a": av}),
        (gc.take_rows(a, gc.const([2, 0, 2])), {"a": av}),
    ]
    for node, bindings in cases:
        loss = node.sum() if gc.evaluate(node, bindings).ndim else node
        err = gc.finite_difference_check(loss, bindings,
                                         [k for k in bindings], max_coords=10)
        assert err <= 1e-4, node.op


def test_fd_broadcast_bias():
    r = rng(8)
    x, b = gc.leaf("x"), gc.leaf("b")
    loss = ((x + b) * (x + b)).mean()
    bindings = {"x": r.normal(size=(3, 4, 2, 2)), "b": r.normal(size=(4, 1, 1))}
    assert gc.finite_difference_check(loss, bindings, ["x", "b"]) <= 1e-4


def test_fd_softmax_cross_entropy():
    r = rng(9)
    logits = gc.leaf("z")
    labels = np.array([0, 2, 1])
    loss = gc.softmax_cross_entropy(logits, gc.const(labels)).mean()
    err = gc.finite_difference_check(loss, {"z": r.normal(size=(3, 4))}, ["z"],
                                     max_coords=12)
    assert err <= 1e-4


def test_softmax_cross_entropy_matches_manual():
    r = rng(10)
    z = r.normal(size=(5, 3))
    lab = np.array([2, 0, 1, 1, 0])
    out = gc.evaluate(gc.softmax_cross_entropy(gc.leaf("z"), gc.const(lab)), {"z": z})
    # independent log-softmax computation
    p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    expect = -np.log(p[np.arange(5), lab])
    np.testing.assert_allclose(out, expect, rtol=1e-10)


def test_logmeanexp_stable_at_large_scores():
    v = np.array([1000.0, 1000.0, 999.0])
    out = gc.evaluate(gc.logmeanexp(gc.leaf("x")), {"x": v})
    expect = 1000.0 + np.log((1 + 1 + np.exp(-1.0)) / 3)
    np.testing.assert_allclose(out, expect, rtol=1e-12)


def test_conv2d_matches_naive_loops():
    r = rng(11)
    x = r.normal(size=(2, 2, 6, 5))
    w = r.normal(size=(3, 2, 3, 3))
    for stride, pad in [(1, 0), (1, 1), (2, 1)]:
        out = gc.evaluate(gc.conv2d(gc.leaf("x"), gc.leaf("w"), stride, pad),
                          {"x": x, "w": w})
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        oh = (x.shape[2] + 2 * pad - 3) // stride + 1
        ow = (x.shape[3] + 2 * pad - 3) // stride + 1
        ref = np.zeros((2, 3, oh, ow))
        for n in range(2):
            for f in range(3):
                for i in range(oh):
                    for j in range(ow):
                        patch = xp[n, :, i * stride:i * stride + 3,
                                   j * stride:j * stride + 3]
                        ref[n, f, i, j] = (patch * w[f]).sum()
        np.testing.assert_allclose(out, ref, rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_fd_random_smooth_chains(seed):
    r = rng(seed)
    x = gc.leaf("x")
    loss = gc.logmeanexp(gc.exp(x * 0.5) + gc.sqrt(x + 5.0))
    err = gc.finite_difference_check(loss, {"x": r.uniform(-2, 2, size=8)}, ["x"])
    assert err <= 1e-4


# ---------------------------------------------------------------------------
# parameters, SGD, serialization


def test_sgd_basic_step():
    p = gc.ParamStore(tensors={"p": np.array([1.0])})
    gc.sgd_update(p, {"p": np.array([2.0])}, 0.1)
    np.testing.assert_allclose(p["p"], [0.8])


def test_sgd_zero_lr_keeps_params():
    p = gc.ParamStore(tensors={"p": np.array([1.0, -2.0])})
    gc.sgd_update(p, {"p": np.array([5.0, 5.0])}, 0.0)
    np.testing.assert_array_equal(p["p"], [1.0, -2.0])


def test_sgd_missing_grad_errors():
    p = gc.ParamStore(tensors={"p": np.array([1.0]), "q": np.array([1.0])})
    with pytest.raises(gc.GradcoreError, match="missing gradient"):
        gc.sgd_update(p, {"p": np.array([1.0])}, 0.1)


def test_lr_schedule_epoch_10():
    sched = gc.LrSchedule(initial=0.1, decay=0.9, every=5, floor=1e-6)
    assert sched.at(0) == 0.1
    assert sched.at(4) == 0.1
    np.testing.assert_allclose(sched.at(10), 0.081)
    assert sched.at(10_000) == 1e-6


def test_paramstore_seeded_init_bit_identical():
    specs = [gc.ParamSpec("w", (4, 3), "uniform", fan_in=3),
             gc.ParamSpec("b", (4,), "zeros")]
    a = gc.ParamStore.initialize(specs, seed=42)
    b = gc.ParamStore.initialize(specs, seed=42)
    for k in a.names():
        assert np.array_equal(a[k], b[k])
    c = gc.ParamStore.initialize(specs, seed=43)
    assert not np.array_equal(a["w"], c["w"])
    np.testing.assert_array_equal(a["b"], np.zeros(4))


def test_paramstore_roundtrip_bit_exact(tmp_path):
    r = rng(12)
    store = gc.ParamStore(tensors={
        "conv_w": r.normal(size=(3, 2, 3, 3)),
        "scalarish": np.asarray(np.pi).reshape(()),
        "bias": r.normal(size=(7,)),
    })
    path = tmp_path / "p.mkpt"
    store.save(path)
    with open(path, "rb") as f:
        assert f.read(5) == b"MKPT1"
    loaded = gc.ParamStore.load(path)
    assert loaded.names() == store.names()
    for k in store.names():
        assert np.array_equal(loaded[k], store[k])
        assert loaded[k].tobytes() == store[k].tobytes()


def test_paramstore_bad_magic(tmp_path):
    path = tmp_path / "junk.mkpt"
    path.write_bytes(b"NOPEx")
    with pytest.raises(gc.GradcoreError, match="magic"):
        gc.ParamStore.load(path)
