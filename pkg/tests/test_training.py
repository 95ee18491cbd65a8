import numpy as np
import pytest

from beliefmatch._engine import CheckArrays
from beliefmatch.channel import DepolarizingChannel
from beliefmatch.training import (TrainConfig, cross_entropy, gradient,
                                  loss_and_gradient, train)
from beliefmatch.weights import WeightSet, bind_edges, init_unit

PRIOR = DepolarizingChannel(0.1).prior()


def _random_batch(rng, n, batch, eps=0.1):
    hit = rng.random((batch, n)) < eps
    return np.where(hit, rng.integers(1, 4, (batch, n)), 0).astype(np.uint8)


def test_cross_entropy_one_hot_is_zero():
    true = np.array([0, 2, 1])
    Q = np.zeros((3, 4))
    Q[np.arange(3), true] = 1.0
    assert cross_entropy([Q, Q], true) == pytest.approx(0.0, abs=1e-9)


def test_cross_entropy_uniform_is_log4():
    true = np.array([1, 3])
    Q = np.full((2, 4), 0.25)
    assert cross_entropy([Q], true) == pytest.approx(np.log(4))


def test_cross_entropy_matches_recomputation(code4):
    """Loss recomputed from the saved marginals by an independent second
    path equals the engine's value."""
    from beliefmatch import _engine

    rng = np.random.default_rng(21)
    ar = CheckArrays.of(code4.h_oc)
    codes = _random_batch(rng, code4.n, 1)
    s = ar.syndrome_of_codes(codes)
    w = np.ones((4, ar.n_edges))
    loss, _ = loss_and_gradient(code4.h_oc, s, PRIOR, w, codes)
    logQs, _ = _engine.bp_trace(ar, s, np.log(
        _engine.clamp_prior(PRIOR, code4.n)), 4, w)
    manual = np.mean([cross_entropy([np.exp(lq[0])], codes[0])
                      for lq in logQs])
    assert loss == pytest.approx(manual, rel=1e-9)


@pytest.mark.parametrize("variant,sw", [("multi_iteration", 0.0),
                                        ("final_iteration", 0.0),
                                        ("syndrome", 1.0),
                                        ("ce+syndrome", 1.0)])
def test_gradient_matches_finite_differences(code4, variant, sw):
    rng = np.random.default_rng(5)
    ar = CheckArrays.of(code4.h_oc)
    T = 3
    w = 1.0 + 0.2 * rng.standard_normal((T, ar.n_edges))
    codes = _random_batch(rng, code4.n, 4)
    s = ar.syndrome_of_codes(codes)
    _, grad = loss_and_gradient(code4.h_oc, s, PRIOR, w, codes, variant, sw)
    h = 1e-5
    checked = 0
    for t, e in zip(rng.integers(0, T, 40), rng.integers(0, ar.n_edges, 40)):
        wp = w.copy(); wp[t, e] += h
        wm = w.copy(); wm[t, e] -= h
        lp, _ = loss_and_gradient(code4.h_oc, s, PRIOR, wp, codes, variant, sw)
        lm, _ = loss_and_gradient(code4.h_oc, s, PRIOR, wm, codes, variant, sw)
        fd = (lp - lm) / (2 * h)
        if abs(fd) < 1e-7:
            continue  # below the finite-difference noise floor
        assert abs(fd - grad[t, e]) / max(abs(fd), abs(grad[t, e])) < 1e-4
        checked += 1
    assert checked >= 10


def test_conv_gradient_is_class_sum_of_dense(code4):
    """Tying consistency: conv and dense-with-tied-values agree on the
    forward pass bit-exactly and on class-summed gradients."""
    from beliefmatch.toric import build_edge_classes

    rng = np.random.default_rng(6)
    per_edge = build_edge_classes(code4).per_edge
    conv_values = 1.0 + 0.2 * rng.standard_normal((3, 32))
    unit = init_unit("conv", 3, code4)
    ws_conv = WeightSet(kind="conv", iterations=3, values=conv_values,
                        distance=4, matrix="overcomplete",
                        convention_hash=unit.convention_hash)
    ws_dense = WeightSet(kind="dense", iterations=3,
                         values=conv_values[:, per_edge], distance=4,
                         matrix="overcomplete")
    assert np.array_equal(bind_edges(ws_conv, code4),
                          bind_edges(ws_dense, code4))

    codes = _random_batch(rng, code4.n, 8)
    s = CheckArrays.of(code4.h_oc).syndrome_of_codes(codes)
    loss_c, g_conv = gradient(code4, "overcomplete", ws_conv, s, codes, PRIOR)
    loss_d, g_dense = gradient(code4, "overcomplete", ws_dense, s, codes,
                               PRIOR)
    assert loss_c == loss_d
    summed = np.zeros_like(g_conv)
    for t in range(3):
        np.add.at(summed[t], per_edge, g_dense[t])
    assert np.allclose(summed, g_conv, atol=1e-12)


def test_zero_gradient_through_zero_delta_factor():
    """An edge whose check message is exactly 0 contributes no gradient
    through that factor (flat direction)."""
    from beliefmatch.pauli import SparseCheckMatrix

    H = SparseCheckMatrix(2, 2, [[(0, 1), (1, 1)], [(0, 3), (1, 3)]])
    ar = CheckArrays.of(H)
    uniform = np.full(4, 0.25)  # d = 0 on every edge -> delta = 0
    codes = np.zeros((1, 2), dtype=np.uint8)
    s = ar.syndrome_of_codes(codes)
    w = np.ones((1, ar.n_edges))
    _, grad = loss_and_gradient(H, s, uniform, w, codes)
    assert np.allclose(grad, 0.0, atol=1e-12)


def test_unit_weight_training_loss_equals_plain_bp(code4):
    """Step-0 loss (unit weights, weighted code path) equals the loss of the
    unweighted forward pass, bit for bit."""
    from beliefmatch import _engine

    rng = np.random.default_rng(30)
    ar = CheckArrays.of(code4.h_oc)
    codes = _random_batch(rng, code4.n, 6)
    s = ar.syndrome_of_codes(codes)
    log_prior = np.log(_engine.clamp_prior(PRIOR, code4.n))
    unit = np.ones((4, ar.n_edges))
    logQs_w, _ = _engine.bp_trace(ar, s, log_prior, 4, unit)
    logQs_p, _ = _engine.bp_trace(ar, s, log_prior, 4, None)
    for a, b in zip(logQs_w, logQs_p):
        assert np.array_equal(a, b)
    assert _engine.cross_entropy_loss(logQs_w, codes) == \
        _engine.cross_entropy_loss(logQs_p, codes)


def test_train_zero_steps_returns_unit(code4):
    ws, report = train(code4, "overcomplete",
                       TrainConfig(steps=0, iterations=4))
    assert ws.is_unit()
    assert report.losses == []
    assert ws.kind == "conv" and ws.distance == 4


def test_train_is_deterministic(code4):
    cfg = TrainConfig(steps=5, batch_size=8, iterations=3, seed=123)
    ws1, rep1 = train(code4, "overcomplete", cfg)
    ws2, rep2 = train(code4, "overcomplete", cfg)
    assert np.array_equal(ws1.values, ws2.values)
    assert rep1.losses == rep2.losses


def test_train_loss_decreases(code4):
    cfg = TrainConfig(steps=160, batch_size=32, iterations=4, seed=3,
                      learning_rate=0.02)
    ws, report = train(code4, "overcomplete", cfg)
    first = np.mean(report.losses[:20])
    last = np.mean(report.losses[-20:])
    assert last < first
    assert not ws.is_unit()


def test_train_dense_kind(code4):
    cfg = TrainConfig(steps=3, batch_size=4, iterations=2, kind="dense")
    ws, _ = train(code4, "overcomplete", cfg)
    assert ws.kind == "dense" and ws.values.shape == (2, 512)


def test_train_share_iterations(code4):
    cfg = TrainConfig(steps=4, batch_size=4, iterations=3,
                      share_iterations=True)
    ws, _ = train(code4, "overcomplete", cfg)
    assert np.array_equal(ws.values[0], ws.values[1])
    assert np.array_equal(ws.values[0], ws.values[2])


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(loss_variant="nope")
    with pytest.raises(ValueError):
        TrainConfig(epsilon_train=0.0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="sgd")


def test_mixture_training_runs(code4):
    cfg = TrainConfig(steps=3, batch_size=4, iterations=2,
                      epsilon_train=(0.05, 0.15))
    ws, _ = train(code4, "overcomplete", cfg)
    assert ws.epsilon_train == pytest.approx(0.1)
