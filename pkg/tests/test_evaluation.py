import numpy as np
import pytest

from reproto.attacks import AttackConfig
from reproto.data import Dataset, gen_gaussians
from reproto.evaluation import (ConfusionMatrix, accuracy, adv_confusion, confusion_matrix,
                                curves_svg, enclosure_stats, misclass_overlap,
                                nearest_in_predicted_class, robust_accuracy, robustness_curve,
                                top_m_agreement, transfer_eval)
from reproto.geometry import Metric
from reproto.model import Mlp, forward
from reproto.prototypes import PrototypeSet, build_prototypes


def threshold_model(t=0.5):
    # logits (0, x - t): class 1 iff x > t, ties to class 0
    return Mlp([[[0.0, 1.0]]], [[0.0, -t]])


@pytest.fixture(scope="module")
def blobs():
    return gen_gaussians(3, 4, sigma=0.06, n_per_class=40, seed=0)


def test_accuracy_examples():
    m = threshold_model()
    ds = Dataset([[0.1], [0.2], [0.75], [0.9], [0.4]], [0, 0, 1, 1, 1], 2)
    assert accuracy(m, ds) == pytest.approx(4 / 5)
    ds = Dataset([[0.1], [0.9]], [0, 1], 2)
    assert accuracy(m, ds) == 1.0
    rng = np.random.default_rng(0)
    rand = Dataset(rng.uniform(size=(3000, 1)) * 0.4, rng.integers(0, 4, 3000), 4)
    assert abs(accuracy(threshold_model(), rand) - 0.25) < 0.03


def test_threshold_margin_exact():
    m = threshold_model(0.5)
    # class-1 samples at margins 1/4, 1/8, 3/8 above the threshold (exact binary fractions)
    ds = Dataset([[0.75], [0.625], [0.875]], [1, 1, 1], 2)
    for eps, expected in [(0.0, 1.0), (0.124, 1.0), (0.125, 2 / 3), (0.2, 2 / 3),
                          (0.25, 1 / 3), (0.375, 0.0)]:
        cfg = AttackConfig(metric="linf", eps=eps, n_iters=4)
        acc, _ = robust_accuracy(m, ds, cfg)
        assert acc == pytest.approx(expected), eps


def test_robust_at_most_natural(blobs, softmax_like):
    for eps in (0.0, 0.05, 0.2):
        rob, _ = robust_accuracy(softmax_like, blobs, AttackConfig(eps=eps, n_iters=5))
        assert rob <= accuracy(softmax_like, blobs)
    rob, _ = robust_accuracy(softmax_like, blobs, AttackConfig(eps=0.0))
    assert rob == accuracy(softmax_like, blobs)


@pytest.fixture(scope="module")
def softmax_like():
    return Mlp.init([4, 10, 3], seed=1)


@pytest.fixture(scope="module")
def proto_net():
    return Mlp.init([4, 10, 5], seed=1, protos=build_prototypes(3, 5, seed=0, eps=1.0))


def test_curve_monotone_and_anchored(blobs, softmax_like, proto_net):
    for model in (softmax_like, proto_net):
        for metric in (Metric.L2, Metric.LINF):
            cfg = AttackConfig(metric=metric, n_iters=5, restarts=2, init="uniform")
            curve = robustness_curve(model, blobs, [0.0, 0.02, 0.05, 0.1, 0.2], cfg)
            assert curve.robust_acc[0] == accuracy(model, blobs)
            assert np.all(np.diff(curve.robust_acc) <= 0)
            never = np.isnan(curve.first_failure)
            assert np.mean(never) == curve.robust_acc[-1]


def test_curve_rejects_descending(blobs, softmax_like):
    with pytest.raises(ValueError):
        robustness_curve(softmax_like, blobs, [0.2, 0.1], AttackConfig())


def test_curve_exports(blobs, softmax_like):
    curve = robustness_curve(softmax_like, blobs, [0.0, 0.1], AttackConfig(n_iters=2))
    assert curve.to_csv().splitlines()[0] == "eps,robust_acc"
    assert len(curve.to_csv().splitlines()) == 3
    svg = curve.to_svg()
    assert svg.startswith("<svg") and "polyline" in svg
    assert "&lt;" in curves_svg([("a<b", [0, 1], [1, 0])])


def test_enclosure_exact_hits():
    protos = PrototypeSet([[0.0, 0.0], [1.0, 0.0]], eps=0.25)
    net = Mlp([np.eye(2)], [np.zeros(2)], protos=protos)
    ds = Dataset([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]], [0, 1, 1], 2)
    st = enclosure_stats(net, ds)
    assert np.array_equal(st.own_ball_fraction, [1, 1])
    assert np.array_equal(st.exclusion_violation, [0, 0])
    ds2 = Dataset([[0.0, 0.0], [0.0, 0.125], [1.0, 0.0]], [0, 0, 1], 2)
    st0 = enclosure_stats(net, ds2, eps=0.0)
    assert np.array_equal(st0.own_ball_fraction, [0.5, 1.0])


def test_enclosure_matches_scan(blobs, proto_net):
    st = enclosure_stats(proto_net, blobs, eps=2.0)
    out = forward(proto_net, blobs.X)
    c = proto_net.protos.centers
    for cls in range(3):
        rows = out[blobs.y == cls]
        own = [np.linalg.norm(r - c[cls]) for r in rows]
        viol = [any(np.linalg.norm(r - c[j]) <= 2.0 for j in range(3) if j != cls) for r in rows]
        assert st.own_ball_fraction[cls] == pytest.approx(np.mean(np.array(own) <= 2.0))
        assert st.exclusion_violation[cls] == pytest.approx(np.mean(viol))
        assert st.mean_own_distance[cls] == pytest.approx(np.mean(own))


def test_adv_confusion(blobs, proto_net):
    natural = confusion_matrix(blobs.y, proto_net.predict(blobs.X), 3)
    cm0, _ = adv_confusion(proto_net, blobs, AttackConfig(eps=0.0))
    assert np.array_equal(cm0.counts, natural.counts)
    cfg = AttackConfig(eps=0.1, n_iters=5)
    cm, res = adv_confusion(proto_net, blobs, cfg)
    assert np.array_equal(cm.counts.sum(axis=1), np.bincount(blobs.y, minlength=3))
    rob, _ = robust_accuracy(proto_net, blobs, cfg)
    assert np.trace(cm.counts) / len(blobs) == pytest.approx(rob)
    np.testing.assert_allclose(cm.row_normalized.sum(axis=1), 1.0)
    assert cm.to_csv().splitlines()[0] == "true,pred0,pred1,pred2"


def test_top_m_agreement():
    a = np.array([[5, 3, 1], [2, 5, 0], [0, 4, 5]])
    assert top_m_agreement(a, a, 1) == 1.0
    b = np.array([[5, 0, 3], [0, 5, 2], [4, 0, 5]])
    assert top_m_agreement(a, b, 1) == 0.0
    c = np.array([[5, 3, 1], [0, 5, 2], [4, 0, 5]])
    assert top_m_agreement(ConfusionMatrix(a), ConfusionMatrix(c), 1) == pytest.approx(1 / 3)
    assert top_m_agreement(a, b, 2) == 1.0
    with pytest.raises(ValueError):
        top_m_agreement(a, np.zeros((2, 2)), 1)


def test_misclass_overlap():
    assert misclass_overlap({1, 2}, {1, 2}) == (1.0, 1.0)
    assert misclass_overlap({1, 2}, {3}) == (0.0, 0.0)
    jac, over_min = misclass_overlap({1, 2, 3}, {2, 3, 4})
    assert jac == 0.5 and over_min == pytest.approx(2 / 3)


def test_nearest_in_predicted_class(blobs, proto_net):
    preds = proto_net.predict(blobs.X)
    out = forward(proto_net, blobs.X)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.uniform(size=4)
        target = int(rng.integers(0, 3))
        got = nearest_in_predicted_class(proto_net, x, target, blobs)
        pool = [i for i in range(len(blobs)) if blobs.y[i] == target and preds[i] == target]
        if not pool:
            assert got is None
            continue
        rep = forward(proto_net, x)
        dists = [np.linalg.norm(out[i] - rep) for i in pool]
        assert got == pool[int(np.argmin(dists))]
    member = next(i for i in range(len(blobs)) if preds[i] == blobs.y[i])
    assert nearest_in_predicted_class(proto_net, blobs.X[member], int(blobs.y[member]), blobs) == member


def test_nearest_single_pool():
    m = threshold_model()
    ds = Dataset([[0.9], [0.1]], [1, 0], 2)
    assert nearest_in_predicted_class(m, [0.3], 1, ds) == 0
    empty = Dataset([[0.9], [0.1]], [0, 0], 2)
    assert nearest_in_predicted_class(m, [0.3], 1, empty) is None


def test_transfer(blobs, softmax_like, proto_net):
    cfg = AttackConfig(eps=0.1, n_iters=5)
    accs, _ = transfer_eval(softmax_like, [softmax_like, proto_net], blobs, cfg)
    white, _ = robust_accuracy(softmax_like, blobs, cfg)
    assert accs[0] == white
    zero, _ = transfer_eval(softmax_like, [softmax_like, proto_net], blobs, cfg.with_eps(0.0))
    assert zero == [accuracy(softmax_like, blobs), accuracy(proto_net, blobs)]
    with pytest.raises(ValueError):
        transfer_eval(softmax_like, [Mlp.init([3, 2], seed=0)], blobs, cfg)
