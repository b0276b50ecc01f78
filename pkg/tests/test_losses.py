import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatflow.dynamics import LabelMap
from splatflow.harness.gradcheck import SuiteResult, check_loss_2d, check_loss_flow, check_loss_occ
from splatflow.losses import flow_weight, loss_2d, loss_flow, loss_occ, loss_total
from splatflow.scene import FREE, RenderedMaps


def maps(sem, depth, mask=None):
    H, W = depth.shape
    return RenderedMaps(sem, depth, np.ones((H, W)), np.ones((H, W), bool) if mask is None else mask)


def test_ce_vanishes_with_large_margin_and_matching_depth():
    classes = np.array([[0, 1], [2, 1]])
    sem = np.eye(3)[classes] * 200.0
    depth = np.full((2, 2), 4.0)
    loss, gs, gd = loss_2d(maps(sem, depth), LabelMap(classes, depth, np.ones((2, 2), bool)))
    assert loss < 1e-80 and not gd.any()


def test_loss_2d_masked_average():
    sem = np.zeros((1, 2, 2))
    depth = np.array([[1.0, 5.0]])
    lab = LabelMap(np.array([[0, 1]]), np.array([[2.0, 0.0]]), np.array([[True, False]]))
    loss, gs, gd = loss_2d(maps(sem, depth), lab)
    np.testing.assert_allclose(loss, np.log(2) + 1.0)
    assert not gs[0, 1].any() and gd[0, 1] == 0 and gd[0, 0] == -1


def test_loss_2d_empty_intersection_warns(caplog):
    lab = LabelMap(np.zeros((2, 2), int), np.zeros((2, 2)), np.zeros((2, 2), bool))
    with caplog.at_level(logging.WARNING):
        loss, gs, gd = loss_2d(maps(np.ones((2, 2, 3)), np.ones((2, 2))), lab)
    assert loss == 0.0 and not gs.any() and not gd.any()
    assert "empty mask" in caplog.text


@settings(max_examples=30)
@given(st.integers(0, 2 ** 31))
def test_loss_2d_ignores_pixels_outside_mask(seed):
    rng = np.random.default_rng(seed)
    sem, depth = rng.normal(size=(5, 5, 3)), rng.uniform(1, 5, (5, 5))
    mask = rng.random((5, 5)) < 0.5
    mask[0, 0] = True
    cls = rng.integers(0, 3, (5, 5))
    a = loss_2d(maps(sem, depth), LabelMap(cls, depth + 1, mask))[0]
    cls2 = np.where(mask, cls, rng.integers(0, 3, (5, 5)))
    b = loss_2d(maps(sem, depth), LabelMap(cls2, np.where(mask, depth + 1, 0.0), mask))[0]
    assert a == b


def test_loss_2d_shape_mismatch():
    with pytest.raises(ValueError):
        loss_2d(maps(np.zeros((2, 2, 3)), np.zeros((2, 2))), LabelMap(np.zeros((3, 2), int), np.zeros((3, 2)),
                                                                     np.ones((3, 2), bool)))


def test_flow_loss_examples():
    sem = np.array([[[1]]])
    gt = np.array([[[[1.0, 0.0]]]])
    assert loss_flow(gt, gt, sem, (1,))[0] == 0
    loss, g = loss_flow(np.zeros_like(gt), gt, sem, (1,))
    assert loss == 2.0 and flow_weight(1.0) == 2.0
    np.testing.assert_array_equal(g[0, 0, 0], [-2.0, 0.0])
    # twice the speed with the prediction still at rest: twice the error at a larger weight
    loss2, _ = loss_flow(np.zeros_like(gt), 2 * gt, sem, (1,))
    assert loss2 == 6.0 and loss2 > 2 * loss


def test_flow_loss_excludes_static_and_free():
    sem = np.array([[[1, 0, FREE]]])
    gt = np.zeros((1, 1, 3, 2))
    pred = np.ones((1, 1, 3, 2))
    loss, g = loss_flow(pred, gt, sem, (1,))
    assert loss == 2.0 and not g[0, 0, 1:].any()
    assert loss_flow(pred, gt, sem, (5,))[0] == 0.0


def test_occ_loss_examples():
    sem = np.array([[[0, FREE]]])
    logits = np.zeros((1, 1, 2, 17))
    np.testing.assert_allclose(loss_occ(logits, sem)[0], np.log(17), rtol=1e-15)
    logits[0, 0, 0, 0] = 500.0
    logits[0, 0, 1, 16] = 500.0
    assert loss_occ(logits, sem)[0] < 1e-100
    with pytest.raises(ValueError):
        loss_occ(np.zeros((1, 1, 3, 4)), sem)


def test_gradients_match_finite_differences(rng):
    for fn in (check_loss_2d, check_loss_flow, check_loss_occ):
        res = SuiteResult(fn.__name__)
        for _ in range(5):
            fn(rng, res)
        assert res.max_rel_error < 1e-6, res.failures


def test_loss_2d_fd_on_8x8(rng):
    res = SuiteResult("loss_2d")
    check_loss_2d(rng, res, size=8)
    assert res.max_rel_error < 1e-6


def test_total():
    assert loss_total(1, 2, 3) == 6
    assert loss_total(1, 2, 3, {"2d": 0.0}) == 3
    for bad in (float("nan"), float("inf")):
        with pytest.raises(FloatingPointError):
            loss_total(1, bad, 3)
