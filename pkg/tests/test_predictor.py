import math

import numpy as np
import pytest

from conftest import max_rel_err
from mperceiver import tensor as T
from mperceiver.predictor import DegradationProbabilities, PredictorHead, focal_loss, predict
from mperceiver.tensor import Tensor


def rng(seed=0):
    return np.random.default_rng(seed)


def test_fresh_head_outputs_half_everywhere():
    head = PredictorHead(16, 5, rng(0))
    p = predict(head, Tensor(rng(1).standard_normal(16)))
    np.testing.assert_allclose(p.p.data, 0.5, atol=1e-7)


def test_predict_deterministic():
    head = PredictorHead(16, 5, rng(0))
    head.fc2.weight.data[:] = rng(2).standard_normal(head.fc2.weight.shape) * 0.3
    e = Tensor(rng(1).standard_normal(16))
    np.testing.assert_array_equal(predict(head, e).p.data, predict(head, e).p.data)


def test_probabilities_validated():
    with pytest.raises(ValueError, match=r"\[0,1\]"):
        DegradationProbabilities(Tensor([0.5, 1.2]))


def test_focal_perfect_positive_is_zero():
    loss = focal_loss(DegradationProbabilities(Tensor([1.0])), Tensor([1.0]), gamma=2.0, alpha=0.25)
    assert loss.item() == 0.0


def test_focal_zero_iff_exact_match():
    exact = focal_loss(DegradationProbabilities(Tensor([1.0, 0.0])), Tensor([1.0, 0.0]))
    assert exact.item() == 0.0
    off = focal_loss(DegradationProbabilities(Tensor([0.999, 0.0])), Tensor([1.0, 0.0]))
    assert off.item() > 0.0


def test_focal_gamma_zero_is_scaled_bce():
    rv = rng(3)
    p = np.clip(rv.uniform(size=6), 1e-4, 1 - 1e-4)
    t = (rv.uniform(size=6) > 0.5).astype(np.float64)
    got = focal_loss(DegradationProbabilities(Tensor(p)), Tensor(t), gamma=0.0, alpha=0.5).item()
    bce = -np.mean(t * np.log(p) + (1 - t) * np.log(1 - p))
    assert got == pytest.approx(0.5 * bce, rel=1e-5)


def test_focal_hand_evaluated_value():
    got = focal_loss(DegradationProbabilities(Tensor([0.5])), Tensor([1.0]),
                     gamma=2.0, alpha=0.25).item()
    assert got == pytest.approx(0.25 * 0.25 * math.log(2.0), rel=1e-5)


def test_focal_nonnegative_always():
    rv = rng(4)
    for _ in range(50):
        p = rv.uniform(size=4)
        t = (rv.uniform(size=4) > 0.5).astype(np.float64)
        assert focal_loss(DegradationProbabilities(Tensor(p)), Tensor(t)).item() >= 0.0


def test_focal_monotone_in_positive_confidence():
    t = Tensor([1.0])
    prev = math.inf
    for p in (0.1, 0.3, 0.5, 0.7, 0.9, 0.99):
        cur = focal_loss(DegradationProbabilities(Tensor([p])), t).item()
        assert cur < prev
        prev = cur


def test_focal_rejects_nonbinary_targets():
    with pytest.raises(ValueError, match="binary"):
        focal_loss(DegradationProbabilities(Tensor([0.5])), Tensor([0.3]))


def test_focal_gradient_wrt_logits_matches_fd():
    with T.use_dtype(np.float64):
        head = PredictorHead(8, 4, rng(0))
        head.fc2.weight.data[:] = rng(1).standard_normal(head.fc2.weight.shape) * 0.2
        e = Tensor(rng(2).standard_normal(8))
        targets = Tensor(np.array([1.0, 0.0, 1.0, 0.0]))

        logits = head.logits(e)
        probs = T.sigmoid(logits)
        focal_loss(DegradationProbabilities(probs), targets).backward()
        analytic = head.fc2.bias.grad.data

        def f(b):
            old = head.fc2.bias.data
            head.fc2.bias.data = b.data
            try:
                with T.no_grad():
                    pr = T.sigmoid(head.logits(e))
                    return focal_loss(DegradationProbabilities(pr), targets)
            finally:
                head.fc2.bias.data = old

        fd = T.finite_difference_grad(f, head.fc2.bias.detach(), eps=1e-5)
        assert max_rel_err(analytic, fd.data) <= 1e-3
