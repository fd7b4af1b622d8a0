"""Label-sequence likelihood against an exhaustive path-enumeration oracle."""

import itertools

import numpy as np
import pytest

from inkline.autodiff import Tensor
from inkline.ctc import CtcInstance, ctc_loss, ctc_nll, min_frames
from inkline.exceptions import ValidationError

from conftest import central_diff, rel_err


def collapse(path, blank=0):
    out = []
    prev = None
    for s in path:
        if s != prev:
            prev = s
            if s != blank:
                out.append(s)
    return tuple(out)


def brute_force_nll(logits: np.ndarray, label, blank=0) -> float:
    """Sum the probability of every frame path that collapses to the label."""
    t_frames, n_symbols = logits.shape
    logp = logits - np.logaddexp.reduce(logits, axis=1, keepdims=True)
    total = -np.inf
    for path in itertools.product(range(n_symbols), repeat=t_frames):
        if collapse(path, blank) == tuple(label):
            total = np.logaddexp(total, sum(logp[t, s] for t, s in enumerate(path)))
    return -total


class TestForward:
    def test_uniform_two_frame_single_symbol(self):
        # Two frames, two symbols, all paths equally likely. Three of the
        # four paths collapse to the label, so the loss is -ln(3/4).
        logits = Tensor(np.zeros((2, 2)))
        loss = ctc_nll(logits, (1,)).item()
        assert loss == pytest.approx(-np.log(3 / 4), abs=1e-12)

    def test_single_path_when_frames_equal_labels(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 4))
        label = (1, 2, 3)
        logp = x - np.logaddexp.reduce(x, axis=1, keepdims=True)
        want = -(logp[0, 1] + logp[1, 2] + logp[2, 3])
        assert ctc_nll(Tensor(x), label).item() == pytest.approx(want, abs=1e-12)

    def test_repeat_needs_separator(self):
        # (1, 1) in three frames admits exactly the path 1,blank,1.
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 3))
        logp = x - np.logaddexp.reduce(x, axis=1, keepdims=True)
        want = -(logp[0, 1] + logp[1, 0] + logp[2, 1])
        assert ctc_nll(Tensor(x), (1, 1)).item() == pytest.approx(want, abs=1e-12)

    def test_matches_enumeration(self, rng):
        for trial in range(120):
            t_frames = int(rng.integers(1, 6))
            n_symbols = int(rng.integers(2, 4))
            u = int(rng.integers(1, 4))
            label = tuple(int(s) for s in rng.integers(1, n_symbols, size=u))
            x = rng.normal(size=(t_frames, n_symbols)) * 2.0
            want = brute_force_nll(x, label)
            got = ctc_nll(Tensor(x), label).item()
            if np.isinf(want):
                assert np.isinf(got)
            else:
                assert rel_err(np.array([got]), np.array([want])) < 1e-10

    def test_probability_bounded(self, rng):
        for _ in range(40):
            x = rng.normal(size=(6, 4)) * 3
            loss = ctc_nll(Tensor(x), (1, 2)).item()
            p = np.exp(-loss)
            assert 0.0 < p <= 1.0

    def test_infeasible_label_is_inf_with_warning(self, caplog):
        with caplog.at_level("WARNING"):
            loss = ctc_nll(Tensor(np.zeros((2, 2))), (1, 1))
        assert np.isinf(loss.item())
        assert "needs at least 3 frames" in caplog.text
        # No gradient path: the node has no parents to visit.
        assert loss._parents == ()

    def test_min_frames(self):
        assert min_frames((1, 2, 3)) == 3
        assert min_frames((1, 1)) == 3
        assert min_frames((2, 2, 2)) == 5
        assert min_frames((1, 2, 2, 1)) == 5


class TestValidation:
    def test_empty_label_rejected(self):
        with pytest.raises(ValidationError, match="empty"):
            ctc_nll(Tensor(np.zeros((3, 2))), ())

    def test_blank_in_label_rejected(self):
        with pytest.raises(ValidationError, match="blank"):
            ctc_nll(Tensor(np.zeros((3, 2))), (0,))

    def test_out_of_range_symbol_rejected(self):
        with pytest.raises(ValidationError, match="outside vocabulary"):
            ctc_nll(Tensor(np.zeros((3, 2))), (2,))


class TestGradient:
    def test_matches_central_differences(self, rng):
        for label in [(1,), (1, 2), (2, 1, 2), (1, 1)]:
            x = rng.normal(size=(5, 3))
            logits = Tensor(x.copy())
            ctc_nll(logits, label).backward()
            analytic = logits.grad.copy()

            numeric = central_diff(
                lambda: ctc_nll(Tensor(x.copy()), label).item(), [x]
            )[0]
            assert rel_err(analytic, numeric) < 1e-6

    def test_gradient_rows_sum_to_zero_for_full_occupancy(self, rng):
        # Softmax minus an occupancy distribution: each frame's gradient row
        # sums to softmax mass 1 minus occupancy mass 1, i.e. zero.
        x = rng.normal(size=(6, 4))
        logits = Tensor(x)
        ctc_nll(logits, (1, 2, 3)).backward()
        assert np.abs(logits.grad.sum(axis=1)).max() < 1e-12

    def test_ctc_loss_wrapper(self):
        inst = CtcInstance(Tensor(np.zeros((2, 2))), (1,))
        assert ctc_loss(inst) == pytest.approx(-np.log(0.75), abs=1e-12)
