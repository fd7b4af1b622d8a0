"""Gradient engine unit tests: exact values where known, finite differences elsewhere."""

import numpy as np
import pytest

from inkline import autodiff as ad
from inkline.autodiff import GradientError, Tensor

from conftest import central_diff, rel_err


def test_square_gradient_is_two_x():
    x = Tensor(np.array(3.0))
    y = ad.mul(x, x)
    y.backward()
    assert x.grad == pytest.approx(6.0)


def test_backward_accumulates_across_calls():
    x = Tensor(np.array(2.0))
    y = ad.mul(x, x)
    y.backward()
    y.backward()
    assert x.grad == pytest.approx(8.0)


def test_backward_collect_does_not_touch_grad():
    x = Tensor(np.array(2.0))
    y = ad.mul(x, x)
    grads = y.backward_collect()
    assert x.grad is None
    assert grads[id(x)] == pytest.approx(4.0)


def test_backward_rejects_nonscalar():
    x = Tensor(np.ones(3))
    with pytest.raises(GradientError):
        x.backward()


def test_shared_subexpression_sums_both_paths():
    x = Tensor(np.array(1.5))
    y = ad.add(ad.mul(x, x), x)  # x^2 + x -> 2x + 1
    y.backward()
    assert x.grad == pytest.approx(4.0)


def test_leaky_relu_slopes():
    x = Tensor(np.array([-2.0, 0.0, 3.0]))
    y = ad.tsum(ad.leaky_relu(x, 0.01))
    y.backward()
    assert np.allclose(x.grad, [0.01, 0.01, 1.0])


def test_detach_blocks_gradient():
    x = Tensor(np.array(2.0))
    y = ad.mul(x.detach(), x)
    y.backward()
    assert x.grad == pytest.approx(2.0)


@pytest.mark.parametrize(
    "build",
    [
        lambda a, b: ad.tsum(ad.mul(a, b)),
        lambda a, b: ad.tsum(ad.add(a, b)),
        lambda a, b: ad.tsum(ad.sub(a, b)),
        lambda a, b: ad.tsum(ad.exp(a)),
        lambda a, b: ad.tsum(ad.log(ad.add(ad.mul(a, a), b))),
        lambda a, b: ad.tsum(ad.tanh(a)),
        lambda a, b: ad.tsum(ad.sigmoid(a)),
        lambda a, b: ad.tsum(ad.sqrt(ad.add(ad.mul(a, a), b))),
        lambda a, b: ad.tsum(ad.mul(ad.reshape(a, (6,)), ad.reshape(b, (6,)))),
        lambda a, b: ad.tsum(ad.logsumexp(ad.mul(a, b), axis=-1)),
        lambda a, b: ad.tsum(ad.mean(ad.mul(a, b), axis=0)),
        lambda a, b: ad.tsum(ad.mul(ad.concat([a, b], axis=0), 0.5)),
    ],
)
def test_elementwise_ops_match_finite_differences(build, rng):
    a_np = rng.normal(size=(2, 3)) + 2.0
    b_np = rng.normal(size=(2, 3)) + 2.0
    a, b = Tensor(a_np), Tensor(b_np)
    build(a, b).backward()
    fd_a, fd_b = central_diff(lambda: build(Tensor(a_np), Tensor(b_np)).item(), [a_np, b_np])
    assert rel_err(a.grad, fd_a) < 1e-7
    if b.grad is not None:
        assert rel_err(b.grad, fd_b) < 1e-7


def test_matmul_matches_triple_loop_and_fd(rng):
    a_np = rng.normal(size=(3, 4))
    b_np = rng.normal(size=(4, 2))
    out = ad.matmul(Tensor(a_np), Tensor(b_np))
    ref = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                ref[i, j] += a_np[i, k] * b_np[k, j]
    assert np.allclose(out.data, ref)

    a, b = Tensor(a_np), Tensor(b_np)
    ad.tsum(ad.matmul(a, b)).backward()
    fd_a, fd_b = central_diff(
        lambda: ad.tsum(ad.matmul(Tensor(a_np), Tensor(b_np))).item(), [a_np, b_np]
    )
    assert rel_err(a.grad, fd_a) < 1e-7
    assert rel_err(b.grad, fd_b) < 1e-7


def test_broadcast_add_unbroadcasts(rng):
    a_np = rng.normal(size=(3, 4))
    b_np = rng.normal(size=(4,))
    a, b = Tensor(a_np), Tensor(b_np)
    ad.tsum(ad.add(a, b)).backward()
    assert a.grad.shape == (3, 4)
    assert b.grad.shape == (4,)
    assert np.allclose(b.grad, 3.0)


def test_getitem_slice_gradient(rng):
    x_np = rng.normal(size=(5, 3))
    x = Tensor(x_np)
    ad.tsum(x[1:4]).backward()
    expect = np.zeros((5, 3))
    expect[1:4] = 1.0
    assert np.allclose(x.grad, expect)


def test_take_rows_scatter_adds_duplicates(rng):
    x = Tensor(rng.normal(size=(4, 2)))
    idx = np.array([1, 1, 3])
    ad.tsum(ad.take_rows(x, idx)).backward()
    expect = np.zeros((4, 2))
    expect[1] = 2.0
    expect[3] = 1.0
    assert np.allclose(x.grad, expect)


def test_flip_rows_roundtrip(rng):
    x = Tensor(rng.normal(size=(4, 2)))
    y = ad.flip_rows(ad.flip_rows(x))
    assert np.allclose(y.data, x.data)
    ad.tsum(ad.mul(ad.flip_rows(x), Tensor(np.arange(8.0).reshape(4, 2)))).backward()
    assert np.allclose(x.grad, np.arange(8.0).reshape(4, 2)[::-1])


def test_row_substitute_masks_source_rows(rng):
    x_np = rng.normal(size=(5, 3))
    row_np = rng.normal(size=(3,))
    x, row = Tensor(x_np), Tensor(row_np)
    idx = np.array([0, 2])
    y = ad.row_substitute(x, idx, row)
    assert np.allclose(y.data[0], row_np)
    assert np.allclose(y.data[1], x_np[1])
    ad.tsum(y).backward()
    assert np.allclose(x.grad[0], 0.0)
    assert np.allclose(x.grad[1], 1.0)
    assert np.allclose(row.grad, 2.0)


def test_logsumexp_is_stable_for_large_inputs():
    x = Tensor(np.array([[1000.0, 1000.0]]))
    y = ad.logsumexp(x, axis=-1)
    assert np.isfinite(y.data).all()
    assert y.data[0] == pytest.approx(1000.0 + np.log(2.0))


def test_transpose_gradient(rng):
    x_np = rng.normal(size=(2, 3))
    w_np = rng.normal(size=(2, 3))
    x = Tensor(x_np)
    ad.tsum(ad.mul(ad.transpose(x), Tensor(w_np.T))).backward()
    assert np.allclose(x.grad, w_np)
