import numpy as np
import pytest

from healconv import healpix as hp
from healconv import patches
from healconv.errors import ContractError, NumericError
from healconv.nn import SGD, Tape, Tensor, functional as F, sgd_step
from healconv.nn.autodiff import active_tape
from healconv.signal import SphericalSignal


def numeric_grad(loss_fn, tensor, coords, h=1e-5):
    """Central finite differences of loss_fn at the given flat coordinates."""
    out = {}
    flat = tensor.data.reshape(-1)
    for i in coords:
        orig = flat[i]
        flat[i] = orig + h
        lp = loss_fn()
        flat[i] = orig - h
        lm = loss_fn()
        flat[i] = orig
        out[i] = (lp - lm) / (2 * h)
    return out


def check_grads(loss_fn, params, rng, n_coords=8, rtol=1e-4):
    """Compare tape gradients against central differences (float64 graphs)."""
    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)
    for p in params:
        assert p.grad is not None, "parameter missed by backward"
        flat_grad = p.grad.reshape(-1)
        coords = rng.choice(p.size, size=min(n_coords, p.size), replace=False)
        fd = numeric_grad(lambda: float(loss_fn().data), p, coords)
        for i, want in fd.items():
            got = flat_grad[i]
            denom = max(abs(want), abs(got), 1e-8)
            assert abs(got - want) / denom <= rtol, (got, want)


class TestTape:
    def test_backward_twice_is_an_error(self, rng):
        x = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        with Tape() as tape:
            loss = F.softmax_xent(x, np.array([0, 1]))
            tape.backward(loss)
            with pytest.raises(ContractError):
                tape.backward(loss)

    def test_detached_loss_rejected(self):
        with Tape() as tape:
            loss = Tensor(np.asarray(1.0))
            with pytest.raises(ContractError):
                tape.backward(loss)

    def test_non_scalar_loss_rejected(self, rng):
        x = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        with Tape() as tape:
            out = F.relu(x)
            with pytest.raises(ContractError):
                tape.backward(out)

    def test_no_recording_outside_tape(self):
        x = Tensor(np.ones((2, 3)), requires_grad=True)
        F.relu(x)
        assert active_tape() is None


class TestElementwise:
    def test_relu_values(self):
        out = F.relu(Tensor(np.array([-1.0, 0.0, 2.0])))
        assert out.data.tolist() == [0.0, 0.0, 2.0]

    def test_relu_grad(self, rng):
        x = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
        w = Tensor(rng.standard_normal((5, 1)), requires_grad=True)

        def loss_fn():
            return F.softmax_xent(F.linear(F.relu(x), w), np.zeros(4, dtype=int))

        check_grads(loss_fn, [x, w], rng)

    def test_add_and_concat_grads(self, rng):
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        w = Tensor(rng.standard_normal((8, 2)), requires_grad=True)

        def loss_fn():
            cat = F.concat([F.add(a, b), b], axis=-1)
            return F.softmax_xent(F.linear(cat, w), np.array([0, 1, 0]))

        check_grads(loss_fn, [a, b, w], rng)


class TestSoftmaxXent:
    def test_uniform_logits(self):
        for k in (2, 5, 10):
            loss = F.softmax_xent(Tensor(np.zeros((7, k))), np.zeros(7, dtype=int))
            assert loss.item() == pytest.approx(np.log(k), abs=1e-6)

    def test_ignore_label(self):
        logits = Tensor(np.array([[10.0, -10.0], [0.0, 0.0]]))
        loss = F.softmax_xent(logits, np.array([0, 255]), ignore_label=255)
        assert loss.item() == pytest.approx(0.0, abs=1e-4)

    def test_all_ignored_rejected(self):
        with pytest.raises(ContractError):
            F.softmax_xent(Tensor(np.zeros((2, 3))), np.array([255, 255]), ignore_label=255)

    def test_grad(self, rng):
        x = Tensor(rng.standard_normal((6, 4)), requires_grad=True)
        labels = rng.integers(0, 4, size=6)

        def loss_fn():
            return F.softmax_xent(x, labels)

        check_grads(loss_fn, [x], rng)


class TestBatchNorm:
    def test_train_statistics(self, rng):
        x = Tensor(rng.standard_normal((64, 10, 3)) * 4.0 + 2.0)
        gamma = Tensor(np.ones(3))
        beta = Tensor(np.zeros(3))
        rm = np.zeros(3)
        rv = np.ones(3)
        out = F.batchnorm(x, gamma, beta, rm, rv, train=True)
        flat = out.data.reshape(-1, 3)
        assert np.abs(flat.mean(axis=0)).max() < 1e-5
        assert np.abs(flat.var(axis=0) - 1.0).max() < 1e-4

    def test_running_stats_update_and_eval(self, rng):
        x = rng.standard_normal((512, 3)) * 2.0 + 1.0
        gamma = Tensor(np.ones(3))
        beta = Tensor(np.zeros(3))
        rm = np.zeros(3)
        rv = np.ones(3)
        for _ in range(200):
            F.batchnorm(Tensor(x), gamma, beta, rm, rv, train=True)
        assert np.abs(rm - x.mean(axis=0)).max() < 1e-6
        out = F.batchnorm(Tensor(x), gamma, beta, rm, rv, train=False)
        assert np.abs(out.data.mean(axis=0)).max() < 1e-5

    def test_empty_batch_rejected(self):
        with pytest.raises(ContractError):
            F.batchnorm(Tensor(np.zeros((0, 3))), Tensor(np.ones(3)),
                        Tensor(np.zeros(3)), np.zeros(3), np.ones(3), train=True)

    def test_grad_train_mode(self, rng):
        x = Tensor(rng.standard_normal((8, 5)), requires_grad=True)
        gamma = Tensor(rng.uniform(0.5, 1.5, 5), requires_grad=True)
        beta = Tensor(rng.standard_normal(5), requires_grad=True)
        labels = rng.integers(0, 5, size=8)
        rm = np.zeros(5)
        rv = np.ones(5)

        def loss_fn():
            return F.softmax_xent(F.batchnorm(x, gamma, beta, rm, rv, train=True), labels)

        check_grads(loss_fn, [x, gamma, beta], rng)


class TestConv2d:
    def test_hand_computed_all_ones(self):
        x = Tensor(np.arange(18, dtype=np.float64).reshape(1, 3, 6, 1))
        w = Tensor(np.ones((3, 3, 1, 1)))
        out = F.conv2d(x, w, stride=(1, 3))
        # windows at columns 0..2 and 3..5: sums computed by hand
        col0 = sum([0, 1, 2, 6, 7, 8, 12, 13, 14])
        col1 = sum([3, 4, 5, 9, 10, 11, 15, 16, 17])
        assert out.data.reshape(-1).tolist() == [col0, col1]

    def test_delta_kernel_extracts_centers(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 9, 4)))
        w = np.zeros((3, 3, 4, 4))
        w[1, 1] = np.eye(4)
        out = F.conv2d(x, Tensor(w), stride=(1, 3))
        assert np.allclose(out.data[:, 0], x.data[:, 1, 1::3, :])

    def test_stm_shape_contract(self, rng):
        x = Tensor(rng.standard_normal((1, 3, 3 * 768, 5)).astype(np.float32))
        w = Tensor(rng.standard_normal((3, 3, 5, 7)).astype(np.float32))
        out = F.conv2d(x, w, stride=(1, 3))
        assert out.shape == (1, 1, 768, 7)

    def test_linearity(self, rng):
        x = rng.standard_normal((1, 3, 12, 2))
        y = rng.standard_normal((1, 3, 12, 2))
        w = Tensor(rng.standard_normal((3, 3, 2, 3)))
        lhs = F.conv2d(Tensor(2.0 * x + 3.0 * y), w, stride=(1, 3)).data
        rhs = 2.0 * F.conv2d(Tensor(x), w, stride=(1, 3)).data + 3.0 * F.conv2d(
            Tensor(y), w, stride=(1, 3)
        ).data
        assert np.abs(lhs - rhs).max() <= 1e-6 * np.abs(rhs).max()

    def test_grad(self, rng):
        x = Tensor(rng.standard_normal((2, 4, 9, 2)), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 3, 2, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal(3), requires_grad=True)
        head = Tensor(rng.standard_normal((18, 3)), requires_grad=True)
        labels = rng.integers(0, 3, size=2)

        def loss_fn():
            out = F.conv2d(x, w, b, stride=(1, 3))
            return F.softmax_xent(F.linear(F.flatten(out), head), labels)

        check_grads(loss_fn, [x, w, b, head], rng)


class TestSphericalOps:
    def test_spherical_conv_matches_patch_tensor_conv2d(self, rng):
        # the fused gather+matmul path and an explicit patch-tensor conv2d
        # are the same computation, bit for bit
        level = 2
        grid = patches.patch_grid(level)
        x = rng.standard_normal((192, 3)).astype(np.float32)
        w = rng.standard_normal((3, 3, 3, 4)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        fused = F.spherical_conv(Tensor(x[None]), Tensor(w), Tensor(b), grid)
        pt = patches.gather(SphericalSignal(level, x), grid)
        explicit = F.conv2d(Tensor(pt.data[None]), Tensor(w), Tensor(b), stride=(1, 3))
        assert np.array_equal(fused.data[0], explicit.data[0, 0])

    def test_spherical_conv_grad(self, rng):
        grid = patches.patch_grid(1)
        x = Tensor(rng.standard_normal((2, 48, 3)), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 3, 3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal(4), requires_grad=True)
        labels = rng.integers(0, 4, size=2)

        def loss_fn():
            return F.softmax_xent(F.global_mean(F.spherical_conv(x, w, b, grid)), labels)

        check_grads(loss_fn, [x, w, b], rng)

    def test_maxpool_grad_routing_is_one_hot(self, rng):
        x = Tensor(rng.standard_normal((2, 48, 3)), requires_grad=True)
        with Tape() as tape:
            out = F.maxpool1x4(x)
            loss = F.softmax_xent(F.global_mean(out), np.array([0, 1]))
            tape.backward(loss)
            upstream = out.grad
        routed = x.grad.reshape(2, 12, 4, 3)
        assert np.array_equal(routed.sum(axis=2), upstream)
        assert ((routed != 0).sum(axis=2) <= 1).all()

    def test_maxpool_grad(self, rng):
        x = Tensor(rng.standard_normal((2, 48, 3)), requires_grad=True)
        labels = np.array([1, 2])

        def loss_fn():
            return F.softmax_xent(F.global_mean(F.maxpool1x4(x)), labels)

        check_grads(loss_fn, [x], rng)

    def test_unpool_grad(self, rng):
        x = Tensor(rng.standard_normal((2, 12, 3)), requires_grad=True)
        w = Tensor(rng.standard_normal((4, 3, 2)), requires_grad=True)
        b = Tensor(rng.standard_normal(2), requires_grad=True)
        labels = np.array([0, 1])

        def loss_fn():
            return F.softmax_xent(F.global_mean(F.spherical_unpool(x, w, b)), labels)

        check_grads(loss_fn, [x, w, b], rng)

    def test_conv1x1_matches_per_row_oracle(self, rng):
        x = rng.standard_normal((3, 20, 4))
        w = rng.standard_normal((4, 6))
        b = rng.standard_normal(6)
        out = F.conv1x1(Tensor(x), Tensor(w), Tensor(b))
        for i in range(3):
            for p in range(20):
                want = x[i, p] @ w + b
                assert np.abs(out.data[i, p] - want).max() < 1e-6

    def test_conv1x1_commutes_with_permutation(self, rng):
        x = rng.standard_normal((1, 48, 4)).astype(np.float32)
        w = Tensor(rng.standard_normal((4, 3)).astype(np.float32))
        perm = hp.z_rotation_permutation(1, 1)
        xp = np.empty_like(x)
        xp[:, perm, :] = x
        lhs = F.conv1x1(Tensor(xp), w).data
        rhs = np.empty_like(lhs)
        rhs[:, perm, :] = F.conv1x1(Tensor(x), w).data
        assert np.array_equal(lhs, rhs)


class TestDeterminism:
    def test_forward_bit_identical(self, rng):
        grid = patches.patch_grid(2)
        x = rng.standard_normal((2, 192, 3)).astype(np.float32)
        w = rng.standard_normal((3, 3, 3, 8)).astype(np.float32)
        a = F.spherical_conv(Tensor(x), Tensor(w), None, grid).data
        b = F.spherical_conv(Tensor(x), Tensor(w), None, grid).data
        assert np.array_equal(a, b)


class TestSGD:
    def test_zero_lr_keeps_params(self):
        p = np.array([1.0, 2.0])
        sgd_step([p], [np.array([5.0, -3.0])], lr=0.0)
        assert p.tolist() == [1.0, 2.0]

    def test_single_quadratic_step(self):
        w = np.array([1.0])
        sgd_step([w], [w.copy()], lr=0.1)  # f(w) = w^2/2, grad = w
        assert w[0] == pytest.approx(0.9)

    def test_converges_on_2d_quadratic(self):
        # f(x) = 0.5 * x^T diag(1, 10) x, optimum at 0; heavy-ball contraction
        # sqrt(momentum) per step puts 200 steps well below 1e-6
        w = np.array([1.0, 1.0])
        scale = np.array([1.0, 10.0])
        vel = None
        for _ in range(200):
            vel = sgd_step([w], [scale * w], lr=0.12, momentum=0.8, velocities=vel)
        assert np.abs(w).max() < 1e-6

    def test_nonfinite_gradient_rejected(self):
        with pytest.raises(NumericError):
            sgd_step([np.ones(2)], [np.array([np.nan, 0.0])], lr=0.1)

    def test_sgd_class_steps_and_zeroes(self, rng):
        p = Tensor(np.ones(3), requires_grad=True)
        opt = SGD([p], lr=0.5, momentum=0.0)
        p.grad = np.ones(3)
        opt.step()
        assert np.allclose(p.data, 0.5)
        opt.zero_grad()
        assert p.grad is None
