import math

import numpy as np
import pytest

from amodalkit.composition import (
    CompositionWeights,
    LossTerms,
    TrainConfig,
    TrainingError,
    add_baseline,
    batch_grad,
    batch_loss,
    bce_loss,
    bce_loss_grad,
    cross_entropy,
    forward,
    orcnn_occluded_baseline,
    predict_amodal,
    smooth_l1,
    total_loss,
    train,
    weights_from_json,
    weights_to_json,
)
from amodalkit.heads import NoiseModel, corrupt
from amodalkit.masks import subtract
from amodalkit.scenes import SceneConfig, sample_scenes

from conftest import benchmark_prior, make_record, random_record, single_instance_scene


def random_stacks(rng, n, h, w):
    return rng.normal(size=(n, h, w)), rng.normal(size=(n, h, w))


def brute_forward(w, vm, om):
    n, h, w_ = vm.shape
    out = np.zeros((n, h, w_))
    for t in range(n):
        for y in range(h):
            for x in range(w_):
                acc = w.bias[t]
                for i in range(n):
                    acc += w.vw[t, i] * vm[i, y, x] + w.ow[t, i] * om[i, y, x]
                out[t, y, x] = acc
    return out


class TestForward:
    def test_zero_weights_zero_output(self, rng):
        vm, om = random_stacks(rng, 3, 4, 5)
        out = forward(CompositionWeights.zeros(3), vm, om)
        assert not out.any()

    def test_identity_is_plain_addition(self, rng):
        vm, om = random_stacks(rng, 3, 4, 5)
        out = forward(CompositionWeights.identity(3), vm, om)
        assert np.array_equal(out, vm + om)

    def test_hand_computed_single_pixel(self):
        w = CompositionWeights(
            vw=[[1.0, 2.0], [0.0, 1.0]],
            ow=[[0.5, 0.0], [0.0, -1.0]],
            bias=[0.1, 0.0],
        )
        vm = np.array([1.0, -1.0]).reshape(2, 1, 1)
        om = np.array([2.0, 0.5]).reshape(2, 1, 1)
        out = forward(w, vm, om)
        assert out[0, 0, 0] == pytest.approx(0.1, abs=1e-12)
        assert out[1, 0, 0] == pytest.approx(-1.5, abs=1e-12)

    def test_matches_scalar_brute_force(self, rng):
        w = CompositionWeights(
            rng.normal(size=(3, 3)), rng.normal(size=(3, 3)), rng.normal(size=3)
        )
        vm, om = random_stacks(rng, 3, 4, 3)
        assert np.allclose(forward(w, vm, om), brute_forward(w, vm, om), rtol=1e-12, atol=1e-12)

    def test_linearity_without_bias(self, rng):
        w = CompositionWeights(rng.normal(size=(2, 2)), rng.normal(size=(2, 2)), np.zeros(2))
        a, c = random_stacks(rng, 2, 3, 3)
        b, d = random_stacks(rng, 2, 3, 3)
        al, be = 1.7, -0.4
        lhs = forward(w, al * a + be * b, al * c + be * d)
        rhs = al * forward(w, a, c) + be * forward(w, b, d)
        assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9)

    def test_shape_errors(self, rng):
        w = CompositionWeights.identity(2)
        vm, om = random_stacks(rng, 2, 3, 3)
        with pytest.raises(ValueError, match="shape"):
            forward(w, vm, om[:, :2, :])
        with pytest.raises(ValueError, match="stacks"):
            forward(w, vm[:1], om[:1])


class TestPredictions:
    def test_identity_reduction_bit_for_bit(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 5))
            vm, om = random_stacks(rng, n, 8, 8)
            c = int(rng.integers(n))
            w = CompositionWeights.identity(n)
            assert np.array_equal(predict_amodal(w, vm, om, c), add_baseline(vm, om, c))

    def test_all_zero_weights_all_on_at_half(self, rng):
        vm, om = random_stacks(rng, 2, 4, 4)
        assert predict_amodal(CompositionWeights.zeros(2), vm, om, 0, 0.5).all()

    def test_exact_stacks_recover_amodal(self, rng):
        noise = NoiseModel.exact(seed=8)
        for draw in range(10):
            r = random_record(rng, 10, 10, category=1)
            vm, om = corrupt(r, noise, 3, draw)
            got = predict_amodal(CompositionWeights.identity(3), vm, om, 1)
            assert np.array_equal(got, r.amodal)
            assert np.array_equal(add_baseline(vm, om, 1), r.amodal)

    def test_orcnn_subtract_baseline(self, rng):
        r = random_record(rng, 9, 9)
        assert not orcnn_occluded_baseline(r.visible, r.visible).any()
        assert np.array_equal(orcnn_occluded_baseline(r.amodal, r.visible), r.occluded)
        # visible overflowing the amodal prediction is simply clipped away
        overflow = r.visible.copy()
        extra = ~r.amodal
        overflow |= extra
        got = orcnn_occluded_baseline(r.amodal, overflow)
        assert np.array_equal(got, subtract(r.amodal, overflow))
        assert not (got & extra).any()


class TestLossPrimitives:
    def test_bce_zero_logits_is_ln2(self, rng):
        logits = np.zeros((6, 6))
        target = rng.random((6, 6)) < 0.5
        assert bce_loss(logits, target) == pytest.approx(math.log(2), abs=1e-12)

    def test_bce_saturated_is_tiny(self, rng):
        target = rng.random((8, 8)) < 0.4
        logits = np.where(target, 50.0, -50.0)
        assert 0.0 <= bce_loss(logits, target) <= 1e-9

    def test_bce_single_pixel_value(self):
        got = bce_loss(np.array([[1.0]]), np.array([[1.0]]))
        assert got == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-12)
        assert got == pytest.approx(0.31326, abs=1e-5)

    def test_bce_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            bce_loss(np.array([[np.inf]]), np.array([[1.0]]))

    def test_bce_grad_matches_finite_differences(self, rng):
        x = rng.normal(size=(4, 3))
        t = (rng.random((4, 3)) < 0.5).astype(float)
        g = bce_loss_grad(x, t)
        h = 1e-6
        for idx in np.ndindex(x.shape):
            xp = x.copy()
            xp[idx] += h
            xm = x.copy()
            xm[idx] -= h
            fd = (bce_loss(xp, t) - bce_loss(xm, t)) / (2 * h)
            assert g[idx] == pytest.approx(fd, abs=1e-8)

    def test_smooth_l1(self):
        x = np.array([0.3, -1.2, 4.0])
        assert smooth_l1(x, x) == 0.0
        assert smooth_l1([2.0], [0.0]) == pytest.approx(1.5, abs=1e-12)
        assert smooth_l1([0.5], [0.0]) == pytest.approx(0.125, abs=1e-12)
        with pytest.raises(ValueError, match="shape"):
            smooth_l1([1.0, 2.0], [1.0])

    def test_cross_entropy(self):
        assert cross_entropy(np.zeros(5), 2) == pytest.approx(math.log(5), abs=1e-12)
        logits = np.array([1.0, 3.0, -2.0])
        assert cross_entropy(logits + 10.0, 1) == pytest.approx(
            cross_entropy(logits, 1), abs=1e-9
        )
        with pytest.raises(ValueError, match="class index"):
            cross_entropy(logits, 3)

    def test_total_loss(self):
        assert total_loss(LossTerms(0, 0, 0, 0, 0)) == 0.0
        assert total_loss(LossTerms(1, 1, 1, 1, 1)) == 5.0
        assert total_loss(
            LossTerms(l_am=0.1, l_vm=0.05, l_om=0.15, l_box=0.2, l_cls=0.3)
        ) == pytest.approx(0.8, abs=1e-12)
        with pytest.raises(ValueError):
            LossTerms(-0.1, 0, 0, 0, 0)


def make_batch(rng, n, h, w, size):
    batch = []
    for _ in range(size):
        cat = int(rng.integers(n))
        r = random_record(rng, h, w, category=cat)
        vm = rng.normal(size=(n, h, w))
        om = rng.normal(size=(n, h, w))
        batch.append((vm, om, r))
    return batch


class TestGradient:
    def test_single_pixel_closed_form(self):
        r = make_record(np.ones((1, 1), dtype=bool), np.zeros((1, 1), dtype=bool))
        vm = np.array([[[0.7]]])
        om = np.array([[[-0.3]]])
        w = CompositionWeights(np.array([[0.4]]), np.array([[-0.2]]), np.array([0.1]))
        out = 0.4 * 0.7 + (-0.2) * (-0.3) + 0.1
        sig = 1.0 / (1.0 + math.exp(-out))
        gvw, gow, gbias = batch_grad(w, [(vm, om, r)])
        assert gvw[0, 0] == pytest.approx((sig - 1.0) * 0.7, abs=1e-12)
        assert gow[0, 0] == pytest.approx((sig - 1.0) * (-0.3), abs=1e-12)
        assert gbias[0] == pytest.approx(sig - 1.0, abs=1e-12)

    def test_matches_central_finite_differences(self, rng):
        h = 1e-4
        for _ in range(4):
            n = int(rng.integers(1, 4))
            batch = make_batch(rng, n, 5, 4, size=3)
            w = CompositionWeights(
                rng.normal(scale=0.5, size=(n, n)),
                rng.normal(scale=0.5, size=(n, n)),
                rng.normal(scale=0.5, size=n),
            )
            gvw, gow, gbias = batch_grad(w, batch)
            analytic = np.concatenate([gvw.ravel(), gow.ravel(), gbias])
            flat = np.concatenate([w.vw.ravel(), w.ow.ravel(), w.bias])

            def loss_at(vec):
                k = n * n
                wp = CompositionWeights(
                    vec[:k].reshape(n, n), vec[k : 2 * k].reshape(n, n), vec[2 * k :]
                )
                return batch_loss(wp, batch)

            for idx in rng.choice(flat.size, size=min(20, flat.size), replace=False):
                vp = flat.copy()
                vp[idx] += h
                vn = flat.copy()
                vn[idx] -= h
                fd = (loss_at(vp) - loss_at(vn)) / (2 * h)
                denom = max(abs(fd), abs(analytic[idx]), 1e-8)
                assert abs(analytic[idx] - fd) / denom < 1e-4

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            batch_grad(CompositionWeights.identity(2), [])
        with pytest.raises(ValueError, match="non-empty"):
            batch_loss(CompositionWeights.identity(2), [])


def tiny_dataset(seed=15, count=20):
    prior = benchmark_prior(sizes=(10, 20))
    cfg = SceneConfig(width=32, height=32, instances_per_scene=(2, 3), seed=seed)
    return sample_scenes(prior, cfg, 0, count)


class TestTrain:
    def test_noiseless_converges(self):
        data = tiny_dataset()
        noise = NoiseModel.exact(seed=2, logit_scale=2.0)
        cfg = TrainConfig(learning_rate=2.0, iterations=3000, batch_size=16, seed=1)
        _, trace = train(data, 4, noise, cfg)
        assert trace[-1] <= trace[0]
        assert trace[-1] < 0.01

    def test_zero_learning_rate_keeps_init(self):
        data = tiny_dataset(count=4)
        noise = NoiseModel.exact(seed=2)
        cfg = TrainConfig(learning_rate=0.0, iterations=5, batch_size=4, seed=1)
        w, _ = train(data, 4, noise, cfg)
        ident = CompositionWeights.identity(4)
        assert np.array_equal(w.vw, ident.vw)
        assert np.array_equal(w.ow, ident.ow)
        assert np.array_equal(w.bias, ident.bias)

    def test_deterministic_given_seeds(self):
        data = tiny_dataset(count=6)
        noise = NoiseModel(flip_prob=0.1, boundary_jitter=1, logit_scale=1.0, seed=4)
        cfg = TrainConfig(learning_rate=1.0, iterations=40, batch_size=8, seed=9)
        w1, t1 = train(data, 4, noise, cfg)
        w2, t2 = train(data, 4, noise, cfg)
        assert np.array_equal(t1, t2)
        assert np.array_equal(w1.vw, w2.vw)
        assert np.array_equal(w1.ow, w2.ow)
        assert np.array_equal(w1.bias, w2.bias)

    def test_divergence_reports_iteration(self):
        data = tiny_dataset(count=4)
        noise = NoiseModel.exact(seed=2)
        cfg = TrainConfig(learning_rate=1e308, iterations=10, batch_size=4, seed=1)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrainingError, match="iteration"):
                train(data, 4, noise, cfg)

    def test_moving_average_non_increasing_on_fixed_batch(self, rng):
        # one instance and exact logits: every batch is identical, so this
        # is plain full-batch gradient descent on a convex loss
        r = random_record(rng, 16, 16, category=0, p_vis=0.35, p_occ=0.2)
        scene = single_instance_scene(r)
        noise = NoiseModel.exact(seed=0, logit_scale=2.0)
        cfg = TrainConfig(learning_rate=0.3, iterations=800, batch_size=4, seed=3)
        _, trace = train([scene], 1, noise, cfg)
        window = 100
        ma = np.convolve(trace, np.ones(window) / window, mode="valid")
        assert np.all(np.diff(ma) <= 1e-6)

    def test_gradient_vanishes_at_convergence(self, rng):
        # separable noiseless batch: long full-batch descent drives the
        # gradient below 1e-6
        from amodalkit.heads import corrupt_in_scene

        r = random_record(rng, 16, 16, category=0, p_vis=0.35, p_occ=0.2)
        scene = single_instance_scene(r)
        noise = NoiseModel.exact(seed=0, logit_scale=2.0)
        cfg = TrainConfig(learning_rate=20.0, iterations=20000, batch_size=4, seed=3)
        w, _ = train([scene], 1, noise, cfg)
        vm, om = corrupt_in_scene(scene, 0, noise, 1, 0)
        gvw, gow, gbias = batch_grad(w, [(vm, om, r)])
        gnorm = max(np.abs(gvw).max(), np.abs(gow).max(), np.abs(gbias).max())
        assert gnorm < 1e-6

    def test_random_init_and_modes(self):
        data = tiny_dataset(count=4)
        noise = NoiseModel.exact(seed=2)
        for init in ("identity", "zero", "random"):
            cfg = TrainConfig(
                learning_rate=0.1, iterations=2, batch_size=2, seed=7, init=init
            )
            w, _ = train(data, 4, noise, cfg)
            assert w.n == 4
        with pytest.raises(ValueError, match="init"):
            TrainConfig(learning_rate=0.1, iterations=1, batch_size=1, seed=0, init="xavier")


class TestWeightsSerialization:
    def test_roundtrip(self, rng):
        w = CompositionWeights(
            rng.normal(size=(3, 3)), rng.normal(size=(3, 3)), rng.normal(size=3)
        )
        obj = weights_to_json(w, ["a", "b", "c"])
        assert obj["n"] == 3 and obj["categories"] == ["a", "b", "c"]
        w2 = weights_from_json(obj)
        assert np.allclose(w2.vw, w.vw, rtol=1e-8)
        assert np.allclose(w2.ow, w.ow, rtol=1e-8)
        assert np.allclose(w2.bias, w.bias, rtol=1e-8)

    def test_n_mismatch_rejected(self):
        obj = weights_to_json(CompositionWeights.identity(2), ["a", "b"])
        obj["n"] = 3
        with pytest.raises(ValueError, match="n="):
            weights_from_json(obj)
