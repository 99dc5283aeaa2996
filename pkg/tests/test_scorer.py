import math

import numpy as np
import pytest

from puseg import scorer
from puseg.scorer import (
    FEATURE_DIM,
    GradientBuffer,
    backward,
    extract_features,
    forward,
    init_model,
    load_model,
    param_items,
    save_model,
)
from puseg.seqdata import Frame


def brute_force_window_stats(img, size):
    """Mirror-padded local mean/std, computed pixel by pixel."""
    h, w = img.shape
    pad = size // 2
    padded = np.pad(img, pad, mode="reflect")
    mean = np.empty_like(img)
    std = np.empty_like(img)
    for y in range(h):
        for x in range(w):
            win = padded[y : y + size, x : x + size]
            mean[y, x] = win.mean()
            std[y, x] = win.std()
    return mean, std


class TestFeatures:
    def test_constant_frame(self):
        feats = extract_features(Frame(np.full((6, 6), 0.4)))
        assert feats.shape == (36, FEATURE_DIM)
        assert np.allclose(feats[:, 0], 0.4)
        assert np.allclose(feats[:, 2], 0.0)  # std windows
        assert np.allclose(feats[:, 4], 0.0)
        assert np.allclose(feats[:, 5], 0.0)  # gradient magnitude

    def test_corner_coordinates(self):
        feats = extract_features(Frame(np.zeros((4, 8))))
        assert feats[0, 6] == 0.0 and feats[0, 7] == 0.0
        # last pixel: x = W-1, y = H-1
        assert feats[-1, 6] == pytest.approx(7 / 8)
        assert feats[-1, 7] == pytest.approx(3 / 4)

    def test_ramp_gradient_by_stencil(self):
        # 5x5 horizontal ramp: I(y, x) = 0.1 * x
        img = np.tile(0.1 * np.arange(5.0), (5, 1))
        feats = extract_features(Frame(img))
        center = feats[2 * 5 + 2]
        gx = (img[2, 3] - img[2, 1]) / 2.0
        assert center[5] == pytest.approx(abs(gx), abs=1e-12)

    def test_window_stats_against_brute_force(self):
        rng = np.random.default_rng(0)
        img = rng.random((10, 11))
        feats = extract_features(Frame(img))
        for col, size in ((1, 3), (3, 9)):
            mean, std = brute_force_window_stats(img, size)
            assert np.allclose(feats[:, col], mean.ravel(), atol=1e-10)
            assert np.allclose(feats[:, col + 1], std.ravel(), atol=1e-8)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        img = rng.random((7, 7))
        assert np.array_equal(extract_features(Frame(img)), extract_features(Frame(img)))


class TestForward:
    def test_zero_weights_gives_bias_prob(self):
        model = init_model(0)
        model.w1 *= 0.0
        model.w2 *= 0.0
        model.w3 *= 0.0
        model.b3 = 1.3
        _, probs = forward(model, np.ones((3, FEATURE_DIM)))
        assert np.allclose(probs, 1.0 / (1.0 + math.exp(-1.3)))

    def test_bias_init_matches_target_probability(self):
        model = init_model(4, pi_init=0.01)
        model.w1 *= 0.0
        model.w2 *= 0.0
        model.w3 *= 0.0
        _, probs = forward(model, np.zeros((1, FEATURE_DIM)))
        assert probs[0] == pytest.approx(0.01, abs=1e-12)

    def test_zero_logit_is_half(self):
        model = init_model(0)
        for name in ("w1", "w2", "w3"):
            getattr(model, name)[...] = 0.0
        model.b3 = 0.0
        _, probs = forward(model, np.zeros((1, FEATURE_DIM)))
        assert probs[0] == 0.5

    def test_monotone_in_output_bias(self):
        model = init_model(2)
        x = np.random.default_rng(2).normal(size=(5, FEATURE_DIM))
        _, p1 = forward(model, x)
        model2 = model.copy()
        model2.b3 += 0.5
        _, p2 = forward(model2, x)
        assert np.all(p2 > p1)

    def test_extreme_logits_no_overflow(self):
        model = init_model(0)
        model.w1 *= 0.0
        model.w2 *= 0.0
        model.w3 *= 0.0
        model.b3 = 1e6
        _, probs = forward(model, np.zeros((1, FEATURE_DIM)))
        assert np.isfinite(probs[0]) and probs[0] < 1.0


class TestInit:
    def test_final_bias_closed_form(self):
        model = init_model(0, pi_init=0.01)
        assert model.b3 == pytest.approx(-math.log(99.0), abs=1e-9)
        assert model.b3 == pytest.approx(-4.59512, abs=1e-5)

    def test_symmetric_bias(self):
        assert init_model(0, pi_init=0.5).b3 == pytest.approx(0.0, abs=1e-15)

    def test_same_seed_bit_identical(self):
        a, b = init_model(42), init_model(42)
        for (_, pa), (_, pb) in zip(param_items(a), param_items(b)):
            assert np.array_equal(pa, pb)

    def test_bad_pi_init(self):
        with pytest.raises(ValueError):
            init_model(0, pi_init=1.0)


class TestBackward:
    def test_zero_upstream(self):
        model = init_model(3)
        x = np.random.default_rng(3).normal(size=(4, FEATURE_DIM))
        grads = backward(model, x, np.zeros(4))
        for _, g in param_items(grads):
            assert not np.any(np.asarray(g))

    def test_two_identical_samples_double_gradient(self):
        model = init_model(5)
        rng = np.random.default_rng(5)
        x = rng.normal(size=(1, FEATURE_DIM))
        g1 = backward(model, x, np.array([0.7]))
        g2 = backward(model, np.vstack([x, x]), np.array([0.7, 0.7]))
        for (_, a), (_, b) in zip(param_items(g1), param_items(g2)):
            assert np.allclose(2.0 * np.asarray(a), np.asarray(b), atol=1e-12)

    def test_gradient_check_many_probes(self):
        """Analytic gradients match central differences on >=100 probes."""
        rng = np.random.default_rng(9)
        model = init_model(9)
        x = rng.normal(size=(8, FEATURE_DIM))
        upstream = rng.normal(size=8)
        grads = backward(model, x, upstream)

        def loss(m):
            logits, _ = m
            return float(logits @ upstream)

        def eval_loss(m):
            logits, _ = scorer.forward_cached(m, x)
            return float(logits @ upstream)

        eps = 1e-4
        checked = 0
        names = [n for n, _ in param_items(model)]
        while checked < 120:
            name = names[int(rng.integers(len(names)))]
            arr = getattr(model, name)
            analytic = getattr(grads, name)
            if np.ndim(arr) == 0:
                plus, minus = model.copy(), model.copy()
                plus.b3 += eps
                minus.b3 -= eps
                a = float(analytic)
            else:
                idx = tuple(int(rng.integers(s)) for s in arr.shape)
                plus, minus = model.copy(), model.copy()
                getattr(plus, name)[idx] += eps
                getattr(minus, name)[idx] -= eps
                a = float(np.asarray(analytic)[idx])
            fd = (eval_loss(plus) - eval_loss(minus)) / (2 * eps)
            assert abs(a - fd) / max(1.0, abs(a)) <= 1e-5
            checked += 1


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        model = init_model(11)
        path = tmp_path / "model.npz"
        save_model(model, path)
        loaded = load_model(path)
        for (_, a), (_, b) in zip(param_items(model), param_items(loaded)):
            assert np.array_equal(np.asarray(a), np.asarray(b))

    def test_architecture_header_checked(self, tmp_path):
        path = tmp_path / "bad.npz"
        np.savez(path, arch=np.array([4, 4, 4, 1]), w1=np.zeros((4, 4)))
        with pytest.raises(ValueError):
            load_model(path)
