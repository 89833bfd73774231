import numpy as np
import pytest

from fedarena.errors import LayoutError, NumericError, ShapeError
from fedarena.model import (
    Batch,
    MlpModel,
    ParamVector,
    accuracy,
    flatten,
    forward,
    init_model,
    load_checkpoint,
    loss_and_grads,
    model_layout,
    predict,
    save_checkpoint,
    sgd_step,
    unflatten,
)


def small_model(seed=0, sizes=(3, 5, 4)):
    return init_model(sizes, seed)


def random_batch(model, n=6, seed=1):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, size=(n, model.layer_sizes[0]))
    y = rng.integers(0, model.class_count, size=n)
    return Batch(x, y)


class TestForward:
    def test_zero_weights_give_zero_logits(self):
        m = MlpModel((2, 2), [np.zeros((2, 2))], [np.zeros(2)])
        out = forward(m, np.array([[0.3, 0.7], [0.1, 0.9]]))
        assert np.all(out == 0.0)

    def test_identity_single_layer(self):
        m = MlpModel((2, 2), [np.eye(2)], [np.zeros(2)])
        out = forward(m, np.array([[0.5, 0.25]]))
        np.testing.assert_array_equal(out, [[0.5, 0.25]])

    def test_two_layer_relu_hand_computed(self):
        w0 = np.array([[1.0, -1.0], [0.5, 0.5]])
        b0 = np.array([0.1, -0.2])
        w1 = np.array([[2.0, 1.0], [-1.0, 0.0]])
        b1 = np.array([0.0, 0.3])
        m = MlpModel((2, 2, 2), [w0, w1], [b0, b1])
        x = np.array([[0.4, 0.6]])
        # hand evaluation: z0 = [0.4-0.6+0.1, 0.2+0.3-0.2] = [-0.1, 0.3]
        # relu -> [0, 0.3]; z1 = [2*0+1*0.3, -1*0+0.3] = [0.3, 0.3]
        np.testing.assert_allclose(forward(m, x), [[0.3, 0.3]], atol=1e-15)

    def test_shape_mismatch_raises(self):
        m = small_model()
        with pytest.raises(ShapeError):
            forward(m, np.zeros((2, 7)))

    def test_deterministic(self):
        m = small_model()
        x = np.random.default_rng(3).uniform(0, 1, size=(4, 3))
        np.testing.assert_array_equal(forward(m, x), forward(m, x))


class TestLossAndGrads:
    def test_uniform_logits_loss_is_log_k(self):
        k = 4
        m = MlpModel((3, k), [np.zeros((k, 3))], [np.zeros(k)])
        batch = Batch(np.full((1, 3), 0.5), np.array([2]))
        loss, _, _ = loss_and_grads(m, batch)
        assert loss == pytest.approx(np.log(k), rel=1e-12)

    def test_zero_weight_model_has_zero_input_grads(self):
        m = MlpModel((3, 2), [np.zeros((2, 3))], [np.zeros(2)])
        batch = Batch(np.random.default_rng(0).uniform(0, 1, (5, 3)), np.zeros(5, dtype=int))
        _, _, gx = loss_and_grads(m, batch)
        assert np.all(gx == 0.0)

    def test_empty_batch_raises(self):
        m = small_model()
        with pytest.raises(ValueError):
            loss_and_grads(m, Batch(np.zeros((0, 3)), np.zeros(0, dtype=int)))

    @pytest.mark.parametrize("seed", range(20))
    def test_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        sizes = (3, rng.integers(2, 6), rng.integers(2, 5))
        m = init_model(sizes, seed)
        batch = random_batch(m, n=4, seed=seed + 100)
        loss, pgrads, gx = loss_and_grads(m, batch)

        h = 1e-5

        def loss_at(model, inputs):
            l, _, _ = loss_and_grads(model, Batch(np.clip(inputs, 0, 1), batch.labels))
            return l

        # parameter gradients vs central differences on the flat vector
        pv = flatten(m)
        fd = np.empty_like(pv.values)
        for i in range(pv.values.size):
            vp, vm = pv.values.copy(), pv.values.copy()
            vp[i] += h
            vm[i] -= h
            lp, _, _ = loss_and_grads(unflatten(pv.layout, vp), batch)
            lm, _, _ = loss_and_grads(unflatten(pv.layout, vm), batch)
            fd[i] = (lp - lm) / (2 * h)
        scale = np.maximum(np.abs(fd), 1.0)
        assert np.max(np.abs(fd - pgrads.values) / scale) < 1e-4

        # input gradients
        fdx = np.empty_like(batch.inputs)
        for idx in np.ndindex(batch.inputs.shape):
            xp, xm = batch.inputs.copy(), batch.inputs.copy()
            xp[idx] += h
            xm[idx] -= h
            lp, _, _ = loss_and_grads(m, Batch(xp, batch.labels))
            lm, _, _ = loss_and_grads(m, Batch(xm, batch.labels))
            fdx[idx] = (lp - lm) / (2 * h)
        scale = np.maximum(np.abs(fdx), 1.0)
        assert np.max(np.abs(fdx - gx) / scale) < 1e-4

    def test_softmax_rows_sum_to_one(self):
        from fedarena.backends.pure import _stable_softmax

        rng = np.random.default_rng(7)
        logits = rng.normal(0, 50, size=(30, 6))
        s = _stable_softmax(logits)
        np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)


class TestFlatten:
    def test_round_trip_bit_exact(self):
        m = small_model(seed=4)
        pv = flatten(m)
        m2 = unflatten(pv.layout, pv.values)
        for a, b in zip(m.weights, m2.weights):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(m.biases, m2.biases):
            np.testing.assert_array_equal(a, b)
        assert m2.layer_sizes == m.layer_sizes

    def test_documented_ordering(self):
        m = MlpModel((2, 2), [np.array([[1.0, 2.0], [3.0, 4.0]])], [np.array([5.0, 6.0])])
        np.testing.assert_array_equal(flatten(m).values, [1, 2, 3, 4, 5, 6])

    def test_wrong_length_raises(self):
        m = small_model()
        with pytest.raises(LayoutError):
            unflatten(model_layout(m), np.zeros(3))

    def test_param_vector_validates_length(self):
        m = small_model()
        with pytest.raises(LayoutError):
            ParamVector(np.zeros(2), model_layout(m))


class TestSgdStep:
    def test_zero_lr_unchanged(self):
        m = small_model()
        _, grads, _ = loss_and_grads(m, random_batch(m))
        m2 = sgd_step(m, grads, 0.0)
        np.testing.assert_array_equal(flatten(m).values, flatten(m2).values)

    def test_scalar_arithmetic(self):
        m = MlpModel((1, 1), [np.array([[1.0]])], [np.array([0.0])])
        grads = ParamVector(np.array([2.0, 0.0]), model_layout(m))
        m2 = sgd_step(m, grads, 0.1)
        assert m2.weights[0][0, 0] == pytest.approx(0.8, abs=1e-15)

    def test_nonfinite_grads_raise(self):
        m = small_model()
        bad = ParamVector(np.full(flatten(m).values.size, np.nan), model_layout(m))
        with pytest.raises(NumericError):
            sgd_step(m, bad, 0.1)

    def test_loss_decreases_on_convex_problem(self):
        # single linear layer + cross entropy is convex in the parameters
        m = MlpModel((2, 2), [np.zeros((2, 2))], [np.zeros(2)])
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 1, size=(16, 2))
        y = (x[:, 0] > x[:, 1]).astype(int)
        batch = Batch(x, y)
        losses = []
        for _ in range(50):
            loss, grads, _ = loss_and_grads(m, batch)
            losses.append(loss)
            m = sgd_step(m, grads, 0.1)
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


class TestPredict:
    def test_argmax(self):
        m = MlpModel((2, 2), [np.eye(2)], [np.zeros(2)])
        assert predict(m, np.array([[0.2, 0.9]]))[0] == 1

    def test_tie_breaks_low_index(self):
        m = MlpModel((2, 2), [np.zeros((2, 2))], [np.zeros(2)])
        assert predict(m, np.array([[0.5, 0.5]]))[0] == 0

    def test_accuracy_counting(self):
        m = MlpModel((2, 2), [np.eye(2)], [np.zeros(2)])
        x = np.array([[0.9, 0.1], [0.1, 0.9], [0.8, 0.2], [0.3, 0.7]])
        y = np.array([0, 1, 0, 0])  # last label disagrees with argmax
        assert accuracy(m, Batch(x, y)) == pytest.approx(0.75)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        m = small_model(seed=9)
        path = tmp_path / "m.ckpt"
        save_checkpoint(m, path)
        m2 = load_checkpoint(path)
        np.testing.assert_array_equal(flatten(m).values, flatten(m2).values)
        assert m2.layer_sizes == m.layer_sizes

    def test_header_checked(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_text("not a checkpoint\n")
        from fedarena.errors import FormatError

        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_value_count_checked(self, tmp_path):
        m = small_model()
        path = tmp_path / "m.ckpt"
        save_checkpoint(m, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        from fedarena.errors import FormatError

        with pytest.raises(FormatError):
            load_checkpoint(path)
