import numpy as np
import pytest
from gradcheck import max_relative_error

from evforecast import neuralnet as nn
from evforecast.embedding import WindowDataset
from evforecast.generators import gen_sine
from evforecast.series import apply_scaler, fit_scaler, split
from evforecast.embedding import embed


def make_dataset(x, y):
    return WindowDataset(np.asarray(x, float), np.asarray(y, float),
                         np.arange(len(x)))


class TestForward:
    def test_identity_dense(self):
        layer = nn.DenseLayer(3, 3, "linear", name="id")
        layer.W[...] = np.eye(3)
        layer.b[...] = 0.0
        x = np.random.default_rng(0).normal(size=(4, 3))
        assert np.array_equal(layer.forward(x), x)

    def test_two_layer_composition(self):
        rng = np.random.default_rng(1)
        l1 = nn.DenseLayer(4, 5, "tanh", rng=rng)
        l2 = nn.DenseLayer(5, 2, "sigmoid", rng=rng)
        net = nn.Network([l1, l2])
        x = rng.normal(size=(6, 4))
        assert np.array_equal(net.forward(x), l2.forward(l1.forward(x)))

    def test_zero_lstm_outputs_zero(self):
        layer = nn.LSTMLayer(1, 6, "tanh", True, name="z")
        for p in layer.params():
            p[...] = 0.0
        out = layer.forward(np.random.default_rng(2).normal(size=(3, 7)))
        assert np.all(out == 0.0)

    def test_zero_lstm_relu_activation(self):
        layer = nn.LSTMLayer(1, 4, "relu", False)
        for p in layer.params():
            p[...] = 0.0
        assert np.all(layer.forward(np.ones((2, 5))) == 0.0)

    def test_shape_error_names_layer(self):
        layer = nn.DenseLayer(3, 2, name="third")
        with pytest.raises(nn.ShapeError, match="third"):
            layer.forward(np.zeros((4, 5)))

    def test_lstm_shape_error(self):
        layer = nn.LSTMLayer(2, 4, name="seq")
        with pytest.raises(nn.ShapeError, match="seq"):
            layer.forward(np.zeros((4, 5)))  # 2d only allowed when n_in == 1

    def test_nonfinite_reports_layer(self):
        layer = nn.DenseLayer(2, 2, name="broken")
        layer.W[...] = np.inf
        net = nn.Network([layer])
        with pytest.raises(nn.TrainingDiverged, match="broken"):
            net.forward(np.ones((1, 2)))


class TestBidirectional:
    def test_palindrome_symmetry(self):
        rng = np.random.default_rng(3)
        bi = nn.BidirectionalLSTM.create(1, 4, "tanh", True, rng)
        for pf, pb in zip(bi.fwd.params(), bi.bwd.params()):
            pb[...] = pf
        seq = np.array([[0.1, 0.7, -0.3, 0.7, 0.1], [0.5, 0.2, 0.9, 0.2, 0.5]])
        out = bi.forward(seq)
        fwd_half, bwd_half = out[:, :, :4], out[:, :, 4:]
        assert np.allclose(fwd_half, bwd_half[:, ::-1], atol=1e-12)

    def test_zero_parameters_zero_output(self):
        bi = nn.BidirectionalLSTM.create(1, 3, "relu", False)
        for p in bi.params():
            p[...] = 0.0
        assert np.all(bi.forward(np.ones((2, 6))) == 0.0)

    def test_summary_output_is_direction_final_states(self):
        rng = np.random.default_rng(4)
        bi = nn.BidirectionalLSTM.create(1, 3, "tanh", False, rng)
        seq = rng.normal(size=(2, 5))
        out = bi.forward(seq)
        seq_out = nn.bidirectional_forward(bi.fwd, bi.bwd, seq)
        assert np.allclose(out[:, :3], seq_out[:, -1, :3])
        assert np.allclose(out[:, 3:], seq_out[:, 0, 3:])

    def test_gradient_check(self):
        rng = np.random.default_rng(5)
        net = nn.Network([
            nn.BidirectionalLSTM.create(1, 3, "tanh", False, rng),
            nn.DenseLayer(6, 2, rng=rng),
        ])
        x = rng.normal(size=(3, 5))
        t = rng.normal(size=(3, 2))
        assert max_relative_error(net, x, t) <= 1e-4


class TestBackward:
    def test_hand_derivative_scalar_linear(self):
        layer = nn.DenseLayer(1, 1, "linear", name="w")
        w = 0.7
        layer.W[...] = w
        layer.b[...] = 0.0
        x, t = 1.3, 2.0
        pred = layer.forward(np.array([[x]]))
        _, grad = nn.mse_loss(pred, np.array([[t]]))
        layer.gW[...] = 0.0
        layer.gb[...] = 0.0
        layer.backward(grad)
        assert layer.gW[0, 0] == pytest.approx(2 * (w * x - t) * x, rel=1e-12)

    def test_zero_loss_gradient_zero_param_grads(self):
        rng = np.random.default_rng(6)
        net = nn.Network([nn.LSTMLayer(1, 4, "tanh", False, rng), nn.DenseLayer(4, 2, rng=rng)])
        net.forward(rng.normal(size=(3, 5)))
        net.zero_grads()
        net.backward(np.zeros((3, 2)))
        assert all(np.all(g == 0.0) for g in net.grads())

    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    def test_lstm_gradient_check(self, activation):
        rng = np.random.default_rng(7)
        net = nn.Network([
            nn.LSTMLayer(1, 4, activation, False, rng),
            nn.DenseLayer(4, 2, rng=rng),
        ])
        x = rng.normal(size=(3, 6))
        t = rng.normal(size=(3, 2))
        assert max_relative_error(net, x, t) <= 1e-4

    def test_dense_gradient_check_all_activations(self):
        rng = np.random.default_rng(8)
        for act in nn.ACTIVATIONS:
            net = nn.Network([nn.DenseLayer(4, 3, act, rng=rng), nn.DenseLayer(3, 2, rng=rng)])
            x = rng.normal(size=(5, 4))
            t = rng.normal(size=(5, 2))
            assert max_relative_error(net, x, t) <= 1e-4, act

    def test_backward_before_forward_is_error(self):
        layer = nn.DenseLayer(2, 2, name="fresh")
        with pytest.raises(RuntimeError, match="before forward"):
            layer.backward(np.zeros((1, 2)))


class TestAdam:
    def test_first_step_bias_correction_cancels(self):
        theta = [np.array([0.0])]
        state = nn.AdamState.for_params(theta, lr=1e-3)
        nn.adam_step(theta, [np.array([1.0])], state)
        assert theta[0][0] == pytest.approx(-1e-3 / (1.0 + 1e-8), rel=1e-12)

    def test_zero_gradient_leaves_params(self):
        theta = [np.array([0.4, -0.2])]
        state = nn.AdamState.for_params(theta)
        for _ in range(50):
            nn.adam_step(theta, [np.zeros(2)], state)
        assert theta[0].tolist() == [0.4, -0.2]

    def test_quadratic_descent(self):
        theta = [np.array([1.0])]
        state = nn.AdamState.for_params(theta, lr=0.02)
        for _ in range(100):
            nn.adam_step(theta, [2.0 * theta[0]], state)
        assert abs(theta[0][0]) < 0.5

    def test_nonfinite_gradient_rejected(self):
        theta = [np.array([1.0])]
        state = nn.AdamState.for_params(theta)
        with pytest.raises(nn.TrainingDiverged):
            nn.adam_step(theta, [np.array([np.nan])], state)


class TestTrain:
    def test_constant_target_converges(self):
        rng = np.random.default_rng(9)
        ds = make_dataset(rng.uniform(0, 1, (64, 4)), np.full((64, 3), 0.5))
        net = nn.Network([nn.DenseLayer(4, 3, "linear", rng=rng)])
        history = nn.train(net, ds, nn.TrainConfig(epochs=200, batch_size=16, lr=0.01, seed=1))
        assert len(history) == 200
        assert history[-1] < 1e-4

    def test_fixed_seed_reproduces_history(self):
        rng_data = np.random.default_rng(10)
        ds = make_dataset(rng_data.normal(size=(40, 5)), rng_data.normal(size=(40, 2)))
        cfg = nn.TrainConfig(epochs=5, batch_size=8, lr=1e-3, seed=77)
        histories = []
        for _ in range(2):
            net = nn.build_lstm_forecaster(5, 2, hidden=6, rng=np.random.default_rng(42))
            histories.append(nn.train(net, ds, cfg))
        assert histories[0] == histories[1]

    def test_beats_persistence_on_sine(self):
        ts = gen_sine(300, 40.0, 1.0, 0.0)
        scaled = apply_scaler(fit_scaler(ts), ts)
        train_ts, test_ts = split(scaled, 0.7)
        wtr = embed(train_ts, 5, 5)
        wte = embed(test_ts, 5, 5)
        net = nn.Network([nn.DenseLayer(5, 5, "linear", rng=np.random.default_rng(0))])
        nn.train(net, wtr, nn.TrainConfig(epochs=300, batch_size=32, lr=0.01, seed=0))
        pred = nn.predict(net, wte.X)
        rmse_net = np.sqrt(np.mean((pred - wte.Y) ** 2))
        persistence = np.repeat(wte.X[:, -1:], 5, axis=1)
        rmse_persist = np.sqrt(np.mean((persistence - wte.Y) ** 2))
        assert rmse_net < rmse_persist

    def test_divergence_aborts_with_diagnostic(self):
        rng = np.random.default_rng(11)
        ds = make_dataset(rng.normal(size=(16, 3)) * 1e3, rng.normal(size=(16, 2)))
        net = nn.Network([nn.DenseLayer(3, 2, "linear", rng=rng)], name="div")
        net.layers[0].W[...] = 1e200
        with np.errstate(over="ignore"), pytest.raises(nn.TrainingDiverged):
            nn.train(net, ds, nn.TrainConfig(epochs=2, batch_size=8, lr=1.0,
                                             seed=0, clip_norm=None))

    def test_loss_trend_on_sine(self):
        # no per-epoch monotonicity (stochastic batches); last tenth beats first tenth
        ts = gen_sine(200, 25.0, 1.0, 0.05, seed=4)
        scaled = apply_scaler(fit_scaler(ts), ts)
        ds = embed(scaled, 5, 2)
        net = nn.build_lstm_forecaster(5, 2, hidden=8, rng=np.random.default_rng(1))
        history = nn.train(net, ds, nn.TrainConfig(epochs=50, batch_size=16, lr=5e-3, seed=2))
        assert np.mean(history[-5:]) <= np.mean(history[:5])


class TestPredict:
    def test_horizon_length(self):
        net = nn.build_lstm_forecaster(5, 5, hidden=4, rng=np.random.default_rng(0))
        out = nn.predict(net, np.zeros(5))
        assert out.shape == (5,)

    def test_identity_affine_map(self):
        net = nn.Network([nn.DenseLayer(3, 2, "linear")])
        net.layers[0].W[...] = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
        net.layers[0].b[...] = [0.5, -0.5]
        out = nn.predict(net, np.array([1.0, 2.0, 3.0]))
        assert out.tolist() == pytest.approx([1 + 3 + 0.5, 2 + 3 - 0.5])

    def test_finite_on_generated_datasets(self):
        from evforecast.generators import gen_lorenz

        for ts in (gen_sine(120, 30.0, 1.0, 0.1, seed=1),
                   gen_lorenz(120, 0.02, transient=100)):
            scaled = apply_scaler(fit_scaler(ts), ts)
            ds = embed(scaled, 5, 3)
            for build in (nn.build_lstm_forecaster, nn.build_bdlstm_forecaster):
                net = build(5, 3, hidden=4, rng=np.random.default_rng(2))
                assert np.all(np.isfinite(nn.predict(net, ds.X)))


class TestRidge:
    def test_recovers_exact_linear_map(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(60, 4))
        C = rng.normal(size=(5, 3))
        Y = np.hstack([X, np.ones((60, 1))]) @ C
        model = nn.ridge_ar_fit(make_dataset(X, Y), 1e-8)
        assert np.max(np.abs(model.coef - C)) < 1e-6

    def test_large_lambda_shrinks_to_zero(self):
        rng = np.random.default_rng(13)
        ds = make_dataset(rng.normal(size=(50, 3)), rng.normal(size=(50, 2)))
        model = nn.ridge_ar_fit(ds, 1e12)
        assert np.max(np.abs(model.coef)) < 1e-6

    def test_rank_deficient_without_regularisation(self):
        X = np.ones((10, 3))  # constant columns collide with the bias column
        ds = make_dataset(X, np.ones((10, 1)))
        with pytest.raises(ValueError, match="rank-deficient"):
            nn.ridge_ar_fit(ds, 0.0)

    def test_gradient_descent_matches_closed_form(self):
        rng = np.random.default_rng(14)
        X = rng.normal(size=(100, 4))
        C = rng.normal(size=(5, 2))
        Y = np.hstack([X, np.ones((100, 1))]) @ C
        ds = make_dataset(X, Y)
        ridge = nn.ridge_ar_fit(ds, 1e-8)
        net = nn.Network([nn.DenseLayer(4, 2, "linear", rng=np.random.default_rng(3))])
        nn.train(net, ds, nn.TrainConfig(epochs=3000, batch_size=100, lr=0.01, seed=2))
        nn.train(net, ds, nn.TrainConfig(epochs=2000, batch_size=100, lr=1e-3, seed=3))
        err = max(np.max(np.abs(net.layers[0].W - ridge.coef[:4])),
                  np.max(np.abs(net.layers[0].b - ridge.coef[4])))
        assert err < 1e-3

    def test_ridge_to_network_same_predictions(self):
        rng = np.random.default_rng(15)
        ds = make_dataset(rng.normal(size=(30, 4)), rng.normal(size=(30, 2)))
        model = nn.ridge_ar_fit(ds, 1e-6)
        net = nn.ridge_to_network(model)
        assert np.allclose(nn.predict(net, ds.X), nn.ridge_predict(model, ds.X), atol=1e-14)


class TestSaveLoad:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(16)
        net = nn.build_bdlstm_forecaster(5, 3, hidden=4, rng=rng)
        path = tmp_path / "model.txt"
        nn.save_model(net, path)
        back = nn.load_model(path)
        for a, b in zip(net.params(), back.params()):
            assert np.array_equal(a, b)
        x = rng.normal(size=(4, 5))
        assert np.array_equal(net.forward(x), back.forward(x))

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("not a model\n")
        with pytest.raises(ValueError, match="not an evforecast model"):
            nn.load_model(path)


class TestClipping:
    def test_global_norm_scaled(self):
        grads = [np.array([3.0, 0.0]), np.array([4.0])]
        norm = nn.clip_gradients(grads, 1.0)
        assert norm == pytest.approx(5.0)
        clipped = np.sqrt(sum(np.sum(g * g) for g in grads))
        assert clipped == pytest.approx(1.0)

    def test_disabled_leaves_grads(self):
        grads = [np.array([30.0])]
        nn.clip_gradients(grads, None)
        assert grads[0][0] == 30.0
