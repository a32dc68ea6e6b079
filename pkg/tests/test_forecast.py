"""MLP forecaster: features, gradients, determinism, scheme pipelines."""

import numpy as np
import pytest

from dpmeter.domain import LoadSeries, MeterPanel, SettlementScheme, compute_dlc
from dpmeter.forecast import (
    HIDDEN_WIDTH,
    FeatureVector,
    MlpModel,
    TrainConfig,
    build_features,
    forecast_scheme,
    load_model,
    loss_and_gradient,
    pack_parameters,
    predict,
    predict_batch,
    save_model,
    train,
    with_parameters,
)
from dpmeter.privacy import PrivacyParams


def ramp_series(n=400):
    return LoadSeries("ramp", 0, np.arange(n, dtype=float))


class TestFeatures:
    def test_lags_on_identity_ramp(self):
        fv = build_features(ramp_series(), 144)
        np.testing.assert_array_equal(fv.lags, [96, 95, 49, 48, 0])
        assert fv.week == 1 and fv.weekday == 4 and fv.period == 1

    def test_lags_shift_with_t(self):
        fv = build_features(ramp_series(), 145)
        np.testing.assert_array_equal(fv.lags, [97, 96, 50, 49, 1])

    def test_constant_history(self):
        const = LoadSeries("c", 0, np.full(300, 7.5))
        for t in (144, 200, 250):
            np.testing.assert_array_equal(build_features(const, t).lags, [7.5] * 5)

    def test_insufficient_history_raises(self):
        with pytest.raises(ValueError):
            build_features(ramp_series(), 143)

    def test_one_day_past_end_is_reachable(self):
        s = ramp_series(192)
        build_features(s, 192 + 47)  # last period of the next day
        with pytest.raises(ValueError):
            build_features(s, 192 + 48)


def linear_dataset(rng, n=400):
    X = np.column_stack(
        [
            rng.integers(1, 54, n),
            rng.integers(1, 8, n),
            rng.integers(1, 49, n),
            rng.uniform(0, 50, (n, 5)).T.reshape(5, n).T,
        ]
    )
    coef = np.array([0.1, -0.4, 0.05, 0.3, 0.2, -0.1, 0.15, 0.25])
    y = X @ coef + 3.0
    return X.astype(float), y


class TestTraining:
    def test_fits_noiseless_linear_map(self):
        rng = np.random.default_rng(0)
        X, y = linear_dataset(rng)
        cfg = TrainConfig(epochs=2000, learning_rate=0.05, seed=1, early_stop_tol=1e-9)
        model = train((X, y), cfg)
        rmse = float(np.sqrt(((predict_batch(model, X) - y) ** 2).mean()))
        assert rmse < 0.01 * y.std()

    def test_determinism(self):
        rng = np.random.default_rng(2)
        X, y = linear_dataset(rng)
        cfg = TrainConfig(epochs=40, seed=11)
        m1 = train((X, y), cfg)
        m2 = train((X, y), cfg)
        np.testing.assert_array_equal(pack_parameters(m1), pack_parameters(m2))

    def test_epoch_losses_non_increasing(self):
        rng = np.random.default_rng(3)
        X, y = linear_dataset(rng)
        model = train((X, y), TrainConfig(epochs=120, learning_rate=0.02, seed=4))
        losses = np.asarray(model.epoch_losses)
        slack = 1e-6 * max(losses[0], 1.0)
        assert np.all(np.diff(losses) <= slack)

    def test_rejects_nan(self):
        rng = np.random.default_rng(5)
        X, y = linear_dataset(rng)
        y[3] = np.nan
        with pytest.raises(ValueError):
            train((X, y), TrainConfig())

    def test_rejects_small_dataset(self):
        rng = np.random.default_rng(6)
        X, y = linear_dataset(rng, n=50)
        with pytest.raises(ValueError):
            train((X, y), TrainConfig(min_samples=100))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        X, y = linear_dataset(rng, n=120)
        model = train((X, y), TrainConfig(epochs=3, seed=8))
        flat = pack_parameters(model)
        _, grads = loss_and_gradient(model, X, y)
        analytic = np.concatenate(
            [grads["w1"].ravel(), grads["b1"], grads["w2"], [grads["b2"]]]
        )
        step = 1e-5
        n_checked = 0
        for i in range(flat.size):
            up, dn = flat.copy(), flat.copy()
            up[i] += step
            dn[i] -= step
            f_up, _ = loss_and_gradient(with_parameters(model, up), X, y)
            f_dn, _ = loss_and_gradient(with_parameters(model, dn), X, y)
            numeric = (f_up - f_dn) / (2 * step)
            denom = max(abs(numeric), abs(analytic[i]), 1e-8)
            assert abs(numeric - analytic[i]) / denom < 1e-4, f"coordinate {i}"
            n_checked += 1
        assert n_checked == flat.size  # 45 parameters for 8 inputs


class TestPredict:
    def test_zero_weight_model_returns_bias(self):
        model = MlpModel(
            w1=np.zeros((8, HIDDEN_WIDTH)),
            b1=np.zeros(HIDDEN_WIDTH),
            w2=np.zeros(HIDDEN_WIDTH),
            b2=1.25,
            x_mean=np.zeros(8),
            x_std=np.ones(8),
            y_mean=0.0,
            y_std=2.0,
        )
        fv = FeatureVector(1, 1, 1, np.arange(5.0))
        assert predict(model, fv) == pytest.approx(1.25 * 2.0)

    def test_hand_built_forward_pass(self):
        # 2 features, one active hidden unit: relu(1*x0 + 2*x1 + 0.5) * 3 - 1
        w1 = np.zeros((2, HIDDEN_WIDTH))
        w1[0, 0], w1[1, 0] = 1.0, 2.0
        b1 = np.array([0.5, 0, 0, 0.0])
        w2 = np.array([3.0, 0, 0, 0.0])
        model = MlpModel(
            w1=w1, b1=b1, w2=w2, b2=-1.0,
            x_mean=np.zeros(2), x_std=np.ones(2), y_mean=0.0, y_std=1.0,
        )
        x = np.array([2.0, 1.5])
        expected = max(2.0 + 3.0 + 0.5, 0.0) * 3.0 - 1.0
        assert predict(model, x) == pytest.approx(expected)

    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        X, y = linear_dataset(rng, n=150)
        model = train((X, y), TrainConfig(epochs=10, seed=10))
        path = tmp_path / "model.txt"
        save_model(model, path)
        back = load_model(path)
        np.testing.assert_array_equal(pack_parameters(back), pack_parameters(model))
        np.testing.assert_array_equal(back.x_mean, model.x_mean)
        probe = rng.uniform(0, 30, (5, 8))
        np.testing.assert_array_equal(predict_batch(back, probe), predict_batch(model, probe))


def synthetic_panel(rng, n_meters=12, n_weeks=6, evening_shift=0.0):
    """Small panel with a configurable evening peak for pipeline tests."""
    n = n_weeks * 336
    slots = np.arange(n) % 48
    base = (
        0.2
        + 0.5 * np.exp(-0.5 * ((slots - 17) / 3.0) ** 2)
        + 0.9 * np.exp(-0.5 * ((slots - (37 + evening_shift)) / 3.5) ** 2)
    )
    meters = []
    for i in range(n_meters):
        noise = rng.lognormal(-0.02, 0.2, n)
        scale = rng.lognormal(0.0, 0.25)
        meters.append(LoadSeries(f"m{i}", 0, base * noise * scale))
    return MeterPanel(tuple(meters))


FAST = TrainConfig(epochs=60, learning_rate=0.05, batch_size=64, seed=0)


class TestSchemePipelines:
    def test_nhhs_and_dlcsys_identical(self):
        rng = np.random.default_rng(12)
        panel = synthetic_panel(rng)
        dlc = compute_dlc(panel)
        a = forecast_scheme(SettlementScheme.nhhs(), panel, dlc, FAST, seed=5)
        b = forecast_scheme(SettlementScheme.hhs_dlc_sys(), panel, dlc, FAST, seed=5)
        np.testing.assert_array_equal(a.forecast.values, b.forecast.values)
        assert a.wape_backtest.value == b.wape_backtest.value

    def test_ddp_with_huge_epsilon_matches_ehh(self):
        rng = np.random.default_rng(13)
        panel = synthetic_panel(rng)
        dlc = compute_dlc(panel)
        ehh = forecast_scheme(SettlementScheme.hhs_ehh(), panel, dlc, FAST, seed=6)
        ddp = forecast_scheme(
            SettlementScheme.hhs_ddp(PrivacyParams(epsilon=1e12, gamma=0.0)),
            panel,
            dlc,
            FAST,
            seed=6,
        )
        np.testing.assert_allclose(ddp.forecast.values, ehh.forecast.values, atol=1e-6)
        assert ddp.wape_backtest.value == pytest.approx(ehh.wape_backtest.value, abs=1e-6)

    def test_shifted_peak_group_favors_hh_data(self):
        # the group's evening peak is three hours later than the system's:
        # spreading daily energy with the system shape must forecast worse
        rng = np.random.default_rng(14)
        sys_panel = synthetic_panel(rng, n_meters=30)
        group = synthetic_panel(rng, n_meters=12, evening_shift=6.0)
        dlc_sys = compute_dlc(sys_panel)
        ehh = forecast_scheme(SettlementScheme.hhs_ehh(), group, dlc_sys, FAST, seed=7)
        dlc = forecast_scheme(SettlementScheme.hhs_dlc_sys(), group, dlc_sys, FAST, seed=7)
        assert ehh.wape_backtest.value < dlc.wape_backtest.value

    def test_forecast_covers_next_day(self):
        rng = np.random.default_rng(15)
        panel = synthetic_panel(rng)
        out = forecast_scheme(
            SettlementScheme.hhs_ehh(), panel, compute_dlc(panel), FAST, seed=8
        )
        assert len(out.forecast) == 48
        assert out.forecast.start == panel.start + panel.n_periods

    def test_short_panel_rejected(self):
        rng = np.random.default_rng(16)
        panel = synthetic_panel(rng, n_weeks=3)
        with pytest.raises(ValueError, match="too short"):
            forecast_scheme(
                SettlementScheme.hhs_ehh(), panel, compute_dlc(panel), FAST, seed=9
            )
