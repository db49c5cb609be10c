import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fanunet.fan import FanSeriesParams, fan_series_eval
from fanunet.fourier import FourierSeries, fourier_coefficients, fourier_eval, square_wave
from fanunet.tensor import ShapeError, Tensor

TWO_PI = 2 * np.pi


def test_sine_has_single_sine_coefficient():
    s = fourier_coefficients(np.sin, TWO_PI, 5)
    assert abs(s.b[0] - 1.0) < 1e-6
    assert np.abs(s.b[1:]).max() < 1e-6
    assert np.abs(s.a).max() < 1e-6
    assert abs(s.a0) < 1e-9


def test_constant_is_pure_dc():
    s = fourier_coefficients(lambda x: np.full_like(x, 3.0), 5.0, 4)
    assert s.a0 == pytest.approx(3.0, abs=1e-12)
    assert np.abs(s.a).max() < 1e-9 and np.abs(s.b).max() < 1e-9


def test_square_wave_coefficients():
    s = fourier_coefficients(square_wave, TWO_PI, 9)
    n = np.arange(1, 10)
    expected = np.where(n % 2 == 1, 4.0 / (np.pi * n), 0.0)
    assert np.abs(s.b - expected).max() < 1e-3
    assert np.abs(s.a).max() < 1e-3


def test_eval_peak_of_single_harmonic():
    s = FourierSeries(TWO_PI, 0.0, [0.0], [1.0])
    assert fourier_eval(s, np.pi / 2) == pytest.approx(1.0, abs=1e-12)


def test_eval_dc_only_is_flat():
    s = FourierSeries(4.0, 2.5, [0.0, 0.0], [0.0, 0.0])
    np.testing.assert_allclose(fourier_eval(s, np.linspace(-3, 9, 17)), 2.5)


def test_reconstruction_of_smooth_periodic_function():
    f = lambda x: np.exp(np.sin(x))  # noqa: E731
    s = fourier_coefficients(f, TWO_PI, 20, quadrature_points=4096)
    x = np.linspace(0, TWO_PI, 101)
    assert np.abs(fourier_eval(s, x) - f(x)).max() < 1e-9


def test_square_wave_partial_sum_converges_at_quarter_period():
    s = fourier_coefficients(square_wave, TWO_PI, 51, quadrature_points=64 * 51 * 4)
    # odd-harmonic tail of the Leibniz series bounds the error by 4/(pi*53)
    assert abs(fourier_eval(s, np.pi / 2) - 1.0) < 4 / (np.pi * 53)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    period=st.floats(0.5, 10.0),
    shift=st.floats(-20.0, 20.0),
)
def test_partial_sum_is_periodic(seed, period, shift):
    rng = np.random.default_rng(seed)
    s = FourierSeries(period, rng.normal(), rng.normal(size=4), rng.normal(size=4))
    x = rng.uniform(-5, 5, size=8)
    np.testing.assert_allclose(fourier_eval(s, x + period), fourier_eval(s, x), atol=1e-9)
    np.testing.assert_allclose(fourier_eval(s, x + round(shift) * period), fourier_eval(s, x), atol=1e-8)


def test_quadrature_precondition():
    with pytest.raises(ValueError, match="quadrature_points"):
        fourier_coefficients(np.sin, TWO_PI, 10, quadrature_points=100)
    with pytest.raises(ValueError):
        fourier_coefficients(np.sin, -1.0, 3)
    with pytest.raises(ValueError):
        FourierSeries(1.0, 0.0, [1.0, 2.0], [1.0])


def test_matrix_series_zero_weights_returns_bias():
    p = FanSeriesParams(
        Tensor(np.array([0.5, -2.0])), Tensor(np.ones((3, 4))), Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3)))
    )
    np.testing.assert_allclose(fan_series_eval(p, Tensor(np.arange(4.0))).data, [0.5, -2.0])


def test_matrix_series_single_harmonic():
    p = FanSeriesParams(Tensor(np.zeros(1)), Tensor(np.ones((1, 1))), Tensor(np.zeros((1, 1))), Tensor(np.ones((1, 1))))
    assert fan_series_eval(p, Tensor(np.array([np.pi / 2]), dtype=np.float64)).data[0] == pytest.approx(1.0, abs=1e-12)


def test_matrix_series_matches_scalar_fourier_sum():
    rng = np.random.default_rng(3)
    T, N = 3.0, 6
    s = FourierSeries(T, rng.normal(), rng.normal(size=N), rng.normal(size=N))
    w_in = (TWO_PI * np.arange(1, N + 1) / T)[:, None]
    p = FanSeriesParams(
        Tensor(np.array([s.a0]), dtype=np.float64),
        Tensor(w_in, dtype=np.float64),
        Tensor(s.a[None, :], dtype=np.float64),
        Tensor(s.b[None, :], dtype=np.float64),
    )
    x = np.linspace(-4, 4, 33)
    got = fan_series_eval(p, Tensor(x[:, None], dtype=np.float64)).data[:, 0]
    assert np.abs(got - fourier_eval(s, x)).max() < 1e-9


def test_matrix_series_shape_errors():
    with pytest.raises(ShapeError):
        FanSeriesParams(Tensor(np.zeros(2)), Tensor(np.ones((3, 4))), Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 3))))
    p = FanSeriesParams(Tensor(np.zeros(2)), Tensor(np.ones((3, 4))), Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    with pytest.raises(ShapeError):
        fan_series_eval(p, Tensor(np.zeros(5)))
