import math

import numpy as np
import pytest
from scipy.integrate import quad

from adafnn.fda import make_quadrature
from adafnn.micronet import make_rng
from adafnn.simgen import (
    N_COMPONENTS,
    SQRT3,
    SimCaseSpec,
    TargetScaling,
    add_measurement_noise,
    build_case,
    case_spec,
    cosine_basis,
    default_response_sd,
    generate_curve,
    generate_curves,
    make_response,
    measurement_noise_sd,
    noiseless_response,
    signal_coefficients,
    signal_functions,
    simulation_grid,
    true_signals,
)

GRID = simulation_grid()
Q = make_quadrature(GRID)


def test_zero_z_gives_zero_curve():
    spec = SimCaseSpec(0, np.zeros(N_COMPONENTS))
    x, c = generate_curve(spec, make_rng(0))
    assert np.all(x == 0) and np.all(c == 0)


def test_r_has_unit_variance():
    spec = SimCaseSpec(0, np.ones(N_COMPONENTS))
    _, c = generate_curves(spec, 100_000, make_rng(1))
    v = c.var(axis=0)
    assert np.all((v > 0.98) & (v < 1.02))
    assert np.all(np.abs(c) <= SQRT3)


def test_case1_c1_variance():
    _, c = generate_curves(case_spec(1), 100_000, make_rng(2))
    assert c[:, 0].var() == pytest.approx(400, rel=0.05)


def test_response_examples():
    c = np.zeros((1, N_COMPONENTS))
    c[0, 2] = 2.0
    assert noiseless_response(1, c)[0] == 4.0
    c = np.zeros((1, N_COMPONENTS))
    c[0, 4] = -3.0
    assert noiseless_response(2, c)[0] == 9.0


def test_case4_constant_curve_response():
    c = np.zeros((1, N_COMPONENTS))
    c[0, 0] = 1.0  # X = phi_1 = 1
    assert noiseless_response(4, c)[0] == pytest.approx(1.25, abs=1e-12)
    b1 = quad(lambda t: signal_functions(t)[0], 0, 1, points=[0.25])[0]
    b2 = quad(lambda t: signal_functions(t)[1], 0, 1, points=[0.25, 0.5, 0.75])[0]
    assert b1 == pytest.approx(0.5, abs=1e-10) and b2 == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 7, 12, 25, 50])
def test_signal_coefficients_match_adaptive_quadrature(k):
    g1, g2 = signal_coefficients()
    for which, g in ((0, g1), (1, g2)):
        f = lambda t: signal_functions(t)[which] * cosine_basis(k, t)
        ref = quad(f, 0, 1, points=[0.25, 0.5, 0.75], limit=200, epsabs=1e-13)[0]
        assert g[k - 1] == pytest.approx(ref, abs=1e-10)


def test_signal_function_values():
    b1, b2 = signal_functions(np.array([0.0, 0.25, 0.5, 0.8]))
    np.testing.assert_allclose(b1, [4, 0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(b2, [0, 0, 4, 0], atol=1e-15)
    t = GRID.points
    b1, b2 = signal_functions(t)
    assert abs(np.sum(Q.weights * b1 * b2)) < 1e-2


def test_true_signals():
    names, curves = true_signals(4, GRID.points)
    assert names == ("beta_1", "beta_2") and curves.shape == (2, 51)
    names, curves = true_signals(1, GRID.points)
    np.testing.assert_array_equal(curves[0], cosine_basis(3, GRID.points))


def test_noise_disabled_is_identity():
    X = make_rng(0).normal(size=(3, 51))
    np.testing.assert_array_equal(add_measurement_noise(X, math.inf, make_rng(1), 10.0), X)
    np.testing.assert_array_equal(add_measurement_noise(X, None, make_rng(1), 10.0), X)


def test_case3_noise_level():
    spec = case_spec(3)
    assert spec.signal_energy == 114.0
    assert measurement_noise_sd(spec.signal_energy, spec.snr) == pytest.approx(math.sqrt(11.4), rel=1e-12)
    assert measurement_noise_sd(spec.signal_energy, spec.snr) == pytest.approx(3.376, abs=1e-3)


@pytest.mark.parametrize("case_id", [3, 4])
def test_empirical_snr(case_id):
    spec = case_spec(case_id)
    rng = make_rng(5)
    clean, _ = generate_curves(spec, 10_000, rng)
    noisy = add_measurement_noise(clean, spec.snr, rng, spec.signal_energy)
    signal_rms = math.sqrt(np.mean(clean**2 @ Q.weights))
    snr = signal_rms / np.std(noisy - clean)
    assert snr == pytest.approx(spec.snr, rel=0.03)


def test_case5_noise_variance_doubles_case4():
    assert default_response_sd(5) ** 2 == pytest.approx(2 * default_response_sd(4) ** 2, rel=1e-12)
    assert default_response_sd(1) == 0 and default_response_sd(2) == 0


def test_response_sd_is_half_signal_sd():
    # independent re-estimate with a different stream
    r = make_rng(99).uniform(-SQRT3, SQRT3, size=(200_000, N_COMPONENTS))
    sd = np.std(noiseless_response(4, r))
    assert default_response_sd(4) == pytest.approx(0.5 * sd, rel=0.01)


def test_coefficient_oracle():
    X, c = generate_curves(case_spec(2), 50, make_rng(3))
    for k in range(1, 11):
        est = X @ (Q.weights * cosine_basis(k, GRID.points))
        assert np.max(np.abs(est - c[:, k - 1])) < 1e-2 * max(1.0, np.abs(c[:, k - 1]).max())


def test_build_case_reproducible_and_standardized():
    a = build_case(4, seed=11, n_train=400, n_val=50, n_test=50)
    b = build_case(4, seed=11, n_train=400, n_val=50, n_test=50)
    for s, t in zip((a.train, a.val, a.test), (b.train, b.val, b.test)):
        assert s.X.tobytes() == t.X.tobytes() and s.y.tobytes() == t.y.tobytes()
    assert abs(a.train.y.mean()) < 1e-10
    assert abs(a.train.y.var() - 1) < 1e-10
    np.testing.assert_allclose(a.scaling.apply(a.raw[1].dataset.y), a.val.y)
    assert np.all(np.isfinite(a.train.X))


def test_mean_predictor_mse_near_one():
    case = build_case(4, seed=2, n_train=1500, n_val=300, n_test=300)
    assert np.mean(case.test.y**2) == pytest.approx(1.0, abs=0.1)


def test_response_noise_requires_rng():
    with pytest.raises(ValueError):
        make_response(case_spec(4), np.zeros((2, N_COMPONENTS)))


def test_target_scaling_round_trip():
    s = TargetScaling.fit(np.array([1.0, 2.0, 4.0]))
    np.testing.assert_allclose(s.invert(s.apply([3.0, -1.0])), [3.0, -1.0])
    with pytest.raises(ValueError):
        TargetScaling.fit(np.ones(4))


def test_unknown_case():
    with pytest.raises(ValueError):
        case_spec(6)
