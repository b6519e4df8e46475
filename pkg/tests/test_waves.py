import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vkribbon.waves import (MollifiedPL, PiecewiseLinear, SimpleFunction, boundary_corrector, kernel, kernel_cdf,
                            kernel_ramp, mollify_1d, wave_count, zeta_wave)

TEST_M = [
    SimpleFunction.constant(0.5, -0.5, 0.5),
    SimpleFunction(np.array([-0.5, 0.0, 0.5]), np.array([0.2, 1.0])),
    SimpleFunction(np.linspace(-0.5, 0.5, 5), np.array([0.0, 0.3, 0.1, 0.6])),
]


def test_kernel_normalised_and_symmetric():
    z, w = np.polynomial.legendre.leggauss(200)
    assert np.sum(w * kernel(z)) == pytest.approx(1.0, abs=1e-12)
    t = np.linspace(-1, 1, 101)
    assert np.array_equal(kernel(t), kernel(-t))
    assert np.all(kernel(np.array([-1.0, 1.0, 1.5])) == 0.0)


def test_kernel_cdf_and_ramp_identities():
    z = np.linspace(-1.2, 1.2, 241)
    assert np.allclose(kernel_cdf(z) + kernel_cdf(-z), 1.0, atol=1e-15)
    assert np.allclose(kernel_ramp(z) - kernel_ramp(-z), z, atol=1e-15)
    assert np.all(np.diff(kernel_cdf(z)) >= 0)


def test_mollified_pl_matches_numerical_convolution():
    pl = PiecewiseLinear(np.array([-0.5, -0.1, 0.2, 0.5]), np.array([0.0, 0.4, -0.2, 0.1]))
    rho = 0.05
    mp = MollifiedPL(pl, rho)
    ref = mollify_1d(pl, rho, nodes=512)
    x = np.linspace(-0.5, 0.5, 101)
    assert np.allclose(mp(x), ref(x), atol=1e-9)


def test_mollify_constant_interior():
    g = mollify_1d(lambda x: np.full_like(x, 3.0), 0.1)
    assert np.allclose(g(np.linspace(-0.3, 0.3, 7)), 3.0, atol=1e-14)


def test_mollify_step_transition():
    d = 0.1
    g = mollify_1d(lambda x: (x > 0).astype(float), d, nodes=256)
    x = np.linspace(-0.3, 0.3, 601)
    y = g(x)
    assert np.all(np.diff(y) >= -1e-15)
    assert np.all(y[x <= -d] == 0.0) and np.allclose(y[x >= d], 1.0, atol=1e-14)
    assert 0 < g(np.array(-0.9 * d)) < g(np.array(0.9 * d)) < 1


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 5, allow_nan=False), min_size=2, max_size=6), st.floats(0.01, 0.2))
def test_mollify_preserves_nonnegativity(values, delta):
    pl = PiecewiseLinear(np.linspace(-0.5, 0.5, len(values)), np.array(values))
    g = mollify_1d(lambda x: np.maximum(pl(x), 0.0), delta)
    assert np.all(g(np.linspace(-0.5, 0.5, 201)) >= 0.0)


def test_simple_function_validation():
    with pytest.raises(ValueError):
        SimpleFunction(np.array([0.0, 1.0]), np.array([-0.1]))
    with pytest.raises(ValueError):
        SimpleFunction(np.array([0.0, 1.0, 0.5]), np.array([0.1, 0.1]))


def test_wave_count_grows():
    assert [wave_count(e) for e in (1e-1, 1e-2, 5e-3, 2.5e-3)] == [1, 3, 4, 5]


def test_zero_density_gives_zero_wave():
    z = zeta_wave(SimpleFunction.constant(0.0, -0.5, 0.5), 1e-2)
    x = np.linspace(-0.5, 0.5, 101)
    assert np.all(z(x) == 0.0) and np.all(z(x, 1) == 0.0)


def test_negative_density_rejected():
    m = SimpleFunction.constant(0.5, -0.5, 0.5)
    m.values[0] = -1.0
    with pytest.raises(ValueError):
        zeta_wave(m, 1e-2)


@pytest.mark.parametrize("m", TEST_M)
def test_zeta_end_values_and_slopes(m):
    z = zeta_wave(m, 1e-2)
    ends = np.array([-0.5, 0.5])
    assert np.allclose(z(ends), 0.0, atol=1e-15)
    assert np.allclose(z(ends, 1), 0.0, atol=1e-12)


@pytest.mark.parametrize("m", TEST_M)
def test_zeta_metrics_decrease(m):
    ms = [zeta_wave(m, e, 1.0).metrics for e in (1e-2, 5e-3, 2.5e-3)]
    for key in ("energy_deviation", "sup_norm", "curvature"):
        v = [r[key] for r in ms]
        assert v[0] > v[1] > v[2], key


@pytest.mark.xfail(strict=True, reason="mollification collars keep the deviation above 0.1 at this eps (0.26 at the default count, 0.105 at best)")
def test_zeta_deviation_at_small_eps():
    assert zeta_wave(TEST_M[0], 1e-3, 1.0).metrics["energy_deviation"] < 0.1


def test_zeta_deviation_small_for_thin_collars():
    z = zeta_wave(TEST_M[0], 1e-8, 1.0, n=4)
    assert z.metrics["energy_deviation"] < 0.05


@pytest.mark.parametrize("a, b", [(0.0, 0.0), (1.0, -2.0), (0.3, 0.7)])
def test_corrector_end_conditions(a, b):
    g = boundary_corrector(a, b, 1e-2, 1.0, (-0.5, 0.5))
    ends = np.array([-0.5, 0.5])
    assert np.array_equal(g(ends), [0.0, 0.0])
    assert np.allclose(g(ends, 1), [a, b], atol=1e-14)


def test_corrector_zero_slopes_vanish():
    g = boundary_corrector(0.0, 0.0, 1e-2)
    assert np.all(g(np.linspace(-0.5, 0.5, 51)) == 0.0)


def test_one_sided_layer_stays_small():
    from vkribbon.waves import unit_corrector
    for eta in (1e-2, 1e-3):
        f = unit_corrector(0.0, eta)
        x = np.linspace(0, 1, 4001)
        assert f(np.array([0.0, 1.0]), 0).tolist() == [0.0, 0.0]
        assert np.max(np.abs(f(x, 0))) <= 1.01 * eta


def test_corrector_rates():
    eps = [1e-2, 5e-3, 2.5e-3]
    ms = [boundary_corrector(1.0, 0.0, e, 1.0).metrics for e in eps]
    w14 = np.array([m["w14_norm"] for m in ms]) / np.array(eps) ** 0.25
    curv = np.array([m["curvature"] for m in ms]) / np.array(eps) ** 0.5
    assert np.ptp(w14) < 0.01 * w14[0]
    assert np.ptp(curv) < 0.01 * curv[0]


def test_corrector_is_c1():
    g = boundary_corrector(0.7, -0.4, 1e-2)
    for x in (-0.5 + g.eta, 0.5 - g.eta):
        l, r = x - 1e-12, x + 1e-12
        assert g(np.array(l)) == pytest.approx(g(np.array(r)), abs=1e-10)
        assert g(np.array(l), 1) == pytest.approx(g(np.array(r), 1), abs=1e-9)
