import numpy as np
import pytest

from hsicx.civ import fit_joint_civ, fit_residualized_civ, nadaraya_watson
from hsicx.dataset import Dataset
from hsicx.estimators import FitConfig, fit_hsic_x
from hsicx.exceptions import InvalidInputError, InvalidParameterError
from hsicx.indtest import hsic_gamma_test
from hsicx.simulate import CivExample, simulate


def test_nw_constant_response():
    w = np.linspace(-1, 1, 30)
    q = nadaraya_watson(w, np.full(30, 2.5))
    assert np.allclose(q(np.linspace(-3, 3, 7)), 2.5)


def test_nw_interpolates_as_bandwidth_vanishes():
    rng = np.random.default_rng(0)
    w, z = rng.normal(size=20), rng.normal(size=20)
    q = nadaraya_watson(w, z, bandwidth=1e-4)
    assert np.allclose(q(w)[:, 0], z)


def test_nw_matches_explicit_weights():
    rng = np.random.default_rng(1)
    w, z = rng.normal(size=(15, 2)), rng.normal(size=15)
    q = nadaraya_watson(w, z, bandwidth=[0.5, 1.5])
    t = np.array([0.2, -0.1])
    k = np.exp(-0.5 * (((w - t) / [0.5, 1.5]) ** 2).sum(axis=1))
    assert q(t[None, :])[0, 0] == pytest.approx(k @ z / k.sum())


def test_nw_linear_signal():
    rng = np.random.default_rng(2)
    w = rng.uniform(-2, 2, 2000)
    z = 3 * w + 0.5 * rng.normal(size=2000)
    grid = np.linspace(-1, 1, 101)
    assert np.max(np.abs(nadaraya_watson(w, z)(grid)[:, 0] - 3 * grid)) < 0.15


def test_nw_far_query_falls_back_to_nearest():
    w = np.array([0.0, 1.0, 2.0])
    q = nadaraya_watson(w, np.array([5.0, 6.0, 7.0]), bandwidth=0.2)
    pred, flag = q.predict(np.array([1e6, 0.5, -1e6]), return_fallback=True)
    assert pred[0, 0] == 7.0 and pred[2, 0] == 5.0
    assert flag.tolist() == [True, False, True]


def test_nw_validation():
    with pytest.raises(InvalidInputError):
        nadaraya_watson(np.zeros(1), np.zeros(1))
    with pytest.raises(InvalidParameterError):
        nadaraya_watson(np.zeros(3), np.zeros(3), bandwidth=-1.0)
    with pytest.raises(InvalidParameterError):
        nadaraya_watson(np.zeros(3), np.zeros(3), bandwidth="scott")
    with pytest.raises(InvalidInputError):
        nadaraya_watson(np.zeros(3), np.zeros(4))


def _residualized_sim(n, seed, shift=None):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=n)
    ez = rng.normal(size=n)
    z = w + ez if shift is None else shift(w) + ez
    u = rng.normal(size=n)
    x = z * rng.normal(size=n) + z + u
    y = 1.5 * x + 2 * u + rng.normal(size=n)
    return Dataset(x, y, z, w)


def test_residualized_civ_recovers_effect():
    d = _residualized_sim(2000, 0)
    res = fit_residualized_civ(d, cfg=FitConfig(seed=0))
    assert abs(res.theta[0] - 1.5) < 0.2
    assert res.q1 is not None and res.gamma is None
    assert res.diagnostics["nw_fallback"] == 0


def test_residualized_civ_invariant_to_w_shift():
    a = fit_residualized_civ(_residualized_sim(2000, 1), cfg=FitConfig(seed=1))
    b = fit_residualized_civ(_residualized_sim(2000, 1, shift=lambda w: w + np.sin(2 * w)), cfg=FitConfig(seed=1))
    assert abs(a.theta[0] - b.theta[0]) < 0.1


def test_residualized_civ_independent_w_reduces():
    rng = np.random.default_rng(3)
    n = 800
    d0 = _residualized_sim(n, 3)
    d = Dataset(d0.X, d0.Y, d0.Z, rng.normal(size=n))
    civ = fit_residualized_civ(d, cfg=FitConfig(seed=3))
    plain = fit_hsic_x(d, cfg=FitConfig(seed=3))
    assert abs(civ.theta[0] - plain.theta[0]) < 0.15


def test_joint_civ_on_example():
    sim = simulate(CivExample(), 2000, 0)
    res = fit_joint_civ(sim.data, cfg=FitConfig(seed=0))
    assert abs(res.theta[0] - 1) < 0.25 and abs(res.gamma[0] - 1) < 0.25
    assert res.q1 is None
    assert np.allclose(res.predict(np.array([1.0, 2.0])), res.theta[0] * np.array([1.0, 2.0]) + res.intercept)


def test_joint_civ_true_parameters_pass_test():
    sim = simulate(CivExample(), 500, 1)
    d = sim.data
    r = d.Y - d.X[:, 0] - d.W[:, 0]
    assert hsic_gamma_test(r, np.column_stack([d.Z, d.W])).pvalue > 0.05


def test_missing_w():
    d = Dataset(np.zeros(5), np.zeros(5), np.arange(5.0))
    with pytest.raises(InvalidInputError):
        fit_residualized_civ(d)
    with pytest.raises(InvalidInputError):
        fit_joint_civ(d)
