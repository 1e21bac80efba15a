import math

import numpy as np
import pytest

import effspec


@pytest.fixture
def task():
    return effspec.make_logistic_task(3, 3.0, 4.0, "logistic-hessian")


def test_task_and_summary(task):
    assert task.k == 3 and task.C == 3 and task.q == 6
    G = effspec.zero_init_summary(task)
    assert G.G.shape == (6, 6)
    assert np.allclose(G.G[3:, 3:], np.eye(3))
    assert np.allclose(effspec.gaussian_init_summary(task).G, np.eye(6))
    x = np.zeros((20, 3))
    mu = np.eye(20)[:, :3]
    assert np.allclose(effspec.compute_G(x, mu).G, G.G)


def test_bulk_at_zero_init(task):
    G = effspec.zero_init_summary(task)
    s = effspec.support(task, G)
    lo, hi = s["intervals"][-1]
    assert lo == pytest.approx(1 / 54, rel=1e-8)
    assert hi == pytest.approx(1 / 6, rel=1e-8)
    for z in (0.05 + 0.01j, 0.3 + 0.0j, -1.0 + 0.2j):
        got = effspec.stieltjes(task, G, z)
        want = effspec.mp_reference(z, (2 / 9) / 3, 0.25)
        assert abs(got - want) < 1e-8
    grid = np.linspace(lo, hi, 400)
    rho = np.asarray(effspec.density(task, G, grid))
    assert np.all(rho >= 0)
    assert float(np.sum(0.5 * (rho[1:] + rho[:-1]) * np.diff(grid))) == pytest.approx(1.0, abs=2e-2)


def test_outliers_at_zero_init(task):
    G = effspec.zero_init_summary(task)
    rep = effspec.find_outliers(task, G)
    right = [r for r in rep["roots"] if r["z"] > rep["support"]["intervals"][-1][1]]
    assert len(right) == 1
    assert right[0]["multiplicity"] == 3
    assert right[0]["z"] == pytest.approx(5 / 27, rel=1e-8)
    F = effspec.f_matrix(task, G, right[0]["z"])
    v = right[0]["vectors"]
    assert np.allclose(F @ v, right[0]["z"] * v, atol=1e-8)
    oracle = effspec.zero_init_oracles(3, np.full(3, 1 / 3), 3.0, 4.0)
    assert any(r["exists"] and math.isclose(r["z"], 5 / 27, rel_tol=1e-10) for r in oracle["roots"])


def test_dynamics(task):
    G = effspec.zero_init_summary(task)
    D = effspec.drift(task, G)
    assert D[0, 3] == pytest.approx(2 / 9, abs=1e-8)
    assert D[0, 4] == pytest.approx(-1 / 9, abs=1e-8)
    t, Gs = effspec.integrate(task, G, dt=1e-2, T=0.1)
    assert t[0] == 0.0 and t[-1] == pytest.approx(0.1)
    assert all(np.allclose(g[3:, 3:], np.eye(3)) for g in Gs)


def test_empirical_replica(task):
    G = effspec.zero_init_summary(task)
    eig = effspec.empirical_spectrum(task, G, 300, seed=3)
    assert len(eig) == 300
    assert effspec.ks_distance(task, G, eig) < 0.06


def test_errors(tmp_path):
    with pytest.raises(ValueError):
        effspec.make_logistic_task(3, 3.0, 4.0, "no-such-kind")
    bad = tmp_path / "bad.json"
    bad.write_text('{"task": {"k": 3, "lambda": -1, "phi": 4, "profile": {"kind": "logistic-hessian"}}}')
    with pytest.raises(ValueError):
        effspec.load_scenario(str(bad))
    good = tmp_path / "good.json"
    good.write_text('{"task": {"k": 3, "lambda": 3, "phi": 4, "profile": {"kind": "logistic-hessian"}}}')
    t, G, canon = effspec.load_scenario(str(good))
    assert t.lam == 3.0 and "logistic-hessian" in canon
