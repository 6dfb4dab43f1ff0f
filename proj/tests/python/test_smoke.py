import json
import math

import numpy as np
import pytest

import effpop


def test_zoo_and_analyze():
    assert set(effpop.zoo_names()) == {"lotka_volterra", "two_sex", "local_branching"}
    lv = effpop.make_model("lotka_volterra")
    rep = effpop.analyze(lv)
    np.testing.assert_allclose(rep["h_tilde"], [20 / 7, 60 / 7], rtol=1e-12)
    assert rep["stable"]
    # h is the left null vector of F(h~) normalised against h~.
    F = lv.F(rep["h_tilde"])
    np.testing.assert_allclose(rep["h"] @ F, 0.0, atol=1e-12)
    assert rep["h"] @ rep["h_tilde"] == pytest.approx(1.0)
    assert rep["sigma_sq"] == pytest.approx(0.25)


def test_two_sex_parameters_and_errors():
    m = effpop.make_model("two_sex", p=0.4, alpha=0.2)
    rep = effpop.analyze(m)
    n = 2 * 0.4 * 0.6 / 0.2
    np.testing.assert_allclose(rep["h_tilde"], [0.4 * n, 0.6 * n], rtol=1e-9)
    with pytest.raises(effpop.ConfigError):
        effpop.make_model("two_sex", q=1.0)
    with pytest.raises(ValueError):
        effpop.make_model("nope")


def test_projection_and_simulation():
    lv = effpop.make_model("lotka_volterra")
    u0 = np.array([[0.5, 1.0, 0.2], [2.0, 0.5, 1.0]])
    proj = effpop.project(lv, u0)
    assert proj["theta"].sum() == pytest.approx(1.0, abs=1e-8)
    assert proj["H"] @ u0.sum(axis=1) == pytest.approx(1.0, abs=1e-8)

    runs = effpop.simulate_fractions(lv, u0, N=500, t_end=1.0, seed=3, replicates=2, max_records=5)
    times, states = runs[0]
    assert states.shape == (len(times), 2, 3)
    assert (states >= 0).all()
    again = effpop.simulate_fractions(lv, u0, N=500, t_end=1.0, seed=3, replicates=2, max_records=5)
    np.testing.assert_array_equal(states, again[0][1])


def test_wright_fisher_and_theta_hat():
    runs = effpop.simulate_wright_fisher(np.array([0.5, 0.5]), t_end=0.2, seed=1, replicates=3, max_records=3)
    for _, states in runs:
        np.testing.assert_allclose(states.sum(axis=1), 1.0)
    th = effpop.theta_hat(np.array([[1.0, 3.0]]), np.array([1.0]))
    np.testing.assert_allclose(th, [0.25, 0.75])


def test_coalescent_and_ibm():
    for name in effpop.zoo_names():
        m = effpop.make_model(name)
        s2 = effpop.analyze(m)["sigma_sq"]
        assert effpop.coalescence_time(m, 1e4) * s2 / 1e4 == pytest.approx(1.0, abs=0.05)
    avg = effpop.gillespie_time_average(effpop.make_model("lotka_volterra"), N=100, t_end=20, burn_in=5, seed=2)
    assert avg.shape == (2,)
    assert np.all(np.isfinite(avg))


def test_cli_in_process():
    code, out, err = effpop.run_cli(["analyze", "--model", "two_sex"])
    assert code == 0, err
    doc = json.loads(out)
    assert doc["provenance"]["command"] == "analyze"
    assert math.isclose(doc["sigma_sq"], 0.5, rel_tol=1e-9)
    code, _, err = effpop.run_cli(["analyze", "--model", "missing"])
    assert code == 2
    assert "lotka_volterra" in err
