import numpy as np
import pytest

import dfest


def test_registry_predictor_is_stable():
    pred = dfest.registry_predictor("sub4")
    assert pred.Phi.shape == (4, 4)
    assert max(abs(np.linalg.eigvals(pred.Phi))) < 1.0
    assert "sub4" in dfest.plant_names()


def test_exact_markov_design_matches_model_filter():
    pred = dfest.registry_predictor("sub4")
    poles = [0.948, 0.532, 0.225, 0.141]
    reference = dfest.model_filter(pred, "pole_placement", poles)
    filt, sigma = dfest.design(pred.markov("u", 100), pred.markov("y", 100), [0], order=4,
                               strategy="pole_placement", poles=poles)
    assert filt.order == 4
    assert sigma[0] >= sigma[-1]
    a = np.array(filt.markov(30))
    b = np.array(reference.markov(30))
    assert np.linalg.norm(a - b) <= 1e-7 * np.linalg.norm(b)


def test_identify_and_filter_shapes():
    u, y = dfest.closed_loop_data("sub4", 2000, 5)
    xi = dfest.identify(u, y, 20, feedthrough=False)
    assert len(xi.hu) == 21 and xi.hu[1].shape == (2, 2)
    assert np.all(xi.hy[0] == 0)
    filt, _ = dfest.design(xi.hu, xi.hy, [0], markov_length=20, hankel_rows=8, hankel_cols=8, order=4)
    fhat = filt.run(u, y)
    assert fhat.shape == (2000, 1)
    assert np.all(np.isfinite(fhat))


def test_invariant_zero_detection():
    Phi = np.diag([1.2, 0.5])
    Etilde = np.zeros((2, 1))
    C = np.eye(2)
    G = np.array([[1.0], [0.0]])
    zeros, stable = dfest.invariant_zeros(Phi, Etilde, C, G)
    assert not stable
    assert abs(zeros[0] - 1.2) < 1e-9


def test_errors_map_to_python_exceptions():
    with pytest.raises(dfest.ValidationError):
        dfest.identify(np.zeros((5, 1)), np.zeros((5, 1)), 10)
    with pytest.raises(ValueError):
        dfest.registry_predictor("missing")
    with pytest.raises(dfest.NumericalError):
        dfest.identify(np.zeros((200, 1)), np.random.default_rng(0).normal(size=(200, 1)), 3)


def test_compare_runs_all_algorithms():
    report = dfest.compare("sub4", 1, "[evaluation]\ntiming = false\neval_length = 200\n")
    for name in ("Alg0", "Alg1", "Alg2", "Alg3"):
        assert report[name]["ok"], report[name]["error"]
    assert report["Alg0"]["errors"].shape == (200, 1)
