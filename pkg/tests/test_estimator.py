import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fairmatch import FairMatchingClassifier
from fairmatch.audit import evaluate_model
from fairmatch.synthetic import make_synthetic_classification


@pytest.fixture(scope="module")
def data():
    return make_synthetic_classification(n=400, seed=0)


def test_params_and_clone():
    est = FairMatchingClassifier(lam=2.0, alpha=5.0, epochs=3)
    assert est.get_params()["lam"] == 2.0
    other = clone(est)
    assert other.get_params() == est.get_params() and other is not est
    est.set_params(method="reg")
    assert est.method == "reg"


def test_fit_predict(data):
    est = FairMatchingClassifier(epochs=5, batch_size=64, match_batch_size=32).fit(data.X, data.y, data.s)
    proba = est.predict_proba(data.X, data.s)
    assert proba.shape == (data.n, 2)
    np.testing.assert_allclose(proba.sum(1), 1.0)
    pred = est.predict(data.X, data.s)
    assert set(np.unique(pred)) <= {0, 1}
    assert est.score(data.X, data.y, data.s) == pytest.approx(np.mean(pred == data.y))
    assert len(est.history_) == 5 and est.n_features_in_ == 5
    # a scalar sensitive value is broadcast
    assert est.predict(data.X[:3], 1).shape == (3,)
    # the fitted estimator is a score function for the audit tools
    assert 0.0 <= evaluate_model(est, data).accuracy <= 1.0


def test_fit_is_deterministic(data):
    a = FairMatchingClassifier(epochs=2, batch_size=64, match_batch_size=32, random_state=3)
    b = clone(a)
    np.testing.assert_array_equal(a.fit(data.X, data.y, data.s).predict_proba(data.X, data.s),
                                  b.fit(data.X, data.y, data.s).predict_proba(data.X, data.s))


def test_validation(data):
    est = FairMatchingClassifier(epochs=1)
    with pytest.raises(NotFittedError):
        est.predict(data.X, data.s)
    with pytest.raises(ValueError, match="y"):
        est.fit(data.X, data.y + 1, data.s)
    with pytest.raises(ValueError, match="sensitive"):
        est.fit(data.X, data.y, data.s[:-1])
    with pytest.raises(ValueError, match="sensitive"):
        est.fit(data.X, data.y, data.s * 2)
    est.fit(data.X, data.y, data.s)
    with pytest.raises(ValueError, match="features"):
        est.predict(data.X[:, :3], data.s)
    with pytest.raises(ValueError, match="sensitive"):
        est.score(data.X, data.y)
    with pytest.raises(ValueError, match="method"):
        FairMatchingClassifier(method="nope").fit(data.X, data.y, data.s)
