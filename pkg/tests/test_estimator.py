import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ratioproto.datasets import SyntheticConfig, generate_synthetic
from ratioproto.estimator import ProtoNetClassifier

FAST = dict(hidden=(16, 8), n_way=3, n_query=5, n_episodes=300, val_episodes=5)


@pytest.fixture(scope="module")
def blobs():
    ds = generate_synthetic(SyntheticConfig(n_classes=6, dim=5, points_per_class=30, split_fractions=(1.0, 0.0, 0.0)), 0)
    return ds.X, np.array(["c%d" % v for v in ds.y])


def test_get_params_and_clone():
    est = ProtoNetClassifier(head="SoftmaxSq", lr=0.01)
    params = est.get_params()
    assert params["head"] == "SoftmaxSq" and params["lr"] == 0.01
    twin = clone(est)
    assert twin.get_params() == params and twin is not est


@pytest.mark.parametrize("head", ["DR", "SoftmaxSq"])
def test_fit_predict(blobs, head):
    X, y = blobs
    est = ProtoNetClassifier(head=head, **FAST).fit(X, y)
    assert set(est.classes_) == set(y)
    proba = est.predict_proba(X)
    assert proba.shape == (len(X), 6)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)
    assert est.score(X, y) > 0.9
    assert est.transform(X).shape == (len(X), 8)
    assert (est.rho_ is None) == (head == "SoftmaxSq")


def test_few_shot(blobs):
    X, y = blobs
    est = ProtoNetClassifier(**FAST).fit(X, y)
    rng = np.random.default_rng(0)
    support = np.r_[[rng.choice(np.flatnonzero(y == c)) for c in ("c0", "c3")]]
    query = np.flatnonzero(np.isin(y, ["c0", "c3"]))
    classes, probs = est.predict_proba_few_shot(X[support], y[support], X[query])
    assert list(classes) == ["c0", "c3"]
    assert np.mean(classes[np.argmax(probs, axis=1)] == y[query]) > 0.9


def test_deterministic(blobs):
    X, y = blobs
    a = ProtoNetClassifier(**FAST, random_state=4).fit(X, y).predict_proba(X)
    b = ProtoNetClassifier(**FAST, random_state=4).fit(X, y).predict_proba(X)
    assert a.tobytes() == b.tobytes()


def test_validation_errors(blobs):
    X, y = blobs
    with pytest.raises(ValueError):
        ProtoNetClassifier(mode="cosine").fit(X, y)
    est = ProtoNetClassifier(**FAST).fit(X, y)
    with pytest.raises(ValueError):
        est.predict(X[:, :3])
    with pytest.raises(NotFittedError):
        ProtoNetClassifier().predict(X)
