"""scikit-learn compatible wrapper around episodic training."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import pairwise_distances
from .datasets import Dataset
from .episodes import DISTANCE_MODES, TrainConfig, train
from .heads import Head, HeadKind, head_probs
from .net import forward


class ProtoNetClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Prototype classifier whose embedding is learned from N-way K-shot episodes.

    ``fit`` trains the embedding on episodes drawn from ``(X, y)``; the
    checkpoint with the best validation accuracy is kept. Afterwards every
    training class is represented by the mean embedding of all of its
    points, so ``predict``/``predict_proba`` work over ``classes_``.
    ``predict_proba_few_shot`` classifies against an arbitrary support set,
    which is how the model is meant to be used on unseen classes.

    Parameters
    ----------
    head : {"DR", "SoftmaxSq"}
        Distance-ratio head (trainable ``rho``) or softmax over negative
        squared distances.
    mode : {"prototype", "nearest_neighbor"}
        Class distance used during training and few-shot prediction.
    hidden : tuple of int
        Hidden and output sizes of the embedding MLP.
    n_way, k_shot, n_query : int
        Episode shape.
    n_episodes : int
        Training episodes; a checkpoint is taken every 100.
    lr : float
        Adam learning rate.
    val_episodes : int
        Validation episodes per checkpoint.
    random_state : int
        Seed for initialization and episode sampling.
    """

    def __init__(
        self,
        head="DR",
        mode="prototype",
        hidden=(64, 32),
        n_way=5,
        k_shot=1,
        n_query=16,
        n_episodes=2000,
        lr=1e-3,
        val_episodes=50,
        random_state=0,
    ):
        self.head = head
        self.mode = mode
        self.hidden = hidden
        self.n_way = n_way
        self.k_shot = k_shot
        self.n_query = n_query
        self.n_episodes = n_episodes
        self.lr = lr
        self.val_episodes = val_episodes
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            n_way=self.n_way,
            k_shot=self.k_shot,
            n_query=self.n_query,
            episodes=self.n_episodes,
            lr=self.lr,
            head=HeadKind.parse(self.head).value,
            mode=self.mode,
            seed=int(self.random_state),
            hidden=tuple(self.hidden),
            val_episodes=self.val_episodes,
        )

    @staticmethod
    def _encode(y, classes):
        return np.searchsorted(classes, y)

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        if self.mode not in DISTANCE_MODES:
            raise ValueError(f"mode must be one of {DISTANCE_MODES}")
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        codes = self._encode(y, self.classes_)
        train_ds = Dataset(X, codes, {"train": range(len(self.classes_))})
        if X_val is None:
            val_ds = Dataset(X, codes, {"val": range(len(self.classes_))})
        else:
            X_val, y_val = check_X_y(X_val, y_val, dtype=np.float64)
            val_classes, val_codes = np.unique(y_val, return_inverse=True)
            val_ds = Dataset(X_val, val_codes, {"val": range(len(val_classes))})
        self.train_log_ = train(train_ds, self._config(), val_dataset=val_ds)
        self.params_ = self.train_log_.best_params
        Z = forward(self.params_, X)
        self.prototypes_ = np.stack([Z[codes == c].mean(axis=0) for c in range(len(self.classes_))])
        return self

    @property
    def rho_(self):
        check_is_fitted(self, "params_")
        return self.params_.rho

    def _head(self) -> Head:
        kind = HeadKind.parse(self.head)
        log_rho = self.params_.log_rho if self.params_.log_rho is not None else 2.0
        return Head(kind, log_rho=log_rho)

    def transform(self, X):
        """Embed ``X`` with the selected network."""
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return forward(self.params_, X)

    def predict_proba(self, X):
        Z = self.transform(X)
        return head_probs(pairwise_distances(Z, self.prototypes_), self._head())

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def predict_proba_few_shot(self, support_X, support_y, query_X):
        """Confidences of ``query_X`` over the classes of a labeled support set.

        Returns ``(classes, probs)`` with one column per sorted support class.
        """
        support_X, support_y = check_X_y(support_X, support_y, dtype=np.float64)
        zs = self.transform(support_X)
        zq = self.transform(query_X)
        classes = np.unique(support_y)
        d_all = pairwise_distances(zq, zs)
        cols = []
        for c in classes:
            members = support_y == c
            if self.mode == "prototype":
                cols.append(pairwise_distances(zq, zs[members].mean(axis=0, keepdims=True))[:, 0])
            else:
                cols.append(d_all[:, members].min(axis=1))
        return classes, head_probs(np.stack(cols, axis=1), self._head())
