"""scikit-learn style wrapper around the trainer."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import ColumnSpec, Dataset
from .trainer import TrainConfig, train

__all__ = ["FairMatchingClassifier"]


def _check_binary(v, name):
    v = np.asarray(v).ravel()
    if not np.isin(v, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return v.astype(np.int64)


class FairMatchingClassifier(ClassifierMixin, BaseEstimator):
    """Binary MLP classifier trained with an OT-matched fairness penalty.

    ``method="ftm"`` penalises score gaps between transport-matched pairs,
    ``"reg"`` the squared mean-score gap and ``"unfair"`` nothing. The
    sensitive attribute is passed separately to :meth:`fit` and the
    prediction methods.

    Parameters
    ----------
    lam : float
        Penalty weight.
    alpha : float
        Label weight of the matching cost (0 matches on inputs only).
    epochs, batch_size, match_batch_size, lr, lr_decay : training settings.
    method : {"ftm", "reg", "unfair"}
    include_sensitive : bool
        Append ``s`` to the network input.
    random_state : int
        Seed for initialisation and batch sampling.
    """

    def __init__(self, lam=1.0, alpha=0.0, epochs=200, batch_size=1024, match_batch_size=1024, lr=1e-3,
                 lr_decay=0.95, method="ftm", include_sensitive=True, random_state=0):
        self.lam = lam
        self.alpha = alpha
        self.epochs = epochs
        self.batch_size = batch_size
        self.match_batch_size = match_batch_size
        self.lr = lr
        self.lr_decay = lr_decay
        self.method = method
        self.include_sensitive = include_sensitive
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(lam=float(self.lam), alpha=float(self.alpha), epochs=int(self.epochs),
                           batch_size=int(self.batch_size), match_batch_size=int(self.match_batch_size),
                           seed=int(self.random_state), lr=float(self.lr), lr_decay=float(self.lr_decay),
                           method=self.method, include_sensitive=bool(self.include_sensitive))

    def fit(self, X, y, sensitive_features):
        """Train on ``X`` with 0/1 labels ``y`` and 0/1 ``sensitive_features``."""
        X, y = check_X_y(X, y, dtype=float)
        y = _check_binary(y, "y")
        s = _check_binary(sensitive_features, "sensitive_features")
        if len(s) != len(X):
            raise ValueError(f"sensitive_features has {len(s)} entries, X has {len(X)} rows")
        cols = [ColumnSpec(f"x{k}", "continuous") for k in range(X.shape[1])]
        data = Dataset(X, y, s, cols, [c.name for c in cols], "estimator fit")
        self.params_, self.history_ = train(data, self._config())
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def _scores(self, X, sensitive_features):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, the model was fitted with {self.n_features_in_}")
        s = _check_binary(np.broadcast_to(np.asarray(sensitive_features).ravel(), (len(X),)), "sensitive_features")
        return self.params_(X, s)

    def predict_proba(self, X, sensitive_features):
        p = self._scores(X, sensitive_features)
        return np.column_stack([1.0 - p, p])

    def predict(self, X, sensitive_features):
        return (self._scores(X, sensitive_features) >= 0.5).astype(np.int64)

    def score(self, X, y, sensitive_features=None, sample_weight=None):
        if sensitive_features is None:
            raise ValueError("score needs sensitive_features")
        from sklearn.metrics import accuracy_score

        return accuracy_score(y, self.predict(X, sensitive_features), sample_weight=sample_weight)

    def __call__(self, X, s):
        """Score function ``f(X, s)`` so the fitted estimator works with the audit tools."""
        return self._scores(X, s)
