"""Synthetic generators with closed-form transport maps.

* Gaussian pairs and the linear-Gaussian SCM, whose marginal OT map is affine
  and coincides with the counterfactual map.
* The one-dimensional ``Unif(0, 1)`` pair of perfectly fair models with very
  different fair matching functions.
* A shifted-Gaussian binary classification generator.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import ColumnSpec, Dataset

__all__ = [
    "GaussianPair",
    "LinearGaussianSCM",
    "sqrtm_psd",
    "gaussian_ot_map",
    "scm_counterfactual",
    "uniform_pair_models",
    "uniform_pair_dataset",
    "make_synthetic_classification",
]


def sqrtm_psd(S: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Symmetric square root via eigendecomposition, eigenvalues clamped at ``floor``."""
    S = np.asarray(S, dtype=float)
    w, V = np.linalg.eigh((S + S.T) / 2.0)
    return (V * np.sqrt(np.maximum(w, floor))) @ V.T


def _inv_sqrtm_psd(S, floor=1e-12):
    w, V = np.linalg.eigh((S + S.T) / 2.0)
    return (V / np.sqrt(np.maximum(w, floor))) @ V.T


def _check_spd(S, name):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1] or not np.allclose(S, S.T, atol=1e-10):
        raise ValueError(f"{name} must be a symmetric square matrix")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} is not positive definite") from exc
    return S


@dataclass
class LinearGaussianSCM:
    """``X_s = mu_s + A X_s + eps_s`` with ``eps_s ~ N(0, sigma_s^2 D)``."""

    A: np.ndarray
    D: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    sigma0: float
    sigma1: float

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        d = self.A.shape[0]
        self.D = np.asarray(self.D, dtype=float)
        if self.D.ndim == 1:
            self.D = np.diag(self.D)
        self.mu0 = np.asarray(self.mu0, dtype=float).reshape(d)
        self.mu1 = np.asarray(self.mu1, dtype=float).reshape(d)
        if self.sigma0 <= 0 or self.sigma1 <= 0:
            raise ValueError("noise scales must be positive")
        I = np.eye(d)
        if abs(np.linalg.det(I - self.A)) < 1e-12:
            raise ValueError("I - A must be invertible")
        self.B = np.linalg.inv(I - self.A)

    def mean(self, s: int) -> np.ndarray:
        return self.B @ (self.mu1 if s else self.mu0)

    def cov(self, s: int) -> np.ndarray:
        sig = self.sigma1 if s else self.sigma0
        return sig ** 2 * self.B @ self.D @ self.B.T

    def sample(self, n: int, s: int, rng) -> np.ndarray:
        sig = self.sigma1 if s else self.sigma0
        eps = rng.standard_normal((n, len(self.mu0))) * (sig * np.sqrt(np.diag(self.D)))
        return (self.mean(s) + eps @ self.B.T)


@dataclass
class GaussianPair:
    """Source ``N(mu0, sigma0)`` and target ``N(mu1, sigma1)``."""

    mu0: np.ndarray
    mu1: np.ndarray
    sigma0: np.ndarray
    sigma1: np.ndarray
    scm: Optional[LinearGaussianSCM] = None

    def __post_init__(self):
        self.mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        self.mu1 = np.atleast_1d(np.asarray(self.mu1, dtype=float))
        self.sigma0 = _check_spd(self.sigma0, "sigma0")
        self.sigma1 = _check_spd(self.sigma1, "sigma1")

    @classmethod
    def from_scm(cls, scm: LinearGaussianSCM) -> "GaussianPair":
        return cls(scm.mean(0), scm.mean(1), scm.cov(0), scm.cov(1), scm)

    @classmethod
    def random(cls, d: int, seed=None) -> "GaussianPair":
        rng = np.random.default_rng(seed)
        covs = []
        for _ in range(2):
            M = rng.standard_normal((d, d))
            covs.append(M @ M.T / d + 0.5 * np.eye(d))
        return cls(rng.normal(0, 1, d), rng.normal(0, 1, d), covs[0], covs[1])

    def sample(self, n: int, s: int, rng) -> np.ndarray:
        mu, cov = (self.mu1, self.sigma1) if s else (self.mu0, self.sigma0)
        return rng.multivariate_normal(mu, cov, size=n)


def gaussian_ot_map(pair: GaussianPair):
    """Affine OT map ``x -> W x + b`` pushing ``N(mu0, S0)`` onto ``N(mu1, S1)``.

    ``W = S0^{-1/2} (S0^{1/2} S1 S0^{1/2})^{1/2} S0^{-1/2}``, ``b = mu1 - W mu0``.
    """
    r0 = sqrtm_psd(pair.sigma0)
    r0_inv = _inv_sqrtm_psd(pair.sigma0)
    W = r0_inv @ sqrtm_psd(r0 @ pair.sigma1 @ r0) @ r0_inv
    W = (W + W.T) / 2.0
    return W, pair.mu1 - W @ pair.mu0


def scm_counterfactual(x, s: int, scm: LinearGaussianSCM) -> np.ndarray:
    """Counterfactual of ``x`` (from group ``s``) had it belonged to group ``1 - s``."""
    x = np.asarray(x, dtype=float)
    sig_s, sig_t = (scm.sigma1, scm.sigma0) if s else (scm.sigma0, scm.sigma1)
    return scm.mean(1 - s) + (sig_t / sig_s) * (x - scm.mean(s))


# ---------------------------------------------------------------------------
# Unif(0, 1) pair of perfectly fair models
# ---------------------------------------------------------------------------


def _sign(z):
    # sign(0) := +1 so the models are defined on all of [0, 1]
    return np.where(z >= 0, 1.0, -1.0)


def _first_col(X):
    X = np.asarray(X, dtype=float)
    return X.reshape(len(X), -1)[:, 0] if X.ndim > 1 else X


class _AnalyticModel:
    def __init__(self, name, fn):
        self.name = name
        self._fn = fn

    def __call__(self, X, s):
        x = _first_col(X)
        s = np.broadcast_to(np.asarray(s, dtype=float).reshape(-1), x.shape)
        return self._fn(x, s)

    def __repr__(self):
        return f"<analytic model {self.name}>"


def uniform_pair_models() -> dict:
    """The two perfectly fair 1-D models, their fair matching functions and transport costs.

    ``f_hat`` favours group 0 on ``x >= 1/2`` and group 1 on ``x < 1/2``;
    ``f_tilde`` ignores ``s``. Keys: ``f_hat``, ``f_tilde``, ``match_hat``,
    ``match_tilde``, ``cost_hat`` (0.25), ``cost_tilde`` (0.0).
    """
    f_hat = _AnalyticModel("f_hat", lambda x, s: (_sign(2 * x - 1) * (1 - 2 * s) + 1) / 2)
    f_tilde = _AnalyticModel("f_tilde", lambda x, s: (_sign(2 * x - 1) + 1) / 2)

    def match_hat(x, s):
        x = np.asarray(x, dtype=float)
        return x - _sign((2 * x - 1) * (1 - 2 * np.asarray(s, dtype=float))) / 2

    def match_tilde(x, s):
        return np.asarray(x, dtype=float).copy()

    return {
        "f_hat": f_hat,
        "f_tilde": f_tilde,
        "match_hat": match_hat,
        "match_tilde": match_tilde,
        "cost_hat": 0.25,
        "cost_tilde": 0.0,
    }


def uniform_pair_dataset(n_per_group: int = 512, grid: bool = True, seed=None) -> Dataset:
    """Both groups on ``[0, 1]``: midpoint grid ``(i + 1/2) / n`` or uniform draws.

    Rows are ordered by ``x`` within each group; labels are ``1[x >= 1/2]``.
    """
    if grid:
        x = (np.arange(n_per_group) + 0.5) / n_per_group
        x0 = x1 = x
    else:
        rng = np.random.default_rng(seed)
        x0 = np.sort(rng.uniform(0, 1, n_per_group))
        x1 = np.sort(rng.uniform(0, 1, n_per_group))
    X = np.concatenate([x0, x1])[:, None]
    s = np.repeat([0, 1], n_per_group)
    y = (X[:, 0] >= 0.5).astype(int)
    kind = "grid" if grid else "uniform"
    return Dataset(X, y, s, [ColumnSpec("x", "continuous")], ["x"], f"uniform-pair {kind} n={n_per_group}")


# ---------------------------------------------------------------------------
# shifted-Gaussian classification
# ---------------------------------------------------------------------------


def make_synthetic_classification(
    n: int = 4000,
    d: int = 5,
    group_shift: float = 1.5,
    label_rule: str = "logistic",
    seed=None,
    p_group1: float = 0.5,
    label_scale: float = 3.0,
    correlation: float = 0.97,
    label_gap: Optional[float] = None,
    label_axis: str = "major",
) -> Dataset:
    """Two Gaussian groups with a mean shift and group-dependent label rates.

    ``x = z + group_shift * s * a`` where ``z`` is equicorrelated Gaussian
    (unit variances, pairwise ``correlation``, so most of the variance lies
    along the unit diagonal ``u``) and ``a = (e_1 - e_2) / sqrt(2)`` is
    orthogonal to ``u``. Labels depend on the standardised score
    ``t = b . x / sd(b . z) + label_gap * (s - 1/2)`` through ``label_rule``,
    where ``b = u`` for ``label_axis="major"`` and
    ``b = (e_1 + e_2 - 2 e_3) / sqrt(6)`` (orthogonal to ``u`` and ``a``, a
    low-variance direction) for ``label_axis="minor"``:

    * ``"logistic"`` -- ``y ~ Bernoulli(sigmoid(label_scale * t))``
    * ``"threshold"`` -- ``y = 1[t >= 0]``

    ``label_gap`` defaults to ``group_shift``, so ``group_shift = 0`` gives
    identically distributed groups.
    """
    if label_rule not in ("logistic", "threshold"):
        raise ValueError(f"unknown label_rule {label_rule!r}")
    if d < 2:
        raise ValueError("d must be at least 2")
    if not -1.0 / (d - 1) < correlation < 1.0:
        raise ValueError(f"correlation must lie in (-1/(d-1), 1), got {correlation}")
    if label_axis not in ("major", "minor"):
        raise ValueError(f"label_axis must be 'major' or 'minor', got {label_axis!r}")
    if label_axis == "minor" and d < 3:
        raise ValueError("label_axis='minor' needs d >= 3")
    if label_gap is None:
        label_gap = group_shift
    rng = np.random.default_rng(seed)
    s = (rng.random(n) < p_group1).astype(int)
    u = np.ones(d) / np.sqrt(d)
    a = np.zeros(d)
    a[0], a[1] = 1.0, -1.0
    a /= np.sqrt(2.0)
    sd_u = np.sqrt(1.0 - correlation + d * correlation)
    z = rng.standard_normal((n, d))
    along = z @ u
    # cov = (1 - r) I + r 11^T: rescale the component along u separately
    z = np.sqrt(1.0 - correlation) * (z - along[:, None] * u) + sd_u * along[:, None] * u
    X = z + group_shift * s[:, None] * a
    if label_axis == "major":
        t = X @ u / sd_u + label_gap * (s - 0.5)
    else:
        b = np.zeros(d)
        b[0], b[1], b[2] = 1.0, 1.0, -2.0
        b /= np.sqrt(6.0)
        t = X @ b / np.sqrt(1.0 - correlation) + label_gap * (s - 0.5)
    if label_rule == "threshold":
        y = (t >= 0).astype(int)
    else:
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-label_scale * t))).astype(int)
    cols = [ColumnSpec(f"x{k}", "continuous") for k in range(d)]
    note = (f"synthetic n={n} d={d} shift={group_shift} gap={label_gap} corr={correlation} "
            f"axis={label_axis} rule={label_rule} seed={seed}")
    return Dataset(X, y, s, cols, [c.name for c in cols], note)
