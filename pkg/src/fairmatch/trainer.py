"""Training loops: FTM (MDP penalty on OT-matched mini-batches), Reg and Unfair."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from . import metrics as M
from ._seeding import derive_seed
from .audit import evaluate_model
from .matching import sample_batch
from .model import AdamState, ModelParams, adam_step, backward, cross_entropy, forward_cache, init_params
from .ot import build_cost_matrix, solve_assignment

log = logging.getLogger(__name__)

METHODS = ("ftm", "reg", "unfair")

# lambda grids used for the trade-off sweeps
FTM_LAMBDA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.5, 2.0, 3.0, 5.0, 10.0)
REG_LAMBDA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2, 1.5, 1.8, 2.0, 3.0, 5.0, 10.0, 20.0,
                   50.0, 100.0)

__all__ = [
    "TrainConfig",
    "FTM_LAMBDA_GRID",
    "REG_LAMBDA_GRID",
    "ftm_epoch",
    "reg_epoch",
    "train",
    "sweep",
    "calibrate_lambda",
    "transport_map_mdp",
]


@dataclass
class TrainConfig:
    """Hyper-parameters of one training run.

    ``lam`` weights the fairness penalty, ``alpha`` the label term of the
    matching cost (0 = marginal OT map). ``batch_size`` is the loss batch
    size and ``match_batch_size`` the per-group matching batch size.
    ``source_direction`` is 0, 1 or ``"alternate"``; ``resample`` is
    ``"step"`` or ``"epoch"`` (how often matching batches are redrawn).
    """

    lam: float = 1.0
    alpha: float = 0.0
    epochs: int = 200
    batch_size: int = 1024
    match_batch_size: int = 1024
    source_direction: object = "alternate"
    seed: int = 0
    lr: float = 1e-3
    lr_decay: float = 0.95
    method: str = "ftm"
    include_sensitive: bool = True
    resample: str = "step"
    probe_mdp_batches: int = 5

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.match_batch_size < 1 or self.batch_size < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.lam < 0 or self.alpha < 0:
            raise ValueError("lam and alpha must be >= 0")
        if self.source_direction not in (0, 1, "alternate"):
            raise ValueError("source_direction must be 0, 1 or 'alternate'")
        if self.resample not in ("step", "epoch"):
            raise ValueError("resample must be 'step' or 'epoch'")

    def to_dict(self) -> dict:
        return asdict(self)


class _Run:
    """Mutable training state shared by the epoch functions."""

    def __init__(self, data, config: TrainConfig, params: Optional[ModelParams] = None):
        self.config = config
        self.idx = (data.group_index(0), data.group_index(1))
        if len(self.idx[0]) == 0 or len(self.idx[1]) == 0:
            raise ValueError("training data must contain both sensitive groups")
        self.params = params if params is not None else init_params(
            data.d, config.include_sensitive, seed=derive_seed(config.seed, "init"))
        self.opt = AdamState.for_params(self.params, lr=config.lr, decay=config.lr_decay)
        self.loss_rng = np.random.default_rng(derive_seed(config.seed, "loss"))
        self.match_rng = np.random.default_rng(derive_seed(config.seed, "match"))
        self.step = 0
        self.epoch = 0


def _direction(config: TrainConfig, step: int) -> int:
    if config.source_direction == "alternate":
        return step % 2
    return int(config.source_direction)


def _match_batches(run: _Run, data, src: int):
    m = run.config.match_batch_size
    return sample_batch(run.match_rng, run.idx[src], m), sample_batch(run.match_rng, run.idx[1 - src], m)


def _matched_targets(data, src_rows, tgt_rows, alpha):
    if alpha > 0:
        cost = build_cost_matrix(data.X[src_rows], data.X[tgt_rows], data.y[src_rows], data.y[tgt_rows], alpha)
    else:
        cost = build_cost_matrix(data.X[src_rows], data.X[tgt_rows])
    return tgt_rows[solve_assignment(cost).permutation]


def _loss_batches(run: _Run, n: int):
    perm = run.loss_rng.permutation(n)
    bs = run.config.batch_size
    return [perm[k:k + bs] for k in range(0, n, bs)]


def ftm_epoch(run: _Run, data) -> dict:
    """One pass of FTM updates over the loss batches.

    Each step combines the mean cross-entropy on the loss batch with
    ``lam * mean |f(x, s) - f(T(x), s')|`` over an OT-matched batch pair.
    The assignment is held fixed when differentiating; gradient flows into
    both matched predictions.
    """
    cfg = run.config
    use_penalty = cfg.method == "ftm" and cfg.lam > 0
    losses, penalties, same_label = [], [], []
    fixed = {}
    if use_penalty and cfg.resample == "epoch":
        for src in (0, 1):
            src_rows, tgt_rows = _match_batches(run, data, src)
            fixed[src] = (src_rows, _matched_targets(data, src_rows, tgt_rows, cfg.alpha))
    for rows in _loss_batches(run, data.n):
        X, s, y = data.X[rows], data.s[rows], data.y[rows]
        if use_penalty:
            src = _direction(cfg, run.step)
            if src in fixed:
                src_rows, matched = fixed[src]
            else:
                src_rows, tgt_rows = _match_batches(run, data, src)
                matched = _matched_targets(data, src_rows, tgt_rows, cfg.alpha)
            m = len(src_rows)
            X_all = np.vstack([X, data.X[src_rows], data.X[matched]])
            s_all = np.concatenate([s, np.full(m, src), np.full(m, 1 - src)])
            scores, cache = forward_cache(run.params, X_all, s_all)
            n_loss = len(rows)
            ce, ce_grad = cross_entropy(scores[:n_loss], y)
            diff = scores[n_loss:n_loss + m] - scores[n_loss + m:]
            sign = np.sign(diff)
            grad = np.concatenate([ce_grad / n_loss, cfg.lam * sign / m, -cfg.lam * sign / m])
            penalties.append(float(np.abs(diff).mean()))
            same_label.append(float(np.mean(data.y[src_rows] == data.y[matched])))
        else:
            scores, cache = forward_cache(run.params, X, s)
            ce, ce_grad = cross_entropy(scores, y)
            grad = ce_grad / len(rows)
        losses.append(float(ce.mean()))
        adam_step(run.params, backward(run.params, cache, grad), run.opt)
        run.step += 1
    return _epoch_record(run, losses, penalties, same_label)


def reg_epoch(run: _Run, data) -> dict:
    """One pass of cross-entropy + ``lam * (mean f | s=0 - mean f | s=1)^2`` on each loss batch."""
    cfg = run.config
    losses, penalties = [], []
    for rows in _loss_batches(run, data.n):
        X, s, y = data.X[rows], data.s[rows], data.y[rows]
        scores, cache = forward_cache(run.params, X, s)
        ce, grad = cross_entropy(scores, y)
        grad = grad / len(rows)
        g0, g1 = s == 0, s == 1
        if g0.any() and g1.any():
            gap = scores[g0].mean() - scores[g1].mean()
            penalties.append(float(gap ** 2))
            grad = grad + cfg.lam * 2.0 * gap * (g0 / g0.sum() - g1 / g1.sum())
        losses.append(float(ce.mean()))
        adam_step(run.params, backward(run.params, cache, grad), run.opt)
        run.step += 1
    return _epoch_record(run, losses, penalties, [])


def _epoch_record(run: _Run, losses, penalties, same_label) -> dict:
    rec = {
        "epoch": run.epoch,
        "lr": run.opt.lr,
        "loss": float(np.mean(losses)),
        "penalty": float(np.mean(penalties)) if penalties else None,
        "same_label_frac": float(np.mean(same_label)) if same_label else None,
    }
    return rec


def _probe(params, data) -> dict:
    scores = params(data.X, data.s)
    f0, f1 = M.split_by_group(scores, data.s)
    return {
        "train_acc": float(np.mean((scores >= 0.5) == data.y)),
        "train_dp_bar": M.dp_bar_gap(f0, f1),
        "train_wdp": M.wasserstein_dp(f0, f1),
    }


def transport_map_mdp(model, data, m: int, alpha: float = 0.0, num_batches: int = 5, seed=0) -> float:
    """MDP of ``model`` under the (marginal or joint) OT map, averaged over batches and both directions."""
    idx = (data.group_index(0), data.group_index(1))
    vals = []
    for b in range(num_batches):
        rng = np.random.default_rng([int(seed), b])
        for src in (0, 1):
            src_rows = sample_batch(rng, idx[src], m)
            tgt_rows = sample_batch(rng, idx[1 - src], m)
            matched = _matched_targets(data, src_rows, tgt_rows, alpha)
            vals.append(np.mean(np.abs(model(data.X[src_rows], src) - model(data.X[matched], 1 - src))))
    return float(np.mean(vals))


def train(data, config: TrainConfig, callback=None):
    """Train a model; returns ``(params, log)`` with one record per epoch.

    The last record also carries ``train_map_mdp``: the trained model's MDP
    under the training transport map on fresh training batches (FTM only).
    """
    run = _Run(data, config)
    epoch_fn = reg_epoch if config.method == "reg" else ftm_epoch
    history = []
    for epoch in range(config.epochs):
        run.epoch = epoch
        rec = epoch_fn(run, data)
        rec.update(_probe(run.params, data))
        history.append(rec)
        run.opt.end_epoch()
        if callback is not None:
            callback(rec)
    if config.method == "ftm" and config.probe_mdp_batches > 0:
        history[-1]["train_map_mdp"] = transport_map_mdp(
            run.params, data, config.match_batch_size, config.alpha, config.probe_mdp_batches,
            derive_seed(config.seed, "probe"))
    return run.params, history


def _sweep_point(train_data, test_data, config, audit_m, audit_batches):
    params, history = train(train_data, config)
    report = evaluate_model(params, test_data, m=audit_m, num_batches=audit_batches,
                            seed=derive_seed(config.seed, "audit"))
    return config.lam, report, params, history


def sweep(train_data, test_data, base: TrainConfig, lambda_grid: Sequence[float], jobs: int = 1,
          audit_m=None, audit_batches: int = 10) -> List[tuple]:
    """Train one model per ``lam`` and evaluate on ``test_data``.

    Returns ``(lam, FairnessReport, params, history)`` tuples sorted by ``lam``.
    """
    grid = sorted(float(v) for v in lambda_grid)
    configs = [replace(base, lam=lam) for lam in grid]
    if jobs == 1:
        out = [_sweep_point(train_data, test_data, c, audit_m, audit_batches) for c in configs]
    else:
        from joblib import Parallel, delayed

        out = Parallel(n_jobs=jobs)(
            delayed(_sweep_point)(train_data, test_data, c, audit_m, audit_batches) for c in configs)
    return sorted(out, key=lambda r: r[0])


def _measure(report: M.FairnessReport, measure: str) -> float:
    return float(getattr(report, measure))


def calibrate_lambda(train_data, eval_data, base: TrainConfig, target: float, measure: str = "dp",
                     tol: float = 0.005, lam_min: float = 1e-3, lam_max: float = 100.0, max_iter: int = 10,
                     lam_init: Optional[float] = None):
    """Search ``lam`` so that ``measure`` on ``eval_data`` lands within ``tol`` of ``target``.

    Bisection on ``log(lam)``, assuming the measure decreases with ``lam``.
    ``lam_init``, when given, is tried first and narrows the bracket.
    Returns ``(lam, report, params)`` for the closest run found.
    """
    cache = {}

    def run(lam):
        params, _ = train(train_data, replace(base, lam=lam))
        report = evaluate_model(params, eval_data)
        cache[lam] = (report, params)
        return _measure(report, measure)

    def best():
        lam = min(cache, key=lambda k: abs(_measure(cache[k][0], measure) - target))
        return lam, cache[lam][0], cache[lam][1]

    lo, hi = math.log(lam_min), math.log(lam_max)
    if lam_init is not None and lam_min < lam_init < lam_max:
        val = run(lam_init)
        if abs(val - target) <= tol:
            return best()
        if val > target:
            lo = math.log(lam_init)
        else:
            hi = math.log(lam_init)
    if lo == math.log(lam_min) and run(lam_min) <= target + tol:
        return best()
    if hi == math.log(lam_max) and run(lam_max) > target + tol:
        return best()
    for _ in range(max_iter):
        mid = (lo + hi) / 2.0
        val = run(math.exp(mid))
        if abs(val - target) <= tol:
            break
        if val > target:
            lo = mid
        else:
            hi = mid
    return best()
