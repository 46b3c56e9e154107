"""Regularized maximum-likelihood training and F1 evaluation."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from foldcrf.anglemodel import lattice
from foldcrf.anglemodel.model import AngleModel, TrainingExample, log_likelihood_grad, potentials
from foldcrf.optim import lbfgs

log = logging.getLogger(__name__)

DEFAULT_SIGMA2 = {"CRF1": 25.0, "CRF2": 25.0, "CNF": 50.0}


class TrainingError(RuntimeError):
    pass


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("FOLDCRF_THREADS", "1")))
    except ValueError:
        return 1


def objective(model: AngleModel, dataset, params: np.ndarray, sigma2: float) -> tuple[float, np.ndarray]:
    """Penalized log-likelihood ``sum log P - |params|^2 / (2 sigma2)`` and gradient.

    Per-example terms may be computed on worker threads but are always
    summed in dataset order.
    """
    workers = n_workers()
    job = lambda ex: log_likelihood_grad(model, ex, params)  # noqa: E731
    if workers > 1 and len(dataset) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, dataset))
    else:
        parts = [job(ex) for ex in dataset]
    ll = 0.0
    grad = np.zeros_like(params)
    for v, g in parts:
        ll += v
        grad += g
    ll -= params @ params / (2 * sigma2)
    grad -= params / sigma2
    return ll, grad


@dataclass
class TrainResult:
    model: AngleModel
    objective: float
    history: list[float] = field(default_factory=list)
    restarts: list[float] = field(default_factory=list)


def _initial_params(model: AngleModel, rng: np.random.Generator) -> np.ndarray:
    p = np.zeros_like(model.params)
    if model.kind == "CNF":
        b = model.blocks(p)
        b["gates"][...] = 0.1 * rng.standard_normal(b["gates"].shape)
        b["out"][...] = 0.01 * rng.standard_normal(b["out"].shape)
    return p


def fit(
    kind: str,
    dataset: list[TrainingExample],
    n_states: int = 100,
    sigma2: float | None = None,
    max_iter: int = 200,
    w: int = 4,
    n_gates: int = 200,
    n_restarts: int = 3,
    seed: int = 0,
) -> TrainResult:
    """Maximize the penalized likelihood with L-BFGS (memory 10).

    CRF objectives are convex and start from zero.  The CNF objective is
    not, so it is run from ``n_restarts`` random starts and the best end
    point is kept.
    """
    if not dataset:
        raise ValueError("empty training set")
    sigma2 = DEFAULT_SIGMA2[kind] if sigma2 is None else float(sigma2)
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    for ex in dataset:
        if ex.labels.min() < 0 or ex.labels.max() >= n_states:
            raise ValueError("label outside the state range")
    template = AngleModel(kind, n_states, w, n_gates if kind == "CNF" else 0)
    rng = np.random.default_rng(seed)
    runs = n_restarts if kind == "CNF" else 1
    best = None
    finals = []
    for r in range(runs):
        x0 = _initial_params(template, rng)

        def neg(x):
            val, g = objective(template, dataset, x, sigma2)
            return -val, -g

        res = lbfgs(neg, x0, max_iter, TrainingError, f"{kind} restart {r}: ")
        val = -res.fun
        log.info("%s restart %d: objective %.6g after %d iterations", kind, r, val, res.n_iter)
        finals.append(val)
        if best is None or val > best.objective:
            best = TrainResult(template.with_params(res.x), val, [-v for v in res.history])
    best.restarts = finals
    return best


def train(kind, dataset, sigma2=None, max_iter=200, **kwargs) -> AngleModel:
    return fit(kind, dataset, sigma2=sigma2, max_iter=max_iter, **kwargs).model


def decode(model: AngleModel, obs) -> np.ndarray:
    return lattice.viterbi(potentials(model, obs))


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def evaluate_f1(model: AngleModel, dataset) -> float:
    """Micro-averaged F1 (percent) of max-product decoded labels."""
    tp = n_pred = n_true = 0
    for ex in dataset:
        pred = decode(model, ex.observation)
        tp += int(np.sum(pred == ex.labels))
        n_pred += len(pred)
        n_true += len(ex.labels)
    if n_pred == 0:
        return 0.0
    return 100.0 * f1_score(tp / n_pred, tp / n_true)
