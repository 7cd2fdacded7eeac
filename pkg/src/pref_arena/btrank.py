"""Bradley-Terry strength fitting and ranking.

Each model i carries a positive strength theta_i; the probability that i
beats j is theta_i / (theta_i + theta_j). We minimize the negative
log-likelihood of the observed pairwise outcomes by plain gradient descent
in beta = ln(theta) space: positivity holds by construction, the objective
is convex, and the sum-to-zero gauge pins the otherwise scale-free solution.

Binary mode consumes the {1, 0, -1} preference matrix (one Bernoulli
observation per compared pair); counts mode consumes raw win counts, which
keeps the per-sample evidence and usually has a finite unregularized
optimum. A pseudo-count lambda adds that many wins in both directions of
every observed pair, guaranteeing a finite optimum under perfect separation
(e.g. an undefeated model) while preserving the ordering.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .aggregate import PreferenceMatrix, TallySet


class FitError(ValueError):
    """The fit cannot proceed on this input."""


class DisconnectedGraphError(FitError):
    """The comparison graph splits into components with no shared comparisons."""

    def __init__(self, components: list[list[str]]):
        self.components = components
        named = "; ".join("{" + ", ".join(c) + "}" for c in components)
        super().__init__(
            f"comparison graph is disconnected: {named}. Strength ratios across "
            f"components are meaningless; fit each component separately."
        )


class DivergenceError(FitError):
    """No finite optimum exists (perfect separation) or the fit blew up."""


class FitMode(str, Enum):
    BINARY = "binary"
    COUNTS = "counts"


@dataclass
class FitConfig:
    mode: FitMode = FitMode.BINARY
    lam: float = 0.01
    learning_rate: float = 0.05
    max_iters: int = 10_000
    grad_tol: float = 1e-8
    beta_limit: float = 50.0

    def __post_init__(self) -> None:
        self.mode = FitMode(self.mode)
        if self.lam < 0:
            raise FitError("pseudo-count lambda must be >= 0")
        if self.learning_rate <= 0:
            raise FitError("learning_rate must be > 0")
        if self.max_iters < 1:
            raise FitError("max_iters must be >= 1")


@dataclass
class StrengthVector:
    """Fitted log-strengths, centered so they sum to zero."""

    models: list[str]
    beta: np.ndarray

    def __post_init__(self) -> None:
        self.beta = np.asarray(self.beta, dtype=float)
        if self.beta.shape != (len(self.models),):
            raise FitError("beta length does not match model count")

    @property
    def theta(self) -> np.ndarray:
        return np.exp(self.beta)

    def theta_of(self, model: str) -> float:
        return float(np.exp(self.beta[self.models.index(model)]))


@dataclass
class RankResult:
    """Fit output: the descending-strength ordering plus diagnostics."""

    ordering: list[int]
    strengths: StrengthVector
    iterations: int
    grad_norm: float
    converged: bool
    mode: FitMode
    lam: float
    tie_break_used: bool = False

    def ranked_models(self) -> list[tuple[str, float]]:
        theta = self.strengths.theta
        return [(self.strengths.models[i], float(theta[i])) for i in self.ordering]

    def to_json_dict(self) -> dict:
        theta = self.strengths.theta
        models = self.strengths.models
        return {
            "ordering": [models[i] for i in self.ordering],
            "theta": {m: float(theta[i]) for i, m in enumerate(models)},
            "beta": {m: float(self.strengths.beta[i]) for i, m in enumerate(models)},
            "diagnostics": {
                "iterations": self.iterations,
                "grad_norm": self.grad_norm,
                "converged": self.converged,
                "mode": self.mode.value,
                "lambda": self.lam,
                "tie_break_used": self.tie_break_used,
            },
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")


def win_prob(theta_i: float, theta_j: float) -> float:
    """Probability that the first model beats the second."""
    if theta_i <= 0 or theta_j <= 0:
        raise FitError(f"strengths must be positive, got ({theta_i}, {theta_j})")
    return theta_i / (theta_i + theta_j)


@dataclass
class Observations:
    """Pairwise win evidence reduced to parallel arrays over observed pairs."""

    models: list[str]
    i_idx: np.ndarray
    j_idx: np.ndarray
    wins_i: np.ndarray
    wins_j: np.ndarray
    mode: FitMode = FitMode.BINARY

    @classmethod
    def from_matrix(cls, matrix: PreferenceMatrix) -> "Observations":
        pairs = matrix.observed_pairs()
        i_idx = np.array([i for i, _ in pairs], dtype=int)
        j_idx = np.array([j for _, j in pairs], dtype=int)
        wins_i = np.array([matrix.w[i, j] for i, j in pairs], dtype=float)
        return cls(
            models=list(matrix.models),
            i_idx=i_idx,
            j_idx=j_idx,
            wins_i=wins_i,
            wins_j=1.0 - wins_i,
            mode=FitMode.BINARY,
        )

    @classmethod
    def from_tallies(cls, tally_set: TallySet) -> "Observations":
        index = {m: k for k, m in enumerate(tally_set.models)}
        i_list, j_list, wi, wj = [], [], [], []
        for (a, b), t in sorted(
            tally_set.oriented().items(), key=lambda kv: (index[kv[0][0]], index[kv[0][1]])
        ):
            i_list.append(index[a])
            j_list.append(index[b])
            wi.append(float(t.wins_a))
            wj.append(float(t.wins_b))
        return cls(
            models=list(tally_set.models),
            i_idx=np.array(i_list, dtype=int),
            j_idx=np.array(j_list, dtype=int),
            wins_i=np.array(wi, dtype=float),
            wins_j=np.array(wj, dtype=float),
            mode=FitMode.COUNTS,
        )


def _effective_pairs(obs: Observations, lam: float):
    """Drop pairs carrying no evidence (all-tie tallies with lam == 0)."""
    weight = obs.wins_i + obs.wins_j + 2.0 * lam
    keep = weight > 0
    return obs.i_idx[keep], obs.j_idx[keep], obs.wins_i[keep], obs.wins_j[keep]


def nll(obs: Observations, beta: np.ndarray, lam: float = 0.0) -> float:
    """Negative log-likelihood of the observed wins, lambda-augmented."""
    beta = np.asarray(beta, dtype=float)
    i_idx, j_idx, wins_i, wins_j = _effective_pairs(obs, lam)
    if len(i_idx) == 0:
        raise FitError("no observed pairs")
    bi, bj = beta[i_idx], beta[j_idx]
    log_denom = np.logaddexp(bi, bj)
    total = (wins_i + lam) * (bi - log_denom) + (wins_j + lam) * (bj - log_denom)
    return float(-np.sum(total))


def grad_nll(obs: Observations, beta: np.ndarray, lam: float = 0.0) -> np.ndarray:
    """Analytic gradient of :func:`nll` with respect to beta.

    Per pair, d(nll)/d(beta_i) = -(w_ij + lam) + (w_ij + w_ji + 2 lam) * p_ij
    with p_ij the model-i win probability; components always sum to zero.
    """
    beta = np.asarray(beta, dtype=float)
    i_idx, j_idx, wins_i, wins_j = _effective_pairs(obs, lam)
    if len(i_idx) == 0:
        raise FitError("no observed pairs")
    bi, bj = beta[i_idx], beta[j_idx]
    weight = wins_i + wins_j + 2.0 * lam
    p_i = 1.0 / (1.0 + np.exp(bj - bi))
    grad = np.zeros_like(beta)
    np.add.at(grad, i_idx, -(wins_i + lam) + weight * p_i)
    np.add.at(grad, j_idx, -(wins_j + lam) + weight * (1.0 - p_i))
    return grad


def _check_connectivity(obs: Observations, lam: float) -> None:
    m = len(obs.models)
    i_idx, j_idx, wins_i, wins_j = _effective_pairs(obs, lam)
    if len(i_idx) == 0:
        raise FitError("no observed pairs")
    ones = np.ones(len(i_idx))
    undirected = csr_matrix((ones, (i_idx, j_idx)), shape=(m, m))
    n_weak, labels = connected_components(undirected, directed=False)
    if n_weak > 1:
        components: dict[int, list[str]] = {}
        for k, model in enumerate(obs.models):
            components.setdefault(int(labels[k]), []).append(model)
        raise DisconnectedGraphError(list(components.values()))

    if lam > 0:
        return  # pseudo-wins in both directions make every edge two-way

    # With lam == 0 a finite optimum exists only if every model can be
    # reached from every other along won comparisons; otherwise some group
    # is undefeated and its strengths escape to infinity.
    rows, cols = [], []
    for i, j, wi, wj in zip(i_idx, j_idx, wins_i, wins_j):
        if wi > 0:
            rows.append(i)
            cols.append(j)
        if wj > 0:
            rows.append(j)
            cols.append(i)
    directed = csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(m, m)
    )
    n_strong, strong_labels = connected_components(directed, directed=True, connection="strong")
    if n_strong > 1:
        # Name one undefeated group to make the error actionable.
        beaten_from_outside = set()
        for i, j, wi, wj in zip(i_idx, j_idx, wins_i, wins_j):
            if wi > 0 and strong_labels[i] != strong_labels[j]:
                beaten_from_outside.add(int(strong_labels[j]))
            if wj > 0 and strong_labels[j] != strong_labels[i]:
                beaten_from_outside.add(int(strong_labels[i]))
        unbeaten = [
            [obs.models[k] for k in range(m) if strong_labels[k] == c]
            for c in range(n_strong)
            if c not in beaten_from_outside
        ]
        names = "; ".join("{" + ", ".join(group) + "}" for group in unbeaten)
        raise DivergenceError(
            f"no finite optimum: perfect separation with lambda=0 "
            f"(undefeated group(s): {names}). Use lambda > 0 or counts mode."
        )


def observations_for(
    data: PreferenceMatrix | TallySet, mode: FitMode
) -> Observations:
    if mode is FitMode.BINARY:
        if not isinstance(data, PreferenceMatrix):
            raise FitError("binary mode requires a PreferenceMatrix")
        return Observations.from_matrix(data)
    if not isinstance(data, TallySet):
        raise FitError("counts mode requires a TallySet")
    return Observations.from_tallies(data)


def fit(
    data: PreferenceMatrix | TallySet | Observations,
    config: FitConfig | None = None,
    init: Sequence[float] | None = None,
) -> RankResult:
    """Fit strengths by fixed-rate gradient descent and rank the models.

    Deterministic given inputs and config. Stops when the gradient norm
    drops to ``grad_tol`` or after ``max_iters`` steps (reported in the
    diagnostics); beta is re-centered to sum to zero after every step.
    """
    config = config or FitConfig()
    if isinstance(data, Observations):
        obs = data
        if obs.mode is not config.mode:
            raise FitError(f"observations are {obs.mode.value}, config says {config.mode.value}")
    else:
        obs = observations_for(data, config.mode)
    _check_connectivity(obs, config.lam)

    m = len(obs.models)
    if init is None:
        beta = np.zeros(m)
    else:
        beta = np.asarray(init, dtype=float).copy()
        if beta.shape != (m,):
            raise FitError(f"init length {beta.shape} does not match {m} models")
    beta -= beta.mean()

    converged = False
    iterations = 0
    while True:
        grad = grad_nll(obs, beta, config.lam)
        grad_norm = float(np.linalg.norm(grad))
        if not math.isfinite(grad_norm):
            raise DivergenceError("gradient became non-finite; fit diverged")
        if grad_norm <= config.grad_tol:
            converged = True
            break
        if iterations >= config.max_iters:
            break
        beta -= config.learning_rate * grad
        beta -= beta.mean()
        iterations += 1
        if np.max(np.abs(beta)) > config.beta_limit:
            raise DivergenceError(
                f"log-strength exceeded {config.beta_limit}; the likelihood has "
                f"no finite optimum on this data (increase lambda)"
            )

    strengths = StrengthVector(models=list(obs.models), beta=beta)
    ordering, tie_break_used = _order_by_strength(strengths)
    return RankResult(
        ordering=ordering,
        strengths=strengths,
        iterations=iterations,
        grad_norm=grad_norm,
        converged=converged,
        mode=config.mode,
        lam=config.lam,
        tie_break_used=tie_break_used,
    )


def _order_by_strength(strengths: StrengthVector) -> tuple[list[int], bool]:
    theta = strengths.theta
    order = sorted(
        range(len(theta)), key=lambda i: (-theta[i], strengths.models[i])
    )
    tie_break = any(theta[a] == theta[b] for a, b in zip(order, order[1:]))
    return order, tie_break


def rank(result: RankResult) -> list[tuple[str, float]]:
    """Models with their strengths, strongest first; ties broken by id."""
    return result.ranked_models()
