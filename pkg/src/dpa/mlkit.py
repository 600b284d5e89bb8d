"""Statistical building blocks for abstraction: DBSCAN, a probabilistic
classifier and Gaussian kernel density estimation.

All inputs are expected in normalised coordinates (each state variable
scaled into [0, 1]).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp
from sklearn.svm import SVC

log = logging.getLogger(__name__)

NOISE = -1
DBSCAN_EPS = 0.03
DBSCAN_MIN_PTS = 3
BANDWIDTH_FLOOR = 0.01


# --------------------------------------------------------------------------
# DBSCAN
# --------------------------------------------------------------------------

def dbscan(points, eps: float = DBSCAN_EPS, min_pts: int = DBSCAN_MIN_PTS) -> np.ndarray:
    """Density-based clustering under Euclidean distance.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``.  Core points within ``eps`` of each other share a
    cluster; a border point joins the cluster of its nearest core point.
    Clusters are numbered in order of their lowest point index, noise is -1.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(X)
    if n == 0:
        return np.zeros(0, dtype=int)
    tree = cKDTree(X)
    nbrs = tree.query_ball_point(X, r=eps + 1e-12)
    core = np.array([len(nb) >= min_pts for nb in nbrs])

    labels = np.full(n, NOISE, dtype=int)
    comp = np.full(n, NOISE, dtype=int)
    next_comp = 0
    for i in range(n):
        if not core[i] or comp[i] != NOISE:
            continue
        comp[i] = next_comp
        stack = [i]
        while stack:
            j = stack.pop()
            for k in nbrs[j]:
                if core[k] and comp[k] == NOISE:
                    comp[k] = next_comp
                    stack.append(k)
        next_comp += 1
    labels[core] = comp[core]

    for i in np.flatnonzero(~core):
        cands = [k for k in nbrs[i] if core[k]]
        if cands:
            d = np.linalg.norm(X[cands] - X[i], axis=1)
            best = min(zip(d, cands))[1]
            labels[i] = comp[best]

    # renumber by first appearance
    remap: dict[int, int] = {}
    for i in range(n):
        lab = labels[i]
        if lab != NOISE and lab not in remap:
            remap[lab] = len(remap)
    return np.array([remap.get(lab, NOISE) for lab in labels], dtype=int)


# --------------------------------------------------------------------------
# Probabilistic classifier
# --------------------------------------------------------------------------

def platt_fit(decision: np.ndarray, labels: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Fit the sigmoid P(y=1|f) = 1 / (1 + exp(A f + B)) by Newton's method
    with backtracking (Platt 1999, with Lin et al.'s numerically safe form).
    """
    f = np.asarray(decision, dtype=float)
    y = np.asarray(labels) > 0
    prior1, prior0 = int(y.sum()), int((~y).sum())
    hi, lo = (prior1 + 1.0) / (prior1 + 2.0), 1.0 / (prior0 + 2.0)
    t = np.where(y, hi, lo)
    A, B = 0.0, math.log((prior0 + 1.0) / (prior1 + 1.0))
    min_step, sigma, eps = 1e-10, 1e-12, 1e-5

    def objective(a, b):
        z = f * a + b
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-np.abs(z))),
                                     (t - 1) * z + np.log1p(np.exp(-np.abs(z))))))

    fval = objective(A, B)
    for _ in range(max_iter):
        z = f * A + B
        p = np.where(z >= 0, np.exp(-z) / (1.0 + np.exp(-z)), 1.0 / (1.0 + np.exp(np.minimum(z, 700))))
        q = 1.0 - p
        d2 = p * q
        h11 = sigma + np.sum(f * f * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1, g2 = np.sum(f * d1), np.sum(d1)
        if abs(g1) < eps and abs(g2) < eps:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= min_step:
            nA, nB = A + step * dA, B + step * dB
            nf = objective(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2.0
        if step < min_step:
            break
    return A, B


@dataclass
class ProbabilisticClassifier:
    """RBF support-vector machine with Platt-calibrated probabilities.

    A classifier trained with an empty class is degenerate: it returns a
    constant probability and has ``degenerate`` set.
    """

    svm: SVC | None = None
    platt: tuple[float, float] = (0.0, 0.0)
    constant: float | None = None
    training_accuracy: float = 1.0
    degenerate: bool = False
    columns: tuple[int, ...] | None = None

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.columns is not None:
            X = X[:, list(self.columns)]
        return self.svm.decision_function(X)

    def probability(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.constant is not None:
            return np.full(len(X), self.constant)
        A, B = self.platt
        z = self.decision(X) * A + B
        return 1.0 / (1.0 + np.exp(np.clip(z, -500, 500)))

    def classify(self, x) -> float:
        return float(self.probability(np.atleast_2d(x))[0])

    __call__ = probability


def train_classifier(positives, negatives, seed: int = 0, C: float = 10.0,
                     gamma: float = 100.0, max_per_class: int | None = 400,
                     columns=None) -> ProbabilisticClassifier:
    """Train a probabilistic classifier separating positives from negatives.

    Duplicate rows are collapsed and each class is subsampled to at most
    ``max_per_class`` rows (seeded) to bound training time.  With ``columns``
    the classifier only looks at those variables of its input.
    """
    cols = None if columns is None else tuple(int(c) for c in columns)
    P = _unique_rows(positives)
    N = _unique_rows(negatives)
    if cols is not None:
        P, N = (_unique_rows(Z[:, list(cols)]) if len(Z) else Z[:, :0] for Z in (P, N))
    if len(P) == 0 and len(N) == 0:
        raise ValueError("no training data")
    if len(N) == 0 or len(P) == 0:
        value = 1.0 if len(N) == 0 else 0.0
        log.debug("degenerate classifier: constant %.1f", value)
        return ProbabilisticClassifier(constant=value, degenerate=True)
    rng = np.random.default_rng(seed)
    if max_per_class is not None:
        if len(P) > max_per_class:
            P = P[np.sort(rng.choice(len(P), max_per_class, replace=False))]
        if len(N) > max_per_class:
            N = N[np.sort(rng.choice(len(N), max_per_class, replace=False))]
    X = np.vstack([P, N])
    y = np.concatenate([np.ones(len(P)), -np.ones(len(N))])
    svm = SVC(C=C, kernel="rbf", gamma=gamma, class_weight="balanced")
    svm.fit(X, y)
    dec = svm.decision_function(X)
    A, B = platt_fit(dec, y)
    clf = ProbabilisticClassifier(svm=svm, platt=(A, B))
    acc = float(np.mean((clf.probability(X) > 0.5) == (y > 0)))
    clf.columns = cols
    clf.training_accuracy = acc
    return clf


def _unique_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return X.reshape(0, X.shape[1] if X.ndim == 2 else 0)
    if X.ndim == 1:
        X = X[:, None]
    return np.unique(X, axis=0)


# --------------------------------------------------------------------------
# Kernel density estimation
# --------------------------------------------------------------------------

@dataclass
class DensityModel:
    """Product-Gaussian KDE over the variables listed in ``mask``.

    ``points``/``weights`` hold the distinct training samples and their
    multiplicities, so heavily repeated endpoints stay cheap.
    """

    mask: tuple[int, ...]
    points: np.ndarray
    weights: np.ndarray
    bandwidth: np.ndarray
    threshold: float = -np.inf
    _log_norm: float = field(init=False, default=0.0)

    def __post_init__(self):
        self.weights = self.weights / self.weights.sum()
        k = self.points.shape[1]
        self._log_norm = -0.5 * k * math.log(2 * math.pi) - float(np.sum(np.log(self.bandwidth)))

    @property
    def dim(self) -> int:
        return len(self.mask)

    def logpdf(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :] if self.dim > 1 or X.size == 1 else X[:, None]
        z = (X[:, None, :] - self.points[None, :, :]) / self.bandwidth
        quad = -0.5 * np.sum(z * z, axis=2)
        return logsumexp(quad + np.log(self.weights)[None, :], axis=1) + self._log_norm

    def pdf(self, X) -> np.ndarray:
        return np.exp(self.logpdf(X))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` samples; kernel noise is truncated at 3 bandwidths."""
        idx = rng.choice(len(self.points), size=n, p=self.weights)
        noise = np.clip(rng.standard_normal((n, self.dim)), -3.0, 3.0) * self.bandwidth
        return self.points[idx] + noise

    def accepts(self, X) -> np.ndarray:
        """Boolean grounding test: density above the model's threshold."""
        return self.logpdf(X) >= self.threshold - 1e-9

    def mean(self) -> np.ndarray:
        return self.weights @ self.points


def silverman_bandwidth(X: np.ndarray, weights: np.ndarray | None = None,
                        floor: float = BANDWIDTH_FLOOR) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    w = np.ones(len(X)) if weights is None else np.asarray(weights, dtype=float)
    n = w.sum()
    mu = (w[:, None] * X).sum(axis=0) / n
    var = (w[:, None] * (X - mu) ** 2).sum(axis=0) / max(n - 1, 1)
    h = 1.06 * np.sqrt(var) * n ** (-1.0 / 5.0)
    return np.maximum(h, floor)


def fit_density(samples, mask, percentile: float = 5.0, n_threshold: int = 500) -> DensityModel:
    """Fit a KDE to the masked columns of ``samples``.

    ``samples`` may be full state vectors (indexed by ``mask``) or already
    restricted to the masked variables.  Fewer than two samples give a
    point-mass model with the floor bandwidth.

    The grounding threshold is the ``percentile`` of logpdf over draws from
    the model itself (a fixed-seed Monte-Carlo estimate of the 95% highest
    density region), so the model accepts its own samples.
    """
    mask = tuple(int(i) for i in mask)
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if len(mask) == 1 else X[None, :]
    if X.shape[1] != len(mask):
        X = X[:, list(mask)]
    if len(X) == 0:
        raise ValueError("cannot fit a density to zero samples")
    pts, counts = np.unique(X, axis=0, return_counts=True)
    if len(X) < 2:
        bw = np.full(len(mask), BANDWIDTH_FLOOR)
    else:
        bw = silverman_bandwidth(pts, counts)
    model = DensityModel(mask, pts, counts.astype(float), bw)
    draws = model.sample(n_threshold, np.random.default_rng(0))
    model.threshold = float(np.percentile(model.logpdf(draws), percentile))
    return model

