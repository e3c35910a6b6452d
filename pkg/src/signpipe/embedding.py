"""Logit-space embedding analysis: PCA to a reduced basis, exact t-SNE to
2D, and k-NN cluster-purity reporting.

t-SNE here is the exact O(N^2) algorithm (per-point Gaussian bandwidths
matched to a target perplexity by binary search, symmetrized affinities,
Student-t low-dimensional kernel, gradient descent with momentum and early
exaggeration). Intended for desk-scale N, a few thousand points at most.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from .backends import ClassifierBackend
from .dataset import BoundingBox, ImageRecord


@dataclass
class EmbeddingMatrix:
    matrix: np.ndarray  # N x C logits
    labels: list[int]  # ground-truth class per row
    class_ids: list[int]  # column order


@dataclass
class PCAModel:
    mean: np.ndarray
    components: np.ndarray  # d x C, orthonormal rows
    explained_variance: np.ndarray  # length d, non-increasing

    def project(self, matrix: np.ndarray) -> np.ndarray:
        return (matrix - self.mean) @ self.components.T

    def reconstruct(self, projected: np.ndarray) -> np.ndarray:
        return projected @ self.components + self.mean


@dataclass
class TSNEConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    early_exaggeration: float = 12.0
    early_iterations: int = 250
    learning_rate: float = 200.0
    seed: int = 0

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be > 0")
        if self.perplexity <= 0:
            raise ValueError("perplexity must be > 0")


@dataclass
class TSNEResult:
    coords: np.ndarray  # N x 2
    kl_initial: float
    kl_final: float
    kl_history: list[tuple[int, float]] = field(default_factory=list)


def embed_logits(
    classifier: ClassifierBackend,
    crops: list[tuple[ImageRecord, BoundingBox, int]],
) -> EmbeddingMatrix:
    """One row of raw class scores per (image, box, label) crop."""
    if not crops:
        raise ValueError("need at least one crop")
    rows = []
    labels = []
    class_ids: list[int] | None = None
    for record, box, label in crops:
        vec = classifier.classify(record, box)
        if class_ids is None:
            class_ids = list(vec.class_ids)
        rows.append(np.asarray(vec.scores, dtype=float))
        labels.append(label)
    return EmbeddingMatrix(matrix=np.vstack(rows), labels=labels, class_ids=class_ids)


def pca(matrix: np.ndarray, d: int = 50) -> tuple[PCAModel, np.ndarray]:
    """Top-d principal components of the rows.

    Mean-centers, eigendecomposes the covariance (SVD of the centered matrix
    for very wide inputs), orients each component so its largest-magnitude
    entry is positive, and returns the model plus the N x d projection. If
    the data has rank below d only the informative components are returned,
    with a warning.
    """
    X = np.asarray(matrix, dtype=float)
    n, c = X.shape
    if n < 2:
        raise ValueError("need at least 2 rows")
    if d < 1 or d > min(n, c):
        raise ValueError(f"d must be in [1, min(N, C)] = [1, {min(n, c)}]")
    mean = X.mean(axis=0)
    centered = X - mean

    if c <= 512:
        cov = centered.T @ centered / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        eigvals = eigvals[order]
        components = eigvecs[:, order].T
    else:
        _, svals, vt = np.linalg.svd(centered, full_matrices=False)
        eigvals = svals**2 / (n - 1)
        components = vt

    eigvals = np.clip(eigvals, 0.0, None)
    tol = eigvals[0] * 1e-12 if eigvals.size and eigvals[0] > 0 else 0.0
    rank = int(np.sum(eigvals > tol))
    keep = min(d, max(1, rank))
    if keep < d:
        warnings.warn(f"data rank {rank} < requested {d} components; returning {keep}")
    components = components[:keep].copy()
    eigvals = eigvals[:keep].copy()

    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0

    model = PCAModel(mean=mean, components=components, explained_variance=eigvals)
    return model, model.project(X)


def _pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X**2, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _conditional_probs(dist_row: np.ndarray, target_entropy: float) -> np.ndarray:
    """Binary-search the Gaussian precision for one point so the conditional
    distribution's entropy matches ln(perplexity)."""
    beta, beta_min, beta_max = 1.0, 0.0, np.inf
    p = np.zeros_like(dist_row)
    for _ in range(64):
        p = np.exp(-dist_row * beta)
        total = p.sum()
        if total <= 0:
            h = 0.0
            p = np.zeros_like(dist_row)
        else:
            p = p / total
            nz = p > 0
            h = float(-np.sum(p[nz] * np.log(p[nz])))
        diff = h - target_entropy
        if abs(diff) < 1e-7:
            break
        if diff > 0:  # entropy too high -> sharpen
            beta_min = beta
            beta = beta * 2.0 if beta_max == np.inf else (beta + beta_max) / 2.0
        else:
            beta_max = beta
            beta = beta / 2.0 if beta_min == 0.0 else (beta + beta_min) / 2.0
    return p


def _joint_probs(X: np.ndarray, perplexity: float) -> np.ndarray:
    n = X.shape[0]
    dists = _pairwise_sq_dists(X)
    target = float(np.log(perplexity))
    cond = np.zeros((n, n))
    for i in range(n):
        row = np.delete(dists[i], i)
        p = _conditional_probs(row, target)
        cond[i, np.arange(n) != i] = p
    joint = (cond + cond.T) / (2.0 * n)
    return np.maximum(joint, 1e-12)


def _student_t_q(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = 1.0 / (1.0 + _pairwise_sq_dists(Y))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return np.maximum(q, 1e-12), num


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 1e-12
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def _content_keyed_init(X: np.ndarray, seed: int) -> np.ndarray:
    """Small random init derived per row from a hash of the row's bytes and
    the seed, so permuting input rows permutes the initialization (and hence
    the output) identically."""
    n = X.shape[0]
    Y = np.zeros((n, 2))
    for i in range(n):
        digest = hashlib.blake2b(
            X[i].tobytes() + seed.to_bytes(8, "little", signed=True), digest_size=8
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        Y[i] = rng.normal(0.0, 1e-4, 2)
    return Y


def tsne(projected: np.ndarray, config: TSNEConfig) -> TSNEResult:
    """Exact t-SNE of the rows to 2D; deterministic in the seed."""
    X = np.asarray(projected, dtype=float)
    n = X.shape[0]
    if not (3 * config.perplexity < n):
        raise ValueError(f"perplexity {config.perplexity} too large for N={n} (need 3*perplexity < N)")

    P = _joint_probs(X, config.perplexity)
    Y = _content_keyed_init(X, config.seed)
    velocity = np.zeros_like(Y)

    q0, _ = _student_t_q(Y)
    kl_initial = _kl(P, q0)
    history = [(0, kl_initial)]

    for it in range(config.iterations):
        exaggerate = config.early_exaggeration if it < config.early_iterations else 1.0
        momentum = 0.5 if it < config.early_iterations else 0.8
        q, num = _student_t_q(Y)
        w = (exaggerate * P - q) * num
        grad = 4.0 * (w.sum(axis=1)[:, None] * Y - w @ Y)
        velocity = momentum * velocity - config.learning_rate * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
        if (it + 1) % 50 == 0:
            q, _ = _student_t_q(Y)
            history.append((it + 1, _kl(P, q)))

    q_final, _ = _student_t_q(Y)
    kl_final = _kl(P, q_final)
    if history[-1][0] != config.iterations:
        history.append((config.iterations, kl_final))
    return TSNEResult(coords=Y, kl_initial=kl_initial, kl_final=kl_final, kl_history=history)


@dataclass
class ClusterReport:
    purity_by_class: dict[int, float]
    mean_purity: float
    scatter_rows: list[tuple[float, float, int, str]]  # x, y, class_id, class_name


def cluster_report(
    coords: np.ndarray,
    labels: list[int],
    class_names: dict[int, str] | None = None,
    k: int = 10,
) -> ClusterReport:
    """Per-class k-NN label purity in the 2D embedding plus scatter rows for
    export. Reports purity only; distances between clusters in a t-SNE plot
    carry no meaning and are deliberately not summarized."""
    Y = np.asarray(coords, dtype=float)
    n = Y.shape[0]
    if n < 2 or len(labels) != n:
        raise ValueError("need N >= 2 coords with matching labels")
    k_eff = min(k, n - 1)
    dists = _pairwise_sq_dists(Y)
    np.fill_diagonal(dists, np.inf)
    labels_arr = np.asarray(labels)
    point_purity = np.zeros(n)
    for i in range(n):
        neighbors = np.argpartition(dists[i], k_eff - 1)[:k_eff]
        point_purity[i] = float(np.mean(labels_arr[neighbors] == labels_arr[i]))

    purity_by_class = {}
    for class_id in sorted(set(labels)):
        mask = labels_arr == class_id
        purity_by_class[class_id] = float(point_purity[mask].mean())
    names = class_names or {}
    rows = [
        (float(Y[i, 0]), float(Y[i, 1]), int(labels_arr[i]), names.get(int(labels_arr[i]), str(labels_arr[i])))
        for i in range(n)
    ]
    return ClusterReport(
        purity_by_class=purity_by_class,
        mean_purity=float(point_purity.mean()),
        scatter_rows=rows,
    )
