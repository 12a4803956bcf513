"""Kernel PCA fitted on training EEG frames, with out-of-sample projection."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, RankDeficient

EIG_TOL = 1e-12
MAX_FIT_FRAMES = 5000


@dataclass(frozen=True)
class FeatureSetSpec:
    set_id: int
    raw_dim: int
    reduced_dim: int
    reduction: str  # "kpca" | "identity"
    statistics: tuple[str, ...] = ()

    def __post_init__(self):
        if self.reduction == "identity" and self.reduced_dim != self.raw_dim:
            raise ValueError("identity reduction keeps the raw dimension")


# Stand-ins for the three EEG feature sets: 31 channels x per-channel statistics,
# reduced to 30 / 50 / kept at 93.
FEATURE_SETS = {
    1: FeatureSetSpec(1, 124, 30, "kpca", ("rms", "zero_crossing_rate", "mean", "kurtosis")),
    2: FeatureSetSpec(2, 62, 50, "kpca", ("rms", "kurtosis")),
    3: FeatureSetSpec(3, 93, 93, "identity", ("rms", "zero_crossing_rate", "mean")),
}


def linear_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return x @ y.T


def rbf_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> np.ndarray:
    sq = (x * x).sum(1)[:, None] + (y * y).sum(1)[None, :] - 2.0 * x @ y.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def center_kernel(k: np.ndarray) -> np.ndarray:
    """Double-centre a square kernel matrix."""
    row = k.mean(axis=1, keepdims=True)
    return k - row - row.T + k.mean()


@dataclass
class KernelPCAModel:
    training_frames: np.ndarray
    kernel: str
    gamma: float
    alphas: np.ndarray  # N x K, columns scaled by 1/sqrt(eigenvalue)
    eigenvalues: np.ndarray  # K, descending
    row_means: np.ndarray  # N
    grand_mean: float

    @property
    def n_components(self) -> int:
        return self.alphas.shape[1]

    @property
    def input_dim(self) -> int:
        return self.training_frames.shape[1]

    def kernel_matrix(self, x: np.ndarray) -> np.ndarray:
        if self.kernel == "linear":
            return linear_kernel(x, self.training_frames)
        return rbf_kernel(x, self.training_frames, self.gamma)

    def total_variance(self) -> float:
        """Trace of the centred training kernel (sum of all its eigenvalues)."""
        x = self.training_frames
        diag = (x * x).sum(1) if self.kernel == "linear" else np.ones(len(x))
        return float(np.sum(diag - 2.0 * self.row_means + self.grand_mean))

    def transform(self, frames: np.ndarray) -> np.ndarray:
        return kpca_transform(self, frames)


def kpca_fit(
    frames: np.ndarray,
    n_components: int,
    kernel: str = "rbf",
    gamma: float | None = None,
    max_frames: int = MAX_FIT_FRAMES,
    seed: int = 0,
) -> KernelPCAModel:
    """Fit kernel PCA on ``frames`` (N x D).

    More than ``max_frames`` rows are uniformly subsampled (seeded) before fitting.
    Components whose eigenvalue does not exceed ``EIG_TOL`` are dropped with a
    :class:`RankDeficient` warning.
    """
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or not np.all(np.isfinite(x)):
        raise ValueError("frames must be a finite N x D matrix")
    if len(x) > max_frames:
        keep = np.sort(np.random.default_rng(seed).choice(len(x), max_frames, replace=False))
        x = x[keep]
    n, d = x.shape
    if not 1 <= n_components <= n:
        raise ValueError(f"need 1 <= n_components <= N, got K={n_components}, N={n}")
    if kernel not in ("linear", "rbf"):
        raise ValueError(f"unknown kernel {kernel!r}")
    gamma = 1.0 / d if gamma is None else float(gamma)

    k = linear_kernel(x, x) if kernel == "linear" else rbf_kernel(x, x, gamma)
    row_means = k.mean(axis=1)
    grand_mean = float(k.mean())
    kc = center_kernel(k)
    vals, vecs = np.linalg.eigh((kc + kc.T) / 2)
    order = np.argsort(vals)[::-1]
    vals, vecs = np.maximum(vals[order], 0.0), vecs[:, order]

    usable = int(np.sum(vals > EIG_TOL))
    if usable < n_components:
        warnings.warn(
            f"only {usable} of {n_components} requested components have positive variance",
            RankDeficient,
            stacklevel=2,
        )
    k_keep = min(usable, n_components)
    vals, vecs = vals[:k_keep], vecs[:, :k_keep]
    # deterministic sign: largest-magnitude loading positive
    pivot = np.abs(vecs).argmax(axis=0)
    vecs = vecs * np.sign(vecs[pivot, np.arange(k_keep)])
    alphas = vecs / np.sqrt(vals)
    return KernelPCAModel(x, kernel, gamma, alphas, vals, row_means, grand_mean)


def kpca_transform(model: KernelPCAModel, frames: np.ndarray) -> np.ndarray:
    """Project one frame (D,) or many (M x D) onto the fitted components."""
    x = np.asarray(frames, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.input_dim:
        raise DimMismatch(f"frame dim {x.shape[1]} != training dim {model.input_dim}")
    k = model.kernel_matrix(x)
    kc = k - k.mean(axis=1, keepdims=True) - model.row_means[None, :] + model.grand_mean
    scores = kc @ model.alphas
    return scores[0] if single else scores


def fitted_scores(model: KernelPCAModel) -> np.ndarray:
    """Scores of the training frames: eigenvectors times sqrt(eigenvalue)."""
    return model.alphas * model.eigenvalues


def explained_variance(model: KernelPCAModel) -> np.ndarray:
    total = model.total_variance()
    if total <= 0:
        return np.zeros(model.n_components)
    return model.eigenvalues / total
