"""Utterance manifests, train/val/test splits, normalisation and synthetic corpora."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateDim, DimMismatch, LengthMismatch, TooFewUtterances
from .features import FeatureSequence
from .formats import atomic_write, read_features, write_features
from .models import MFCC_DIM

SPLITS = ("train", "val", "test")
CONDITIONS = ("spoken", "listen")
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class Utterance:
    id: str
    subject: str
    condition: str
    mfcc_path: str
    eeg_path: str
    frames: int


@dataclass
class DatasetManifest:
    utterances: list[Utterance]
    feature_set: int = 1
    eeg_dim: int = 30
    seed: int = 0
    splits: dict[str, str] = field(default_factory=dict)
    root: Path = Path(".")
    mfcc_dim: int = MFCC_DIM

    def in_split(self, split: str) -> list[Utterance]:
        return [u for u in self.utterances if self.splits.get(u.id) == split]

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def to_text(self) -> str:
        lines = [
            f"feature_set={self.feature_set}",
            f"seed={self.seed}",
            f"mfcc_dim={self.mfcc_dim}",
            f"eeg_dim={self.eeg_dim}",
        ]
        for u in self.utterances:
            lines.append("\t".join([
                u.id, u.subject, u.condition, self.splits.get(u.id, "-"),
                u.mfcc_path, u.eeg_path, str(u.frames),
            ]))
        return "\n".join(lines) + "\n"

    def write(self, path):
        atomic_write(path, self.to_text().encode("utf-8"))

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        header, utts, splits = {}, [], {}
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            if "\t" in line:
                cols = line.split("\t")
                if len(cols) != 7:
                    raise ValueError(f"{path}:{lineno}: expected 7 tab-separated fields")
                uid, subject, condition, split, mfcc, eeg, frames = cols
                utts.append(Utterance(uid, subject, condition, mfcc, eeg, int(frames)))
                if split != "-":
                    splits[uid] = split
            else:
                key, _, value = line.partition("=")
                header[key.strip()] = value.strip()
        return cls(
            utts,
            feature_set=int(header.get("feature_set", 1)),
            eeg_dim=int(header["eeg_dim"]),
            seed=int(header.get("seed", 0)),
            splits=splits,
            root=path.parent,
            mfcc_dim=int(header.get("mfcc_dim", MFCC_DIM)),
        )


def split_dataset(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Seeded shuffle, then an 80/10/10 cut by utterance."""
    n = len(manifest.utterances)
    if n < 10:
        raise TooFewUtterances(f"need at least 10 utterances to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(SPLIT_FRACTIONS[0] * n))
    n_val = int(round(SPLIT_FRACTIONS[1] * n))
    splits = {}
    for rank, i in enumerate(order):
        split = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
        splits[manifest.utterances[i].id] = split
    return replace(manifest, splits=splits, seed=seed)


def load_pairs(manifest: DatasetManifest, split: str) -> list[tuple[np.ndarray, np.ndarray]]:
    """Validated ``(mfcc, eeg)`` arrays for every utterance in ``split``, manifest order."""
    pairs = []
    for u in manifest.in_split(split):
        mfcc = read_features(manifest.resolve(u.mfcc_path))
        eeg = read_features(manifest.resolve(u.eeg_path))
        if mfcc.dim != manifest.mfcc_dim:
            raise DimMismatch(f"utterance {u.id}: MFCC has {mfcc.dim} columns, expected {manifest.mfcc_dim}")
        if eeg.dim != manifest.eeg_dim:
            raise DimMismatch(f"utterance {u.id}: EEG has {eeg.dim} columns, expected {manifest.eeg_dim}")
        if mfcc.n_frames != eeg.n_frames:
            raise LengthMismatch(f"utterance {u.id}: {mfcc.n_frames} MFCC frames vs {eeg.n_frames} EEG frames")
        pairs.append((mfcc.frames, eeg.frames))
    return pairs


# -- normalisation ------------------------------------------------------------

@dataclass
class NormStats:
    mfcc_mean: np.ndarray
    mfcc_std: np.ndarray
    eeg_mean: np.ndarray
    eeg_std: np.ndarray

    def as_arrays(self, prefix: str = "norm.") -> dict[str, np.ndarray]:
        return {prefix + k: np.asarray(v) for k, v in self.__dict__.items()}

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], prefix: str = "norm.") -> "NormStats":
        return cls(**{k: np.asarray(arrays[prefix + k], dtype=np.float64) for k in
                      ("mfcc_mean", "mfcc_std", "eeg_mean", "eeg_std")})

    def apply(self, pairs):
        return [((m - self.mfcc_mean) / self.mfcc_std, (e - self.eeg_mean) / self.eeg_std) for m, e in pairs]

    def denormalize_eeg(self, eeg: np.ndarray) -> np.ndarray:
        return eeg * self.eeg_std + self.eeg_mean


def _moments(frames: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)
    flat = std < 1e-12
    if np.any(flat):
        warnings.warn(
            f"{what} dims {np.flatnonzero(flat).tolist()} have zero variance; left unscaled",
            DegenerateDim,
            stacklevel=3,
        )
        mean = np.where(flat, 0.0, mean)
        std = np.where(flat, 1.0, std)
    return mean, std


def fit_zscore(train_pairs) -> NormStats:
    """Per-dimension statistics over all training frames."""
    mfcc = np.concatenate([m for m, _ in train_pairs])
    eeg = np.concatenate([e for _, e in train_pairs])
    mm, ms = _moments(mfcc, "MFCC")
    em, es = _moments(eeg, "EEG")
    return NormStats(mm, ms, em, es)


def zscore_normalize(train_pairs, stats: NormStats | None = None):
    """Normalise with ``stats`` (fitted on ``train_pairs`` if not given)."""
    stats = fit_zscore(train_pairs) if stats is None else stats
    return stats.apply(train_pairs), stats


# -- synthetic corpora --------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Paired corpus with a known mapping ``EEG = smooth(A tanh(B mfcc)) + noise``."""

    n_utterances: int = 200
    frames: tuple[int, int] = (60, 120)
    eeg_dim: int = 30
    noise_sigma: float = 0.1
    seed: int = 0
    latent_dim: int = 16
    smoothing: int = 3
    ar_coeff: float = 0.9
    n_subjects: int = 4
    feature_set: int = 1


@dataclass
class SyntheticMapping:
    A: np.ndarray  # D x H
    B: np.ndarray  # H x 13
    smoothing: int

    def predict(self, mfcc: np.ndarray) -> np.ndarray:
        return moving_average(np.tanh(mfcc @ self.B.T) @ self.A.T, self.smoothing)

    def save(self, path):
        np.savez(path, A=self.A, B=self.B, smoothing=self.smoothing)

    @classmethod
    def load(cls, path) -> "SyntheticMapping":
        with np.load(path) as z:
            return cls(z["A"], z["B"], int(z["smoothing"]))


def moving_average(x: np.ndarray, width: int) -> np.ndarray:
    """Centred moving average along time; edges average over the frames available."""
    if width <= 1:
        return x.copy()
    kernel = np.ones(width)
    ones = np.convolve(np.ones(len(x)), kernel, mode="same")
    out = np.stack([np.convolve(col, kernel, mode="same") for col in x.T], axis=1)
    return out / ones[:, None]


def mfcc_scales() -> np.ndarray:
    # typical cepstral magnitudes shrink with coefficient index
    return 8.0 / (1.0 + 0.5 * np.arange(MFCC_DIM))


def make_mapping(spec: SyntheticSpec) -> SyntheticMapping:
    rng = np.random.default_rng([spec.seed, 1])
    B = rng.normal(size=(spec.latent_dim, MFCC_DIM)) / np.sqrt(MFCC_DIM) / mfcc_scales()
    A = rng.normal(size=(spec.eeg_dim, spec.latent_dim)) / np.sqrt(spec.latent_dim)
    return SyntheticMapping(A, B, spec.smoothing)


def synth_utterances(spec: SyntheticSpec):
    """In-memory corpus: ``(mapping, [(meta, mfcc, eeg), ...])``."""
    mapping = make_mapping(spec)
    rng = np.random.default_rng([spec.seed, 2])
    a = spec.ar_coeff
    scales = mfcc_scales()
    items = []
    for i in range(spec.n_utterances):
        T = int(rng.integers(spec.frames[0], spec.frames[1] + 1))
        eps = rng.normal(size=(T, MFCC_DIM))
        u = np.empty((T, MFCC_DIM))
        u[0] = eps[0]
        for t in range(1, T):
            u[t] = a * u[t - 1] + np.sqrt(1 - a * a) * eps[t]
        mfcc = u * scales
        eeg = mapping.predict(mfcc) + spec.noise_sigma * rng.normal(size=(T, spec.eeg_dim))
        meta = (f"utt{i:05d}", f"S{i % spec.n_subjects + 1}", CONDITIONS[(i // spec.n_subjects) % 2])
        items.append((meta, mfcc, eeg))
    return mapping, items


def synth_generate(spec: SyntheticSpec, out_dir) -> DatasetManifest:
    """Write EAF1 files, the mapping and a split manifest under ``out_dir``."""
    out = Path(out_dir)
    (out / "mfcc").mkdir(parents=True, exist_ok=True)
    (out / "eeg").mkdir(parents=True, exist_ok=True)
    mapping, items = synth_utterances(spec)
    utts = []
    for (uid, subject, condition), mfcc, eeg in items:
        m_rel, e_rel = f"mfcc/{uid}.eaf", f"eeg/{uid}.eaf"
        write_features(out / m_rel, FeatureSequence(mfcc, 100.0, "mfcc"))
        write_features(out / e_rel, FeatureSequence(eeg, 100.0, "eeg_reduced"))
        utts.append(Utterance(uid, subject, condition, m_rel, e_rel, len(mfcc)))
    mapping.save(out / "mapping.npz")
    manifest = DatasetManifest(utts, spec.feature_set, spec.eeg_dim, spec.seed, root=out)
    manifest = split_dataset(manifest, spec.seed)
    manifest.write(out / "manifest.txt")
    return manifest
