"""Regression model, conditional GAN, their losses and training loops."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .errors import EmptySplit, GraphNotRecorded, NonFiniteLoss, ShapeMismatch, TopologyMismatch

log = logging.getLogger(__name__)

MFCC_DIM = 13
DESK_SIZES = (32, 16)
FULL_SIZES = (256, 128)
PROB_CLAMP = 1e-7


class RegressionModel(nn.Module):
    """Two recurrent layers (GRU or Bi-GRU) and a linear time-distributed head."""

    def __init__(
        self,
        output_dim: int,
        hidden=DESK_SIZES,
        cell: str = "bigru",
        input_dim: int = MFCC_DIM,
        seed: int = 0,
    ):
        super().__init__()
        if cell not in ("gru", "bigru"):
            raise ValueError(f"cell must be 'gru' or 'bigru', got {cell!r}")
        rng = np.random.default_rng(seed)
        h1, h2 = hidden
        layer = nn.BiGRU if cell == "bigru" else nn.GRU
        width = 2 if cell == "bigru" else 1
        self.cell = cell
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.hidden = (h1, h2)
        self.layer1 = layer(input_dim, h1, rng)
        self.layer2 = layer(width * h1, h2, rng)
        self.head = nn.Dense(width * h2, output_dim, "linear", rng)
        self.children = {"layer1": self.layer1, "layer2": self.layer2, "head": self.head}

    def topology(self) -> tuple:
        return (self.cell, self.input_dim, self.hidden, self.output_dim)

    def forward(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        if x.shape[-1] != self.input_dim:
            raise ShapeMismatch(f"model expects input dim {self.input_dim}, got {x.shape[-1]}")
        return self.head.forward(self.layer2.forward(self.layer1.forward(x, mask), mask))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return self.layer1.backward(self.layer2.backward(self.head.backward(dout)))

    def predict(self, mfcc: np.ndarray) -> np.ndarray:
        """``(T, 13) -> (T, D)`` for one utterance."""
        return self.forward(np.asarray(mfcc, dtype=np.float64)[:, None, :])[:, 0, :]


class Generator(RegressionModel):
    def __init__(self, output_dim: int, hidden=DESK_SIZES, input_dim: int = MFCC_DIM, seed: int = 0):
        super().__init__(output_dim, hidden, "bigru", input_dim, seed)


def regression_forward(model: RegressionModel, mfcc: np.ndarray) -> np.ndarray:
    return model.predict(mfcc)


def generate(gen: Generator, mfcc: np.ndarray) -> np.ndarray:
    return gen.predict(mfcc)


class Discriminator(nn.Module):
    """Parallel Bi-GRU branches over MFCC and EEG, fused by a GRU, scored by a sigmoid unit.

    The head reads the fusion GRU's state at the last valid frame.
    """

    def __init__(
        self,
        eeg_dim: int,
        branch_sizes=DESK_SIZES,
        fusion_size: int | None = None,
        mfcc_dim: int = MFCC_DIM,
        seed: int = 1,
    ):
        super().__init__()
        rng = np.random.default_rng(seed)
        hm, he = branch_sizes
        hf = he if fusion_size is None else fusion_size
        self.mfcc_dim, self.eeg_dim = mfcc_dim, eeg_dim
        self.mfcc_branch = nn.BiGRU(mfcc_dim, hm, rng)
        self.eeg_branch = nn.BiGRU(eeg_dim, he, rng)
        self.fusion = nn.GRU(2 * hm + 2 * he, hf, rng)
        self.head = nn.Dense(hf, 1, "sigmoid", rng)
        self.children = {
            "mfcc_branch": self.mfcc_branch,
            "eeg_branch": self.eeg_branch,
            "fusion": self.fusion,
            "head": self.head,
        }
        self._T = None

    def forward(self, mfcc: np.ndarray, eeg: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        """Sigmoid scores, shape ``(B,)``, unclamped."""
        if mfcc.shape[:2] != eeg.shape[:2]:
            raise ShapeMismatch(f"branch inputs differ in length/batch: {mfcc.shape} vs {eeg.shape}")
        a = self.mfcc_branch.forward(mfcc, mask)
        e = self.eeg_branch.forward(eeg, mask)
        fused = self.fusion.forward(np.concatenate([a, e], axis=2), mask)
        self._T = fused.shape[0]
        return self.head.forward(fused[-1])[:, 0]

    def backward(self, dp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self._T is None:
            raise GraphNotRecorded("Discriminator.backward called before forward")
        dlast = self.head.backward(dp[:, None])
        dfused = np.zeros((self._T,) + dlast.shape)
        dfused[-1] = dlast
        dcat = self.fusion.backward(dfused)
        split = self.mfcc_branch.output_size
        return (
            self.mfcc_branch.backward(dcat[:, :, :split]),
            self.eeg_branch.backward(dcat[:, :, split:]),
        )


def clamp_prob(p):
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


@dataclass
class DiscriminatorJudgement:
    """Scores for (real MFCC, fake EEG) and (real MFCC, real EEG) pairs."""

    p_sf: np.ndarray
    p_se: np.ndarray

    def __post_init__(self):
        self.p_sf = clamp_prob(np.asarray(self.p_sf, dtype=np.float64))
        self.p_se = clamp_prob(np.asarray(self.p_se, dtype=np.float64))


def generator_loss(judgement: DiscriminatorJudgement, fake_eeg, real_eeg, mask=None) -> float:
    """``-log(p_sf) + 0.5 * MSE(real, fake)``, batch-averaged."""
    return float(np.mean(-np.log(judgement.p_sf))) + 0.5 * nn.mse_loss(fake_eeg, real_eeg, mask)


def discriminator_loss(judgement: DiscriminatorJudgement) -> float:
    """``-log(p_se) - log(1 - p_sf)``, batch-averaged."""
    return float(np.mean(-np.log(judgement.p_se) - np.log(1.0 - judgement.p_sf)))


def _clamp_pass(p: np.ndarray) -> np.ndarray:
    # gradient flows only where the clamp is inactive
    return ((p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)).astype(np.float64)


def init_generator_from_regression(gen: Generator, reg: RegressionModel) -> Generator:
    """Copy every recurrent and dense weight of ``reg`` into ``gen``."""
    if gen.topology() != reg.topology():
        raise TopologyMismatch(f"generator {gen.topology()} vs regression {reg.topology()}")
    gen.load_parameters(reg.named_parameters())
    return gen


# -- training -------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    clip_norm: float = 5.0
    seed: int = 0


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)

    def add(self, epoch: int, split: str, loss_name: str, value: float):
        self.rows.append((epoch, split, loss_name, float(value)))

    def series(self, split: str, loss_name: str) -> np.ndarray:
        return np.array([v for _, s, n, v in self.rows if s == split and n == loss_name])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "split", "loss_name", "value"])
            for epoch, split, name, value in self.rows:
                w.writerow([epoch, split, name, repr(value)])

    @classmethod
    def read_csv(cls, path) -> "TrainingLog":
        out = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                out.add(int(row["epoch"]), row["split"], row["loss_name"], float(row["value"]))
        return out


def pad_batch(seqs) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``(T_i, F)`` arrays into ``(T_max, B, F)`` plus a ``(T_max, B)`` mask."""
    T = max(len(s) for s in seqs)
    out = np.zeros((T, len(seqs), seqs[0].shape[1]))
    mask = np.zeros((T, len(seqs)))
    for b, s in enumerate(seqs):
        out[: len(s), b] = s
        mask[: len(s), b] = 1.0
    return out, mask


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _check_finite(value: float, what: str, epoch: int):
    if not np.isfinite(value):
        raise NonFiniteLoss(f"{what} became {value} in epoch {epoch}")


def batched_mse(model: RegressionModel, pairs, batch_size: int = 64) -> float:
    """Frame-weighted MSE of ``model`` over ``pairs``."""
    total, count = 0.0, 0.0
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        x, mask = pad_batch([m for m, _ in chunk])
        y, _ = pad_batch([e for _, e in chunk])
        pred = model.forward(x, mask)
        total += float((((pred - y) ** 2) * mask[:, :, None]).sum())
        count += float(mask.sum()) * y.shape[2]
    return total / count


def train_regression(model: RegressionModel, train_pairs, val_pairs=None, config=TrainConfig()) -> TrainingLog:
    """Minibatch MSE training with Adam; the best-validation parameters are restored at the end."""
    if not train_pairs:
        raise EmptySplit("no training utterances")
    rng = np.random.default_rng(config.seed)
    params = model.named_parameters()
    grads = model.named_gradients()
    adam = nn.AdamState(lr=config.lr)
    history = TrainingLog()
    best, best_params = np.inf, {k: v.copy() for k, v in params.items()}
    for epoch in range(1, config.epochs + 1):
        losses, weights = [], []
        for idx in _batches(len(train_pairs), config.batch_size, rng):
            x, mask = pad_batch([train_pairs[i][0] for i in idx])
            y, _ = pad_batch([train_pairs[i][1] for i in idx])
            model.zero_grad()
            pred = model.forward(x, mask)
            loss = nn.mse_loss(pred, y, mask)
            _check_finite(loss, "regression loss", epoch)
            model.backward(nn.mse_loss_grad(pred, y, mask))
            nn.clip_grad_norm(grads, config.clip_norm)
            nn.adam_step(params, grads, adam)
            losses.append(loss)
            weights.append(mask.sum())
        # frame-weighted, so the epoch value does not depend on batch order
        train_loss = float(np.average(losses, weights=weights))
        history.add(epoch, "train", "mse", train_loss)
        score = train_loss
        if val_pairs:
            score = batched_mse(model, val_pairs)
            history.add(epoch, "val", "mse", score)
        if score < best:
            best = score
            best_params = {k: v.copy() for k, v in params.items()}
        log.debug("epoch %d train %.5f val %.5f", epoch, train_loss, score)
    model.load_parameters(best_params)
    return history


def train_gan(gen: Generator, disc: Discriminator, train_pairs, val_pairs=None, config=TrainConfig(epochs=200)) -> TrainingLog:
    """Alternating per-batch updates: one discriminator step, then one generator step.

    The discriminator sees (MFCC, real EEG) and (MFCC, generated EEG) in one
    stacked batch. The generator step backpropagates through the discriminator
    without updating it.
    """
    if not train_pairs:
        raise EmptySplit("no training utterances")
    rng = np.random.default_rng(config.seed)
    g_params, g_grads = gen.named_parameters(), gen.named_gradients()
    d_params, d_grads = disc.named_parameters(), disc.named_gradients()
    g_adam, d_adam = nn.AdamState(lr=config.lr), nn.AdamState(lr=config.lr)
    history = TrainingLog()
    for epoch in range(1, config.epochs + 1):
        g_losses, d_losses, weights = [], [], []
        for idx in _batches(len(train_pairs), config.batch_size, rng):
            x, mask = pad_batch([train_pairs[i][0] for i in idx])
            real, _ = pad_batch([train_pairs[i][1] for i in idx])
            B = len(idx)

            gen.zero_grad()
            fake = gen.forward(x, mask)

            disc.zero_grad()
            p = disc.forward(
                np.concatenate([x, x], axis=1),
                np.concatenate([real, fake], axis=1),
                np.concatenate([mask, mask], axis=1),
            )
            judged = DiscriminatorJudgement(p_sf=p[B:], p_se=p[:B])
            d_loss = discriminator_loss(judged)
            _check_finite(d_loss, "discriminator loss", epoch)
            dp = np.concatenate([-1.0 / (B * judged.p_se), 1.0 / (B * (1.0 - judged.p_sf))])
            disc.backward(dp * _clamp_pass(p))
            nn.clip_grad_norm(d_grads, config.clip_norm)
            nn.adam_step(d_params, d_grads, d_adam)

            p_sf = disc.forward(x, fake, mask)
            judged = DiscriminatorJudgement(p_sf=p_sf, p_se=judged.p_se)
            g_loss = generator_loss(judged, fake, real, mask)
            _check_finite(g_loss, "generator loss", epoch)
            _, dfake = disc.backward(-1.0 / (B * judged.p_sf) * _clamp_pass(p_sf))
            disc.zero_grad()
            gen.backward(dfake + 0.5 * nn.mse_loss_grad(fake, real, mask))
            nn.clip_grad_norm(g_grads, config.clip_norm)
            nn.adam_step(g_params, g_grads, g_adam)

            g_losses.append(g_loss)
            d_losses.append(d_loss)
            weights.append(B)
        history.add(epoch, "train", "generator", float(np.average(g_losses, weights=weights)))
        history.add(epoch, "train", "discriminator", float(np.average(d_losses, weights=weights)))
        if val_pairs:
            history.add(epoch, "val", "mse", batched_mse(gen, val_pairs))
    return history


# -- checkpoints -----------------------------------------------------------------

def model_from_parameters(params: dict[str, np.ndarray]) -> RegressionModel:
    """Rebuild a regression model or generator from its checkpoint names and shapes."""
    cell = "bigru" if "layer1.fwd.W_z" in params else "gru"
    pre1 = "layer1.fwd." if cell == "bigru" else "layer1."
    pre2 = "layer2.fwd." if cell == "bigru" else "layer2."
    h1, input_dim = params[pre1 + "W_z"].shape
    h2 = params[pre2 + "W_z"].shape[0]
    output_dim = params["head.W"].shape[0]
    model = RegressionModel(output_dim, (h1, h2), cell, input_dim)
    own = set(model.named_parameters())
    model.load_parameters({k: v for k, v in params.items() if k in own})
    return model


def save_model(path, model: RegressionModel, extra: dict[str, np.ndarray] | None = None):
    from .formats import write_checkpoint

    params = dict(model.named_parameters())
    for k, v in (extra or {}).items():
        params[k] = np.atleast_1d(np.asarray(v, dtype=np.float64))
    write_checkpoint(Path(path), params)
