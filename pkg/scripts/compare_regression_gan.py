"""Regression vs warm-started GAN on a synthetic corpus.

Trains a GRU and a Bi-GRU regression model, then a GAN whose generator starts
from the Bi-GRU weights, and prints test RMSE in the results-table layout next
to the oracle noise floor. Loss curves go to ``--out-dir``.

    python scripts/compare_regression_gan.py --n 400 --epochs 100 --gan-epochs 200
"""
import argparse
import copy
import time
from pathlib import Path

from acoustic_eeg.dataset import SyntheticMapping, SyntheticSpec, fit_zscore, load_pairs, synth_generate
from acoustic_eeg.evaluation import evaluate_model, export_table
from acoustic_eeg.models import (
    Discriminator, Generator, RegressionModel, TrainConfig, init_generator_from_regression,
    train_gan, train_regression,
)


class ZSpaceOracle:
    """True mapping, evaluated in the z-scored feature space."""

    def __init__(self, mapping, stats):
        self.mapping, self.stats = mapping, stats

    def predict(self, mfcc_z):
        mfcc = mfcc_z * self.stats.mfcc_std + self.stats.mfcc_mean
        return (self.mapping.predict(mfcc) - self.stats.eeg_mean) / self.stats.eeg_std


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--dim", type=int, default=30)
    ap.add_argument("--sigma", type=float, default=0.1)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--lr", type=float, default=3e-3)
    ap.add_argument("--gan-epochs", type=int, default=200)
    ap.add_argument("--gan-lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="runs/compare")
    args = ap.parse_args()

    out = Path(args.out_dir)
    manifest = synth_generate(
        SyntheticSpec(n_utterances=args.n, eeg_dim=args.dim, noise_sigma=args.sigma, seed=args.seed), out / "corpus"
    )
    stats = fit_zscore(load_pairs(manifest, "train"))
    train = stats.apply(load_pairs(manifest, "train"))
    val = stats.apply(load_pairs(manifest, "val"))
    cfg = TrainConfig(epochs=args.epochs, lr=args.lr, seed=args.seed)

    reports, models = [], {}
    for cell in ("gru", "bigru"):
        t0 = time.perf_counter()
        model = RegressionModel(args.dim, cell=cell, seed=args.seed)
        train_regression(model, train, val, cfg).write_csv(out / f"log_{cell}.csv")
        models[cell] = model
        reports.append(evaluate_model(model, manifest, "test", stats, cell)[0])
        print(f"{cell}: {reports[-1].average_rmse:.4f} ({time.perf_counter() - t0:.0f} s)")

    t0 = time.perf_counter()
    gen = init_generator_from_regression(Generator(args.dim, seed=args.seed), copy.deepcopy(models["bigru"]))
    log = train_gan(gen, Discriminator(args.dim, seed=args.seed + 1), train, val,
                    TrainConfig(epochs=args.gan_epochs, lr=args.gan_lr, seed=args.seed + 1))
    log.write_csv(out / "log_gan.csv")
    reports.append(evaluate_model(gen, manifest, "test", stats, "gan")[0])
    print(f"gan: {reports[-1].average_rmse:.4f} ({time.perf_counter() - t0:.0f} s)")

    floor = evaluate_model(ZSpaceOracle(SyntheticMapping.load(out / "corpus" / "mapping.npz"), stats),
                           manifest, "test", stats)[0].average_rmse
    text, _ = export_table(reports)
    print()
    print(text, end="")
    print(f"noise floor (true mapping): {floor:.4f}")
    print(f"GAN / Bi-GRU ratio: {reports[2].average_rmse / reports[1].average_rmse:.3f}")


if __name__ == "__main__":
    main()
