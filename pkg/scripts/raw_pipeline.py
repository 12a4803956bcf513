"""End-to-end CLI run starting from raw signals.

Synthesises paired 16 kHz audio and 31-channel 1000 Hz EEG recordings, then
runs preprocess, extract-mfcc, extract-eeg, reduce, train and evaluate.
The EEG here is unrelated to the audio, so the scores only show the plumbing.
"""
import argparse
from pathlib import Path

import numpy as np

from acoustic_eeg.cli import main as cli
from acoustic_eeg.dataset import DatasetManifest, Utterance, split_dataset
from acoustic_eeg.dsp import Signal
from acoustic_eeg.formats import read_features, write_signal
from acoustic_eeg.reduction import FEATURE_SETS


def run(*argv):
    code = cli([str(a) for a in argv])
    if code:
        raise SystemExit(f"{argv[0]} failed with exit code {code}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--seconds", type=float, default=1.0)
    ap.add_argument("--set", type=int, choices=sorted(FEATURE_SETS), default=1)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--out-dir", default="runs/raw_pipeline")
    args = ap.parse_args()

    out = Path(args.out_dir)
    rng = np.random.default_rng(0)
    n = int(args.seconds * 1000)
    t = np.arange(n) / 1000.0
    for i in range(args.n):
        audio = rng.normal(size=16 * n) * np.repeat(1 + np.sin(2 * np.pi * rng.uniform(2, 6) * t), 16)
        hum = np.sin(2 * np.pi * 60 * t)
        eeg = rng.normal(size=(31, n)) + np.sin(2 * np.pi * rng.uniform(4, 30, size=(31, 1)) * t) + hum
        write_signal(out / "raw" / "audio" / f"u{i:03d}.sig", Signal(audio, 16000.0))
        write_signal(out / "raw" / "eeg" / f"u{i:03d}.sig", Signal(eeg, 1000.0))

    run("preprocess", *sorted((out / "raw" / "eeg").glob("*.sig")), "--out-dir", out / "pre")
    run("extract-mfcc", *sorted((out / "raw" / "audio").glob("*.sig")), "--out-dir", out / "mfcc")
    spec = FEATURE_SETS[args.set]
    run("extract-eeg", *sorted((out / "pre").glob("*.sig")), "--stats", ",".join(spec.statistics),
        "--out-dir", out / "eeg")

    utts = []
    for i in range(args.n):
        uid = f"u{i:03d}"
        frames = read_features(out / "mfcc" / f"{uid}.eaf").n_frames
        utts.append(Utterance(uid, f"S{i % 4 + 1}", "spoken", f"mfcc/{uid}.eaf", f"eeg/{uid}.eaf", frames))
    split_dataset(DatasetManifest(utts, args.set, spec.raw_dim, root=out), seed=0).write(out / "manifest.txt")

    run("reduce", "--manifest", out / "manifest.txt", "--set", args.set, "--out-dir", out / "reduced")
    run("train", "--manifest", out / "reduced" / "manifest.txt", "--set", args.set, "--epochs", args.epochs,
        "--out-dir", out / "train")
    run("evaluate", "--manifest", out / "reduced" / "manifest.txt", "--checkpoint", out / "train" / "model.nnw",
        "--out-dir", out / "eval")


if __name__ == "__main__":
    main()
