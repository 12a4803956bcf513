"""Command-line entry point: ``acoustic-eeg <command> [options]``.

Every command writes its fully resolved options to ``config.txt`` in its
output directory; passing that file back via ``--config`` reproduces the run
(command-line flags override file values).

Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dsp, features, formats
from .dataset import (
    DatasetManifest, NormStats, SyntheticSpec, Utterance, fit_zscore, load_pairs, synth_generate,
)
from .errors import CorruptFile, DimMismatch, EmptySplit, InvalidBand, LengthMismatch, PipelineError
from .evaluation import evaluate_model, export_table, reports_to_csv
from .models import (
    DESK_SIZES, FULL_SIZES, Discriminator, Generator, RegressionModel, TrainConfig,
    TrainingLog, init_generator_from_regression, model_from_parameters, save_model,
    train_gan, train_regression,
)
from .reduction import FEATURE_SETS, kpca_fit, kpca_transform

OUT_ENV = "ACOUSTIC_EEG_OUT"
MODEL_TAG_CODES = {"gru": 0, "bigru": 1, "gan": 2}

log = logging.getLogger("acoustic_eeg")


class UsageError(Exception):
    pass


def default_out(name: str) -> str:
    return str(Path(os.environ.get(OUT_ENV, "runs")) / name)


def read_config(path) -> dict[str, str]:
    cfg = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}: malformed config line {line!r}")
        cfg[key.strip()] = value.strip()
    return cfg


def _fmt(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return "" if value is None else str(value)


def write_resolved_config(out_dir: Path, args: argparse.Namespace):
    out_dir.mkdir(parents=True, exist_ok=True)
    skip = {"func", "config", "verbose"}
    lines = [f"command={args.command}"]
    lines += [f"{k}={_fmt(v)}" for k, v in sorted(vars(args).items()) if k not in skip | {"command"}]
    formats.atomic_write(out_dir / "config.txt", ("\n".join(lines) + "\n").encode())


def _list(value) -> list[str]:
    if isinstance(value, str):
        return [v for v in value.split(",") if v]
    return list(value or [])


def _pair(text: str, cast=float) -> tuple:
    parts = str(text).replace(",", ":").split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LOW:HIGH, got {text!r}")
    return cast(parts[0]), cast(parts[1])


def _ints(text) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).split(",") if v)


def _optional_float(text):
    return None if text in (None, "", "None") else float(text)


def _inputs(args) -> list[Path]:
    paths = [Path(p) for p in _list(args.inputs)]
    if not paths:
        raise UsageError("no input files given")
    for p in paths:
        if not p.exists():
            raise UsageError(f"input not found: {p}")
    return paths


# -- commands --------------------------------------------------------------------

def cmd_preprocess(args) -> int:
    out = Path(args.out_dir)
    band = args.band
    for path in _inputs(args):
        sig = formats.read_signal(path)
        filtered = dsp.preprocess_eeg(sig, band, args.order, args.notch or None, args.q)
        formats.write_signal(out / path.name, filtered)
    write_resolved_config(out, args)
    return 0


def cmd_extract_mfcc(args) -> int:
    out = Path(args.out_dir)
    cfg = features.MfccConfig(n_coeffs=args.n_coeffs)
    for path in _inputs(args):
        seq = features.extract_mfcc(formats.read_signal(path), cfg)
        formats.write_features(out / (path.stem + ".eaf"), seq)
    write_resolved_config(out, args)
    return 0


def cmd_extract_eeg(args) -> int:
    out = Path(args.out_dir)
    for path in _inputs(args):
        sig = formats.read_signal(path)
        cfg = features.EegFeatureConfig(channels=sig.channels, statistics=tuple(_list(args.stats)))
        formats.write_features(out / (path.stem + ".eaf"), features.extract_eeg_features(sig, cfg))
    write_resolved_config(out, args)
    return 0


def cmd_reduce(args) -> int:
    """Fit the reduction on the training split only, then apply it to every utterance."""
    manifest = DatasetManifest.read(args.manifest)
    spec = FEATURE_SETS[args.set]
    dim = args.dim or spec.reduced_dim
    out = Path(args.out_dir)
    train = [formats.read_features(manifest.resolve(u.eeg_path)).frames for u in manifest.in_split("train")]
    if not train:
        raise EmptySplit("manifest has no training utterances to fit the reduction on")
    raw_dim = train[0].shape[1]
    model = None
    if spec.reduction == "kpca" and dim != raw_dim:
        model = kpca_fit(np.concatenate(train), dim, args.kernel, args.gamma, args.max_frames, args.seed)
        formats.write_kpca(out / "kpca.kpc", model)
        dim = model.n_components
    utts = []
    for u in manifest.utterances:
        frames = formats.read_features(manifest.resolve(u.eeg_path)).frames
        if frames.shape[1] != raw_dim:
            raise DimMismatch(f"utterance {u.id}: EEG has {frames.shape[1]} columns, expected {raw_dim}")
        reduced = kpca_transform(model, frames) if model is not None else frames
        rel = f"eeg/{u.id}.eaf"
        formats.write_features(out / rel, features.FeatureSequence(reduced, 100.0, "eeg_reduced"))
        mfcc = os.path.relpath(manifest.resolve(u.mfcc_path).resolve(), out.resolve())
        utts.append(Utterance(u.id, u.subject, u.condition, mfcc, rel, u.frames))
    reduced_manifest = DatasetManifest(utts, args.set, dim, manifest.seed, dict(manifest.splits), out)
    reduced_manifest.write(out / "manifest.txt")
    write_resolved_config(out, args)
    return 0


def cmd_synth_data(args) -> int:
    spec = SyntheticSpec(
        n_utterances=args.n, frames=args.frames, eeg_dim=args.dim, noise_sigma=args.sigma,
        seed=args.seed, latent_dim=args.latent_dim, feature_set=args.set,
    )
    synth_generate(spec, args.out_dir)
    write_resolved_config(Path(args.out_dir), args)
    return 0


def _hidden(args) -> tuple[int, int]:
    return FULL_SIZES if args.full_scale else tuple(args.hidden)


def cmd_train(args) -> int:
    manifest = DatasetManifest.read(args.manifest)
    if args.set is not None and FEATURE_SETS[args.set].reduced_dim != manifest.eeg_dim:
        raise UsageError(
            f"feature set {args.set} has dim {FEATURE_SETS[args.set].reduced_dim}, "
            f"manifest EEG dim is {manifest.eeg_dim}"
        )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_raw = load_pairs(manifest, "train")
    if not train_raw:
        raise EmptySplit("manifest has no training utterances")
    stats = fit_zscore(train_raw)
    train, val = stats.apply(train_raw), stats.apply(load_pairs(manifest, "val"))
    hidden = _hidden(args)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr, seed=args.seed)
    extra = stats.as_arrays() | {"meta.model_tag": np.array([MODEL_TAG_CODES[args.model]])}

    if args.model in ("gru", "bigru"):
        model = RegressionModel(manifest.eeg_dim, hidden, args.model, seed=args.seed)
        history = train_regression(model, train, val, cfg)
    else:
        gen = Generator(manifest.eeg_dim, hidden, seed=args.seed)
        if args.warm_start:
            reg = model_from_parameters(formats.read_checkpoint(args.warm_start))
        else:
            reg = RegressionModel(manifest.eeg_dim, hidden, "bigru", seed=args.seed)
            train_regression(reg, train, val, cfg)
        init_generator_from_regression(gen, reg)
        disc = Discriminator(manifest.eeg_dim, hidden, seed=args.seed + 1)
        gan_cfg = TrainConfig(epochs=args.gan_epochs, batch_size=args.batch,
                              lr=args.gan_lr or args.lr, seed=args.seed)
        history = train_gan(gen, disc, train, val, gan_cfg)
        formats.write_checkpoint(out / "discriminator.nnw", disc.named_parameters())
        model = gen
    save_model(out / "model.nnw", model, extra)
    history.write_csv(out / "train_log.csv")
    write_resolved_config(out, args)
    return 0


def cmd_evaluate(args) -> int:
    manifest = DatasetManifest.read(args.manifest)
    params = formats.read_checkpoint(args.checkpoint)
    model = model_from_parameters(params)
    stats = NormStats.from_arrays(params)
    tag = args.model_tag
    if not tag:
        code = int(params.get("meta.model_tag", np.array([1]))[0])
        tag = {v: k for k, v in MODEL_TAG_CODES.items()}[code]
    reports = evaluate_model(model, manifest, args.split, stats, tag, group_by_subject=args.by_subject)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats.atomic_write(out / "eval.csv", reports_to_csv(reports).encode())
    text, table_csv = export_table(reports[:1])
    formats.atomic_write(out / "table.txt", text.encode())
    formats.atomic_write(out / "table.csv", table_csv.encode())
    print(text, end="")
    write_resolved_config(out, args)
    return 0


def cmd_export_curves(args) -> int:
    history = TrainingLog.read_csv(args.log)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = sorted({(split, name) for _, split, name, _ in history.rows})
    for split, name in keys:
        rows = [(e, v) for e, s, n, v in history.rows if (s, n) == (split, name)]
        body = "epoch,loss\n" + "".join(f"{e},{v!r}\n" for e, v in rows)
        formats.atomic_write(out / f"curve_{split}_{name}.csv", body.encode())
    write_resolved_config(out, args)
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="acoustic-eeg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key=value file; flags override it")
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("preprocess", cmd_preprocess, "bandpass + notch filter SIG1 files")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--band", type=_pair, default="0.1:70")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--notch", type=float, default=60.0, help="0 disables the notch")
    p.add_argument("--q", type=float, default=30.0)
    p.add_argument("--out-dir", default=default_out("preprocessed"))

    p = add("extract-mfcc", cmd_extract_mfcc, "13-dim MFCCs at 100 Hz from mono SIG1 files")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--n-coeffs", type=int, default=13)
    p.add_argument("--out-dir", default=default_out("mfcc"))

    p = add("extract-eeg", cmd_extract_eeg, "windowed per-channel statistics at 100 Hz")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--stats", default="rms,zero_crossing_rate,mean")
    p.add_argument("--out-dir", default=default_out("eeg_features"))

    p = add("reduce", cmd_reduce, "kernel PCA reduction fitted on the training split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--set", type=int, choices=sorted(FEATURE_SETS), default=1)
    p.add_argument("--dim", type=int, default=0, help="0 uses the feature set's dimension")
    p.add_argument("--kernel", choices=("rbf", "linear"), default="rbf")
    p.add_argument("--gamma", type=_optional_float, default=None)
    p.add_argument("--max-frames", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=default_out("reduced"))

    p = add("synth-data", cmd_synth_data, "synthetic paired corpus with a known mapping")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--frames", type=lambda s: _pair(s, int), default="60:120")
    p.add_argument("--dim", type=int, default=30)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--latent-dim", type=int, default=16)
    p.add_argument("--set", type=int, choices=sorted(FEATURE_SETS), default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=default_out("synth"))

    p = add("train", cmd_train, "train a GRU / Bi-GRU regression model or the GAN")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", choices=tuple(MODEL_TAG_CODES), default="bigru")
    p.add_argument("--set", type=int, choices=sorted(FEATURE_SETS), default=None)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--gan-epochs", type=int, default=200)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--gan-lr", type=_optional_float, default=None)
    p.add_argument("--hidden", type=_ints, default=",".join(map(str, DESK_SIZES)))
    p.add_argument("--full-scale", action="store_true", help=f"use hidden sizes {FULL_SIZES}")
    p.add_argument("--warm-start", default=None, help="regression checkpoint for the GAN generator")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=default_out("train"))

    p = add("evaluate", cmd_evaluate, "RMSE / normalised RMSE of a checkpoint on a split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--model-tag", choices=tuple(MODEL_TAG_CODES), default=None)
    p.add_argument("--by-subject", action="store_true")
    p.add_argument("--out-dir", default=default_out("eval"))

    p = add("export-curves", cmd_export_curves, "split a training log into per-loss curve CSVs")
    p.add_argument("--log", required=True)
    p.add_argument("--out-dir", default=default_out("curves"))
    return parser, subs


def _bool(text) -> bool:
    return str(text).lower() in ("1", "true", "yes", "on")


def parse_args(argv):
    parser, subs = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        cfg = read_config(known.config)
        command = cfg.pop("command", None)
        name = next((a for a in argv if a in subs), command)
        if name not in subs:
            raise UsageError("cannot tell which command the config belongs to")
        p = subs[name]
        flags = {a.dest: a for a in p._actions}
        defaults = {}
        for key, value in cfg.items():
            action = flags.get(key)
            if action is None:
                raise UsageError(f"unknown config key {key!r} for {name}")
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = _bool(value)
            elif action.nargs == "*":
                defaults[key] = _list(value)
            elif value == "" and action.default is None:
                defaults[key] = None
            else:
                defaults[key] = value
        p.set_defaults(**defaults)
        # `required` would reject values supplied by the file
        for action in p._actions:
            if action.required and action.dest in defaults:
                action.required = False
        if name not in argv:
            argv = [name] + list(argv)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, CorruptFile, DimMismatch, LengthMismatch,
            InvalidBand, EmptySplit) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
