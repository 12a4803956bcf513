"""Magnitude response of the EEG preprocessing filters.

Writes ``freq_hz,bandpass_db,notch_db,cascade_db`` rows to stdout or ``--csv``.
"""
import argparse
import sys

import numpy as np

from acoustic_eeg.dsp import cascade, design_bandpass, design_notch, freq_response


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fs", type=float, default=1000.0)
    ap.add_argument("--band", type=float, nargs=2, default=(0.1, 70.0))
    ap.add_argument("--order", type=int, default=4)
    ap.add_argument("--notch", type=float, default=60.0)
    ap.add_argument("--q", type=float, default=30.0)
    ap.add_argument("--points", type=int, default=200)
    ap.add_argument("--csv")
    args = ap.parse_args()

    bp = design_bandpass(*args.band, args.order, args.fs)
    notch = design_notch(args.notch, args.q, args.fs)
    both = cascade(bp, notch)
    # log-spaced grid, plus the frequencies the design is judged at
    f = np.unique(np.concatenate([
        np.geomspace(0.01, args.fs / 2, args.points), [10.0, 200.0, args.notch, *args.band]
    ]))
    db = lambda filt: 20 * np.log10(np.maximum(np.abs(freq_response(filt, f, args.fs)), 1e-12))  # noqa: E731
    rows = np.column_stack([f, db(bp), db(notch), db(both)])

    fh = open(args.csv, "w") if args.csv else sys.stdout
    fh.write("freq_hz,bandpass_db,notch_db,cascade_db\n")
    for r in rows:
        fh.write(",".join(f"{v:.6g}" for v in r) + "\n")
    if args.csv:
        fh.close()
    print(f"max bandpass pole radius {np.abs(bp.poles()).max():.6f}", file=sys.stderr)


if __name__ == "__main__":
    main()
