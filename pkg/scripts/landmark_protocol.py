"""Baseline sweep on a user-supplied landmark sequence (e.g. the CMU house frames).

Input is a directory of frames, in natural file name order. Each frame is either a
scene file (``width W`` header, then ``id x y`` rows) or, with --raw, a plain
``x y`` per line where row k is landmark k in every frame. For each baseline
all pairs (t, t + baseline) are formed and split into train/valid/test by
pair index modulo 3; lambda is picked on the validation third.
"""
import argparse
import logging
import re
from pathlib import Path

import numpy as np

from gmlearn import harness as H


def natural_key(path: Path):
    # house.seq2 before house.seq10
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", path.name)]


def load_frames(directory: Path, raw: bool, width: float):
    paths = sorted((p for p in directory.iterdir() if p.is_file() and not p.name.startswith(".")), key=natural_key)
    if not paths:
        raise SystemExit(f"no frames in {directory}")
    if not raw:
        return [H.load_scene(p) for p in paths]
    frames = []
    for p in paths:
        pts = np.loadtxt(p, ndmin=2)[:, :2]
        frames.append(H.SceneFile(pts, [str(i) for i in range(len(pts))], width, str(p)))
    return frames


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("frames", type=Path)
    p.add_argument("--raw", action="store_true", help="frames are bare 'x y' rows")
    p.add_argument("--width", type=float, default=1.0, help="scene width for --raw frames")
    p.add_argument("--out", default="runs/landmarks")
    p.add_argument("--baselines", default=",".join(str(b) for b in range(0, 100, 10)))
    p.add_argument("--methods", default=",".join(H.METHODS))
    p.add_argument("--no-timing", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    scenes = load_frames(args.frames, args.raw, args.width)
    baselines = [int(b) for b in args.baselines.split(",") if int(b) < len(scenes)]
    manifest = H.PairManifest([e for b in baselines for e in H.make_pairs(scenes, b).entries])
    report = H.run_experiment(manifest, args.methods.split(","), H.ExperimentConfig(measure_time=not args.no_timing))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    H.save_manifest(manifest, out / "manifest.tsv")
    (out / "report.json").write_text(report.to_json())
    H.emit_plot_data(report, out / "plot.tsv")
    for r in report.rows:
        print(f"{r.baseline:>3}  {r.method:<22} {r.mean_loss:.4f} ({r.stderr:.4f})")


if __name__ == "__main__":
    main()
