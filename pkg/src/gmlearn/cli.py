"""Command line entry point: synth, train, predict, eval, plotdata."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness as H
from .learn import predict, write_training_log
from .loss import instance_loss

logger = logging.getLogger("gmlearn")


def _floats(text: str):
    return tuple(float(x) for x in text.split(",") if x)


def _ints(text: str):
    return tuple(int(x) for x in text.split(",") if x)


def cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenes = H.synth_sequence(args.frames, args.points, args.noise, args.rotation, args.seed)
    for t, scene in enumerate(scenes):
        scene.path = str(out / f"frame_{t:03d}.txt")
        H.save_scene(scene, scene.path)
    if args.baselines:
        entries = []
        for b in _ints(args.baselines):
            entries.extend(H.make_pairs(scenes, b).entries)
        H.save_manifest(H.PairManifest(entries), out / "manifest.tsv")
    print(f"wrote {len(scenes)} scenes to {out}")


def _config(args) -> H.ExperimentConfig:
    return H.ExperimentConfig(lambdas=_floats(args.lambdas), epsilon=args.epsilon,
                              max_iterations=args.max_iterations, loss=args.loss,
                              measure_time=not getattr(args, "no_timing", False))


def cmd_train(args):
    manifest = H.load_manifest(args.manifest)
    cfg = _config(args)
    method = f"{args.method}-learned"
    entries = manifest.split("train", args.baseline)
    if not entries:
        raise ValueError("manifest has no training pairs")
    train_set = [H.pair_instance(e, cfg.shape_context) for e in entries]
    valid_set = [H.pair_instance(e, cfg.shape_context) for e in manifest.split("valid", args.baseline)]
    loss_kind = H._loss_kind(cfg, train_set)
    lam, state = H.fit_learned(method, train_set, valid_set, loss_kind, cfg)
    H.save_model(state.w, args.out, args.method, lam)
    if args.log:
        write_training_log(state.history, args.log)
    print(f"lambda={lam!r} iterations={state.iterations} converged={state.converged} "
          f"slack={state.risk_upper_bound:.6g} risk={state.empirical_risk:.6g}")


def cmd_predict(args):
    w, inference, _ = H.load_model(args.model)
    a, b = H.load_scene(args.scene_a), H.load_scene(args.scene_b)
    cfg = H.ExperimentConfig()
    if a.labels is not None and b.labels is not None:
        pair = H.make_pairs([a, b], 1).entries[0]
        rows = [i for i, _ in pair.correspondences]
    else:
        rows = list(range(len(a.points)))
        pair = H.PairEntry(a, b, tuple((i, i) for i in rows), 1, "test")
    inst = H.pair_instance(pair, cfg.shape_context)
    mode = "linear" if inference == "linear" else cfg.graduated
    y = predict(w, inst.g, inst.g_prime, mode, linear_model=(inference == "linear"))
    ids_a = a.labels or [str(i) for i in range(len(a.points))]
    ids_b = b.labels or [str(i) for i in range(len(b.points))]
    lines = ["# query_index target_index query_id target_id"]
    for i, j in zip(rows, y.perm):
        lines.append(f"{i} {j} {ids_a[i]} {ids_b[j]}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if a.labels is not None and b.labels is not None:
        print(f"hamming loss vs shared labels: {instance_loss(H.HAMMING, inst, y):.4f}", file=sys.stderr)


def cmd_eval(args):
    manifest = H.load_manifest(args.manifest)
    cfg = _config(args)
    if args.model:
        w, inference, lam = H.load_model(args.model)
        method = f"{inference}-learned"
        report = H.ExperimentReport()
        for baseline in manifest.baselines:
            test = [H.pair_instance(e, cfg.shape_context) for e in manifest.split("test", baseline)]
            if not test:
                continue
            losses, runtime = H.evaluate(H.make_solver(method, cfg, w), test, H._loss_kind(cfg, test), cfg)
            report.rows.append(H.ReportRow(baseline, method, float(np.mean(losses)), H.standard_error(losses),
                                           runtime, len(losses), lam, None))
        report.weights["model"] = [float(v) for v in w.as_array()]
    else:
        report = H.run_experiment(manifest, args.methods.split(","), cfg)
    Path(args.out).write_text(report.to_json())
    for r in report.rows:
        rt = "-" if r.mean_runtime_ms is None else f"{r.mean_runtime_ms:.3f} ms"
        print(f"baseline {r.baseline:3d}  {r.method:22s} loss {r.mean_loss:.4f} ({r.stderr:.4f})  {rt}")


def cmd_plotdata(args):
    report = H.ExperimentReport.from_json(Path(args.report).read_text())
    H.emit_plot_data(report, args.out)


def _add_learning_args(p):
    p.add_argument("--lambdas", default=",".join(repr(x) for x in H.DEFAULT_LAMBDAS))
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--loss", choices=("auto", "hamming", "endpoint"), default="auto")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmlearn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic rotating point sequence")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--points", type=int, default=15)
    p.add_argument("--noise", type=float, default=0.03)
    p.add_argument("--rotation", type=float, default=3.0, help="degrees per frame")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baselines", default="", help="comma-separated; also writes manifest.tsv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="learn weights on the training split of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", choices=("linear", "quadratic"), default="linear")
    p.add_argument("--baseline", type=int, default=None, help="restrict to one baseline")
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("--log", help="training log (TSV)")
    _add_learning_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="match two scene files with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--scene-a", required=True)
    p.add_argument("--scene-b", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="evaluate a model, or run full experiments, on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", help="evaluate this model on the test split")
    p.add_argument("--methods", default="linear-learned,linear-unlearned",
                   help=f"used without --model; any of {','.join(H.METHODS)}")
    p.add_argument("--out", required=True, help="report (JSON)")
    p.add_argument("--no-timing", action="store_true", help="omit runtimes (byte-reproducible reports)")
    _add_learning_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plotdata", help="convert a report to TSV plot data")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (OSError, ValueError) as exc:
        print(f"gmlearn: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
