"""Command line: ``memtrack {synth,track,eval,selftest}``.

Exit status is 0 on success, 1 on a runtime failure and 2 on bad usage.
"""
import argparse
import csv
import json
import sys

from ..encoder import AGGREGATIONS
from ..errors import InvariantError
from ..metrics import check_frame_range, evaluate
from .config import ConfigError, RunConfig, load_run_config, load_scene_config, scene_to_dict
from .io import parse_mot_file, write_mot_results
from .pipeline import build_model, proposals_from_annotations, to_pixels, track_proposals, track_scene
from .selftest import run_selftest
from .synth import generate_scene


def _dump(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def cmd_synth(args):
    scene = load_scene_config(args.scene)
    gt, _ = generate_scene(scene)
    write_mot_results(gt, args.out_gt)
    return 0


def cmd_track(args):
    run = load_run_config(args.config) if args.config else RunConfig()
    if args.aggregation:
        run.aggregation = args.aggregation
    if args.scene:
        run.scene = load_scene_config(args.scene)
    if args.detections == "synthetic":
        if run.scene is None:
            raise ConfigError("synthetic detections need a scene (config 'scene' or --scene)")
        _, results = track_scene(run.scene, run)
    else:
        if run.model.path == "learned":
            raise ConfigError("detection files feed the oracle path; set model.path to 'oracle'")
        dets = parse_mot_file(args.detections)
        model = build_model(run)
        per_frame = proposals_from_annotations(dets, run.image_size, model.dim)
        results = to_pixels(track_proposals(per_frame, run, model), run.image_size)
    write_mot_results(results, args.out)
    return 0


def cmd_eval(args):
    gt = parse_mot_file(args.gt)
    pred = parse_mot_file(args.pred)
    check_frame_range(gt, pred)
    report = evaluate(gt, pred, args.iou).to_dict()
    text = _dump(report)
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(list(report))
            writer.writerow([report[k] for k in report])
    return 0


def cmd_selftest(args):
    report = run_selftest(args.seed)
    sys.stdout.write(_dump(report))
    return 0 if report["passed"] else 1


def cmd_scene_template(args):
    from .synth import SceneConfig

    sys.stdout.write(_dump(scene_to_dict(SceneConfig(seed=args.seed))))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="memtrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ground-truth sequence")
    p.add_argument("--scene", required=True, help="scene JSON")
    p.add_argument("--out-gt", required=True, help="ground-truth MOT file to write")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("track", help="run the tracker")
    p.add_argument("--config", help="run JSON (defaults apply when omitted)")
    p.add_argument("--detections", required=True, help="MOT detection file, or 'synthetic'")
    p.add_argument("--scene", help="scene JSON for synthetic detections")
    p.add_argument("--aggregation", choices=AGGREGATIONS, help="memory aggregation strategy")
    p.add_argument("--out", required=True, help="results MOT file to write")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score results against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--csv", help="write a one-row CSV summary here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selftest", help="run built-in gradient and oracle checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("scene-template", help="print a default scene JSON")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_scene_template)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "iou", None) is not None and not 0.0 <= args.iou <= 1.0:
        parser.error("--iou must lie in [0, 1]")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, InvariantError) as exc:
        print(f"memtrack: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
