"""MOT-Challenge CSV files.

Each line is ``frame,id,left,top,width,height,conf,x,y,z``; fields past the
confidence are ignored on input and written as ``-1``.
"""
import csv
from collections import defaultdict

from ..metrics import AnnotationRow, FrameAnnotations


class MotParseError(ValueError):
    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no


def _number(text):
    v = float(text)
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError(f"non-finite value {text!r}")
    return v


def parse_mot_file(path):
    frames = defaultdict(dict)
    with open(path, newline="") as fh:
        for line_no, fields in enumerate(csv.reader(fh), start=1):
            fields = [f.strip() for f in fields]
            if not fields or fields == [""]:
                continue
            if len(fields) < 6:
                raise MotParseError(path, line_no, f"expected at least 6 fields, got {len(fields)}")
            try:
                frame = int(fields[0])
                track_id = int(_number(fields[1]))
                box = tuple(_number(v) for v in fields[2:6])
                conf = _number(fields[6]) if len(fields) > 6 and fields[6] else 1.0
            except ValueError as exc:
                raise MotParseError(path, line_no, str(exc)) from None
            if box[2] <= 0 or box[3] <= 0:
                raise MotParseError(path, line_no, f"non-positive box size {box[2]}x{box[3]}")
            if track_id in frames[frame]:
                raise MotParseError(path, line_no, f"id {track_id} repeated in frame {frame}")
            frames[frame][track_id] = AnnotationRow(track_id, box, conf)
    return [
        FrameAnnotations(f, [rows[k] for k in sorted(rows)])
        for f, rows in sorted(frames.items())
    ]


def _fmt(v):
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def format_rows(annotations):
    lines = []
    for frame in sorted(annotations, key=lambda f: f.frame_index):
        for r in sorted(frame.rows, key=lambda r: r.track_id):
            box = ",".join(_fmt(v) for v in r.box)
            lines.append(f"{frame.frame_index},{r.track_id},{box},{r.confidence:.6f},-1,-1,-1\n")
    return "".join(lines)


def write_mot_results(annotations, path):
    with open(path, "w", newline="") as fh:
        fh.write(format_rows(annotations))
