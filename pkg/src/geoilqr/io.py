"""File formats: demonstration sets (JSON/CSV), frames, atomic writes."""
from __future__ import annotations

import csv
import json
import os
import tempfile

import numpy as np

from .charts import CartesianPose, Frame2D, Frame3D

SCHEMA_VERSION = 1


def atomic_write_text(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, obj: dict):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def frame_to_dict(frame) -> dict:
    if isinstance(frame, Frame2D):
        return {"translation": frame.translation.tolist(), "heading": frame.angle}
    return {"translation": frame.translation.tolist(),
            "quaternion": frame.quaternion.tolist()}


def frame_from_dict(d: dict):
    t = np.array(d["translation"], dtype=float)
    if "heading" in d:
        return Frame2D(t, float(d["heading"]))
    return Frame3D(t, np.array(d["quaternion"], dtype=float))


def demos_to_dict(demos: list) -> dict:
    rows = []
    for demo in demos:
        frames = []
        for t, pose in zip(demo.times, demo.poses):
            frames.append([int(t)] + pose.position.tolist()
                          + pose.orientation.tolist())
        rows.append(frames)
    first = demos[0]
    return {
        "schema_version": SCHEMA_VERSION,
        "dt": first.dt,
        "object_frame": frame_to_dict(first.object_frame),
        "ids": [demo.id for demo in demos],
        "demos": rows,
    }


def demos_from_dict(d: dict) -> list:
    from .phases import Demonstration
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {d.get('schema_version')}")
    frame = frame_from_dict(d["object_frame"])
    dim = 2 if isinstance(frame, Frame2D) else 3
    ids = d.get("ids") or [f"demo-{i}" for i in range(len(d["demos"]))]
    demos = []
    for i, rows in enumerate(d["demos"]):
        arr = np.asarray(rows, dtype=float)
        times = arr[:, 0].astype(int)
        poses = [CartesianPose(row[1:1 + dim], row[1 + dim:])
                 for row in arr]
        demos.append(Demonstration(ids[i], float(d["dt"]), times, poses,
                                   frame))
    return demos


def demos_to_csv(demos: list) -> str:
    """Flat CSV alternative; dt and object frame live in the JSON sidecar."""
    dim = demos[0].poses[0].dim
    header = (["demo", "t", "x", "y", "hx", "hy"] if dim == 2
              else ["demo", "t", "x", "y", "z", "qw", "qx", "qy", "qz"])
    lines = [",".join(header)]
    for i, demo in enumerate(demos):
        for t, pose in zip(demo.times, demo.poses):
            vals = [i, int(t), *pose.position, *pose.orientation]
            lines.append(",".join(str(v) for v in vals))
    return "\n".join(lines) + "\n"


def demos_from_csv(text: str, dt: float, frame) -> list:
    from .phases import Demonstration
    reader = csv.DictReader(text.splitlines())
    buckets = {}
    for row in reader:
        i = int(row["demo"])
        if "z" in (reader.fieldnames or []):
            pos = [float(row["x"]), float(row["y"]), float(row["z"])]
            ori = [float(row[k]) for k in ("qw", "qx", "qy", "qz")]
        else:
            pos = [float(row["x"]), float(row["y"])]
            ori = [float(row["hx"]), float(row["hy"])]
        buckets.setdefault(i, []).append((int(row["t"]), pos, ori))
    demos = []
    for i in sorted(buckets):
        rows = sorted(buckets[i])
        times = np.array([r[0] for r in rows])
        poses = [CartesianPose(np.array(p), np.array(o)) for _, p, o in rows]
        demos.append(Demonstration(f"demo-{i}", dt, times, poses, frame))
    return demos
