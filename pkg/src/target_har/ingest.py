"""File formats: detections, embeddings, annotations, manifests, and pipeline outputs.

All text formats are UTF-8. Parsers accept bytes, str, or a binary/text
file object; writers return str (text formats) or bytes (binary containers).
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .core_types import (
    NUM_KEYPOINTS,
    ActionClip,
    ActionLabel,
    Detection,
    Track,
    Tracklet,
)

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

Source = Union[bytes, str, io.IOBase]


class ParseError(ValueError):
    """Malformed input; `line` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SchemaError(ParseError):
    pass


@dataclass(frozen=True)
class AnnotationSpan:
    start_frame: int
    end_frame: int
    label: ActionLabel
    subject_id: str


@dataclass(frozen=True)
class RunManifest:
    fps: float = 30.0
    frame_width: int = 1920
    frame_height: int = 1080
    subject_id: str = "subject"
    reference_tracklet: Optional[int] = None
    reference_detection: Optional[int] = None

    def __post_init__(self):
        if self.fps <= 0:
            raise SchemaError("fps must be positive")
        if self.frame_width <= 0 or self.frame_height <= 0:
            raise SchemaError("frame dimensions must be positive")


def _text(source: Source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# -- detections --------------------------------------------------------------


def _detection_record(d: Detection, with_id: bool = False) -> dict:
    rec = {
        "frame": d.frame_index,
        "box": list(d.box.as_tuple()),
        "score": d.score,
        "keypoints": [[k.x, k.y, k.confidence] for k in d.keypoints],
    }
    if with_id:
        rec["id"] = d.detection_id
    if d.embedding is not None:
        rec["embedding"] = list(d.embedding)
    return rec


def _detection_from_record(rec: dict, detection_id: int, line: Optional[int]) -> Detection:
    try:
        frame = rec["frame"]
        box = rec["box"]
        score = rec["score"]
        kps = rec["keypoints"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"missing field {exc}", line) from None
    if not isinstance(frame, int) or frame < 0:
        raise SchemaError("frame must be a non-negative integer", line)
    if not isinstance(box, list) or len(box) != 4:
        raise SchemaError("box must have 4 numbers", line)
    if not isinstance(kps, list) or len(kps) != NUM_KEYPOINTS:
        n = len(kps) if isinstance(kps, list) else "non-list"
        raise SchemaError(f"expected {NUM_KEYPOINTS} keypoints, got {n}", line)
    if any(not isinstance(k, list) or len(k) != 3 for k in kps):
        raise SchemaError("each keypoint must be [x, y, confidence]", line)
    try:
        return Detection.from_arrays(frame, box, np.array(kps, dtype=np.float64), score, detection_id, rec.get("embedding"))
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc), line) from None


def parse_detections(source: Source) -> List[List[Detection]]:
    """Per-frame detection groups in ascending frame order.

    Detection ids are the 0-based record index in file order.
    """
    by_frame: Dict[int, List[Detection]] = {}
    next_id = 0
    for lineno, raw in enumerate(_text(source).splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON ({exc.msg})", lineno) from None
        if not isinstance(rec, dict):
            raise ParseError("record is not a JSON object", lineno)
        det = _detection_from_record(rec, next_id, lineno)
        next_id += 1
        by_frame.setdefault(det.frame_index, []).append(det)
    return [by_frame[f] for f in sorted(by_frame)]


def write_detections(frames: Sequence[Sequence[Detection]]) -> str:
    """Inverse of parse_detections for detections whose ids follow file order."""
    dets = sorted((d for g in frames for d in g), key=lambda d: d.detection_id)
    return "".join(_dumps(_detection_record(d)) + "\n" for d in dets)


# -- embeddings --------------------------------------------------------------


def parse_embeddings(source: Source) -> Dict[int, Tuple[float, ...]]:
    """detection_id -> vector from records {"detection_id": int, "vector": [...]}."""
    out: Dict[int, Tuple[float, ...]] = {}
    dim = None
    for lineno, raw in enumerate(_text(source).splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
            did = rec["detection_id"]
            vec = rec["vector"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise ParseError("expected {\"detection_id\": int, \"vector\": [...]}", lineno) from None
        if did in out:
            raise SchemaError(f"duplicate embedding for detection {did}", lineno)
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise SchemaError(f"embedding dimension {len(vec)} differs from {dim}", lineno)
        out[int(did)] = tuple(float(v) for v in vec)
    return out


def write_embeddings(embeddings: Mapping[int, Sequence[float]]) -> str:
    return "".join(
        _dumps({"detection_id": did, "vector": [float(v) for v in embeddings[did]]}) + "\n" for did in sorted(embeddings)
    )


# -- annotations -------------------------------------------------------------

ANNOTATION_HEADER = ["start_frame", "end_frame", "label", "subject"]


def parse_annotations(source: Source) -> Tuple[List[AnnotationSpan], List[str]]:
    """Spans sorted by start frame, plus warnings (e.g. overlapping spans).

    The header row is optional.
    """
    spans = []
    rows = csv.reader(io.StringIO(_text(source)))
    for lineno, row in enumerate(rows, start=1):
        if not row or not "".join(row).strip():
            continue
        cells = [c.strip() for c in row]
        if lineno == 1 and cells == ANNOTATION_HEADER:
            continue
        if len(cells) != 4:
            raise ParseError(f"expected 4 columns, got {len(cells)}", lineno)
        try:
            start, end = int(cells[0]), int(cells[1])
        except ValueError:
            raise ParseError("frame bounds must be integers", lineno) from None
        try:
            label = ActionLabel.parse(cells[2])
        except ValueError as exc:
            raise SchemaError(str(exc), lineno) from None
        if start > end:
            raise SchemaError("start_frame > end_frame", lineno)
        spans.append(AnnotationSpan(start, end, label, cells[3]))
    spans.sort(key=lambda s: (s.start_frame, s.end_frame))
    warnings = []
    for a, b in zip(spans, spans[1:]):
        if b.start_frame <= a.end_frame and a.subject_id == b.subject_id:
            warnings.append(f"spans {a.start_frame}-{a.end_frame} and {b.start_frame}-{b.end_frame} overlap")
    return spans, warnings


def write_annotations(spans: Sequence[AnnotationSpan]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ANNOTATION_HEADER)
    for s in spans:
        w.writerow([s.start_frame, s.end_frame, s.label.display.lower(), s.subject_id])
    return buf.getvalue()


# -- manifest ----------------------------------------------------------------


def parse_manifest(source: Source) -> RunManifest:
    """Flat `key = value` manifest (TOML syntax)."""
    try:
        data = tomllib.loads(_text(source))
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"manifest: {exc}") from None
    known = set(RunManifest.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise SchemaError(f"unknown manifest keys: {sorted(unknown)}")
    if "subject_id" in data:
        data["subject_id"] = str(data["subject_id"])
    return RunManifest(**data)


def write_manifest(m: RunManifest) -> str:
    lines = [
        f"fps = {float(m.fps)!r}",
        f"frame_width = {m.frame_width}",
        f"frame_height = {m.frame_height}",
        f"subject_id = {json.dumps(m.subject_id)}",
    ]
    if m.reference_tracklet is not None:
        lines.append(f"reference_tracklet = {m.reference_tracklet}")
    if m.reference_detection is not None:
        lines.append(f"reference_detection = {m.reference_detection}")
    return "\n".join(lines) + "\n"


# -- tracklets and tracks ----------------------------------------------------


def _tracklet_record(t: Tracklet) -> dict:
    return {"tracklet_id": t.tracklet_id, "detections": [_detection_record(d, with_id=True) for d in t.detections]}


def _tracklet_from_record(rec: dict) -> Tracklet:
    dets = tuple(_detection_from_record(d, d["id"], None) for d in rec["detections"])
    return Tracklet(int(rec["tracklet_id"]), dets)


def write_tracklets(tracklets: Sequence[Tracklet]) -> str:
    return "".join(_dumps(_tracklet_record(t)) + "\n" for t in tracklets)


def parse_tracklets(source: Source) -> List[Tracklet]:
    out = []
    for lineno, raw in enumerate(_text(source).splitlines(), start=1):
        if raw.strip():
            try:
                out.append(_tracklet_from_record(json.loads(raw)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"bad tracklet record ({exc})", lineno) from None
    return out


def write_track(track: Track) -> str:
    return write_tracklets(track.tracklets)


def parse_track(source: Source) -> Track:
    return Track(tuple(parse_tracklets(source)))


# -- clips -------------------------------------------------------------------


def write_clips(clips: Sequence[ActionClip]) -> str:
    """Full clip records (JSON lines), including per-frame detections."""
    lines = []
    for c in clips:
        rec = {
            "clip_id": c.clip_id,
            "subject": c.subject_id,
            "label": c.label.display,
            "start_frame": c.start_frame,
            "end_frame": c.end_frame,
            "detections": [None if d is None else _detection_record(d, with_id=True) for d in c.detections],
        }
        lines.append(_dumps(rec) + "\n")
    return "".join(lines)


def parse_clips(source: Source) -> List[ActionClip]:
    out = []
    for lineno, raw in enumerate(_text(source).splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
            dets = tuple(None if d is None else _detection_from_record(d, d["id"], lineno) for d in rec["detections"])
            out.append(
                ActionClip(
                    int(rec["start_frame"]),
                    int(rec["end_frame"]),
                    ActionLabel.parse(rec["label"]),
                    dets,
                    rec["subject"],
                    rec["clip_id"],
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad clip record ({exc})", lineno) from None
    return out


CLIP_MANIFEST_HEADER = ["clip_id", "subject", "label", "start_frame", "end_frame", "split"]


@dataclass(frozen=True)
class ClipEntry:
    clip_id: str
    subject: str
    label: ActionLabel
    start_frame: int
    end_frame: int
    split: str


def write_clip_manifest(entries: Sequence[ClipEntry]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CLIP_MANIFEST_HEADER)
    for e in entries:
        w.writerow([e.clip_id, e.subject, e.label.display, e.start_frame, e.end_frame, e.split])
    return buf.getvalue()


def parse_clip_manifest(source: Source) -> List[ClipEntry]:
    reader = csv.DictReader(io.StringIO(_text(source)))
    if reader.fieldnames != CLIP_MANIFEST_HEADER:
        raise SchemaError(f"clip manifest header must be {','.join(CLIP_MANIFEST_HEADER)}", 1)
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            out.append(
                ClipEntry(
                    row["clip_id"],
                    row["subject"],
                    ActionLabel.parse(row["label"]),
                    int(row["start_frame"]),
                    int(row["end_frame"]),
                    row["split"],
                )
            )
        except (TypeError, ValueError) as exc:
            raise SchemaError(str(exc), lineno) from None
    return out


# -- verdicts and metrics ----------------------------------------------------

VERDICT_HEADER = ["tracklet_id", "predicted", "distance", "reason"]


def write_verdicts(verdicts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VERDICT_HEADER)
    for v in verdicts:
        w.writerow([v.tracklet_id, v.predicted, "" if v.distance is None else repr(float(v.distance)), v.reason])
    return buf.getvalue()


def parse_verdicts(source: Source) -> list:
    from .long_term_fusion import TrackletVerdict

    reader = csv.DictReader(io.StringIO(_text(source)))
    return [
        TrackletVerdict(
            int(r["tracklet_id"]), r["predicted"], None if r["distance"] == "" else float(r["distance"]), r["reason"]
        )
        for r in reader
    ]


def write_metrics(metrics) -> str:
    """Confusion matrix CSV: one header row, one data row per true class."""
    names = [label.display for label in ActionLabel]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["true\\pred"] + names)
    for name, row in zip(names, np.asarray(metrics.confusion)):
        w.writerow([name] + [int(v) for v in row])
    return buf.getvalue()


def parse_metrics(source: Source):
    from .classifier.metrics import Metrics

    rows = list(csv.reader(io.StringIO(_text(source))))
    if len(rows) != len(ActionLabel) + 1:
        raise SchemaError(f"expected {len(ActionLabel)} data rows, got {len(rows) - 1}")
    confusion = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
    return Metrics(confusion)


def write_summary_metrics(metrics) -> str:
    """Per-class and overall accuracy table."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "support", "accuracy"])
    for label, support, acc in zip(ActionLabel, metrics.support, metrics.per_class_accuracy):
        w.writerow([label.display, int(support), repr(float(acc))])
    w.writerow(["overall", int(metrics.support.sum()), repr(float(metrics.accuracy))])
    return buf.getvalue()


# -- binary containers -------------------------------------------------------

_VERSION = 1


def write_container(magic: bytes, header: dict, arrays: Mapping[str, np.ndarray]) -> bytes:
    """Versioned binary: magic, u16 version, u32 header length, JSON header, float32 LE blobs.

    The header lists each array's name and shape in storage order.
    """
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    names = list(arrays)
    meta = dict(header)
    meta["arrays"] = [{"name": n, "shape": list(np.shape(arrays[n]))} for n in names]
    meta["dtype"] = "<f4"
    head = _dumps(meta).encode("utf-8")
    parts = [magic, struct.pack("<HI", _VERSION, len(head)), head]
    for n in names:
        parts.append(np.ascontiguousarray(arrays[n], dtype="<f4").tobytes())
    return b"".join(parts)


def read_container(data: bytes, magic: bytes) -> Tuple[dict, Dict[str, np.ndarray]]:
    if data[:4] != magic:
        raise SchemaError(f"bad magic {data[:4]!r}, expected {magic!r}")
    version, hlen = struct.unpack("<HI", data[4:10])
    if version != _VERSION:
        raise SchemaError(f"unsupported container version {version}")
    meta = json.loads(data[10 : 10 + hlen].decode("utf-8"))
    offset = 10 + hlen
    arrays = {}
    for spec in meta.pop("arrays"):
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        arrays[spec["name"]] = arr.astype(np.float32)
        offset += 4 * count
    if offset != len(data):
        raise SchemaError("trailing bytes in container")
    meta.pop("dtype", None)
    return meta, arrays


TENSOR_MAGIC = b"PEVO"


def write_tensor(values: np.ndarray, channels: int, scale: float, **extra) -> bytes:
    header = {"shape": list(values.shape), "channels": channels, "scale": scale}
    header.update(extra)
    return write_container(TENSOR_MAGIC, header, {"values": values})


def read_tensor(data: bytes) -> Tuple[dict, np.ndarray]:
    meta, arrays = read_container(data, TENSOR_MAGIC)
    return meta, arrays["values"]
