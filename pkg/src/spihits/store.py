"""On-disk layout shared by the CLI, the service and the pipeline.

    <root>/dataset/manifest.json     dataset manifest (this module)
    <root>/dataset/frames/<id>.f32   raw little-endian float32 frames
    <root>/dataset/labels.jsonl      append-only label log
    <root>/models/<family>/<iter>.ckpt
    <root>/models/<family>/family.json, loss.csv, f1.csv
    <root>/selections/<name>.json

Writes go to a temp file in the destination directory and are renamed
into place, so readers never observe partial content.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .detector import BoxAnnotation
from .metrics import SelectionSet
from .patterns import DetectorGeometry, Pattern

MANIFEST_VERSION = 1

LABEL_SINGLE = "single"
LABEL_NON_SINGLE = "non_single"


class StoreError(Exception):
    pass


class StoreCorruptionError(StoreError):
    pass


class UnknownPatternError(StoreError):
    pass


def _atomic_write_bytes(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_json(path: Path, obj):
    _atomic_write_bytes(path, json.dumps(obj, indent=1, sort_keys=True).encode())


def _box_to_json(box: BoxAnnotation | None):
    if box is None:
        return None
    return {"cx": box.cx, "cy": box.cy, "w": box.w, "h": box.h}


def _box_from_json(obj):
    return None if obj is None else BoxAnnotation(**obj)


@dataclass
class ManifestEntry:
    id: str
    file: str
    n_bytes: int
    label: str | None = None            # ground truth if simulated
    kind: str | None = None             # single | multiple | droplet | blank
    box: BoxAnnotation | None = None    # ground-truth box for singles
    true_diameter_nm: float | None = None
    size_estimate_nm: float | None = None
    split: str | None = None            # train | validation | test

    def to_json(self):
        d = asdict(self)
        d["box"] = _box_to_json(self.box)
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        d["box"] = _box_from_json(d.get("box"))
        return cls(**d)


@dataclass
class LabelRecord:
    pattern_id: str
    label: str                          # single | non_single
    author: str                         # "human" or a model id
    box: BoxAnnotation | None = None
    timestamp: str = ""

    def __post_init__(self):
        if self.label not in (LABEL_SINGLE, LABEL_NON_SINGLE):
            raise ValueError(f"unknown label {self.label!r}")
        if self.box is not None and self.label != LABEL_SINGLE:
            raise ValueError("bounding box only allowed on single labels")
        if not self.timestamp:
            self.timestamp = datetime.now(timezone.utc).isoformat()

    def to_json(self):
        return {
            "pattern_id": self.pattern_id,
            "label": self.label,
            "author": self.author,
            "box": _box_to_json(self.box),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            pattern_id=d["pattern_id"],
            label=d["label"],
            author=d["author"],
            box=_box_from_json(d.get("box")),
            timestamp=d["timestamp"],
        )


class Store:
    """A store rooted at a directory; the single source of truth."""

    def __init__(self, root, geometry: DetectorGeometry | None = None):
        self.root = Path(root)
        self.geometry = geometry
        self.entries: dict[str, ManifestEntry] = {}
        manifest = self.root / "dataset" / "manifest.json"
        if manifest.exists():
            self._load_manifest(manifest)

    # -- manifest ---------------------------------------------------------

    def _load_manifest(self, path: Path):
        try:
            doc = json.loads(path.read_text())
            if doc["version"] != MANIFEST_VERSION:
                raise StoreCorruptionError(
                    f"manifest version {doc['version']} unsupported"
                )
            geo = dict(doc["geometry"])
            geo["panel_shape"] = tuple(geo["panel_shape"])
            geo["beam_center"] = tuple(geo["beam_center"])
            self.geometry = DetectorGeometry(**geo)
            entries = [ManifestEntry.from_json(e) for e in doc["entries"]]
        except (KeyError, ValueError, TypeError) as exc:
            raise StoreCorruptionError(f"malformed manifest: {exc}") from exc
        self.entries = {}
        for e in entries:
            if e.id in self.entries:
                raise StoreCorruptionError(f"duplicate pattern id {e.id!r}")
            self.entries[e.id] = e

    def write_manifest(self):
        if self.geometry is None:
            raise StoreError("store has no geometry; nothing to write")
        doc = {
            "version": MANIFEST_VERSION,
            "geometry": asdict(self.geometry),
            "entries": [e.to_json() for e in self.entries.values()],
        }
        _atomic_write_json(self.root / "dataset" / "manifest.json", doc)

    def verify(self):
        """Machine-check every manifest invariant; returns problem list."""
        problems = []
        for e in self.entries.values():
            path = self.root / "dataset" / e.file
            if not path.exists():
                problems.append(f"{e.id}: missing file {e.file}")
            elif path.stat().st_size != e.n_bytes:
                problems.append(
                    f"{e.id}: file is {path.stat().st_size} bytes, manifest "
                    f"declares {e.n_bytes}"
                )
            if e.box is not None and e.label != LABEL_SINGLE:
                problems.append(f"{e.id}: box on a {e.label!r} entry")
        return problems

    @property
    def ids(self) -> list[str]:
        return list(self.entries)

    # -- frames -----------------------------------------------------------

    def frame_path(self, pattern_id: str) -> Path:
        return self.root / "dataset" / "frames" / f"{pattern_id}.f32"

    def write_pattern(self, pattern: Pattern, **entry_fields) -> ManifestEntry:
        if self.geometry is None:
            self.geometry = pattern.geometry
        data = np.ascontiguousarray(pattern.counts, dtype="<f4").tobytes()
        _atomic_write_bytes(self.frame_path(pattern.id), data)
        entry = ManifestEntry(
            id=pattern.id,
            file=f"frames/{pattern.id}.f32",
            n_bytes=len(data),
            **entry_fields,
        )
        self.entries[pattern.id] = entry
        return entry

    def read_pattern(self, pattern_id: str) -> Pattern:
        if pattern_id not in self.entries:
            raise UnknownPatternError(f"unknown pattern id {pattern_id!r}")
        rows, cols = self.geometry.panel_shape
        expected = rows * cols * 4
        data = self.frame_path(pattern_id).read_bytes()
        if len(data) != expected:
            raise StoreCorruptionError(
                f"{pattern_id}: frame file is {len(data)} bytes, geometry "
                f"requires {expected}"
            )
        counts = np.frombuffer(data, dtype="<f4").reshape(rows, cols).copy()
        return Pattern(id=pattern_id, counts=counts, geometry=self.geometry)

    # -- labels -----------------------------------------------------------

    @property
    def labels_path(self) -> Path:
        return self.root / "dataset" / "labels.jsonl"

    def append_label(self, record: LabelRecord):
        if record.pattern_id not in self.entries:
            raise UnknownPatternError(f"unknown pattern id {record.pattern_id!r}")
        self.labels_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.labels_path, "a") as f:
            f.write(json.dumps(record.to_json(), sort_keys=True) + "\n")

    def load_label_log(self) -> list[LabelRecord]:
        if not self.labels_path.exists():
            return []
        records = []
        for line in self.labels_path.read_text().splitlines():
            if line.strip():
                records.append(LabelRecord.from_json(json.loads(line)))
        return records

    def load_labels(self) -> dict[tuple[str, str], LabelRecord]:
        """Effective view of the log: latest (id, author) record wins."""
        effective = {}
        for rec in self.load_label_log():  # file order breaks timestamp ties
            key = (rec.pattern_id, rec.author)
            prev = effective.get(key)
            if prev is None or rec.timestamp >= prev.timestamp:
                effective[key] = rec
        return effective

    def latest_label(self, pattern_id: str, author_filter=None) -> LabelRecord | None:
        best = None
        for (pid, author), rec in self.load_labels().items():
            if pid != pattern_id:
                continue
            if author_filter is not None and not author_filter(author):
                continue
            if best is None or rec.timestamp >= best.timestamp:
                best = rec
        return best

    # -- selections -------------------------------------------------------

    def selection_path(self, name: str) -> Path:
        if not re.fullmatch(r"[A-Za-z0-9._-]+", name):
            raise StoreError(f"bad selection name {name!r}")
        return self.root / "selections" / f"{name}.json"

    def write_selection(self, name: str, selection: SelectionSet):
        doc = {
            "method": selection.method,
            "threshold": selection.threshold,
            "ids": sorted(selection.ids),
        }
        _atomic_write_json(self.selection_path(name), doc)

    def read_selection(self, name: str) -> SelectionSet:
        path = self.selection_path(name)
        if not path.exists():
            raise StoreError(f"no selection named {name!r}")
        try:
            doc = json.loads(path.read_text())
            ids = doc["ids"]
            method = doc["method"]
            threshold = doc["threshold"]
        except (KeyError, ValueError, TypeError) as exc:
            raise StoreCorruptionError(f"malformed selection {name!r}: {exc}") from exc
        if len(ids) != len(set(ids)):
            raise StoreCorruptionError(f"selection {name!r} has duplicate ids")
        return SelectionSet(method=method, threshold=threshold, ids=set(ids))

    def list_selections(self) -> list[str]:
        d = self.root / "selections"
        if not d.is_dir():
            return []
        return sorted(p.stem for p in d.glob("*.json"))

    # -- model checkpoints --------------------------------------------------

    def family_dir(self, family: str) -> Path:
        return self.root / "models" / family

    def checkpoint_path(self, family: str, iteration: int) -> Path:
        return self.family_dir(family) / f"{iteration:06d}.ckpt"

    def list_checkpoints(self, family: str) -> list[int]:
        d = self.family_dir(family)
        if not d.is_dir():
            return []
        return sorted(
            int(p.stem) for p in d.glob("*.ckpt") if p.stem.isdigit()
        )

    def list_families(self) -> list[str]:
        d = self.root / "models"
        if not d.is_dir():
            return []
        return sorted(p.name for p in d.iterdir() if p.is_dir())

    def write_family_manifest(self, family: str, doc: dict):
        _atomic_write_json(self.family_dir(family) / "family.json", doc)

    def read_family_manifest(self, family: str) -> dict:
        path = self.family_dir(family) / "family.json"
        if not path.exists():
            raise StoreError(f"no family manifest for {family!r}")
        return json.loads(path.read_text())

    def write_curve_csv(self, family: str, name: str, rows, header):
        lines = [",".join(header)]
        lines += [",".join(str(v) for v in row) for row in rows]
        _atomic_write_bytes(
            self.family_dir(family) / f"{name}.csv", ("\n".join(lines) + "\n").encode()
        )

    def read_curve_csv(self, family: str, name: str) -> str:
        path = self.family_dir(family) / f"{name}.csv"
        if not path.exists():
            raise StoreError(f"no {name} curve for family {family!r}")
        return path.read_text()
