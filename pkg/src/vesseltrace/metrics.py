"""Sparse-landmark evaluation of extracted paths.

Ground truth is a handful of annotated centerline points; the extracted path
is a dense polyline.  Both metrics are directed, landmark -> path: the mean
of the per-landmark distances and their maximum (directed Hausdorff).
Distances are exact point-to-segment, not point-to-vertex, so ~1 mm vertex
spacing does not bias the scores upward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .tracker import Centerline

SUBCUTANEOUS = "subcutaneous"
INTRAMUSCULAR = "intramuscular"


@dataclass
class LandmarkSet:
    """Named ground-truth points in mm space."""

    name: str
    points: np.ndarray
    kind: str = SUBCUTANEOUS

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.points.shape[0] < 1 or self.points.shape[1] != 3:
            raise DataError("a landmark set needs at least one 3-D point")
        if self.kind not in (SUBCUTANEOUS, INTRAMUSCULAR):
            raise DataError(f"unknown landmark kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "points_mm": [[float(c) for c in p] for p in self.points],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LandmarkSet":
        try:
            return cls(doc["name"], np.asarray(doc["points_mm"], float),
                       doc.get("kind", SUBCUTANEOUS))
        except KeyError as e:
            raise DataError(f"landmark JSON missing field {e}") from e


def load_landmarks(path) -> LandmarkSet:
    p = Path(path)
    if not p.exists():
        raise DataError(f"landmark file not found: {p}")
    return LandmarkSet.from_dict(json.loads(p.read_text(encoding="utf-8")))


def save_landmarks(lm: LandmarkSet, path) -> None:
    Path(path).write_text(json.dumps(lm.to_dict(), indent=2) + "\n",
                          encoding="utf-8")


@dataclass
class PathMetrics:
    mean_distance_mm: float
    hausdorff_mm: float


def _segment_distances(p: np.ndarray, starts: np.ndarray, ends: np.ndarray):
    d = ends - starts
    l2 = np.einsum("ij,ij->i", d, d)
    t = np.einsum("ij,ij->i", p - starts, d) / np.where(l2 > 0, l2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    closest = starts + d * t[:, None]
    return np.linalg.norm(p - closest, axis=1)


def point_to_polyline(p, line: Centerline | np.ndarray) -> float:
    """Exact minimum distance from a point to a polyline (mm)."""
    pts = line.points if isinstance(line, Centerline) else np.atleast_2d(line)
    p = np.asarray(p, dtype=np.float64)
    if pts.shape[0] == 1:
        return float(np.linalg.norm(p - pts[0]))
    return float(_segment_distances(p[None, :], pts[:-1], pts[1:]).min())


def evaluate(gt: LandmarkSet, line: Centerline | np.ndarray) -> PathMetrics:
    """Directed mean and Hausdorff distance, ground truth -> path."""
    dists = [point_to_polyline(p, line) for p in gt.points]
    return PathMetrics(float(np.mean(dists)), float(np.max(dists)))
