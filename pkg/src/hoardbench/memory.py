"""Episodic memory: one-shot cache writes, cue encoding, and retrieval.

Two interchangeable store variants hold identical episode records and differ
only in access structure:

* ``flat``      - an archive scanned in insertion order.
* ``clustered`` - a two-level index, item type then 16x16 spatial grid cell,
                  probed outward from the cue-predicted location.

Retrieval latency is structural: the probe count is the number of episodes
examined while answering a query, tracked on the store's monotone counter.

A cue is the write-time encoding of a location against the three nearest
landmarks: their ids, distances, and bearings. Matching scores cue geometry
(sorted distances plus sorted circular bearing gaps); landmark ids are used
only when re-decoding a stored cue against the current, possibly drifted,
landmark positions via least-squares trilateration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .core.state import Action, InputError, Observation
from .rng import Substream

CUE_LANDMARKS = 3
GRID_DIV = 16
# Scales for cue matching: distances in arena units, bearings in radians.
# Chosen so landmark drift of a few percent degrades match scores smoothly
# instead of cliff-edging.
DIST_SCALE = 0.05
BEARING_SCALE = 0.5
COLLINEAR_TOL = 1e-6
DEGENERATE_CONFIDENCE = 0.5
# Clustered retrieval stops expanding its cell search once a candidate this
# strong has been seen; an uncorrupted cue scores 1.0.
EARLY_STOP_SCORE = 0.5


class VerifyStatus(str, Enum):
    UNVERIFIED = "unverified"
    PASSED = "passed"
    FAILED = "failed"


class StoreVariant(str, Enum):
    FLAT = "flat"
    CLUSTERED = "clustered"


# ---------------------------------------------------------------------------
# Landmarks and cues
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LandmarkSet:
    """Named anchor points in the unit square."""

    ids: tuple[int, ...]
    positions: np.ndarray  # shape (L, 2)

    def __post_init__(self):
        if self.positions.shape != (len(self.ids), 2):
            raise InputError("landmark positions must be (L, 2)")

    @classmethod
    def sample(cls, count: int, stream: Substream) -> "LandmarkSet":
        pos = stream.uniform(0.0, 1.0, size=(count, 2))
        return cls(tuple(range(count)), np.asarray(pos, dtype=float))

    def drifted(self, sigma: float, stream: Substream) -> "LandmarkSet":
        """Independent Gaussian displacement of every landmark."""
        if sigma == 0.0:
            return self
        noise = stream.normal(0.0, sigma, size=self.positions.shape)
        return replace(self, positions=self.positions + noise)

    def position_of(self, landmark_id: int) -> tuple[float, float]:
        idx = self.ids.index(landmark_id)
        return float(self.positions[idx, 0]), float(self.positions[idx, 1])

    def as_obs_tuples(self) -> tuple[tuple[int, float, float], ...]:
        return tuple(
            (i, float(x), float(y)) for i, (x, y) in zip(self.ids, self.positions)
        )

    @classmethod
    def from_obs_tuples(cls, tuples) -> "LandmarkSet":
        ids = tuple(int(t[0]) for t in tuples)
        pos = np.asarray([[t[1], t[2]] for t in tuples], dtype=float)
        return cls(ids, pos)


@dataclass(frozen=True)
class CueVector:
    """Write-time encoding of a location: three nearest landmarks, each with
    distance and bearing from the encoded point."""

    landmark_ids: tuple[int, int, int]
    distances: tuple[float, float, float]
    bearings: tuple[float, float, float]

    def __post_init__(self):
        if len(set(self.landmark_ids)) != CUE_LANDMARKS:
            raise InputError("cue must reference three distinct landmarks")

    def features(self) -> np.ndarray:
        """Flat (ids, distances, bearings) layout used for batch scoring."""
        return np.array(
            [*self.landmark_ids, *self.distances, *self.bearings], dtype=float
        )

    def to_json_obj(self) -> dict:
        return {
            "landmark_ids": list(self.landmark_ids),
            "distances": list(self.distances),
            "bearings": list(self.bearings),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "CueVector":
        return cls(
            tuple(obj["landmark_ids"]),
            tuple(obj["distances"]),
            tuple(obj["bearings"]),
        )


def encode_cue(location: tuple[float, float], landmarks: LandmarkSet) -> CueVector:
    """Encode a point against its three nearest landmarks (ties by id)."""
    if len(landmarks.ids) < CUE_LANDMARKS:
        raise InputError("need at least three landmarks to encode a cue")
    p = np.asarray(location, dtype=float)
    deltas = landmarks.positions - p
    dist = np.hypot(deltas[:, 0], deltas[:, 1])
    order = np.lexsort((np.asarray(landmarks.ids), dist))[:CUE_LANDMARKS]
    ids = tuple(int(landmarks.ids[i]) for i in order)
    ds = tuple(float(dist[i]) for i in order)
    bearings = tuple(float(math.atan2(deltas[i, 1], deltas[i, 0])) for i in order)
    return CueVector(ids, ds, bearings)


def _bearing_chord(eb_cos: float, eb_sin: float, qb_cos: float, qb_sin: float) -> float:
    dx = eb_cos - qb_cos
    dy = eb_sin - qb_sin
    return dx * dx + dy * dy


def cue_similarity(a: CueVector, b: CueVector) -> float:
    """Similarity in [0, 1]: landmark ids align the comparison, mismatched
    distance and bearing accumulate as Gaussian penalties, and a landmark the
    other cue never saw contributes nothing. The bearing mismatch uses the
    chord 2*sin(db/2), which is wrap-free and matches db for small angles."""
    total = 0.0
    for j, qid in enumerate(a.landmark_ids):
        qc, qs = math.cos(a.bearings[j]), math.sin(a.bearings[j])
        for k, eid in enumerate(b.landmark_ids):
            if qid != eid:
                continue
            dd = (b.distances[k] - a.distances[j]) / DIST_SCALE
            chord2 = _bearing_chord(
                math.cos(b.bearings[k]), math.sin(b.bearings[k]), qc, qs
            )
            total += math.exp(-0.5 * (dd * dd + chord2 / (BEARING_SCALE * BEARING_SCALE)))
            break
    return total / CUE_LANDMARKS


def _batch_scores(feats: np.ndarray, query: CueVector) -> np.ndarray:
    """Vectorized `cue_similarity` of one query against a feature matrix."""
    if not len(feats):
        return np.zeros(0)
    e_ids = feats[:, 0:3]
    e_d = feats[:, 3:6]
    e_b = feats[:, 6:9]
    total = np.zeros(len(feats))
    bscale2 = BEARING_SCALE * BEARING_SCALE
    for j in range(CUE_LANDMARKS):
        match = e_ids == float(query.landmark_ids[j])
        if not match.any():
            continue
        qc, qs = math.cos(query.bearings[j]), math.sin(query.bearings[j])
        dd = (e_d - query.distances[j]) / DIST_SCALE
        dc = np.cos(e_b) - qc
        ds = np.sin(e_b) - qs
        contrib = np.exp(-0.5 * (dd * dd + (dc * dc + ds * ds) / bscale2))
        total += np.where(match, contrib, 0.0).sum(axis=1)
    return total / CUE_LANDMARKS


def _slot_scores(store: "MemoryStore", item_type: int, query: CueVector) -> np.ndarray:
    """Scores of one query against every same-type episode, through the
    inverted landmark index (identical values to `_batch_scores`)."""
    idx, _, _ = store._features_for_type(item_type)
    slots = store._slots_for_type(item_type)
    total = np.zeros(len(idx))
    bscale2 = BEARING_SCALE * BEARING_SCALE
    for j in range(CUE_LANDMARKS):
        hit = slots.get(query.landmark_ids[j])
        if hit is None:
            continue
        rows, dist, bcos, bsin = hit
        qc, qs = math.cos(query.bearings[j]), math.sin(query.bearings[j])
        dd = (dist - query.distances[j]) / DIST_SCALE
        dc = bcos - qc
        ds = bsin - qs
        total[rows] += np.exp(-0.5 * (dd * dd + (dc * dc + ds * ds) / bscale2))
    return total / CUE_LANDMARKS


# ---------------------------------------------------------------------------
# Trilateration
# ---------------------------------------------------------------------------


def trilaterate(
    anchors: np.ndarray, distances: np.ndarray
) -> tuple[tuple[float, float] | None, bool]:
    """Least-squares intersection of three distance constraints.

    Linearizes by subtracting the first circle equation from the others,
    which is exact when the constraints are consistent. Returns
    (point, degenerate); degenerate means the anchors are collinear within
    tolerance and no reliable solution exists.
    """
    a = np.asarray(anchors, dtype=float)
    d = np.asarray(distances, dtype=float)
    cross = (a[1, 0] - a[0, 0]) * (a[2, 1] - a[0, 1]) - (a[1, 1] - a[0, 1]) * (
        a[2, 0] - a[0, 0]
    )
    if abs(cross) < COLLINEAR_TOL:
        return None, True
    rows = []
    rhs = []
    for j in (1, 2):
        rows.append([2.0 * (a[j, 0] - a[0, 0]), 2.0 * (a[j, 1] - a[0, 1])])
        rhs.append(
            (a[j, 0] ** 2 - a[0, 0] ** 2)
            + (a[j, 1] ** 2 - a[0, 1] ** 2)
            - (d[j] ** 2 - d[0] ** 2)
        )
    m = np.asarray(rows)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    x = (rhs[0] * m[1, 1] - rhs[1] * m[0, 1]) / det
    y = (m[0, 0] * rhs[1] - m[1, 0] * rhs[0]) / det
    return (float(x), float(y)), False


# ---------------------------------------------------------------------------
# Episodes and queries
# ---------------------------------------------------------------------------


@dataclass
class EpisodeRecord:
    """One cached item: what, how valuable, where, and how the where was
    encoded at write time."""

    id: int
    written_at: int
    item_type: int
    item_value: float
    location: tuple[float, float]
    cue: CueVector
    provenance: tuple[int, ...] = ()
    verify_status: VerifyStatus = VerifyStatus.UNVERIFIED

    def __post_init__(self):
        if self.item_type < 1:
            raise InputError("item_type must be >= 1")
        if self.item_value < 0:
            raise InputError("item_value must be non-negative")

    def to_json_obj(self) -> dict:
        return {
            "id": self.id,
            "written_at": self.written_at,
            "item_type": self.item_type,
            "item_value": self.item_value,
            "location": list(self.location),
            "cue": self.cue.to_json_obj(),
            "provenance": list(self.provenance),
            "verify_status": self.verify_status.value,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "EpisodeRecord":
        return cls(
            id=int(obj["id"]),
            written_at=int(obj["written_at"]),
            item_type=int(obj["item_type"]),
            item_value=float(obj["item_value"]),
            location=tuple(obj["location"]),
            cue=CueVector.from_json_obj(obj["cue"]),
            provenance=tuple(obj["provenance"]),
            verify_status=VerifyStatus(obj["verify_status"]),
        )


@dataclass(frozen=True)
class Query:
    """Retrieval probe: item type, optional value band, and a cue."""

    item_type: int | None = None
    value_band: tuple[float, float] | None = None
    cue: CueVector | None = None

    @property
    def empty(self) -> bool:
        return self.item_type is None and self.cue is None


EMPTY_QUERY = Query()


@dataclass(frozen=True)
class Retrieval:
    """Result of a memory probe, with structural latency accounting."""

    episode: EpisodeRecord | None
    decoded_location: tuple[float, float] | None
    probes_used: int
    confidence: float


def grid_cell(location: tuple[float, float]) -> tuple[int, int]:
    gx = min(GRID_DIV - 1, max(0, int(location[0] * GRID_DIV)))
    gy = min(GRID_DIV - 1, max(0, int(location[1] * GRID_DIV)))
    return gx, gy


class MemoryStore:
    """Append-only episode store with a flat or clustered access path."""

    def __init__(self, variant: StoreVariant | str = StoreVariant.CLUSTERED):
        self.variant = StoreVariant(variant)
        self.episodes: list[EpisodeRecord] = []
        self.index: dict[int, dict[tuple[int, int], list[int]]] = {}
        self.probe_counter = 0
        self._id_to_index: dict[int, int] = {}
        self._feature_cache: dict[int, tuple] | None = None
        self._slot_cache: dict[int, dict] | None = None

    def __len__(self) -> int:
        return len(self.episodes)

    def _invalidate(self) -> None:
        self._feature_cache = None
        self._slot_cache = None

    def _features_for_type(
        self, item_type: int
    ) -> tuple[np.ndarray, np.ndarray, dict[int, int]]:
        """(episode indices, feature matrix, index->row map) for one item type."""
        if self._feature_cache is None:
            self._feature_cache = {}
        hit = self._feature_cache.get(item_type)
        if hit is not None:
            return hit
        idx = np.array(
            [i for i, e in enumerate(self.episodes) if e.item_type == item_type],
            dtype=int,
        )
        if len(idx):
            feats = np.stack([self.episodes[i].cue.features() for i in idx])
        else:
            feats = np.zeros((0, 9))
        lookup = {int(e): k for k, e in enumerate(idx)}
        self._feature_cache[item_type] = (idx, feats, lookup)
        return idx, feats, lookup

    def _slots_for_type(self, item_type: int):
        """Inverted landmark index: id -> (rows, distances, cos b, sin b)."""
        if self._slot_cache is None:
            self._slot_cache = {}
        hit = self._slot_cache.get(item_type)
        if hit is not None:
            return hit
        idx, _, _ = self._features_for_type(item_type)
        grouped: dict[int, list[tuple[int, float, float]]] = {}
        for row, i in enumerate(idx):
            cue = self.episodes[int(i)].cue
            for k, lid in enumerate(cue.landmark_ids):
                grouped.setdefault(lid, []).append((row, cue.distances[k], cue.bearings[k]))
        slots = {}
        for lid, entries in grouped.items():
            rows = np.array([e[0] for e in entries], dtype=int)
            dist = np.array([e[1] for e in entries])
            bear = np.array([e[2] for e in entries])
            slots[lid] = (rows, dist, np.cos(bear), np.sin(bear))
        self._slot_cache[item_type] = slots
        return slots

    def append(self, record: EpisodeRecord) -> None:
        if record.id in self._id_to_index:
            raise RuntimeError(f"duplicate episode id {record.id}")
        self._id_to_index[record.id] = len(self.episodes)
        self.episodes.append(record)
        if self.variant is StoreVariant.CLUSTERED:
            cell = grid_cell(record.location)
            self.index.setdefault(record.item_type, {}).setdefault(cell, []).append(
                record.id
            )
        self._invalidate()

    def episode_by_id(self, episode_id: int) -> EpisodeRecord | None:
        idx = self._id_to_index.get(episode_id)
        return None if idx is None else self.episodes[idx]

    def next_id(self) -> int:
        return len(self.episodes)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def write(
    store: MemoryStore,
    observation: Observation,
    action: Action,
    verifier_feedback=None,
) -> MemoryStore:
    """Record a completed cache action, or apply delayed verifier feedback.

    When `verifier_feedback` targets an existing episode id, only that
    record's verify status changes; nothing is appended. Otherwise the action
    must be a dig with a concrete location and item payload, and the cue is
    encoded from the observation's landmark snapshot.
    """
    if verifier_feedback is not None and verifier_feedback.target is not None:
        episode = store.episode_by_id(verifier_feedback.target)
        if episode is None:
            raise InputError(f"feedback targets unknown episode {verifier_feedback.target}")
        if episode.verify_status is not VerifyStatus.UNVERIFIED:
            raise InputError("verify status may only move out of unverified once")
        episode.verify_status = (
            VerifyStatus.PASSED if verifier_feedback.verdict else VerifyStatus.FAILED
        )
        return store

    if action.kind != "dig":
        raise InputError("memory writes require a completed dig action")
    if not observation.landmarks:
        raise InputError("cache write requires a landmark snapshot")
    location = (action.params["x"], action.params["y"])
    landmarks = LandmarkSet.from_obs_tuples(observation.landmarks)
    record = EpisodeRecord(
        id=store.next_id(),
        written_at=int(action.params.get("step", 0)),
        item_type=int(action.params["item_type"]),
        item_value=float(action.params["item_value"]),
        location=location,
        cue=encode_cue(location, landmarks),
        provenance=(int(action.params.get("step", 0)),),
    )
    store.append(record)
    return store


def _score_and_pick(
    store: MemoryStore,
    query: Query,
    candidates: np.ndarray,
) -> tuple[int | None, float, float]:
    """Best episode index among candidates plus the top-two score margin.

    Tie-break: the candidate appearing first in `candidates` wins, so the
    caller controls tie semantics (insertion order for the flat archive,
    probe order for the clustered index).
    """
    if len(candidates) == 0:
        return None, 0.0, 0.0
    idx, feats, lookup = store._features_for_type(query.item_type)
    if candidates is idx:
        scores = _batch_scores(feats, query.cue)
    else:
        rows = np.array([lookup[int(c)] for c in candidates], dtype=int)
        scores = _batch_scores(feats[rows], query.cue)
    best_pos = int(np.argmax(scores))
    best_score = float(scores[best_pos])
    if len(scores) > 1:
        second = float(np.partition(scores, -2)[-2])
    else:
        second = 0.0
    return int(candidates[best_pos]), best_score, second


def _finish(
    store: MemoryStore,
    query: Query,
    best_idx: int | None,
    best: float,
    second: float,
    probes: int,
    current_landmarks: LandmarkSet,
) -> Retrieval:
    store.probe_counter += probes
    if best_idx is None:
        return Retrieval(None, None, probes, 0.0)
    episode = store.episodes[best_idx]
    confidence = 1.0 if best <= 0.0 else max(0.0, min(1.0, (best - second) / best))
    decoded, degenerate = _decode(episode, current_landmarks)
    if degenerate:
        confidence = min(confidence, DEGENERATE_CONFIDENCE)
    return Retrieval(episode, decoded, probes, confidence)


def retrieve(
    store: MemoryStore, query: Query, current_landmarks: LandmarkSet
) -> Retrieval:
    """Answer a non-empty query against the store's access structure."""
    if query.empty:
        raise InputError("retrieve requires a non-empty query")
    if query.cue is None or query.item_type is None:
        raise InputError("query must carry an item type and a cue")

    if store.variant is StoreVariant.FLAT:
        idx, _, _ = store._features_for_type(query.item_type)
        if len(idx) == 0:
            return _finish(store, query, None, 0.0, 0.0, 0, current_landmarks)
        scores = _slot_scores(store, query.item_type, query.cue)
        best_pos = int(np.argmax(scores))
        best = float(scores[best_pos])
        second = float(np.partition(scores, -2)[-2]) if len(scores) > 1 else 0.0
        return _finish(
            store, query, int(idx[best_pos]), best, second, len(idx), current_landmarks
        )

    # Clustered: predict the target location from the query cue, then probe
    # grid cells outward by Chebyshev ring until candidates appear.
    bucket = store.index.get(query.item_type, {})
    if not bucket:
        return _finish(store, query, None, 0.0, 0.0, 0, current_landmarks)
    anchors, ok = _cue_anchor_positions(query.cue, current_landmarks)
    predicted = None
    if ok:
        predicted, degenerate = trilaterate(anchors, np.asarray(query.cue.distances))
        if degenerate:
            predicted = None
    if predicted is None:
        # No usable geometry: fall back to scanning the type bucket in
        # deterministic row-major cell order.
        candidates: list[int] = []
        for cell in sorted(bucket):
            candidates.extend(store._id_to_index[i] for i in bucket[cell])
        order = np.array(candidates, dtype=int)
        best_idx, best, second = _score_and_pick(store, query, order)
        ret = _finish(store, query, best_idx, best, second, len(order), current_landmarks)
        return replace(ret, confidence=min(ret.confidence, DEGENERATE_CONFIDENCE))

    # Probe cells outward from the predicted location, nearest ring first.
    # Stop as soon as a strong match appears (the predicted cell almost
    # always holds the right episode), or, failing that, at the first
    # non-empty ring beyond the immediate neighbourhood.
    center = grid_cell(predicted)
    _, feats, lookup = store._features_for_type(query.item_type)
    best_idx: int | None = None
    best, second = -1.0, 0.0
    probes = 0
    for ring in range(GRID_DIV + 1):
        ring_rows: list[int] = []
        for cell in _ring_cells(center, ring):
            for eid in bucket.get(cell, ()):  # noqa: B020 - bucket holds ids
                ring_rows.append(store._id_to_index[eid])
        if ring_rows:
            rows = np.array([lookup[r] for r in ring_rows], dtype=int)
            scores = _batch_scores(feats[rows], query.cue)
            probes += len(ring_rows)
            for pos in range(len(ring_rows)):
                s = float(scores[pos])
                if s > best:
                    best_idx, second, best = ring_rows[pos], best, s
                elif s > second:
                    second = s
        if best >= EARLY_STOP_SCORE:
            break
        if ring >= 1 and probes > 0:
            break
    return _finish(
        store, query, best_idx, best, max(second, 0.0), probes, current_landmarks
    )


def _ring_cells(center: tuple[int, int], ring: int) -> list[tuple[int, int]]:
    """Cells at exact Chebyshev distance `ring`, row-major, clipped to grid."""
    cx, cy = center
    cells = []
    for gx in range(cx - ring, cx + ring + 1):
        for gy in range(cy - ring, cy + ring + 1):
            if max(abs(gx - cx), abs(gy - cy)) != ring:
                continue
            if 0 <= gx < GRID_DIV and 0 <= gy < GRID_DIV:
                cells.append((gx, gy))
    return cells


def _cue_anchor_positions(
    cue: CueVector, landmarks: LandmarkSet
) -> tuple[np.ndarray, bool]:
    try:
        pts = np.asarray([landmarks.position_of(i) for i in cue.landmark_ids])
    except ValueError:
        return np.zeros((0, 2)), False
    return pts, True


def _bearing_fix(cue: CueVector, anchors: np.ndarray) -> tuple[float, float]:
    """Average of the three single-landmark position fixes (anchor minus the
    stored range along the stored bearing)."""
    x = y = 0.0
    for k in range(CUE_LANDMARKS):
        x += anchors[k, 0] - cue.distances[k] * math.cos(cue.bearings[k])
        y += anchors[k, 1] - cue.distances[k] * math.sin(cue.bearings[k])
    return x / CUE_LANDMARKS, y / CUE_LANDMARKS


def _range_least_squares(
    cue: CueVector, anchors: np.ndarray, init: tuple[float, float]
) -> tuple[float, float]:
    """Damped Gauss-Newton on the three range residuals |x - a_k| - d_k.

    The bearing-fix initialization keeps the poorly determined direction of
    near-collinear anchor triples anchored to a sane estimate; along
    well-determined directions the iteration converges to the least-squares
    intersection of the stored distance constraints.
    """
    x, y = init

    def cost_at(px: float, py: float) -> tuple[float, list[float]]:
        res = []
        total = 0.0
        for k in range(CUE_LANDMARKS):
            r = math.hypot(px - anchors[k, 0], py - anchors[k, 1])
            f = r - cue.distances[k]
            res.append(f)
            total += f * f
        return total, res

    cost, res = cost_at(x, y)
    for _ in range(30):
        gx = gy = hxx = hxy = hyy = 0.0
        for k in range(CUE_LANDMARKS):
            dx = x - anchors[k, 0]
            dy = y - anchors[k, 1]
            r = math.hypot(dx, dy)
            if r < 1e-12:
                continue
            jx, jy = dx / r, dy / r
            gx += jx * res[k]
            gy += jy * res[k]
            hxx += jx * jx
            hxy += jx * jy
            hyy += jy * jy
        hxx += 1e-8
        hyy += 1e-8
        det = hxx * hyy - hxy * hxy
        if det <= 0.0:
            break
        sx = (gx * hyy - gy * hxy) / det
        sy = (hxx * gy - hxy * gx) / det
        t = 1.0
        new_cost, new_res, nx, ny = cost, res, x, y
        for _ in range(20):
            cx, cy = x - t * sx, y - t * sy
            c, rr = cost_at(cx, cy)
            if c <= cost:
                new_cost, new_res, nx, ny = c, rr, cx, cy
                break
            t *= 0.5
        if new_cost > cost or (nx == x and ny == y):
            break
        moved = math.hypot(nx - x, ny - y)
        x, y, cost, res = nx, ny, new_cost, new_res
        if moved < 1e-12:
            break
    return x, y


def _decode(
    record: EpisodeRecord, current_landmarks: LandmarkSet
) -> tuple[tuple[float, float], bool]:
    anchors, ok = _cue_anchor_positions(record.cue, current_landmarks)
    if not ok:
        return record.location, True
    cross = (anchors[1, 0] - anchors[0, 0]) * (anchors[2, 1] - anchors[0, 1]) - (
        anchors[1, 1] - anchors[0, 1]
    ) * (anchors[2, 0] - anchors[0, 0])
    if abs(cross) < COLLINEAR_TOL:
        # Collinear anchors: fall back to the stored absolute location.
        return record.location, True
    init = _bearing_fix(record.cue, anchors)
    return _range_least_squares(record.cue, anchors, init), False


def decode_location(
    record: EpisodeRecord, current_landmarks: LandmarkSet
) -> tuple[float, float]:
    """Re-derive a stored location from its cue under current landmarks."""
    point, _ = _decode(record, current_landmarks)
    return point


def brute_force_retrieve(
    store: MemoryStore, query: Query, current_landmarks: LandmarkSet
) -> Retrieval:
    """Reference retrieval: scan every episode, no index, no early stop.

    Shares only the scoring rule with the production paths; used as the
    oracle for equivalence checks. Does not touch the probe counter.
    """
    if query.empty or query.cue is None:
        raise InputError("retrieve requires a non-empty query")
    best_idx, best, second = None, -1.0, 0.0
    for i, e in enumerate(store.episodes):
        if e.item_type != query.item_type:
            continue
        s = cue_similarity(query.cue, e.cue)
        if s > best:
            best_idx, second, best = i, best, s
        elif s > second:
            second = s
    if best_idx is None:
        return Retrieval(None, None, 0, 0.0)
    episode = store.episodes[best_idx]
    confidence = max(0.0, min(1.0, (best - max(second, 0.0)) / best)) if best > 0 else 1.0
    decoded, degenerate = _decode(episode, current_landmarks)
    if degenerate:
        confidence = min(confidence, DEGENERATE_CONFIDENCE)
    return Retrieval(episode, decoded, 0, confidence)


# ---------------------------------------------------------------------------
# Fixture serialization
# ---------------------------------------------------------------------------


def dump_store(store: MemoryStore) -> str:
    return json.dumps([e.to_json_obj() for e in store.episodes], separators=(",", ":"))


def load_store(text: str, variant: StoreVariant | str = StoreVariant.CLUSTERED) -> MemoryStore:
    store = MemoryStore(variant)
    for obj in json.loads(text):
        store.append(EpisodeRecord.from_json_obj(obj))
    return store


def index_partition(store: MemoryStore) -> dict[tuple[int, tuple[int, int]], tuple[int, ...]]:
    """Flatten the clustered index for comparison against a reference partition."""
    out: dict[tuple[int, tuple[int, int]], tuple[int, ...]] = {}
    for item_type, cells in store.index.items():
        for cell, ids in cells.items():
            out[(item_type, cell)] = tuple(ids)
    return out


def reference_partition(
    episodes: list[EpisodeRecord],
) -> dict[tuple[int, tuple[int, int]], tuple[int, ...]]:
    """Brute-force (type, grid cell) partition of an episode list."""
    out: dict[tuple[int, tuple[int, int]], list[int]] = {}
    for e in episodes:
        out.setdefault((e.item_type, grid_cell(e.location)), []).append(e.id)
    return {k: tuple(v) for k, v in out.items()}
