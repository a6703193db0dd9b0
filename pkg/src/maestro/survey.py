"""Listener ratings: CSV ingestion and per-segment aggregation."""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import canonical
from .canonical import check_keys, get_int, get_list, get_str
from .errors import (
    CsvSyntaxError,
    DuplicateRating,
    EmptySegment,
    RangeError,
    SchemaError,
    UnknownEmotion,
)

CSV_HEADER = "participant_id,segment_id,emotion,rating"
RATINGS_VERSION = "maestro-ratings/1"
MIN_RATING = 1
MAX_RATING = 10


class Emotion(enum.IntEnum):
    JOY = 0
    SADNESS = 1
    ANTICIPATION = 2
    SURPRISE = 3
    ANGER = 4
    CALMNESS = 5
    FEAR = 6
    CONFIDENCE = 7

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, name: str) -> "Emotion":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown emotion {name!r}") from None


EMOTIONS = tuple(Emotion)


@dataclass(frozen=True)
class RatingRow:
    participant_id: str
    segment_id: int
    emotion: Emotion
    rating: int


@dataclass(frozen=True)
class SegmentAggregate:
    segment_id: int
    mean: tuple      # 8 floats, Emotion order
    stddev: tuple    # population standard deviation per emotion
    n_raters: int
    majority: Emotion


def parse_ratings_csv(data) -> list:
    """Parse and validate a ratings CSV. Errors carry the 1-based line number."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise CsvSyntaxError(1, f"invalid UTF-8 at byte {exc.start}") from None
    else:
        text = data
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise CsvSyntaxError(1, "empty file; expected header " + CSV_HEADER) from None
    except csv.Error as exc:
        raise CsvSyntaxError(1, str(exc)) from None
    if ",".join(header) != CSV_HEADER:
        raise CsvSyntaxError(1, f"header must be exactly {CSV_HEADER!r}")

    rows = []
    seen = set()
    while True:
        try:
            fields = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            raise CsvSyntaxError(reader.line_num, str(exc)) from None
        line = reader.line_num
        if not fields:
            continue
        if len(fields) != 4:
            raise CsvSyntaxError(line, f"expected 4 fields, got {len(fields)}")
        participant, segment, emotion_name, rating_text = (f.strip() for f in fields)
        if not participant:
            raise CsvSyntaxError(line, "empty participant_id")
        try:
            segment_id = int(segment)
        except ValueError:
            raise CsvSyntaxError(line, f"segment_id {segment!r} is not an integer") from None
        if segment_id < 0:
            raise CsvSyntaxError(line, f"segment_id {segment_id} is negative")
        try:
            emotion = Emotion.parse(emotion_name)
        except ValueError:
            raise UnknownEmotion(line, f"unknown emotion {emotion_name!r}") from None
        try:
            rating = int(rating_text)
        except ValueError:
            raise CsvSyntaxError(line, f"rating {rating_text!r} is not an integer") from None
        if not MIN_RATING <= rating <= MAX_RATING:
            raise RangeError(line, f"rating {rating} outside [{MIN_RATING}, {MAX_RATING}]")
        key = (participant, segment_id, emotion)
        if key in seen:
            raise DuplicateRating(line, f"second rating of {emotion.label} for segment {segment_id} by {participant}")
        seen.add(key)
        rows.append(RatingRow(participant, segment_id, emotion, rating))
    return rows


def aggregate(rows: Iterable[RatingRow], segment_id: int) -> SegmentAggregate:
    """Mean and population stddev per emotion; majority = argmax of the mean."""
    cells = [[] for _ in EMOTIONS]
    raters = set()
    for row in rows:
        if row.segment_id == segment_id:
            cells[row.emotion].append(row.rating)
            raters.add(row.participant_id)
    if not raters:
        raise EmptySegment(f"no ratings for segment {segment_id}")
    missing = [e.label for e in EMOTIONS if not cells[e]]
    if missing:
        raise EmptySegment(f"segment {segment_id} has no ratings for {', '.join(missing)}")
    mean = tuple(math.fsum(c) / len(c) for c in cells)
    stddev = tuple(
        math.sqrt(math.fsum((x - mu) ** 2 for x in c) / len(c)) for c, mu in zip(cells, mean)
    )
    majority = Emotion(int(np.argmax(mean)))
    return SegmentAggregate(segment_id, mean, stddev, len(raters), majority)


def aggregate_all(rows) -> dict:
    rows = list(rows)
    return {sid: aggregate(rows, sid) for sid in sorted({r.segment_id for r in rows})}


# -- maestro-ratings/1 --------------------------------------------------------

def write_aggregates(aggregates) -> bytes:
    items = aggregates.values() if isinstance(aggregates, dict) else aggregates
    return canonical.dumps({
        "version": RATINGS_VERSION,
        "emotions": [e.label for e in EMOTIONS],
        "segments": [
            {
                "segment_id": a.segment_id,
                "mean": [float(v) for v in a.mean],
                "stddev": [float(v) for v in a.stddev],
                "n_raters": a.n_raters,
                "majority": a.majority.label,
            }
            for a in sorted(items, key=lambda a: a.segment_id)
        ],
    })


def parse_aggregates(data) -> dict:
    doc = canonical.loads(data, RATINGS_VERSION)
    check_keys(doc, "", ("version", "emotions", "segments"))
    if get_list(doc, "emotions") != [e.label for e in EMOTIONS]:
        raise SchemaError("emotions", "emotion order does not match")
    out = {}
    for i, raw in enumerate(get_list(doc, "segments")):
        path = f"segments[{i}]"
        check_keys(raw, path, ("segment_id", "mean", "stddev", "n_raters", "majority"))
        vectors = []
        for key in ("mean", "stddev"):
            values = get_list(raw, key, path)
            if len(values) != len(EMOTIONS):
                raise SchemaError(f"{path}.{key}", f"expected {len(EMOTIONS)} values")
            vectors.append(tuple(canonical.as_real(v, f"{path}.{key}") for v in values))
        try:
            majority = Emotion.parse(get_str(raw, "majority", path))
        except ValueError as exc:
            raise SchemaError(f"{path}.majority", str(exc)) from None
        agg = SegmentAggregate(get_int(raw, "segment_id", path, 0), vectors[0], vectors[1],
                               get_int(raw, "n_raters", path, 1), majority)
        out[agg.segment_id] = agg
    return out
