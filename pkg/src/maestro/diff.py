"""Compare two renditions of one work and replay or invert the differences.

Alignment is positional: parts by id, measures by index, and notes within a
measure by their exact ``(onset, pitch, duration)`` skeleton. Notes sharing a
skeleton key are paired in order of appearance, so every note is addressed
by its key plus an ordinal. Unpaired notes become structural additions or
removals, bounded by :data:`STRUCTURAL_BUDGET` of the original note count.
"""
from __future__ import annotations

import enum
import hashlib
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Optional, Union

from . import canonical
from .canonical import check_keys, get_int, get_list, get_str
from .errors import FingerprintMismatch, InvalidScore, NotSameWork, OutOfRange, SchemaError
from .score import (
    MAX_ARTICULATION,
    MAX_BPM,
    MIN_ARTICULATION,
    MIN_BPM,
    DynamicLevel,
    Note,
    Score,
    compress_tempo,
    note_sort_key,
    validate_score,
)

DELTA_VERSION = "maestro-delta/1"
STRUCTURAL_BUDGET = 0.05


class DeltaKind(enum.Enum):
    DYNAMIC = "DynamicDelta"
    TEMPO = "TempoDelta"
    ARTICULATION = "ArticulationDelta"
    STRUCTURAL = "StructuralDelta"


_KIND_ORDER = {k: i for i, k in enumerate(DeltaKind)}


@dataclass(frozen=True)
class Location:
    """Where a record applies.

    Note records fill every field; tempo records only ``measure_index``;
    a retitle record none at all.
    """

    part_id: Optional[str] = None
    measure_index: Optional[int] = None
    onset_ticks: Optional[int] = None
    pitch: Optional[int] = None
    duration_ticks: Optional[int] = None
    ordinal: int = 0

    @property
    def note_key(self) -> tuple:
        return (self.onset_ticks, -1 if self.pitch is None else self.pitch, self.duration_ticks)

    def sort_key(self) -> tuple:
        return (
            self.part_id is not None,
            self.part_id or "",
            -1 if self.measure_index is None else self.measure_index,
            -1 if self.onset_ticks is None else self.onset_ticks,
            -2 if self.pitch is None else self.pitch,
            self.duration_ticks or 0,
            self.ordinal,
        )


@dataclass(frozen=True)
class ArticulationChange:
    before: float
    after: float

    @property
    def ratio(self) -> float:
        return self.after / self.before


@dataclass(frozen=True)
class StructuralChange:
    op: str  # "add", "remove" or "retitle"
    dynamic: Optional[DynamicLevel] = None
    articulation: Optional[float] = None
    before: Optional[str] = None
    after: Optional[str] = None


Magnitude = Union[int, ArticulationChange, StructuralChange]


@dataclass(frozen=True)
class DeltaRecord:
    kind: DeltaKind
    location: Location
    magnitude: Magnitude

    def __post_init__(self):
        mag = self.magnitude
        if self.kind is DeltaKind.DYNAMIC:
            if not isinstance(mag, int) or not (-7 <= mag <= 7) or mag == 0:
                raise ValueError(f"dynamic delta must be a nonzero step in [-7, 7], got {mag!r}")
        elif self.kind is DeltaKind.TEMPO:
            if not isinstance(mag, int) or mag == 0:
                raise ValueError(f"tempo delta must be a nonzero integer, got {mag!r}")
        elif self.kind is DeltaKind.ARTICULATION:
            if not isinstance(mag, ArticulationChange) or not mag.before > 0 or not mag.after > 0 \
                    or mag.before == mag.after:
                raise ValueError(f"articulation delta must change a positive ratio, got {mag!r}")
        elif not isinstance(mag, StructuralChange) or mag.op not in ("add", "remove", "retitle"):
            raise ValueError(f"bad structural change {mag!r}")

    def sort_key(self) -> tuple:
        return self.location.sort_key() + (_KIND_ORDER[self.kind],)


@dataclass(frozen=True)
class DeltaSet:
    base_fingerprint: str
    result_fingerprint: str
    records: tuple = ()

    def __post_init__(self):
        records = tuple(sorted(self.records, key=DeltaRecord.sort_key))
        seen = set()
        for r in records:
            ident = (r.kind, r.location)
            if ident in seen:
                raise ValueError(f"duplicate {r.kind.value} at {r.location}")
            seen.add(ident)
        object.__setattr__(self, "records", records)

    def __len__(self) -> int:
        return len(self.records)

    def of_kind(self, kind: DeltaKind) -> list:
        return [r for r in self.records if r.kind is kind]


def skeleton_document(score: Score) -> dict:
    return {
        "divisions": score.divisions,
        "movement_boundaries": list(score.movement_boundaries),
        "parts": [
            {
                "id": p.id,
                "instrument": p.instrument_name,
                "measures": [
                    {
                        "time_signature": list(m.time_signature),
                        "notes": [[n.onset_ticks, n.pitch, n.duration_ticks] for n in m.notes],
                    }
                    for m in p.measures
                ],
            }
            for p in score.parts
        ],
    }


def fingerprint(score: Score) -> str:
    """SHA-256 of the rhythmic/pitch skeleton; ignores dynamics, articulation, tempo and title."""
    return hashlib.sha256(canonical.dumps(skeleton_document(score))).hexdigest()


def _buckets(notes) -> dict:
    out = defaultdict(list)
    for pos, note in enumerate(notes):
        out[note_sort_key(note)].append(pos)
    return out


def _check_same_work(a: Score, b: Score) -> None:
    for score in (a, b):
        errors = validate_score(score)
        if errors:
            raise InvalidScore(errors)
    if a.divisions != b.divisions:
        raise NotSameWork(f"divisions differ ({a.divisions} vs {b.divisions})")
    if [p.id for p in a.parts] != [p.id for p in b.parts]:
        raise NotSameWork("part ids differ")
    if [p.instrument_name for p in a.parts] != [p.instrument_name for p in b.parts]:
        raise NotSameWork("instrumentation differs")
    if a.measure_count != b.measure_count:
        raise NotSameWork(f"measure counts differ ({a.measure_count} vs {b.measure_count})")
    if a.time_signatures() != b.time_signatures():
        raise NotSameWork("time signatures differ")
    if a.movement_boundaries != b.movement_boundaries:
        raise NotSameWork("movement boundaries differ")


def diff_scores(original: Score, interpretation: Score) -> DeltaSet:
    _check_same_work(original, interpretation)
    records = []
    structural = 0
    for pa, pb in zip(original.parts, interpretation.parts):
        for i, (ma, mb) in enumerate(zip(pa.measures, pb.measures)):
            ba, bb = _buckets(ma.notes), _buckets(mb.notes)
            for key in sorted(set(ba) | set(bb)):
                onset, pitch_key, duration = key
                pitch = None if pitch_key < 0 else pitch_key
                xs, ys = ba.get(key, []), bb.get(key, [])

                def loc(ordinal):
                    return Location(pa.id, i, onset, pitch, duration, ordinal)

                for k in range(min(len(xs), len(ys))):
                    na, nb = ma.notes[xs[k]], mb.notes[ys[k]]
                    if na.dynamic != nb.dynamic:
                        records.append(DeltaRecord(DeltaKind.DYNAMIC, loc(k), int(nb.dynamic) - int(na.dynamic)))
                    if na.articulation != nb.articulation:
                        records.append(DeltaRecord(
                            DeltaKind.ARTICULATION, loc(k), ArticulationChange(na.articulation, nb.articulation)))
                for k in range(len(ys), len(xs)):
                    n = ma.notes[xs[k]]
                    records.append(DeltaRecord(
                        DeltaKind.STRUCTURAL, loc(k), StructuralChange("remove", n.dynamic, n.articulation)))
                for k in range(len(xs), len(ys)):
                    n = mb.notes[ys[k]]
                    records.append(DeltaRecord(
                        DeltaKind.STRUCTURAL, loc(k), StructuralChange("add", n.dynamic, n.articulation)))
                structural += abs(len(xs) - len(ys))

    limit = STRUCTURAL_BUDGET * original.note_count
    if structural > limit:
        raise NotSameWork(
            f"{structural} unmatched notes exceed the structural budget of {limit:g} "
            f"({STRUCTURAL_BUDGET:.0%} of {original.note_count})"
        )

    prev = 0
    for m, (ta, tb) in enumerate(zip(original.tempo_per_measure(), interpretation.tempo_per_measure())):
        diff = tb - ta
        if diff != prev:
            records.append(DeltaRecord(DeltaKind.TEMPO, Location(measure_index=m), diff - prev))
        prev = diff

    if original.title != interpretation.title:
        records.append(DeltaRecord(
            DeltaKind.STRUCTURAL, Location(), StructuralChange("retitle", before=original.title, after=interpretation.title)))

    return DeltaSet(fingerprint(original), fingerprint(interpretation), tuple(records))


def apply_delta(original: Score, deltas: DeltaSet) -> Score:
    """Replay ``deltas`` on ``original``; exact inverse of :func:`diff_scores`."""
    if fingerprint(original) != deltas.base_fingerprint:
        raise FingerprintMismatch("delta set was computed against a different score skeleton")

    by_measure = defaultdict(list)
    tempo_steps = {}
    title = original.title
    for r in deltas.records:
        if r.kind is DeltaKind.TEMPO:
            tempo_steps[r.location.measure_index] = r.magnitude
        elif r.location.part_id is None:
            title = r.magnitude.after
        else:
            by_measure[(r.location.part_id, r.location.measure_index)].append(r)

    parts = []
    for part in original.parts:
        measures = list(part.measures)
        for i, measure in enumerate(measures):
            records = by_measure.get((part.id, i))
            if records:
                measures[i] = replace(measure, notes=_apply_to_notes(part.id, i, measure.notes, records))
        parts.append(replace(part, measures=measures))

    tempo = original.tempo_per_measure()
    if tempo_steps:
        running = 0
        for m in range(len(tempo)):
            running += tempo_steps.get(m, 0)
            tempo[m] += running
            if not MIN_BPM <= tempo[m] <= MAX_BPM:
                raise OutOfRange(f"tempo {tempo[m]} bpm at measure {m} outside [{MIN_BPM}, {MAX_BPM}]")
        tempo_map = compress_tempo(tempo)
    else:
        tempo_map = original.tempo_map
    return replace(original, title=title, parts=parts, tempo_map=tempo_map)


def _apply_to_notes(part_id, measure_index, notes, records) -> tuple:
    notes = list(notes)
    buckets = _buckets(notes)
    removed = set()
    added = []

    def position(loc):
        try:
            return buckets[loc.note_key][loc.ordinal]
        except (KeyError, IndexError):
            raise FingerprintMismatch(f"no note at {loc}") from None

    for r in records:
        loc = r.location
        if r.kind is DeltaKind.DYNAMIC:
            pos = position(loc)
            level = int(notes[pos].dynamic) + r.magnitude
            if not 1 <= level <= 8:
                raise OutOfRange(
                    f"dynamic step {r.magnitude:+d} takes {notes[pos].dynamic.marking} outside ppp..fff "
                    f"(part {part_id}, measure {measure_index})"
                )
            notes[pos] = replace(notes[pos], dynamic=DynamicLevel(level))
        elif r.kind is DeltaKind.ARTICULATION:
            pos = position(loc)
            current = notes[pos].articulation
            change = r.magnitude
            value = change.after if current == change.before else current * change.ratio
            if not MIN_ARTICULATION <= value <= MAX_ARTICULATION:
                raise OutOfRange(f"articulation {value:g} outside [{MIN_ARTICULATION}, {MAX_ARTICULATION}]")
            notes[pos] = replace(notes[pos], articulation=value)
        elif r.magnitude.op == "remove":
            removed.add(position(loc))
        else:
            change = r.magnitude
            added.append(Note(loc.onset_ticks, loc.duration_ticks, loc.pitch, change.dynamic, change.articulation))
    kept = [n for pos, n in enumerate(notes) if pos not in removed]
    return tuple(sorted(kept + added, key=note_sort_key))


def invert_delta(deltas: DeltaSet) -> DeltaSet:
    records = []
    for r in deltas.records:
        mag = r.magnitude
        if r.kind in (DeltaKind.DYNAMIC, DeltaKind.TEMPO):
            mag = -mag
        elif r.kind is DeltaKind.ARTICULATION:
            mag = ArticulationChange(mag.after, mag.before)
        elif mag.op == "retitle":
            mag = replace(mag, before=mag.after, after=mag.before)
        else:
            mag = replace(mag, op="add" if mag.op == "remove" else "remove")
        records.append(DeltaRecord(r.kind, r.location, mag))
    return DeltaSet(deltas.result_fingerprint, deltas.base_fingerprint, tuple(records))


# -- maestro-delta/1 ----------------------------------------------------------

def _record_to_dict(r: DeltaRecord) -> dict:
    loc = r.location
    out = {
        "kind": r.kind.value,
        "location": {
            "part": loc.part_id,
            "measure": loc.measure_index,
            "onset": loc.onset_ticks,
            "pitch": loc.pitch,
            "duration": loc.duration_ticks,
            "ordinal": loc.ordinal,
        },
    }
    mag = r.magnitude
    if isinstance(mag, int):
        out["magnitude"] = mag
    elif isinstance(mag, ArticulationChange):
        out["magnitude"] = {"before": mag.before, "after": mag.after}
    elif mag.op == "retitle":
        out["magnitude"] = {"op": mag.op, "before": mag.before, "after": mag.after}
    else:
        out["magnitude"] = {"op": mag.op, "dynamic": mag.dynamic.marking, "articulation": mag.articulation}
    return out


def _optional_int(obj, key, path):
    return None if obj[key] is None else get_int(obj, key, path)


def _record_from_dict(obj, path) -> DeltaRecord:
    check_keys(obj, path, ("kind", "location", "magnitude"))
    try:
        kind = DeltaKind(get_str(obj, "kind", path))
    except ValueError:
        raise SchemaError(f"{path}.kind", f"unknown kind {obj['kind']!r}") from None
    raw = obj["location"]
    lpath = f"{path}.location"
    check_keys(raw, lpath, ("part", "measure", "onset", "pitch", "duration", "ordinal"))
    if raw["part"] is not None and not isinstance(raw["part"], str):
        raise SchemaError(f"{lpath}.part", "expected a string or null")
    loc = Location(
        raw["part"],
        _optional_int(raw, "measure", lpath),
        _optional_int(raw, "onset", lpath),
        _optional_int(raw, "pitch", lpath),
        _optional_int(raw, "duration", lpath),
        get_int(raw, "ordinal", lpath, 0),
    )
    mpath = f"{path}.magnitude"
    raw_mag = obj["magnitude"]
    if kind in (DeltaKind.DYNAMIC, DeltaKind.TEMPO):
        mag = get_int(obj, "magnitude", path)
    elif kind is DeltaKind.ARTICULATION:
        check_keys(raw_mag, mpath, ("before", "after"))
        mag = ArticulationChange(canonical.get_real(raw_mag, "before", mpath), canonical.get_real(raw_mag, "after", mpath))
    elif isinstance(raw_mag, dict) and raw_mag.get("op") == "retitle":
        check_keys(raw_mag, mpath, ("op", "before", "after"))
        mag = StructuralChange("retitle", before=get_str(raw_mag, "before", mpath), after=get_str(raw_mag, "after", mpath))
    else:
        check_keys(raw_mag, mpath, ("op", "dynamic", "articulation"))
        try:
            dynamic = DynamicLevel.from_marking(get_str(raw_mag, "dynamic", mpath))
        except ValueError as exc:
            raise SchemaError(f"{mpath}.dynamic", str(exc)) from None
        mag = StructuralChange(get_str(raw_mag, "op", mpath), dynamic, canonical.get_real(raw_mag, "articulation", mpath))
    try:
        return DeltaRecord(kind, loc, mag)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def write_delta(deltas: DeltaSet) -> bytes:
    return canonical.dumps({
        "version": DELTA_VERSION,
        "base_fingerprint": deltas.base_fingerprint,
        "result_fingerprint": deltas.result_fingerprint,
        "records": [_record_to_dict(r) for r in deltas.records],
    })


def parse_delta(data) -> DeltaSet:
    doc = canonical.loads(data, DELTA_VERSION)
    check_keys(doc, "", ("version", "base_fingerprint", "result_fingerprint", "records"))
    records = [_record_from_dict(r, f"records[{i}]") for i, r in enumerate(get_list(doc, "records"))]
    try:
        return DeltaSet(get_str(doc, "base_fingerprint"), get_str(doc, "result_fingerprint"), tuple(records))
    except ValueError as exc:
        raise SchemaError("records", str(exc)) from None
