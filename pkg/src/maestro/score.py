"""Score intermediate representation.

A :class:`Score` holds congruent parts (same measure count and per-measure
time signatures), a per-measure tempo map and movement boundaries. Notes live
in measure-relative ticks; ``divisions`` gives ticks per quarter note.

All types are frozen; list arguments are converted to tuples on construction.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterator, Optional

from .errors import IndexOutOfRange, UnknownInstrument

DEFAULT_DIVISIONS = 480
MIN_BPM = 40
MAX_BPM = 208
MIN_ARTICULATION = 0.25
MAX_ARTICULATION = 2.0
VALID_DENOMINATORS = (1, 2, 4, 8, 16, 32)


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves away from zero."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def clamp(x, lo, hi):
    return lo if x < lo else hi if x > hi else x


class InstrumentGroup(enum.IntEnum):
    """The four orchestral families, in canonical order."""

    STRINGS = 0
    WOODWINDS = 1
    BRASS = 2
    PERCUSSION = 3

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_label(cls, label: str) -> "InstrumentGroup":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown instrument group {label!r}") from None


GROUPS = tuple(InstrumentGroup)


class DynamicLevel(enum.IntEnum):
    """Eight-step dynamics scale; ``level_value`` is ``index / 8``."""

    PPP = 1
    PP = 2
    P = 3
    MP = 4
    MF = 5
    F = 6
    FF = 7
    FFF = 8

    @property
    def marking(self) -> str:
        return self.name.lower()

    @property
    def level_value(self) -> float:
        return self.value / 8

    @classmethod
    def from_marking(cls, marking: str) -> "DynamicLevel":
        try:
            return cls[marking.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown dynamic marking {marking!r}") from None


MARKINGS = tuple(d.marking for d in DynamicLevel)


@dataclass(frozen=True)
class Note:
    onset_ticks: int
    duration_ticks: int
    pitch: Optional[int]  # None for unpitched percussion
    dynamic: DynamicLevel = DynamicLevel.MF
    articulation: float = 1.0

    def __post_init__(self):
        if type(self.articulation) is int:
            object.__setattr__(self, "articulation", float(self.articulation))

    @property
    def end_ticks(self) -> int:
        return self.onset_ticks + self.duration_ticks

    @property
    def sort_key(self) -> tuple:
        return note_sort_key(self)


def note_sort_key(note: Note) -> tuple:
    return (note.onset_ticks, -1 if note.pitch is None else note.pitch, note.duration_ticks)


@dataclass(frozen=True)
class Measure:
    index: int
    time_signature: tuple
    notes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "time_signature", tuple(self.time_signature))
        object.__setattr__(self, "notes", tuple(self.notes))

    def length_ticks(self, divisions: int) -> int:
        num, den = self.time_signature
        return num * 4 * divisions // den


@dataclass(frozen=True)
class Part:
    id: str
    instrument_name: str
    group: InstrumentGroup
    measures: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "measures", tuple(self.measures))


@dataclass(frozen=True)
class Score:
    title: str
    parts: tuple
    tempo_map: tuple = ((0, 120),)
    movement_boundaries: tuple = (0,)
    divisions: int = DEFAULT_DIVISIONS

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "tempo_map", tuple(tuple(e) for e in self.tempo_map))
        object.__setattr__(self, "movement_boundaries", tuple(self.movement_boundaries))

    @property
    def measure_count(self) -> int:
        return len(self.parts[0].measures) if self.parts else 0

    def time_signatures(self) -> list:
        return [m.time_signature for m in self.parts[0].measures] if self.parts else []

    def measure_lengths(self) -> list:
        return [m.length_ticks(self.divisions) for m in self.parts[0].measures] if self.parts else []

    def measure_offsets(self) -> list:
        """Absolute start tick of every measure, plus the total length at the end."""
        offsets = [0]
        for length in self.measure_lengths():
            offsets.append(offsets[-1] + length)
        return offsets

    @property
    def total_ticks(self) -> int:
        return sum(self.measure_lengths())

    def tempo_per_measure(self) -> list:
        """Effective bpm of every measure (tempo map expanded)."""
        out = []
        entries = list(self.tempo_map)
        j = 0
        bpm = entries[0][1] if entries else 120
        for m in range(self.measure_count):
            while j < len(entries) and entries[j][0] <= m:
                bpm = entries[j][1]
                j += 1
            out.append(bpm)
        return out

    def movement_of(self, measure_index: int) -> int:
        movement = 0
        for i, start in enumerate(self.movement_boundaries):
            if start <= measure_index:
                movement = i
        return movement

    def iter_notes(self) -> Iterator[tuple]:
        """Yield ``(part, measure, note)`` for every note in score order."""
        for part in self.parts:
            for measure in part.measures:
                for note in measure.notes:
                    yield part, measure, note

    @property
    def note_count(self) -> int:
        return sum(len(m.notes) for p in self.parts for m in p.measures)


def compress_tempo(per_measure) -> tuple:
    """Tempo map entries at measure 0 and wherever the bpm changes."""
    entries = []
    for m, bpm in enumerate(per_measure):
        if not entries or entries[-1][1] != bpm:
            entries.append((m, bpm))
    return tuple(entries) or ((0, 120),)


# -- instrument table ---------------------------------------------------------

@dataclass(frozen=True)
class Instrument:
    name: str
    group: InstrumentGroup
    midi_program: int
    min_pitch: int
    max_pitch: int

    @property
    def unpitched(self) -> bool:
        return self.min_pitch == self.max_pitch


TABLE_VERSION = "maestro-instruments/1"


def _parse_table(text: str) -> dict:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    table = {}
    for row in csv.DictReader(io.StringIO("\n".join(lines))):
        inst = Instrument(
            name=row["name"].strip().lower(),
            group=InstrumentGroup.from_label(row["group"].strip()),
            midi_program=int(row["midi_program"]),
            min_pitch=int(row["min_pitch"]),
            max_pitch=int(row["max_pitch"]),
        )
        if not (0 <= inst.midi_program <= 127 and 0 <= inst.min_pitch <= inst.max_pitch <= 127):
            raise ValueError(f"bad instrument table row {row!r}")
        table[inst.name] = inst
    return table


@lru_cache(maxsize=None)
def instrument_table() -> dict:
    """Name -> :class:`Instrument`, loaded from the packaged CSV."""
    text = resources.files("maestro").joinpath("data/instruments.csv").read_text("utf-8")
    if not text.startswith(f"# {TABLE_VERSION}"):
        raise ValueError("instrument table version header missing")
    return _parse_table(text)


def instrument(name: str) -> Instrument:
    try:
        return instrument_table()[name.strip().lower()]
    except KeyError:
        raise UnknownInstrument(name) from None


def group_of_instrument(name: str) -> InstrumentGroup:
    return instrument(name).group


def active_groups(score: Score, measure_index: int) -> frozenset:
    """Groups with at least one sounding note in the measure."""
    if not 0 <= measure_index < score.measure_count:
        raise IndexOutOfRange(f"measure {measure_index} outside [0, {score.measure_count})")
    return frozenset(
        part.group for part in score.parts if part.measures[measure_index].notes
    )


# -- structural validation ----------------------------------------------------

@dataclass(frozen=True)
class StructuralError:
    code: str
    part_id: Optional[str] = None
    measure_index: Optional[int] = None
    message: str = ""

    def __str__(self) -> str:
        where = []
        if self.part_id is not None:
            where.append(f"part {self.part_id!r}")
        if self.measure_index is not None:
            where.append(f"measure {self.measure_index}")
        loc = f" at {', '.join(where)}" if where else ""
        return f"{self.code}{loc}: {self.message}" if self.message else f"{self.code}{loc}"


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _valid_time_signature(ts) -> bool:
    return (
        isinstance(ts, tuple) and len(ts) == 2 and _is_int(ts[0]) and _is_int(ts[1])
        and ts[0] >= 1 and ts[1] in VALID_DENOMINATORS
    )


def validate_score(score: Score) -> list:
    """Return every structural invariant violation; ``[]`` for a valid score."""
    errors: list = []
    add = lambda code, part=None, measure=None, msg="": errors.append(
        StructuralError(code, part, measure, msg)
    )

    divisions_ok = _is_int(score.divisions) and score.divisions >= 1
    if not divisions_ok:
        add("InvalidDivisions", msg=f"divisions={score.divisions!r}")
    if not isinstance(score.title, str):
        add("InvalidTitle", msg="title must be a string")
    if not score.parts:
        add("NoParts")
    n_measures = score.measure_count

    _validate_tempo(score, n_measures, add)
    _validate_movements(score, n_measures, add)

    seen_ids = set()
    reference = score.parts[0] if score.parts else None
    for pos, part in enumerate(score.parts):
        if part.id in seen_ids or not isinstance(part.id, str) or not part.id:
            add("DuplicatePartId" if part.id in seen_ids else "InvalidPartId", part.id)
        seen_ids.add(part.id)
        try:
            expected_group = group_of_instrument(part.instrument_name)
        except (UnknownInstrument, AttributeError):
            add("UnknownInstrument", part.id, msg=repr(part.instrument_name))
        else:
            if part.group != expected_group:
                add("GroupMismatch", part.id, msg=f"{part.instrument_name} is {expected_group.label}")
        if pos > 0 and len(part.measures) != n_measures:
            add("PartLengthMismatch", part.id, msg=f"{len(part.measures)} measures, expected {n_measures}")
        for i, measure in enumerate(part.measures):
            if measure.index != i:
                add("MeasureIndex", part.id, i, f"index field {measure.index}")
            ts_ok = _valid_time_signature(measure.time_signature)
            if not ts_ok:
                add("InvalidTimeSignature", part.id, i, repr(measure.time_signature))
            elif pos > 0 and i < n_measures:
                ref_ts = reference.measures[i].time_signature
                if _valid_time_signature(ref_ts) and ref_ts != measure.time_signature:
                    add("TimeSignatureMismatch", part.id, i, f"{measure.time_signature} vs {ref_ts}")
            length = None
            if ts_ok and divisions_ok:
                num, den = measure.time_signature
                if (num * 4 * score.divisions) % den:
                    add("InvalidTimeSignature", part.id, i, "measure length is not a whole number of ticks")
                else:
                    length = measure.length_ticks(score.divisions)
            _validate_notes(part, i, measure.notes, length, add)
    return errors


def _validate_tempo(score: Score, n_measures: int, add) -> None:
    tm = score.tempo_map
    if not tm:
        add("EmptyTempoMap")
        return
    prev_index = None
    prev_bpm = None
    for entry in tm:
        if len(entry) != 2 or not _is_int(entry[0]) or not _is_int(entry[1]):
            add("InvalidTempoEntry", msg=repr(entry))
            prev_index = prev_bpm = None
            continue
        index, bpm = entry
        if prev_index is None and entry is tm[0] and index != 0:
            add("TempoStart", measure=index, msg="first tempo entry must be at measure 0")
        if prev_index is not None and index <= prev_index:
            add("TempoOrder", measure=index)
        elif prev_bpm is not None and bpm == prev_bpm:
            add("TempoRedundant", measure=index, msg=f"repeats {bpm} bpm")
        if not MIN_BPM <= bpm <= MAX_BPM:
            add("TempoRange", measure=index, msg=f"{bpm} bpm outside [{MIN_BPM}, {MAX_BPM}]")
        if index >= max(n_measures, 1):
            add("TempoIndexRange", measure=index)
        prev_index, prev_bpm = index, bpm


def _validate_movements(score: Score, n_measures: int, add) -> None:
    mb = score.movement_boundaries
    if not mb or mb[0] != 0:
        add("MovementStart", msg="movement boundaries must start at measure 0")
    for a, b in zip(mb, mb[1:]):
        if not b > a:
            add("MovementOrder", measure=b)
    for b in mb:
        if not _is_int(b) or b < 0 or b >= max(n_measures, 1):
            add("MovementIndexRange", measure=b)


def _validate_notes(part: Part, i: int, notes, length: Optional[int], add) -> None:
    prev_key = None
    for note in notes:
        onset_ok = _is_int(note.onset_ticks) and note.onset_ticks >= 0
        dur_ok = _is_int(note.duration_ticks) and note.duration_ticks > 0
        if not onset_ok:
            add("InvalidOnset", part.id, i, repr(note.onset_ticks))
        if not dur_ok:
            add("InvalidDuration", part.id, i, repr(note.duration_ticks))
        if note.pitch is not None and not (_is_int(note.pitch) and 0 <= note.pitch <= 127):
            add("InvalidPitch", part.id, i, repr(note.pitch))
        if not isinstance(note.dynamic, DynamicLevel):
            add("InvalidDynamic", part.id, i, repr(note.dynamic))
        art = note.articulation
        if not (isinstance(art, float) and MIN_ARTICULATION <= art <= MAX_ARTICULATION):
            add("InvalidArticulation", part.id, i, repr(art))
        if onset_ok and dur_ok and length is not None and note.end_ticks > length:
            add("NoteOverflow", part.id, i, f"note ends at {note.end_ticks} > {length}")
        if onset_ok and dur_ok and (note.pitch is None or _is_int(note.pitch)):
            key = note_sort_key(note)
            if prev_key is not None and key < prev_key:
                add("NoteOrder", part.id, i, f"note at {note.onset_ticks} out of order")
            prev_key = key
