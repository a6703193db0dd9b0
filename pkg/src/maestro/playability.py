"""Static playability checks: pitch ranges, note lengths, tempi, dynamic saturation."""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from typing import Optional

from . import canonical
from .errors import InvalidScore
from .features import segment_score
from .score import MAX_BPM, MIN_BPM, DynamicLevel, Score, instrument, validate_score

VIOLATIONS_VERSION = "maestro-violations/1"
CSV_HEADER = "code,part_id,segment_id,measure_index,onset_ticks,measured,limit"
MIN_DURATION_MS = 50.0
SATURATION_FRACTION = 0.5
_EXTREMES = (DynamicLevel.PPP, DynamicLevel.FFF)


class ViolationCode(enum.Enum):
    PITCH_OUT_OF_RANGE = "PitchOutOfRange"
    NOTE_TOO_SHORT = "NoteTooShort"
    DYNAMIC_SATURATION = "DynamicSaturation"
    TEMPO_OUT_OF_RANGE = "TempoOutOfRange"


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    measure_index: int
    measured: float
    limit: float
    part_id: Optional[str] = None
    onset_ticks: Optional[int] = None
    segment_id: Optional[int] = None

    @property
    def sort_key(self):
        return (self.measure_index, self.part_id or "", -1 if self.onset_ticks is None else self.onset_ticks,
                self.code.value, self.measured)

    def describe(self) -> str:
        where = f"measure {self.measure_index}"
        if self.part_id is not None:
            where = f"part {self.part_id}, " + where
        if self.onset_ticks is not None:
            where += f", tick {self.onset_ticks}"
        if self.segment_id is not None:
            where += f" (segment {self.segment_id})"
        return f"{self.code.value} at {where}: measured {self.measured:g}, limit {self.limit:g}"


def validate_playability(score: Score, min_duration_ms: float = MIN_DURATION_MS,
                         saturation_fraction: float = SATURATION_FRACTION) -> list:
    """Return every violation, ordered by measure, part, onset and code.

    Tempi outside the playable range are reported rather than rejected, so
    the score only needs to be structurally valid apart from that.
    """
    errors = [e for e in validate_score(score) if e.code not in ("TempoRange", "NoParts")]
    if errors:
        raise InvalidScore(errors)
    found = []
    for measure, bpm in score.tempo_map:
        if not MIN_BPM <= bpm <= MAX_BPM:
            limit = MIN_BPM if bpm < MIN_BPM else MAX_BPM
            found.append(Violation(ViolationCode.TEMPO_OUT_OF_RANGE, measure, float(bpm), float(limit)))

    if not score.parts:
        return found
    tempo = score.tempo_per_measure()
    for part in score.parts:
        inst = instrument(part.instrument_name)
        for m, measure in enumerate(part.measures):
            ms_per_tick = 60000.0 / tempo[m] / score.divisions
            for note in measure.notes:
                if note.pitch is not None and not inst.min_pitch <= note.pitch <= inst.max_pitch:
                    limit = inst.min_pitch if note.pitch < inst.min_pitch else inst.max_pitch
                    found.append(Violation(ViolationCode.PITCH_OUT_OF_RANGE, m, float(note.pitch), float(limit),
                                           part.id, note.onset_ticks))
                performed = note.duration_ticks * note.articulation * ms_per_tick
                if performed < min_duration_ms:
                    found.append(Violation(ViolationCode.NOTE_TOO_SHORT, m, performed, float(min_duration_ms),
                                           part.id, note.onset_ticks))

    for segment in segment_score(score):
        for part in score.parts:
            notes = [n for m in range(segment.start_measure, segment.end_measure) for n in part.measures[m].notes]
            if not notes:
                continue
            share = sum(n.dynamic in _EXTREMES for n in notes) / len(notes)
            if share > saturation_fraction:
                found.append(Violation(ViolationCode.DYNAMIC_SATURATION, segment.start_measure, share,
                                       float(saturation_fraction), part.id, segment_id=segment.id))
    return sorted(found, key=lambda v: v.sort_key)


def write_violations(violations) -> bytes:
    return canonical.dumps({
        "version": VIOLATIONS_VERSION,
        "violations": [
            {
                "code": v.code.value,
                "part_id": v.part_id,
                "segment_id": v.segment_id,
                "measure_index": v.measure_index,
                "onset_ticks": v.onset_ticks,
                "measured": float(v.measured),
                "limit": float(v.limit),
            }
            for v in violations
        ],
    })


def violations_csv(violations) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for v in violations:
        writer.writerow([
            v.code.value,
            "" if v.part_id is None else v.part_id,
            "" if v.segment_id is None else v.segment_id,
            v.measure_index,
            "" if v.onset_ticks is None else v.onset_ticks,
            repr(float(v.measured)),
            repr(float(v.limit)),
        ])
    return buf.getvalue()
