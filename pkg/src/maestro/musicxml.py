"""Import a partwise MusicXML 3.x subset into a :class:`~maestro.score.Score`.

Supported: part list and instrument names, measures, divisions, time
signatures, transposition, pitched/unpitched notes, rests, chords,
backup/forward, ``ppp``..``fff`` dynamics directions and ``<sound tempo>``.

Anything else that carries musical meaning is skipped and reported as an
:class:`ImportWarning` whose category starts with ``ignored:``. Pure layout
elements (print, stems, beams, clefs, key signatures, ...) are skipped
silently.
"""
from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .errors import UnknownInstrument, UnsupportedStructure, XmlSyntaxError
from .score import (
    DEFAULT_DIVISIONS,
    MAX_BPM,
    MIN_BPM,
    VALID_DENOMINATORS,
    DynamicLevel,
    Measure,
    Note,
    Part,
    Score,
    compress_tempo,
    instrument,
    note_sort_key,
    round_half_up,
    validate_score,
)

STEP_SEMITONES = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
DEFAULT_TEMPO = 120

# measure-level children skipped without a warning
_SILENT = {"print", "bookmark", "link", "grouping", "listening", "barline"}
# note children that are pure notation/layout
_SILENT_NOTE = {
    "pitch", "unpitched", "rest", "duration", "chord", "grace", "cue", "voice", "type",
    "dot", "accidental", "stem", "notehead", "notehead-text", "staff", "beam",
    "time-modification", "tie", "instrument", "footnote", "level", "play", "listen",
}


@dataclass(frozen=True)
class ImportWarning:
    category: str
    part_id: Optional[str] = None
    measure_index: Optional[int] = None
    detail: str = ""

    def __str__(self) -> str:
        loc = []
        if self.part_id is not None:
            loc.append(f"part {self.part_id}")
        if self.measure_index is not None:
            loc.append(f"measure {self.measure_index}")
        where = f" ({', '.join(loc)})" if loc else ""
        return f"{self.category}{where}: {self.detail}" if self.detail else f"{self.category}{where}"


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _text(elem, path, default=None):
    child = elem.find(path)
    if child is None or child.text is None:
        return default
    return child.text.strip()


def _instrument_candidates(raw: str):
    name = " ".join(raw.lower().replace("_", " ").split())
    yield name
    yield name.replace("-", " ")
    stripped = re.sub(r"\s+in\s+\S+$", "", name)
    stripped = re.sub(r"(\s+(\d+|[ivx]+)\.?)+$", "", stripped)
    yield stripped
    if stripped.endswith("s"):
        yield stripped[:-1]


def resolve_instrument(*names) -> str:
    """First table name matched by any candidate spelling of ``names``."""
    for raw in names:
        if not raw:
            continue
        for candidate in _instrument_candidates(raw):
            try:
                return instrument(candidate).name
            except UnknownInstrument:
                pass
    shown = next((n for n in names if n), "")
    raise UnknownInstrument(shown)


class _PartReader:
    """Walks the measures of one ``<part>`` element."""

    def __init__(self, part_id: str, warnings: list):
        self.part_id = part_id
        self.warnings = warnings
        self.divisions = 1
        self.time: Optional[tuple] = None
        self.transpose = 0
        self.measures = []   # (time_signature, [(onset, duration, pitch, seq)])
        self.dynamics = []   # (measure, tick, seq, DynamicLevel)
        self.tempos = []     # (measure, tick, seq, bpm)
        self.seq = 0

    def warn(self, category, measure, detail=""):
        self.warnings.append(ImportWarning(category, self.part_id, measure, detail))

    def ticks(self, value: Fraction, measure: int) -> int:
        exact = value * DEFAULT_DIVISIONS / self.divisions
        if exact.denominator != 1:
            self.warn("rounded:duration", measure, f"{float(exact):g} ticks")
            return round_half_up(float(exact))
        return int(exact)

    def read_measure(self, m: int, elem) -> None:
        cursor = Fraction(0)
        extent = Fraction(0)
        last_onset = Fraction(0)
        notes = []
        for child in elem:
            tag = _local(child.tag)
            if tag == "attributes":
                self._attributes(m, child)
            elif tag == "note":
                advance, onset = self._note(m, child, cursor, last_onset, notes)
                if onset is not None:
                    last_onset = onset
                cursor += advance
            elif tag in ("backup", "forward"):
                dur = _text(child, "duration")
                if dur is None:
                    raise UnsupportedStructure(f"<{tag}> without duration in measure {m}")
                cursor += Fraction(dur) * (-1 if tag == "backup" else 1)
                if cursor < 0:
                    raise UnsupportedStructure(f"<backup> before measure start in measure {m}")
            elif tag == "direction":
                self._direction(m, child, cursor)
            elif tag == "sound":
                self._sound(m, child, cursor)
            elif tag == "barline":
                if child.find("repeat") is not None or child.find("ending") is not None:
                    self.warn("ignored:repeat", m)
            elif tag in _SILENT:
                continue
            else:
                self.warn(f"ignored:{tag}", m)
            extent = max(extent, cursor)

        if self.time is None:
            self.warn("defaulted:time", m, "no time signature; assuming 4/4")
            self.time = (4, 4)
        num, den = self.time
        nominal = Fraction(num * 4, den) * self.divisions
        time_signature = self.time
        if elem.get("implicit") == "yes" and 0 < extent < nominal:
            time_signature = _pickup_signature(extent / self.divisions)
            if time_signature is None:
                raise UnsupportedStructure(f"pickup measure {m} has no expressible time signature")
        length = time_signature[0] * 4 * DEFAULT_DIVISIONS // time_signature[1]
        converted = []
        for onset, dur, pitch, order in notes:
            start, ticks = self.ticks(onset, m), self.ticks(dur, m)
            if ticks <= 0:
                raise UnsupportedStructure(f"note with non-positive duration in measure {m}")
            if start + ticks > length:
                raise UnsupportedStructure(f"note overflows measure {m} of part {self.part_id}")
            converted.append((start, ticks, pitch, order))
        self.measures.append((time_signature, converted))

    def _attributes(self, m, elem):
        div = _text(elem, "divisions")
        if div is not None:
            self.divisions = Fraction(div)
            if self.divisions <= 0:
                raise UnsupportedStructure(f"divisions must be positive (measure {m})")
        time = elem.find("time")
        if time is not None:
            beats, beat_type = _text(time, "beats"), _text(time, "beat-type")
            if beats is None or beat_type is None:
                raise UnsupportedStructure(f"unsupported time signature in measure {m}")
            try:
                num = sum(int(b) for b in beats.split("+"))
                den = int(beat_type)
            except ValueError:
                raise UnsupportedStructure(f"unsupported time signature {beats}/{beat_type}") from None
            if num < 1 or den not in VALID_DENOMINATORS:
                raise UnsupportedStructure(f"unsupported time signature {beats}/{beat_type}")
            self.time = (num, den)
        transpose = elem.find("transpose")
        if transpose is not None:
            chromatic = int(_text(transpose, "chromatic", "0"))
            octave = int(_text(transpose, "octave-change", "0"))
            self.transpose = chromatic + 12 * octave

    def _note(self, m, elem, cursor, last_onset, notes):
        is_rest = elem.find("rest") is not None
        is_chord = elem.find("chord") is not None
        if elem.find("grace") is not None:
            if not is_rest:
                self.warn("ignored:note-kind", m, "grace note")
            return Fraction(0), None
        dur_text = _text(elem, "duration")
        if dur_text is None:
            raise UnsupportedStructure(f"note without duration in measure {m}")
        duration = Fraction(dur_text)
        onset = last_onset if is_chord else cursor
        advance = Fraction(0) if is_chord else duration
        if elem.find("cue") is not None:
            if not is_rest:
                self.warn("ignored:note-kind", m, "cue note")
            return advance, onset
        for child in elem:
            tag = _local(child.tag)
            if tag not in _SILENT_NOTE:
                self.warn(f"ignored:{tag}", m)
        if is_rest:
            return advance, onset
        pitch = None
        pitch_elem = elem.find("pitch")
        if pitch_elem is not None:
            step = _text(pitch_elem, "step")
            octave = _text(pitch_elem, "octave")
            if step not in STEP_SEMITONES or octave is None:
                raise UnsupportedStructure(f"malformed pitch in measure {m}")
            alter = float(_text(pitch_elem, "alter", "0"))
            if alter != int(alter):
                self.warn("ignored:microtone", m, f"alter {alter:g} rounded")
            pitch = (int(octave) + 1) * 12 + STEP_SEMITONES[step] + round_half_up(alter) + self.transpose
            if not 0 <= pitch <= 127:
                raise UnsupportedStructure(f"pitch {pitch} outside MIDI range in measure {m}")
        elif elem.find("unpitched") is None:
            raise UnsupportedStructure(f"note without pitch, unpitched or rest in measure {m}")
        self.seq += 1
        notes.append((onset, duration, pitch, self.seq))
        return advance, onset

    def _direction(self, m, elem, cursor):
        for dtype in elem.findall("direction-type"):
            for child in dtype:
                tag = _local(child.tag)
                if tag != "dynamics":
                    self.warn("ignored:direction", m, tag)
                    continue
                for mark in child:
                    mtag = _local(mark.tag)
                    try:
                        level = DynamicLevel.from_marking(mtag)
                    except ValueError:
                        self.warn("ignored:dynamics", m, mtag)
                        continue
                    self.seq += 1
                    self.dynamics.append((m, self.ticks(cursor, m), self.seq, level))
        sound = elem.find("sound")
        if sound is not None:
            self._sound(m, sound, cursor)

    def _sound(self, m, elem, cursor):
        tempo = elem.get("tempo")
        if tempo is not None:
            try:
                bpm = float(tempo)
            except ValueError:
                raise UnsupportedStructure(f"bad tempo {tempo!r} in measure {m}") from None
            self.seq += 1
            self.tempos.append((m, cursor, self.seq, bpm))

    def build_measures(self) -> list:
        """Attach persisting dynamics to notes and return :class:`Measure` objects."""
        events = sorted(self.dynamics, key=lambda e: e[:3])
        out = []
        j = 0
        current = DynamicLevel.MF
        for m, (ts, notes) in enumerate(self.measures):
            built = []
            for start, ticks, pitch, order in sorted(notes, key=lambda n: (n[0], n[3])):
                while j < len(events) and (events[j][0], events[j][1]) <= (m, start):
                    current = events[j][3]
                    j += 1
                built.append(Note(start, ticks, pitch, current))
            built.sort(key=note_sort_key)
            out.append(Measure(m, ts, built))
        return out


def _pickup_signature(quarters: Fraction) -> Optional[tuple]:
    for den in VALID_DENOMINATORS:
        num = quarters * den / 4
        if num.denominator == 1 and num >= 1:
            return (int(num), den)
    return None


def import_musicxml(data) -> tuple:
    """Return ``(score, warnings)`` for a partwise MusicXML document."""
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise XmlSyntaxError(str(exc)) from None
    kind = _local(root.tag)
    if kind == "score-timewise":
        raise UnsupportedStructure("timewise MusicXML documents are not supported")
    if kind != "score-partwise":
        raise UnsupportedStructure(f"root element <{kind}> is not a MusicXML score")

    warnings: list = []
    title = _text(root, "work/work-title") or _text(root, "movement-title") or ""

    part_list = root.find("part-list")
    if part_list is None:
        raise UnsupportedStructure("missing <part-list>")
    declared = {}
    for sp in part_list.findall("score-part"):
        sound = _text(sp, "score-instrument/instrument-sound")
        sound_name = sound.rsplit(".", 1)[-1] if sound else None
        names = (sound_name, _text(sp, "score-instrument/instrument-name"), _text(sp, "part-name"))
        declared[sp.get("id")] = resolve_instrument(*names)

    readers = []
    for part_elem in root.findall("part"):
        pid = part_elem.get("id")
        if pid not in declared:
            raise UnsupportedStructure(f"part {pid!r} missing from <part-list>")
        reader = _PartReader(pid, warnings)
        for m, measure_elem in enumerate(part_elem.findall("measure")):
            reader.read_measure(m, measure_elem)
        readers.append(reader)
    if not readers:
        raise UnsupportedStructure("document has no parts")

    counts = {len(r.measures) for r in readers}
    if len(counts) != 1:
        raise UnsupportedStructure(f"parts have differing measure counts {sorted(counts)}")
    signatures = [tuple(ts for ts, _ in r.measures) for r in readers]
    if any(s != signatures[0] for s in signatures):
        raise UnsupportedStructure("parts disagree on time signatures")
    n_measures = counts.pop()

    per_measure = []
    bpm = DEFAULT_TEMPO
    for m in range(n_measures):
        for reader in readers:
            found = [e for e in reader.tempos if e[0] == m]
            if found:
                raw = max(found, key=lambda e: (e[1], e[2]))[3]
                bpm = round_half_up(raw)
                if not MIN_BPM <= bpm <= MAX_BPM:
                    warnings.append(ImportWarning("clamped:tempo", reader.part_id, m, f"{raw:g} bpm"))
                    bpm = min(max(bpm, MIN_BPM), MAX_BPM)
                break
        per_measure.append(bpm)

    parts = []
    for reader in readers:
        name = declared[reader.part_id]
        parts.append(Part(reader.part_id, name, instrument(name).group, reader.build_measures()))
    score = Score(
        title=title,
        parts=parts,
        tempo_map=compress_tempo(per_measure) if per_measure else ((0, DEFAULT_TEMPO),),
        movement_boundaries=(0,),
    )
    errors = validate_score(score)
    if errors:
        raise UnsupportedStructure("imported score is not valid: " + "; ".join(map(str, errors[:3])))
    return score, warnings


def count_input_notes(data) -> int:
    """Number of non-rest ``<note>`` elements in a MusicXML document."""
    root = ET.fromstring(data)
    return sum(1 for n in root.iter() if _local(n.tag) == "note" and n.find("rest") is None)
