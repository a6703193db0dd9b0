"""Read and write the canonical ``maestro-score/1`` text format."""
from __future__ import annotations

from . import canonical
from .canonical import check_keys, get_int, get_list, get_str
from .errors import InvalidScore, SchemaError
from .score import (
    DEFAULT_DIVISIONS,
    DynamicLevel,
    InstrumentGroup,
    Measure,
    Note,
    Part,
    Score,
    validate_score,
)

SCORE_VERSION = "maestro-score/1"


def note_to_dict(note: Note) -> dict:
    return {
        "onset": note.onset_ticks,
        "duration": note.duration_ticks,
        "pitch": note.pitch,
        "dynamic": note.dynamic.marking,
        "articulation": float(note.articulation),
    }


def note_from_dict(obj, path: str) -> Note:
    check_keys(obj, path, ("onset", "duration", "pitch"), ("dynamic", "articulation"))
    pitch = obj["pitch"]
    if pitch is not None:
        pitch = get_int(obj, "pitch", path, 0, 127)
    dynamic = DynamicLevel.MF
    if "dynamic" in obj:
        marking = get_str(obj, "dynamic", path)
        try:
            dynamic = DynamicLevel.from_marking(marking)
        except ValueError:
            raise SchemaError(f"{path}.dynamic", f"unknown marking {marking!r}") from None
    articulation = 1.0
    if "articulation" in obj:
        articulation = canonical.get_real(obj, "articulation", path)
    return Note(
        onset_ticks=get_int(obj, "onset", path, 0),
        duration_ticks=get_int(obj, "duration", path, 1),
        pitch=pitch,
        dynamic=dynamic,
        articulation=articulation,
    )


def score_to_document(score: Score) -> dict:
    return {
        "version": SCORE_VERSION,
        "title": score.title,
        "divisions": score.divisions,
        "tempo_map": [list(e) for e in score.tempo_map],
        "movement_boundaries": list(score.movement_boundaries),
        "parts": [
            {
                "id": part.id,
                "instrument": part.instrument_name,
                "group": part.group.label,
                "measures": [
                    {
                        "index": m.index,
                        "time_signature": list(m.time_signature),
                        "notes": [note_to_dict(n) for n in m.notes],
                    }
                    for m in part.measures
                ],
            }
            for part in score.parts
        ],
    }


def score_from_document(doc: dict) -> Score:
    check_keys(doc, "", ("version", "parts", "tempo_map"), ("title", "divisions", "movement_boundaries"))
    title = get_str(doc, "title") if "title" in doc else ""
    divisions = get_int(doc, "divisions", "", 1) if "divisions" in doc else DEFAULT_DIVISIONS

    tempo_map = []
    for i, entry in enumerate(get_list(doc, "tempo_map")):
        where = f"tempo_map[{i}]"
        if not isinstance(entry, list) or len(entry) != 2:
            raise SchemaError(where, "expected [measure, bpm]")
        tempo_map.append((get_int(entry, 0, where, 0), get_int(entry, 1, where)))

    if "movement_boundaries" in doc:
        raw = get_list(doc, "movement_boundaries")
        movements = tuple(get_int(raw, i, "movement_boundaries", 0) for i in range(len(raw)))
    else:
        movements = (0,)

    parts = []
    for p, raw_part in enumerate(get_list(doc, "parts")):
        path = f"parts[{p}]"
        check_keys(raw_part, path, ("id", "instrument", "group", "measures"))
        try:
            group = InstrumentGroup.from_label(get_str(raw_part, "group", path))
        except ValueError as exc:
            raise SchemaError(f"{path}.group", str(exc)) from None
        measures = []
        for m, raw_measure in enumerate(get_list(raw_part, "measures", path)):
            mpath = f"{path}.measures[{m}]"
            check_keys(raw_measure, mpath, ("index", "time_signature", "notes"))
            ts = get_list(raw_measure, "time_signature", mpath)
            if len(ts) != 2:
                raise SchemaError(f"{mpath}.time_signature", "expected [numerator, denominator]")
            notes = [
                note_from_dict(raw_note, f"{mpath}.notes[{n}]")
                for n, raw_note in enumerate(get_list(raw_measure, "notes", mpath))
            ]
            measures.append(Measure(
                index=get_int(raw_measure, "index", mpath, 0),
                time_signature=(get_int(ts, 0, f"{mpath}.time_signature"), get_int(ts, 1, f"{mpath}.time_signature")),
                notes=notes,
            ))
        parts.append(Part(
            id=get_str(raw_part, "id", path),
            instrument_name=get_str(raw_part, "instrument", path),
            group=group,
            measures=measures,
        ))
    return Score(
        title=title,
        parts=parts,
        tempo_map=tempo_map,
        movement_boundaries=movements,
        divisions=divisions,
    )


def parse_canonical(data, check: bool = True) -> Score:
    """Parse canonical score text.

    With ``check`` (the default) the result always passes ``validate_score``;
    without it, only the document shape is enforced.
    """
    score = score_from_document(canonical.loads(data, SCORE_VERSION))
    if not check:
        return score
    errors = validate_score(score)
    if errors:
        raise SchemaError("structure", "; ".join(str(e) for e in errors[:5]))
    return score


def write_canonical(score: Score) -> bytes:
    errors = validate_score(score)
    if errors:
        raise InvalidScore(errors)
    return canonical.dumps(score_to_document(score))


def read_score(path) -> Score:
    with open(path, "rb") as fh:
        return parse_canonical(fh.read())


def write_score(path, score: Score) -> None:
    data = write_canonical(score)
    with open(path, "wb") as fh:
        fh.write(data)
