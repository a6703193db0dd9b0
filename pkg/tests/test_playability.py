import csv
import io
import json
import random
from dataclasses import replace

import pytest

from builders import B, P, S, W, block_score, part
from synthetic import study
from maestro.errors import InvalidScore
from maestro.generator import GenerationConfig, generate
from maestro.playability import (
    CSV_HEADER,
    ViolationCode,
    validate_playability,
    violations_csv,
    write_violations,
)
from maestro.score import DynamicLevel, Measure, Note, Score
from maestro.survey import Emotion


def clean_score():
    return block_score([(4, {S, W}), (4, {B, P})], parts_per_group=2, title="clean")


def edit_note(score, part_index, measure, note_index, **changes):
    parts = list(score.parts)
    p = parts[part_index]
    measures = list(p.measures)
    notes = list(measures[measure].notes)
    notes[note_index] = replace(notes[note_index], **changes)
    measures[measure] = replace(measures[measure], notes=tuple(notes))
    parts[part_index] = replace(p, measures=tuple(measures))
    return replace(score, parts=tuple(parts))


def test_empty_score_is_clean():
    assert validate_playability(Score("empty", (), tempo_map=((0, 120),))) == []


def test_clean_fixture_is_clean():
    assert validate_playability(clean_score()) == []


def test_low_violin_note():
    score = Score("v", (part("P1", "violin", [Measure(0, (4, 4), (Note(0, 480, 40, DynamicLevel.MF),))]),),
                  tempo_map=((0, 100),))
    [v] = validate_playability(score)
    assert v.code is ViolationCode.PITCH_OUT_OF_RANGE
    assert (v.part_id, v.measure_index, v.onset_ticks, v.measured, v.limit) == ("P1", 0, 0, 40.0, 55.0)


def test_short_staccato_at_fast_tempo():
    note = Note(0, 60, 67, DynamicLevel.MF, 0.75)  # a 32nd note
    score = Score("fast", (part("P1", "violin", [Measure(0, (4, 4), (note,))]),), tempo_map=((0, 240),))
    codes = {v.code: v for v in validate_playability(score)}
    assert codes[ViolationCode.NOTE_TOO_SHORT].measured == pytest.approx(23.4375)
    assert codes[ViolationCode.TEMPO_OUT_OF_RANGE].limit == 208.0
    assert len(codes) == 2


def test_thresholds_are_configurable():
    note = Note(0, 60, 67, DynamicLevel.MF, 0.75)
    score = Score("fast", (part("P1", "violin", [Measure(0, (4, 4), (note,))]),), tempo_map=((0, 120),))
    assert [v.code for v in validate_playability(score)] == [ViolationCode.NOTE_TOO_SHORT]
    assert validate_playability(score, min_duration_ms=40) == []


def test_saturation():
    score = block_score([(4, {S})], dynamics={S: DynamicLevel.FFF})
    [v] = validate_playability(score)
    assert v.code is ViolationCode.DYNAMIC_SATURATION and v.segment_id == 0 and v.measured == 1.0
    assert validate_playability(score, saturation_fraction=1.0) == []


def test_structural_errors_still_raise():
    bad = Score("bad", (part("P1", "violin", [Measure(0, (4, 4), (Note(0, 4000, 60, DynamicLevel.MF),))]),),
                tempo_map=((0, 120),))
    with pytest.raises(InvalidScore):
        validate_playability(bad)


MUTATIONS = {
    "pitch": (ViolationCode.PITCH_OUT_OF_RANGE, lambda s, r: edit_note(s, 0, r.randrange(4), r.randrange(4), pitch=30)),
    "short": (ViolationCode.NOTE_TOO_SHORT,
              lambda s, r: edit_note(s, 2, r.randrange(4), r.randrange(4), duration_ticks=40)),
    "tempo": (ViolationCode.TEMPO_OUT_OF_RANGE, lambda s, r: replace(s, tempo_map=((0, 120), (r.randrange(1, 8), 20)))),
}


@pytest.mark.parametrize("name", sorted(MUTATIONS))
@pytest.mark.parametrize("seed", range(5))
def test_single_mutation_gives_single_violation(name, seed):
    code, mutate = MUTATIONS[name]
    mutated = mutate(clean_score(), random.Random(seed))
    violations = validate_playability(mutated)
    assert [v.code for v in violations] == [code]


def test_identity_generation_keeps_clean_score_clean():
    _, model = study()
    score = clean_score()
    output, report = generate(score, model, GenerationConfig(Emotion.SADNESS, eta=1e6))
    assert report.plan.is_identity
    assert validate_playability(output) == []


def test_ordering_and_outputs():
    score = block_score([(4, {S, W})], title="two")
    score = edit_note(score, 1, 3, 0, pitch=20)
    score = edit_note(score, 0, 1, 2, pitch=110)
    score = replace(score, tempo_map=((0, 300),))
    violations = validate_playability(score)
    assert [(v.measure_index, v.code.value) for v in violations] == [
        (0, "TempoOutOfRange"), (1, "PitchOutOfRange"), (3, "PitchOutOfRange")]
    rows = list(csv.reader(io.StringIO(violations_csv(violations))))
    assert rows[0] == CSV_HEADER.split(",")
    assert rows[1] == ["TempoOutOfRange", "", "", "0", "", "300.0", "208.0"]
    assert rows[2][:5] == ["PitchOutOfRange", "S1", "", "1", "960"]
    doc = json.loads(write_violations(violations))
    assert doc["version"] == "maestro-violations/1" and len(doc["violations"]) == 3
    assert write_violations(violations) == write_violations(list(violations))
    assert "measure 1" in violations[1].describe()


def test_no_parts_only_tempo():
    assert [v.code for v in validate_playability(Score("t", (), tempo_map=((0, 30),)))] == \
        [ViolationCode.TEMPO_OUT_OF_RANGE]
