import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import corpus_scores, part, perturb, random_score
from maestro.diff import (
    ArticulationChange,
    DeltaKind,
    DeltaRecord,
    DeltaSet,
    Location,
    apply_delta,
    diff_scores,
    fingerprint,
    invert_delta,
    parse_delta,
    write_delta,
)
from maestro.errors import FingerprintMismatch, NotSameWork, OutOfRange, SchemaError
from maestro.score import DynamicLevel, Measure, Note, Score


def strings_score(n_measures=6, level=DynamicLevel.P):
    notes = lambda: tuple(Note(i * 480, 480, 60 + i, level) for i in range(4))
    return Score("s", (part("vln1", "violin", [Measure(i, (4, 4), notes()) for i in range(n_measures)]),))


def set_note(score, measure, index, **changes):
    p = score.parts[0]
    m = p.measures[measure]
    notes = list(m.notes)
    notes[index] = replace(notes[index], **changes)
    measures = list(p.measures)
    measures[measure] = replace(m, notes=tuple(notes))
    return replace(score, parts=(replace(p, measures=tuple(measures)),))


def test_diff_of_identical_is_empty():
    for s in corpus_scores():
        d = diff_scores(s, s)
        assert len(d) == 0
        assert d.base_fingerprint == d.result_fingerprint == fingerprint(s)


def test_single_dynamic_change():
    a = strings_score()
    b = set_note(a, 5, 1, dynamic=DynamicLevel.F)
    d = diff_scores(a, b)
    assert len(d) == 1
    (r,) = d.records
    assert r.kind is DeltaKind.DYNAMIC and r.magnitude == 3
    assert (r.location.part_id, r.location.measure_index, r.location.onset_ticks) == ("vln1", 5, 480)


def test_structural_budget():
    a = Score("s", (part("vln1", "violin", [
        Measure(i, (4, 4), tuple(Note(j * 480, 480, 60 + j) for j in range(4))) for i in range(5)]),))
    removed = a
    for m in range(2):  # 2 of 20 notes = 10%
        removed = replace(removed, parts=(replace(removed.parts[0], measures=tuple(
            replace(ms, notes=ms.notes[1:]) if i == m else ms for i, ms in enumerate(removed.parts[0].measures))),))
    with pytest.raises(NotSameWork):
        diff_scores(a, removed)
    one = replace(a, parts=(replace(a.parts[0], measures=(replace(a.parts[0].measures[0],
                                                                  notes=a.parts[0].measures[0].notes[1:]),)
                                    + a.parts[0].measures[1:]),))
    d = diff_scores(a, one)  # 1 of 20 = 5% is within budget
    assert [r.kind for r in d.records] == [DeltaKind.STRUCTURAL]
    assert apply_delta(a, d) == one
    assert apply_delta(one, invert_delta(d)) == a


def test_not_same_work():
    a = strings_score()
    with pytest.raises(NotSameWork):
        diff_scores(a, strings_score(n_measures=5))
    with pytest.raises(NotSameWork):
        diff_scores(a, replace(a, parts=(replace(a.parts[0], id="vln2"),)))


def test_apply_empty_is_identity():
    a = strings_score()
    assert apply_delta(a, DeltaSet(fingerprint(a), fingerprint(a))) == a


def test_out_of_range_dynamic():
    a = strings_score(level=DynamicLevel.FF)
    loc = Location("vln1", 0, 0, 60, 480, 0)
    with pytest.raises(OutOfRange):
        apply_delta(a, DeltaSet(fingerprint(a), fingerprint(a), (DeltaRecord(DeltaKind.DYNAMIC, loc, 5),)))


def test_fingerprint_mismatch():
    a = strings_score()
    d = diff_scores(a, set_note(a, 0, 0, dynamic=DynamicLevel.F))
    with pytest.raises(FingerprintMismatch):
        apply_delta(strings_score(n_measures=5), d)


def test_invert_examples():
    a = strings_score()
    d = diff_scores(a, set_note(a, 0, 0, dynamic=DynamicLevel.F))
    inv = invert_delta(d)
    assert [r.magnitude for r in inv.records] == [-3]
    assert invert_delta(inv) == d
    empty = DeltaSet(fingerprint(a), fingerprint(a))
    assert invert_delta(empty) == empty


def test_record_invariants():
    loc = Location("p", 0, 0, 60, 480, 0)
    for kind, mag in [(DeltaKind.DYNAMIC, 0), (DeltaKind.DYNAMIC, 8), (DeltaKind.TEMPO, 0),
                      (DeltaKind.ARTICULATION, ArticulationChange(1.0, 1.0))]:
        with pytest.raises(ValueError):
            DeltaRecord(kind, loc, mag)


def test_tempo_and_articulation_records():
    a = strings_score()
    b = set_note(replace(a, tempo_map=((0, 120), (2, 90), (4, 120))), 1, 2, articulation=0.5)
    d = diff_scores(a, b)
    assert [(r.location.measure_index, r.magnitude) for r in d.of_kind(DeltaKind.TEMPO)] == [(2, -30), (4, 30)]
    (art,) = d.of_kind(DeltaKind.ARTICULATION)
    assert art.magnitude.ratio == 0.5
    assert apply_delta(a, d) == b


def test_retitle():
    a = strings_score()
    b = replace(a, title="other")
    assert apply_delta(a, diff_scores(a, b)) == b


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_diff_algebra_on_random_pairs(seed):
    rng = random.Random(seed)
    a = random_score(rng)
    b = perturb(rng, a)
    d = diff_scores(a, b)
    assert len(diff_scores(a, a)) == 0
    assert apply_delta(a, d) == b
    assert apply_delta(b, invert_delta(d)) == a
    assert invert_delta(d) == diff_scores(b, a)
    assert invert_delta(invert_delta(d)) == d
    assert not d.of_kind(DeltaKind.STRUCTURAL)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_delta_file_round_trip(seed):
    rng = random.Random(seed)
    a = random_score(rng)
    d = diff_scores(a, perturb(rng, a))
    data = write_delta(d)
    assert parse_delta(data) == d
    assert write_delta(parse_delta(data)) == data


def test_delta_file_rejects_bad_magnitude():
    a = strings_score()
    data = write_delta(diff_scores(a, set_note(a, 0, 0, dynamic=DynamicLevel.F)))
    with pytest.raises(SchemaError):
        parse_delta(data.replace(b'"magnitude": 3', b'"magnitude": 9'))
