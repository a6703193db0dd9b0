import itertools
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import B, P, S, W, block_score, corpus_scores, part, random_score
from oracles import featurize_straight
from maestro.errors import SchemaError
from maestro.features import (
    ARTICULATION_GRID,
    DYNAMIC_GRID,
    N_FEATURES,
    TEMPO_GRID,
    TransformPlan,
    apply_plan,
    featurize,
    format_feature_vector,
    materialize_plan,
    parse_feature_vector,
    segment_score,
    transform_features,
)
from maestro.score import DynamicLevel, Measure, Score


def bounds(segments):
    return [(s.start_measure, s.end_measure) for s in segments]


def test_constant_instrumentation_single_segment():
    assert bounds(segment_score(block_score([(12, {S, W})]))) == [(0, 12)]


def test_four_movements():
    score = block_score([(16, {S, B})], movement_boundaries=(0, 4, 8, 12))
    segs = segment_score(score)
    assert bounds(segs) == [(0, 4), (4, 8), (8, 12), (12, 16)]
    assert [s.movement_index for s in segs] == [0, 1, 2, 3]


def test_strings_then_tutti():
    segs = segment_score(block_score([(8, {S}), (8, {S, W, B, P})]))
    assert bounds(segs) == [(0, 8), (8, 16)]
    assert segs[0].active_groups == {S}
    assert segs[1].active_groups == {S, W, B, P}


def test_short_change_does_not_split():
    # the 3-measure brass interlude is absorbed; the return to strings persists and cuts
    assert bounds(segment_score(block_score([(6, {S}), (3, {B}), (6, {S})]))) == [(0, 9), (9, 15)]
    assert bounds(segment_score(block_score([(6, {S}), (3, {B})]))) == [(0, 9)]


def test_persistence_counts_within_movement():
    score = block_score([(6, {S}), (3, {B}), (5, {B})], movement_boundaries=(0, 9))
    # brass lasts only 3 measures before the movement ends, so it does not cut
    assert bounds(segment_score(score)) == [(0, 9), (9, 14)]


@pytest.mark.parametrize("score", corpus_scores(), ids=lambda s: s.title)
def test_segments_partition(score):
    segs = segment_score(score)
    assert [s.id for s in segs] == list(range(len(segs)))
    assert segs[0].start_measure == 0 and segs[-1].end_measure == score.measure_count
    for a, b in zip(segs, segs[1:]):
        assert a.end_measure == b.start_measure
    for s in segs:
        movement_starts = list(score.movement_boundaries) + [score.measure_count]
        lo, hi = movement_starts[s.movement_index], movement_starts[s.movement_index + 1]
        assert lo <= s.start_measure < s.end_measure <= hi


def test_all_strings_mf():
    score = block_score([(4, {S})], notes_per_measure=1)
    f = featurize(score, segment_score(score)[0])
    assert f[0] == 1.0 and f[1] == f[2] == f[3] == 0
    assert f[4] == 0.625
    assert f[12] == 1.0
    assert f[8] == 1.0  # whole notes cap at one


def test_all_rest_segment():
    score = Score("r", (part("P1", "violin", [Measure(i, (4, 4)) for i in range(3)]),), tempo_map=((0, 60),))
    f = featurize(score, segment_score(score)[0])
    expected = np.zeros(N_FEATURES)
    expected[12] = 0.5
    assert np.array_equal(f, expected)


@pytest.mark.parametrize("score", corpus_scores(), ids=lambda s: s.title)
def test_featurize_matches_straight_line_oracle(score):
    for seg in segment_score(score):
        f = featurize(score, seg)
        assert len(f) == N_FEATURES
        assert np.allclose(f, featurize_straight(score, seg.start_measure, seg.end_measure), rtol=0, atol=1e-12)
        assert (0 <= f[:4]).all() and (f[:4] <= 1).all()
        for g in range(4):
            if f[g] == 0:
                assert f[4 + g] == 0 and f[8 + g] == 0
            else:
                assert 0.125 <= f[4 + g] <= 1


def test_transform_examples():
    base = np.zeros(N_FEATURES)
    base[0], base[4], base[12] = 1.0, 0.625, 1.0
    assert np.array_equal(transform_features(base, TransformPlan(), True), base)
    up = TransformPlan(dynamic_offsets=(2, 0, 0, 0))
    assert transform_features(base, up, True)[4] == 0.875
    base[4] = 0.875
    assert transform_features(base, up, True)[4] == 1.0
    assert np.array_equal(transform_features(base, up, False), base)


def test_transform_leaves_inactive_groups_and_fixed_features():
    base = np.array([0, 0.5, 0, 0, 0, 0.5, 0, 0, 0, 0.25, 0, 0, 1.5, 0.3])
    plan = TransformPlan((2, -2, 2, 2), (1.25, 0.75, 1.25, 1.25), 1.2)
    out = transform_features(base, plan, True)
    assert out[4] == 0 and out[6] == 0 and out[8] == 0
    assert out[5] == 0.25 and out[9] == 0.1875
    assert out[12] == 1.5 * 1.2
    assert out[13] == base[13] and np.array_equal(out[:4], base[:4])


@given(st.floats(0.125, 1.0), st.integers(-2, 1))
def test_transform_monotone_in_dynamic_offset(value, d):
    base = np.zeros(N_FEATURES)
    base[0], base[4] = 1.0, value
    lo = transform_features(base, TransformPlan((d, 0, 0, 0)), True)[4]
    hi = transform_features(base, TransformPlan((d + 1, 0, 0, 0)), True)[4]
    assert lo <= hi


def test_plan_grid_check():
    TransformPlan((2, 0, -2, 1), (0.75, 1.0, 1.25, 1.0), 0.9, {0}).check([0, 1])
    with pytest.raises(ValueError):
        TransformPlan((3, 0, 0, 0)).check([0])
    with pytest.raises(ValueError):
        TransformPlan(target_segments={5}).check([0])


def test_materialize_clamps_and_counts():
    score = block_score([(4, {S})], dynamics={S: DynamicLevel.FF}, articulation=1.75)
    out, sat = materialize_plan(score, TransformPlan((2, 0, 0, 0), (1.25, 1, 1, 1), 1.0, {0}))
    levels = {n.dynamic for p in out.parts for m in p.measures for n in m.notes}
    arts = {n.articulation for p in out.parts for m in p.measures for n in m.notes}
    assert levels == {DynamicLevel.FFF} and arts == {2.0}
    assert sat.dynamics == score.note_count and sat.articulation == score.note_count


def test_materialize_tempo_only_in_selected_segments():
    score = block_score([(4, {S}), (4, {B})], tempo=100)
    out = apply_plan(score, TransformPlan(tempo_scale=1.1, target_segments={1}))
    assert out.tempo_per_measure() == [100] * 4 + [110] * 4


def test_feature_vector_csv():
    v = np.array([0.1 * i for i in range(N_FEATURES)])
    line = format_feature_vector(v)
    assert np.array_equal(parse_feature_vector(line), v)
    with pytest.raises(SchemaError):
        parse_feature_vector("1,2,3")
    with pytest.raises(SchemaError):
        parse_feature_vector(",".join(["nan"] * N_FEATURES))


# -- pushforward consistency --------------------------------------------------

def homogeneous_fixtures():
    return [
        block_score([(4, {S, B}), (4, {W, P})], dynamics={S: DynamicLevel.MF, B: DynamicLevel.P,
                                                          W: DynamicLevel.MP, P: DynamicLevel.F}),
        block_score([(5, {S, W, B, P})], dynamics={S: DynamicLevel.PP, W: DynamicLevel.FF,
                                                   B: DynamicLevel.MF, P: DynamicLevel.P},
                    articulation=0.5, notes_per_measure=8, tempo=60),
        block_score([(4, {S}), (4, {S, B})], dynamics={S: DynamicLevel.FF, B: DynamicLevel.PPP},
                    articulation=1.5, notes_per_measure=2),
    ]


def sampled_plans(n=81, seed=7):
    rng = random.Random(seed)
    grid = list(itertools.product(DYNAMIC_GRID, DYNAMIC_GRID, DYNAMIC_GRID, DYNAMIC_GRID, TEMPO_GRID,
                                  ARTICULATION_GRID, ARTICULATION_GRID, ARTICULATION_GRID, ARTICULATION_GRID))
    return [TransformPlan(p[:4], p[5:], p[4]) for p in rng.sample(grid, n)]


def pushforward_gaps(score, plans, features=slice(4, 13)):
    gaps = []
    segments = segment_score(score)
    base = [featurize(score, s) for s in segments]
    for plan in plans:
        for seg in segments:
            selected = replace_targets(plan, {seg.id})
            out = apply_plan(score, selected, segments)
            got = featurize(out, segment_score(out)[seg.id])
            want = transform_features(base[seg.id], selected, True)
            gaps.append(np.abs(got[features] - want[features]))
    return np.array(gaps)


def replace_targets(plan, ids):
    return TransformPlan(plan.dynamic_offsets, plan.articulation_scales, plan.tempo_scale, frozenset(ids))


@pytest.mark.parametrize("index", range(3))
def test_pushforward_exact_on_homogeneous_fixtures(index):
    score = homogeneous_fixtures()[index]
    assert pushforward_gaps(score, sampled_plans()).max() == 0.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_pushforward_close_on_heterogeneous_fixtures(seed):
    rng = random.Random(seed)
    score = block_score([(4, {S, B}), (4, {W, P, S})], rng=rng)
    gaps = pushforward_gaps(score, sampled_plans(9, seed % 1000), slice(4, 8))
    assert gaps.max() <= 0.125


def test_pushforward_on_random_scores_is_bounded():
    rng = random.Random(3)
    for _ in range(5):
        score = random_score(rng)
        for gap in pushforward_gaps(score, sampled_plans(5, 11), slice(4, 8)):
            assert gap.max() <= 0.25
