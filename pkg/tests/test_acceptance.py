"""Acceptance criteria A1 to A11, one test each, at their stated tolerances.

Each test prints a single PASS/FAIL line; the session summary repeats them.
"""
import itertools
import random
import time
from pathlib import Path

import numpy as np

from builders import B, P, S, W, block_score, corpus_scores, part, perturb, random_score, ridge_instances
from conftest import RESIDUAL_TOLERANCE, TRAININGS, record
from oracles import ridge_exact
from synthetic import generation_oracle, generation_score, solo_score, study
from maestro.diff import DeltaKind, apply_delta, diff_scores, invert_delta, parse_delta, write_delta
from maestro.errors import RangeError
from maestro.features import (
    ARTICULATION_GRID,
    DYNAMIC_GRID,
    TEMPO_GRID,
    TransformPlan,
    apply_plan,
    featurize,
    segment_score,
    transform_features,
)
from maestro.generator import GenerationConfig, generate, write_report
from maestro.midi import HEADER_PREFIX, export_midi, velocity_of
from maestro.regression import Mode, TrainingSet, load_model, predict, save_model, train
from maestro.score import DynamicLevel, Measure, Note, Score
from maestro.scoreio import parse_canonical, write_canonical
from maestro.survey import EMOTIONS, Emotion, aggregate_all, parse_ratings_csv

DATA = Path(__file__).parent / "data"


def one_measure(name, notes):
    return part("P1", name, [Measure(0, (4, 4), notes)])


def test_a1_regression_matches_exact_oracle():
    elapsed, worst = 0.0, 0.0
    instances = ridge_instances()
    for X, Y, lam in instances:
        ts = TrainingSet(Mode.ABSOLUTE, X, Y)
        start = time.perf_counter()
        W_ = train(ts, lam).weights
        elapsed += time.perf_counter() - start
        exact = np.array(ridge_exact(X, Y, lam))
        worst = max(worst, np.linalg.norm(W_ - exact) / np.linalg.norm(exact))
    record("A1", worst <= 1e-8 and elapsed < 1.0 and len(instances) == 50,
           f"50 instances, worst relative error {worst:.2e}, training time {elapsed:.3f} s")


def test_a2_normal_equations_residual():
    ts, _ = study()
    train(ts, 1e-2)
    for X, Y, lam in ridge_instances(seed=2, count=6):
        train(TrainingSet(Mode.ABSOLUTE, X, Y), lam)
    ok = all(r <= RESIDUAL_TOLERANCE * ref for r, ref in TRAININGS)
    record("A2", ok and len(TRAININGS) > 0, f"{len(TRAININGS)} trainings so far")


def test_a3_association_reproduction():
    start = time.perf_counter()
    _, model = study.__wrapped__()
    elapsed = time.perf_counter() - start
    winners, spreads = {}, {}
    for g in (S, W, B, P):
        score = solo_score(g)
        y = predict(model, featurize(score, segment_score(score)[0]))
        winners[g.label] = EMOTIONS[int(np.argmax(y))].label
        spreads[g.label] = float(np.ptp(y))
    ok = (winners["Strings"], winners["Percussion"], winners["Brass"]) == ("Sadness", "Joy", "Fear") \
        and spreads["Woodwinds"] < spreads["Strings"] and elapsed < 5.0
    record("A3", ok, f"argmax {winners}, woodwind spread {spreads['Woodwinds']:.3f} < strings "
                     f"{spreads['Strings']:.3f}, {elapsed:.2f} s")


def test_a4_generation_improves_and_is_optimal():
    _, model = study()
    score = generation_score()
    output, report = generate(score, model, GenerationConfig(Emotion.SADNESS, eta=0.1))
    best, _ = generation_oracle()

    def mean_sadness(s):
        segs = segment_score(s)
        return np.average([predict(model, featurize(s, g))[Emotion.SADNESS] for g in segs],
                          weights=[g.measure_count for g in segs])

    before, after = mean_sadness(score), mean_sadness(output)
    ok = report.plan.dynamic_offsets[0] == 2 and report.objective == best and after >= before
    record("A4", ok, f"strings offset {report.plan.dynamic_offsets[0]:+d}, J={report.objective!r} vs "
                     f"enumerated {best!r}, Sadness {before:.3f} -> {after:.3f}")


def test_a5_generation_preserves_skeleton():
    _, model = study()
    structural, runs = 0, 0
    for score in corpus_scores():
        for target in EMOTIONS:
            output, _ = generate(score, model, GenerationConfig(target, eta=0.01, selection="all"))
            structural += len(diff_scores(score, output).of_kind(DeltaKind.STRUCTURAL))
            runs += 1
    record("A5", structural == 0, f"{runs} generations over {len(corpus_scores())} scores, "
                                  f"{structural} structural deltas")


def test_a6_diff_algebra():
    failures = 0
    for seed in range(100):
        rng = random.Random(seed)
        a = random_score(rng)
        b = perturb(rng, a)
        d = diff_scores(a, b)
        ok = len(diff_scores(a, a)) == 0 and apply_delta(a, d) == b and apply_delta(b, invert_delta(d)) == a
        failures += not ok
    record("A6", failures == 0, f"100 random pairs, {failures} failures")


def test_a7_round_trips():
    corpus = sorted((DATA / "corpus").glob("*.ms1"))
    bad = 0
    for path in corpus:
        data = path.read_bytes()
        score = parse_canonical(data)
        bad += write_canonical(score) != data or parse_canonical(write_canonical(score)) != score
    _, model = study()
    model_bytes = save_model(model)
    bad += load_model(model_bytes) != model or save_model(load_model(model_bytes)) != model_bytes
    rng = random.Random(7)
    for score in corpus_scores():
        d = diff_scores(score, perturb(rng, score))
        data = write_delta(d)
        bad += parse_delta(data) != d or write_delta(parse_delta(data)) != data
    record("A7", bad == 0 and len(corpus) >= 10, f"{len(corpus)} score files, 1 model, 12 deltas, {bad} mismatches")


def test_a8_smf_golden_files():
    minimal = Score("min", (one_measure("violin", (Note(0, 480, 60),)),))
    ladder = Score("ladder", (one_measure("violin", tuple(
        Note(240 * k, 240, 60 + k, lv) for k, lv in enumerate(sorted(DynamicLevel)))),))
    goldens = {"minimal.mid": minimal, "ladder.mid": ladder}
    matches = {name: export_midi(s) == (DATA / name).read_bytes() for name, s in goldens.items()}
    header = (DATA / "minimal.mid").read_bytes()[:10] == bytes.fromhex("4D 54 68 64 00 00 00 06 00 01")
    velocities = (velocity_of(DynamicLevel.PPP), velocity_of(DynamicLevel.FFF))
    ok = all(matches.values()) and header and HEADER_PREFIX == bytes.fromhex("4D546864000000060001") \
        and velocities == (16, 127)
    record("A8", ok, f"goldens {matches}, header ok={header}, ppp/fff velocity {velocities}")


def test_a9_survey():
    aggs = aggregate_all(parse_ratings_csv((DATA / "ratings30.csv").read_bytes()))
    fixture_ok = aggs[0].mean == (5.5,) * 8 and abs(aggs[0].stddev[0] - 8.25 ** 0.5) < 1e-12 \
        and aggs[1].mean[Emotion.JOY] == aggs[1].mean[Emotion.FEAR] == 7.5 and aggs[2].majority is Emotion.SADNESS
    tie_ok = aggs[1].majority is Emotion.JOY
    try:
        parse_ratings_csv("participant_id,segment_id,emotion,rating\np1,0,joy,5\np1,0,fear,11\n")
        row = None
    except RangeError as exc:
        row = exc.row
    record("A9", fixture_ok and tie_ok and row == 3,
           f"30-rater fixture ok={fixture_ok}, tie to Joy ok={tie_ok}, rating 11 rejected at row {row}")


def test_a10_determinism_and_scale():
    _, model = study()
    sets = [{S, W}, {B, P}, {S, B}, {W, P}, {S, W, B, P}, {S}, {W, B}, {S, P}]
    score = block_score([(25, g) for g in sets], title="large", parts_per_group=3, rng=random.Random(21))
    shape = (score.measure_count, len(score.parts), len(segment_score(score)))
    runs, times = [], []
    for workers in (1, 1, 4):
        start = time.perf_counter()
        output, report = generate(score, model, GenerationConfig(Emotion.FEAR, workers=workers))
        times.append(time.perf_counter() - start)
        runs.append((write_canonical(output), write_report(report)))
    ok = shape == (200, 12, 8) and max(times) < 10.0 and runs[0] == runs[1] == runs[2]
    record("A10", ok, f"score {shape}, slowest run {max(times):.2f} s, identical bytes={runs[0] == runs[1] == runs[2]}")


def _pushforward_gaps(score, plans, lo, hi):
    segments = segment_score(score)
    base = [featurize(score, s) for s in segments]
    worst = 0.0
    for plan in plans:
        for seg in segments:
            one = TransformPlan(plan.dynamic_offsets, plan.articulation_scales, plan.tempo_scale,
                                frozenset({seg.id}))
            out = apply_plan(score, one, segments)
            got = featurize(out, segment_score(out)[seg.id])
            want = transform_features(base[seg.id], one, True)
            worst = max(worst, float(np.abs(got[lo:hi] - want[lo:hi]).max()))
    return worst


def test_a11_pushforward_consistency():
    grid = list(itertools.product(DYNAMIC_GRID, DYNAMIC_GRID, DYNAMIC_GRID, DYNAMIC_GRID, TEMPO_GRID,
                                  ARTICULATION_GRID, ARTICULATION_GRID, ARTICULATION_GRID, ARTICULATION_GRID))
    plans = [TransformPlan(p[:4], p[5:], p[4]) for p in random.Random(7).sample(grid, 81)]
    homogeneous = block_score([(4, {S, B}), (4, {W, P})], dynamics={
        S: DynamicLevel.MF, B: DynamicLevel.P, W: DynamicLevel.MP, P: DynamicLevel.F})
    exact_gap = _pushforward_gaps(homogeneous, plans, 4, 13)
    hetero_gap = max(_pushforward_gaps(block_score([(4, {S, B}), (4, {W, P, S})], rng=random.Random(seed)),
                                       plans[:9], 4, 8) for seed in range(5))
    record("A11", exact_gap == 0.0 and hetero_gap <= 0.125,
           f"homogeneous max gap {exact_gap} over 81 plans, heterogeneous max gap {hetero_gap} <= 0.125")
