"""Segmentation, per-segment features, and transform plans.

Feature layout (14 values, canonical order)::

    0-3   activity ratio per group (Strings, Woodwinds, Brass, Percussion)
    4-7   mean dynamic level_value per group, 0 when the group is silent
    8-11  mean performed note length per group, in quarter notes / 4, capped at 1
    12    mean bpm / 120, clamped to [0, 2]
    13    notes per measure / 16, clamped to [0, 1]

A :class:`TransformPlan` shifts group dynamics, scales group articulation and
scales tempo. :func:`transform_features` predicts its effect on a feature
vector without touching the score; :func:`apply_plan` edits the score itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import SchemaError
from .score import (
    GROUPS,
    MAX_ARTICULATION,
    MAX_BPM,
    MIN_ARTICULATION,
    MIN_BPM,
    DynamicLevel,
    Score,
    active_groups,
    clamp,
    compress_tempo,
    round_half_up,
)

N_FEATURES = 14
ACTIVITY = slice(0, 4)
DYNAMICS = slice(4, 8)
LENGTHS = slice(8, 12)
TEMPO = 12
DENSITY = 13

FEATURE_NAMES = tuple(
    [f"activity_{g.name.lower()}" for g in GROUPS]
    + [f"dynamic_{g.name.lower()}" for g in GROUPS]
    + [f"length_{g.name.lower()}" for g in GROUPS]
    + ["tempo", "density"]
)

TEMPO_REFERENCE = 120.0
DENSITY_REFERENCE = 16.0
PERSISTENCE = 4
DYNAMIC_STEP = 0.125

DYNAMIC_GRID = (-2, -1, 0, 1, 2)
ARTICULATION_GRID = (0.75, 1.0, 1.25)
TEMPO_GRID = (0.8, 0.9, 1.0, 1.1, 1.2)


@dataclass(frozen=True)
class Segment:
    id: int
    movement_index: int
    start_measure: int
    end_measure: int  # exclusive
    active_groups: frozenset = frozenset()

    @property
    def measure_count(self) -> int:
        return self.end_measure - self.start_measure


def _group_sets(score: Score) -> list:
    return [active_groups(score, m) for m in range(score.measure_count)]


def segment_score(score: Score) -> list:
    """Split at movement boundaries and at persistent instrumentation changes.

    A measure starts a new segment when its set of sounding groups differs
    from the previous measure's and stays unchanged for at least
    :data:`PERSISTENCE` measures within the same movement.
    """
    n = score.measure_count
    groups = _group_sets(score)
    starts = list(score.movement_boundaries) + [n]
    segments = []
    for movement, (lo, hi) in enumerate(zip(starts, starts[1:])):
        cuts = [lo]
        for m in range(lo + 1, hi):
            if groups[m] == groups[m - 1] or m + PERSISTENCE > hi:
                continue
            if all(groups[m + k] == groups[m] for k in range(1, PERSISTENCE)):
                cuts.append(m)
        cuts.append(hi)
        for a, b in zip(cuts, cuts[1:]):
            active = frozenset().union(*groups[a:b]) if b > a else frozenset()
            segments.append(Segment(len(segments), movement, a, b, active))
    return segments


def _union_length(intervals) -> int:
    total = 0
    reach = None
    for start, end in sorted(intervals):
        if reach is None or start >= reach:
            total += end - start
            reach = end
        elif end > reach:
            total += end - reach
            reach = end
    return total


def featurize(score: Score, segment: Segment) -> np.ndarray:
    offsets = score.measure_offsets()
    lo, hi = segment.start_measure, segment.end_measure
    span = offsets[hi] - offsets[lo]
    intervals = {g: [] for g in GROUPS}
    levels = {g: [] for g in GROUPS}
    lengths = {g: [] for g in GROUPS}
    n_notes = 0
    for part in score.parts:
        for m in range(lo, hi):
            base = offsets[m]
            for note in part.measures[m].notes:
                intervals[part.group].append((base + note.onset_ticks, base + note.end_ticks))
                levels[part.group].append(note.dynamic.level_value)
                lengths[part.group].append(note.duration_ticks / score.divisions * note.articulation)
                n_notes += 1

    f = np.zeros(N_FEATURES)
    for g in GROUPS:
        if not levels[g]:
            continue
        f[g] = _union_length(intervals[g]) / span if span else 0.0
        f[4 + g] = math.fsum(levels[g]) / len(levels[g])
        f[8 + g] = min(1.0, math.fsum(lengths[g]) / len(lengths[g]) / 4)
    tempos = score.tempo_per_measure()[lo:hi]
    if tempos:
        f[TEMPO] = clamp(math.fsum(tempos) / len(tempos) / TEMPO_REFERENCE, 0.0, 2.0)
        f[DENSITY] = clamp(n_notes / len(tempos) / DENSITY_REFERENCE, 0.0, 1.0)
    return f


def featurize_all(score: Score, segments: Optional[Sequence[Segment]] = None) -> list:
    segments = segment_score(score) if segments is None else segments
    return [featurize(score, s) for s in segments]


@dataclass(frozen=True)
class TransformPlan:
    """Per-group dynamic offsets and articulation scales plus a global tempo scale.

    Group-indexed tuples follow :data:`~maestro.score.GROUPS` order.
    """

    dynamic_offsets: tuple = (0, 0, 0, 0)
    articulation_scales: tuple = (1.0, 1.0, 1.0, 1.0)
    tempo_scale: float = 1.0
    target_segments: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "dynamic_offsets", tuple(int(d) for d in self.dynamic_offsets))
        object.__setattr__(self, "articulation_scales", tuple(float(a) for a in self.articulation_scales))
        object.__setattr__(self, "tempo_scale", float(self.tempo_scale))
        object.__setattr__(self, "target_segments", frozenset(self.target_segments))
        if len(self.dynamic_offsets) != 4 or len(self.articulation_scales) != 4:
            raise ValueError("transform plans need one dynamic offset and one articulation scale per group")

    @property
    def is_identity(self) -> bool:
        return (
            all(d == 0 for d in self.dynamic_offsets)
            and all(a == 1.0 for a in self.articulation_scales)
            and self.tempo_scale == 1.0
        )

    def check(self, segment_ids, dynamic_grid=DYNAMIC_GRID, articulation_grid=ARTICULATION_GRID,
              tempo_grid=TEMPO_GRID) -> None:
        """Raise ``ValueError`` unless every component comes from the grids."""
        if any(d not in dynamic_grid for d in self.dynamic_offsets):
            raise ValueError(f"dynamic offsets {self.dynamic_offsets} not in grid {dynamic_grid}")
        if any(a not in articulation_grid for a in self.articulation_scales):
            raise ValueError(f"articulation scales {self.articulation_scales} not in grid {articulation_grid}")
        if self.tempo_scale not in tempo_grid:
            raise ValueError(f"tempo scale {self.tempo_scale} not in grid {tempo_grid}")
        unknown = self.target_segments - set(segment_ids)
        if unknown:
            raise ValueError(f"unknown target segments {sorted(unknown)}")


def transform_features(base: np.ndarray, plan: TransformPlan, segment_in_target: bool) -> np.ndarray:
    """Closed-form effect of ``plan`` on one segment's features."""
    out = np.array(base, dtype=float)
    if not segment_in_target:
        return out
    for g in GROUPS:
        if out[g] > 0:
            out[4 + g] = clamp(out[4 + g] + plan.dynamic_offsets[g] * DYNAMIC_STEP, DYNAMIC_STEP, 1.0)
            out[8 + g] = clamp(out[8 + g] * plan.articulation_scales[g], 0.0, 1.0)
    out[TEMPO] = clamp(out[TEMPO] * plan.tempo_scale, 0.0, 2.0)
    return out


@dataclass
class Saturations:
    dynamics: int = 0
    articulation: int = 0
    tempo: int = 0

    @property
    def total(self) -> int:
        return self.dynamics + self.articulation + self.tempo


def materialize_plan(score: Score, plan: TransformPlan, segments: Optional[Sequence[Segment]] = None):
    """Apply ``plan`` to the target segments; returns ``(score, Saturations)``."""
    segments = segment_score(score) if segments is None else segments
    selected = [s for s in segments if s.id in plan.target_segments]
    in_target = [False] * score.measure_count
    for s in selected:
        for m in range(s.start_measure, s.end_measure):
            in_target[m] = True
    sat = Saturations()
    if plan.is_identity or not selected:
        return score, sat

    parts = []
    for part in score.parts:
        delta = plan.dynamic_offsets[part.group]
        scale = plan.articulation_scales[part.group]
        if delta == 0 and scale == 1.0:
            parts.append(part)
            continue
        measures = list(part.measures)
        for m, measure in enumerate(measures):
            if not in_target[m] or not measure.notes:
                continue
            notes = []
            for note in measure.notes:
                level = int(note.dynamic) + delta
                art = note.articulation * scale
                if not 1 <= level <= 8:
                    sat.dynamics += 1
                if not MIN_ARTICULATION <= art <= MAX_ARTICULATION:
                    sat.articulation += 1
                notes.append(replace(
                    note,
                    dynamic=DynamicLevel(clamp(level, 1, 8)),
                    articulation=float(clamp(art, MIN_ARTICULATION, MAX_ARTICULATION)),
                ))
            measures[m] = replace(measure, notes=tuple(notes))
        parts.append(replace(part, measures=tuple(measures)))

    tempo_map = score.tempo_map
    if plan.tempo_scale != 1.0:
        tempo = score.tempo_per_measure()
        for m, bpm in enumerate(tempo):
            if in_target[m]:
                scaled = round_half_up(bpm * plan.tempo_scale)
                if not MIN_BPM <= scaled <= MAX_BPM:
                    sat.tempo += 1
                tempo[m] = clamp(scaled, MIN_BPM, MAX_BPM)
        tempo_map = compress_tempo(tempo)
    return replace(score, parts=tuple(parts), tempo_map=tempo_map), sat


def apply_plan(score: Score, plan: TransformPlan, segments: Optional[Sequence[Segment]] = None) -> Score:
    return materialize_plan(score, plan, segments)[0]


# -- CSV interchange ----------------------------------------------------------

def format_feature_vector(vector) -> str:
    values = [float(v) for v in vector]
    if len(values) != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} features, got {len(values)}")
    return ",".join(repr(v) for v in values)


def parse_feature_vector(line: str) -> np.ndarray:
    fields = line.strip().split(",")
    if len(fields) != N_FEATURES:
        raise SchemaError("features", f"expected {N_FEATURES} values, got {len(fields)}")
    try:
        values = [float(x) for x in fields]
    except ValueError:
        raise SchemaError("features", "non-numeric value") from None
    if not all(math.isfinite(v) for v in values):
        raise SchemaError("features", "non-finite")
    return np.array(values)
