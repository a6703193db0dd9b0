"""Emotion-targeted interpretation search.

The search space is the Cartesian grid of transform plans (per-group dynamic
offsets, per-group articulation scales, one tempo scale). Every plan is scored
in feature space with

    J = sum_i w_i * predict(transform(f_i))[target] / sum_i w_i  -  eta * penalty

where ``w_i`` is the measure count of segment ``i`` and the penalty charges
one unit per grid step away from the identity. Only the winning plan is
applied to the score.

Scores for the whole grid are computed with numpy broadcasting. Plans within
a hair of the best are then rescored by :func:`objective`, whose sums are
correctly rounded (``math.fsum``), so the winner and its reported value do not
depend on summation order or on how the grid was split across workers. Ties
go to the lexicographically smallest plan in
``(dS, dW, dB, dP, tempo, aS, aW, aB, aP)`` order, each axis ascending.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import canonical
from .errors import EmptyGrid, InvalidScore
from .features import (
    ARTICULATION_GRID,
    DYNAMIC_GRID,
    DYNAMIC_STEP,
    N_FEATURES,
    TEMPO,
    TEMPO_GRID,
    Saturations,
    Segment,
    TransformPlan,
    featurize,
    materialize_plan,
    segment_score,
    transform_features,
)
from .regression import Mode, RegressionModel, TrainingSet, predict
from .score import GROUPS, Score, validate_score
from .survey import Emotion

REPORT_VERSION = "maestro-report/1"
DEFAULT_ETA = 0.1
# penalty normalizers: one grid step of any kind costs about one unit
DYNAMIC_UNIT = 2.0
ARTICULATION_UNIT = 0.25
TEMPO_UNIT = 0.2
TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class GenerationConfig:
    target: Emotion
    eta: float = DEFAULT_ETA
    dynamic_grid: tuple = DYNAMIC_GRID
    articulation_grid: tuple = ARTICULATION_GRID
    tempo_grid: tuple = TEMPO_GRID
    selection: Union[str, tuple] = "auto"  # "auto", "all", or explicit segment ids
    workers: int = 1

    def __post_init__(self):
        for name in ("dynamic_grid", "articulation_grid", "tempo_grid"):
            grid = getattr(self, name)
            if not grid:
                raise EmptyGrid(f"{name} is empty")
            cast = int if name == "dynamic_grid" else float
            object.__setattr__(self, name, tuple(sorted({cast(v) for v in grid})))
        if 0 not in self.dynamic_grid or 1.0 not in self.articulation_grid or 1.0 not in self.tempo_grid:
            raise ValueError("every grid must contain its identity value (0, 1.0, 1.0)")
        if not self.eta >= 0 or not math.isfinite(self.eta):
            raise ValueError(f"eta must be a finite non-negative number, got {self.eta!r}")
        if not isinstance(self.selection, str):
            object.__setattr__(self, "selection", tuple(sorted(set(int(s) for s in self.selection))))
        elif self.selection not in ("auto", "all"):
            raise ValueError(f"selection must be 'auto', 'all' or a list of segment ids, got {self.selection!r}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @property
    def grid_size(self) -> int:
        return len(self.dynamic_grid) ** 4 * len(self.articulation_grid) ** 4 * len(self.tempo_grid)


@dataclass
class GenerationReport:
    target: Emotion
    eta: float
    mode: Mode
    plan: TransformPlan
    objective: float
    identity_objective: float
    predicted_before: np.ndarray
    predicted_after: np.ndarray
    segments: list
    rationale: dict
    saturations: Saturations = field(default_factory=Saturations)
    plans_evaluated: int = 0


def penalty(plan: TransformPlan) -> float:
    terms = [abs(d) / DYNAMIC_UNIT for d in plan.dynamic_offsets]
    terms += [abs(a - 1.0) / ARTICULATION_UNIT for a in plan.articulation_scales]
    terms.append(abs(plan.tempo_scale - 1.0) / TEMPO_UNIT)
    return math.fsum(terms)


def _model_input(transformed, base, mode: Mode):
    if mode is Mode.DELTA:
        return [t - b for t, b in zip(transformed, base)]
    return list(transformed)


def _predict_one(model: RegressionModel, x, target: int) -> float:
    column = model.weights[:, target]
    return math.fsum([float(column[0])] + [float(column[k + 1]) * float(x[k]) for k in range(N_FEATURES)])


def objective(model: RegressionModel, base_features: Sequence, plan: TransformPlan, target: Emotion,
              eta: float) -> float:
    """Weighted mean predicted target minus ``eta * penalty(plan)``.

    ``base_features`` lists ``(features, weight)`` per segment in segment-id
    order; item ``i`` is transformed when ``i`` is in ``plan.target_segments``.
    """
    weighted, weights = [], []
    for i, (f, w) in enumerate(base_features):
        if not w > 0:
            raise ValueError("segment weights must be positive")
        moved = transform_features(f, plan, i in plan.target_segments)
        weighted.append(float(w) * _predict_one(model, _model_input(moved, f, model.mode), int(target)))
        weights.append(float(w))
    return math.fsum(weighted) / math.fsum(weights) - eta * penalty(plan)


def select_target_segments(score: Score, segments: Sequence[Segment], model: RegressionModel, target: Emotion,
                           delta_corpus: Optional[TrainingSet] = None, features: Optional[list] = None):
    """Pick the segments a plan should edit; returns ``(ids, rationale)``.

    With a delta corpus, a segment is chosen when its nearest corpus row (by
    the corpus's original features) records a change. Without one, it is
    chosen when the group whose dynamics weigh most positively on the target
    is sounding. An empty choice falls back to every segment.
    """
    features = [featurize(score, s) for s in segments] if features is None else features
    chosen, rationale = set(), {}
    if delta_corpus is not None:
        if delta_corpus.base_features is None:
            raise ValueError("delta corpus has no base features to match segments against")
        for seg, f in zip(segments, features):
            distances = np.sqrt(np.sum((delta_corpus.base_features - f) ** 2, axis=1))
            row = int(np.argmin(distances))
            changed = bool(np.any(delta_corpus.X[row] != 0))
            rationale[seg.id] = f"corpus:nearest={row}:{'changed' if changed else 'unchanged'}"
            if changed:
                chosen.add(seg.id)
    else:
        dynamics_weights = model.weights[1 + 4:1 + 8, int(target)]
        best = int(np.argmax(dynamics_weights))
        if dynamics_weights[best] > 0:
            group = GROUPS[best]
            for seg, f in zip(segments, features):
                active = f[group] > 0
                rationale[seg.id] = f"weight:{group.label}:{'active' if active else 'silent'}"
                if active:
                    chosen.add(seg.id)
        else:
            rationale = {seg.id: "weight:none" for seg in segments}
    if not chosen:
        chosen = {seg.id for seg in segments}
        rationale = {seg.id: "fallback:all" for seg in segments}
    return frozenset(chosen), rationale


def _component_tables(model, features, weights, selected, target, config):
    """Per-axis contributions to the weighted mean prediction."""
    column = model.weights[:, int(target)]
    bias, coef = column[0], column[1:]
    share = np.asarray(weights, dtype=float) / math.fsum(weights)
    F = np.asarray(features, dtype=float)
    sel = np.asarray(selected, dtype=bool)
    delta = model.mode is Mode.DELTA

    base_inputs = np.zeros_like(F) if delta else F
    const = bias + float(share @ (base_inputs @ coef))
    # selected segments: remove the terms that plans move, then add them back per grid value
    moving = np.zeros(N_FEATURES, dtype=bool)
    moving[4:13] = True
    const -= float(share[sel] @ (base_inputs[sel][:, moving] @ coef[moving]))
    Fs, ws = F[sel], share[sel]
    offset = Fs if delta else np.zeros_like(Fs)

    dyn = np.zeros((4, len(config.dynamic_grid)))
    art = np.zeros((4, len(config.articulation_grid)))
    for g in GROUPS:
        on = Fs[:, g] > 0
        for j, d in enumerate(config.dynamic_grid):
            moved = np.where(on, np.clip(Fs[:, 4 + g] + d * DYNAMIC_STEP, DYNAMIC_STEP, 1.0), Fs[:, 4 + g])
            dyn[g, j] = coef[4 + g] * float(ws @ (moved - offset[:, 4 + g]))
        for j, a in enumerate(config.articulation_grid):
            moved = np.where(on, np.clip(Fs[:, 8 + g] * a, 0.0, 1.0), Fs[:, 8 + g])
            art[g, j] = coef[8 + g] * float(ws @ (moved - offset[:, 8 + g]))
    tempo = np.array([
        coef[TEMPO] * float(ws @ (np.clip(Fs[:, TEMPO] * t, 0.0, 2.0) - offset[:, TEMPO]))
        for t in config.tempo_grid
    ])
    return const, dyn, art, tempo


def _grid_scores(const, dyn, art, tempo, config, first_axis):
    """Objective over the grid for the given slice of the first (dS) axis.

    Axis order: dS, dW, dB, dP, tempo, aS, aW, aB, aP.
    """
    eta = config.eta
    dpen = np.array([abs(d) / DYNAMIC_UNIT for d in config.dynamic_grid])
    apen = np.array([abs(a - 1.0) / ARTICULATION_UNIT for a in config.articulation_grid])
    tpen = np.array([abs(t - 1.0) / TEMPO_UNIT for t in config.tempo_grid])
    shape = (len(first_axis),) + (len(config.dynamic_grid),) * 3 + (len(config.tempo_grid),) \
        + (len(config.articulation_grid),) * 4
    J = np.full(shape, const)
    axes = [(dyn[0][first_axis] - eta * dpen[first_axis], 0)]
    axes += [(dyn[g] - eta * dpen, g) for g in (1, 2, 3)]
    axes.append((tempo - eta * tpen, 4))
    axes += [(art[g] - eta * apen, 5 + g) for g in range(4)]
    for values, axis in axes:
        view = [1] * len(shape)
        view[axis] = len(values)
        J = J + values.reshape(view)
    return J


def _plan_at(index: tuple, config: GenerationConfig, selected_ids) -> TransformPlan:
    dS, dW, dB, dP, t, aS, aW, aB, aP = index
    return TransformPlan(
        dynamic_offsets=tuple(config.dynamic_grid[i] for i in (dS, dW, dB, dP)),
        articulation_scales=tuple(config.articulation_grid[i] for i in (aS, aW, aB, aP)),
        tempo_scale=config.tempo_grid[t],
        target_segments=frozenset(selected_ids),
    )


def search_plans(model, features, weights, selected_ids, target, config):
    """Exhaustive search; returns ``(best_plan, best_objective)``."""
    selected = [i in selected_ids for i in range(len(features))]
    tables = _component_tables(model, features, weights, selected, target, config)
    n_first = len(config.dynamic_grid)
    chunks = [list(c) for c in np.array_split(np.arange(n_first), min(config.workers, n_first)) if len(c)]
    if len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(lambda c: _grid_scores(*tables, config, c), chunks))
    else:
        parts = [_grid_scores(*tables, config, chunks[0])]
    J = np.concatenate(parts, axis=0)

    top = float(J.max())
    near = np.flatnonzero(J.ravel() >= top - TIE_TOLERANCE * max(1.0, abs(top)))
    items = list(zip(features, weights))
    best_plan, best_value = None, -math.inf
    for flat in near:  # ascending flat index == lexicographic plan order
        plan = _plan_at(np.unravel_index(flat, J.shape), config, selected_ids)
        value = objective(model, items, plan, target, config.eta)
        if value > best_value:
            best_plan, best_value = plan, value
    return best_plan, best_value


def generate(score: Score, model: RegressionModel, config: GenerationConfig,
             delta_corpus: Optional[TrainingSet] = None):
    """Return ``(interpretation, report)`` for the configured target emotion."""
    errors = validate_score(score)
    if errors:
        raise InvalidScore(errors)
    segments = segment_score(score)
    features = [featurize(score, s) for s in segments]
    weights = [s.measure_count for s in segments]

    if config.selection == "auto":
        selected, rationale = select_target_segments(score, segments, model, config.target, delta_corpus, features)
    elif config.selection == "all":
        selected = frozenset(s.id for s in segments)
        rationale = {s.id: "requested:all" for s in segments}
    else:
        unknown = set(config.selection) - {s.id for s in segments}
        if unknown:
            raise ValueError(f"unknown segment ids {sorted(unknown)}")
        selected = frozenset(config.selection)
        rationale = {s.id: "requested" if s.id in selected else "not-requested" for s in segments}

    plan, value = search_plans(model, features, weights, selected, config.target, config)
    items = list(zip(features, weights))
    identity = TransformPlan(target_segments=selected)
    output, saturations = materialize_plan(score, plan, segments)
    errors = validate_score(output)
    if errors:
        raise InvalidScore(errors)

    def mean_prediction(p):
        rows = [
            predict(model, _model_input(transform_features(f, p, s.id in p.target_segments), f, model.mode))
            for s, f in zip(segments, features)
        ]
        return np.average(np.array(rows), axis=0, weights=np.asarray(weights, dtype=float))

    report = GenerationReport(
        target=config.target,
        eta=config.eta,
        mode=model.mode,
        plan=plan,
        objective=value,
        identity_objective=objective(model, items, identity, config.target, config.eta),
        predicted_before=mean_prediction(identity),
        predicted_after=mean_prediction(plan),
        segments=segments,
        rationale=rationale,
        saturations=saturations,
        plans_evaluated=config.grid_size,
    )
    return output, report


def write_report(report: GenerationReport) -> bytes:
    plan = report.plan
    return canonical.dumps({
        "version": REPORT_VERSION,
        "target": report.target.label,
        "eta": float(report.eta),
        "mode": report.mode.value,
        "plan": {
            "dynamic_offsets": {g.label: d for g, d in zip(GROUPS, plan.dynamic_offsets)},
            "articulation_scales": {g.label: a for g, a in zip(GROUPS, plan.articulation_scales)},
            "tempo_scale": plan.tempo_scale,
            "target_segments": sorted(plan.target_segments),
        },
        "objective": float(report.objective),
        "identity_objective": float(report.identity_objective),
        "predicted_before": {e.label: float(v) for e, v in zip(Emotion, report.predicted_before)},
        "predicted_after": {e.label: float(v) for e, v in zip(Emotion, report.predicted_after)},
        "segments": [
            {
                "id": s.id,
                "movement": s.movement_index,
                "start_measure": s.start_measure,
                "end_measure": s.end_measure,
                "selected": s.id in plan.target_segments,
                "rationale": report.rationale.get(s.id, ""),
            }
            for s in report.segments
        ],
        "saturations": {
            "dynamics": report.saturations.dynamics,
            "articulation": report.saturations.articulation,
            "tempo": report.saturations.tempo,
        },
        "plans_evaluated": report.plans_evaluated,
    })
