"""``maestro`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 unreadable or malformed input,
3 domain error, 4 internal error. Payload goes to stdout (or ``--out``);
diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path


from . import __version__
from .config import CliConfig, load_config, write_config
from .diff import DeltaKind, apply_delta, diff_scores, invert_delta, parse_delta, write_delta
from .errors import DomainError, FormatError, InvalidScore, SchemaError
from .features import FEATURE_NAMES, featurize, segment_score
from .generator import GenerationConfig, generate, write_report
from .midi import export_midi
from .musicxml import import_musicxml
from .playability import validate_playability, violations_csv, write_violations
from .regression import (
    Mode,
    build_absolute_dataset,
    build_delta_dataset,
    evaluate_holdout,
    load_model,
    parse_dataset,
    predict,
    present,
    save_model,
    train,
    write_dataset,
)
from .scoreio import parse_canonical, write_canonical
from .score import validate_score
from .survey import EMOTIONS, Emotion, aggregate_all, parse_aggregates, parse_ratings_csv, write_aggregates

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_DOMAIN, EXIT_INTERNAL = range(5)


class UsageError(Exception):
    def __init__(self, message: str, usage: str = ""):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}", self.format_usage())


class _Context:
    def __init__(self, args, config: CliConfig, stdout, stderr):
        self.args = args
        self.config = config
        self.stdout = stdout
        self.stderr = stderr

    def log(self, message: str) -> None:
        print(message, file=self.stderr)

    def emit(self, payload: bytes, out=None) -> None:
        """Write a file payload to ``out`` or to stdout."""
        if out:
            Path(out).write_bytes(payload)
        else:
            self.stdout.buffer.write(payload) if hasattr(self.stdout, "buffer") else self.stdout.write(
                payload.decode("utf-8"))

    def report(self, data, text: str) -> None:
        """Machine-readable ``data`` with ``--json``, else ``text``."""
        if self.args.json:
            self.stdout.write(json.dumps(data, sort_keys=True, indent=2) + "\n")
        elif text:
            self.stdout.write(text if text.endswith("\n") else text + "\n")


def _read_score(path, check=True):
    return parse_canonical(Path(path).read_bytes(), check)


def _read_ratings(path):
    """Aggregates from a ratings CSV or a maestro-ratings/1 file."""
    data = Path(path).read_bytes()
    if data.lstrip().startswith(b"{"):
        return parse_aggregates(data)
    return aggregate_all(parse_ratings_csv(data))


# -- subcommands ---------------------------------------------------------------

def cmd_import_musicxml(ctx):
    score, warnings = import_musicxml(Path(ctx.args.input).read_bytes())
    for w in warnings:
        ctx.log(f"warning: {w}")
    payload = write_canonical(score)
    if ctx.args.out:
        ctx.emit(payload, ctx.args.out)
        ctx.report({"notes": score.note_count, "measures": score.measure_count, "parts": len(score.parts),
                    "warnings": [str(w) for w in warnings]},
                    f"imported {len(score.parts)} parts, {score.measure_count} measures, {score.note_count} notes")
    else:
        ctx.emit(payload)


def cmd_export_midi(ctx):
    Path(ctx.args.out).write_bytes(export_midi(_read_score(ctx.args.score)))


def cmd_validate(ctx):
    errors = validate_score(_read_score(ctx.args.score, check=False))
    ctx.report(
        {"valid": not errors, "errors": [
            {"code": e.code, "part_id": e.part_id, "measure_index": e.measure_index, "message": e.message}
            for e in errors]},
        "\n".join(str(e) for e in errors) if errors else "valid",
    )
    return EXIT_DOMAIN if errors else EXIT_OK


def cmd_diff(ctx):
    deltas = diff_scores(_read_score(ctx.args.original), _read_score(ctx.args.interpretation))
    ctx.emit(write_delta(deltas), ctx.args.out)
    if ctx.args.out:
        counts = {k.value: len(deltas.of_kind(k)) for k in DeltaKind}
        ctx.report(counts, ", ".join(f"{n} {k}" for k, n in counts.items()))


def cmd_apply_delta(ctx):
    deltas = parse_delta(Path(ctx.args.delta).read_bytes())
    if ctx.args.invert:
        deltas = invert_delta(deltas)
    ctx.emit(write_canonical(apply_delta(_read_score(ctx.args.score), deltas)), ctx.args.out)


def cmd_segment(ctx):
    score = _read_score(ctx.args.score)
    segments = segment_score(score)
    rows = [{"id": s.id, "movement": s.movement_index, "start_measure": s.start_measure,
             "end_measure": s.end_measure, "groups": sorted(g.label for g in s.active_groups)} for s in segments]
    text = "\n".join(
        f"{r['id']}\tmovement {r['movement']}\tmeasures {r['start_measure']}-{r['end_measure'] - 1}\t"
        f"{','.join(r['groups']) or '-'}" for r in rows)
    ctx.report(rows, text)


def cmd_featurize(ctx):
    score = _read_score(ctx.args.score)
    vectors = [(s.id, featurize(score, s)) for s in segment_score(score)]
    lines = ["segment_id," + ",".join(FEATURE_NAMES)]
    lines += [f"{sid}," + ",".join(repr(float(v)) for v in f) for sid, f in vectors]
    ctx.report([{"segment_id": sid, "features": [float(v) for v in f]} for sid, f in vectors], "\n".join(lines))


def cmd_survey_aggregate(ctx):
    aggregates = aggregate_all(parse_ratings_csv(Path(ctx.args.ratings).read_bytes()))
    ctx.emit(write_aggregates(aggregates), ctx.args.out)


def _dataset_from_args(ctx):
    args = ctx.args
    sources = [bool(getattr(args, "dataset", None)), bool(args.item), bool(args.pair)]
    if sum(sources) != 1:
        raise UsageError("give exactly one of --dataset, --item or --pair")
    if getattr(args, "dataset", None):
        return parse_dataset(Path(args.dataset).read_bytes())
    if args.item:
        return build_absolute_dataset([
            (_read_score(s), _read_ratings(r), Path(s).stem) for s, r in args.item])
    return build_delta_dataset([
        (_read_score(o), _read_score(i), _read_ratings(ro), _read_ratings(ri), Path(o).stem)
        for o, i, ro, ri in args.pair])


def cmd_build_dataset(ctx):
    ts = _dataset_from_args(ctx)
    ctx.emit(write_dataset(ts), ctx.args.out)


def cmd_train(ctx):
    ts = _dataset_from_args(ctx)
    lam = ctx.config.lam
    if ctx.args.holdout is not None:
        mae = evaluate_holdout(ts, lam, ctx.args.holdout, ctx.args.seed)
        ctx.report({e.label: float(v) for e, v in zip(EMOTIONS, mae)},
                   "holdout MAE\n" + "\n".join(f"{e.label}\t{v:.6g}" for e, v in zip(EMOTIONS, mae)))
        if not ctx.args.out:
            return
    model = train(ts, lam)
    ctx.emit(save_model(model), ctx.args.out)


def cmd_predict(ctx):
    model = load_model(Path(ctx.args.model).read_bytes())
    score = _read_score(ctx.args.score)
    rows = []
    for s in segment_score(score):
        raw = predict(model, featurize(score, s))
        shown = present(raw) if model.mode is Mode.ABSOLUTE else raw
        rows.append({"segment_id": s.id, **{e.label: float(v) for e, v in zip(EMOTIONS, shown)}})
    header = "segment_id\t" + "\t".join(e.label for e in EMOTIONS)
    text = "\n".join([header] + [
        f"{r['segment_id']}\t" + "\t".join(f"{r[e.label]:.4f}" for e in EMOTIONS) for r in rows])
    ctx.report(rows, text)


def _selection(value: str):
    if value in ("auto", "all"):
        return value
    try:
        return tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"--segments must be 'auto', 'all' or comma-separated ids, got {value!r}") from None


def cmd_generate(ctx):
    args, cfg = ctx.args, ctx.config
    try:
        target = Emotion.parse(args.target)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        config = GenerationConfig(
            target=target, eta=cfg.eta, dynamic_grid=cfg.dynamic_grid, articulation_grid=cfg.articulation_grid,
            tempo_grid=cfg.tempo_grid, selection=_selection(args.segments), workers=cfg.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    model = load_model(Path(args.model).read_bytes())
    corpus = parse_dataset(Path(args.corpus).read_bytes()) if args.corpus else None
    if corpus is not None and corpus.mode is not Mode.DELTA:
        raise SchemaError("corpus", "selection corpus must be a delta dataset")
    try:
        output, report = generate(_read_score(args.score), model, config, corpus)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ctx.emit(write_canonical(output), args.out)
    if args.report:
        Path(args.report).write_bytes(write_report(report))
    if args.out:
        plan = report.plan
        ctx.report(
            {"objective": report.objective, "identity_objective": report.identity_objective,
             "dynamic_offsets": list(plan.dynamic_offsets), "articulation_scales": list(plan.articulation_scales),
             "tempo_scale": plan.tempo_scale, "target_segments": sorted(plan.target_segments)},
            f"target {target.label}: dynamics {plan.dynamic_offsets}, articulation {plan.articulation_scales}, "
            f"tempo x{plan.tempo_scale}, segments {sorted(plan.target_segments)}, "
            f"objective {report.objective:.6g} (identity {report.identity_objective:.6g})")


def cmd_playability(ctx):
    cfg = ctx.config
    score = _read_score(ctx.args.score, check=False)
    violations = validate_playability(score, cfg.min_duration_ms, cfg.saturation_fraction)
    if ctx.args.csv:
        ctx.stdout.write(violations_csv(violations))
    elif ctx.args.json:
        ctx.emit(write_violations(violations))
    else:
        ctx.report(None, "\n".join(v.describe() for v in violations) or "no violations")
    if ctx.args.strict and violations:
        return EXIT_DOMAIN
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _add_dataset_sources(p, allow_file: bool):
    if allow_file:
        p.add_argument("--dataset", help="maestro-dataset/1 file")
    p.add_argument("--item", nargs=2, action="append", metavar=("SCORE", "RATINGS"),
                   help="score and its ratings (CSV or aggregates); absolute mode")
    p.add_argument("--pair", nargs=4, action="append",
                   metavar=("ORIGINAL", "INTERPRETATION", "ORIGINAL_RATINGS", "INTERPRETATION_RATINGS"),
                   help="original/interpretation pair with ratings; delta mode")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="machine-readable output")
    common.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS,
                        help="echo the effective configuration to stderr")
    common.add_argument("--config", default=argparse.SUPPRESS, help="maestro-config/1 file")

    parser = _Parser(prog="maestro", description="Score interpretation pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--verbose", "-v", action="store_true", help="echo the effective configuration to stderr")
    parser.add_argument("--config", help="maestro-config/1 file (default: $MAESTRO_CONFIG)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    p = add("import-musicxml", cmd_import_musicxml, "convert partwise MusicXML to a canonical score")
    p.add_argument("input")
    p.add_argument("--out", "-o")

    p = add("export-midi", cmd_export_midi, "write a Standard MIDI File")
    p.add_argument("score")
    p.add_argument("--out", "-o", required=True)

    p = add("validate", cmd_validate, "check a score's structure")
    p.add_argument("score")

    p = add("diff", cmd_diff, "delta set from an original to an interpretation")
    p.add_argument("original")
    p.add_argument("interpretation")
    p.add_argument("--out", "-o")

    p = add("apply-delta", cmd_apply_delta, "apply (or undo) a delta set")
    p.add_argument("score")
    p.add_argument("delta")
    p.add_argument("--invert", action="store_true", help="apply the inverse delta")
    p.add_argument("--out", "-o")

    p = add("segment", cmd_segment, "list segments")
    p.add_argument("score")

    p = add("featurize", cmd_featurize, "per-segment feature vectors as CSV")
    p.add_argument("score")

    p = add("survey-aggregate", cmd_survey_aggregate, "aggregate a ratings CSV")
    p.add_argument("ratings")
    p.add_argument("--out", "-o")

    p = add("build-dataset", cmd_build_dataset, "assemble a training set")
    _add_dataset_sources(p, allow_file=False)
    p.add_argument("--out", "-o")

    p = add("train", cmd_train, "fit a ridge model")
    _add_dataset_sources(p, allow_file=True)
    p.add_argument("--lambda", dest="lam", type=float, help="ridge penalty")
    p.add_argument("--holdout", type=float, metavar="FRACTION", help="report holdout error instead of fitting all rows")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o")

    p = add("predict", cmd_predict, "predicted emotion ratings per segment")
    p.add_argument("score")
    p.add_argument("--model", "-m", required=True)

    p = add("generate", cmd_generate, "search for an interpretation toward a target emotion")
    p.add_argument("--score", "-s", required=True)
    p.add_argument("--model", "-m", required=True)
    p.add_argument("--target", "-t", required=True, help="emotion name")
    p.add_argument("--out", "-o")
    p.add_argument("--report", "-r")
    p.add_argument("--eta", type=float, help="deviation penalty weight")
    p.add_argument("--segments", default="auto", help="auto, all, or comma-separated segment ids")
    p.add_argument("--corpus", help="delta dataset guiding segment selection")
    p.add_argument("--workers", type=int)

    p = add("playability", cmd_playability, "flag hard-to-play content")
    p.add_argument("score")
    p.add_argument("--csv", action="store_true", help="violations as CSV")
    p.add_argument("--strict", action="store_true", help="exit 3 when any violation is found")
    p.add_argument("--min-duration-ms", type=float)
    p.add_argument("--saturation-fraction", type=float)
    return parser


def _effective_config(args) -> CliConfig:
    config = load_config(args.config)
    config = config.override(
        lam=getattr(args, "lam", None),
        eta=getattr(args, "eta", None),
        workers=getattr(args, "workers", None),
        min_duration_ms=getattr(args, "min_duration_ms", None),
        saturation_fraction=getattr(args, "saturation_fraction", None),
    )
    if config.lam < 0 or config.eta < 0 or config.workers < 1:
        raise UsageError("--lambda and --eta must be non-negative and --workers at least 1")
    return config


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    verbose = False
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help and --version
            return EXIT_OK if not exc.code else EXIT_USAGE
        verbose = args.verbose
        config = _effective_config(args)
        if verbose:
            print(write_config(config).decode("utf-8"), end="", file=stderr)
        code = args.func(_Context(args, config, stdout, stderr))
        return EXIT_OK if code is None else code
    except UsageError as exc:
        print(f"{exc.usage}error: {exc}", file=stderr)
        return EXIT_USAGE
    except InvalidScore as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_DOMAIN
    except FormatError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_FORMAT
    except DomainError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_FORMAT
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit 4
        print(f"internal error: {exc!r}", file=stderr)
        if verbose:
            traceback.print_exc(file=stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())
