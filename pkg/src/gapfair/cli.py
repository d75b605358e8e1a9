"""gapfair command line: prepare splits, run debiasing pipelines, replay published tables, re-render reports.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

from . import __version__, corpus
from .classifier import TrainConfig
from .corpus import SplitSpec
from .debias.pipeline import (
    SEED_SCHEME,
    FeaturizerConfig,
    PipelineConfig,
    Splits,
    Stage,
    load_splits,
)
from .errors import ConfigError, DataError, GapfairError
from .features import load_embeddings
from .metrics import compare, mean_eval
from .report import emit, emit_all, from_document, load_document, render, headline_markdown
from .report.formats import _n
from .report.replay import SHIPPED, load_fixture, replay_published_table, shipped_fixture
from .stats import DEFAULT_SEEDS, aggregate, run_seeds

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("gapfair")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2, which we reserve for data errors
        raise ConfigError(f"{self.prog}: {message}")


# -- small helpers ---------------------------------------------------------------------------


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    return h.hexdigest()


def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None


def _write_json(path: Path, obj: Any) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise ConfigError("no seeds given")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"duplicate seeds in {text!r}")
    return seeds


def parse_fractions(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(s) for s in text.split(","))
    except ValueError:
        raise ConfigError(f"--split must be three comma-separated numbers, got {text!r}") from None
    if len(parts) != 3:
        raise ConfigError(f"--split must be three comma-separated numbers, got {text!r}")
    return parts  # type: ignore[return-value]


# -- run config ------------------------------------------------------------------------------


def _build(cls, table: dict[str, Any], section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"[{section}]: unknown key(s) {sorted(unknown)}")
    try:
        return cls(**table)
    except (DataError, TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def _pipeline(table: dict[str, Any], stage_params: dict[str, Any], common: dict[str, Any], section: str) -> PipelineConfig:
    unknown = set(table) - {"name", "stages"}
    if unknown:
        raise ConfigError(f"[{section}]: unknown key(s) {sorted(unknown)}")
    kinds = table.get("stages", [])
    if not isinstance(kinds, list) or not all(isinstance(k, str) for k in kinds):
        raise ConfigError(f"[{section}]: stages must be a list of stage names")
    stages = tuple(Stage(k, dict(stage_params.get(k, {}))) for k in kinds)
    return PipelineConfig(name=str(table.get("name", "+".join(kinds) or "baseline")), stages=stages, **common)


class RunConfig:
    """Parsed ``run`` config file: data locations plus the debiased and baseline pipelines."""

    def __init__(self, text: str, base_dir: Path):
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse failure: {exc}") from None
        unknown = set(doc) - {"data", "split", "features", "train", "pipeline", "stages", "baseline"}
        if unknown:
            raise ConfigError(f"unknown config section(s) {sorted(unknown)}")
        self.text = text
        self.base_dir = base_dir
        self.data = dict(doc.get("data", {}))
        bad = set(self.data) - {"path", "train", "dev", "test", "format", "embeddings", "stopwords"}
        if bad:
            raise ConfigError(f"[data]: unknown key(s) {sorted(bad)}")
        if "path" not in self.data and not all(k in self.data for k in ("train", "dev", "test")):
            raise ConfigError("[data] needs either 'path' or all of 'train', 'dev', 'test'")

        split = dict(doc.get("split", {}))
        if "fractions" in split:
            split["fractions"] = tuple(split["fractions"])
        common = {
            "split": _build(SplitSpec, split, "split"),
            "featurizer": _build(FeaturizerConfig, dict(doc.get("features", {})), "features"),
            "train": _build(TrainConfig, dict(doc.get("train", {})), "train"),
            "stopwords": bool(self.data.get("stopwords", True)),
        }
        stage_params = dict(doc.get("stages", {}))
        self.pipeline = _pipeline(dict(doc.get("pipeline", {})), stage_params, common, "pipeline")
        used = {s.kind for s in self.pipeline.stages}
        stray = set(stage_params) - used
        if stray:
            raise ConfigError(f"[stages.*] parameters given for stage(s) not in the pipeline: {sorted(stray)}")
        base = dict(doc.get("baseline", {"name": "baseline", "stages": []}))
        self.baseline = _pipeline(base, {}, common, "baseline")

    @classmethod
    def from_file(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc.strerror or exc}") from None
        return cls(text, path.resolve().parent)

    def _path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q

    def input_paths(self) -> dict[str, Path]:
        keys = ("path",) if "path" in self.data else ("train", "dev", "test")
        out = {k: self._path(self.data[k]) for k in keys}
        emb = self.data.get("embeddings")
        if isinstance(emb, str):
            out["embeddings"] = self._path(emb)
        elif isinstance(emb, dict):
            out.update({f"embeddings.{k}": self._path(v) for k, v in emb.items()})
        return out

    def load(self) -> Splits:
        fmt = self.data.get("format")
        emb = self.data.get("embeddings")
        if "path" in self.data:
            if isinstance(emb, dict):
                raise ConfigError("[data] with a single 'path' takes one embeddings file, not a table")
            ds = corpus.load_dataset(self._path(self.data["path"]), fmt)
            matrix = load_embeddings(self._path(emb), expected_rows=len(ds)) if emb else None
            return Splits.from_dataset(ds, self.pipeline.split, matrix)
        if isinstance(emb, str):
            raise ConfigError("[data] with separate splits needs [data.embeddings] train/dev/test")
        paths = {k: self._path(self.data[k]) for k in ("train", "dev", "test")}
        emb_paths = {k: self._path(v) for k, v in emb.items()} if emb else None
        return load_splits(paths, fmt, emb_paths)

    def resolved(self) -> dict[str, Any]:
        return {"pipeline": self.pipeline.describe(), "baseline": self.baseline.describe()}


# -- commands --------------------------------------------------------------------------------


def cmd_prepare(args) -> int:
    seed = args.seed if args.seed is not None else 0
    spec = SplitSpec(parse_fractions(args.split), seed=seed, stratified=not args.no_stratify)
    data = corpus.load_dataset(args.input, args.format)
    if not args.keep_stopwords:
        data = corpus.filter_dataset(data)
    parts = corpus.split(data, spec)
    out = Path(args.out_dir)
    names = ("train", "dev", "test")
    written = {}
    for name, part in zip(names, parts):
        path = out / f"{name}.jsonl"
        try:
            out.mkdir(parents=True, exist_ok=True)
            corpus.write_dataset(part, path)
        except OSError as exc:
            raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None
        written[name] = {"file": path.name, "examples": len(part), "sha256": sha256_file(path)}
        log.info("wrote %s (%d examples)", path, len(part))
    manifest = {
        "command": "prepare",
        "version": __version__,
        "input": {"path": str(Path(args.input).resolve()), "sha256": sha256_file(args.input)},
        "split": {"fractions": list(spec.fractions), "seed": spec.seed, "stratified": spec.stratified},
        "stopwords_removed": not args.keep_stopwords,
        "classes": list(data.class_names),
        "groups": list(data.group_names),
        "outputs": written,
    }
    _write_json(out / "prepare_manifest.json", manifest)
    print(f"prepared {len(data)} examples -> " + ", ".join(f"{k}={v['examples']}" for k, v in written.items()))
    return 0


def _execute(cfg: RunConfig, seeds: tuple[int, ...], out_root: Path, manifest_extra: dict[str, Any]) -> int:
    inputs = {k: sha256_file(p) for k, p in sorted(cfg.input_paths().items())}
    resolved = cfg.resolved()
    config_hash = hashlib.sha256(_canonical({"resolved": resolved, "data": cfg.data}).encode()).hexdigest()
    run_key = hashlib.sha256(_canonical([config_hash, list(seeds), inputs]).encode()).hexdigest()
    run_id = f"{cfg.pipeline.name}-{run_key[:12]}"
    run_dir = out_root / run_id

    splits = cfg.load()
    log.info("run %s: %d/%d/%d examples, seeds %s", run_id, len(splits.train), len(splits.dev), len(splits.test), seeds)
    runs = run_seeds(splits, cfg.pipeline, seeds)
    same = cfg.pipeline.describe() == cfg.baseline.describe()
    base_runs = runs if same else run_seeds(splits, cfg.baseline, seeds)

    method = cfg.pipeline.name
    before = mean_eval([r.evaluation for r in base_runs])
    after = mean_eval([r.evaluation for r in runs])
    report = compare(before, after, before.class_population, method=method)
    emit_all(report, run_dir, method)
    aggs = aggregate(runs, base_runs) if len(seeds) >= 2 else aggregate(runs)
    emit_all(aggs, run_dir, f"{method}.aggregates", method)
    _write_text(run_dir / "headline.md", headline_markdown({method: aggs}))

    manifest = {
        "command": "run",
        "version": __version__,
        "run_id": run_id,
        "config_hash": config_hash,
        "config_text": cfg.text,
        "config_dir": str(cfg.base_dir),
        "seeds": list(seeds),
        "seed_scheme": SEED_SCHEME,
        "resolved": resolved,
        "inputs": {k: {"path": str(p), "sha256": inputs[k]} for k, p in sorted(cfg.input_paths().items())},
        "runs": [r.manifest for r in runs],
        "baseline_runs": None if same else [r.manifest for r in base_runs],
        **manifest_extra,
    }
    _write_json(run_dir / "manifest.json", manifest)

    s = report.summary()
    print(f"run {run_id}: {len(seeds)} seed(s), outputs in {run_dir}")
    print(f"  accuracy {_n(s['accuracy_before'])} -> {_n(s['accuracy_after'])}")
    print(f"  GAP RMS  {_n(s['gap_rms_before'])} -> {_n(s['gap_rms_after'])}")
    print(
        f"  base satisfied {s['base_count']}/{s['classes_compared']}, advanced {s['advanced_count']}, "
        f"worsened {s['worsened_count']}/{s['classes_compared']}"
    )
    return 0


def cmd_run(args) -> int:
    out_root = Path(args.out_dir)
    if args.manifest:
        try:
            m = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read manifest {args.manifest}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.manifest}: malformed manifest ({exc.msg})") from None
        if m.get("command") != "run":
            raise DataError(f"{args.manifest} is not a run manifest")
        cfg = RunConfig(m["config_text"], Path(m["config_dir"]))
        for key, entry in m["inputs"].items():
            digest = sha256_file(entry["path"])
            if digest != entry["sha256"]:
                raise DataError(f"input {key} ({entry['path']}) changed since the manifest was written")
        if m.get("version") != __version__:
            log.warning("manifest written by gapfair %s, running %s", m.get("version"), __version__)
        return _execute(cfg, tuple(m["seeds"]), out_root, {})
    if not args.config:
        raise ConfigError("run needs --config or --manifest")
    cfg = RunConfig.from_file(args.config)
    if args.seeds:
        seeds = parse_seeds(args.seeds)
    elif args.seed is not None:
        seeds = (args.seed,)
    else:
        seeds = DEFAULT_SEEDS
    return _execute(cfg, seeds, out_root, {})


def cmd_replay(args) -> int:
    name = args.fixture
    if name in SHIPPED:
        table = shipped_fixture(name)
    else:
        table = load_fixture(name)
    result = replay_published_table(table, args.epsilon_gap, args.epsilon_harm)
    r = result.report
    n = r.n_compared
    print(f"fixture {table.method}: {len(table.rows)} classes")
    print(f"  base satisfied     {int(r.base_flags.sum())}/{n}")
    print(f"  advanced satisfied {int(r.advanced_flags.sum())}/{n}")
    print(f"  worsened GAP       {r.worsened_count}/{n} ({100 * r.worsened_gap_fraction:.0f}%)")
    print(f"  GAP RMS original   {result.gap_rms_before:.2f}")
    print(f"  GAP RMS debiased   {result.gap_rms_after:.2f}")
    if result.matches:
        print("  verdicts match every published flag")
    else:
        print(f"  {len(result.diffs)} verdict(s) differ from the published flags:")
        for d in result.diffs:
            print(f"    {d}")
    if args.emit:
        emit_all(r, Path(args.out_dir), table.method)
    return 0


def cmd_report(args) -> int:
    doc = load_document(args.input)
    obj = from_document(doc)
    text = render(obj, args.format, doc.get("method"))
    if args.output:
        emit(obj, args.format, args.output, doc.get("method"))
    else:
        sys.stdout.write(text)
    return 0


# -- entry point -----------------------------------------------------------------------------


def _globals(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--out-dir", default=argparse.SUPPRESS if suppress else "gapfair-out", help="output directory")
    parser.add_argument("--seed", type=int, default=d, help="single seed")
    parser.add_argument("--seeds", default=d, help="comma-separated run seeds")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gapfair", description="Group TPR-gap evaluation of debiasing methods.")
    parser.add_argument("--version", action="version", version=f"gapfair {__version__}")
    _globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("prepare", help="filter stopwords and write train/dev/test splits")
    _globals(p, suppress=True)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.add_argument("--split", default="0.8,0.1,0.1", help="train,dev,test fractions")
    p.add_argument("--keep-stopwords", action="store_true")
    p.add_argument("--no-stratify", action="store_true")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("run", help="run a baseline and a debiased pipeline across seeds")
    _globals(p, suppress=True)
    p.add_argument("--config")
    p.add_argument("--manifest", help="re-run exactly what a previous run manifest records")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="judge a published per-class table")
    _globals(p, suppress=True)
    p.add_argument("--fixture", required=True, help=f"shipped name ({', '.join(SHIPPED)}) or CSV path")
    p.add_argument("--epsilon-gap", type=float, default=0.0)
    p.add_argument("--epsilon-harm", type=float, default=0.0)
    p.add_argument("--emit", action="store_true", help="also write the comparison report to --out-dir")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="re-render a saved json/csv report")
    _globals(p, suppress=True)
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="markdown", choices=("json", "csv", "markdown", "svg_bars"))
    p.add_argument("--output")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        return args.func(args)
    except GapfairError as exc:
        print(f"gapfair: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
