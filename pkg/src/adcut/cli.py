"""Command-line entry point wiring the pipeline stages together.

Subcommands: validate, plan, build-dataset, generate, evaluate, align.
Exit codes are uniform: 0 success, 1 domain violation, 2 usage or parse
error. Every randomized subcommand takes an explicit --seed and, with mock
endpoints, is bit-deterministic across runs and worker counts.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import backends as be
from . import dataset as ds
from . import metrics as mx
from .clips import ClipMeta, ClipSet
from .draft import Draft, DraftSyntaxError, SchemaError, parse_draft, validate_draft
from .jsonutil import dumps_canonical
from .sampling import CeilingUnsatisfiable, PresetError, parse_preset, plan_request
from .taxonomy import TagTaxonomy, default_taxonomy
from .timeline import (
    AlignmentError,
    AssetCatalog,
    TtsRealization,
    align_draft,
    check_alignment,
    match_decorations,
    serialize_plan,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2

ENDPOINT_ROLES = ("generate", "judge", "embed", "asr", "ocr", "shots", "caption")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


class Config:
    """Flat key/value config with sections; flags override file values."""

    def __init__(self, path: str | None):
        self.parser = configparser.ConfigParser()
        self.base_dir = Path(".")
        if path:
            if not Path(path).is_file():
                raise CliError(f"config file not found: {path}")
            self.parser.read(path, encoding="utf-8")
            self.base_dir = Path(path).resolve().parent

    def get(self, section: str, key: str, fallback: str | None = None) -> str | None:
        return self.parser.get(section, key, fallback=fallback)

    def path(self, section: str, key: str) -> Path | None:
        value = self.get(section, key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p


def _load_config(args: argparse.Namespace) -> Config:
    path = getattr(args, "config", None) or os.environ.get("ADCUT_CONFIG")
    return Config(path)


def _seed(args: argparse.Namespace, cfg: Config) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    value = cfg.get("dataset", "seed")
    if value is not None:
        return int(value)
    if os.environ.get("ADCUT_CI"):
        raise CliError("--seed is required in CI mode")
    return 0


def _taxonomy(args: argparse.Namespace, cfg: Config) -> TagTaxonomy:
    path = getattr(args, "taxonomy", None) or cfg.path("paths", "taxonomy")
    if path:
        return TagTaxonomy.load(path)
    return default_taxonomy()


def _endpoint_value(args: argparse.Namespace, cfg: Config, role: str) -> str | None:
    flag = getattr(args, f"endpoint_{role}", None)
    return flag or cfg.get("endpoints", role)


def _real_client(role: str, url: str, cfg: Config) -> be.Client:
    token_env = cfg.get("auth", role)
    endpoint = be.BackendEndpoint(base_url=url, auth_env=token_env)
    return be.Client(role, endpoint)


def _load_fixtures(cfg: Config) -> dict:
    path = cfg.path("paths", "fixtures")
    if path is None or not path.is_file():
        raise CliError("mock endpoints need a fixtures file ([paths] fixtures in config)")
    return json.loads(path.read_text("utf-8"))


def _read_draft(path: str) -> Draft:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read draft: {exc}") from exc
    try:
        return parse_draft(data)
    except (DraftSyntaxError, SchemaError) as exc:
        raise CliError(f"draft does not parse: {exc}") from exc


def _read_clips(path: str) -> ClipSet:
    try:
        return ClipSet.load(path)
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(f"cannot load clip set: {exc}") from exc


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    draft = _read_draft(args.draft)
    clips = _read_clips(args.clips) if args.clips else None
    report = validate_draft(draft, clips, _taxonomy(args, cfg))
    if args.format == "table":
        if report.ok:
            _emit("ok: no violations", args.out)
        else:
            rows = [f"{v.rule:<22} {v.path:<40} {v.message}" for v in report.violations]
            _emit("\n".join(rows), args.out)
    else:
        _emit(dumps_canonical(report.to_dict()).decode("utf-8"), args.out)
    return EXIT_OK if report.ok else EXIT_VIOLATION


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    preset_text = args.preset or cfg.get("sampling", "preset")
    if not preset_text:
        raise CliError("a --preset such as fast:2/4,slow:0.5/16 is required")
    try:
        preset = parse_preset(preset_text)
    except (PresetError, ValueError) as exc:
        raise CliError(f"bad preset: {exc}") from exc
    clips = _read_clips(args.clips)
    if len(clips) == 0:
        raise CliError("clip set is empty")
    try:
        plan = plan_request(clips, preset)
    except CeilingUnsatisfiable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    if args.format == "table":
        lines = [
            f"clip {c.index:>4}: fast {len(c.fast.frame_indices):>4} frames / {c.fast.tokens:>6} tokens"
            f"   slow {len(c.slow.frame_indices):>4} frames / {c.slow.tokens:>6} tokens"
            for c in plan.clips
        ]
        lines.append(
            f"totals: fast {plan.total_fast_frames} frames / {plan.total_fast_tokens} tokens, "
            f"slow {plan.total_slow_frames} frames / {plan.total_slow_tokens} tokens "
            f"(effective fast fps {plan.effective_fast_fps}, reduction x{plan.reduction_factor})"
        )
        _emit("\n".join(lines), args.out)
    else:
        _emit(dumps_canonical(plan.to_dict()).decode("utf-8"), args.out)
    return EXIT_OK


def _mock_backend_set_for_build(cfg: Config, seed: int) -> be.BackendSet:
    return be.mock_backend_set(seed, _load_fixtures(cfg))


def _backends_for_build(args: argparse.Namespace, cfg: Config, seed: int) -> be.BackendSet:
    values = {role: _endpoint_value(args, cfg, role) or "mock:" for role in ENDPOINT_ROLES}
    if all(v.startswith("mock") for v in values.values()):
        return _mock_backend_set_for_build(cfg, seed)
    clients = {}
    mock_set: be.BackendSet | None = None
    for role, value in values.items():
        if value.startswith("mock"):
            if mock_set is None:
                mock_set = _mock_backend_set_for_build(cfg, seed)
            clients[role] = mock_set.client(role)
        else:
            clients[role] = _real_client(role, value, cfg)
    return be.BackendSet(**clients)


def cmd_build_dataset(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    out = args.out or cfg.get("dataset", "out")
    if not out:
        raise CliError("an output path is required (--out or [dataset] out)")

    videos_value = cfg.get("dataset", "videos")
    fixtures = _load_fixtures(cfg)
    video_refs = (
        [v.strip() for v in videos_value.split(",") if v.strip()]
        if videos_value
        else list(fixtures.get("videos", {}))
    )
    if not video_refs:
        raise CliError("no source videos configured")

    template_path = cfg.path("paths", "template")
    if cfg.get("paths", "template") and (template_path is None or not template_path.is_file()):
        raise CliError(f"template file not found: {cfg.get('paths', 'template')}")
    template = ds.load_instruction_template(template_path)

    pool_entries = fixtures.get("negative_pool", [])
    negative_pool = ClipSet(
        ClipMeta(
            index=e["index"],
            duration_s=e["duration_ms"] / 1000.0,
            frame_count=max(1, round(e["duration_ms"] / 1000.0 * ds.ASSUMED_NATIVE_FPS)),
        )
        for e in pool_entries
    )

    dropout = float(args.dropout_p if args.dropout_p is not None else cfg.get("dataset", "dropout_p", str(ds.DEFAULT_DROPOUT_P)))
    preset_text = args.preset or cfg.get("sampling", "preset") or ds.DEFAULT_SAMPLING_PRESET
    sampling = parse_preset(preset_text)
    backend_set = _backends_for_build(args, cfg, seed)
    concurrency = args.concurrency or int(cfg.get("dataset", "concurrency", "1"))

    def build(ref: str) -> ds.DatasetSample:
        video = fixtures.get("videos", {}).get(ref, {})
        product_data = video.get("product")
        if not product_data:
            raise CliError(f"fixtures lack product info for video {ref!r}")
        product = ds.ProductInfo(
            name=product_data["name"],
            brand=product_data.get("brand", ""),
            price=product_data.get("price", ""),
            selling_points=tuple(product_data.get("selling_points", ())),
        )
        return ds.build_sample(
            ref,
            product,
            backend_set,
            negative_pool,
            corpus_seed=seed,
            dropout_p=dropout,
            sampling=sampling,
            template=template,
        )

    failures: list[tuple[str, str]] = []

    def build_safe(ref: str) -> ds.DatasetSample | None:
        try:
            return build(ref)
        except (be.BackendError, ds.EmptyDeconstruction, ds.RevisionInvalid) as exc:
            failures.append((ref, str(exc)))
            return None

    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            results = list(pool.map(build_safe, video_refs))
    else:
        results = [build_safe(ref) for ref in video_refs]

    samples = [s for s in results if s is not None]
    ds.write_corpus(samples, out)
    for ref, message in failures:
        print(f"warning: {ref}: {message}", file=sys.stderr)
    if failures:
        print(f"partial corpus: {len(samples)}/{len(video_refs)} videos", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _parse_mock_generate(value: str, seed: int, samples: list[ds.DatasetSample]) -> be.Client:
    # mock endpoint forms: mock:  mock:perfect  mock:swap_adjacent[:rate] ...
    parts = value.split(":")
    mode = parts[1] if len(parts) > 1 and parts[1] else "none"
    if mode == "perfect":
        mode = "none"
    rate = float(parts[2]) if len(parts) > 2 else 1.0
    fixtures = {
        "drafts": {s.sample_id: ds.draft_to_dict(s.ground_truth) for s in samples},
        "negatives": {s.sample_id: list(s.negatives) for s in samples},
        "corruption": {"mode": mode, "rate": rate},
    }
    transport = be.mock_backend(seed, fixtures)
    return be.Client("generate", be.MOCK_ENDPOINT, transport=transport)


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    samples = ds.read_corpus(args.corpus)
    if not samples:
        raise CliError("corpus is empty")
    endpoint_value = _endpoint_value(args, cfg, "generate")
    if not endpoint_value:
        raise CliError("--endpoint-generate is required")
    if endpoint_value.startswith("mock"):
        client = _parse_mock_generate(endpoint_value, seed, samples)
    else:
        client = _real_client("generate", endpoint_value, cfg)

    done: set[str] = set()
    out_path = Path(args.out)
    if args.resume and out_path.is_file():
        with open(out_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    done.add(json.loads(line)["sample_id"])

    todo = [s for s in samples if s.sample_id not in done]
    concurrency = args.concurrency or 1

    def generate_one(sample: ds.DatasetSample) -> bytes:
        response = be.generate_draft({"sample_id": sample.sample_id, "instruction": sample.instruction}, client)
        return dumps_canonical(
            {"sample_id": sample.sample_id, "draft_json": response.draft_json.decode("utf-8")}
        )

    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            lines = list(pool.map(generate_one, todo))
    else:
        lines = [generate_one(s) for s in todo]

    mode = "ab" if args.resume and out_path.is_file() else "wb"
    with open(out_path, mode) as fh:
        for line in lines:
            fh.write(line)
            fh.write(b"\n")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    corpus = ds.read_corpus(args.corpus)
    if not corpus:
        raise CliError("corpus is empty")

    predictions: dict[str, str] = {}
    with open(args.predictions, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                entry = json.loads(line)
                predictions[entry["sample_id"]] = entry["draft_json"]

    corpus_ids = [s.sample_id for s in corpus]
    orphan_predictions = sorted(set(predictions) - set(corpus_ids))
    missing_predictions = sorted(set(corpus_ids) - set(predictions))
    if orphan_predictions or missing_predictions:
        for sid in orphan_predictions:
            print(f"orphan prediction: {sid}", file=sys.stderr)
        for sid in missing_predictions:
            print(f"missing prediction: {sid}", file=sys.stderr)
        return EXIT_VIOLATION

    eval_samples = []
    for sample in corpus:
        try:
            predicted = parse_draft(predictions[sample.sample_id])
        except (DraftSyntaxError, SchemaError):
            predicted = None
        frames: tuple[str, ...] = ()
        if args.with_vsr:
            # frame references as (clip index, frame index, timestamp) strings
            frames = tuple(
                f"frame:{n.index}:0:{n.target_start}" for n in sample.ground_truth.video_nodes_track
            )
        eval_samples.append(
            mx.EvalSample(
                sample_id=sample.sample_id,
                ground_truth=sample.ground_truth,
                predicted=predicted,
                negatives=frozenset(sample.negatives),
                frames=frames,
            )
        )

    judge = None
    if args.with_judge:
        value = _endpoint_value(args, cfg, "judge") or "mock:"
        if value.startswith("mock"):
            judge = be.mock_backend_set(seed, _maybe_fixtures(cfg)).judge
        else:
            judge = _real_client("judge", value, cfg)
    embedder = None
    if args.with_vsr:
        value = _endpoint_value(args, cfg, "embed") or "mock:"
        if value.startswith("mock"):
            embedder = be.mock_backend_set(seed, _maybe_fixtures(cfg)).embed
        else:
            embedder = _real_client("embed", value, cfg)

    report = mx.evaluate_corpus(eval_samples, _taxonomy(args, cfg), judge=judge, embedder=embedder)
    if args.format == "table":
        _emit(mx.render_table(report), args.out)
    else:
        _emit(dumps_canonical(report.to_dict()).decode("utf-8"), args.out)
    return EXIT_OK


def _maybe_fixtures(cfg: Config) -> dict:
    path = cfg.path("paths", "fixtures")
    if path is not None and path.is_file():
        return json.loads(path.read_text("utf-8"))
    return {}


def cmd_align(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    draft = _read_draft(args.draft)
    clips = _read_clips(args.clips)
    try:
        tts = TtsRealization.load(args.tts)
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(f"cannot load TTS realization: {exc}") from exc

    taxonomy = _taxonomy(args, cfg)
    report = validate_draft(draft, clips, taxonomy)
    if not report.ok:
        for v in report.violations:
            print(f"invalid draft: {v.rule} at {v.path}: {v.message}", file=sys.stderr)
        return EXIT_VIOLATION

    try:
        plan = align_draft(draft, tts, clips)
        if args.catalog:
            catalog = AssetCatalog.load(args.catalog, taxonomy)
            plan = plan.with_assets(match_decorations(draft, catalog, rng_seed=_seed(args, cfg)))
            check = check_alignment(plan, catalog)
        else:
            check = check_alignment(plan)
    except AlignmentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    if not check.ok:
        for v in check.violations:
            print(f"plan violation: {v.rule} at {v.path}: {v.message}", file=sys.stderr)
        return EXIT_VIOLATION
    _emit(serialize_plan(plan).decode("utf-8"), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file (or env ADCUT_CONFIG)")
    parser.add_argument("--seed", type=int, help="seed for all randomized behavior")
    parser.add_argument("--format", choices=("json", "table"), default="json")
    parser.add_argument("--concurrency", type=int, help="worker pool size")
    parser.add_argument("--out", help="write output to a file instead of stdout")
    parser.add_argument("--taxonomy", help="tag taxonomy JSON (default: bundled)")
    for role in ENDPOINT_ROLES:
        parser.add_argument(f"--endpoint-{role}", dest=f"endpoint_{role}", help=f"{role} backend URL or mock:")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adcut", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a draft JSON file")
    p.add_argument("draft")
    p.add_argument("--clips", help="clip set JSON for bound checks")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", help="plan slow-fast frame sampling for a clip set")
    p.add_argument("clips")
    p.add_argument("--preset", help="e.g. fast:2/4,slow:0.5/16")
    _add_common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("build-dataset", help="build an instruction corpus from source videos")
    p.add_argument("--dropout-p", dest="dropout_p", type=float, help="dimension dropout probability")
    p.add_argument("--preset", help="sampling preset for frame placeholders")
    _add_common(p)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("generate", help="request drafts for every corpus sample")
    p.add_argument("corpus")
    p.add_argument("--resume", action="store_true", help="skip sample ids already in the output")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score predictions against a corpus")
    p.add_argument("corpus")
    p.add_argument("predictions")
    p.add_argument("--with-judge", dest="with_judge", action="store_true")
    p.add_argument("--with-vsr", dest="with_vsr", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("align", help="align a draft with realized TTS durations")
    p.add_argument("draft")
    p.add_argument("tts")
    p.add_argument("clips")
    p.add_argument("--catalog", help="asset catalog JSON for decoration matching")
    _add_common(p)
    p.set_defaults(func=cmd_align)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except be.BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
