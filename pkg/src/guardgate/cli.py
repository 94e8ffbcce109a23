"""Command-line entry point: JSON to stdout, logs to stderr.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Text inputs
accept "-" for stdin so the commands compose in shell pipelines.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import cascade as cascade_mod
from .config import DEFAULT_SCHEMA, AppConfig, load_config
from .core import GuardError, GuardVerdict
from .evalkit import (
    EvalReport,
    FixtureConfig,
    gen_fixture,
    gen_safety_set,
    load_bench,
    report_emit,
    save_bench,
    strict_match_f1,
)
from .rulepii import default_registry, load_registry
from .scorer import ReferenceBackend, RemoteBackend, ScorerBackend
from .servelab import load_generate
from .spanforge import run_pipeline

logger = logging.getLogger("guardgate")


def _read_text(source: str) -> str:
    if source == "-":
        return sys.stdin.read()
    with open(source, encoding="utf-8") as fh:
        return fh.read()


def _backend_from(cfg: AppConfig) -> ScorerBackend:
    if cfg.scorer_backend == "remote":
        return RemoteBackend(cfg.remote_endpoint)
    return ReferenceBackend()


def _registry_from(cfg: AppConfig, override: str | None):
    path = override or cfg.registry_path
    return load_registry(path) if path else default_registry()


def _span_dicts(spans) -> list[dict]:
    return [
        {"start": s.start, "end": s.end, "label": s.label, "score": s.score, "source": s.source}
        for s in spans
    ]


def _verdict_dict(verdict: GuardVerdict) -> dict:
    return {
        "classifications": [
            {
                "task": c.task_name,
                "distribution": dict(c.distribution),
                "predicted": c.predicted,
                "confidence": c.confidence,
            }
            for c in verdict.classifications
        ],
        "entities": _span_dicts(verdict.entities),
        "scorer_latency_ms": verdict.scorer_latency_ms,
        "truncated": verdict.truncated,
    }


def _print_json(payload) -> None:
    json.dump(payload, sys.stdout, ensure_ascii=False, indent=2)
    sys.stdout.write("\n")


def _cmd_detect(cfg: AppConfig, args) -> int:
    text = _read_text(args.source)
    backend = _backend_from(cfg)
    verdict = backend.score_batch([text], DEFAULT_SCHEMA)[0]
    spans = run_pipeline(
        text,
        list(verdict.entities),
        _registry_from(cfg, args.registry),
        cfg.label_map,
        cfg.merge_policy,
    )
    _print_json(_span_dicts(spans))
    return 0


def _cmd_classify(cfg: AppConfig, args) -> int:
    text = _read_text(args.source)
    backend = _backend_from(cfg)
    verdict = backend.score_batch([text], DEFAULT_SCHEMA)[0]
    _print_json(_verdict_dict(verdict))
    return 0


def _cmd_evaluate(cfg: AppConfig, args) -> int:
    examples = load_bench(args.bench)
    backend = _backend_from(cfg)
    registry = _registry_from(cfg, None)
    texts = [ex.text for ex in examples]
    verdicts = backend.score_batch(texts, DEFAULT_SCHEMA)
    predictions = []
    for ex, verdict in zip(examples, verdicts):
        if args.mode == "model":
            predictions.append(list(verdict.entities))
        else:
            predictions.append(
                run_pipeline(
                    ex.text, list(verdict.entities), registry, cfg.label_map, cfg.merge_policy
                )
            )
    report = strict_match_f1(examples, predictions)
    if args.out:
        report_emit(report, "json", args.out)
        logger.info("report written to %s", args.out)
    _print_json(report.to_dict())
    return 0


def _cmd_gen_bench(cfg: AppConfig, args) -> int:
    if args.fixture_config:
        with open(args.fixture_config, encoding="utf-8") as fh:
            raw = json.load(fh)
        unknown = set(raw) - {"entity_split", "domain_split", "seed"}
        if unknown:
            raise GuardError(f"unknown fixture config keys {sorted(unknown)}")
        fixture_cfg = FixtureConfig(
            entity_split=raw.get("entity_split", FixtureConfig().entity_split),
            domain_split={
                dom: (int(count), float(frac))
                for dom, (count, frac) in raw.get(
                    "domain_split", FixtureConfig().domain_split
                ).items()
            },
            seed=args.seed if args.seed is not None else int(raw.get("seed", 0)),
        )
    else:
        fixture_cfg = FixtureConfig(seed=args.seed if args.seed is not None else 0)
    examples = gen_fixture(fixture_cfg)
    save_bench(examples, args.out)
    _print_json({"path": args.out, "examples": len(examples), "seed": fixture_cfg.seed})
    return 0


def _cmd_serve(cfg: AppConfig, args) -> int:
    import uvicorn

    from .service import create_app

    addr = args.addr or cfg.addr
    host, _, port = addr.rpartition(":")
    app = create_app(cfg)
    logger.info("default schema id: %s", app.state.default_schema_id)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return 0


def _cmd_loadtest(cfg: AppConfig, args) -> int:
    endpoint = args.endpoint or f"http://{cfg.addr}"
    metrics = load_generate(
        endpoint,
        args.mode,
        target_rps=args.target_rps,
        concurrency=args.concurrency,
        duration=args.duration,
        schema_id=args.schema_id or DEFAULT_SCHEMA.schema_id,
        warmup=args.warmup,
    )
    _print_json(metrics.to_dict())
    return 0


def _cmd_cascade(cfg: AppConfig, args) -> int:
    taus = [float(t) for t in args.taus.split(",")] if args.taus else list(cascade_mod.DEFAULT_TAUS)
    if args.labels:
        examples = []
        with open(args.labels, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    record = json.loads(line)
                    examples.append((record["text"], record["label"]))
    else:
        examples = gen_safety_set(args.n, args.seed)
    stage1 = _backend_from(cfg)
    stage2 = RemoteBackend(cfg.remote_endpoint) if cfg.remote_endpoint else ReferenceBackend()
    points = cascade_mod.sweep(
        examples, DEFAULT_SCHEMA, stage1, stage2, taus, cfg.safety_task_name
    )
    sys.stdout.write(cascade_mod.trace_csv(points))
    return 0


def _cmd_golden(cfg: AppConfig, args) -> int:
    from .golden import build_suite, suite_json

    suite = build_suite()
    payload = suite_json(suite)
    if args.out == "-":
        sys.stdout.write(payload)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
        _print_json({"path": args.out, "requests": len(suite["entries"])})
    return 0


def _cmd_report(cfg: AppConfig, args) -> int:
    with open(args.input, encoding="utf-8") as fh:
        report = EvalReport.from_dict(json.load(fh))
    report_emit(report, args.format, args.out)
    _print_json({"path": args.out, "format": args.format})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guardgate", description="PII guardrail gateway")
    parser.add_argument("--config", help="path to JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run the detection pipeline on a text")
    p.add_argument("source", help="text file or - for stdin")
    p.add_argument("--registry", help="detector registry JSON override")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("classify", help="score a text and print the verdict")
    p.add_argument("source", help="text file or - for stdin")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("evaluate", help="strict span evaluation on a benchmark")
    p.add_argument("--bench", required=True, help="benchmark file path")
    p.add_argument("--mode", choices=("model", "pipeline"), default="pipeline")
    p.add_argument("--out", help="also write the report JSON here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("gen-bench", help="generate a deterministic benchmark")
    p.add_argument("--config", dest="fixture_config", help="fixture config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=_cmd_gen_bench)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--addr", help="bind address host:port")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("loadtest", help="drive a running service with load")
    p.add_argument("--mode", choices=("open", "closed"), required=True)
    p.add_argument("--target-rps", type=float, default=None)
    p.add_argument("--concurrency", type=int, default=None)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--warmup", type=float, default=2.0)
    p.add_argument("--endpoint", help="service base URL")
    p.add_argument("--schema-id", help="registered schema id to send")
    p.set_defaults(func=_cmd_loadtest)

    p = sub.add_parser("cascade", help="sweep cascade thresholds, CSV to stdout")
    p.add_argument("--taus", help="comma-separated ascending thresholds")
    p.add_argument("--labels", help="JSONL file of {text, label} pairs")
    p.add_argument("--n", type=int, default=200, help="synthetic set size")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_cascade)

    p = sub.add_parser("golden", help="emit the wire-protocol contract corpus")
    p.add_argument("--out", default="-", help="output path or - for stdout")
    p.set_defaults(func=_cmd_golden)

    p = sub.add_parser("report", help="render an evaluation report file")
    p.add_argument("--input", required=True, help="report JSON from evaluate")
    p.add_argument("--format", choices=("md", "markdown", "csv", "json"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    # root stays at WARNING so chatty dependencies (httpx logs every request
    # at INFO) do not flood loadtest output; our own logger keeps INFO
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(message)s")
    logging.getLogger("guardgate").setLevel(logging.INFO)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(cfg, args)
    except (GuardError, OSError, ValueError) as exc:
        logger.error("error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
