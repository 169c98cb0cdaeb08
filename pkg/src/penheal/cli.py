"""Command-line entry point.

Wires config, backends, the pentest and remediation engines, scoring and
artifact persistence. ``run`` executes the whole pipeline; ``pentest`` and
``remediate`` run one stage; ``score`` re-scores artifacts; ``ingest``
builds a knowledge-base index; ``replay`` verifies a recorded transcript.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Optional

from . import engine, gateway as gw, knowledge, remediation, scoring, simulator
from .backends import ShellBackend
from .model import (
    AggregationMode,
    ArtifactParseError,
    RunConfig,
    Vulnerability,
    deserialize_run,
    serialize_run,
)
from .nvd import FixtureNvdClient, LiveNvdClient

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2

_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


class ConfigError(Exception):
    pass


def _interpolate_env(value):
    """Expand ${VAR} references (intended for secrets) in config strings."""
    if isinstance(value, str):
        def repl(match):
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"environment variable {name} is not set")
            return os.environ[name]
        return _ENV_REF.sub(repl, value)
    if isinstance(value, dict):
        return {k: _interpolate_env(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate_env(v) for v in value]
    return value


def load_config(path: Optional[str], overrides: dict) -> dict:
    doc: dict = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
        doc = _interpolate_env(doc)
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    return doc


def _run_config_from(doc: dict) -> RunConfig:
    try:
        config = RunConfig.from_dict(doc)
        config.validate()
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}")
    return config


def bundled_fixture_path(name: str) -> Path:
    with resources.as_file(
        resources.files("penheal.data").joinpath(f"fixtures/{name}")
    ) as path:
        return Path(path)


def _resolve_fixtures(spec: Optional[str]) -> Path:
    if not spec or spec == "builtin":
        return bundled_fixture_path("golden6.jsonl")
    path = Path(spec)
    if path.is_dir():
        path = path / "transcript.jsonl"
    if not path.exists():
        raise ConfigError(f"fixtures transcript not found: {path}")
    return path


def _build_knowledge_base(kb_dir: Optional[str]) -> knowledge.KnowledgeBase:
    if kb_dir:
        return knowledge.KnowledgeBase.load(kb_dir)
    kb = knowledge.KnowledgeBase()
    corpus = resources.files("penheal.data").joinpath("corpus/pentest_notes.txt")
    kb.ingest(corpus.read_text(encoding="utf-8"), doc_id="pentest_notes")
    return kb


def _load_truth(path: Optional[str]) -> list[Vulnerability]:
    if not path:
        return simulator.ground_truth()
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [Vulnerability.from_dict(v) for v in doc]


def _deterministic_run_id(*parts: str) -> str:
    return hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Pipeline assembly
# ---------------------------------------------------------------------------


def _build_pipeline(doc: dict, out_dir: Path):
    """Build (gateway, executor backend, kb, nvd client, transcript_ref)."""
    mode = doc.get("mode", "hermetic")
    role_models = doc.get("role_models") or {}
    if mode == "hermetic":
        fixtures = _resolve_fixtures(doc.get("fixtures"))
        gateway = gw.replay_mode(fixtures, role_models=role_models)
        host_path = doc.get("host_model")
        host = simulator.load_host_model(host_path) if host_path else simulator.load_host_model()
        backend = simulator.SimulatorBackend(host)
        nvd_client = FixtureNvdClient(doc.get("nvd", {}).get("fixture_dir"))
        transcript_ref = str(fixtures)
    elif mode == "live":
        llm = doc.get("llm") or {}
        base_url = llm.get("base_url")
        if not base_url:
            raise ConfigError("live mode requires llm.base_url")
        live = gw.LiveBackend(base_url, api_key=llm.get("api_key"))
        record_path = out_dir / "transcript.jsonl"
        gateway = gw.record_mode(live, record_path, role_models=role_models)
        backend = ShellBackend()
        nvd_doc = doc.get("nvd") or {}
        if nvd_doc.get("mode", "live") == "fixture":
            nvd_client = FixtureNvdClient(nvd_doc.get("fixture_dir"))
        else:
            nvd_client = LiveNvdClient(
                cache_dir=nvd_doc.get("cache_dir", out_dir / "nvd-cache"),
                base_url=nvd_doc.get("base_url", "https://services.nvd.nist.gov/rest/json/cves/2.0"),
            )
        transcript_ref = str(record_path)
    else:
        raise ConfigError(f"unknown mode {mode!r} (expected hermetic or live)")
    kb = _build_knowledge_base(doc.get("kb_dir"))
    return gateway, backend, kb, nvd_client, transcript_ref


def _persist_history(history: engine.PentestHistory, out_dir: Path) -> None:
    with open(out_dir / "history.jsonl", "w", encoding="utf-8") as fh:
        for record in history.records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    doc = load_config(args.config, _overrides(args))
    config = _run_config_from(doc)
    out_dir = Path(doc.get("out_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    gateway, backend, kb, nvd_client, transcript_ref = _build_pipeline(doc, out_dir)

    try:
        pentest = engine.run_pentest(config, backend, gateway, kb)
    except engine.BackendUnreachableError as exc:
        if exc.history is not None:
            _persist_history(exc.history, out_dir)
        print(f"fatal: command backend unreachable: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (engine.EngineError, gw.GatewayError) as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL

    try:
        rem = remediation.remediate(pentest.findings, config, gateway, nvd_client)
    except (remediation.RemediationError, gw.GatewayError) as exc:
        print(f"fatal: remediation failed: {exc}", file=sys.stderr)
        return EXIT_FATAL

    truth = _load_truth(doc.get("truth"))
    report = scoring.score_run(
        pentest.findings,
        truth,
        rem.selected,
        mode=config.aggregation_mode,
        run_id=_deterministic_run_id(config.target_address, doc.get("mode", "hermetic")),
    )

    _persist_history(pentest.history, out_dir)
    all_recommendations = [c for g in rem.groups for c in g.candidates]
    artifact = serialize_run(
        pentest.plan,
        pentest.findings,
        all_recommendations,
        report,
        run_id=report.run_id,
        transcript_ref=transcript_ref,
        created_at=time.strftime("%Y-%m-%dT%H:%M:%S"),
    )
    (out_dir / "run-artifact.json").write_bytes(artifact)

    text_report = "\n".join(
        [
            f"run {report.run_id} against {config.target_address}",
            f"termination: {pentest.termination_reason}",
            f"findings: {len(pentest.findings)}",
            "",
            remediation.format_selection_report(rem.groups),
            "",
            scoring.format_score_table(report, config.aggregation_mode),
        ]
    )
    (out_dir / "report.txt").write_text(text_report + "\n", encoding="utf-8")
    print(text_report)

    warnings = pentest.warnings + rem.warnings
    if warnings:
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_pentest(args) -> int:
    doc = load_config(args.config, _overrides(args))
    config = _run_config_from(doc)
    out_dir = Path(doc.get("out_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    gateway, backend, kb, _, transcript_ref = _build_pipeline(doc, out_dir)
    try:
        pentest = engine.run_pentest(config, backend, gateway, kb)
    except (engine.EngineError, gw.GatewayError) as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL
    _persist_history(pentest.history, out_dir)
    artifact = serialize_run(
        pentest.plan,
        pentest.findings,
        [],
        None,
        run_id=_deterministic_run_id(config.target_address, "pentest"),
        transcript_ref=transcript_ref,
        created_at=time.strftime("%Y-%m-%dT%H:%M:%S"),
    )
    (out_dir / "run-artifact.json").write_bytes(artifact)
    print(f"findings: {len(pentest.findings)} (termination: {pentest.termination_reason})")
    for v in pentest.findings:
        print(f"  {v.key_str}")
    return EXIT_PARTIAL if pentest.warnings else EXIT_OK


def cmd_remediate(args) -> int:
    doc = load_config(args.config, _overrides(args))
    config = _run_config_from(doc)
    out_dir = Path(doc.get("out_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        plan, findings, _, _ = deserialize_run(Path(args.artifact).read_bytes())
    except (OSError, ArtifactParseError) as exc:
        print(f"fatal: cannot read artifact: {exc}", file=sys.stderr)
        return EXIT_FATAL
    gateway, _, _, nvd_client, transcript_ref = _build_pipeline(doc, out_dir)
    try:
        rem = remediation.remediate(findings, config, gateway, nvd_client)
    except (remediation.RemediationError, gw.GatewayError) as exc:
        print(f"fatal: remediation failed: {exc}", file=sys.stderr)
        return EXIT_FATAL
    truth = _load_truth(doc.get("truth"))
    report = scoring.score_run(
        findings, truth, rem.selected, mode=config.aggregation_mode,
        run_id=_deterministic_run_id(config.target_address, "remediate"),
    )
    all_recommendations = [c for g in rem.groups for c in g.candidates]
    artifact = serialize_run(
        plan, findings, all_recommendations, report,
        run_id=report.run_id,
        transcript_ref=transcript_ref,
        created_at=time.strftime("%Y-%m-%dT%H:%M:%S"),
    )
    (out_dir / "run-artifact.json").write_bytes(artifact)
    print(remediation.format_selection_report(rem.groups))
    print()
    print(scoring.format_score_table(report, config.aggregation_mode))
    return EXIT_PARTIAL if rem.warnings else EXIT_OK


def cmd_score(args) -> int:
    mode = AggregationMode.SUM if args.aggregation == "sum" else AggregationMode.DIVIDED_BY_THREE
    try:
        truth = _load_truth(args.truth)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"fatal: cannot read ground truth: {exc}", file=sys.stderr)
        return EXIT_FATAL

    reports = []
    for path in args.artifacts:
        try:
            _, findings, recommendations, _ = deserialize_run(Path(path).read_bytes())
        except (OSError, ArtifactParseError) as exc:
            print(f"fatal: artifact {path}: {exc}", file=sys.stderr)
            return EXIT_FATAL
        selected = [r for r in recommendations if r.status.value == "adopted"]
        reports.append(scoring.score_run(findings, truth, selected, mode=mode, run_id=path))

    if args.repeat_mean and len(reports) > 1:
        n = len(reports)
        print(f"mean over {n} runs:")
        print(f"  S_D       = {sum(r.s_d for r in reports) / n:.4f}")
        print(f"  S_R       = {sum(r.s_r for r in reports) / n:.4f}")
        print(f"  C         = {sum(r.c for r in reports) / n:.4f}")
        print(f"  S_overall = {sum(r.s_overall for r in reports) / n:.4f}")
    else:
        for report in reports:
            print(scoring.format_score_table(report, mode))
    return EXIT_OK


def cmd_ingest(args) -> int:
    kb_dir = Path(args.kb)
    if (kb_dir / "meta.json").exists():
        kb = knowledge.KnowledgeBase.load(kb_dir)
    else:
        kb = knowledge.KnowledgeBase()
    total = 0
    for path in args.paths:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            print(f"fatal: cannot read {path}: {exc}", file=sys.stderr)
            return EXIT_FATAL
        count = kb.ingest(
            text, doc_id=Path(path).stem,
            chunk_size=args.chunk_size, overlap=args.overlap,
        )
        print(f"{path}: {count} chunks")
        total += count
    kb.save(kb_dir)
    print(f"indexed {total} chunks into {kb_dir}")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        transcript = gw.Transcript.load(args.transcript)
    except (OSError, gw.GatewayError) as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL
    bad = 0
    for i, exchange in enumerate(transcript.exchanges):
        recomputed = gw.request_hash(exchange.role, list(exchange.messages))
        if recomputed != exchange.request_hash:
            print(
                f"line {i + 1}: hash mismatch ({exchange.role.value}): "
                f"recorded {exchange.request_hash[:12]} != recomputed {recomputed[:12]}",
                file=sys.stderr,
            )
            bad += 1
    if bad:
        print(f"transcript invalid: {bad} corrupted exchanges", file=sys.stderr)
        return EXIT_FATAL
    print(f"transcript ok: {len(transcript.exchanges)} exchanges")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _overrides(args) -> dict:
    overrides = {
        "target_address": getattr(args, "target", None),
        "budget_per_vuln": getattr(args, "budget_per_vuln", None),
        "mode": getattr(args, "mode", None),
        "fixtures": getattr(args, "fixtures", None),
        "kb_dir": getattr(args, "kb", None),
        "out_dir": getattr(args, "out", None),
        "truth": getattr(args, "truth", None),
    }
    aggregation = getattr(args, "aggregation", None)
    if aggregation:
        overrides["aggregation_mode"] = "sum" if aggregation == "sum" else "div3"
    return overrides


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--target", help="target address (overrides config)")
    parser.add_argument("--budget-per-vuln", type=float, dest="budget_per_vuln")
    parser.add_argument("--mode", choices=["live", "hermetic"])
    parser.add_argument("--fixtures", help="replay transcript file or directory")
    parser.add_argument("--kb", help="knowledge-base index directory")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--truth", help="ground-truth JSON file")
    parser.add_argument("--aggregation", choices=["div3", "sum"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="penheal",
        description="Automated pentest orchestration and budget-optimal remediation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="full pipeline: pentest, remediate, score")
    _add_pipeline_flags(run_p)
    run_p.set_defaults(func=cmd_run)

    pen_p = sub.add_parser("pentest", help="discovery stage only")
    _add_pipeline_flags(pen_p)
    pen_p.set_defaults(func=cmd_pentest)

    rem_p = sub.add_parser("remediate", help="remediation stage over an artifact")
    rem_p.add_argument("artifact", help="run artifact from the pentest stage")
    _add_pipeline_flags(rem_p)
    rem_p.set_defaults(func=cmd_remediate)

    score_p = sub.add_parser("score", help="score one or more run artifacts")
    score_p.add_argument("artifacts", nargs="+")
    score_p.add_argument("--truth", help="ground-truth JSON file (default: bundled)")
    score_p.add_argument("--aggregation", choices=["div3", "sum"], default="div3")
    score_p.add_argument("--repeat-mean", action="store_true", dest="repeat_mean")
    score_p.set_defaults(func=cmd_score)

    ingest_p = sub.add_parser("ingest", help="index documents into a knowledge base")
    ingest_p.add_argument("paths", nargs="+")
    ingest_p.add_argument("--kb", required=True, help="index directory")
    ingest_p.add_argument("--chunk-size", type=int, default=800, dest="chunk_size")
    ingest_p.add_argument("--overlap", type=int, default=200)
    ingest_p.set_defaults(func=cmd_ingest)

    replay_p = sub.add_parser("replay", help="verify a recorded transcript")
    replay_p.add_argument("transcript")
    replay_p.set_defaults(func=cmd_replay)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
