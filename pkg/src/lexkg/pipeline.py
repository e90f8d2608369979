"""Batch pipeline orchestration with per-stage artifacts on disk.

Each case is processed independently (a crashed case is recorded and the
run continues), all writes go to case-scoped paths, and a completed case is
skipped on re-run when the config digest and input hash still match, so a
finished run performs no new LLM calls. Run manifests are deterministic:
they carry config digests, stats and tallies, never timestamps (wall-clock
data lives in the audit log).
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import shutil
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from . import coref as coref_mod
from . import evaluation as eval_mod
from .corpus import (
    DEFAULT_OPINION_HEADINGS,
    CaseDocument,
    ChunkingConfig,
    chunk_text,
    extract_opinion,
    load_corpus,
)
from .extraction import (
    ConfigInvalid as ExtractionConfigInvalid,
    DelimiterSet,
    EntityRecord,
    ExtractionMode,
    ExtractionPromptConfig,
    RelationshipRecord,
    build_extraction_prompt,
    default_government_lexicon,
    filter_government_entities,
    load_lexicon,
    parse_extraction_output,
)
from .graph_builder import KnowledgeGraph, build_graph, export_parquet, export_tabular, import_tabular, serialize_graphml
from .llm_gateway import CompletionRequest, Gateway, RetryPolicy, ScriptedBackend, HttpBackend, load_script
from .normalize import text_sha256

ENV_BASE_URL = "LEXKG_BASE_URL"
ENV_MODEL_ID = "LEXKG_MODEL_ID"


class ConfigInvalid(Exception):
    pass


class StageMissing(Exception):
    """A stage's input artifact is absent; an earlier stage must run first."""


@dataclass
class RunConfig:
    corpus_dir: Path
    output_dir: Path
    mode: ExtractionMode
    model_id: str = "llama3.3:70b"
    base_url: str | None = None
    endpoint_path: str = "/api/chat"
    script_path: Path | None = None
    lenient_mock: bool = False
    manifest_path: Path | None = None
    chunk_size: int = 300
    chunk_overlap: int = 100
    tokenizer_id: str = "whitespace"
    type_order: tuple[coref_mod.EntityType, ...] = coref_mod.DEFAULT_TYPE_ORDER
    length_ratio_low: float = 0.7
    length_ratio_high: float = 1.3
    on_reject: coref_mod.RejectAction = coref_mod.RejectAction.RETRY_ONCE_THEN_PASSTHROUGH
    opinion_headings: tuple[str, ...] = DEFAULT_OPINION_HEADINGS
    coref_template_dir: Path | None = None
    lexicon_path: Path | None = None
    override_path: Path | None = None
    annotation_path: Path | None = None
    noise_lexicon_path: Path | None = None
    tuple_delimiter: str = "<|>"
    record_delimiter: str = "##"
    completion_delimiter: str = "<|COMPLETE|>"
    duplicate_threshold: int = 75
    workers: int = 1
    parquet: bool = False
    retry_attempts: int = 3
    retry_backoff_s: float = 1.0
    request_timeout_s: float = 120.0

    _PATH_FIELDS = (
        "corpus_dir",
        "output_dir",
        "script_path",
        "manifest_path",
        "coref_template_dir",
        "lexicon_path",
        "override_path",
        "annotation_path",
        "noise_lexicon_path",
    )

    @classmethod
    def from_file(cls, path: Path, overrides: dict[str, Any] | None = None) -> "RunConfig":
        """Load a JSON config; relative paths resolve against the config file.

        ``overrides`` (e.g. from repeated ``--set key=value`` flags) replace
        file values key-for-key. ``LEXKG_BASE_URL`` and ``LEXKG_MODEL_ID``
        override endpoint settings last.
        """
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path}: invalid JSON ({exc.msg})") from None
        if not isinstance(data, dict):
            raise ConfigInvalid(f"{path}: config root must be an object")
        if overrides:
            data.update(overrides)
        known = {f.name for f in fields(cls) if not f.name.startswith("_")}
        unknown = set(data) - known
        if unknown:
            raise ConfigInvalid(f"{path}: unknown config keys: {', '.join(sorted(unknown))}")
        if "corpus_dir" not in data or "output_dir" not in data or "mode" not in data:
            raise ConfigInvalid(f"{path}: corpus_dir, output_dir and mode are required")

        base = path.parent
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key in cls._PATH_FIELDS and value is not None:
                value = (base / value).resolve() if not Path(value).is_absolute() else Path(value)
            kwargs[key] = value
        try:
            kwargs["mode"] = ExtractionMode(str(kwargs["mode"]).lower())
            if "type_order" in kwargs:
                kwargs["type_order"] = tuple(coref_mod.EntityType(t) for t in kwargs["type_order"])
            if "on_reject" in kwargs:
                kwargs["on_reject"] = coref_mod.RejectAction(kwargs["on_reject"])
        except ValueError as exc:
            raise ConfigInvalid(f"{path}: {exc}") from None
        if "opinion_headings" in kwargs:
            kwargs["opinion_headings"] = tuple(kwargs["opinion_headings"])

        config = cls(**kwargs)
        if os.environ.get(ENV_BASE_URL):
            config.base_url = os.environ[ENV_BASE_URL]
        if os.environ.get(ENV_MODEL_ID):
            config.model_id = os.environ[ENV_MODEL_ID]
        return config

    # --- derived pieces -----------------------------------------------------

    def chunking(self) -> ChunkingConfig:
        return ChunkingConfig(self.chunk_size, self.chunk_overlap, self.tokenizer_id)

    def delimiters(self) -> DelimiterSet:
        return DelimiterSet(self.tuple_delimiter, self.record_delimiter, self.completion_delimiter)

    def resolution_policy(self) -> coref_mod.ResolutionPolicy:
        return coref_mod.ResolutionPolicy(
            type_order=tuple(self.type_order),
            length_ratio_bounds=(self.length_ratio_low, self.length_ratio_high),
            on_reject=self.on_reject,
        )

    def prompt_config(self) -> ExtractionPromptConfig:
        return ExtractionPromptConfig(
            mode=self.mode,
            entity_types=tuple(self.type_order),
            delimiters=self.delimiters(),
        )

    def government_lexicon(self) -> frozenset[str]:
        if self.lexicon_path:
            return load_lexicon(self.lexicon_path)
        return default_government_lexicon()

    def validate(self) -> None:
        if not Path(self.corpus_dir).is_dir():
            raise ConfigInvalid(f"corpus directory not found: {self.corpus_dir}")
        backends = [b for b in (self.base_url, self.script_path) if b]
        if len(backends) > 1:
            raise ConfigInvalid("configure either base_url or script_path, not both")
        if not backends and not self.lenient_mock:
            raise ConfigInvalid("no backend: set base_url, script_path, or lenient_mock")
        for name in ("script_path", "manifest_path", "coref_template_dir", "lexicon_path"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise ConfigInvalid(f"{name} not found: {value}")
        if self.workers < 1:
            raise ConfigInvalid(f"workers must be >= 1, got {self.workers}")
        # Constructor-level validation of the derived configs.
        try:
            self.chunking()
            self.delimiters()
            self.resolution_policy()
            self.prompt_config()
        except (ValueError, ExtractionConfigInvalid) as exc:
            raise ConfigInvalid(str(exc)) from None

    def build_gateway(self, audit_path: Path | None) -> Gateway:
        policy = RetryPolicy(self.retry_attempts, self.retry_backoff_s, self.request_timeout_s)
        if self.base_url:
            backend = HttpBackend(self.base_url, self.endpoint_path)
        elif self.script_path:
            backend = load_script(self.script_path, strict=not self.lenient_mock)
        else:
            backend = ScriptedBackend([], strict=False, backend_id="mock:echo")
        return Gateway(backend, policy, audit_path=audit_path)

    def digest(self) -> str:
        """Content-addressed digest of everything that shapes the artifacts."""

        def file_sha(path: Path | None) -> str | None:
            if path is None:
                return None
            return hashlib.sha256(Path(path).read_bytes()).hexdigest()

        template_dir = self.coref_template_dir or coref_mod.default_template_dir()
        template_shas = {
            p.name: file_sha(p) for p in sorted(Path(template_dir).glob("*.txt"))
        }
        semantic = {
            "mode": self.mode.value,
            "model_id": self.model_id,
            "endpoint": self.base_url,
            "script_sha": file_sha(self.script_path),
            "lenient_mock": self.lenient_mock,
            "manifest_sha": file_sha(self.manifest_path),
            "chunk_size": self.chunk_size,
            "chunk_overlap": self.chunk_overlap,
            "tokenizer_id": self.tokenizer_id,
            "type_order": [t.value for t in self.type_order],
            "length_ratio": [self.length_ratio_low, self.length_ratio_high],
            "on_reject": self.on_reject.value,
            "opinion_headings": list(self.opinion_headings),
            "templates": template_shas,
            "lexicon": sorted(self.government_lexicon()),
            "delimiters": list(self.delimiters().all()),
            "parquet": self.parquet,
        }
        return text_sha256(json.dumps(semantic, sort_keys=True, ensure_ascii=False))


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# per-case stages


def _case_dir(config: RunConfig, case_id: str) -> Path:
    return Path(config.output_dir) / "cases" / case_id


def _marker_path(case_dir: Path) -> Path:
    return case_dir / ".state"


def _prepare_case_dir(case_dir: Path, config_digest: str, input_sha: str) -> None:
    """Create the case directory, wiping stale artifacts from other configs."""
    marker = f"{config_digest}\n{input_sha}\n"
    path = _marker_path(case_dir)
    if case_dir.exists():
        if path.exists() and path.read_text(encoding="utf-8") == marker:
            return
        shutil.rmtree(case_dir)
    case_dir.mkdir(parents=True, exist_ok=True)
    path.write_text(marker, encoding="utf-8")


def _stage_opinion(doc: CaseDocument, case_dir: Path, config: RunConfig) -> str:
    path = case_dir / "opinion.txt"
    if path.exists():
        opinion = path.read_text(encoding="utf-8")
        doc.opinion_text = opinion
        return opinion
    opinion = extract_opinion(doc, config.opinion_headings)
    path.write_text(opinion, encoding="utf-8")
    return opinion


def _stage_coref(
    opinion: str, case_dir: Path, config: RunConfig, gateway: Gateway
) -> tuple[str, int]:
    """Returns (resolved text, gateway calls made by this stage)."""
    resolved_path = case_dir / "resolved.txt"
    trace_path = case_dir / "coref_trace.jsonl"
    if resolved_path.exists() and trace_path.exists():
        calls = sum(
            json.loads(line)["calls"]
            for line in trace_path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        )
        return resolved_path.read_text(encoding="utf-8"), calls

    templates = coref_mod.load_templates(config.coref_template_dir)
    resolved, trace = coref_mod.resolve_sequential(
        opinion, gateway, config.resolution_policy(), templates, config.model_id
    )
    resolved_path.write_text(resolved, encoding="utf-8")
    with trace_path.open("w", encoding="utf-8") as fh:
        for record in trace:
            fh.write(json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
    return resolved, sum(r.calls for r in trace)


def _stage_extract(
    text: str, case_id: str, case_dir: Path, config: RunConfig, gateway: Gateway
) -> dict:
    """Chunk, query the model per chunk, parse, and persist records.json."""
    chunks = chunk_text(text, config.chunking())
    chunks_dir = case_dir / "chunks"
    raw_dir = case_dir / "raw"
    chunks_dir.mkdir(exist_ok=True)
    raw_dir.mkdir(exist_ok=True)

    prompt_config = config.prompt_config()
    delimiters = config.delimiters()
    entities: list[EntityRecord] = []
    relationships: list[RelationshipRecord] = []
    parsed = 0
    skipped: list[dict] = []
    completion_missing = 0

    for chunk in chunks:
        (chunks_dir / f"chunk_{chunk.chunk_id:04d}.txt").write_text(chunk.text, encoding="utf-8")
        raw_path = raw_dir / f"chunk_{chunk.chunk_id:04d}.out.txt"
        if raw_path.exists():
            raw_output = raw_path.read_text(encoding="utf-8")
        else:
            prompt = build_extraction_prompt(chunk.text, prompt_config)
            response = gateway.complete(
                CompletionRequest(model_id=config.model_id, user_text=prompt, temperature=0.0)
            )
            raw_output = response.text
            raw_path.write_text(raw_output, encoding="utf-8")
        chunk_entities, chunk_relationships, report = parse_extraction_output(
            raw_output, delimiters, source=(case_id, chunk.chunk_id)
        )
        entities.extend(chunk_entities)
        relationships.extend(chunk_relationships)
        parsed += report.parsed
        if not report.completion_seen:
            completion_missing += 1
        skipped.extend(
            {
                "chunk_id": chunk.chunk_id,
                "index": s.index,
                "reason": s.reason,
                "snippet": s.snippet,
            }
            for s in report.skipped
        )

    payload = {
        "case_id": case_id,
        "chunks": len(chunks),
        "entities": [
            {
                "name": e.name,
                "entity_type": e.entity_type.value,
                "description": e.description,
                "source": list(e.source),
            }
            for e in entities
        ],
        "relationships": [
            {
                "source_name": r.source_name,
                "target_name": r.target_name,
                "description": r.description,
                "strength": r.strength,
                "source": list(r.source),
            }
            for r in relationships
        ],
        "parse_report": {
            "parsed": parsed,
            "skipped": skipped,
            "chunks_missing_completion": completion_missing,
        },
    }
    _write_json(case_dir / "records.json", payload)
    return payload


def _load_records(case_dir: Path) -> dict:
    path = case_dir / "records.json"
    if not path.exists():
        raise StageMissing(f"records.json missing in {case_dir}; run the extract stage first")
    return json.loads(path.read_text(encoding="utf-8"))


def _stage_build(case_id: str, case_dir: Path, config: RunConfig) -> dict:
    """Build, filter (guided mode) and serialize the case graph; returns stats."""
    payload = _load_records(case_dir)
    entities = [
        EntityRecord(
            e["name"],
            coref_mod.EntityType(e["entity_type"]),
            e["description"],
            (e["source"][0], int(e["source"][1])),
        )
        for e in payload["entities"]
    ]
    relationships = [
        RelationshipRecord(
            r["source_name"],
            r["target_name"],
            r["description"],
            int(r["strength"]),
            (r["source"][0], int(r["source"][1])),
        )
        for r in payload["relationships"]
    ]

    filtered_entities = filtered_relationships = 0
    if config.mode is ExtractionMode.COREKG:
        lexicon = config.government_lexicon()
        kept_entities, kept_relationships = filter_government_entities(entities, relationships, lexicon)
        filtered_entities = len(entities) - len(kept_entities)
        filtered_relationships = len(relationships) - len(kept_relationships)
        entities, relationships = kept_entities, kept_relationships

    graph, dropped = build_graph(entities, relationships, case_id, config.mode)
    graphml_path = case_dir / f"{case_id}.{config.mode.value}.graphml"
    graphml_path.write_bytes(serialize_graphml(graph))
    nodes_csv, edges_csv = export_tabular(graph)
    (case_dir / "nodes.csv").write_text(nodes_csv, encoding="utf-8")
    (case_dir / "edges.csv").write_text(edges_csv, encoding="utf-8")
    if config.parquet:
        export_parquet(graph, case_dir / "nodes.parquet", case_dir / "edges.parquet")

    return {
        "chunks": payload["chunks"],
        "entities_parsed": len(payload["entities"]),
        "relationships_parsed": len(payload["relationships"]),
        "records_skipped": len(payload["parse_report"]["skipped"]),
        "entities_filtered": filtered_entities,
        "relationships_filtered": filtered_relationships,
        "nodes": graph.node_count,
        "edges": graph.edge_count,
        "dropped_edges": dropped,
    }


def process_case(
    doc: CaseDocument,
    config: RunConfig,
    gateway: Gateway,
    config_digest: str,
    force: bool = False,
) -> tuple[dict, bool]:
    """Run every stage for one case. Returns (stats, skipped)."""
    case_dir = _case_dir(config, doc.case_id)
    input_sha = text_sha256(doc.raw_text)
    manifest_path = case_dir / "case_manifest.json"

    if manifest_path.exists() and not force:
        existing = json.loads(manifest_path.read_text(encoding="utf-8"))
        if existing.get("config_digest") == config_digest and existing.get("input_sha") == input_sha:
            return existing["stats"], True

    if force and case_dir.exists():
        shutil.rmtree(case_dir)
    _prepare_case_dir(case_dir, config_digest, input_sha)

    opinion = _stage_opinion(doc, case_dir, config)
    coref_calls = 0
    if config.mode is ExtractionMode.COREKG:
        resolved, coref_calls = _stage_coref(opinion, case_dir, config, gateway)
    else:
        resolved = opinion
    _stage_extract(resolved, doc.case_id, case_dir, config, gateway)
    stats = _stage_build(doc.case_id, case_dir, config)
    stats["coref_calls"] = coref_calls

    _write_json(
        manifest_path,
        {"case_id": doc.case_id, "config_digest": config_digest, "input_sha": input_sha, "stats": stats},
    )
    return stats, False


@dataclass
class RunResult:
    manifest: dict
    failures: dict[str, str]
    skipped_cases: set[str] = field(default_factory=set)

    @property
    def ok(self) -> bool:
        return not self.failures


def _assemble_run_manifest(config: RunConfig, config_digest: str, cases: dict, failures: dict) -> dict:
    ok_stats = [c["stats"] for c in cases.values() if c["status"] == "ok"]
    prompt_digest = text_sha256(build_extraction_prompt("", config.prompt_config()))
    return {
        "config_digest": config_digest,
        "mode": config.mode.value,
        "model_id": config.model_id,
        "prompt_digest": prompt_digest,
        "cases": {cid: cases[cid] for cid in sorted(cases)},
        "failures": {cid: failures[cid] for cid in sorted(failures)},
        "totals": {
            "cases_ok": len(ok_stats),
            "cases_failed": len(failures),
            "nodes": sum(s["nodes"] for s in ok_stats),
            "edges": sum(s["edges"] for s in ok_stats),
            "dropped_edges": sum(s["dropped_edges"] for s in ok_stats),
        },
    }


def run_pipeline(config: RunConfig, force: bool = False) -> RunResult:
    config.validate()
    docs = load_corpus(config.corpus_dir, config.manifest_path)
    if not docs:
        raise ConfigInvalid(f"no case files in {config.corpus_dir}")

    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    gateway = config.build_gateway(audit_path=output_dir / "audit.jsonl")
    config_digest = config.digest()

    cases: dict[str, dict] = {}
    failures: dict[str, str] = {}
    skipped_cases: set[str] = set()

    def handle(doc: CaseDocument) -> None:
        try:
            stats, skipped = process_case(doc, config, gateway, config_digest, force)
            if skipped:
                skipped_cases.add(doc.case_id)
            cases[doc.case_id] = {
                "status": "ok",
                "input_sha": text_sha256(doc.raw_text),
                "stats": stats,
            }
        except Exception as exc:  # per-case isolation: record and continue
            failures[doc.case_id] = f"{type(exc).__name__}: {exc}"
            cases[doc.case_id] = {"status": "failed", "error": failures[doc.case_id]}

    if config.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(handle, docs))
    else:
        for doc in docs:
            handle(doc)

    manifest = _assemble_run_manifest(config, config_digest, cases, failures)
    _write_json(output_dir / "run_manifest.json", manifest)
    return RunResult(manifest=manifest, failures=failures, skipped_cases=skipped_cases)


# ---------------------------------------------------------------------------
# stage-wise entry points (same artifacts, independently invokable)


def run_stage(config: RunConfig, stage: str, force: bool = False) -> RunResult:
    config.validate()
    docs = load_corpus(config.corpus_dir, config.manifest_path)
    if not docs:
        raise ConfigInvalid(f"no case files in {config.corpus_dir}")
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    needs_gateway = stage in ("coref", "extract")
    gateway = config.build_gateway(audit_path=output_dir / "audit.jsonl") if needs_gateway else None
    config_digest = config.digest()

    cases: dict[str, dict] = {}
    failures: dict[str, str] = {}
    for doc in docs:
        case_dir = _case_dir(config, doc.case_id)
        try:
            _prepare_case_dir(case_dir, config_digest, text_sha256(doc.raw_text))
            if force and stage in ("coref", "extract"):
                for name in ("resolved.txt", "coref_trace.jsonl") if stage == "coref" else ():
                    (case_dir / name).unlink(missing_ok=True)
                if stage == "extract":
                    shutil.rmtree(case_dir / "raw", ignore_errors=True)
                    (case_dir / "records.json").unlink(missing_ok=True)
            if stage == "ingest":
                _stage_opinion(doc, case_dir, config)
                cases[doc.case_id] = {"status": "ok"}
            elif stage == "coref":
                if config.mode is not ExtractionMode.COREKG:
                    cases[doc.case_id] = {"status": "skipped", "reason": "baseline mode has no coref stage"}
                    continue
                opinion = _require(case_dir / "opinion.txt", "ingest")
                _stage_coref(opinion, case_dir, config, gateway)
                cases[doc.case_id] = {"status": "ok"}
            elif stage == "extract":
                if config.mode is ExtractionMode.COREKG:
                    text = _require(case_dir / "resolved.txt", "coref")
                else:
                    text = _require(case_dir / "opinion.txt", "ingest")
                _stage_extract(text, doc.case_id, case_dir, config, gateway)
                cases[doc.case_id] = {"status": "ok"}
            elif stage == "build":
                stats = _stage_build(doc.case_id, case_dir, config)
                stats["coref_calls"] = _coref_calls_from_trace(case_dir)
                input_sha = text_sha256(doc.raw_text)
                _write_json(
                    case_dir / "case_manifest.json",
                    {
                        "case_id": doc.case_id,
                        "config_digest": config_digest,
                        "input_sha": input_sha,
                        "stats": stats,
                    },
                )
                cases[doc.case_id] = {"status": "ok", "input_sha": input_sha, "stats": stats}
            else:
                raise ConfigInvalid(f"unknown stage: {stage}")
        except Exception as exc:
            failures[doc.case_id] = f"{type(exc).__name__}: {exc}"
            cases[doc.case_id] = {"status": "failed", "error": failures[doc.case_id]}

    if stage == "build":
        manifest = _assemble_run_manifest(config, config_digest, cases, failures)
        _write_json(output_dir / "run_manifest.json", manifest)
    else:
        manifest = {
            "stage": stage,
            "config_digest": config_digest,
            "cases": {cid: cases[cid] for cid in sorted(cases)},
            "failures": {cid: failures[cid] for cid in sorted(failures)},
        }
    return RunResult(manifest=manifest, failures=failures)


def _coref_calls_from_trace(case_dir: Path) -> int:
    trace_path = case_dir / "coref_trace.jsonl"
    if not trace_path.exists():
        return 0
    return sum(
        json.loads(line)["calls"]
        for line in trace_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    )


def _require(path: Path, stage: str) -> str:
    if not path.exists():
        raise StageMissing(f"{path.name} missing; run the {stage} stage first")
    return path.read_text(encoding="utf-8")


# ---------------------------------------------------------------------------
# evaluation over two completed runs


def _load_run_cases(run_dir: Path) -> tuple[dict, ExtractionMode]:
    manifest_path = Path(run_dir) / "run_manifest.json"
    if not manifest_path.exists():
        raise ConfigInvalid(f"run manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    return manifest, ExtractionMode(manifest["mode"])


def _load_case_graph(run_dir: Path, case_id: str, mode: ExtractionMode) -> KnowledgeGraph:
    case_dir = Path(run_dir) / "cases" / case_id
    nodes_csv = (case_dir / "nodes.csv").read_text(encoding="utf-8")
    edges_csv = (case_dir / "edges.csv").read_text(encoding="utf-8")
    return import_tabular(nodes_csv, edges_csv, case_id, mode)


def _case_metrics(
    graph: KnowledgeGraph,
    threshold: int,
    overrides: eval_mod.OverrideFile | None,
    noise_names: frozenset[str],
    strict_noise: bool,
) -> eval_mod.CaseMetrics:
    if graph.node_count == 0:
        return eval_mod.CaseMetrics(graph.case_id, 0, 0, 0.0, 0, 0.0)
    clusters = eval_mod.cluster_duplicates(graph, threshold)
    if overrides is not None:
        clusters = eval_mod.apply_overrides(clusters, overrides, graph.case_id)
    dup_count, dup_rate = eval_mod.duplication_metrics(clusters, graph.node_count)
    annotation = eval_mod.NoiseAnnotation(noise_names, strict=strict_noise)
    noise_count, noise_rate = eval_mod.noise_metrics(graph, annotation)
    return eval_mod.CaseMetrics(graph.case_id, graph.node_count, dup_count, dup_rate, noise_count, noise_rate)


def run_eval(
    baseline_dir: Path,
    corekg_dir: Path,
    out_dir: Path,
    threshold: int = 75,
    override_path: Path | None = None,
    noise_lexicon_path: Path | None = None,
    annotation_path: Path | None = None,
    strict_noise: bool = False,
    micro: bool = False,
) -> eval_mod.MetricsReport:
    """Evaluate a baseline/guided run pair and write report artifacts."""
    base_manifest, base_mode = _load_run_cases(baseline_dir)
    core_manifest, core_mode = _load_run_cases(corekg_dir)

    base_ids = {cid for cid, c in base_manifest["cases"].items() if c["status"] == "ok"}
    core_ids = {cid for cid, c in core_manifest["cases"].items() if c["status"] == "ok"}
    if base_ids != core_ids:
        raise eval_mod.CaseMismatch(
            f"baseline-only={sorted(base_ids - core_ids)} corekg-only={sorted(core_ids - base_ids)}"
        )
    if not base_ids:
        raise eval_mod.CaseMismatch("no successfully processed cases to evaluate")

    overrides = eval_mod.OverrideFile.load(override_path) if override_path else None
    uniform_noise: frozenset[str] = frozenset()
    if noise_lexicon_path:
        uniform_noise = load_lexicon(noise_lexicon_path)
    per_case_noise: dict[str, set[str]] = {}
    if annotation_path:
        per_case_noise = eval_mod.load_noise_annotations(annotation_path)

    def metrics_for(run_dir: Path, mode: ExtractionMode) -> list[eval_mod.CaseMetrics]:
        result = []
        for case_id in sorted(base_ids):
            graph = _load_case_graph(run_dir, case_id, mode)
            noise_names = frozenset(per_case_noise.get(case_id, set())) | uniform_noise
            result.append(_case_metrics(graph, threshold, overrides, noise_names, strict_noise))
        return result

    report = eval_mod.aggregate_report(
        metrics_for(baseline_dir, base_mode), metrics_for(corekg_dir, core_mode), micro=micro
    )
    write_report_artifacts(report, Path(out_dir))
    return report


def write_report_artifacts(report: eval_mod.MetricsReport, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "metrics_summary.json", report.to_dict())

    def run_summary(agg: eval_mod.AggregateMetrics) -> dict:
        return {
            "averaging": report.averaging,
            "cases": agg.cases,
            "total_nodes": agg.total_nodes,
            "duplication_rate_pct": round(agg.duplication_rate_pct, 2),
            "noise_rate_pct": round(agg.noise_rate_pct, 2),
        }

    _write_json(out_dir / "summary_baseline.json", run_summary(report.baseline))
    _write_json(out_dir / "summary_corekg.json", run_summary(report.corekg))

    lines = ["case_id,run,total_nodes,duplicate_count,duplication_rate_pct,noise_count,noise_rate_pct"]
    for base, core in report.per_case:
        for run, m in (("baseline", base), ("corekg", core)):
            lines.append(
                f"{m.case_id},{run},{m.total_nodes},{m.duplicate_count},"
                f"{round(m.duplication_rate_pct, 2)},{m.noise_count},{round(m.noise_rate_pct, 2)}"
            )
    (out_dir / "per_case_metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    chart = ["case_id,baseline_duplication_rate_pct,corekg_duplication_rate_pct,baseline_noise_rate_pct,corekg_noise_rate_pct"]
    for base, core in report.per_case:
        chart.append(
            f"{base.case_id},{round(base.duplication_rate_pct, 2)},{round(core.duplication_rate_pct, 2)},"
            f"{round(base.noise_rate_pct, 2)},{round(core.noise_rate_pct, 2)}"
        )
    (out_dir / "comparison.csv").write_text("\n".join(chart) + "\n", encoding="utf-8")


def compare_summaries(baseline_summary: Path, corekg_summary: Path) -> list[eval_mod.ComparisonRow]:
    """Comparison rows from two run-summary documents (or synthetic stand-ins)."""
    base = json.loads(Path(baseline_summary).read_text(encoding="utf-8"))
    core = json.loads(Path(corekg_summary).read_text(encoding="utf-8"))
    rows = []
    for metric in ("duplication_rate_pct", "noise_rate_pct"):
        if metric not in base or metric not in core:
            raise ConfigInvalid(f"summary files must define {metric}")
        b_pct, c_pct = float(base[metric]), float(core[metric])
        if b_pct == 0:
            rows.append(eval_mod.ComparisonRow(metric, b_pct, c_pct, round(b_pct - c_pct, 2), None))
        else:
            absolute, relative = eval_mod.comparison_metrics(b_pct, c_pct)
            rows.append(eval_mod.ComparisonRow(metric, b_pct, c_pct, absolute, relative))
    return rows
