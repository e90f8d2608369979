#!/usr/bin/env python3
"""Regenerate the deterministic test fixtures under tests/fixtures/.

Three scripted-mock scenarios are produced:

* corpus_demo + corekg_demo.jsonl / baseline_demo.jsonl - a two-case corpus
  whose guided run exercises coref chaining, multi-chunk extraction, entity
  merging across chunks, parallel edges and a dropped edge.
* corpus_noise + filtering_demo.jsonl - one case whose scripted extraction
  emits every default government-lexicon term, to show the filter's effect
  in guided mode versus baseline mode under one shared script.
* corpus_dup + dedup_demo.jsonl - one case whose scripted coref consolidates
  a person alias, so guided mode yields fewer duplicate nodes than baseline.

The coref mock entries key on marker tokens threaded through stage outputs:
stage k matches the marker left by stage k-1 and rewrites it, which keeps
every matcher unique without depending on prompt wording. Extraction
entries key on tokens unique to one chunk of one case (or on the literal
tuple delimiter, which only extraction prompts contain).

Run with --goldens to also regenerate the frozen guided-run outputs
(GraphML files and run manifest) under tests/fixtures/golden/.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from lexkg.coref import EntityType  # noqa: E402
from lexkg.extraction import DelimiterSet, EntityRecord, RelationshipRecord, serialize_records  # noqa: E402

FIXTURES = REPO / "tests" / "fixtures"
DELIMS = DelimiterSet()

CASE_TEMPLATE = """United States Court Record
Case No. {case_no}
Synopsis
Procedural history and statutory sections that must never enter the pipeline.
Opinion
{body}
END OF DOCUMENT
"""


def entity(name: str, etype: EntityType, description: str) -> EntityRecord:
    return EntityRecord(name, etype, description, ("", 0))


def rel(source: str, target: str, description: str, strength: int) -> RelationshipRecord:
    return RelationshipRecord(source, target, description, strength, ("", 0))


def records_text(entities, relationships) -> str:
    return serialize_records(entities, relationships, DELIMS)


def substring_entry(needle: str, response: str) -> str:
    return json.dumps(
        {"match": {"kind": "substring", "value": needle}, "response": response},
        ensure_ascii=False,
    )


def coref_chain_entries(marker_stem: str, body_without_marker: str) -> list[str]:
    """Seven stage entries: stage k matches marker k-1 and emits marker k."""
    entries = []
    for stage in range(1, 8):
        needle = f"{marker_stem}{stage - 1}"
        response = f"{body_without_marker} {marker_stem}{stage}"
        entries.append(substring_entry(needle, response))
    return entries


def filler(prefix: str, count: int) -> str:
    words = []
    cycle = (
        "the group moved north along the river road toward the checkpoint "
        "and waited for the signal before crossing at dusk"
    ).split()
    for i in range(count):
        words.append(cycle[i % len(cycle)] if i % 7 else f"{prefix}{i}")
    return " ".join(words)


# ---------------------------------------------------------------------------
# scenario 1: two-case guided/baseline demo corpus


def alpha_fixture() -> tuple[str, list[str], list[str]]:
    body_stem = (
        "A.Y. drove a white pickup truck north on Interstate 35 out of Laredo, Texas. "
        "Agents stopped the white pickup truck at the checkpoint and A.Y. admitted "
        "arranging the trip over a borrowed phone. " + filler("alpha", 30)
    )
    body = f"{body_stem} ALPHABASE0"

    corekg_records = records_text(
        [
            entity("A.Y.", EntityType.PERSON, "Driver who arranged the trip"),
            entity("LAREDO, TEXAS", EntityType.LOCATION, "City where the trip began"),
            entity("INTERSTATE 35", EntityType.ROUTES, "Highway used to head north"),
            entity("WHITE PICKUP TRUCK", EntityType.MEANS_OF_TRANSPORTATION, "Vehicle stopped at the checkpoint"),
        ],
        [
            rel("A.Y.", "INTERSTATE 35", "Drove north along the highway", 8),
            rel("A.Y.", "WHITE PICKUP TRUCK", "Drove the vehicle", 7),
            rel("A.Y.", "UNKNOWN CONTACT", "Mentioned an unnamed contact", 3),
        ],
    )
    corekg_entries = coref_chain_entries("ALPHABASE", body_stem)
    corekg_entries.append(substring_entry("ALPHABASE7", corekg_records))

    baseline_records = records_text(
        [
            entity("A.Y.", EntityType.PERSON, "Driver"),
            entity("Y.", EntityType.PERSON, "Later mention of the driver"),
            entity("LAREDO, TEXAS", EntityType.LOCATION, "City where the trip began"),
            entity("DISTRICT COURT", EntityType.ORGANIZATION, "Court handling the case"),
            entity("INTERSTATE 35", EntityType.ROUTES, "Highway used to head north"),
            entity("WHITE PICKUP TRUCK", EntityType.MEANS_OF_TRANSPORTATION, "Vehicle stopped at the checkpoint"),
        ],
        [
            rel("A.Y.", "INTERSTATE 35", "Drove north along the highway", 8),
            rel("Y.", "WHITE PICKUP TRUCK", "Drove the vehicle", 7),
            rel("A.Y.", "DISTRICT COURT", "Appeared before the court", 4),
        ],
    )
    baseline_entries = [substring_entry("ALPHABASE0", baseline_records)]
    return CASE_TEMPLATE.format(case_no="24-0101", body=body), corekg_entries, baseline_entries


def bravo_fixture() -> tuple[str, list[str], list[str]]:
    # 400 tokens after resolution: two 300-token windows with 100 overlap.
    # BRAVOHEAD sits before token 200 (chunk 0 only); the marker is the final
    # token (chunk 1 only).
    head = "BRAVOHEAD M.R. guided the group across the Rio Grande for the Horizon Smuggling Ring."
    head_len = len(head.split())
    middle = filler("bravo", 400 - head_len - 1)
    body_stem = f"{head} {middle}"
    body = f"{body_stem} BRAVOBASE0"
    assert len(body.split()) == 400

    chunk0_records = records_text(
        [
            entity("M.R.", EntityType.PERSON, "Guide working for the ring"),
            entity("RIO GRANDE", EntityType.LOCATION, "River crossed on foot"),
            entity("HORIZON SMUGGLING RING", EntityType.ORGANIZATION, "Ring organizing crossings"),
        ],
        [rel("M.R.", "HORIZON SMUGGLING RING", "Guided crossings for the ring", 6)],
    )
    chunk1_records = records_text(
        [
            entity("M.R.", EntityType.PERSON, "Coordinated pickups by message"),
            entity("WHATSAPP", EntityType.MEANS_OF_COMMUNICATION, "App used to coordinate pickups"),
            entity("UNDOCUMENTED MIGRANTS", EntityType.SMUGGLED_ITEMS, "People moved by the ring"),
        ],
        [
            rel("M.R.", "WHATSAPP", "Coordinated pickups over the app", 9),
            rel("M.R.", "UNDOCUMENTED MIGRANTS", "Moved the group north", 8),
            rel("M.R.", "HORIZON SMUGGLING RING", "Guided crossings for the ring", 6),
        ],
    )
    corekg_entries = coref_chain_entries("BRAVOBASE", body_stem)
    corekg_entries.append(substring_entry("BRAVOHEAD", chunk0_records))
    corekg_entries.append(substring_entry("BRAVOBASE7", chunk1_records))

    baseline_entries = [
        substring_entry("BRAVOHEAD", chunk0_records),
        substring_entry("BRAVOBASE0", chunk1_records),
    ]
    return CASE_TEMPLATE.format(case_no="24-0102", body=body), corekg_entries, baseline_entries


# ---------------------------------------------------------------------------
# scenario 2: government-noise filtering


def noise_fixture() -> tuple[str, list[str]]:
    body_stem = (
        "D.L. called a broker on a burner phone from El Paso, Texas while the "
        "charges were pending. " + filler("noise", 40)
    )
    body = f"{body_stem} NOISEBASE0"

    government = [
        "COURT",
        "DISTRICT COURT",
        "COURT OF APPEALS",
        "STATE COURT",
        "APPEAL",
        "APPEAL PROCESS",
        "JUDGMENT OF ACQUITTAL",
        "MOTION FOR JUDGMENT OF ACQUITTAL",
        "PLAIN ERROR STANDARD",
        "JURY",
        "PROSECUTION",
        "GOVERNMENT",
    ]
    entities = [entity(term, EntityType.ORGANIZATION, "Legal boilerplate") for term in government]
    entities += [
        entity("D.L.", EntityType.PERSON, "Caller arranging transport"),
        entity("EL PASO, TEXAS", EntityType.LOCATION, "City where the call was placed"),
        entity("BURNER PHONE", EntityType.MEANS_OF_COMMUNICATION, "Prepaid phone used for the call"),
    ]
    relationships = [
        rel("D.L.", "BURNER PHONE", "Placed the call on the phone", 7),
        rel("D.L.", "COURT", "Appeared before the court", 4),
        rel("COURT", "JURY", "Empaneled the jury", 2),
    ]
    # Extraction prompts are the only ones containing the tuple delimiter;
    # every coref stage echoes the body unchanged.
    entries = [
        substring_entry(DELIMS.tuple_delimiter, records_text(entities, relationships)),
        substring_entry("NOISEBASE0", body),
    ]
    return CASE_TEMPLATE.format(case_no="24-0201", body=body), entries


# ---------------------------------------------------------------------------
# scenario 3: alias consolidation


def dup_fixture() -> tuple[str, list[str]]:
    raw_stem = (
        "A.Y. crossed the river near Laredo before dawn. Later Y. waited on the "
        "north bank for the rest of the group. " + filler("dup", 30)
    )
    consolidated_stem = raw_stem.replace("Later Y. waited", "Later A.Y. waited")
    raw_body = f"{raw_stem} DUPBASE0"

    corekg_records = records_text(
        [
            entity("A.Y.", EntityType.PERSON, "Crossed the river and waited for the group"),
            entity("LAREDO", EntityType.LOCATION, "Crossing point"),
        ],
        [rel("A.Y.", "LAREDO", "Crossed near the city", 7)],
    )
    baseline_records = records_text(
        [
            entity("A.Y.", EntityType.PERSON, "Crossed the river"),
            entity("Y.", EntityType.PERSON, "Waited on the north bank"),
            entity("LAREDO", EntityType.LOCATION, "Crossing point"),
        ],
        [
            rel("A.Y.", "LAREDO", "Crossed near the city", 7),
            rel("Y.", "LAREDO", "Waited near the city", 6),
        ],
    )

    entries = [substring_entry("DUPBASE7", corekg_records)]
    entries.append(substring_entry(DELIMS.tuple_delimiter, baseline_records))
    # Person stage consolidates the alias; the remaining stages only move the marker.
    entries.append(substring_entry("DUPBASE0", f"{consolidated_stem} DUPBASE1"))
    for stage in range(2, 8):
        entries.append(substring_entry(f"DUPBASE{stage - 1}", f"{consolidated_stem} DUPBASE{stage}"))
    return CASE_TEMPLATE.format(case_no="24-0301", body=raw_body), entries


# ---------------------------------------------------------------------------


def write_fixtures() -> None:
    for sub in ("corpus_demo", "corpus_noise", "corpus_dup", "scripts", "configs"):
        (FIXTURES / sub).mkdir(parents=True, exist_ok=True)

    alpha_text, alpha_corekg, alpha_baseline = alpha_fixture()
    bravo_text, bravo_corekg, bravo_baseline = bravo_fixture()
    (FIXTURES / "corpus_demo" / "case_alpha.txt").write_text(alpha_text, encoding="utf-8")
    (FIXTURES / "corpus_demo" / "case_bravo.txt").write_text(bravo_text, encoding="utf-8")
    (FIXTURES / "scripts" / "corekg_demo.jsonl").write_text(
        "\n".join(alpha_corekg + bravo_corekg) + "\n", encoding="utf-8"
    )
    (FIXTURES / "scripts" / "baseline_demo.jsonl").write_text(
        "\n".join(alpha_baseline + bravo_baseline) + "\n", encoding="utf-8"
    )

    noise_text, noise_entries = noise_fixture()
    (FIXTURES / "corpus_noise" / "case_noise.txt").write_text(noise_text, encoding="utf-8")
    (FIXTURES / "scripts" / "filtering_demo.jsonl").write_text(
        "\n".join(noise_entries) + "\n", encoding="utf-8"
    )

    dup_text, dup_entries = dup_fixture()
    (FIXTURES / "corpus_dup" / "case_dup.txt").write_text(dup_text, encoding="utf-8")
    (FIXTURES / "scripts" / "dedup_demo.jsonl").write_text(
        "\n".join(dup_entries) + "\n", encoding="utf-8"
    )

    demo_config = {
        "corpus_dir": "../corpus_demo",
        "output_dir": "../../../runs/corekg_demo",
        "mode": "corekg",
        "model_id": "demo-model",
        "script_path": "../scripts/corekg_demo.jsonl",
    }
    (FIXTURES / "configs" / "corekg_demo.json").write_text(
        json.dumps(demo_config, indent=2) + "\n", encoding="utf-8"
    )
    baseline_config = dict(demo_config, mode="baseline", script_path="../scripts/baseline_demo.jsonl")
    baseline_config["output_dir"] = "../../../runs/baseline_demo"
    (FIXTURES / "configs" / "baseline_demo.json").write_text(
        json.dumps(baseline_config, indent=2) + "\n", encoding="utf-8"
    )


def freeze_goldens() -> None:
    from lexkg.pipeline import RunConfig, run_pipeline

    golden = FIXTURES / "golden"
    golden.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        config = RunConfig(
            corpus_dir=FIXTURES / "corpus_demo",
            output_dir=Path(tmp) / "run",
            mode=__import__("lexkg.extraction", fromlist=["ExtractionMode"]).ExtractionMode.COREKG,
            model_id="demo-model",
            script_path=FIXTURES / "scripts" / "corekg_demo.jsonl",
        )
        result = run_pipeline(config)
        if result.failures:
            raise SystemExit(f"golden run failed: {result.failures}")
        for case_id in ("case_alpha", "case_bravo"):
            src = Path(tmp) / "run" / "cases" / case_id / f"{case_id}.corekg.graphml"
            shutil.copy(src, golden / src.name)
        shutil.copy(Path(tmp) / "run" / "run_manifest.json", golden / "run_manifest.json")
    print(f"goldens written to {golden}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--goldens", action="store_true", help="also regenerate frozen guided-run outputs")
    args = parser.parse_args()
    write_fixtures()
    print(f"fixtures written to {FIXTURES}")
    if args.goldens:
        freeze_goldens()


if __name__ == "__main__":
    main()
