#!/usr/bin/env python3
"""End-to-end demo on the bundled fixture corpus, no model server needed.

Runs the guided and baseline pipelines with their scripted mocks, evaluates
the pair (duplicates via intra-type fuzzy clustering, noise via the default
government lexicon), and prints the comparison table. Artifacts land under
--out (default ./runs/demo).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from lexkg.extraction import ExtractionMode  # noqa: E402
from lexkg.pipeline import RunConfig, run_eval, run_pipeline  # noqa: E402

FIXTURES = REPO / "tests" / "fixtures"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=REPO / "runs" / "demo")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    runs = {}
    for mode, script in (
        (ExtractionMode.COREKG, "corekg_demo.jsonl"),
        (ExtractionMode.BASELINE, "baseline_demo.jsonl"),
    ):
        config = RunConfig(
            corpus_dir=FIXTURES / "corpus_demo",
            output_dir=args.out / mode.value,
            mode=mode,
            model_id="demo-model",
            script_path=FIXTURES / "scripts" / script,
            workers=args.workers,
        )
        result = run_pipeline(config)
        runs[mode] = config.output_dir
        print(f"{mode.value}: {result.manifest['totals']}")
        if result.failures:
            print(f"failures: {result.failures}", file=sys.stderr)
            return 1

    report = run_eval(
        runs[ExtractionMode.BASELINE],
        runs[ExtractionMode.COREKG],
        args.out / "eval",
        noise_lexicon_path=REPO / "src" / "lexkg" / "data" / "government_lexicon.txt",
    )
    print(f"\n{'metric':<20}{'baseline':>10}{'corekg':>10}{'drop':>8}{'rel %':>8}")
    for row in report.comparisons:
        relative = "-" if row.relative_improvement_pct is None else f"{row.relative_improvement_pct:.2f}"
        print(
            f"{row.metric:<20}{row.baseline_pct:>10.2f}{row.corekg_pct:>10.2f}"
            f"{row.absolute_drop:>8.2f}{relative:>8}"
        )
    print(f"\nreports under {args.out / 'eval'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
