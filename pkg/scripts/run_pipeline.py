#!/usr/bin/env python3
"""
End-to-end synthetic run: synth -> train -> parse -> eval.

Trains on the manifest's train split, parses the held-out test split and exits
non-zero when the PCP total falls below --min-pcp (a fraction).
"""

import json
import logging
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional

import typer

from symparse import (
    SynthConfig,
    evaluate,
    get_settings,
    load_dataset,
    parse_entries,
    save_model,
    train_pipeline,
    write_synthetic,
)
from symparse.evaluation import prediction_points

app = typer.Typer(add_completion=False)

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
log = logging.getLogger(__name__)


@app.command()
def main(
    n: int = typer.Option(40, help="Synthetic figures (half train, half test)"),
    seed: int = typer.Option(7, help="Synthetic dataset seed"),
    negatives: int = typer.Option(20, help="Clutter-only negatives"),
    min_pcp: float = typer.Option(0.9, help="Minimum PCP total as a fraction"),
    workdir: Optional[Path] = typer.Option(None, help="Keep artifacts here instead of a temp dir"),
    threads: Optional[int] = typer.Option(None, help="Worker threads"),
):
    settings = get_settings().with_overrides(threads=threads)
    with tempfile.TemporaryDirectory() as tmp:
        root = workdir or Path(tmp)
        started = time.perf_counter()

        log.info("Writing %d synthetic figures (seed %d) to %s", n, seed, root)
        manifest = write_synthetic(
            root / "data", SynthConfig(seed=seed), n, n_negatives=negatives, threads=settings.threads
        )
        dataset = load_dataset(manifest, person_height=settings.person_height, threads=settings.threads)

        train_entries = dataset.split("train")
        log.info("Training on %d entries", len(train_entries))
        result = train_pipeline(
            [e for e in train_entries if not e.negative], [e for e in train_entries if e.negative], settings
        )
        save_model(result.params, root / "model.psym")

        test_entries = [e for e in dataset.split("test") if not e.negative]
        log.info("Parsing %d held-out images", len(test_entries))
        records = parse_entries(test_entries, result.params, settings.threads)
        report = evaluate(
            {r["image_id"]: prediction_points(r) for r in records}, dataset.annotations("test")
        )
        elapsed = time.perf_counter() - started

    total = report.total_percentage / 100.0
    ok = total >= min_pcp
    print(report.table())
    print(
        json.dumps(
            {
                "ok": ok,
                "pcp_total": round(total, 4),
                "min_pcp": min_pcp,
                "train_images": len(train_entries),
                "test_images": len(test_entries),
                "warnings": result.notes,
                "seconds": round(elapsed, 1),
            },
            indent=2,
        )
    )
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    app()
