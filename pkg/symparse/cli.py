"""
Command surface: ``python -m symparse.cli <synth|train|parse|eval|symbols>``.

Failures print one line ``error <category>: <message>`` on stderr and exit 2.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import click
import typer
from pydantic import ValidationError

from .dataset import load_dataset, load_image_dir
from .errors import DatasetError, SymparseError
from .evaluation import PCP_FRACTION, evaluate, prediction_points
from .inference import read_parses, write_parses
from .overlay import write_overlays, write_symbol_glyphs
from .persistence import load_model, save_model
from .pipeline import detect_entries, parse_entries, train_pipeline, write_reports
from .settings import get_settings
from .synth import SynthConfig, write_synthetic

app = typer.Typer(add_completion=False, help="Pose parsing with learned visual symbols.")

log = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@app.callback()
def _configure(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging")) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT)


@app.command()
def synth(
    out: Path = typer.Option(..., help="Output directory"),
    n: int = typer.Option(40, help="Number of figures"),
    seed: int = typer.Option(0, help="Random seed"),
    clutter: float = typer.Option(0.3, help="Background clutter density in [0, 1]"),
    negatives: int = typer.Option(20, help="Number of clutter-only negative images"),
    threads: Optional[int] = typer.Option(None, help="Worker threads (default POSE_THREADS)"),
) -> None:
    """Write a synthetic dataset with a train/test manifest."""
    settings = get_settings().with_overrides(threads=threads)
    config = SynthConfig(seed=seed, clutter=clutter)
    manifest = write_synthetic(out, config, n, n_negatives=negatives, threads=settings.threads)
    print(json.dumps({"manifest": str(manifest), "figures": n, "negatives": negatives}))


@app.command()
def train(
    data: Path = typer.Option(..., help="Dataset manifest (JSON lines)"),
    out: Path = typer.Option(..., help="Model file to write"),
    split: str = typer.Option("train", help="Manifest split to train on"),
    negatives: Optional[Path] = typer.Option(None, help="Directory of negative images"),
    joint_map: Optional[Path] = typer.Option(None, help="Joint remapping file"),
    report_dir: Optional[Path] = typer.Option(None, help="Directory for training reports"),
    cell: Optional[int] = typer.Option(None, help="Cell size in pixels"),
    k_large: Optional[int] = typer.Option(None, help="Geometric types for large parts"),
    k_small: Optional[int] = typer.Option(None, help="Geometric types for joints"),
    sym_large: Optional[int] = typer.Option(None, help="Symbols per type for large parts"),
    sym_small: Optional[int] = typer.Option(None, help="Symbols per type for joints"),
    cv_rounds: Optional[int] = typer.Option(None, help="Cross-validation rounds"),
    prune: Optional[float] = typer.Option(None, help="Pruning fraction"),
    c: Optional[float] = typer.Option(None, "--c", help="Joint learning C"),
    epochs: Optional[int] = typer.Option(None, help="Hard-negative epochs"),
    seed: Optional[int] = typer.Option(None, help="Random seed"),
    threads: Optional[int] = typer.Option(None, help="Worker threads"),
) -> None:
    """Run the staged training pipeline and save the model."""
    settings = get_settings().with_overrides(
        cell_size=cell,
        k_large=k_large,
        k_small=k_small,
        sym_large=sym_large,
        sym_small=sym_small,
        cv_rounds=cv_rounds,
        prune=prune,
        c=c,
        epochs=epochs,
        seed=seed,
        threads=threads,
    )
    dataset = load_dataset(data, joint_map=joint_map, person_height=settings.person_height, threads=settings.threads)
    entries = dataset.split(split)
    neg_entries = [e for e in entries if e.negative]
    if negatives is not None:
        neg_entries += load_image_dir(negatives)
    result = train_pipeline([e for e in entries if not e.negative], neg_entries, settings)
    save_model(result.params, out)
    reports: List[str] = []
    if report_dir is not None:
        reports = [str(p) for p in write_reports(result, report_dir)]
    last = result.training.reports[-1] if result.training.reports else None
    print(
        json.dumps(
            {
                "model": str(out),
                "symbols": {p.name: result.params.n_symbols(p.part_id) for p in result.params.tree.parts},
                "objective": last.objective if last else None,
                "epochs": len(result.training.reports),
                "warnings": len(result.notes),
                "reports": reports,
            }
        )
    )


@app.command()
def parse(
    model: Path = typer.Option(..., help="Model file"),
    out: Path = typer.Option(..., help="Parse results (JSON lines)"),
    images: Optional[Path] = typer.Option(None, help="Directory of PGM/PPM images"),
    data: Optional[Path] = typer.Option(None, help="Dataset manifest instead of a directory"),
    split: str = typer.Option("test", help="Manifest split to parse"),
    scale: float = typer.Option(1.0, help="Resize factor for --images"),
    overlay: Optional[Path] = typer.Option(None, help="Directory for overlay images"),
    threshold: Optional[float] = typer.Option(None, help="Report every detection above this score"),
    threads: Optional[int] = typer.Option(None, help="Worker threads"),
) -> None:
    """Parse images with a trained model."""
    if (images is None) == (data is None):
        raise click.UsageError("give exactly one of --images or --data")
    settings = get_settings().with_overrides(threads=threads)
    params = load_model(model)
    if images is not None:
        entries = load_image_dir(images, scale)
    else:
        dataset = load_dataset(data, person_height=settings.person_height, threads=settings.threads)
        entries = [e for e in dataset.split(split) if not e.negative]
    if not entries:
        raise DatasetError("no images to parse")

    if threshold is None:
        records = parse_entries(entries, params, settings.threads)
    else:
        records = detect_entries(entries, params, threshold, settings.threads)
    write_parses(out, records)
    if overlay is not None:
        write_overlays(overlay, records, {e.image_id: e.image for e in entries}, params.tree, params.cell_size)
    timed = [r["seconds"] for r in records if "seconds" in r]
    print(
        json.dumps(
            {
                "images": len(entries),
                "parses": len(records),
                "out": str(out),
                "mean_seconds": sum(timed) / len(timed) if timed else None,
            }
        )
    )


@app.command("eval")
def eval_cmd(
    pred: Path = typer.Option(..., help="Parse results (JSON lines)"),
    truth: Path = typer.Option(..., help="Dataset manifest with annotations"),
    out: Path = typer.Option(..., help="PCP report CSV"),
    split: str = typer.Option("test", help="Manifest split to score (all for every entry)"),
    joint_map: Optional[Path] = typer.Option(None, help="Joint remapping file"),
    fraction: float = typer.Option(PCP_FRACTION, help="PCP distance fraction"),
) -> None:
    """Score parse results against annotations with PCP."""
    records = read_parses(pred)
    dataset = load_dataset(truth, joint_map=joint_map, person_height=get_settings().person_height)
    predictions = {image_id: prediction_points(r) for image_id, r in records.items()}
    report = evaluate(predictions, dataset.annotations(split), fraction)
    report.write_csv(out)
    report.write_table(out.with_suffix(".txt"))
    print(report.table())


@app.command()
def symbols(
    model: Path = typer.Option(..., help="Model file"),
    out: Optional[Path] = typer.Option(None, help="Directory for symbol glyph images"),
) -> None:
    """Summarize a model and optionally draw its symbol filters."""
    params = load_model(model)
    print(params.summary())
    if out is not None:
        paths = write_symbol_glyphs(params, out)
        log.info("wrote %d glyph files to %s", len(paths), out)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        rc = app(args=argv, prog_name="pose", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        print("error aborted: interrupted", file=sys.stderr)
        return 1
    except SymparseError as exc:
        log.debug("command failed", exc_info=True)
        print(f"error {exc.category}: {exc.message}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        print(f"error config: {where}: {first['msg']}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"error internal: {exc}", file=sys.stderr)
        return 1
    return rc if isinstance(rc, int) else 0


if __name__ == "__main__":
    sys.exit(main())
