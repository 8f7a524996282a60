"""
Command-line entry point.

    anomap phantom OUT_DIR [--cases N] [--config run.cfg]
    anomap score --x X --rec REC --brain BRAIN --method ssim-ens --out MAP [--config run.cfg]
    anomap evaluate --manifest maps.tsv --split split.tsv --out report.csv [--method M] [--config run.cfg]
    anomap sweep DATASET_DIR --out curve.csv [--config run.cfg]

Exit codes: 0 success, 1 invalid input or config, 2 I/O failure.
Diagnostics go to standard error; data goes to files.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Sequence

import pandas as pd
from dotenv import dotenv_values, load_dotenv

from .config import RunConfig, load_run_config
from .errors import AnomapError
from .logging_config import get_logger, setup_logging
from .models import Case, Volume3D, require_same_dims
from .phantom import PhantomVolumes, family_specs, generate
from .scoring import ScoreMethod, score_volume
from .sweep import EvalReport, evaluate_method, sigma_sweep
from .volgrid import read_mask, read_volume, write_mvol

log = get_logger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2

MANIFEST_NAME = "manifest.tsv"
FLOAT_FORMAT = "%.6g"
EVALUATE_COLUMNS = ["method", "sigma", "threshold", "dataset_dice", "volume_id", "volume_dice"]
SWEEP_COLUMNS = ["method", "sigma", "dataset_dice", "threshold"]
PHANTOM_FILES = ("healthy", "unhealthy", "gt", "brain", "rec")


def _write_phantom(vols: PhantomVolumes, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in PHANTOM_FILES:
        write_mvol(getattr(vols, name), out_dir / f"{name}.mvol")


def _read_table(path: Path, columns: int) -> list[list[str]]:
    """Tab-separated rows; blank lines and '#' comments are skipped."""
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != columns:
                raise AnomapError(f"{path}:{lineno}: expected {columns} tab-separated fields, got {len(parts)}")
            rows.append(parts)
    if not rows:
        raise AnomapError(f"{path}: no entries")
    return rows


def _resolve(base: Path, entry: str) -> Path:
    p = Path(entry)
    return p if p.is_absolute() else base / p


def _write_csv(rows: list[dict], columns: list[str], out: str) -> None:
    df = pd.DataFrame(rows, columns=columns)
    df.to_csv(out, index=False, float_format=FLOAT_FORMAT, na_rep="")


def method_sidecar(map_path: str | os.PathLike) -> Path:
    return Path(f"{os.fspath(map_path)}.method")


def read_method_sidecar(map_path: str | os.PathLike) -> ScoreMethod | None:
    path = method_sidecar(map_path)
    if not path.is_file():
        return None
    value = dotenv_values(path, interpolate=False).get("method")
    if not value:
        raise AnomapError(f"{path}: no method= line")
    return ScoreMethod.parse(value)


def cmd_phantom(args: argparse.Namespace, cfg: RunConfig) -> int:
    out_dir = Path(args.out_dir)
    if args.cases is None:
        spec = cfg.phantom_spec()
        _write_phantom(generate(spec), out_dir)
        log.info("Wrote phantom seed=%s lesions=%s to %s", spec.seed, len(spec.lesions), out_dir)
        return EXIT_OK

    if cfg.lesions:
        log.warning("Explicit lesions are ignored for families; drawing %s per case", cfg.lesions_per_case)
    specs = family_specs(
        cfg.base_spec(),
        args.cases,
        cfg.lesion_radius,
        cfg.lesion_offset,
        cfg.lesion_texture,
        cfg.lesions_per_case,
    )
    lines = []
    for volume_id, role, spec in specs:
        _write_phantom(generate(spec), out_dir / volume_id)
        lines.append("\t".join([role] + [f"{volume_id}/{name}.mvol" for name in ("unhealthy", "rec", "gt", "brain")]))
        log.info("Wrote %s (%s) seed=%s", volume_id, role, spec.seed)
    (out_dir / MANIFEST_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")
    log.info("Wrote family of %s cases to %s", len(specs), out_dir)
    return EXIT_OK


def cmd_score(args: argparse.Namespace, cfg: RunConfig) -> int:
    method = ScoreMethod.parse(args.method)
    x = read_volume(args.x)
    rec = read_volume(args.rec)
    brain = read_mask(args.brain)
    require_same_dims(x, rec, brain)
    amap = score_volume(method, x, rec, cfg.sigmas(), cfg.constants(), cfg.weight_mode)
    # the brain only gates dimensions and the progress line; the map is written unmasked
    mean_in_brain = float(amap.data[brain.data].mean()) if brain.count() else 0.0
    write_mvol(amap, args.out)
    method_sidecar(args.out).write_text(f"method={method.label}\n", encoding="utf-8")
    log.info("Scored %s method=%s mean in-brain score=%.6g -> %s", args.x, method.label, mean_in_brain, args.out)
    return EXIT_OK


def load_map_cases(manifest: str | os.PathLike, split: str | os.PathLike) -> tuple[list[Volume3D], list[Case], list[str]]:
    """Maps and cases from a `volume_id map gt brain` manifest and a `volume_id role` split file."""
    manifest = Path(manifest)
    split = Path(split)
    roles = {}
    for volume_id, role in _read_table(split, 2):
        if volume_id in roles:
            raise AnomapError(f"{split}: {volume_id} listed twice")
        roles[volume_id] = role
    maps, cases, map_paths = [], [], []
    for volume_id, map_entry, gt_entry, brain_entry in _read_table(manifest, 4):
        if volume_id not in roles:
            raise AnomapError(f"{split}: no role for {volume_id}")
        map_path = _resolve(manifest.parent, map_entry)
        amap = read_volume(map_path)
        gt = read_mask(_resolve(manifest.parent, gt_entry))
        brain = read_mask(_resolve(manifest.parent, brain_entry))
        cases.append(Case(volume_id, roles[volume_id], gt, brain))
        maps.append(amap)
        map_paths.append(str(map_path))
    return maps, cases, map_paths


def cmd_evaluate(args: argparse.Namespace, cfg: RunConfig) -> int:
    maps, cases, map_paths = load_map_cases(args.manifest, args.split)
    if args.method is not None:
        method = ScoreMethod.parse(args.method)
    else:
        method = read_method_sidecar(map_paths[0])
        if method is None:
            raise AnomapError(f"no --method given and no sidecar next to {map_paths[0]}")
    result = evaluate_method(method.kind, method.sigma, maps, cases, cfg.postprocess(), cfg.search())
    rows = [
        {
            "method": result.method,
            "sigma": result.sigma,
            "threshold": result.threshold,
            "dataset_dice": result.dataset_dice,
            "volume_id": volume_id,
            "volume_dice": volume_dice,
        }
        for volume_id, volume_dice in result.per_volume_dice
    ]
    _write_csv(rows, EVALUATE_COLUMNS, args.out)
    log.info("Evaluated %s volumes method=%s dataset_dice=%.4f -> %s", len(cases), method.label, result.dataset_dice, args.out)
    return EXIT_OK


def load_dataset(dataset_dir: str | os.PathLike) -> list[Case]:
    """Cases from DATASET_DIR/manifest.tsv (`role x rec gt brain` per line).

    The volume id is the directory holding the input file, or its file stem
    when the input sits next to the manifest.
    """
    root = Path(dataset_dir)
    cases = []
    for role, x_entry, rec_entry, gt_entry, brain_entry in _read_table(root / MANIFEST_NAME, 5):
        x_path = Path(x_entry)
        volume_id = x_path.parent.name or x_path.stem
        cases.append(
            Case(
                volume_id,
                role,
                read_mask(_resolve(root, gt_entry)),
                read_mask(_resolve(root, brain_entry)),
                x=read_volume(_resolve(root, x_entry)),
                rec=read_volume(_resolve(root, rec_entry)),
            )
        )
    return cases


def sweep_rows(report: EvalReport) -> list[dict]:
    return [
        {"method": r.method, "sigma": r.sigma, "dataset_dice": r.dataset_dice, "threshold": r.threshold}
        for r in report.results
    ]


def cmd_sweep(args: argparse.Namespace, cfg: RunConfig) -> int:
    cases = load_dataset(args.dataset_dir)
    report = sigma_sweep(
        cases,
        cfg.sigmas(),
        cfg.constants(),
        cfg.postprocess(),
        cfg.search(),
        cfg.weight_mode,
        config=cfg.snapshot(),
    )
    _write_csv(sweep_rows(report), SWEEP_COLUMNS, args.out)
    log.info(
        "Swept %s sigmas on %s volumes: best sigma=%g ens=%.4f l1=%.4f -> %s",
        len(cfg.sigmas()), len(cases), report.best_sigma(), report.dataset_dice, report.l1.dataset_dice, args.out,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anomap", description="SSIM-based anomaly maps for reconstruction-based lesion segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="key=value run config file")
        return p

    p = add("phantom", "write a synthetic phantom (or a family of them)")
    p.add_argument("out_dir")
    p.add_argument("--cases", type=int, default=None, help="write N cases plus manifest.tsv")
    p.set_defaults(func=cmd_phantom)

    p = add("score", "write the anomaly map of one volume")
    p.add_argument("--x", required=True)
    p.add_argument("--rec", required=True)
    p.add_argument("--brain", required=True)
    p.add_argument("--method", required=True, help="l1, ssim:<sigma> or ssim-ens")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = add("evaluate", "select a threshold on validation maps and report test Dice")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--method", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = add("sweep", "Dice per sigma, for the ensemble and for l1")
    p.add_argument("dataset_dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv()
    setup_logging(mode="run")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config)
        return args.func(args, cfg)
    except AnomapError as e:
        log.error("%s", e)
        return EXIT_INVALID
    except OSError as e:
        log.error("I/O failure: %s", e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
