"""Command-line entry point.

Exit codes: 0 success, 1 validation or domain failure (including a
non-empty reconciliation pending list), 2 usage error.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict
from importlib import metadata
from pathlib import Path

import click
import numpy as np

from . import augment as aug
from . import detmetrics, progress, reconcile
from .annotations import (
    ClassMap,
    DatasetError,
    Issue,
    NormBox,
    load_labels,
    scan_dataset,
    validate_label_text,
)
from .config import Config
from .errors import CpmError
from .raster import read_pgm

ENV_CONFIG = "CPMKIT_CONFIG"


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dumps(obj), encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            h.update(p.relative_to(root).as_posix().encode() + b"\0" + p.read_bytes())
    return h.hexdigest()


def _digest(path: Path) -> str:
    return _tree_digest(path) if path.is_dir() else _sha256(path)


def _read_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CpmError(f"{path}: invalid JSON: {exc}") from None


def _versions() -> dict:
    try:
        own = metadata.version("cpmkit")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"cpmkit": own, "numpy": np.__version__, "click": metadata.version("click")}


def write_manifest(path: Path, command: str, inputs: dict, outputs: dict, params: dict) -> None:
    _write_json(path, {
        "command": command,
        "inputs": {k: {"path": str(v), "sha256": _digest(Path(v))} for k, v in sorted(inputs.items()) if v is not None},
        "outputs": {k: {"path": str(v), "sha256": _digest(Path(v))} for k, v in sorted(outputs.items())},
        "parameters": params,
        "versions": _versions(),
    })


def _manifest_path(out: Path) -> Path:
    return out / "manifest.json" if out.is_dir() else out.with_name(out.stem + ".manifest.json")


class _Ctx:
    def __init__(self, config: Config, config_path: str | None):
        self.config = config
        self.config_path = config_path


@click.group()
@click.option("--config", "config_path", envvar=ENV_CONFIG, type=click.Path(dir_okay=False),
              help=f"JSON config file (or ${ENV_CONFIG}).")
@click.version_option(package_name="cpmkit")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None) -> None:
    """Window-installation progress monitoring toolkit."""
    config = Config.load(config_path) if config_path else Config()
    ctx.obj = _Ctx(config, config_path)


def _class_map(ctx_obj: _Ctx, path: str | None) -> ClassMap:
    if path:
        return ClassMap.load(path)
    return ctx_obj.config.class_map or ClassMap.default()


@cli.command("validate")
@click.argument("dataset_root", type=click.Path(file_okay=False))
@click.option("--class-map", type=click.Path(exists=True, dir_okay=False), help="JSON array of class names.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write the issue list as JSON.")
@click.pass_obj
def validate_cmd(obj: _Ctx, dataset_root: str, class_map: str | None, out: str | None) -> None:
    """Check dataset layout and every label file."""
    cmap = _class_map(obj, class_map)
    try:
        index = scan_dataset(dataset_root)
        issues: list[Issue] = list(index.warnings)
    except DatasetError as exc:
        index, issues = None, list(exc.issues)
    if index is not None:
        if not index.items:
            issues.append(Issue("warning", "empty", "dataset contains no images", dataset_root))
        for item in index.items:
            if item.label is None:
                continue
            _, found = validate_label_text(item.label.read_text(encoding="utf-8"), item.stem,
                                           class_map=cmap, path=str(item.label))
            issues.extend(found)
    errors = [i for i in issues if i.severity == "error"]
    warnings = [i for i in issues if i.severity == "warning"]
    for i in issues:
        click.echo(str(i), err=True)
    click.echo(f"{len(errors)} errors, {len(warnings)} warnings, {len(index.items) if index else 0} images")
    if out:
        _write_json(Path(out), {"errors": [i.to_json() for i in errors], "warnings": [i.to_json() for i in warnings]})
    sys.exit(1 if errors else 0)


@cli.command("augment")
@click.argument("dataset_root", type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output dataset root.")
@click.option("--plan", type=click.Path(exists=True, dir_okay=False), help="JSON list of augmentation ops.")
@click.pass_obj
def augment_cmd(obj: _Ctx, dataset_root: str, out: str, plan: str | None) -> None:
    """Expand a dataset with one augmented copy per (image, op)."""
    if plan:
        ops = aug.load_plan(_read_json(plan))
    else:
        ops = list(obj.config.augment) or list(aug.DEFAULT_OPS)
    index = scan_dataset(dataset_root)
    expanded = aug.expand_dataset(index, ops)
    out_path = Path(out)
    written = aug.materialize(expanded, out_path)
    write_manifest(out_path / "manifest.json", "augment",
                   {"dataset": dataset_root, "plan": plan, "config": obj.config_path},
                   {"dataset": out_path},
                   {"ops": [op.to_json() for op in ops], "items": len(written)})
    click.echo(f"{len(index)} originals + {len(written) - len(index)} augmented = {len(written)} images -> {out}")


@cli.command("split")
@click.argument("dataset_root", type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Assignment JSON file.")
@click.option("--seed", type=int, help="Shuffle seed (default from config, else 0).")
@click.option("--ratios", help="train,val,test fractions, e.g. 0.88,0.06,0.06.")
@click.pass_obj
def split_cmd(obj: _Ctx, dataset_root: str, out: str, seed: int | None, ratios: str | None) -> None:
    """Assign every image to train/val/test."""
    spec = obj.config.split
    try:
        r = tuple(float(x) for x in ratios.split(",")) if ratios else spec.ratios
    except ValueError:
        raise click.BadParameter(f"not a comma-separated list of numbers: {ratios!r}", param_hint="--ratios")
    spec = aug.SplitSpec(r, spec.seed if seed is None else seed)
    index = aug.split_dataset(scan_dataset(dataset_root), spec)
    result = aug.assignment(index)
    out_path = Path(out)
    _write_json(out_path, result)
    write_manifest(_manifest_path(out_path), "split", {"dataset": dataset_root, "config": obj.config_path},
                   {"assignment": out_path}, {"ratios": list(spec.ratios), "seed": spec.seed})
    click.echo(" ".join(f"{k}={len(v)}" for k, v in result.items()))


def _ground_truth(dataset_root: str, cmap: ClassMap, keep: set[str] | None) -> tuple[list, set[str]]:
    gts = []
    stems = set()
    for item in scan_dataset(dataset_root).items:
        if keep is not None and item.stem not in keep:
            continue
        stems.add(item.stem)
        for ann in load_labels(item, class_map=cmap).annotations:
            gts.append(detmetrics.GroundTruth(ann.class_id, ann.box, item.stem))
    return gts, stems


@cli.command("eval")
@click.argument("dataset_root", type=click.Path(exists=True, file_okay=False))
@click.option("--predictions", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Summary JSON file.")
@click.option("--split", "split_file", type=click.Path(exists=True, dir_okay=False),
              help="Assignment file from 'split'; restricts evaluation to --subset.")
@click.option("--subset", type=click.Choice(["train", "val", "test"]), default="test", show_default=True)
@click.option("--conf", type=click.FloatRange(0, 1), help="Confidence threshold for precision/recall/F1.")
@click.option("--class-map", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def eval_cmd(obj: _Ctx, dataset_root: str, predictions: str, out: str, split_file: str | None,
             subset: str, conf: float | None, class_map: str | None) -> None:
    """mAP50, mAP50-95, precision, recall and F1 of a predictions file."""
    cmap = _class_map(obj, class_map)
    keep = set(_read_json(split_file)[subset]) if split_file else None
    gts, stems = _ground_truth(dataset_root, cmap, keep)
    dets = []
    for p in _read_json(predictions):
        if keep is not None and p["image"] not in keep:
            continue
        if p["image"] not in stems:
            raise CpmError(f"prediction for unknown image {p['image']!r}")
        dets.append(detmetrics.Detection(int(p["class_id"]), NormBox(*p["box"]), float(p["confidence"]), p["image"]))
    conf = obj.config.conf_threshold if conf is None else conf
    summary = detmetrics.evaluate(dets, gts, conf_threshold=conf,
                                  skip_empty_classes=obj.config.skip_empty_classes, class_names=cmap.names)
    summary["images"] = len(stems)
    out_path = Path(out)
    _write_json(out_path, summary)
    write_manifest(_manifest_path(out_path), "eval",
                   {"dataset": dataset_root, "predictions": predictions, "split": split_file, "config": obj.config_path},
                   {"summary": out_path}, {"subset": subset if split_file else None, "conf_threshold": conf})
    click.echo(f"mAP50={summary['map50']:.4f} mAP50-95={summary['map50_95']:.4f} "
               f"P={summary['precision']:.4f} R={summary['recall']:.4f} F1={summary['f1']:.4f}")


@cli.command("progress")
@click.option("--events", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Timeline JSON file.")
@click.option("--min-confidence", type=click.FloatRange(0, 1))
@click.pass_obj
def progress_cmd(obj: _Ctx, events: str, out: str, min_confidence: float | None) -> None:
    """Infer per-window installation timelines from detector events."""
    evs = [
        progress.ObservationEvent(str(e["window_id"]), float(e["timestamp"]), int(e["checkpoint_class"]),
                                  float(e["confidence"]))
        for e in _read_json(events)
    ]
    mc = obj.config.min_confidence if min_confidence is None else min_confidence
    timelines = progress.infer_timelines(evs, mc, obj.config.window_types)
    out_path = Path(out)
    _write_json(out_path, [t.to_json() for t in timelines])
    write_manifest(_manifest_path(out_path), "progress", {"events": events, "config": obj.config_path},
                   {"timelines": out_path}, {"min_confidence": mc})
    n_anom = sum(len(t.anomalies) for t in timelines)
    click.echo(f"{len(timelines)} windows, {n_anom} anomalies")


@cli.command("reconcile")
@click.option("--targets", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--markers", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--observations", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--images", "images_dir", type=click.Path(exists=True, file_okay=False),
              help="Directory of PGM survey images; the file stem is the image id.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Report JSON file.")
@click.option("--pos-tol", type=float, help="Position tolerance in metres.")
@click.option("--allow-pending", is_flag=True, help="Exit 0 even when windows remain pending.")
@click.pass_obj
def reconcile_cmd(obj: _Ctx, targets: str, markers: str, observations: str, images_dir: str | None,
                  out: str, pos_tol: float | None, allow_pending: bool) -> None:
    """Confirm target windows from QR observations in building coordinates."""
    cfg = obj.config.reconcile
    if pos_tol is not None:
        cfg = reconcile.ReconcileConfig(cfg.thresholds, pos_tol, cfg.coverage)
    images = {}
    if images_dir:
        for p in sorted(Path(images_dir).glob("*.pgm")):
            images[p.stem] = read_pgm(p.read_bytes())
    try:
        report = reconcile.build_report(
            reconcile.load_targets(_read_json(targets)),
            images,
            reconcile.load_markers(_read_json(markers)),
            reconcile.load_observations(_read_json(observations)),
            cfg,
        )
    except KeyError as exc:
        raise CpmError(f"input record missing field {exc.args[0]!r}") from None
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(reconcile.report_json(report), encoding="utf-8")
    write_manifest(_manifest_path(out_path), "reconcile",
                   {"targets": targets, "markers": markers, "observations": observations,
                    "images": images_dir, "config": obj.config_path},
                   {"report": out_path},
                   {"pos_tol": cfg.pos_tol, "quality": asdict(cfg.thresholds)})
    click.echo(f"{len(report.confirmed)} confirmed, {len(report.position_mismatch)} position mismatch, "
               f"{len(report.pending)} pending, {len(report.quality_rejections)} images rejected")
    if report.pending and not allow_pending:
        sys.exit(1)


SEVERITY_ORDER = {"critical": 0, "warning": 1, "ok": 2}


def combine_reports(timelines: list[dict], recon: dict) -> dict:
    """Merge progress timelines and a reconciliation report per window.

    Rows are ordered critical (pending or position mismatch), then warning
    (progress anomalies), then ok, and by window id within a level.
    """
    prog = {t["window_id"]: t for t in timelines}
    status: dict[str, dict] = {}
    for e in recon.get("confirmed", []):
        status[e["window_id"]] = {"state": "confirmed", "residual_m": e["residual_m"]}
    for e in recon.get("position_mismatch", []):
        status[e["window_id"]] = {"state": "position_mismatch", "residual_m": e["residual_m"]}
    for e in recon.get("pending", []):
        status[e["window_id"]] = {"state": "pending", "reason": e["reason"], "note": e.get("note", "")}
    warnings = []
    only_prog = sorted(set(prog) - set(status))
    only_recon = sorted(set(status) - set(prog))
    if only_prog:
        warnings.append(f"no reconciliation data for: {', '.join(only_prog)}")
    if only_recon:
        warnings.append(f"no progress data for: {', '.join(only_recon)}")
    rows = []
    for wid in sorted(set(prog) | set(status)):
        t, s = prog.get(wid), status.get(wid)
        anomalies = t["anomalies"] if t else []
        if s and s["state"] != "confirmed":
            severity = "critical"
        elif anomalies:
            severity = "warning"
        else:
            severity = "ok"
        rows.append({
            "window_id": wid,
            "severity": severity,
            "progress": None if t is None else {"current_percentage": t["current_percentage"],
                                                "anomalies": [a["kind"] for a in anomalies]},
            "reconciliation": s,
        })
    rows.sort(key=lambda r: (SEVERITY_ORDER[r["severity"]], r["window_id"]))
    n_crit = sum(r["severity"] == "critical" for r in rows)
    n_warn = sum(r["severity"] == "warning" for r in rows)
    summary = "OK" if n_crit == n_warn == 0 else f"{n_crit} critical, {n_warn} warning"
    return {"summary": summary, "windows": rows, "warnings": warnings,
            "unknown_observations": [e["window_id"] for e in recon.get("unknown_observations", [])]}


def render_table(site: dict) -> str:
    lines = [f"site status: {site['summary']}"]
    for w in site["warnings"]:
        lines.append(f"warning: {w}")
    header = f"{'window':<10} {'severity':<9} {'progress':>8}  {'reconciliation':<30} anomalies"
    lines += [header, "-" * len(header)]
    for r in site["windows"]:
        pct = "-" if r["progress"] is None else f"{r['progress']['current_percentage']}%"
        rec = r["reconciliation"]
        if rec is None:
            rtxt = "-"
        elif rec["state"] == "pending":
            rtxt = f"pending ({rec['reason']})"
        else:
            rtxt = f"{rec['state']} ({rec['residual_m']:.3f} m)"
        anom = ", ".join(r["progress"]["anomalies"]) if r["progress"] else "-"
        lines.append(f"{r['window_id']:<10} {r['severity']:<9} {pct:>8}  {rtxt:<30} {anom or '-'}")
    if site["unknown_observations"]:
        lines.append("unknown QR ids: " + ", ".join(site["unknown_observations"]))
    return "\n".join(lines) + "\n"


@cli.command("report")
@click.option("--progress", "progress_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--reconcile", "reconcile_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Combined site report JSON.")
@click.option("--text", "text_out", type=click.Path(dir_okay=False), help="Also write the text table here.")
@click.pass_obj
def report_cmd(obj: _Ctx, progress_file: str, reconcile_file: str, out: str, text_out: str | None) -> None:
    """Combine progress timelines and reconciliation status per window."""
    site = combine_reports(_read_json(progress_file), _read_json(reconcile_file))
    out_path = Path(out)
    _write_json(out_path, site)
    table = render_table(site)
    outputs = {"site": out_path}
    if text_out:
        Path(text_out).write_text(table, encoding="utf-8")
        outputs["text"] = Path(text_out)
    write_manifest(_manifest_path(out_path), "report",
                   {"progress": progress_file, "reconcile": reconcile_file}, outputs, {})
    for w in site["warnings"]:
        click.echo(f"warning: {w}", err=True)
    click.echo(table, nl=False)


@cli.command("make-fixture")
@click.argument("out", type=click.Path(file_okay=False))
def make_fixture_cmd(out: str) -> None:
    """Write the synthetic demo site."""
    from .fixture import write_fixture

    write_fixture(out)
    click.echo(f"fixture written to {out}")


def main(argv: list[str] | None = None) -> None:
    try:
        cli.main(args=argv, prog_name="cpmkit", standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(1)
    except (CpmError, OSError, KeyError, ValueError) as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(1)
    sys.exit(0)


if __name__ == "__main__":
    main()
